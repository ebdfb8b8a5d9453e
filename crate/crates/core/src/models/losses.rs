//! Loss terms as graph nodes. Latent batches are `B×L` matrices; for paired
//! latents `q_i = z[:, i]` and `p_i = z[:, L/2 + i]`.

use crate::error::{Error, Result};
use crate::numcore::{BoundMlp, Graph, NodeId, Rng, Tensor};

/// `logvar` is clamped to this range before use.
pub const LOGVAR_BOUND: f64 = 10.0;

/// Mean squared error over all elements.
pub fn reconstruction_loss(g: &mut Graph, pred: NodeId, target: NodeId) -> Result<NodeId> {
    if g.value(pred).shape() != g.value(target).shape() {
        return Err(Error::Dimension(format!(
            "prediction {:?} vs target {:?}",
            g.value(pred).shape(),
            g.value(target).shape()
        )));
    }
    let d = g.sub(pred, target)?;
    let d2 = g.square(d)?;
    g.mean(d2)
}

fn batch_rows(g: &Graph, x: NodeId) -> Result<usize> {
    Ok(g.value(x).dims2()?.0)
}

/// Clamps `logvar` to `±LOGVAR_BOUND`, returning whether any entry was moved.
pub fn clamp_logvar(g: &mut Graph, logvar: NodeId) -> Result<(NodeId, bool)> {
    let clipped = g.value(logvar).data().iter().any(|v| v.abs() > LOGVAR_BOUND);
    Ok((g.clamp(logvar, -LOGVAR_BOUND, LOGVAR_BOUND)?, clipped))
}

/// `½ Σ_i (μ_i² + σ_i² − log σ_i² − 1)` per sample, averaged over the batch.
/// `logvar` is expected to be clamped already.
pub fn kl_divergence(g: &mut Graph, mu: NodeId, logvar: NodeId) -> Result<NodeId> {
    if g.value(mu).shape() != g.value(logvar).shape() {
        return Err(Error::Dimension("μ and log σ² widths differ".into()));
    }
    let rows = batch_rows(g, mu)?;
    let mu2 = g.square(mu)?;
    let var = g.exp(logvar)?;
    let a = g.add(mu2, var)?;
    let b = g.sub(a, logvar)?;
    let c = g.add_scalar(b, -1.0)?;
    let s = g.sum(c)?;
    g.scale(s, 0.5 / rows as f64)
}

/// `z = μ + exp(logvar/2)·ε` with a fixed draw `eps`.
pub fn reparameterize_with(g: &mut Graph, mu: NodeId, logvar: NodeId, eps: Tensor) -> Result<NodeId> {
    if g.value(mu).shape() != eps.shape() || g.value(logvar).shape() != eps.shape() {
        return Err(Error::Dimension("μ, log σ² and ε shapes differ".into()));
    }
    let half = g.scale(logvar, 0.5)?;
    let sigma = g.exp(half)?;
    let e = g.constant(eps);
    let noise = g.mul(sigma, e)?;
    g.add(mu, noise)
}

/// `z = μ + exp(logvar/2)·ε`, `ε ~ N(0, I)` from `rng`.
pub fn reparameterize(g: &mut Graph, mu: NodeId, logvar: NodeId, rng: &mut Rng) -> Result<NodeId> {
    let eps = rng.normal_tensor(g.value(mu).shape());
    reparameterize_with(g, mu, logvar, eps)
}

fn halves(g: &mut Graph, z: NodeId) -> Result<(NodeId, NodeId)> {
    let (_, width) = g.value(z).dims2()?;
    if width % 2 != 0 {
        return Err(Error::Contract(format!(
            "paired latent width must be even, got {width}"
        )));
    }
    let half = width / 2;
    Ok((g.slice_cols(z, 0, half)?, g.slice_cols(z, half, width)?))
}

/// Mean over pairs and batch of `(p_i(t) − (q_i(t+1) − q_i(t))/dt)²`.
pub fn second_order_penalty(g: &mut Graph, z_t: NodeId, z_next: NodeId, dt: f64) -> Result<NodeId> {
    if g.value(z_t).shape() != g.value(z_next).shape() {
        return Err(Error::Contract("consecutive latents differ in shape".into()));
    }
    let (q, p) = halves(g, z_t)?;
    let (q_next, _) = halves(g, z_next)?;
    let dq = g.sub(q_next, q)?;
    let rate = g.scale(dq, 1.0 / dt)?;
    let r = g.sub(p, rate)?;
    let r2 = g.square(r)?;
    g.mean(r2)
}

/// Batch mean of `‖(q'−q)/dt − ∂H/∂p‖² + ‖(p'−p)/dt + ∂H/∂q‖²` for a given
/// input gradient `grad_h = ∂H/∂z` (`B×L`).
pub fn hamilton_residual_from_grad(
    g: &mut Graph,
    z_t: NodeId,
    z_next: NodeId,
    grad_h: NodeId,
    dt: f64,
) -> Result<NodeId> {
    if g.value(z_t).shape() != g.value(z_next).shape() || g.value(z_t).shape() != g.value(grad_h).shape() {
        return Err(Error::Contract("latent and Hamiltonian-gradient shapes differ".into()));
    }
    let rows = batch_rows(g, z_t)?;
    let (q, p) = halves(g, z_t)?;
    let (q_next, p_next) = halves(g, z_next)?;
    let (g_q, g_p) = halves(g, grad_h)?;
    let dq = g.sub(q_next, q)?;
    let dq = g.scale(dq, 1.0 / dt)?;
    let dp = g.sub(p_next, p)?;
    let dp = g.scale(dp, 1.0 / dt)?;
    let rq = g.sub(dq, g_p)?;
    let rp = g.add(dp, g_q)?;
    let rq2 = g.square(rq)?;
    let rp2 = g.square(rp)?;
    let sq = g.sum(rq2)?;
    let sp = g.sum(rp2)?;
    let s = g.add(sq, sp)?;
    g.scale(s, 1.0 / rows as f64)
}

/// Where the Hamiltonian gradient is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualPoint {
    #[default]
    Start,
    Midpoint,
}

/// Hamilton's-equations residual of `head` between consecutive latents.
pub fn hamilton_residual(
    g: &mut Graph,
    head: &BoundMlp<'_>,
    z_t: NodeId,
    z_next: NodeId,
    dt: f64,
    at: ResidualPoint,
) -> Result<NodeId> {
    let (_, width) = g.value(z_t).dims2()?;
    let expected = head.input_width();
    if width != expected {
        return Err(Error::Contract(format!(
            "latent width {width} does not match Hamiltonian head input {expected}"
        )));
    }
    let point = match at {
        ResidualPoint::Start => z_t,
        ResidualPoint::Midpoint => {
            let s = g.add(z_t, z_next)?;
            g.scale(s, 0.5)?
        }
    };
    let grad = head.input_gradient(g, point)?;
    hamilton_residual_from_grad(g, z_t, z_next, grad, dt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(g: &Graph, id: NodeId) -> f64 {
        g.value(id).item().unwrap()
    }

    fn row(g: &mut Graph, v: &[f64]) -> NodeId {
        g.constant(Tensor::new(vec![1, v.len()], v.to_vec()).unwrap())
    }

    #[test]
    fn reconstruction_values() {
        let mut g = Graph::new();
        let a = row(&mut g, &[0.2, 0.4, 0.6]);
        assert_eq!(
            {
                let n = reconstruction_loss(&mut g, a, a).unwrap();
                value(&g, n)
            },
            0.0
        );
        let b = row(&mut g, &[0.3, 0.5, 0.7]);
        let l = reconstruction_loss(&mut g, a, b).unwrap();
        assert!((value(&g, l) - 0.01).abs() < 1e-15);
        let c = row(&mut g, &[0.3, 0.5]);
        assert!(reconstruction_loss(&mut g, a, c).is_err());
    }

    #[test]
    fn kl_closed_forms() {
        for (mu, lv, expected) in [
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.5),
            (0.0, 1.0, (std::f64::consts::E - 2.0) / 2.0),
        ] {
            let mut g = Graph::new();
            let m = row(&mut g, &[mu]);
            let l = row(&mut g, &[lv]);
            let kl = kl_divergence(&mut g, m, l).unwrap();
            assert!((value(&g, kl) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_is_averaged_over_batch() {
        let mut g = Graph::new();
        let m = g.constant(Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap());
        let l = g.constant(Tensor::zeros(&[2, 1]));
        let kl = kl_divergence(&mut g, m, l).unwrap();
        assert!((value(&g, kl) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn logvar_clamp_flags() {
        let mut g = Graph::new();
        let l = row(&mut g, &[-50.0, 3.0]);
        let (c, flagged) = clamp_logvar(&mut g, l).unwrap();
        assert!(flagged);
        assert_eq!(g.value(c).data(), &[-10.0, 3.0]);
    }

    #[test]
    fn reparameterize_zero_noise_is_mean() {
        let mut g = Graph::new();
        let m = row(&mut g, &[0.3, -1.0]);
        let l = row(&mut g, &[0.5, 2.0]);
        let z = reparameterize_with(&mut g, m, l, Tensor::zeros(&[1, 2])).unwrap();
        assert_eq!(g.value(z).data(), &[0.3, -1.0]);
    }

    #[test]
    fn reparameterize_tiny_variance() {
        let mut g = Graph::new();
        let m = row(&mut g, &[0.3]);
        let l = row(&mut g, &[-10.0]);
        let eps = Tensor::new(vec![1, 1], vec![1.7]).unwrap();
        let z = reparameterize_with(&mut g, m, l, eps).unwrap();
        assert!((g.value(z).data()[0] - 0.3).abs() < 0.01 * 1.7);
    }

    #[test]
    fn reparameterize_unit_variance() {
        let mut g = Graph::new();
        let m = g.constant(Tensor::zeros(&[100_000, 1]));
        let l = g.constant(Tensor::zeros(&[100_000, 1]));
        let z = reparameterize(&mut g, m, l, &mut Rng::new(13)).unwrap();
        let d = g.value(z).data();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
        assert!((0.98..=1.02).contains(&var), "{var}");
    }

    #[test]
    fn second_order_examples() {
        let mut g = Graph::new();
        let zt = row(&mut g, &[0.0, 1.0]);
        let zn = row(&mut g, &[1.0, 0.0]);
        assert_eq!(
            {
                let n = second_order_penalty(&mut g, zt, zn, 1.0).unwrap();
                value(&g, n)
            },
            0.0
        );
        let zt0 = row(&mut g, &[0.0, 0.0]);
        assert_eq!(
            {
                let n = second_order_penalty(&mut g, zt0, zn, 1.0).unwrap();
                value(&g, n)
            },
            1.0
        );
        let zt2 = row(&mut g, &[0.0, 0.0, 1.0, 0.0]);
        let zn2 = row(&mut g, &[1.0, 1.0, 0.0, 0.0]);
        assert_eq!(
            {
                let n = second_order_penalty(&mut g, zt2, zn2, 1.0).unwrap();
                value(&g, n)
            },
            0.5
        );
        let odd = row(&mut g, &[0.0, 0.0, 0.0]);
        assert!(matches!(
            second_order_penalty(&mut g, odd, odd, 1.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn residual_with_injected_gradients() {
        let mut g = Graph::new();
        let zt = row(&mut g, &[0.0, 1.0]);
        let zn = row(&mut g, &[0.1, 1.0]);
        let exact = row(&mut g, &[0.0, 1.0]);
        let r = hamilton_residual_from_grad(&mut g, zt, zn, exact, 0.1).unwrap();
        assert!(value(&g, r).abs() < 1e-24);
        let off = row(&mut g, &[0.0, 0.9]);
        let r = hamilton_residual_from_grad(&mut g, zt, zn, off, 0.1).unwrap();
        assert!((value(&g, r) - 0.01).abs() < 1e-12);
    }
}
