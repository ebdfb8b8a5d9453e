//! Convolutional autoencoder mapping a stacked frame pair to a 64-float
//! latent and back to the target pair.

use crate::error::{Error, Result};
use crate::numcore::{Bound, Graph, NodeId, ParamSet, Rng, Tensor};
use crate::render::Geometry;

pub const OUTER_CHANNELS: [usize; 5] = [8, 16, 32, 64, 64];
pub const OUTER_LATENT: usize = 64;
const KERNEL: usize = 3;
/// Five stride-2 layers halve the frame side five times.
const REDUCTION: usize = 32;
/// Glorot scale for tanh layers.
const TANH_GAIN: f64 = 5.0 / 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct OuterAE {
    pub geometry: Geometry,
}

impl OuterAE {
    pub fn new(geometry: Geometry) -> Result<Self> {
        geometry.validate()?;
        if !geometry.height.is_multiple_of(REDUCTION) || !geometry.width.is_multiple_of(REDUCTION) {
            return Err(Error::Contract(format!(
                "outer model needs frame sides divisible by {REDUCTION}, got {}×{}",
                geometry.height, geometry.width
            )));
        }
        Ok(Self { geometry })
    }

    /// Channels of the stacked two-frame input and target.
    pub fn stack_channels(&self) -> usize {
        2 * self.geometry.channels
    }

    fn bottleneck(&self) -> (usize, usize, usize) {
        (
            OUTER_CHANNELS[4],
            self.geometry.height / REDUCTION,
            self.geometry.width / REDUCTION,
        )
    }

    fn flat_width(&self) -> usize {
        let (c, h, w) = self.bottleneck();
        c * h * w
    }

    fn kernel(rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
        let limit = TANH_GAIN * (6.0 / (fan_in + fan_out) as f64).sqrt();
        rng.uniform_tensor(shape, -limit, limit)
    }

    pub fn init(&self, rng: &mut Rng) -> ParamSet {
        let mut p = ParamSet::new();
        let k2 = KERNEL * KERNEL;
        let mut cin = self.stack_channels();
        for (i, &cout) in OUTER_CHANNELS.iter().enumerate() {
            p.insert(
                format!("enc.conv{i}.w"),
                Self::kernel(rng, &[cout, cin, KERNEL, KERNEL], cin * k2, cout * k2),
            );
            p.insert(format!("enc.conv{i}.b"), Tensor::zeros(&[cout]));
            cin = cout;
        }
        let (flat, z) = (self.flat_width(), OUTER_LATENT);
        p.insert("enc.fc.w", Self::kernel(rng, &[flat, z], flat, z));
        p.insert("enc.fc.b", Tensor::zeros(&[z]));
        p.insert("dec.fc.w", Self::kernel(rng, &[z, flat], z, flat));
        p.insert("dec.fc.b", Tensor::zeros(&[flat]));
        let mut outs: Vec<usize> = OUTER_CHANNELS.iter().rev().skip(1).copied().collect();
        outs.push(self.stack_channels());
        let mut cin = OUTER_CHANNELS[4];
        for (i, &cout) in outs.iter().enumerate() {
            p.insert(
                format!("dec.deconv{i}.w"),
                Self::kernel(rng, &[cin, cout, KERNEL, KERNEL], cin * k2, cout * k2),
            );
            p.insert(format!("dec.deconv{i}.b"), Tensor::zeros(&[cout]));
            cin = cout;
        }
        p
    }

    /// Sets the final bias so an untrained model predicts `mean` everywhere
    /// its weights contribute nothing.
    pub fn init_output_bias(&self, params: &mut ParamSet, mean: f64) -> Result<()> {
        let m = mean.clamp(1e-3, 1.0 - 1e-3);
        let logit = (m / (1.0 - m)).ln();
        let b = params.get_mut("dec.deconv4.b")?;
        b.data_mut().iter_mut().for_each(|v| *v = logit);
        Ok(())
    }

    pub fn encode(&self, g: &mut Graph, bound: &Bound, input: NodeId) -> Result<NodeId> {
        let shape = g.value(input).shape().to_vec();
        let expected = [self.stack_channels(), self.geometry.height, self.geometry.width];
        if shape.len() != 4 || shape[1..] != expected {
            return Err(Error::Contract(format!(
                "outer model expects N×{}×{}×{} input, got {shape:?}",
                expected[0], expected[1], expected[2]
            )));
        }
        let n = shape[0];
        let mut h = input;
        for i in 0..OUTER_CHANNELS.len() {
            let c = g.conv2d(h, bound.id(&format!("enc.conv{i}.w"))?, 2, 1)?;
            let c = g.add_channel(c, bound.id(&format!("enc.conv{i}.b"))?)?;
            h = g.tanh(c)?;
        }
        let flat = g.reshape(h, &[n, self.flat_width()])?;
        let a = g.matmul(flat, bound.id("enc.fc.w")?)?;
        let a = g.add_row(a, bound.id("enc.fc.b")?)?;
        g.tanh(a)
    }

    pub fn decode(&self, g: &mut Graph, bound: &Bound, latent: NodeId) -> Result<NodeId> {
        let (n, _) = g.value(latent).dims2()?;
        let a = g.matmul(latent, bound.id("dec.fc.w")?)?;
        let a = g.add_row(a, bound.id("dec.fc.b")?)?;
        let a = g.tanh(a)?;
        let (c, hh, ww) = self.bottleneck();
        let mut h = g.reshape(a, &[n, c, hh, ww])?;
        let last = OUTER_CHANNELS.len() - 1;
        for i in 0..OUTER_CHANNELS.len() {
            let d = g.conv_transpose2d(h, bound.id(&format!("dec.deconv{i}.w"))?, 2, 1, 1)?;
            let d = g.add_channel(d, bound.id(&format!("dec.deconv{i}.b"))?)?;
            h = if i == last { g.sigmoid(d)? } else { g.tanh(d)? };
        }
        Ok(h)
    }

    /// `(latent, predicted target stack)`.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, input: NodeId) -> Result<(NodeId, NodeId)> {
        let z = self.encode(g, bound, input)?;
        let y = self.decode(g, bound, z)?;
        Ok((z, y))
    }

    /// Latents for an `N×2C×H×W` batch without recording gradients.
    pub fn latents(&self, params: &ParamSet, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = params.bind_frozen(&mut g);
        let x = g.constant(input.clone());
        let z = self.encode(&mut g, &bound, x)?;
        Ok(g.value(z).clone())
    }
}


#[cfg(test)]
mod signal_tests {
    use super::*;
    use crate::dynsys::{StateVector, SystemKind};
    use crate::render::render_state;

    /// Mean per-dimension latent variance over pendulum frame pairs at
    /// sixteen angles, before training.
    fn init_latent_variance(seed: u64) -> f64 {
        let geometry = Geometry {
            height: 32,
            width: 32,
            channels: 1,
        };
        let spec = SystemKind::SinglePendulum.default_spec();
        let frame = |theta: f64| {
            render_state(&spec, &StateVector::new(vec![theta, 0.0]), geometry)
                .unwrap()
                .frame
                .pixels
        };
        let n = 16;
        let mut data = Vec::new();
        for i in 0..n {
            let theta = -2.0 + 4.0 * i as f64 / n as f64;
            data.extend(frame(theta));
            data.extend(frame(theta + 0.3));
        }
        let m = OuterAE::new(geometry).unwrap();
        let p = m.init(&mut Rng::new(seed));
        let z = m.latents(&p, &Tensor::new(vec![n, 2, 32, 32], data).unwrap()).unwrap();
        let mut total = 0.0;
        for j in 0..OUTER_LATENT {
            let col: Vec<f64> = (0..n).map(|i| z.row(i)[j]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            total += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        }
        total / OUTER_LATENT as f64
    }

    #[test]
    fn untrained_latents_follow_the_frames() {
        for seed in 0..3 {
            let v = init_latent_variance(seed);
            assert!(v > 2e-3, "seed {seed}: {v}");
        }
    }
}
