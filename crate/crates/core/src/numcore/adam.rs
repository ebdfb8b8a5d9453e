use std::collections::BTreeMap;

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter that has a gradient in `grads`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) -> Result<()> {
        for (name, g) in grads.iter() {
            if !g.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite gradient for `{name}` at step {}",
                    self.step + 1
                )));
            }
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return Err(Error::Dimension(format!(
                    "gradient for `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);

        for (name, g) in grads.iter() {
            let m = self
                .m
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .v
                .entry(name.to_string())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let p = params.get_mut(name)?;
            for (((pi, mi), vi), &gi) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *pi -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Graph;

    fn single(name: &str, v: f64) -> ParamSet {
        std::iter::once((name.to_string(), Tensor::scalar(v))).collect()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = single("w", 1.5);
        let mut adam = AdamState::default();
        adam.step(&mut p, &single("w", 0.0)).unwrap();
        assert_eq!(p.get("w").unwrap().data(), &[1.5]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_is_minus_lr() {
        let mut p = single("w", 0.0);
        let mut adam = AdamState::new(0.01);
        adam.step(&mut p, &single("w", 1.0)).unwrap();
        let update = p.get("w").unwrap().data()[0];
        assert!((update + 0.01).abs() < 1e-6);
    }

    #[test]
    fn nan_gradient_is_error() {
        let mut p = single("w", 0.0);
        let mut adam = AdamState::default();
        let r = adam.step(&mut p, &single("w", f64::NAN));
        assert!(matches!(r, Err(Error::Divergence(_))));
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = single("w", 0.0);
        let mut adam = AdamState::new(0.1);
        for _ in 0..200 {
            let mut g = Graph::new();
            let b = p.bind(&mut g);
            let w = b.id("w").unwrap();
            let d = g.add_scalar(w, -2.0).unwrap();
            let loss = g.square(d).unwrap();
            g.backward(loss).unwrap();
            adam.step(&mut p, &b.grads(&g)).unwrap();
        }
        let w = p.get("w").unwrap().data()[0];
        assert!((w - 2.0).abs() < 1e-2, "w = {w}");
    }
}
