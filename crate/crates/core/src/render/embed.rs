use crate::dynsys::{StateVector, SystemSpec};
use crate::error::{Error, Result};
use crate::numcore::{Rng, Tensor};

/// Width of the stand-in for the outer autoencoder latent.
pub const EMBED_WIDTH: usize = 64;

/// Fixed random map `y = tanh(A·g(χ) + b)`.
///
/// `g` sends every angle to `(sin, cos)`, the spring length to its relative
/// extension `r/r0 − 1`, and each momentum to its value in natural units
/// (mass × length² × √(g/L)), so every feature is O(1). `A` and `b` have
/// entries uniform in `(−1, 1)`.
#[derive(Clone, Debug)]
pub struct StateEmbedding {
    spec: SystemSpec,
    seed: u64,
    a: Tensor,
    b: Vec<f64>,
}

impl StateEmbedding {
    pub fn new(spec: &SystemSpec, seed: u64) -> Result<Self> {
        if !spec.kind().is_mechanical() {
            return Err(Error::Unsupported(format!(
                "{} has no state-vector embedding; use frames mode",
                spec.kind()
            )));
        }
        let features = Self::feature_len(spec);
        let mut rng = Rng::new(seed);
        let a = rng.uniform_tensor(&[features, EMBED_WIDTH], -1.0, 1.0);
        let b = (0..EMBED_WIDTH).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Ok(Self {
            spec: spec.clone(),
            seed,
            a,
            b,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn feature_len(spec: &SystemSpec) -> usize {
        spec.angle_mask().iter().map(|&a| if a { 2 } else { 1 }).sum::<usize>() + spec.n_coords()
    }

    fn features(&self, state: &StateVector) -> Result<Vec<f64>> {
        let n = self.spec.n_coords();
        if state.len() != 2 * n {
            return Err(Error::Contract(format!(
                "{} state must have {} entries, got {}",
                self.spec.kind(),
                2 * n,
                state.len()
            )));
        }
        let v = state.values();
        let mut g = Vec::with_capacity(Self::feature_len(&self.spec));
        for (i, is_angle) in self.spec.angle_mask().into_iter().enumerate() {
            if is_angle {
                g.push(v[i].sin());
                g.push(v[i].cos());
            } else if let SystemSpec::ElasticPendulum { rest_length, .. } = self.spec {
                g.push(v[i] / rest_length - 1.0);
            }
        }
        for (p, unit) in v[n..].iter().zip(self.spec.momentum_units()) {
            g.push(p / unit);
        }
        Ok(g)
    }

    pub fn embed(&self, state: &StateVector) -> Result<Vec<f64>> {
        let g = self.features(state)?;
        let a = self.a.data();
        Ok((0..EMBED_WIDTH)
            .map(|j| {
                let pre: f64 = g.iter().enumerate().map(|(i, gi)| gi * a[i * EMBED_WIDTH + j]).sum();
                (pre + self.b[j]).tanh()
            })
            .collect())
    }
}

/// One-shot form of [`StateEmbedding::embed`].
pub fn embed_state(spec: &SystemSpec, state: &StateVector, seed: u64) -> Result<Vec<f64>> {
    StateEmbedding::new(spec, seed)?.embed(state)
}
