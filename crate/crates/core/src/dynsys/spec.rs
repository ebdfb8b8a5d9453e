use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    SinglePendulum,
    DoublePendulum,
    ElasticPendulum,
    ReactionDiffusion,
}

impl SystemKind {
    pub const ALL: [SystemKind; 4] = [
        SystemKind::SinglePendulum,
        SystemKind::DoublePendulum,
        SystemKind::ElasticPendulum,
        SystemKind::ReactionDiffusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::SinglePendulum => "single-pendulum",
            SystemKind::DoublePendulum => "double-pendulum",
            SystemKind::ElasticPendulum => "elastic-pendulum",
            SystemKind::ReactionDiffusion => "reaction-diffusion",
        }
    }

    /// Ground-truth number of state variables.
    pub fn dof(self) -> usize {
        match self {
            SystemKind::SinglePendulum | SystemKind::ReactionDiffusion => 2,
            SystemKind::DoublePendulum => 4,
            SystemKind::ElasticPendulum => 6,
        }
    }

    /// Reconstruction weight β for (PI-VAE, HPI-VAE).
    pub fn default_beta(self) -> (f64, f64) {
        match self {
            SystemKind::ReactionDiffusion => (7.0, 7.0),
            SystemKind::SinglePendulum => (17.0, 20.0),
            SystemKind::DoublePendulum => (30.0, 40.0),
            SystemKind::ElasticPendulum => (50.0, 80.0),
        }
    }

    pub fn is_mechanical(self) -> bool {
        self != SystemKind::ReactionDiffusion
    }

    pub fn default_spec(self) -> SystemSpec {
        match self {
            SystemKind::SinglePendulum => SystemSpec::SinglePendulum {
                mass: 1.0,
                length: 1.0,
                gravity: 9.81,
            },
            SystemKind::DoublePendulum => SystemSpec::DoublePendulum {
                mass1: 1.0,
                mass2: 1.0,
                length1: 1.0,
                length2: 1.0,
                gravity: 9.81,
            },
            SystemKind::ElasticPendulum => SystemSpec::ElasticPendulum {
                mass1: 1.0,
                mass2: 1.0,
                rest_length: 1.0,
                length2: 1.0,
                stiffness: 100.0,
                gravity: 9.81,
            },
            SystemKind::ReactionDiffusion => SystemSpec::ReactionDiffusion {
                grid: 32,
                domain: 20.0,
                d1: 0.1,
                d2: 0.1,
                beta: 1.0,
            },
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config {
                key: "system.kind".into(),
                msg: format!("unknown system `{s}`"),
            })
    }
}

/// A simulable system with its physical parameters (SI units).
///
/// Mechanical states are laid out as generalized positions followed by their
/// conjugate momenta. The elastic pendulum's first arm is a spring, so its
/// positions are `(θ1, r, θ2)`. Reaction–diffusion states hold the `u` grid
/// followed by the `v` grid, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemSpec {
    SinglePendulum {
        mass: f64,
        length: f64,
        gravity: f64,
    },
    DoublePendulum {
        mass1: f64,
        mass2: f64,
        length1: f64,
        length2: f64,
        gravity: f64,
    },
    ElasticPendulum {
        mass1: f64,
        mass2: f64,
        rest_length: f64,
        length2: f64,
        stiffness: f64,
        gravity: f64,
    },
    /// Lambda–omega system on a periodic `grid×grid` square of side `domain`.
    ReactionDiffusion {
        grid: usize,
        domain: f64,
        d1: f64,
        d2: f64,
        beta: f64,
    },
}

impl SystemSpec {
    pub fn kind(&self) -> SystemKind {
        match self {
            SystemSpec::SinglePendulum { .. } => SystemKind::SinglePendulum,
            SystemSpec::DoublePendulum { .. } => SystemKind::DoublePendulum,
            SystemSpec::ElasticPendulum { .. } => SystemKind::ElasticPendulum,
            SystemSpec::ReactionDiffusion { .. } => SystemKind::ReactionDiffusion,
        }
    }

    pub fn dof(&self) -> usize {
        self.kind().dof()
    }

    pub fn validate(&self) -> Result<()> {
        let values: Vec<(&str, f64)> = match *self {
            SystemSpec::SinglePendulum { mass, length, gravity } => {
                vec![("mass", mass), ("length", length), ("gravity", gravity)]
            }
            SystemSpec::DoublePendulum {
                mass1,
                mass2,
                length1,
                length2,
                gravity,
            } => vec![
                ("mass1", mass1),
                ("mass2", mass2),
                ("length1", length1),
                ("length2", length2),
                ("gravity", gravity),
            ],
            SystemSpec::ElasticPendulum {
                mass1,
                mass2,
                rest_length,
                length2,
                stiffness,
                gravity,
            } => vec![
                ("mass1", mass1),
                ("mass2", mass2),
                ("rest_length", rest_length),
                ("length2", length2),
                ("stiffness", stiffness),
                ("gravity", gravity),
            ],
            SystemSpec::ReactionDiffusion {
                grid,
                domain,
                d1,
                d2,
                beta,
            } => vec![
                ("grid", grid as f64),
                ("domain", domain),
                ("d1", d1),
                ("d2", d2),
                ("beta", beta),
            ],
        };
        for (name, v) in values {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config {
                    key: format!("system.{name}"),
                    msg: format!("must be positive, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Number of generalized coordinates of a mechanical system.
    pub fn n_coords(&self) -> usize {
        match self {
            SystemSpec::SinglePendulum { .. } => 1,
            SystemSpec::DoublePendulum { .. } => 2,
            SystemSpec::ElasticPendulum { .. } => 3,
            SystemSpec::ReactionDiffusion { .. } => 0,
        }
    }

    /// Length of a state vector for this system.
    pub fn state_len(&self) -> usize {
        match *self {
            SystemSpec::ReactionDiffusion { grid, .. } => 2 * grid * grid,
            _ => 2 * self.n_coords(),
        }
    }

    /// Which generalized coordinates are angles.
    pub fn angle_mask(&self) -> Vec<bool> {
        match self {
            SystemSpec::SinglePendulum { .. } => vec![true],
            SystemSpec::DoublePendulum { .. } => vec![true, true],
            SystemSpec::ElasticPendulum { .. } => vec![true, false, true],
            SystemSpec::ReactionDiffusion { .. } => vec![],
        }
    }

    /// Distance from the pivot to the farthest point the system normally reaches.
    pub fn reach(&self) -> f64 {
        match *self {
            SystemSpec::SinglePendulum { length, .. } => length,
            SystemSpec::DoublePendulum { length1, length2, .. } => length1 + length2,
            SystemSpec::ElasticPendulum {
                rest_length, length2, ..
            } => 1.5 * rest_length + length2,
            SystemSpec::ReactionDiffusion { domain, .. } => domain / 2.0,
        }
    }

    /// Characteristic speed scale √(g·L) of a mechanical system, in units of
    /// its first length.
    pub(crate) fn angular_rate_unit(&self) -> f64 {
        match *self {
            SystemSpec::SinglePendulum { length, gravity, .. } => (gravity / length).sqrt(),
            SystemSpec::DoublePendulum { length1, gravity, .. } => (gravity / length1).sqrt(),
            SystemSpec::ElasticPendulum {
                rest_length, gravity, ..
            } => (gravity / rest_length).sqrt(),
            SystemSpec::ReactionDiffusion { beta, .. } => beta,
        }
    }

    /// Scale of each conjugate momentum for normalization: total mass × L² × rate.
    pub(crate) fn momentum_units(&self) -> Vec<f64> {
        let w = self.angular_rate_unit();
        match *self {
            SystemSpec::SinglePendulum { mass, length, .. } => vec![mass * length * length * w],
            SystemSpec::DoublePendulum {
                mass1, mass2, length1, ..
            } => {
                let u = (mass1 + mass2) * length1 * length1 * w;
                vec![u, u]
            }
            SystemSpec::ElasticPendulum {
                mass1,
                mass2,
                rest_length,
                ..
            } => {
                let m = mass1 + mass2;
                vec![
                    m * rest_length * rest_length * w,
                    m * rest_length * w,
                    m * rest_length * rest_length * w,
                ]
            }
            SystemSpec::ReactionDiffusion { .. } => vec![],
        }
    }

    pub fn max_default_angle() -> f64 {
        0.8 * PI
    }
}
