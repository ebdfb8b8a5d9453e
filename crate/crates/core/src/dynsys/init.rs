use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{mechanics, reaction_diffusion, StateVector, SystemSpec};
use crate::numcore::Rng;

/// How initial momenta are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MomentumInit {
    /// Released from rest.
    Rest,
    /// Generalized velocities uniform in `±rate·√(g/L)` (spring velocity in
    /// `±rate·√(g/L)·L`), mapped to momenta through the mass matrix.
    Random { rate: f64 },
}

/// Distribution of initial conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConditions {
    /// Angles are uniform in `±angle_range`.
    pub angle_range: f64,
    /// Spring length is uniform in `rest_length·(1 ± spring_range)`.
    pub spring_range: f64,
    pub momentum: MomentumInit,
    /// When set, states whose energy above the potential minimum exceeds this
    /// fraction of the arm-flip barrier are redrawn, so no arm swings over
    /// the top.
    pub energy_cap: Option<f64>,
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            angle_range: SystemSpec::max_default_angle(),
            spring_range: 0.2,
            momentum: MomentumInit::Rest,
            energy_cap: None,
        }
    }
}

const MAX_DRAWS: usize = 100_000;

impl InitialConditions {
    pub fn sample(&self, spec: &SystemSpec, rng: &mut Rng) -> StateVector {
        if let SystemSpec::ReactionDiffusion { .. } = spec {
            return reaction_diffusion::spiral(spec, rng.uniform(0.0, 2.0 * PI), (0.0, 0.0));
        }
        let limit = self
            .energy_cap
            .and_then(|cap| mechanics::energy_floor_and_barrier(spec).map(|(floor, barrier)| floor + cap * barrier));
        let mut fallback = None;
        for _ in 0..MAX_DRAWS {
            let q = self.positions(spec, rng);
            let qdot = self.velocities(spec, rng);
            let Some(limit) = limit else {
                return assemble(spec, &q, &qdot);
            };
            let Ok((potential, kinetic)) = mechanics::energies(spec, &q, &qdot) else {
                continue;
            };
            if potential + kinetic <= limit {
                return assemble(spec, &q, &qdot);
            }
            if potential <= limit && fallback.is_none() {
                fallback = Some(q);
            }
        }
        let q = fallback.unwrap_or_else(|| self.positions(spec, rng));
        log::warn!("energy cap rarely satisfied; releasing from rest");
        assemble(spec, &q, &vec![0.0; q.len()])
    }

    fn positions(&self, spec: &SystemSpec, rng: &mut Rng) -> Vec<f64> {
        let mut q = Vec::with_capacity(spec.n_coords());
        for is_angle in spec.angle_mask() {
            if is_angle {
                q.push(rng.uniform(-self.angle_range, self.angle_range));
            } else if let SystemSpec::ElasticPendulum { rest_length, .. } = *spec {
                q.push(rest_length * (1.0 + rng.uniform(-self.spring_range, self.spring_range)));
            }
        }
        q
    }

    fn velocities(&self, spec: &SystemSpec, rng: &mut Rng) -> Vec<f64> {
        let n = spec.n_coords();
        match self.momentum {
            MomentumInit::Rest => vec![0.0; n],
            MomentumInit::Random { rate } => {
                let w = spec.angular_rate_unit() * rate;
                let spring_unit = match *spec {
                    SystemSpec::ElasticPendulum { rest_length, .. } => rest_length,
                    _ => 1.0,
                };
                spec.angle_mask()
                    .into_iter()
                    .map(|is_angle| {
                        let unit = if is_angle { w } else { w * spring_unit };
                        rng.uniform(-unit, unit)
                    })
                    .collect()
            }
        }
    }
}

fn assemble(spec: &SystemSpec, q: &[f64], qdot: &[f64]) -> StateVector {
    let p = if qdot.iter().all(|&v| v == 0.0) {
        vec![0.0; q.len()]
    } else {
        mechanics::momenta(spec, q, qdot).expect("positions drawn inside the valid region")
    };
    let mut values = q.to_vec();
    values.extend(p);
    StateVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{hamiltonian, simulate, SystemKind, DEFAULT_DT_FRAME};

    #[test]
    fn deterministic_for_seed() {
        let spec = SystemKind::DoublePendulum.default_spec();
        let ic = InitialConditions::default();
        let a = ic.sample(&spec, &mut Rng::new(5));
        let b = ic.sample(&spec, &mut Rng::new(5));
        assert_eq!(a, b);
    }

    #[test]
    fn default_angles_in_range_and_at_rest() {
        let spec = SystemKind::SinglePendulum.default_spec();
        let ic = InitialConditions::default();
        let mut rng = Rng::new(1);
        for _ in 0..1000 {
            let s = ic.sample(&spec, &mut rng);
            assert!(s.values()[0].abs() <= 0.8 * PI);
            assert_eq!(s.values()[1], 0.0);
        }
    }

    #[test]
    fn angle_mean_near_zero() {
        let spec = SystemKind::SinglePendulum.default_spec();
        let ic = InitialConditions::default();
        let mut rng = Rng::new(2);
        let mean = (0..10_000).map(|_| ic.sample(&spec, &mut rng).values()[0]).sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.05, "{mean}");
    }

    #[test]
    fn spring_length_in_range() {
        let spec = SystemKind::ElasticPendulum.default_spec();
        let ic = InitialConditions::default();
        let mut rng = Rng::new(3);
        for _ in 0..1000 {
            let r = ic.sample(&spec, &mut rng).values()[1];
            assert!((0.8..=1.2).contains(&r));
        }
    }

    #[test]
    fn energy_cap_prevents_flips() {
        let spec = SystemKind::DoublePendulum.default_spec();
        let ic = InitialConditions {
            momentum: MomentumInit::Random { rate: 1.0 },
            energy_cap: Some(0.9),
            ..Default::default()
        };
        let mut rng = Rng::new(4);
        let (floor, barrier) = mechanics::energy_floor_and_barrier(&spec).unwrap();
        for _ in 0..20 {
            let s = ic.sample(&spec, &mut rng);
            assert!(hamiltonian(&spec, &s).unwrap() <= floor + 0.9 * barrier + 1e-12);
            assert!(s.values()[2..].iter().any(|&p| p != 0.0));
            let traj = simulate(&spec, &s, 100, DEFAULT_DT_FRAME, 20).unwrap();
            for st in &traj.states {
                assert!(st.values()[0].abs() < PI && st.values()[1].abs() < PI);
            }
        }
    }

    #[test]
    fn spiral_phase_varies() {
        let spec = SystemKind::ReactionDiffusion.default_spec();
        let ic = InitialConditions::default();
        let mut rng = Rng::new(6);
        let a = ic.sample(&spec, &mut rng);
        let b = ic.sample(&spec, &mut rng);
        assert_eq!(a.len(), 2 * 32 * 32);
        assert_ne!(a, b);
        assert!(a.values().iter().all(|v| v.abs() <= 1.0));
    }
}
