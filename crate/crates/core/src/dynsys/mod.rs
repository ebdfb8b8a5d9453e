//! Analytic simulators: single, double and elastic pendulum, and the
//! lambda–omega spiral-wave reaction–diffusion system.

mod init;
mod integrate;
mod mechanics;
mod reaction_diffusion;
mod spec;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use init::{InitialConditions, MomentumInit};
pub use integrate::{leapfrog_step, rk4_step, simulate, simulate_with, Integrator};
pub use mechanics::bob_positions;
pub use spec::{SystemKind, SystemSpec};

/// Default interval between stored frames, in seconds.
pub const DEFAULT_DT_FRAME: f64 = 1.0 / 60.0;

/// System state. Mechanical layout is `(q_1..q_n, p_1..p_n)`; angles are
/// never wrapped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self + h·other`
    pub(crate) fn axpy(&self, h: f64, other: &StateVector) -> StateVector {
        StateVector(self.0.iter().zip(&other.0).map(|(a, b)| a + h * b).collect())
    }
}

/// `χ̇ = f(χ, t)`. All systems are autonomous; `t` is accepted for symmetry.
pub fn derivative(spec: &SystemSpec, state: &StateVector, _t: f64) -> Result<StateVector> {
    match spec {
        SystemSpec::ReactionDiffusion { .. } => reaction_diffusion::derivative(spec, state),
        _ => mechanics::derivative(spec, state),
    }
}

/// Total energy in joules.
pub fn hamiltonian(spec: &SystemSpec, state: &StateVector) -> Result<f64> {
    mechanics::hamiltonian(spec, state)
}

/// Momenta for given generalized positions and velocities.
pub fn momenta_from_velocities(spec: &SystemSpec, q: &[f64], qdot: &[f64]) -> Result<Vec<f64>> {
    if !spec.kind().is_mechanical() || q.len() != spec.n_coords() || qdot.len() != q.len() {
        return Err(Error::Contract(format!(
            "velocities do not match a {} configuration",
            spec.kind()
        )));
    }
    mechanics::momenta(spec, q, qdot)
}

/// Default distribution: angles uniform in ±0.8π, released from rest.
pub fn sample_initial_conditions(spec: &SystemSpec, rng: &mut crate::numcore::Rng) -> StateVector {
    InitialConditions::default().sample(spec, rng)
}

/// Ground-truth observables recorded alongside each stored state.
pub fn aux_names(spec: &SystemSpec) -> Vec<&'static str> {
    match spec.kind() {
        SystemKind::SinglePendulum => vec!["theta", "cos2theta", "x1"],
        SystemKind::DoublePendulum => vec!["theta1", "theta2", "x1", "x2"],
        SystemKind::ElasticPendulum => vec!["theta1", "theta2", "x1", "x2", "z"],
        SystemKind::ReactionDiffusion => vec!["u_center", "v_center"],
    }
}

pub fn aux_values(spec: &SystemSpec, state: &StateVector) -> Result<Vec<f64>> {
    let v = state.values();
    Ok(match *spec {
        SystemSpec::SinglePendulum { .. } => {
            let b = bob_positions(spec, state)?;
            vec![v[0], (2.0 * v[0]).cos(), b[0].0]
        }
        SystemSpec::DoublePendulum { .. } => {
            let b = bob_positions(spec, state)?;
            vec![v[0], v[1], b[0].0, b[1].0]
        }
        SystemSpec::ElasticPendulum { .. } => {
            let b = bob_positions(spec, state)?;
            vec![v[0], v[2], b[0].0, b[1].0, v[1]]
        }
        SystemSpec::ReactionDiffusion { grid, .. } => {
            let c = (grid / 2) * grid + grid / 2;
            vec![v[c], v[grid * grid + c]]
        }
    })
}

/// Uniformly sampled time series of states with ground-truth overlays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub spec: SystemSpec,
    pub dt_frame: f64,
    pub states: Vec<StateVector>,
    pub aux_names: Vec<String>,
    /// One row per state, columns as in `aux_names`.
    pub aux: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.states.len()).map(|i| i as f64 * self.dt_frame)
    }

    pub fn energies(&self) -> Result<Vec<f64>> {
        self.states.iter().map(|s| hamiltonian(&self.spec, s)).collect()
    }

    /// Writes `t,state_0..state_{k-1},aux_*` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let width = self.states.first().map_or(0, StateVector::len);
        let mut header = vec!["t".to_string()];
        header.extend((0..width).map(|i| format!("state_{i}")));
        header.extend(self.aux_names.iter().map(|n| format!("aux_{n}")));
        writeln!(w, "{}", header.join(","))?;
        for ((t, s), aux) in self.times().zip(&self.states).zip(&self.aux) {
            let mut row = vec![t.to_string()];
            row.extend(s.values().iter().map(f64::to_string));
            row.extend(aux.iter().map(f64::to_string));
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        Ok(())
    }
}
