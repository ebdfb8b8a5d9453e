use serde::{Deserialize, Serialize};

use super::{aux_names, aux_values, derivative, StateVector, SystemSpec, Trajectory};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    Rk4,
    /// Velocity Verlet for the single pendulum, RK4 for everything else.
    Leapfrog,
}

impl Integrator {
    /// Leapfrog where it is symplectic, RK4 elsewhere.
    pub fn default_for(spec: &SystemSpec) -> Self {
        match spec {
            SystemSpec::SinglePendulum { .. } => Integrator::Leapfrog,
            _ => Integrator::Rk4,
        }
    }
}

fn rk4_unchecked(spec: &SystemSpec, state: &StateVector, t: f64, dt: f64) -> Result<StateVector> {
    let k1 = derivative(spec, state, t)?;
    let k2 = derivative(spec, &state.axpy(0.5 * dt, &k1), t + 0.5 * dt)?;
    let k3 = derivative(spec, &state.axpy(0.5 * dt, &k2), t + 0.5 * dt)?;
    let k4 = derivative(spec, &state.axpy(dt, &k3), t + dt)?;
    let out = state
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| x + dt / 6.0 * (k1.values()[i] + 2.0 * k2.values()[i] + 2.0 * k3.values()[i] + k4.values()[i]))
        .collect();
    let out = StateVector::new(out);
    if !out.is_finite() {
        return Err(Error::Instability(format!(
            "{} RK4 step at t={t} with dt={dt} produced a non-finite state",
            spec.kind()
        )));
    }
    Ok(out)
}

/// Classic fourth-order Runge–Kutta step.
pub fn rk4_step(spec: &SystemSpec, state: &StateVector, t: f64, dt: f64) -> Result<StateVector> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Contract(format!("rk4 step needs dt > 0, got {dt}")));
    }
    rk4_unchecked(spec, state, t, dt)
}

/// Symplectic, time-reversible step for the single pendulum (velocity
/// Verlet); other systems fall back to RK4. Negative `dt` integrates
/// backwards and `dt = 0` is the identity.
pub fn leapfrog_step(spec: &SystemSpec, state: &StateVector, dt: f64) -> Result<StateVector> {
    if !dt.is_finite() {
        return Err(Error::Contract(format!("non-finite dt {dt}")));
    }
    if dt == 0.0 {
        return Ok(state.clone());
    }
    let SystemSpec::SinglePendulum { mass, length, gravity } = *spec else {
        return rk4_unchecked(spec, state, 0.0, dt);
    };
    if state.len() != 2 {
        return Err(Error::Contract(format!(
            "single-pendulum state must have 2 entries, got {}",
            state.len()
        )));
    }
    let inertia = mass * length * length;
    let torque = |th: f64| -mass * gravity * length * th.sin();
    let (th, p) = (state.values()[0], state.values()[1]);
    let p_half = p + 0.5 * dt * torque(th);
    let th_new = th + dt * p_half / inertia;
    let p_new = p_half + 0.5 * dt * torque(th_new);
    let out = StateVector::new(vec![th_new, p_new]);
    if !out.is_finite() {
        return Err(Error::Instability(format!(
            "leapfrog step with dt={dt} produced a non-finite state"
        )));
    }
    Ok(out)
}

/// Simulates `n_frames` stored states, `dt_frame` apart, integrating with
/// `substeps` internal steps per frame.
pub fn simulate(
    spec: &SystemSpec,
    initial: &StateVector,
    n_frames: usize,
    dt_frame: f64,
    substeps: usize,
) -> Result<Trajectory> {
    simulate_with(
        spec,
        initial,
        n_frames,
        dt_frame,
        substeps,
        Integrator::default_for(spec),
    )
}

pub fn simulate_with(
    spec: &SystemSpec,
    initial: &StateVector,
    n_frames: usize,
    dt_frame: f64,
    substeps: usize,
    integrator: Integrator,
) -> Result<Trajectory> {
    if n_frames < 2 {
        return Err(Error::Contract(format!("need at least 2 frames, got {n_frames}")));
    }
    if substeps < 1 {
        return Err(Error::Contract("substeps must be at least 1".into()));
    }
    if !(dt_frame > 0.0 && dt_frame.is_finite()) {
        return Err(Error::Contract(format!("dt_frame must be positive, got {dt_frame}")));
    }
    if initial.len() != spec.state_len() {
        return Err(Error::Contract(format!(
            "initial state has {} entries, {} expects {}",
            initial.len(),
            spec.kind(),
            spec.state_len()
        )));
    }
    let dt = dt_frame / substeps as f64;
    let mut states = Vec::with_capacity(n_frames);
    let mut aux = Vec::with_capacity(n_frames);
    let mut s = initial.clone();
    for frame in 0..n_frames {
        if frame > 0 {
            for sub in 0..substeps {
                let t = ((frame - 1) * substeps + sub) as f64 * dt;
                s = match integrator {
                    Integrator::Rk4 => rk4_step(spec, &s, t, dt)?,
                    Integrator::Leapfrog => leapfrog_step(spec, &s, dt)?,
                };
            }
        }
        aux.push(aux_values(spec, &s)?);
        states.push(s.clone());
    }
    Ok(Trajectory {
        spec: spec.clone(),
        dt_frame,
        states,
        aux_names: aux_names(spec).into_iter().map(String::from).collect(),
        aux,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{hamiltonian, SystemKind, DEFAULT_DT_FRAME};
    use std::f64::consts::PI;

    #[test]
    fn fixed_point_stays_fixed() {
        let spec = SystemKind::DoublePendulum.default_spec();
        let s = StateVector::new(vec![0.0; 4]);
        let next = rk4_step(&spec, &s, 0.0, 0.01).unwrap();
        assert!(next.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rk4_rejects_non_positive_dt() {
        let spec = SystemKind::SinglePendulum.default_spec();
        let s = StateVector::new(vec![0.1, 0.0]);
        assert!(rk4_step(&spec, &s, 0.0, 0.0).is_err());
        assert!(rk4_step(&spec, &s, 0.0, -0.1).is_err());
    }

    #[test]
    fn small_angle_period() {
        let spec = SystemKind::SinglePendulum.default_spec();
        let dt = 1e-3;
        let mut s = StateVector::new(vec![0.05, 0.0]);
        let mut crossings = Vec::new();
        let mut t = 0.0;
        for _ in 0..10_000 {
            let next = rk4_step(&spec, &s, t, dt).unwrap();
            let (a, b) = (s.values()[0], next.values()[0]);
            if a > 0.0 && b <= 0.0 {
                crossings.push(t + dt * a / (a - b));
            }
            s = next;
            t += dt;
        }
        let periods: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
        let period = periods.iter().sum::<f64>() / periods.len() as f64;
        let expected = 2.0 * PI * (1.0f64 / 9.81).sqrt();
        assert!((period - expected).abs() / expected < 0.005, "{period} vs {expected}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        // One-step error against a fine reference shrinks ~16x when dt halves
        // (local error is O(dt^5), global over a fixed span O(dt^4)).
        let spec = SystemKind::DoublePendulum.default_spec();
        let s0 = StateVector::new(vec![1.0, -0.5, 0.3, 0.2]);
        let span = 0.2;
        let integrate = |dt: f64| {
            let steps = (span / dt).round() as usize;
            let mut s = s0.clone();
            for i in 0..steps {
                s = rk4_step(&spec, &s, i as f64 * dt, dt).unwrap();
            }
            s
        };
        let reference = integrate(span / 2000.0);
        let err = |dt: f64| {
            integrate(dt)
                .values()
                .iter()
                .zip(reference.values())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn leapfrog_time_reversible() {
        let spec = SystemKind::SinglePendulum.default_spec();
        let s0 = StateVector::new(vec![1.2, 0.7]);
        let mut s = s0.clone();
        for _ in 0..1000 {
            s = leapfrog_step(&spec, &s, 1e-3).unwrap();
        }
        for _ in 0..1000 {
            s = leapfrog_step(&spec, &s, -1e-3).unwrap();
        }
        for (a, b) in s.values().iter().zip(s0.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn leapfrog_zero_dt_is_identity() {
        let spec = SystemKind::SinglePendulum.default_spec();
        let s0 = StateVector::new(vec![0.4, -0.2]);
        assert_eq!(leapfrog_step(&spec, &s0, 0.0).unwrap(), s0);
    }

    #[test]
    fn simulate_frame_count_and_span() {
        let spec = SystemKind::SinglePendulum.default_spec();
        let traj = simulate(&spec, &StateVector::new(vec![0.5, 0.0]), 100, DEFAULT_DT_FRAME, 10).unwrap();
        assert_eq!(traj.len(), 100);
        let last = traj.times().last().unwrap();
        assert!((last - 99.0 / 60.0).abs() < 1e-12);
        assert_eq!(traj.aux.len(), traj.states.len());
    }

    #[test]
    fn simulate_energy_drift() {
        let spec = SystemKind::SinglePendulum.default_spec();
        let traj = simulate(&spec, &StateVector::new(vec![2.0, 0.0]), 100, DEFAULT_DT_FRAME, 50).unwrap();
        let e = traj.energies().unwrap();
        let h0 = hamiltonian(&spec, &traj.states[0]).unwrap();
        let drift = e.iter().map(|h| (h - h0).abs() / h0.abs()).fold(0.0, f64::max);
        assert!(drift < 1e-4, "{drift}");
    }

    #[test]
    fn simulate_contracts() {
        let spec = SystemKind::SinglePendulum.default_spec();
        let s = StateVector::new(vec![0.5, 0.0]);
        assert!(simulate(&spec, &s, 1, 0.1, 1).is_err());
        assert!(simulate(&spec, &s, 10, 0.1, 0).is_err());
    }

    #[test]
    fn leapfrog_long_run_drift() {
        let spec = SystemKind::SinglePendulum.default_spec();
        let mut s = StateVector::new(vec![1.0, 0.0]);
        let h0 = hamiltonian(&spec, &s).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..100_000 {
            s = leapfrog_step(&spec, &s, 1e-3).unwrap();
            worst = worst.max((hamiltonian(&spec, &s).unwrap() - h0).abs() / h0.abs());
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn rk4_conserves_double_pendulum_energy() {
        let spec = SystemKind::DoublePendulum.default_spec();
        let mut s = StateVector::new(vec![1.1, -0.4, 0.5, -0.3]);
        let h0 = hamiltonian(&spec, &s).unwrap();
        for i in 0..10_000 {
            s = rk4_step(&spec, &s, i as f64 * 1e-4, 1e-4).unwrap();
        }
        let rel = (hamiltonian(&spec, &s).unwrap() - h0).abs() / h0.abs();
        assert!(rel < 1e-6, "{rel}");
    }

    #[test]
    fn spiral_wave_stays_bounded() {
        let spec = SystemKind::ReactionDiffusion.default_spec();
        let s0 = crate::dynsys::sample_initial_conditions(&spec, &mut crate::numcore::Rng::new(0));
        let traj = simulate(&spec, &s0, 100, 0.05, 5).unwrap();
        let max = traj
            .states
            .iter()
            .flat_map(|s| s.values().iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max <= 1.5, "{max}");
    }
}
