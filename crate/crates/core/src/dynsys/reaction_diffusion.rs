//! Lambda–omega reaction–diffusion on a periodic square grid:
//!
//! ```text
//! u̇ = (1 − A²) u + β A² v + d1 ∇²u
//! v̇ = −β A² u + (1 − A²) v + d2 ∇²v,    A² = u² + v²
//! ```

use super::{StateVector, SystemSpec};
use crate::error::{Error, Result};

pub(super) fn derivative(spec: &SystemSpec, state: &StateVector) -> Result<StateVector> {
    let SystemSpec::ReactionDiffusion {
        grid,
        domain,
        d1,
        d2,
        beta,
    } = *spec
    else {
        unreachable!("called with a mechanical system");
    };
    let cells = grid * grid;
    if state.len() != 2 * cells {
        return Err(Error::Contract(format!(
            "reaction-diffusion state must have {} entries, got {}",
            2 * cells,
            state.len()
        )));
    }
    let (u, v) = state.values().split_at(cells);
    let inv_h2 = (grid as f64 / domain).powi(2);
    let lap = |f: &[f64], i: usize, j: usize| {
        let up = (i + grid - 1) % grid;
        let down = (i + 1) % grid;
        let left = (j + grid - 1) % grid;
        let right = (j + 1) % grid;
        (f[up * grid + j] + f[down * grid + j] + f[i * grid + left] + f[i * grid + right] - 4.0 * f[i * grid + j])
            * inv_h2
    };
    let mut out = vec![0.0; 2 * cells];
    for i in 0..grid {
        for j in 0..grid {
            let k = i * grid + j;
            let a2 = u[k] * u[k] + v[k] * v[k];
            out[k] = (1.0 - a2) * u[k] + beta * a2 * v[k] + d1 * lap(u, i, j);
            out[cells + k] = -beta * a2 * u[k] + (1.0 - a2) * v[k] + d2 * lap(v, i, j);
        }
    }
    Ok(StateVector::new(out))
}

/// One-armed spiral `u + iv = tanh(r)·exp(i(φ + phase − r))` centred at `center`.
pub(super) fn spiral(spec: &SystemSpec, phase: f64, center: (f64, f64)) -> StateVector {
    let SystemSpec::ReactionDiffusion { grid, domain, .. } = *spec else {
        unreachable!("called with a mechanical system");
    };
    let cells = grid * grid;
    let h = domain / grid as f64;
    let mut out = vec![0.0; 2 * cells];
    for i in 0..grid {
        for j in 0..grid {
            let y = -domain / 2.0 + (i as f64 + 0.5) * h - center.1;
            let x = -domain / 2.0 + (j as f64 + 0.5) * h - center.0;
            let r = (x * x + y * y).sqrt();
            let angle = y.atan2(x) + phase - r;
            out[i * grid + j] = r.tanh() * angle.cos();
            out[cells + i * grid + j] = r.tanh() * angle.sin();
        }
    }
    StateVector::new(out)
}
