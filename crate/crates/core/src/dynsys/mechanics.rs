//! Pendulum dynamics in Hamiltonian form.
//!
//! Every pendulum here has `H(q, p) = ½ pᵀ M(q)⁻¹ p + V(q)`. With `v = M⁻¹ p`
//! Hamilton's equations become `q̇ = v` and `ṗ_k = ½ vᵀ (∂M/∂q_k) v − ∂V/∂q_k`.
//! Potential energy is zero at the pivot height.

use nalgebra::{DMatrix, DVector};

use super::{StateVector, SystemSpec};
use crate::error::{Error, Result};

struct Mechanics {
    mass: DMatrix<f64>,
    dmass: Vec<DMatrix<f64>>,
    potential: f64,
    dpotential: Vec<f64>,
}

fn mechanics(spec: &SystemSpec, q: &[f64]) -> Result<Mechanics> {
    match *spec {
        SystemSpec::SinglePendulum { mass, length, gravity } => {
            let th = q[0];
            Ok(Mechanics {
                mass: DMatrix::from_element(1, 1, mass * length * length),
                dmass: vec![DMatrix::zeros(1, 1)],
                potential: -mass * gravity * length * th.cos(),
                dpotential: vec![mass * gravity * length * th.sin()],
            })
        }
        SystemSpec::DoublePendulum {
            mass1: m1,
            mass2: m2,
            length1: l1,
            length2: l2,
            gravity: g,
        } => {
            let (t1, t2) = (q[0], q[1]);
            let d = t1 - t2;
            let c = m2 * l1 * l2;
            let mass = DMatrix::from_row_slice(2, 2, &[(m1 + m2) * l1 * l1, c * d.cos(), c * d.cos(), m2 * l2 * l2]);
            let s = c * d.sin();
            let dm1 = DMatrix::from_row_slice(2, 2, &[0.0, -s, -s, 0.0]);
            let dm2 = DMatrix::from_row_slice(2, 2, &[0.0, s, s, 0.0]);
            Ok(Mechanics {
                mass,
                dmass: vec![dm1, dm2],
                potential: -(m1 + m2) * g * l1 * t1.cos() - m2 * g * l2 * t2.cos(),
                dpotential: vec![(m1 + m2) * g * l1 * t1.sin(), m2 * g * l2 * t2.sin()],
            })
        }
        SystemSpec::ElasticPendulum {
            mass1: m1,
            mass2: m2,
            rest_length: r0,
            length2: l2,
            stiffness: k,
            gravity: g,
        } => {
            let (t1, r, t2) = (q[0], q[1], q[2]);
            if r <= 0.0 {
                return Err(Error::Instability(format!("spring length collapsed to {r}")));
            }
            let m = m1 + m2;
            let d = t1 - t2;
            let (sd, cd) = d.sin_cos();
            #[rustfmt::skip]
            let mass = DMatrix::from_row_slice(3, 3, &[
                m * r * r,        0.0,          m2 * r * l2 * cd,
                0.0,              m,            m2 * l2 * sd,
                m2 * r * l2 * cd, m2 * l2 * sd, m2 * l2 * l2,
            ]);
            #[rustfmt::skip]
            let dm_t1 = DMatrix::from_row_slice(3, 3, &[
                0.0,                0.0,          -m2 * r * l2 * sd,
                0.0,                0.0,          m2 * l2 * cd,
                -m2 * r * l2 * sd,  m2 * l2 * cd, 0.0,
            ]);
            #[rustfmt::skip]
            let dm_r = DMatrix::from_row_slice(3, 3, &[
                2.0 * m * r,   0.0, m2 * l2 * cd,
                0.0,           0.0, 0.0,
                m2 * l2 * cd,  0.0, 0.0,
            ]);
            let dm_t2 = -&dm_t1;
            Ok(Mechanics {
                mass,
                dmass: vec![dm_t1, dm_r, dm_t2],
                potential: -m * g * r * t1.cos() - m2 * g * l2 * t2.cos() + 0.5 * k * (r - r0) * (r - r0),
                dpotential: vec![
                    m * g * r * t1.sin(),
                    -m * g * t1.cos() + k * (r - r0),
                    m2 * g * l2 * t2.sin(),
                ],
            })
        }
        SystemSpec::ReactionDiffusion { .. } => Err(Error::Unsupported(
            "reaction-diffusion has no mechanical Hamiltonian".into(),
        )),
    }
}

fn split(spec: &SystemSpec, state: &StateVector) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let n = spec.n_coords();
    if state.len() != 2 * n {
        return Err(Error::Contract(format!(
            "{} state must have {} entries, got {}",
            spec.kind(),
            2 * n,
            state.len()
        )));
    }
    let v = state.values();
    Ok((n, v[..n].to_vec(), v[n..].to_vec()))
}

fn velocities(m: &Mechanics, p: &[f64]) -> Result<DVector<f64>> {
    let chol = m
        .mass
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
    Ok(chol.solve(&DVector::from_column_slice(p)))
}

pub(super) fn derivative(spec: &SystemSpec, state: &StateVector) -> Result<StateVector> {
    let (n, q, p) = split(spec, state)?;
    let m = mechanics(spec, &q)?;
    let v = velocities(&m, &p)?;
    let mut out = Vec::with_capacity(2 * n);
    out.extend(v.iter().copied());
    for k in 0..n {
        let quad = (&m.dmass[k] * &v).dot(&v);
        out.push(0.5 * quad - m.dpotential[k]);
    }
    Ok(StateVector::new(out))
}

pub(super) fn hamiltonian(spec: &SystemSpec, state: &StateVector) -> Result<f64> {
    if !spec.kind().is_mechanical() {
        return Err(Error::Unsupported(format!(
            "no analytic Hamiltonian for {}",
            spec.kind()
        )));
    }
    let (_, q, p) = split(spec, state)?;
    let m = mechanics(spec, &q)?;
    let v = velocities(&m, &p)?;
    let kinetic = 0.5 * DVector::from_column_slice(&p).dot(&v);
    Ok(kinetic + m.potential)
}

/// Generalized momenta for generalized velocities `qdot` at positions `q`.
pub(super) fn momenta(spec: &SystemSpec, q: &[f64], qdot: &[f64]) -> Result<Vec<f64>> {
    let m = mechanics(spec, q)?;
    Ok((&m.mass * DVector::from_column_slice(qdot)).iter().copied().collect())
}

/// Potential and kinetic energy at positions `q` moving with velocities `qdot`.
pub(super) fn energies(spec: &SystemSpec, q: &[f64], qdot: &[f64]) -> Result<(f64, f64)> {
    let m = mechanics(spec, q)?;
    let v = DVector::from_column_slice(qdot);
    Ok((m.potential, 0.5 * (&m.mass * &v).dot(&v)))
}

/// Minimum potential energy, and the smallest energy above it at which some
/// arm can swing over the top.
pub(super) fn energy_floor_and_barrier(spec: &SystemSpec) -> Option<(f64, f64)> {
    match *spec {
        SystemSpec::SinglePendulum { mass, length, gravity } => {
            Some((-mass * gravity * length, 2.0 * mass * gravity * length))
        }
        SystemSpec::DoublePendulum {
            mass1,
            mass2,
            length1,
            length2,
            gravity,
        } => Some((
            -(mass1 + mass2) * gravity * length1 - mass2 * gravity * length2,
            2.0 * gravity * (mass2 * length2).min((mass1 + mass2) * length1),
        )),
        SystemSpec::ElasticPendulum {
            mass1,
            mass2,
            rest_length,
            length2,
            stiffness,
            gravity,
        } => {
            let m = mass1 + mass2;
            let r_eq = rest_length + m * gravity / stiffness;
            let floor =
                -m * gravity * r_eq - mass2 * gravity * length2 + 0.5 * stiffness * (r_eq - rest_length).powi(2);
            Some((floor, 2.0 * gravity * (mass2 * length2).min(m * rest_length)))
        }
        SystemSpec::ReactionDiffusion { .. } => None,
    }
}

/// Bob positions `(x, y)` relative to the pivot, y pointing up.
pub fn bob_positions(spec: &SystemSpec, state: &StateVector) -> Result<Vec<(f64, f64)>> {
    let v = state.values();
    match *spec {
        SystemSpec::SinglePendulum { length, .. } => Ok(vec![(length * v[0].sin(), -length * v[0].cos())]),
        SystemSpec::DoublePendulum { length1, length2, .. } => {
            let b1 = (length1 * v[0].sin(), -length1 * v[0].cos());
            Ok(vec![b1, (b1.0 + length2 * v[1].sin(), b1.1 - length2 * v[1].cos())])
        }
        SystemSpec::ElasticPendulum { length2, .. } => {
            let (t1, r, t2) = (v[0], v[1], v[2]);
            let b1 = (r * t1.sin(), -r * t1.cos());
            Ok(vec![b1, (b1.0 + length2 * t2.sin(), b1.1 - length2 * t2.cos())])
        }
        SystemSpec::ReactionDiffusion { .. } => Err(Error::Unsupported("reaction-diffusion has no bobs".into())),
    }
}
