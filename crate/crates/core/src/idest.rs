//! Maximum-likelihood intrinsic dimension (Levina–Bickel) with brute-force
//! nearest neighbours.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Rng;

/// Points closer than this count as duplicates.
const DUPLICATE_DISTANCE: f64 = 1e-12;
/// Duplicates are moved by this fraction of the cloud's bounding-box diagonal.
const JITTER_FRACTION: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!(
                "{} values do not form points of width {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point cloud".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("ragged point rows".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// At most `max` points chosen without replacement by a seeded shuffle,
    /// kept in their original order.
    pub fn subsample(&self, max: usize, seed: u64) -> PointCloud {
        if self.len() <= max {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        Rng::new(seed).shuffle(&mut idx);
        idx.truncate(max);
        idx.sort_unstable();
        let data = idx.iter().flat_map(|&i| self.point(i).iter().copied()).collect();
        PointCloud { dim: self.dim, data }
    }

    fn diameter_bound(&self) -> f64 {
        (0..self.dim)
            .map(|c| {
                let (lo, hi) = (0..self.len())
                    .map(|i| self.data[i * self.dim + c])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                (hi - lo).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    fn jitter(&mut self, points: &[usize], seed: u64) {
        let scale = JITTER_FRACTION * self.diameter_bound().max(1.0);
        let dim = self.dim;
        for &i in points {
            let mut rng = Rng::new(seed).split(i as u64);
            for v in &mut self.data[i * dim..(i + 1) * dim] {
                *v += scale * rng.uniform(-1.0, 1.0);
            }
        }
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn by_distance_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// The `k` nearest neighbours of point `query` (itself excluded) as
/// `(distance, index)`, ascending, ties broken by index.
pub fn knn_indexed(points: &PointCloud, query: usize, k: usize) -> Result<Vec<(f64, usize)>> {
    let n = points.len();
    if query >= n {
        return Err(Error::Contract(format!("query {query} outside a cloud of {n} points")));
    }
    if k == 0 || k >= n {
        return Err(Error::Contract(format!("k = {k} must satisfy 1 ≤ k < n = {n}")));
    }
    let q = points.point(query);
    let mut all: Vec<(f64, usize)> = (0..n)
        .filter(|&j| j != query)
        .map(|j| (distance(q, points.point(j)), j))
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, by_distance_then_index);
        all.truncate(k);
    }
    all.sort_unstable_by(by_distance_then_index);
    Ok(all)
}

/// Distances `T_1 ≤ … ≤ T_k` from point `query` to its nearest neighbours.
pub fn knn(points: &PointCloud, query: usize, k: usize) -> Result<Vec<f64>> {
    Ok(knn_indexed(points, query, k)?.into_iter().map(|(d, _)| d).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdEstimate {
    pub value: f64,
    pub k1: usize,
    pub k2: usize,
    /// Point-averaged estimate for each `k ∈ [k1, k2]`.
    pub per_k: Vec<f64>,
    pub n_used: usize,
    /// Points moved off exact duplicates before estimation.
    pub jittered: usize,
}

impl IdEstimate {
    /// Diagnostic table `k,id_k`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "k,id_k")?;
        for (k, v) in (self.k1..=self.k2).zip(&self.per_k) {
            writeln!(w, "{k},{v}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `m̂_k(x) = [(1/(k−1)) Σ_{j<k} ln(T_k/T_j)]⁻¹`, averaged over points, then
/// over `k ∈ [k1, k2]`.
pub fn mle_id(points: &PointCloud, k1: usize, k2: usize) -> Result<IdEstimate> {
    let n = points.len();
    if k1 < 2 || k1 > k2 || k2 >= n {
        return Err(Error::Contract(format!(
            "k-range [{k1}, {k2}] must satisfy 2 ≤ k1 ≤ k2 < n = {n}"
        )));
    }
    let mut cloud = points.clone();
    let mut neighbours = all_knn(&cloud, k2)?;
    let duplicates: Vec<usize> = (0..n).filter(|&i| neighbours[i][0] <= DUPLICATE_DISTANCE).collect();
    if !duplicates.is_empty() {
        log::warn!("{} duplicate points jittered before ID estimation", duplicates.len());
        cloud.jitter(&duplicates, n as u64);
        neighbours = all_knn(&cloud, k2)?;
    }
    let mut per_k = Vec::with_capacity(k2 - k1 + 1);
    for k in k1..=k2 {
        let mut total = 0.0;
        for (i, t) in neighbours.iter().enumerate() {
            if t[0] <= 0.0 {
                return Err(Error::Numerical(format!(
                    "point {i} still has a zero neighbour distance after jitter"
                )));
            }
            let s: f64 = t[..k - 1].iter().map(|tj| (t[k - 1] / tj).ln()).sum::<f64>() / (k - 1) as f64;
            if s <= 0.0 {
                return Err(Error::Numerical(format!(
                    "point {i}: its {k} nearest neighbours are equidistant"
                )));
            }
            total += 1.0 / s;
        }
        per_k.push(total / n as f64);
    }
    let value = per_k.iter().sum::<f64>() / per_k.len() as f64;
    Ok(IdEstimate {
        value,
        k1,
        k2,
        per_k,
        n_used: n,
        jittered: duplicates.len(),
    })
}

fn all_knn(cloud: &PointCloud, k: usize) -> Result<Vec<Vec<f64>>> {
    (0..cloud.len()).map(|i| knn(cloud, i, k)).collect()
}

/// `2·round(id/2)` with halves rounded away from zero, never below 2.
pub fn dof_round(id: f64) -> Result<usize> {
    if !(id > 0.0 && id.is_finite()) {
        return Err(Error::Contract(format!(
            "intrinsic dimension must be positive, got {id}"
        )));
    }
    Ok(((id / 2.0).round() as usize * 2).max(2))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_cube(n: usize, d: usize, seed: u64) -> PointCloud {
        let mut rng = Rng::new(seed);
        PointCloud::new(d, (0..n * d).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn collinear_neighbours() {
        let pc = PointCloud::new(1, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(knn(&pc, 1, 2).unwrap(), vec![1.0, 2.0]);
        assert!(knn(&pc, 1, 3).is_err());
    }

    #[test]
    fn ties_broken_by_index() {
        let pc = PointCloud::new(1, vec![0.0, 1.0, -1.0, 2.0]).unwrap();
        let nn = knn_indexed(&pc, 0, 2).unwrap();
        assert_eq!(nn, vec![(1.0, 1), (1.0, 2)]);
    }

    #[test]
    fn knn_matches_full_sort() {
        let pc = uniform_cube(300, 4, 1);
        for q in [0, 17, 299] {
            let mut oracle: Vec<(f64, usize)> = (0..300)
                .filter(|&j| j != q)
                .map(|j| (distance(pc.point(q), pc.point(j)), j))
                .collect();
            oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
            oracle.truncate(12);
            assert_eq!(knn_indexed(&pc, q, 12).unwrap(), oracle);
        }
    }

    #[test]
    fn duplicates_are_jittered() {
        let mut rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()])
            .collect();
        rows.push(rows[5].clone());
        let pc = PointCloud::from_rows(&rows).unwrap();
        let est = mle_id(&pc, 3, 5).unwrap();
        assert_eq!(est.jittered, 2);
        assert!(est.value.is_finite() && est.value > 0.0);
    }

    #[test]
    fn evenly_spaced_segment_oracle() {
        // Frozen from an independent numpy/scipy evaluation of the same formula.
        let dir = [1.0 / 14f64.sqrt(), 2.0 / 14f64.sqrt(), 3.0 / 14f64.sqrt()];
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|i| {
                let t = i as f64 / 999.0;
                dir.iter().map(|d| t * d).collect()
            })
            .collect();
        let est = mle_id(&PointCloud::from_rows(&rows).unwrap(), 10, 20).unwrap();
        assert!((est.value - 1.2198267562285068).abs() < 1e-9, "{}", est.value);
        assert_eq!(est.per_k.len(), 11);
    }

    #[test]
    fn random_segment_near_one() {
        let mut rng = Rng::new(2);
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                let t = rng.uniform(0.0, 1.0);
                vec![t, 2.0 * t, 3.0 * t]
            })
            .collect();
        let v = mle_id(&PointCloud::from_rows(&rows).unwrap(), 10, 20).unwrap().value;
        assert!((0.9..=1.1).contains(&v), "{v}");
    }

    #[test]
    fn dof_rounding_table() {
        for (id, dof) in [
            (2.16, 2),
            (2.05, 2),
            (4.71, 4),
            (4.89, 4),
            (5.34, 6),
            (2.0, 2),
            (0.4, 2),
            (3.0, 4),
        ] {
            assert_eq!(dof_round(id).unwrap(), dof, "{id}");
        }
        assert!(dof_round(0.0).is_err());
        assert!(dof_round(-1.0).is_err());
    }

    #[test]
    fn bad_k_range() {
        let pc = uniform_cube(20, 2, 3);
        assert!(mle_id(&pc, 1, 5).is_err());
        assert!(mle_id(&pc, 6, 5).is_err());
        assert!(mle_id(&pc, 5, 20).is_err());
    }
}
