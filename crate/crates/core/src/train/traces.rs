use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{InnerModel, OuterAE};
use crate::numcore::{ParamSet, Tensor};
use crate::render::{Dataset, DatasetMode, SampleRef};

/// Latent time series of one trajectory with its ground-truth overlays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentTrace {
    pub trajectory_id: usize,
    pub times: Vec<f64>,
    /// Latent coordinates included (the active ones).
    pub dims: Vec<usize>,
    /// Posterior means per included dimension, min-max scaled to [−1, 1].
    pub latents: Vec<Vec<f64>>,
    /// `(min, max)` of each included dimension before scaling.
    pub scaling: Vec<(f64, f64)>,
    pub overlay_names: Vec<String>,
    /// Unscaled overlay series.
    pub overlays: Vec<Vec<f64>>,
}

impl LatentTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Undoes the min-max scaling of included dimension `k`.
    pub fn unscaled(&self, k: usize) -> Vec<f64> {
        let (lo, hi) = self.scaling[k];
        self.latents[k]
            .iter()
            .map(|&v| lo + (v + 1.0) * 0.5 * (hi - lo))
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("t");
        for d in &self.dims {
            write!(s, ",z{d}").unwrap();
        }
        for n in &self.overlay_names {
            write!(s, ",aux_{n}").unwrap();
        }
        s.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            write!(s, "{t}").unwrap();
            for l in &self.latents {
                write!(s, ",{}", l[i]).unwrap();
            }
            for o in &self.overlays {
                write!(s, ",{}", o[i]).unwrap();
            }
            s.push('\n');
        }
        fs::write(path, s)?;
        Ok(())
    }
}

/// Affine map of `values` onto [−1, 1]; constant series map to 0.
fn min_max_scale(values: &[f64]) -> (Vec<f64>, (f64, f64)) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let scaled = values
        .iter()
        .map(|&v| if span > 0.0 { 2.0 * (v - lo) / span - 1.0 } else { 0.0 })
        .collect();
    (scaled, (lo, hi))
}

/// Compact representation of every frame of trajectory `traj` that has
/// one: each frame in vectors mode, each consecutive pair in frames mode.
fn trajectory_compact(dataset: &Dataset, traj: usize, outer: Option<(&OuterAE, &ParamSet)>) -> Result<Tensor> {
    let frames = dataset.data(traj).frames();
    match (dataset.manifest.mode, outer) {
        (DatasetMode::Vectors, _) => Ok(dataset.data(traj).observations.clone()),
        (DatasetMode::Frames, Some((model, params))) => {
            let samples: Vec<SampleRef> = (0..frames - 1).map(|frame| SampleRef { traj, frame }).collect();
            let mut data = Vec::new();
            for chunk in samples.chunks(128) {
                let mut inputs = Vec::new();
                for s in chunk {
                    inputs.extend_from_slice(dataset.observation(s.traj, s.frame));
                    inputs.extend_from_slice(dataset.observation(s.traj, s.frame + 1));
                }
                let mut shape = vec![chunk.len()];
                shape.extend_from_slice(&dataset.manifest.observation_shape);
                shape[1] *= 2;
                data.extend(model.latents(params, &Tensor::new(shape, inputs)?)?.into_data());
            }
            Tensor::new(vec![samples.len(), data.len() / samples.len()], data)
        }
        (DatasetMode::Frames, None) => Err(Error::Contract("frames-mode traces need a trained outer model".into())),
    }
}

/// Posterior means along trajectory `traj` (index into the dataset).
pub fn trajectory_means(
    model: &InnerModel,
    params: &ParamSet,
    dataset: &Dataset,
    traj: usize,
    outer: Option<(&OuterAE, &ParamSet)>,
) -> Result<Tensor> {
    model.posterior_means(params, &trajectory_compact(dataset, traj, outer)?)
}

/// Writes `traces/<id>.csv` and `plots/<id>.svg` under `out_dir` for each
/// requested trajectory id, keeping the dimensions selected by `mask`.
#[allow(clippy::too_many_arguments)]
pub fn export_traces(
    model: &InnerModel,
    params: &ParamSet,
    dataset: &Dataset,
    outer: Option<(&OuterAE, &ParamSet)>,
    trajectory_ids: &[usize],
    mask: &[bool],
    out_dir: &Path,
) -> Result<Vec<LatentTrace>> {
    if mask.len() != model.latent_width {
        return Err(Error::Contract(format!(
            "mask of length {} for latent width {}",
            mask.len(),
            model.latent_width
        )));
    }
    let mut dims: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if dims.is_empty() {
        log::warn!("no active dimensions; exporting all of them");
        dims = (0..mask.len()).collect();
    }
    fs::create_dir_all(out_dir.join("traces"))?;
    fs::create_dir_all(out_dir.join("plots"))?;
    let mut out = Vec::with_capacity(trajectory_ids.len());
    for &id in trajectory_ids {
        let traj = dataset
            .trajectories
            .iter()
            .position(|(e, _)| e.id == id)
            .ok_or_else(|| Error::Contract(format!("unknown trajectory id {id}")))?;
        let means = trajectory_means(model, params, dataset, traj, outer)?;
        let n = means.shape()[0];
        let dt = dataset.manifest.dt_frame;
        let mut latents = Vec::with_capacity(dims.len());
        let mut scaling = Vec::with_capacity(dims.len());
        for &d in &dims {
            let series: Vec<f64> = (0..n).map(|r| means.row(r)[d]).collect();
            let (s, range) = min_max_scale(&series);
            latents.push(s);
            scaling.push(range);
        }
        let aux = dataset.data(traj).aux.as_ref();
        let overlays = match aux {
            Some(a) => (0..a.shape()[1])
                .map(|c| (0..n).map(|r| a.row(r)[c]).collect())
                .collect(),
            None => Vec::new(),
        };
        let overlay_names = if aux.is_some() {
            dataset.manifest.aux_names.clone()
        } else {
            Vec::new()
        };
        let trace = LatentTrace {
            trajectory_id: id,
            times: (0..n).map(|i| i as f64 * dt).collect(),
            dims: dims.clone(),
            latents,
            scaling,
            overlay_names,
            overlays,
        };
        trace.write_csv(&out_dir.join("traces").join(format!("{id}.csv")))?;
        write_trace_svg(&trace, &out_dir.join("plots").join(format!("{id}.svg")))?;
        out.push(trace);
    }
    Ok(out)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot of the scaled latents (solid) and the overlays, min-max scaled
/// for display (dashed black).
pub fn write_trace_svg(trace: &LatentTrace, path: &Path) -> Result<()> {
    let (w, h, pad) = (720.0, 300.0, 40.0);
    let t_end = trace.times.last().copied().unwrap_or(0.0).max(1e-12);
    let x = |t: f64| pad + (w - 2.0 * pad) * t / t_end;
    let y = |v: f64| h / 2.0 - (h / 2.0 - pad) * v / 1.1;
    let polyline = |values: &[f64]| {
        trace
            .times
            .iter()
            .zip(values)
            .map(|(&t, &v)| format!("{:.2},{:.2}", x(t), y(v)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r##"<line x1="{pad}" y1="{0}" x2="{1}" y2="{0}" stroke="#999" stroke-width="0.5"/>"##,
        y(0.0),
        w - pad
    )
    .unwrap();
    for (name, o) in trace.overlay_names.iter().zip(&trace.overlays) {
        let (scaled, _) = min_max_scale(o);
        writeln!(
            s,
            r#"<polyline fill="none" stroke="black" stroke-width="1" stroke-dasharray="4 3" points="{}"><title>{name}</title></polyline>"#,
            polyline(&scaled)
        )
        .unwrap();
    }
    for (k, (d, l)) in trace.dims.iter().zip(&trace.latents).enumerate() {
        writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"><title>z{d}</title></polyline>"#,
            PALETTE[k % PALETTE.len()],
            polyline(l)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{pad}" y="{}" font-family="sans-serif" font-size="12">trajectory {} (t = 0 … {t_end:.2})</text>"#,
        pad / 2.0,
        trace.trajectory_id
    )
    .unwrap();
    s.push_str("</svg>\n");
    fs::write(path, s)?;
    Ok(())
}

/// Pearson correlation, `None` when either series has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "series of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::Contract("correlation needs at least 3 samples".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub latent: usize,
    pub overlay: String,
    pub r: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub trajectory_id: usize,
    pub table: Vec<Correlation>,
    /// Greedy one-to-one matching by largest |r|.
    pub assignment: Vec<Correlation>,
}

impl CorrelationReport {
    /// Largest |r| between any latent and the named overlay.
    pub fn max_abs(&self, overlay: &str) -> Option<f64> {
        self.table
            .iter()
            .filter(|c| c.overlay == overlay)
            .filter_map(|c| c.r.map(f64::abs))
            .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
    }
}

/// Pearson r of every included latent against every overlay.
pub fn correlation_report(trace: &LatentTrace) -> Result<CorrelationReport> {
    let mut table = Vec::new();
    for (d, l) in trace.dims.iter().zip(&trace.latents) {
        for (name, o) in trace.overlay_names.iter().zip(&trace.overlays) {
            table.push(Correlation {
                latent: *d,
                overlay: name.clone(),
                r: pearson(l, o)?,
            });
        }
    }
    let mut candidates: Vec<&Correlation> = table.iter().filter(|c| c.r.is_some()).collect();
    candidates.sort_by(|a, b| {
        b.r.unwrap()
            .abs()
            .total_cmp(&a.r.unwrap().abs())
            .then(a.latent.cmp(&b.latent))
            .then(a.overlay.cmp(&b.overlay))
    });
    let mut assignment: Vec<Correlation> = Vec::new();
    for c in candidates {
        if assignment
            .iter()
            .all(|a| a.latent != c.latent && a.overlay != c.overlay)
        {
            assignment.push(c.clone());
        }
    }
    Ok(CorrelationReport {
        trajectory_id: trace.trajectory_id,
        table,
        assignment,
    })
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `std(H)` along each trajectory over the std of all values pooled.
pub fn conservation_metric(series: &[Vec<f64>]) -> Vec<f64> {
    let pooled: Vec<f64> = series.iter().flatten().copied().collect();
    let spread = std_dev(&pooled) + 1e-12;
    series.iter().map(|s| std_dev(s) / spread).collect()
}

/// Conservation metric of the learned Hamiltonian along posterior-mean
/// trajectories (`frames×latent` each).
pub fn hamiltonian_conservation_metric(model: &InnerModel, params: &ParamSet, means: &[Tensor]) -> Result<Vec<f64>> {
    let series = means
        .iter()
        .map(|m| model.hamiltonian_values(params, m))
        .collect::<Result<Vec<_>>>()?;
    Ok(conservation_metric(&series))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn pearson_identities() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson(&a, &a).unwrap().unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &neg).unwrap().unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&a, &[2.0; 50]).unwrap(), None);
        assert!(pearson(&a[..2], &a[..2]).is_err());
    }

    #[test]
    fn independent_series_uncorrelated() {
        let mut rng = Rng::new(1);
        let mut hits = 0;
        for _ in 0..200 {
            let a: Vec<f64> = (0..1000).map(|_| rng.normal()).collect();
            let b: Vec<f64> = (0..1000).map(|_| rng.normal()).collect();
            hits += (pearson(&a, &b).unwrap().unwrap().abs() < 0.1) as usize;
        }
        assert!(hits >= 198, "{hits}");
    }

    #[test]
    fn scaling_is_invertible_and_bounded() {
        let v = vec![3.0, -1.0, 0.5, 2.0];
        let (s, range) = min_max_scale(&v);
        assert!(s.iter().all(|x| (-1.0..=1.0).contains(x)));
        let trace = LatentTrace {
            trajectory_id: 0,
            times: vec![0.0; 4],
            dims: vec![0],
            latents: vec![s],
            scaling: vec![range],
            overlay_names: vec![],
            overlays: vec![],
        };
        for (a, b) in trace.unscaled(0).iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_assignment() {
        let t: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let a: Vec<f64> = t.iter().map(|x| (x * 0.2).sin()).collect();
        let b: Vec<f64> = t.iter().map(|x| (x * 0.2).cos()).collect();
        let trace = LatentTrace {
            trajectory_id: 7,
            times: t,
            dims: vec![0, 3],
            latents: vec![b.clone(), a.iter().map(|v| -v).collect()],
            scaling: vec![(0.0, 1.0); 2],
            overlay_names: vec!["sin".into(), "cos".into()],
            overlays: vec![a, b],
        };
        let r = correlation_report(&trace).unwrap();
        assert_eq!(r.table.len(), 4);
        let pick = |l: usize| r.assignment.iter().find(|c| c.latent == l).unwrap();
        assert_eq!(pick(0).overlay, "cos");
        assert_eq!(pick(3).overlay, "sin");
        assert!((pick(3).r.unwrap() + 1.0).abs() < 1e-12);
        assert!((r.max_abs("cos").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_conserved() {
        let m = conservation_metric(&[vec![1.0; 10], vec![3.0; 10]]);
        assert_eq!(m, vec![0.0, 0.0]);
    }

    #[test]
    fn csv_rows_and_svg() {
        let dir = tempfile::tempdir().unwrap();
        let trace = LatentTrace {
            trajectory_id: 1,
            times: vec![0.0, 0.1, 0.2],
            dims: vec![2],
            latents: vec![vec![-1.0, 0.0, 1.0]],
            scaling: vec![(0.0, 2.0)],
            overlay_names: vec!["cos2theta".into()],
            overlays: vec![vec![1.0, 0.0, -1.0]],
        };
        let p = dir.path().join("t.csv");
        trace.write_csv(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,z2,aux_cos2theta");
        assert_eq!(lines.len(), 4);
        let svg = dir.path().join("t.svg");
        write_trace_svg(&trace, &svg).unwrap();
        let s = fs::read_to_string(svg).unwrap();
        assert!(s.contains("stroke-dasharray"));
        assert!(s.trim_end().ends_with("</svg>"));
    }
}
