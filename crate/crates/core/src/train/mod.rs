//! Training loops, the baseline and physics-informed pipelines, active
//! dimension counting and latent-trace analysis.

mod outer;
mod traces;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynsys::{simulate_with, InitialConditions, Integrator, MomentumInit, SystemKind, SystemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::idest::{dof_round, mle_id, IdEstimate, PointCloud};
use crate::models::{
    total_loss, InnerBatch, InnerModel, LossTerms, LossWeights, OuterAE, ResidualPoint, Variant, VARIATIONAL_LATENT,
};
use crate::numcore::{AdamState, Graph, ParamSet, Rng, Tensor};
use crate::render::{Dataset, DatasetMode, SampleRef, Split};

pub use outer::{train_outer, OuterRun};
pub use traces::{
    conservation_metric, correlation_report, export_traces, hamiltonian_conservation_metric, pearson, trajectory_means,
    write_trace_svg, Correlation, CorrelationReport, LatentTrace,
};

/// Child streams of the training seed.
const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;
const SUBSAMPLE_STREAM: u64 = 4;

/// Everything a training run needs besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Inner model trained by the command-line `train-inner`.
    pub variant: Variant,
    /// Reconstruction weight of the variational variants; unset means the
    /// per-system default.
    pub beta: Option<f64>,
    /// Inner-model epochs.
    pub epochs: usize,
    pub outer_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub outer_lr: f64,
    pub seed: u64,
    pub variance_threshold: f64,
    /// Latent width override; unset means `dof_round(ID)` for the
    /// deterministic variants and 10 for the variational ones.
    pub latent_width: Option<usize>,
    pub id_k1: usize,
    pub id_k2: usize,
    pub id_max_points: usize,
    /// Caps the number of training samples per epoch pool.
    pub max_train_samples: Option<usize>,
    /// Finite-difference step of the second-order and Hamilton terms, in frames.
    pub dt: f64,
    pub residual_point: ResidualPoint,
    /// Outer training stops after this many consecutive epochs with
    /// validation error below `early_stop_threshold`.
    pub early_stop_patience: usize,
    pub early_stop_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Variant::PiVae,
            beta: None,
            epochs: 1000,
            outer_epochs: 200,
            batch_size: 256,
            lr: 1e-3,
            outer_lr: 1e-3,
            seed: 0,
            variance_threshold: 0.01,
            latent_width: None,
            id_k1: 10,
            id_k2: 20,
            id_max_points: 10_000,
            max_train_samples: None,
            dt: 1.0,
            residual_point: ResidualPoint::Start,
            early_stop_patience: 10,
            early_stop_threshold: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: format!("train.{key}"),
                msg: msg.into(),
            })
        };
        if matches!(self.beta, Some(b) if !(b > 0.0 && b.is_finite())) {
            return bad("beta", "must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1");
        }
        if self.outer_epochs == 0 {
            return bad("outer_epochs", "must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.lr > 0.0) {
            return bad("lr", "must be positive");
        }
        if !(self.outer_lr > 0.0) {
            return bad("outer_lr", "must be positive");
        }
        if !(self.variance_threshold > 0.0) {
            return bad("variance_threshold", "must be positive");
        }
        if self.id_k1 < 2 || self.id_k1 > self.id_k2 {
            return bad("id_k1", "k-range must satisfy 2 ≤ id_k1 ≤ id_k2");
        }
        if self.id_max_points <= self.id_k2 {
            return bad("id_max_points", "must exceed id_k2");
        }
        if !(self.dt > 0.0) {
            return bad("dt", "must be positive");
        }
        if matches!(self.latent_width, Some(0)) {
            return bad("latent_width", "must be positive");
        }
        Ok(())
    }

    /// β for `variant` on `system`.
    pub fn resolve_beta(&self, variant: Variant, system: Option<SystemKind>) -> Result<f64> {
        if let Some(b) = self.beta {
            return Ok(b);
        }
        let table = |k: SystemKind| k.default_beta();
        match (variant, system) {
            (Variant::Baseline | Variant::PiAe, _) => Ok(1.0),
            (Variant::PiVae, Some(k)) => Ok(table(k).0),
            (Variant::HpiVae, Some(k)) => Ok(table(k).1),
            (_, None) => Err(Error::Config {
                key: "train.beta".into(),
                msg: "the dataset names no known system; set β explicitly".into(),
            }),
        }
    }

    pub fn weights(&self, beta: f64) -> LossWeights {
        LossWeights {
            beta,
            dt: self.dt,
            residual_point: self.residual_point,
            ..Default::default()
        }
    }
}

/// How a batch of trajectories is simulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub trajectories: usize,
    pub frames: usize,
    /// Seconds between frames (model time units for reaction–diffusion).
    pub dt_frame: f64,
    pub substeps: usize,
    pub integrator: Option<Integrator>,
    pub initial: InitialConditions,
    pub seed: u64,
}

/// Frame interval of the pipeline's datasets. Consecutive-frame differences
/// of position latents must stay well above the variance threshold.
pub const PIPELINE_DT_FRAME: f64 = 0.3;

impl Default for SimulationConfig {
    /// 100 trajectories of 100 frames, 0.3 s apart, starting from random
    /// velocities below 80 % of the arm-flip energy.
    fn default() -> Self {
        Self {
            trajectories: 100,
            frames: 100,
            dt_frame: PIPELINE_DT_FRAME,
            substeps: 50,
            integrator: None,
            initial: InitialConditions {
                momentum: MomentumInit::Random { rate: 1.0 },
                energy_cap: Some(0.8),
                ..Default::default()
            },
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| {
            Err(Error::Config {
                key: format!("simulation.{key}"),
                msg: msg.into(),
            })
        };
        if self.trajectories == 0 {
            return bad("trajectories", "must be at least 1");
        }
        if self.frames < 2 {
            return bad("frames", "must be at least 2");
        }
        if !(self.dt_frame > 0.0 && self.dt_frame.is_finite()) {
            return bad("dt_frame", "must be positive");
        }
        if self.substeps == 0 {
            return bad("substeps", "must be at least 1");
        }
        Ok(())
    }

    /// Trajectory `i` draws its initial condition from child stream `i` of
    /// the seed, so any subset can be regenerated independently.
    pub fn simulate_one(&self, spec: &SystemSpec, i: usize) -> Result<Trajectory> {
        let mut rng = Rng::new(self.seed).split(i as u64);
        let s0 = self.initial.sample(spec, &mut rng);
        let integrator = self.integrator.unwrap_or_else(|| Integrator::default_for(spec));
        simulate_with(spec, &s0, self.frames, self.dt_frame, self.substeps, integrator)
    }

    pub fn simulate(&self, spec: &SystemSpec) -> Result<Vec<Trajectory>> {
        self.validate()?;
        (0..self.trajectories).map(|i| self.simulate_one(spec, i)).collect()
    }
}

/// One 64-float compact representation per sample, ordered by
/// (trajectory, frame).
#[derive(Clone, Debug, PartialEq)]
pub struct CompactSet {
    pub values: Tensor,
    pub index: Vec<SampleRef>,
    pub splits: Vec<Split>,
    successors: Vec<Option<usize>>,
}

impl CompactSet {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    /// Row of the next sample in the same trajectory.
    pub fn successor(&self, i: usize) -> Option<usize> {
        self.successors[i]
    }

    pub fn rows_in(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn gather(&self, rows: &[usize]) -> Tensor {
        let w = self.width();
        let mut data = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Tensor::new(vec![rows.len(), w], data).expect("rows of equal width")
    }

    pub fn point_cloud(&self) -> Result<PointCloud> {
        PointCloud::new(self.width(), self.values.data().to_vec())
    }
}

/// Compact representations of every sample: the outer model's latent of the
/// input pair in frames mode, the stored embedding in vectors mode.
pub fn compute_outer_latents(dataset: &Dataset, outer: Option<(&OuterAE, &ParamSet)>) -> Result<CompactSet> {
    let mut index = Vec::new();
    for (traj, _) in dataset.trajectories.iter().enumerate() {
        index.extend(dataset.trajectory_samples(traj));
    }
    let splits = index.iter().map(|s| dataset.trajectories[s.traj].0.split).collect();
    let mut successors = vec![None; index.len()];
    for i in 0..index.len().saturating_sub(1) {
        if dataset.successor(index[i]) == Some(index[i + 1]) {
            successors[i] = Some(i + 1);
        }
    }
    let values = match (dataset.manifest.mode, outer) {
        (DatasetMode::Vectors, _) => {
            let w = dataset.manifest.observation_shape[0];
            let mut data = Vec::with_capacity(index.len() * w);
            for s in &index {
                data.extend_from_slice(dataset.observation(s.traj, s.frame));
            }
            Tensor::new(vec![index.len(), w], data)?
        }
        (DatasetMode::Frames, None) => {
            return Err(Error::Contract("frames-mode latents need a trained outer model".into()));
        }
        (DatasetMode::Frames, Some((model, params))) => {
            const CHUNK: usize = 128;
            let mut data = Vec::with_capacity(index.len() * crate::models::OUTER_LATENT);
            for chunk in index.chunks(CHUNK) {
                let (input, _) = dataset.frame_batch(chunk)?;
                data.extend(model.latents(params, &input)?.into_data());
            }
            Tensor::new(vec![index.len(), crate::models::OUTER_LATENT], data)?
        }
    };
    Ok(CompactSet {
        values,
        index,
        splits,
        successors,
    })
}

/// Per-epoch means of the loss terms plus run metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<LossTerms>,
    /// Validation reconstruction error of the final parameters (posterior
    /// means decoded, no sampling).
    pub val_recon: f64,
    /// Kept out of serialized reports so reruns write identical files.
    #[serde(skip)]
    pub wall_time_s: f64,
    pub seed: u64,
    pub config_hash: String,
    pub logvar_clipped: bool,
}

/// Active-dimension analysis of one trained inner model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DofReport {
    pub system: Option<SystemKind>,
    pub variant: Variant,
    pub latent_width: usize,
    /// Variance of each posterior-mean coordinate over the validation split.
    pub variances: Vec<f64>,
    /// Mean KL contribution of each coordinate over the validation split.
    pub kl_per_dim: Option<Vec<f64>>,
    pub threshold: f64,
    pub active: usize,
    pub mask: Vec<bool>,
    pub raw_id: Option<f64>,
    pub dof_from_id: Option<usize>,
    pub ground_truth: Option<usize>,
    /// The variational variants compare the active count with the ground
    /// truth; the others compare `dof_round(ID)`.
    pub pass: Option<bool>,
    pub val_recon: f64,
}

/// Dimensions with variance at or above `threshold`.
pub fn count_active_dims(variances: &[f64], threshold: f64) -> Result<(usize, Vec<bool>)> {
    if !(threshold > 0.0) {
        return Err(Error::Contract(format!("threshold must be positive, got {threshold}")));
    }
    let mask: Vec<bool> = variances.iter().map(|&v| v >= threshold).collect();
    Ok((mask.iter().filter(|&&m| m).count(), mask))
}

fn column_variances(t: &Tensor) -> Result<Vec<f64>> {
    let (n, w) = t.dims2()?;
    if n < 2 {
        return Err(Error::Contract("variance needs at least two samples".into()));
    }
    Ok((0..w)
        .map(|c| {
            let mean = (0..n).map(|r| t.row(r)[c]).sum::<f64>() / n as f64;
            (0..n).map(|r| (t.row(r)[c] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        })
        .collect())
}

/// FNV-1a of the resolved configuration JSON.
pub fn config_hash(config: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let h = bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    });
    Ok(format!("{h:016x}"))
}

/// A trained inner model and its analysis.
#[derive(Clone, Debug)]
pub struct InnerRun {
    pub model: InnerModel,
    pub params: ParamSet,
    pub train: TrainReport,
    pub dof: DofReport,
    pub id: Option<IdEstimate>,
}

/// Training rows: every train-split sample, restricted to those with a
/// successor when the variant needs pairs.
fn training_rows(compact: &CompactSet, variant: Variant, config: &TrainConfig) -> Result<Vec<usize>> {
    let mut rows: Vec<usize> = compact
        .rows_in(Split::Train)
        .into_iter()
        .filter(|&r| !variant.is_second_order() || compact.successor(r).is_some())
        .collect();
    if let Some(max) = config.max_train_samples {
        if rows.len() > max {
            Rng::new(config.seed).split(SUBSAMPLE_STREAM).shuffle(&mut rows);
            rows.truncate(max);
            rows.sort_unstable();
        }
    }
    if rows.is_empty() {
        return Err(Error::Contract("no training samples".into()));
    }
    Ok(rows)
}

fn batch_for(compact: &CompactSet, rows: &[usize], variant: Variant) -> InnerBatch {
    InnerBatch {
        x: compact.gather(rows),
        x_next: variant.is_second_order().then(|| {
            let next: Vec<usize> = rows.iter().map(|&r| compact.successor(r).expect("filtered")).collect();
            compact.gather(&next)
        }),
    }
}

/// Trains `model` with Adam on the train split of `compact`.
pub fn train_inner(
    model: &InnerModel,
    compact: &CompactSet,
    config: &TrainConfig,
    beta: f64,
) -> Result<(ParamSet, TrainReport)> {
    config.validate()?;
    if compact.width() != model.input_width {
        return Err(Error::Contract(format!(
            "compact width {} does not match model input {}",
            compact.width(),
            model.input_width
        )));
    }
    let start = Instant::now();
    let root = Rng::new(config.seed);
    let mut params = model.init(&mut root.split(INIT_STREAM));
    let mut shuffle = root.split(SHUFFLE_STREAM);
    let mut noise = root.split(NOISE_STREAM);
    let mut adam = AdamState::new(config.lr);
    let weights = config.weights(beta);
    let mut rows = training_rows(compact, model.variant, config)?;
    let mut history = Vec::with_capacity(config.epochs);
    let mut clipped = false;
    for epoch in 0..config.epochs {
        shuffle.shuffle(&mut rows);
        let mut sum = LossTerms::default();
        let mut seen = 0usize;
        for chunk in rows.chunks(config.batch_size) {
            let batch = batch_for(compact, chunk, model.variant);
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let out = total_loss(&mut g, model, &bound, &batch, &weights, Some(&mut noise))?;
            if !out.terms.total.is_finite() {
                return Err(Error::Divergence(format!("non-finite loss at epoch {epoch}")));
            }
            clipped |= out.logvar_clipped;
            g.backward(out.total)?;
            adam.step(&mut params, &bound.grads(&g))?;
            let n = chunk.len() as f64;
            sum.recon += out.terms.recon * n;
            sum.kl += out.terms.kl * n;
            sum.second_order += out.terms.second_order * n;
            sum.hamilton += out.terms.hamilton * n;
            sum.total += out.terms.total * n;
            seen += chunk.len();
        }
        let n = seen as f64;
        history.push(LossTerms {
            recon: sum.recon / n,
            kl: sum.kl / n,
            second_order: sum.second_order / n,
            hamilton: sum.hamilton / n,
            total: sum.total / n,
        });
        if epoch % 100 == 0 || epoch + 1 == config.epochs {
            log::debug!("{} epoch {epoch}: {:?}", model.variant, history.last().unwrap());
        }
    }
    let val_recon = validation_recon(model, &params, compact)?;
    Ok((
        params,
        TrainReport {
            history,
            val_recon,
            wall_time_s: start.elapsed().as_secs_f64(),
            seed: config.seed,
            config_hash: config_hash(config)?,
            logvar_clipped: clipped,
        },
    ))
}

/// Rows used for evaluation: the validation split, or every row when the
/// dataset has no validation trajectories.
fn evaluation_rows(compact: &CompactSet) -> Vec<usize> {
    let val = compact.rows_in(Split::Val);
    if val.len() >= 2 {
        val
    } else {
        (0..compact.len()).collect()
    }
}

/// Mean squared reconstruction error of decoded posterior means.
pub fn validation_recon(model: &InnerModel, params: &ParamSet, compact: &CompactSet) -> Result<f64> {
    let x = compact.gather(&evaluation_rows(compact));
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let xi = g.constant(x);
    let enc = model.encode(&mut g, &bound, xi)?;
    let y = model.decode(&mut g, &bound, enc.mu)?;
    let l = crate::models::reconstruction_loss(&mut g, y, xi)?;
    g.value(l).item()
}

/// Per-dimension variance of validation posterior means, per-dimension KL
/// and the active mask.
pub fn analyze_latents(
    model: &InnerModel,
    params: &ParamSet,
    compact: &CompactSet,
    threshold: f64,
) -> Result<(Vec<f64>, Option<Vec<f64>>, usize, Vec<bool>)> {
    let x = compact.gather(&evaluation_rows(compact));
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let xi = g.constant(x);
    let enc = model.encode(&mut g, &bound, xi)?;
    let mu = g.value(enc.mu).clone();
    let variances = column_variances(&mu)?;
    let kl = enc.logvar.map(|lv| {
        let lv = g.value(lv);
        let (n, w) = (mu.shape()[0], mu.shape()[1]);
        (0..w)
            .map(|c| {
                (0..n)
                    .map(|r| {
                        let (m, l) = (mu.row(r)[c], lv.row(r)[c]);
                        0.5 * (m * m + l.exp() - l - 1.0)
                    })
                    .sum::<f64>()
                    / n as f64
            })
            .collect()
    });
    let (active, mask) = count_active_dims(&variances, threshold)?;
    Ok((variances, kl, active, mask))
}

/// ID of the compact representations on at most `id_max_points` points.
pub fn estimate_id(compact: &CompactSet, config: &TrainConfig) -> Result<IdEstimate> {
    let cloud = compact.point_cloud()?.subsample(config.id_max_points, config.seed);
    mle_id(&cloud, config.id_k1, config.id_k2)
}

fn system_of(dataset: &Dataset) -> Option<SystemKind> {
    dataset.manifest.system.as_ref().map(SystemSpec::kind)
}

fn run_inner(
    dataset: &Dataset,
    compact: &CompactSet,
    config: &TrainConfig,
    variant: Variant,
    id: Option<IdEstimate>,
) -> Result<InnerRun> {
    config.validate()?;
    let system = system_of(dataset);
    let dof_from_id = id.as_ref().map(|e| dof_round(e.value)).transpose()?;
    let latent_width = match (config.latent_width, variant.is_variational()) {
        (Some(w), _) => w,
        (None, true) => VARIATIONAL_LATENT,
        (None, false) => {
            dof_from_id.ok_or_else(|| Error::Contract(format!("{variant} needs an ID estimate for its width")))?
        }
    };
    let model = InnerModel::new(variant, compact.width(), latent_width)?;
    let beta = config.resolve_beta(variant, system)?;
    log::info!("training {variant} (latent {latent_width}, β = {beta})");
    let (params, train) = train_inner(&model, compact, config, beta)?;
    let (variances, kl_per_dim, active, mask) = analyze_latents(&model, &params, compact, config.variance_threshold)?;
    let ground_truth = system.map(SystemKind::dof);
    let pass = ground_truth.and_then(|gt| {
        if variant.is_variational() {
            Some(active == gt)
        } else {
            dof_from_id.map(|d| d == gt)
        }
    });
    let dof = DofReport {
        system,
        variant,
        latent_width,
        variances,
        kl_per_dim,
        threshold: config.variance_threshold,
        active,
        mask,
        raw_id: id.as_ref().map(|e| e.value),
        dof_from_id,
        ground_truth,
        pass,
        val_recon: train.val_recon,
    };
    Ok(InnerRun {
        model,
        params,
        train,
        dof,
        id,
    })
}

/// ID estimate, then a baseline inner autoencoder of width `dof_round(ID)`.
pub fn run_baseline(dataset: &Dataset, compact: &CompactSet, config: &TrainConfig) -> Result<InnerRun> {
    let id = estimate_id(compact, config)?;
    log::info!("intrinsic dimension {:.3} → {}", id.value, dof_round(id.value)?);
    run_inner(dataset, compact, config, Variant::Baseline, Some(id))
}

/// Trains a physics-informed variant. `id` is required for PI-AE unless
/// the config fixes the latent width.
pub fn run_variant(
    dataset: &Dataset,
    compact: &CompactSet,
    config: &TrainConfig,
    variant: Variant,
    id: Option<IdEstimate>,
) -> Result<InnerRun> {
    if variant == Variant::Baseline {
        return run_baseline(dataset, compact, config);
    }
    let id = match (variant, id, config.latent_width) {
        (Variant::PiAe, None, None) => Some(estimate_id(compact, config)?),
        (_, id, _) => id,
    };
    run_inner(dataset, compact, config, variant, id)
}

/// Writes `report.json` with the training and DOF reports of a run.
pub fn write_report(path: &Path, run: &InnerRun) -> Result<()> {
    #[derive(Serialize)]
    struct Report<'a> {
        train: &'a TrainReport,
        dof: &'a DofReport,
        id: Option<&'a IdEstimate>,
    }
    let r = Report {
        train: &run.train,
        dof: &run.dof,
        id: run.id.as_ref(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&r)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{build_dataset, DatasetConfig};

    #[test]
    fn active_count_examples() {
        assert_eq!(count_active_dims(&[0.8, 0.5, 0.009, 1e-4], 0.01).unwrap().0, 2);
        assert_eq!(count_active_dims(&[0.0; 5], 0.01).unwrap().0, 0);
        let (n, mask) = count_active_dims(&[0.01], 0.01).unwrap();
        assert_eq!((n, mask), (1, vec![true]));
        assert!(count_active_dims(&[1.0], 0.0).is_err());
    }

    #[test]
    fn beta_defaults_follow_table() {
        let c = TrainConfig::default();
        assert_eq!(
            c.resolve_beta(Variant::PiVae, Some(SystemKind::DoublePendulum))
                .unwrap(),
            30.0
        );
        assert_eq!(
            c.resolve_beta(Variant::HpiVae, Some(SystemKind::DoublePendulum))
                .unwrap(),
            40.0
        );
        assert_eq!(
            c.resolve_beta(Variant::PiVae, Some(SystemKind::SinglePendulum))
                .unwrap(),
            17.0
        );
        assert_eq!(
            c.resolve_beta(Variant::HpiVae, Some(SystemKind::ElasticPendulum))
                .unwrap(),
            80.0
        );
        assert!(c.resolve_beta(Variant::PiVae, None).is_err());
        let fixed = TrainConfig {
            beta: Some(3.0),
            ..Default::default()
        };
        assert_eq!(fixed.resolve_beta(Variant::HpiVae, None).unwrap(), 3.0);
    }

    #[test]
    fn config_validation_names_key() {
        let c = TrainConfig {
            variance_threshold: 0.0,
            ..Default::default()
        };
        match c.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "train.variance_threshold"),
            other => panic!("{other:?}"),
        }
    }

    fn vectors_dataset(dir: &Path, n: usize, frames: usize) -> Dataset {
        let spec = SystemKind::SinglePendulum.default_spec();
        let sim = SimulationConfig {
            trajectories: n,
            frames,
            seed: 3,
            ..Default::default()
        };
        let trajs = sim.simulate(&spec).unwrap();
        let cfg = DatasetConfig {
            mode: DatasetMode::Vectors,
            ..Default::default()
        };
        build_dataset(&trajs, &cfg, 4, dir).unwrap();
        Dataset::load(dir).unwrap()
    }

    #[test]
    fn vectors_latents_pass_through() {
        let dir = tempfile::tempdir().unwrap();
        let ds = vectors_dataset(dir.path(), 10, 20);
        let c = compute_outer_latents(&ds, None).unwrap();
        assert_eq!(c.len(), ds.manifest.sample_counts.total());
        for (i, s) in c.index.iter().enumerate() {
            assert_eq!(c.row(i), ds.observation(s.traj, s.frame));
            match c.successor(i) {
                Some(j) => assert_eq!(Some(c.index[j]), ds.successor(*s)),
                None => assert!(ds.successor(*s).is_none()),
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_decreases() {
        let dir = tempfile::tempdir().unwrap();
        let ds = vectors_dataset(dir.path(), 10, 30);
        let c = compute_outer_latents(&ds, None).unwrap();
        let config = TrainConfig {
            epochs: 20,
            batch_size: 64,
            ..Default::default()
        };
        let model = InnerModel::new(Variant::HpiVae, 64, 4).unwrap();
        let (p1, r1) = train_inner(&model, &c, &config, 20.0).unwrap();
        let (p2, r2) = train_inner(&model, &c, &config, 20.0).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r1.history, r2.history);
        assert_eq!(r1.history.len(), 20);
        assert!(r1.history.last().unwrap().total < r1.history[0].total);
    }
}
