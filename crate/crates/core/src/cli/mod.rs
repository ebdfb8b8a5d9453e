//! The `svlab` command-line front end. Every subcommand resolves a
//! [`CliConfig`] (defaults, `--config` file, subcommand flags, `--set`
//! overrides), validates it, then runs one pipeline stage.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use config::{flatten, parse_value, CliConfig};

use crate::dynsys::SystemKind;
use crate::error::{Error, Result};
use crate::idest::{mle_id, PointCloud};
use crate::models::{load_model, save_model, ModelMeta, OuterAE};
use crate::numcore::ParamSet;
use crate::render::{build_dataset, import_frames_dir, Dataset, DatasetMode, Split};
use crate::train::{
    compute_outer_latents, correlation_report, export_traces, hamiltonian_conservation_metric, run_variant,
    train_outer, trajectory_means, write_report, CompactSet, CorrelationReport, DofReport,
};

/// Output root when `SVLAB_RUN_DIR` is unset.
pub const DEFAULT_RUN_DIR: &str = "runs";
pub const RUN_DIR_ENV: &str = "SVLAB_RUN_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "svlab",
    version,
    about = "Discover degrees of freedom and state variables of simulated dynamical systems"
)]
pub struct Cli {
    /// JSON config file; any subset of the keys listed below
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Override one config key, e.g. `--set train.beta=12` (repeatable, applied last)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,

    /// Parallel jobs across trajectories or seeds
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    /// More logging (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate trajectories and write one CSV per trajectory
    Simulate(SimulateArgs),
    /// Simulate and render a dataset, or import a directory of PGM/PPM frames
    Dataset(DatasetArgs),
    /// Train the convolutional outer autoencoder on a frames-mode dataset
    TrainOuter(TrainOuterArgs),
    /// Estimate the intrinsic dimension of compact representations or a point CSV
    EstimateId(EstimateIdArgs),
    /// Train an inner model and count its active latent dimensions
    TrainInner(TrainInnerArgs),
    /// Correlation and conservation metrics of a trained inner run
    Eval(EvalArgs),
    /// Latent-trace CSVs and SVG plots of a trained inner run
    Plot(PlotArgs),
}

#[derive(Args, Debug, Default)]
pub struct SystemArgs {
    /// System to simulate [config: system.kind]
    #[arg(long)]
    pub system: Option<String>,
    /// Number of trajectories [config: simulation.trajectories]
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Frames per trajectory [config: simulation.frames]
    #[arg(long)]
    pub frames: Option<usize>,
    /// Seconds between frames [config: simulation.dt_frame]
    #[arg(long)]
    pub dt_frame: Option<f64>,
    /// Initial-condition seed [config: simulation.seed]
    #[arg(long)]
    pub sim_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    /// Alias of --sim-seed [config: simulation.seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [config: none; default $SVLAB_RUN_DIR/simulate]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct DatasetFlags {
    /// frames or vectors [config: dataset.mode]
    #[arg(long)]
    pub mode: Option<String>,
    /// Frame height in pixels [config: dataset.geometry.height]
    #[arg(long)]
    pub height: Option<usize>,
    /// Frame width in pixels [config: dataset.geometry.width]
    #[arg(long)]
    pub width: Option<usize>,
    /// Colour channels, 1 or 3 [config: dataset.geometry.channels]
    #[arg(long)]
    pub channels: Option<usize>,
    /// Frames between input and target pairs [config: dataset.shift]
    #[arg(long)]
    pub shift: Option<usize>,
    /// Seed of the vectors-mode embedding [config: dataset.embed_seed]
    #[arg(long)]
    pub embed_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub dataset: DatasetFlags,
    /// Alias of --sim-seed [config: simulation.seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Import `<trajectory>_<index>.(pgm|ppm)` files instead of simulating [config: none]
    #[arg(long, value_name = "DIR")]
    pub from_frames: Option<PathBuf>,
    /// Output directory [config: none; default $SVLAB_RUN_DIR/dataset]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainOuterArgs {
    /// Frames-mode dataset directory [config: none]
    #[arg(long)]
    pub data: PathBuf,
    /// Training epochs [config: train.outer_epochs]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate [config: train.outer_lr]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size [config: train.batch_size]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Training seed [config: train.seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [config: none; default $SVLAB_RUN_DIR/train-outer]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateIdArgs {
    /// Dataset directory [config: none]
    #[arg(long, required_unless_present = "points", conflicts_with = "points")]
    pub data: Option<PathBuf>,
    /// Outer checkpoint for a frames-mode dataset [config: none]
    #[arg(long)]
    pub outer: Option<PathBuf>,
    /// CSV of points, one per row; a non-numeric first row is a header [config: none]
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Smallest neighbour count [config: train.id_k1]
    #[arg(long)]
    pub k1: Option<usize>,
    /// Largest neighbour count [config: train.id_k2]
    #[arg(long)]
    pub k2: Option<usize>,
    /// Subsample cap [config: train.id_max_points]
    #[arg(long)]
    pub max_points: Option<usize>,
    /// Subsampling seed [config: train.seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [config: none; default $SVLAB_RUN_DIR/estimate-id]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainInnerArgs {
    /// baseline, pi-ae, pi-vae or hpi-vae [config: train.variant]
    #[arg(long)]
    pub variant: Option<String>,
    /// Reconstruction weight; unset uses the per-system default [config: train.beta]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Training epochs [config: train.epochs]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate [config: train.lr]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Mini-batch size [config: train.batch_size]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Latent width override [config: train.latent_width]
    #[arg(long)]
    pub latent_width: Option<usize>,
    /// Active-dimension variance threshold [config: train.variance_threshold]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Training seed [config: train.seed]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated training seeds, one run each under seed_<s>/ [config: none]
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    pub seeds: Vec<u64>,
    /// Dataset directory; when absent one is generated under <out>/data [config: none]
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Outer checkpoint for a frames-mode dataset; trained when absent [config: none]
    #[arg(long)]
    pub outer: Option<PathBuf>,
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub dataset: DatasetFlags,
    /// Output directory [config: none; default $SVLAB_RUN_DIR/train-inner]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory written by train-inner [config: none]
    #[arg(long)]
    pub run: PathBuf,
    /// Trajectory ids to evaluate; default every test trajectory [config: none]
    #[arg(long, value_delimiter = ',')]
    pub trajectories: Vec<usize>,
    /// Output directory [config: none; default the run directory]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Directory written by train-inner [config: none]
    #[arg(long)]
    pub run: PathBuf,
    /// Trajectory ids to plot; default the first test trajectory [config: none]
    #[arg(long, value_delimiter = ',')]
    pub trajectories: Vec<usize>,
    /// Output directory [config: none; default the run directory]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn push<T: Serialize>(out: &mut Vec<(String, Value)>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key.into(), serde_json::to_value(v).expect("flag values serialize")));
    }
}

impl SystemArgs {
    fn leaves(&self, out: &mut Vec<(String, Value)>) {
        push(out, "system.kind", &self.system);
        push(out, "simulation.trajectories", &self.trajectories);
        push(out, "simulation.frames", &self.frames);
        push(out, "simulation.dt_frame", &self.dt_frame);
        push(out, "simulation.seed", &self.sim_seed);
    }
}

impl DatasetFlags {
    fn leaves(&self, out: &mut Vec<(String, Value)>) {
        push(out, "dataset.mode", &self.mode);
        push(out, "dataset.geometry.height", &self.height);
        push(out, "dataset.geometry.width", &self.width);
        push(out, "dataset.geometry.channels", &self.channels);
        push(out, "dataset.shift", &self.shift);
        push(out, "dataset.embed_seed", &self.embed_seed);
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Dataset(_) => "dataset",
            Command::TrainOuter(_) => "train-outer",
            Command::EstimateId(_) => "estimate-id",
            Command::TrainInner(_) => "train-inner",
            Command::Eval(_) => "eval",
            Command::Plot(_) => "plot",
        }
    }

    /// Config keys set by this subcommand's flags.
    pub fn leaves(&self) -> Vec<(String, Value)> {
        let mut out = Vec::new();
        match self {
            Command::Simulate(a) => {
                a.system.leaves(&mut out);
                push(&mut out, "simulation.seed", &a.seed);
            }
            Command::Dataset(a) => {
                a.system.leaves(&mut out);
                a.dataset.leaves(&mut out);
                push(&mut out, "simulation.seed", &a.seed);
            }
            Command::TrainOuter(a) => {
                push(&mut out, "train.outer_epochs", &a.epochs);
                push(&mut out, "train.outer_lr", &a.lr);
                push(&mut out, "train.batch_size", &a.batch_size);
                push(&mut out, "train.seed", &a.seed);
            }
            Command::EstimateId(a) => {
                push(&mut out, "train.id_k1", &a.k1);
                push(&mut out, "train.id_k2", &a.k2);
                push(&mut out, "train.id_max_points", &a.max_points);
                push(&mut out, "train.seed", &a.seed);
            }
            Command::TrainInner(a) => {
                a.system.leaves(&mut out);
                a.dataset.leaves(&mut out);
                push(&mut out, "train.variant", &a.variant);
                push(&mut out, "train.beta", &a.beta);
                push(&mut out, "train.epochs", &a.epochs);
                push(&mut out, "train.lr", &a.lr);
                push(&mut out, "train.batch_size", &a.batch_size);
                push(&mut out, "train.latent_width", &a.latent_width);
                push(&mut out, "train.variance_threshold", &a.threshold);
                push(&mut out, "train.seed", &a.seed);
            }
            Command::Eval(_) | Command::Plot(_) => {}
        }
        out
    }

    fn out(&self) -> Option<&PathBuf> {
        match self {
            Command::Simulate(a) => a.out.as_ref(),
            Command::Dataset(a) => a.out.as_ref(),
            Command::TrainOuter(a) => a.out.as_ref(),
            Command::EstimateId(a) => a.out.as_ref(),
            Command::TrainInner(a) => a.out.as_ref(),
            Command::Eval(a) => a.out.as_ref().or(Some(&a.run)),
            Command::Plot(a) => a.out.as_ref().or(Some(&a.run)),
        }
    }
}

/// Defaults, then the config file, then flags, then `--set`.
pub fn resolve_config(cli: &Cli) -> Result<CliConfig> {
    let mut c = CliConfig::default();
    if let Some(path) = &cli.config {
        c.merge_file(path)?;
    }
    c.apply(cli.command.leaves())?;
    c.apply_sets(&cli.sets)?;
    c.validate()?;
    Ok(c)
}

/// `--out`, else `$SVLAB_RUN_DIR/<subcommand>`, else `runs/<subcommand>`.
pub fn output_dir(command: &Command) -> PathBuf {
    if let Some(p) = command.out() {
        return p.clone();
    }
    let root = std::env::var_os(RUN_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_RUN_DIR), PathBuf::from);
    root.join(command.name())
}

/// Maps `f` over `items` on up to `jobs` threads, keeping input order.
pub fn par_map<T, R, F>(jobs: usize, items: Vec<T>, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync,
{
    let n = items.len();
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return items.into_iter().map(f).collect();
    }
    let slots: Vec<Mutex<Option<T>>> = items.into_iter().map(|t| Mutex::new(Some(t))).collect();
    let results: Vec<Mutex<Option<Result<R>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let item = slots[i].lock().expect("slot lock").take().expect("taken once");
                let r = f(item);
                *results[i].lock().expect("result lock") = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().expect("result lock").expect("every item ran"))
        .collect()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn simulate_parallel(config: &CliConfig, jobs: usize) -> Result<Vec<crate::dynsys::Trajectory>> {
    let sim = &config.simulation;
    sim.validate()?;
    par_map(jobs, (0..sim.trajectories).collect(), |i| {
        sim.simulate_one(&config.system, i)
    })
}

fn cmd_simulate(config: &CliConfig, jobs: usize, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let trajs = simulate_parallel(config, jobs)?;
    for (i, t) in trajs.iter().enumerate() {
        t.write_csv(&out.join(format!("traj_{i:04}.csv")))?;
    }
    write_json(&out.join("config.json"), config)?;
    println!("wrote {} trajectories to {}", trajs.len(), out.display());
    Ok(())
}

fn make_dataset(config: &CliConfig, jobs: usize, out: &Path) -> Result<()> {
    let trajs = simulate_parallel(config, jobs)?;
    let m = build_dataset(&trajs, &config.dataset, config.simulation.seed, out)?;
    println!(
        "dataset {}: {} trajectories, {} train / {} val / {} test samples",
        out.display(),
        m.trajectories.len(),
        m.sample_counts.train,
        m.sample_counts.val,
        m.sample_counts.test
    );
    Ok(())
}

fn cmd_dataset(config: &CliConfig, jobs: usize, from: Option<&Path>, out: &Path) -> Result<()> {
    match from {
        Some(dir) => {
            let m = import_frames_dir(
                dir,
                &config.dataset,
                config.simulation.dt_frame,
                config.simulation.seed,
                out,
            )?;
            println!("imported {} trajectories into {}", m.trajectories.len(), out.display());
            Ok(())
        }
        None => make_dataset(config, jobs, out),
    }
}

fn outer_checkpoint(out: &Path) -> PathBuf {
    out.join("checkpoints").join("outer.bin")
}

fn inner_checkpoint(out: &Path) -> PathBuf {
    out.join("checkpoints").join("inner.bin")
}

fn run_outer(config: &CliConfig, dataset: &Dataset, out: &Path) -> Result<PathBuf> {
    let run = train_outer(dataset, &config.train)?;
    log::info!("outer training took {:.1} s", run.report.wall_time_s);
    fs::create_dir_all(out.join("checkpoints"))?;
    let ckpt = outer_checkpoint(out);
    let meta = ModelMeta::Outer {
        geometry: run.model.geometry,
        latent_width: crate::models::OUTER_LATENT,
    };
    save_model(&ckpt, &meta, &run.params)?;
    write_json(
        &out.join("outer_report.json"),
        &json!({"train": run.report, "val_history": run.val_history}),
    )?;
    println!("outer validation MSE {:.5}", run.report.val_recon);
    Ok(ckpt)
}

fn cmd_train_outer(config: &CliConfig, data: &Path, out: &Path) -> Result<()> {
    let dataset = Dataset::load(data)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), config)?;
    run_outer(config, &dataset, out)?;
    Ok(())
}

fn load_outer(path: &Path) -> Result<(OuterAE, ParamSet)> {
    let (meta, params) = load_model(path)?;
    Ok((meta.outer_model()?, params))
}

fn compact_for(dataset: &Dataset, outer: Option<&(OuterAE, ParamSet)>) -> Result<CompactSet> {
    compute_outer_latents(dataset, outer.map(|(m, p)| (m, p)))
}

/// Rows of numbers; a first row that does not parse is taken as a header.
pub fn read_points_csv(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if i == 0 => {}
            Err(e) => return Err(Error::parse(path, format!("line {}: {e}", i + 1))),
        }
    }
    PointCloud::from_rows(&rows)
}

fn cmd_estimate_id(config: &CliConfig, a: &EstimateIdArgs, out: &Path) -> Result<()> {
    let t = &config.train;
    let cloud = match (&a.points, &a.data) {
        (Some(p), _) => read_points_csv(p)?,
        (None, Some(d)) => {
            let dataset = Dataset::load(d)?;
            let outer = a.outer.as_deref().map(load_outer).transpose()?;
            compact_for(&dataset, outer.as_ref())?.point_cloud()?
        }
        (None, None) => return Err(Error::Contract("estimate-id needs --data or --points".into())),
    };
    let cloud = cloud.subsample(t.id_max_points, t.seed);
    let est = mle_id(&cloud, t.id_k1, t.id_k2)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("id.json"), &est)?;
    est.write_csv(&out.join("id_k.csv"))?;
    println!(
        "intrinsic dimension {:.4} (dof {}) from {} points",
        est.value,
        crate::idest::dof_round(est.value)?,
        est.n_used
    );
    Ok(())
}

/// Where a train-inner run found its inputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunInputs {
    pub data: PathBuf,
    pub outer: Option<PathBuf>,
}

fn absolute(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Dataset and outer model for train-inner, generating either if needed.
fn inner_inputs(config: &CliConfig, a: &TrainInnerArgs, jobs: usize, out: &Path) -> Result<RunInputs> {
    let data = match &a.data {
        Some(d) => d.clone(),
        None => {
            let d = out.join("data");
            make_dataset(config, jobs, &d)?;
            d
        }
    };
    let mode = Dataset::load(&data)?.manifest.mode;
    let outer = match (mode, &a.outer) {
        (DatasetMode::Vectors, _) => None,
        (DatasetMode::Frames, Some(p)) => Some(p.clone()),
        (DatasetMode::Frames, None) => {
            let dataset = Dataset::load(&data)?;
            Some(run_outer(config, &dataset, out)?)
        }
    };
    Ok(RunInputs {
        data: absolute(&data),
        outer: outer.as_deref().map(absolute),
    })
}

fn default_trace_ids(dataset: &Dataset) -> Vec<usize> {
    let test = dataset.split_trajectories(Split::Test);
    vec![test.first().copied().unwrap_or(0)]
}

fn train_one(
    config: &CliConfig,
    dataset: &Dataset,
    compact: &CompactSet,
    outer: Option<&(OuterAE, ParamSet)>,
    inputs: &RunInputs,
    out: &Path,
) -> Result<DofReport> {
    let start = Instant::now();
    let run = run_variant(dataset, compact, &config.train, config.train.variant, None)?;
    log::info!(
        "seed {} trained in {:.1} s",
        config.train.seed,
        start.elapsed().as_secs_f64()
    );
    fs::create_dir_all(out.join("checkpoints"))?;
    write_json(&out.join("config.json"), config)?;
    write_json(&out.join("run.json"), inputs)?;
    write_report(&out.join("report.json"), &run)?;
    save_model(&inner_checkpoint(out), &ModelMeta::for_inner(&run.model), &run.params)?;
    export_traces(
        &run.model,
        &run.params,
        dataset,
        outer.map(|(m, p)| (m, p)),
        &default_trace_ids(dataset),
        &run.dof.mask,
        out,
    )?;
    Ok(run.dof)
}

fn print_dof(seed: u64, d: &DofReport) {
    let verdict = match d.pass {
        Some(true) => "pass",
        Some(false) => "FAIL",
        None => "n/a",
    };
    let id = d.raw_id.map(|v| format!(", ID {v:.3}")).unwrap_or_default();
    println!(
        "{} seed {seed}: active {} of {}{id}, dof_from_id {:?}, ground truth {:?}, val recon {:.5} [{verdict}]",
        d.variant, d.active, d.latent_width, d.dof_from_id, d.ground_truth, d.val_recon
    );
}

fn cmd_train_inner(config: &CliConfig, a: &TrainInnerArgs, jobs: usize, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let inputs = inner_inputs(config, a, jobs, out)?;
    let dataset = Dataset::load(&inputs.data)?;
    let outer = inputs.outer.as_deref().map(load_outer).transpose()?;
    let compact = compact_for(&dataset, outer.as_ref())?;
    if a.seeds.is_empty() {
        let d = train_one(config, &dataset, &compact, outer.as_ref(), &inputs, out)?;
        print_dof(config.train.seed, &d);
        return Ok(());
    }
    let reports = par_map(jobs, a.seeds.clone(), |seed| {
        let mut c = config.clone();
        c.train.seed = seed;
        let dir = out.join(format!("seed_{seed}"));
        train_one(&c, &dataset, &compact, outer.as_ref(), &inputs, &dir)
    })?;
    for (seed, d) in a.seeds.iter().zip(&reports) {
        print_dof(*seed, d);
    }
    let passed = reports.iter().filter(|d| d.pass == Some(true)).count();
    println!("{passed} of {} seeds match the ground truth", reports.len());
    write_json(
        &out.join("summary.json"),
        &json!({"seeds": a.seeds, "reports": reports, "passed": passed}),
    )?;
    Ok(())
}

/// A trained inner run read back from disk.
pub struct LoadedRun {
    pub config: CliConfig,
    pub dataset: Dataset,
    pub outer: Option<(OuterAE, ParamSet)>,
    pub model: crate::models::InnerModel,
    pub params: ParamSet,
    pub mask: Vec<bool>,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let mut config = CliConfig::default();
    config.merge_file(&dir.join("config.json"))?;
    let inputs: RunInputs = read_json(&dir.join("run.json"))?;
    let report: Value = read_json(&dir.join("report.json"))?;
    let dof: DofReport = serde_json::from_value(report["dof"].clone()).map_err(|e| Error::Parse {
        file: dir.join("report.json"),
        msg: e.to_string(),
    })?;
    let (meta, params) = load_model(&inner_checkpoint(dir))?;
    Ok(LoadedRun {
        config,
        dataset: Dataset::load(&inputs.data)?,
        outer: inputs.outer.as_deref().map(load_outer).transpose()?,
        model: meta.inner_model()?,
        params,
        mask: dof.mask,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub trajectories: Vec<usize>,
    pub correlations: Vec<CorrelationReport>,
    /// Largest |r| per overlay, averaged over trajectories.
    pub mean_max_abs_r: Vec<(String, f64)>,
    /// Learned-Hamiltonian conservation per trajectory, when the model has a head.
    pub conservation: Option<Vec<f64>>,
}

pub fn evaluate(run: &LoadedRun, ids: &[usize], out: &Path) -> Result<EvalReport> {
    let outer = run.outer.as_ref().map(|(m, p)| (m, p));
    let traces = export_traces(&run.model, &run.params, &run.dataset, outer, ids, &run.mask, out)?;
    let correlations = traces.iter().map(correlation_report).collect::<Result<Vec<_>>>()?;
    let names = run.dataset.manifest.aux_names.clone();
    let mean_max_abs_r = names
        .into_iter()
        .filter_map(|n| {
            let v: Vec<f64> = correlations.iter().filter_map(|c| c.max_abs(&n)).collect();
            (!v.is_empty()).then(|| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                (n, m)
            })
        })
        .collect();
    let conservation = if run.model.variant.has_head() {
        let means = ids
            .iter()
            .map(|&i| trajectory_means(&run.model, &run.params, &run.dataset, i, outer))
            .collect::<Result<Vec<_>>>()?;
        Some(hamiltonian_conservation_metric(&run.model, &run.params, &means)?)
    } else {
        None
    };
    Ok(EvalReport {
        trajectories: ids.to_vec(),
        correlations,
        mean_max_abs_r,
        conservation,
    })
}

fn cmd_eval(a: &EvalArgs, out: &Path) -> Result<()> {
    let run = load_run(&a.run)?;
    let ids = if a.trajectories.is_empty() {
        let test = run.dataset.split_trajectories(Split::Test);
        if test.is_empty() {
            vec![0]
        } else {
            test
        }
    } else {
        a.trajectories.clone()
    };
    fs::create_dir_all(out)?;
    let report = evaluate(&run, &ids, out)?;
    write_json(&out.join("eval.json"), &report)?;
    for (name, r) in &report.mean_max_abs_r {
        println!("mean max |r| against {name}: {r:.3}");
    }
    if let Some(c) = &report.conservation {
        let worst = c.iter().copied().fold(0.0, f64::max);
        println!("Hamiltonian conservation: worst trajectory {worst:.3}");
    }
    Ok(())
}

fn cmd_plot(a: &PlotArgs, out: &Path) -> Result<()> {
    let run = load_run(&a.run)?;
    let ids = if a.trajectories.is_empty() {
        default_trace_ids(&run.dataset)
    } else {
        a.trajectories.clone()
    };
    let outer = run.outer.as_ref().map(|(m, p)| (m, p));
    export_traces(&run.model, &run.params, &run.dataset, outer, &ids, &run.mask, out)?;
    println!("wrote {} plots to {}", ids.len(), out.join("plots").display());
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let config = resolve_config(cli)?;
    let out = output_dir(&cli.command);
    let jobs = cli.jobs.max(1);
    match &cli.command {
        Command::Simulate(_) => cmd_simulate(&config, jobs, &out),
        Command::Dataset(a) => cmd_dataset(&config, jobs, a.from_frames.as_deref(), &out),
        Command::TrainOuter(a) => cmd_train_outer(&config, &a.data, &out),
        Command::EstimateId(a) => cmd_estimate_id(&config, a, &out),
        Command::TrainInner(a) => cmd_train_inner(&config, a, jobs, &out),
        Command::Eval(a) => cmd_eval(a, &out),
        Command::Plot(a) => cmd_plot(a, &out),
    }
}

/// Every config key with its default, for `--help`.
pub fn keys_help() -> String {
    let defaults = serde_json::to_value(CliConfig::default()).expect("config serializes");
    let mut s = String::from("Config keys (JSON file or --set KEY=VALUE), with defaults:\n");
    for (k, v) in flatten(&defaults) {
        s.push_str(&format!("  {k} = {v}\n"));
    }
    s.push_str("\nβ defaults per system (pi-vae / hpi-vae):\n");
    for kind in SystemKind::ALL {
        let (a, b) = kind.default_beta();
        s.push_str(&format!("  {:<18} {a} / {b}   dof {}\n", kind.name(), kind.dof()));
    }
    s.push_str(&format!(
        "\nOutputs go under ${RUN_DIR_ENV} (default `{DEFAULT_RUN_DIR}`) unless --out is given."
    ));
    s
}

pub fn command() -> clap::Command {
    Cli::command().after_long_help(keys_help())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

/// Parses the process arguments and runs; returns the exit code.
pub fn main() -> i32 {
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 3;
        }
    };
    init_logging(cli.verbose);
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
