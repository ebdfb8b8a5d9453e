//! Vectors-mode runs with the pipeline defaults, one dataset per seed.

use std::path::Path;

use svlab::dynsys::SystemKind;
use svlab::models::Variant;
use svlab::render::{build_dataset, Dataset, DatasetConfig, DatasetMode};
use svlab::train::{compute_outer_latents, run_variant, InnerRun, SimulationConfig, TrainConfig};
use svlab::Result;

pub fn vectors_dataset(kind: SystemKind, seed: u64, trajectories: usize, dir: &Path) -> Result<Dataset> {
    let sim = SimulationConfig {
        trajectories,
        seed,
        ..Default::default()
    };
    let config = DatasetConfig {
        mode: DatasetMode::Vectors,
        ..Default::default()
    };
    build_dataset(&sim.simulate(&kind.default_spec())?, &config, seed, dir)?;
    Dataset::load(dir)
}

pub fn vectors_run(dataset: &Dataset, variant: Variant, seed: u64) -> Result<InnerRun> {
    let compact = compute_outer_latents(dataset, None)?;
    let train = TrainConfig {
        seed,
        ..Default::default()
    };
    run_variant(dataset, &compact, &train, variant, None)
}
