//! Vectors-mode DOF discovery for one system and variant.
//!
//! cargo run --release --example dof_discovery -- single-pendulum pi-vae 0
//!
//! Optional trailing arguments: epochs, trajectories, frame interval (s),
//! Hamilton residual point (start or midpoint).

use std::env;

use svlab::dynsys::SystemKind;
use svlab::models::{ResidualPoint, Variant};
use svlab::render::{build_dataset, Dataset, DatasetConfig, DatasetMode};
use svlab::train::{compute_outer_latents, run_variant, SimulationConfig, TrainConfig, PIPELINE_DT_FRAME};

fn main() -> svlab::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = env::args().skip(1).collect();
    let kind: SystemKind = args.first().map_or("single-pendulum", String::as_str).parse()?;
    let variant: Variant = args.get(1).map_or("pi-vae", String::as_str).parse()?;
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let trajectories: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(100);
    let dt_frame: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(PIPELINE_DT_FRAME);
    let residual_point = match args.get(6).map(String::as_str) {
        Some("midpoint") => ResidualPoint::Midpoint,
        _ => ResidualPoint::Start,
    };

    let spec = kind.default_spec();
    let sim = SimulationConfig {
        trajectories,
        dt_frame,
        seed,
        ..Default::default()
    };
    let dir = tempfile::tempdir()?;
    let config = DatasetConfig {
        mode: DatasetMode::Vectors,
        ..Default::default()
    };
    build_dataset(&sim.simulate(&spec)?, &config, seed, dir.path())?;
    let dataset = Dataset::load(dir.path())?;
    let compact = compute_outer_latents(&dataset, None)?;
    let train = TrainConfig {
        epochs,
        seed,
        residual_point,
        ..Default::default()
    };
    let run = run_variant(&dataset, &compact, &train, variant, None)?;
    let d = &run.dof;
    println!(
        "{kind} {variant} seed {seed}: active {} of {} (truth {:?})",
        d.active, d.latent_width, d.ground_truth
    );
    println!("variances {:.4?}", d.variances);
    if let Some(kl) = &d.kl_per_dim {
        println!("kl/dim    {kl:.4?}");
    }
    if let Some(id) = d.raw_id {
        println!("raw ID {id:.3} → {:?}", d.dof_from_id);
    }
    println!(
        "val recon {:.5}, last epoch {:?}, {:.1} s",
        d.val_recon,
        run.train.history.last().unwrap(),
        run.train.wall_time_s
    );
    Ok(())
}
