//! Trains a PI-VAE or HPI-VAE on single-pendulum embeddings, then exports
//! latent traces against θ, cos 2θ and x1 and reports their correlations.
//! The HPI-VAE also reports how well its learned Hamiltonian is conserved.
//!
//! cargo run --release --example latent_traces -- [pi-vae|hpi-vae] [seed] [epochs] [out_dir]

use std::path::PathBuf;

use svlab::dynsys::SystemKind;
use svlab::models::Variant;
use svlab::render::{build_dataset, Dataset, DatasetConfig, DatasetMode, Split};
use svlab::train::{
    compute_outer_latents, correlation_report, export_traces, hamiltonian_conservation_metric, run_variant,
    trajectory_means, SimulationConfig, TrainConfig,
};

fn main() -> svlab::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let variant: Variant = args.first().map_or("pi-vae", String::as_str).parse()?;
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let out = PathBuf::from(args.get(3).map_or("out/latent_traces", String::as_str));

    let data_dir = out.join("data");
    let sim = SimulationConfig {
        seed,
        ..Default::default()
    };
    let config = DatasetConfig {
        mode: DatasetMode::Vectors,
        ..Default::default()
    };
    build_dataset(
        &sim.simulate(&SystemKind::SinglePendulum.default_spec())?,
        &config,
        seed,
        &data_dir,
    )?;
    let dataset = Dataset::load(&data_dir)?;
    let compact = compute_outer_latents(&dataset, None)?;
    let train = TrainConfig {
        epochs,
        seed,
        ..Default::default()
    };
    let run = run_variant(&dataset, &compact, &train, variant, None)?;
    println!(
        "{variant}: {} active of {}, variances {:.4?}",
        run.dof.active, run.dof.latent_width, run.dof.variances
    );

    let ids = dataset.split_trajectories(Split::Test);
    let traces = export_traces(&run.model, &run.params, &dataset, None, &ids, &run.dof.mask, &out)?;
    for t in &traces {
        let c = correlation_report(t)?;
        let best: Vec<String> = c
            .assignment
            .iter()
            .map(|a| format!("z{} ~ {} (r = {:+.2})", a.latent, a.overlay, a.r.unwrap_or(f64::NAN)))
            .collect();
        println!(
            "trajectory {:>3}: max |r| with cos2theta {:.2}; {}",
            t.trajectory_id,
            c.max_abs("cos2theta").unwrap_or(0.0),
            best.join(", ")
        );
    }
    if variant.has_head() {
        let means = ids
            .iter()
            .map(|&i| trajectory_means(&run.model, &run.params, &dataset, i, None))
            .collect::<svlab::Result<Vec<_>>>()?;
        let metric = hamiltonian_conservation_metric(&run.model, &run.params, &means)?;
        println!("Hamiltonian conservation per test trajectory: {metric:.3?}");
    }
    println!(
        "traces in {}, plots in {}",
        out.join("traces").display(),
        out.join("plots").display()
    );
    Ok(())
}
