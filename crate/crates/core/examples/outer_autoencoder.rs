//! Renders a small single-pendulum frames dataset, trains the convolutional
//! outer autoencoder to predict frames (t+2, t+3) from (t, t+1) and writes
//! input, target and prediction images.
//!
//! cargo run --release --example outer_autoencoder -- [epochs] [out_dir]

use std::path::PathBuf;

use svlab::dynsys::SystemKind;
use svlab::numcore::{Graph, Tensor};
use svlab::render::{build_dataset, pnm, Dataset, DatasetConfig, Frame, Split};
use svlab::train::{compute_outer_latents, train_outer, SimulationConfig, TrainConfig};

fn main() -> svlab::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(40);
    let out = PathBuf::from(args.get(1).map_or("out/outer_autoencoder", String::as_str));
    std::fs::create_dir_all(&out)?;

    let sim = SimulationConfig {
        trajectories: 40,
        frames: 40,
        ..Default::default()
    };
    let data_dir = out.join("data");
    build_dataset(
        &sim.simulate(&SystemKind::SinglePendulum.default_spec())?,
        &DatasetConfig::default(),
        0,
        &data_dir,
    )?;
    let dataset = Dataset::load(&data_dir)?;
    let config = TrainConfig {
        outer_epochs: epochs,
        batch_size: 32,
        ..Default::default()
    };
    let run = train_outer(&dataset, &config)?;
    for (e, v) in run.val_history.iter().enumerate().step_by(5.max(epochs / 8)) {
        println!("epoch {e:>3}: validation MSE {v:.5}");
    }
    println!(
        "final validation MSE {:.5} in {:.1} s",
        run.report.val_recon, run.report.wall_time_s
    );

    let sample = dataset.samples(Split::Val)[0];
    let (input, target) = dataset.frame_batch(&[sample])?;
    let mut g = Graph::new();
    let bound = run.params.bind_frozen(&mut g);
    let x = g.constant(input.clone());
    let (_, y) = run.model.forward(&mut g, &bound, x)?;
    let g_shape = dataset.manifest.geometry;
    let frame = |t: &Tensor, k: usize| -> svlab::Result<Frame> {
        let n = g_shape.pixel_count();
        let pixels = t.data()[k * n..(k + 1) * n].to_vec();
        Frame::from_tensor(&Tensor::new(
            vec![g_shape.channels, g_shape.height, g_shape.width],
            pixels,
        )?)
    };
    for k in 0..2 {
        pnm::write(&out.join(format!("input_{k}.pgm")), &frame(&input, k)?)?;
        pnm::write(&out.join(format!("target_{k}.pgm")), &frame(&target, k)?)?;
        pnm::write(&out.join(format!("predicted_{k}.pgm")), &frame(g.value(y), k)?)?;
    }
    let latents = compute_outer_latents(&dataset, Some((&run.model, &run.params)))?;
    println!("{} compact representations of width {}", latents.len(), latents.width());
    println!("images written to {}", out.display());
    Ok(())
}
