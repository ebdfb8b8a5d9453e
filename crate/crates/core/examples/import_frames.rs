//! Writes rendered double-pendulum frames as `<trajectory>_<index>.pgm`
//! files, imports the directory as a frames dataset at a different
//! resolution and compares the result with direct rendering.
//!
//! cargo run --release --example import_frames

use svlab::dynsys::SystemKind;
use svlab::render::{import_frames_dir, pnm, render_state, Dataset, DatasetConfig, Geometry};
use svlab::train::SimulationConfig;

fn main() -> svlab::Result<()> {
    let dir = tempfile::tempdir()?;
    let frames_dir = dir.path().join("frames");
    std::fs::create_dir_all(&frames_dir)?;
    let spec = SystemKind::DoublePendulum.default_spec();
    let sim = SimulationConfig {
        trajectories: 3,
        frames: 16,
        ..Default::default()
    };
    let source = Geometry {
        height: 64,
        width: 64,
        channels: 1,
    };
    let trajs = sim.simulate(&spec)?;
    for (t, traj) in trajs.iter().enumerate() {
        for (i, s) in traj.states.iter().enumerate() {
            let frame = render_state(&spec, s, source)?.frame;
            pnm::write(&frames_dir.join(format!("clip{t}_{i}.pgm")), &frame)?;
        }
    }

    let config = DatasetConfig::default();
    let out = dir.path().join("dataset");
    let m = import_frames_dir(&frames_dir, &config, sim.dt_frame, 0, &out)?;
    println!(
        "imported {} trajectories at {}×{}: {:?} samples",
        m.trajectories.len(),
        m.geometry.height,
        m.geometry.width,
        m.sample_counts
    );
    let ds = Dataset::load(&out)?;
    for (entry, data) in &ds.trajectories {
        let name = entry.name.as_deref().unwrap_or("?");
        let t: usize = name.trim_start_matches("clip").parse().unwrap_or(0);
        let direct = render_state(&spec, &trajs[t].states[0], config.geometry)?.frame;
        let err = data
            .observation(0)
            .iter()
            .zip(&direct.pixels)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / direct.pixels.len() as f64;
        println!(
            "{name}: {} frames, split {:?}, mean |imported − direct render| {err:.4}",
            data.frames(),
            entry.split
        );
    }
    Ok(())
}
