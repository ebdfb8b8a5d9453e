//! Simulates every built-in system, reports energy drift and writes each
//! trajectory as CSV plus its first and last frames as PGM.
//!
//! cargo run --release --example simulate_systems -- [out_dir]

use std::path::PathBuf;

use svlab::dynsys::SystemKind;
use svlab::render::{pnm, render_state, Geometry};
use svlab::train::SimulationConfig;

fn main() -> svlab::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/simulate_systems".into()));
    std::fs::create_dir_all(&out)?;
    let geometry = Geometry {
        height: 64,
        width: 64,
        channels: 1,
    };
    let sim = SimulationConfig {
        trajectories: 1,
        frames: 200,
        seed: 3,
        ..Default::default()
    };
    for kind in SystemKind::ALL {
        let spec = kind.default_spec();
        let mut sim = sim.clone();
        if kind == SystemKind::ReactionDiffusion {
            // Model time units; one rotation of the spiral takes about 6.
            sim.dt_frame = 0.05;
            sim.frames = 100;
        }
        let traj = sim.simulate_one(&spec, 0)?;
        let name = kind.name();
        traj.write_csv(&out.join(format!("{name}.csv")))?;
        let first = render_state(&spec, &traj.states[0], geometry)?.frame;
        let last = render_state(&spec, traj.states.last().unwrap(), geometry)?.frame;
        pnm::write(&out.join(format!("{name}_first.pgm")), &first)?;
        pnm::write(&out.join(format!("{name}_last.pgm")), &last)?;
        if kind.is_mechanical() {
            let e = traj.energies()?;
            let drift = e.iter().map(|v| (v - e[0]).abs()).fold(0.0, f64::max) / e[0].abs().max(1e-12);
            println!(
                "{name:<18} {} frames over {:.1} s, H0 = {:+.4} J, max |ΔH|/|H0| = {drift:.2e}",
                traj.len(),
                traj.dt_frame * (traj.len() - 1) as f64,
                e[0]
            );
        } else {
            println!("{name:<18} {} frames, aux {:?}", traj.len(), traj.aux_names);
        }
    }
    println!("wrote CSV and PGM files to {}", out.display());
    Ok(())
}
