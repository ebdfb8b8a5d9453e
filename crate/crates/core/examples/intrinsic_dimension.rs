//! Levina–Bickel intrinsic-dimension estimates on synthetic manifolds and on
//! the embedded states of each pendulum.
//!
//! cargo run --release --example intrinsic_dimension

use svlab::dynsys::SystemKind;
use svlab::idest::{dof_round, mle_id, PointCloud};
use svlab::numcore::Rng;
use svlab::render::{build_dataset, Dataset, DatasetConfig, DatasetMode};
use svlab::train::{compute_outer_latents, SimulationConfig};

fn cloud(n: usize, dim: usize, mut f: impl FnMut() -> Vec<f64>) -> svlab::Result<PointCloud> {
    PointCloud::new(dim, (0..n).flat_map(|_| f()).collect())
}

fn report(name: &str, points: &PointCloud) -> svlab::Result<()> {
    let est = mle_id(points, 10, 20)?;
    println!(
        "{name:<32} n {:>5}  ID {:.3}  even dof {}",
        est.n_used,
        est.value,
        dof_round(est.value)?
    );
    Ok(())
}

fn main() -> svlab::Result<()> {
    let mut rng = Rng::new(5);
    let line = cloud(2000, 3, || {
        let t = rng.uniform(0.0, 1.0);
        vec![t, 2.0 * t, -t]
    })?;
    report("line segment in R^3", &line)?;
    let sphere = cloud(2000, 3, || {
        let v: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / r).collect()
    })?;
    report("2-sphere surface in R^3", &sphere)?;
    let cube = cloud(2000, 3, || (0..3).map(|_| rng.uniform(0.0, 1.0)).collect())?;
    report("solid 3-cube", &cube)?;
    let torus = cloud(2000, 4, || {
        let (a, b) = (rng.uniform(0.0, 6.3), rng.uniform(0.0, 6.3));
        vec![a.cos(), a.sin(), b.cos(), b.sin()]
    })?;
    report("flat torus in R^4", &torus)?;

    let dir = tempfile::tempdir()?;
    let sim = SimulationConfig {
        trajectories: 60,
        ..Default::default()
    };
    let config = DatasetConfig {
        mode: DatasetMode::Vectors,
        ..Default::default()
    };
    for kind in [
        SystemKind::SinglePendulum,
        SystemKind::DoublePendulum,
        SystemKind::ElasticPendulum,
    ] {
        let out = dir.path().join(kind.name());
        build_dataset(&sim.simulate(&kind.default_spec())?, &config, 0, &out)?;
        let points = compute_outer_latents(&Dataset::load(&out)?, None)?.point_cloud()?;
        report(&format!("{} embedding (truth {})", kind.name(), kind.dof()), &points)?;
    }
    Ok(())
}
