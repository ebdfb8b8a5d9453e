use proptest::prelude::*;

use svlab::dynsys::{derivative, hamiltonian, leapfrog_step, StateVector, SystemKind};
use svlab::idest::{dof_round, mle_id, PointCloud};
use svlab::models::{kl_divergence, total_loss, InnerBatch, InnerModel, LossWeights, Variant};
use svlab::numcore::checkpoint::{read_tensors, write_tensors};
use svlab::numcore::{Graph, Rng, Tensor};
use svlab::render::{embed_state, pnm, Frame, Geometry};
use svlab::train::count_active_dims;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

fn kl_of(mu: &[f64], lv: &[f64], width: usize) -> f64 {
    let rows = mu.len() / width;
    let mut g = Graph::new();
    let m = g.constant(Tensor::new(vec![rows, width], mu.to_vec()).unwrap());
    let l = g.constant(Tensor::new(vec![rows, width], lv.to_vec()).unwrap());
    let k = kl_divergence(&mut g, m, l).unwrap();
    g.value(k).item().unwrap()
}

fn random_cloud(seed: u64, n: usize, d: usize) -> PointCloud {
    let mut rng = Rng::new(seed);
    PointCloud::new(d, (0..n * d).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

/// Random rotation from a product of Givens rotations.
fn rotate(points: &PointCloud, seed: u64) -> PointCloud {
    let d = points.dim();
    let mut rng = Rng::new(seed);
    let mut data: Vec<f64> = (0..points.len()).flat_map(|i| points.point(i).to_vec()).collect();
    for a in 0..d {
        for b in a + 1..d {
            let (s, c) = rng.uniform(0.0, std::f64::consts::TAU).sin_cos();
            for row in data.chunks_mut(d) {
                let (x, y) = (row[a], row[b]);
                row[a] = c * x - s * y;
                row[b] = s * x + c * y;
            }
        }
    }
    PointCloud::new(d, data).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_prior(
        rows in 1usize..4,
        width in 1usize..5,
        seed in any::<u64>(),
        scale in 0.01f64..3.0,
    ) {
        let mut rng = Rng::new(seed);
        let n = rows * width;
        let mu: Vec<f64> = (0..n).map(|_| scale * rng.normal()).collect();
        let lv: Vec<f64> = (0..n).map(|_| scale * rng.normal()).collect();
        prop_assert!(kl_of(&mu, &lv, width) > 0.0);
        prop_assert_eq!(kl_of(&vec![0.0; n], &vec![0.0; n], width), 0.0);
    }

    #[test]
    fn active_count_ignores_dimension_order(
        variances in proptest::collection::vec(0.0f64..0.05, 1..12),
        seed in any::<u64>(),
    ) {
        let mut permuted = variances.clone();
        Rng::new(seed).shuffle(&mut permuted);
        let (a, _) = count_active_dims(&variances, 0.01).unwrap();
        let (b, _) = count_active_dims(&permuted, 0.01).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn dof_round_is_even_and_near(id in 0.01f64..40.0) {
        let d = dof_round(id).unwrap();
        prop_assert!(d.is_multiple_of(2) && d >= 2);
        prop_assert!((d as f64 - id).abs() <= 1.0 || id < 1.0);
    }

    #[test]
    fn loss_ignores_batch_order(
        variant_idx in 0usize..4,
        rows in 2usize..7,
        seed in any::<u64>(),
    ) {
        let variant = Variant::ALL[variant_idx];
        let model = InnerModel::new(variant, 6, 4).unwrap();
        let mut rng = Rng::new(seed);
        let params = model.init(&mut rng);
        let batch = InnerBatch {
            x: rng.normal_tensor(&[rows, 6]),
            x_next: Some(rng.normal_tensor(&[rows, 6])),
        };
        let mut perm: Vec<usize> = (0..rows).collect();
        rng.shuffle(&mut perm);
        let shuffle = |t: &Tensor| {
            Tensor::from_rows(&perm.iter().map(|&i| t.row(i).to_vec()).collect::<Vec<_>>()).unwrap()
        };
        let permuted = InnerBatch { x: shuffle(&batch.x), x_next: batch.x_next.as_ref().map(shuffle) };
        let eval = |b: &InnerBatch| {
            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            total_loss(&mut g, &model, &bound, b, &LossWeights::default(), None).unwrap().terms.total
        };
        prop_assert!((eval(&batch) - eval(&permuted)).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact(
        shapes in proptest::collection::vec(proptest::collection::vec(1usize..5, 0..4), 1..5),
        seed in any::<u64>(),
    ) {
        let mut rng = Rng::new(seed);
        let tensors: Vec<(String, Tensor)> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("t{i}.w"), rng.normal_tensor(s).map(|v| v * 1e3)))
            .collect();
        let mut bytes = Vec::new();
        write_tensors(&mut bytes, tensors.iter().map(|(n, t)| (n.as_str(), t))).unwrap();
        let back = read_tensors(bytes.as_slice(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back.len(), tensors.len());
        for ((n, t), (m, u)) in tensors.iter().zip(&back) {
            prop_assert_eq!(n, m);
            prop_assert_eq!(t.shape(), u.shape());
            prop_assert!(t.data().iter().zip(u.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn pgm_roundtrip_of_quantized_frames(
        h in 1usize..9,
        w in 1usize..9,
        channels in prop_oneof![Just(1usize), Just(3usize)],
        seed in any::<u64>(),
    ) {
        let geometry = Geometry { height: h, width: w, channels };
        let mut rng = Rng::new(seed);
        let pixels = (0..geometry.pixel_count()).map(|_| rng.below(256) as f64 / 255.0).collect();
        let frame = Frame { geometry, pixels };
        let back = pnm::decode(&pnm::encode(&frame).unwrap(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, frame);
    }

    #[test]
    fn embeddings_are_bounded(seed in any::<u64>(), kind_idx in 0usize..3) {
        let kind = SystemKind::ALL[kind_idx];
        let spec = kind.default_spec();
        let mut rng = Rng::new(seed);
        let state = StateVector::new((0..spec.state_len()).map(|i| {
            if kind == SystemKind::ElasticPendulum && i == 1 { rng.uniform(0.8, 1.2) } else { rng.uniform(-3.0, 3.0) }
        }).collect());
        let e = embed_state(&spec, &state, 3).unwrap();
        prop_assert!(e.iter().all(|v| v.abs() < 1.0));
        prop_assert_eq!(e, embed_state(&spec, &state, 3).unwrap());
    }

    #[test]
    fn derivative_follows_hamiltons_equations(seed in any::<u64>(), double in any::<bool>()) {
        let kind = if double { SystemKind::DoublePendulum } else { SystemKind::SinglePendulum };
        let spec = kind.default_spec();
        let mut rng = Rng::new(seed);
        let s = StateVector::new((0..spec.state_len()).map(|_| rng.uniform(-2.0, 2.0)).collect());
        let d = derivative(&spec, &s, 0.0).unwrap();
        let n = s.len() / 2;
        let h = 1e-6;
        for i in 0..s.len() {
            let shifted = |delta: f64| {
                let mut v = s.values().to_vec();
                v[i] += delta;
                hamiltonian(&spec, &StateVector::new(v)).unwrap()
            };
            let dh = (shifted(h) - shifted(-h)) / (2.0 * h);
            // ẋ_q = ∂H/∂p, ẋ_p = −∂H/∂q
            let (expected, actual) = if i < n { (-dh, d.values()[n + i]) } else { (dh, d.values()[i - n]) };
            prop_assert!((expected - actual).abs() <= 1e-6 * expected.abs().max(1.0), "{} vs {}", expected, actual);
        }
    }

    #[test]
    fn leapfrog_runs_backwards(seed in any::<u64>(), steps in 1usize..200) {
        let spec = SystemKind::SinglePendulum.default_spec();
        let mut rng = Rng::new(seed);
        let s0 = StateVector::new(vec![rng.uniform(-2.5, 2.5), rng.uniform(-3.0, 3.0)]);
        let mut s = s0.clone();
        for _ in 0..steps {
            s = leapfrog_step(&spec, &s, 1e-3).unwrap();
        }
        for _ in 0..steps {
            s = leapfrog_step(&spec, &s, -1e-3).unwrap();
        }
        for (a, b) in s.values().iter().zip(s0.values()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rng_streams_are_reproducible(seed in any::<u64>(), child in 0u64..1000) {
        let mut a = Rng::new(seed).split(child);
        let mut b = Rng::new(seed).split(child);
        let mut c = Rng::new(seed).split(child + 1);
        let xa: Vec<f64> = (0..8).map(|_| a.normal()).collect();
        let xb: Vec<f64> = (0..8).map(|_| b.normal()).collect();
        let xc: Vec<f64> = (0..8).map(|_| c.normal()).collect();
        prop_assert_eq!(&xa, &xb);
        prop_assert_ne!(xa, xc);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn id_is_invariant_to_rigid_motion_and_scale(
        seed in any::<u64>(),
        d in 2usize..5,
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let cloud = random_cloud(seed, 400, d);
        let base = mle_id(&cloud, 10, 20).unwrap().value;
        let rotated = rotate(&cloud, seed ^ 0x5eed);
        let moved: Vec<f64> = (0..rotated.len())
            .flat_map(|i| rotated.point(i).iter().map(|v| scale * v + shift).collect::<Vec<_>>())
            .collect();
        let moved = PointCloud::new(d, moved).unwrap();
        let other = mle_id(&moved, 10, 20).unwrap().value;
        prop_assert!((other - base).abs() / base < 1e-9, "{} vs {}", base, other);
    }
}

#[test]
fn id_orders_cube_dimensions() {
    let ids: Vec<f64> = [1usize, 2, 3, 5]
        .iter()
        .map(|&d| mle_id(&random_cloud(d as u64, 2000, d), 10, 20).unwrap().value)
        .collect();
    assert!(ids.windows(2).all(|w| w[0] < w[1]), "{ids:?}");
}
