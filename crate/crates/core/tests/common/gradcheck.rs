//! Central finite-difference checks of reverse-mode gradients.
//!
//! Each case builds a scalar from a list of leaf tensors. The analytic
//! gradient of every leaf is compared with `(f(x+h) − f(x−h)) / 2h`, one
//! coordinate at a time, using the norm-wise relative error
//! `‖a − n‖ / max(‖n‖, 1e-8)`.

use svlab::models::{
    clamp_logvar, hamilton_residual, kl_divergence, reconstruction_loss, reparameterize_with, second_order_penalty,
    ResidualPoint,
};
use svlab::numcore::{Activation, Bound, Graph, Mlp, NodeId, Rng, Tensor};
use svlab::Result;

pub const STEP: f64 = 1e-5;
pub const CASES: usize = 100;

pub type Build = dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId>;

fn eval(build: &Build, leaves: &[Tensor]) -> f64 {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = leaves.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &ids).expect("case builds");
    g.value(out).item().expect("scalar output")
}

/// Largest norm-wise relative error over the leaves of one case.
pub fn relative_error(build: &Build, leaves: &[Tensor]) -> f64 {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = leaves.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &ids).expect("case builds");
    g.backward(out).expect("backward");
    let mut worst: f64 = 0.0;
    for (k, leaf) in leaves.iter().enumerate() {
        let analytic = g.grad_or_zeros(ids[k]);
        let mut diff = 0.0;
        let mut norm = 0.0;
        for i in 0..leaf.len() {
            let mut shifted = leaves.to_vec();
            shifted[k].data_mut()[i] = leaf.data()[i] + STEP;
            let up = eval(build, &shifted);
            shifted[k].data_mut()[i] = leaf.data()[i] - STEP;
            let down = eval(build, &shifted);
            let numeric = (up - down) / (2.0 * STEP);
            diff += (analytic.data()[i] - numeric).powi(2);
            norm += numeric * numeric;
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1e-8));
    }
    worst
}

/// Reduces any node to a scalar with fixed random weights, so every output
/// element contributes a distinct amount.
fn project(g: &mut Graph, x: NodeId, weights: &Tensor) -> Result<NodeId> {
    let w = g.constant(weights.clone());
    let p = g.mul(x, w)?;
    g.sum(p)
}

pub struct Case {
    pub build: Box<Build>,
    pub leaves: Vec<Tensor>,
}

fn dim(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    lo + rng.below(hi - lo + 1)
}

pub fn affine_case(rng: &mut Rng) -> Case {
    let (b, i, o) = (dim(rng, 1, 5), dim(rng, 1, 6), dim(rng, 1, 6));
    let weights = rng.normal_tensor(&[b, o]);
    Case {
        build: Box::new(move |g, ids| {
            let y = g.matmul(ids[0], ids[1])?;
            let y = g.add_row(y, ids[2])?;
            project(g, y, &weights)
        }),
        leaves: vec![
            rng.normal_tensor(&[b, i]),
            rng.normal_tensor(&[i, o]),
            rng.normal_tensor(&[o]),
        ],
    }
}

pub fn tanh_case(rng: &mut Rng) -> Case {
    let shape = [dim(rng, 1, 4), dim(rng, 1, 6)];
    let weights = rng.normal_tensor(&shape);
    let which = rng.below(3);
    Case {
        build: Box::new(move |g, ids| {
            let y = match which {
                0 => g.tanh(ids[0])?,
                1 => g.sigmoid(ids[0])?,
                _ => {
                    let t = g.tanh(ids[0])?;
                    g.exp(t)?
                }
            };
            project(g, y, &weights)
        }),
        leaves: vec![rng.normal_tensor(&shape)],
    }
}

pub fn conv_case(rng: &mut Rng) -> Case {
    let n = dim(rng, 1, 2);
    let cin = dim(rng, 1, 3);
    let cout = dim(rng, 1, 3);
    let k = dim(rng, 1, 3);
    let stride = dim(rng, 1, 2);
    let padding = rng.below(2).min(k - 1);
    let h = dim(rng, k.max(2), 6);
    let w = dim(rng, k.max(2), 6);
    let transposed = rng.below(2) == 1;
    let mut g = Graph::new();
    let x = g.constant(rng.normal_tensor(&[n, cin, h, w]));
    let probe = if transposed {
        let kern = g.constant(rng.normal_tensor(&[cin, cout, k, k]));
        g.conv_transpose2d(x, kern, stride, padding, stride - 1)
    } else {
        let kern = g.constant(rng.normal_tensor(&[cout, cin, k, k]));
        g.conv2d(x, kern, stride, padding)
    }
    .expect("valid geometry");
    let weights = rng.normal_tensor(g.value(probe).shape());
    let kshape = if transposed {
        [cin, cout, k, k]
    } else {
        [cout, cin, k, k]
    };
    Case {
        build: Box::new(move |g, ids| {
            let y = if transposed {
                g.conv_transpose2d(ids[0], ids[1], stride, padding, stride - 1)?
            } else {
                g.conv2d(ids[0], ids[1], stride, padding)?
            };
            let y = g.add_channel(y, ids[2])?;
            let y = g.tanh(y)?;
            project(g, y, &weights)
        }),
        leaves: vec![
            rng.normal_tensor(&[n, cin, h, w]),
            rng.normal_tensor(&kshape),
            rng.normal_tensor(&[cout]),
        ],
    }
}

pub fn loss_case(rng: &mut Rng) -> Case {
    let (b, half) = (dim(rng, 1, 5), dim(rng, 1, 3));
    let l = 2 * half;
    let eps = rng.normal_tensor(&[b, l]);
    let which = rng.below(4);
    let dt = rng.uniform(0.2, 2.0);
    // Log-variances stay clear of the ±10 clamp, where the gradient jumps.
    let logvar = rng.uniform_tensor(&[b, l], -3.0, 3.0);
    Case {
        build: Box::new(move |g, ids| match which {
            0 => reconstruction_loss(g, ids[0], ids[1]),
            1 => {
                let (lv, _) = clamp_logvar(g, ids[2])?;
                kl_divergence(g, ids[0], lv)
            }
            2 => {
                let z = reparameterize_with(g, ids[0], ids[2], eps.clone())?;
                reconstruction_loss(g, z, ids[1])
            }
            _ => second_order_penalty(g, ids[0], ids[1], dt),
        }),
        leaves: vec![rng.normal_tensor(&[b, l]), rng.normal_tensor(&[b, l]), logvar],
    }
}

fn head_leaves(head: &Mlp, rng: &mut Rng) -> (Vec<String>, Vec<Tensor>) {
    let p = head.init(rng);
    let names = p.names().map(str::to_string).collect();
    let values = p.iter().map(|(_, t)| t.map(|v| v + 0.1 * v.signum())).collect();
    (names, values)
}

fn bind_leaves(names: &[String], ids: &[NodeId]) -> Bound {
    Bound::from_ids(names.iter().cloned().zip(ids.iter().copied()))
}

pub fn input_gradient_case(rng: &mut Rng) -> Case {
    let (b, w) = (dim(rng, 1, 4), 2 * dim(rng, 1, 3));
    let hidden = dim(rng, 2, 6);
    let head = Mlp::new(vec![w, hidden, hidden, 1], Activation::Tanh, Activation::Identity);
    let (names, params) = head_leaves(&head, rng);
    let weights = rng.normal_tensor(&[b, w]);
    let mut leaves = vec![rng.normal_tensor(&[b, w])];
    leaves.extend(params);
    Case {
        build: Box::new(move |g, ids| {
            let bound = bind_leaves(&names, &ids[1..]);
            let h = head.bind(&bound, "")?;
            let grad = h.input_gradient(g, ids[0])?;
            project(g, grad, &weights)
        }),
        leaves,
    }
}

pub fn hamilton_case(rng: &mut Rng) -> Case {
    let (b, w) = (dim(rng, 1, 4), 2 * dim(rng, 1, 3));
    let hidden = dim(rng, 2, 6);
    let head = Mlp::new(vec![w, hidden, hidden, 1], Activation::Tanh, Activation::Identity);
    let (names, params) = head_leaves(&head, rng);
    let dt = rng.uniform(0.2, 2.0);
    let at = if rng.below(2) == 0 {
        ResidualPoint::Start
    } else {
        ResidualPoint::Midpoint
    };
    let mut leaves = vec![rng.normal_tensor(&[b, w]), rng.normal_tensor(&[b, w])];
    leaves.extend(params);
    Case {
        build: Box::new(move |g, ids| {
            let bound = bind_leaves(&names, &ids[2..]);
            let h = head.bind(&bound, "")?;
            hamilton_residual(g, &h, ids[0], ids[1], dt, at)
        }),
        leaves,
    }
}

/// Worst relative error over `CASES` seeded instances of a generator.
pub fn worst_error(seed: u64, make: fn(&mut Rng) -> Case) -> f64 {
    let root = Rng::new(seed);
    (0..CASES)
        .map(|i| {
            let case = make(&mut root.split(i as u64));
            relative_error(case.build.as_ref(), &case.leaves)
        })
        .fold(0.0, f64::max)
}

/// Checks that the forward value of `input_gradient` matches finite
/// differences of the network output with respect to its input.
pub fn input_gradient_value_error(seed: u64) -> f64 {
    let root = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for i in 0..CASES {
        let mut rng = root.split(i as u64);
        let w = 2 * dim(&mut rng, 1, 3);
        let head = Mlp::new(vec![w, 5, 5, 1], Activation::Tanh, Activation::Identity);
        let params = head.init(&mut rng);
        let x = rng.normal_tensor(&[3, w]);
        let out = |x: &Tensor| -> (Tensor, Tensor) {
            let mut g = Graph::new();
            let bound = params.bind_frozen(&mut g);
            let h = head.bind(&bound, "").unwrap();
            let xi = g.constant(x.clone());
            let y = h.forward(&mut g, xi).unwrap();
            let d = h.input_gradient(&mut g, xi).unwrap();
            (g.value(y).clone(), g.value(d).clone())
        };
        let (_, analytic) = out(&x);
        let (mut diff, mut norm) = (0.0, 0.0);
        for j in 0..x.len() {
            let mut up = x.clone();
            up.data_mut()[j] += STEP;
            let mut down = x.clone();
            down.data_mut()[j] -= STEP;
            let row = j / w;
            let numeric = (out(&up).0.data()[row] - out(&down).0.data()[row]) / (2.0 * STEP);
            diff += (analytic.data()[j] - numeric).powi(2);
            norm += numeric * numeric;
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1e-8));
    }
    worst
}
