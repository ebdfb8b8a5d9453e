//! Learns the Hamiltonian of a unit harmonic oscillator from consecutive
//! phase-space samples by minimizing the Hamilton residual. The residual is
//! built on the network's input gradient, so every Adam step backpropagates
//! through a gradient.
//!
//! cargo run --release --example hamiltonian_head

use svlab::models::{hamilton_residual, ResidualPoint};
use svlab::numcore::{Activation, AdamState, Graph, Mlp, Rng, Tensor};

const DT: f64 = 0.05;

/// Exact flow of H = (q² + p²)/2: rotation by `dt`.
fn step(q: f64, p: f64, dt: f64) -> (f64, f64) {
    let (s, c) = dt.sin_cos();
    (q * c + p * s, p * c - q * s)
}

fn main() -> svlab::Result<()> {
    let mut rng = Rng::new(11);
    let n = 512;
    let (mut z, mut z_next) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let (q, p) = (rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
        let (q1, p1) = step(q, p, DT);
        z.push(vec![q, p]);
        z_next.push(vec![q1, p1]);
    }
    let z = Tensor::from_rows(&z)?;
    let z_next = Tensor::from_rows(&z_next)?;

    let head = Mlp::new(vec![2, 64, 64, 1], Activation::Tanh, Activation::Identity);
    let mut params = head.init(&mut rng.split(1));
    let mut adam = AdamState::new(3e-3);
    for epoch in 0..=1500 {
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let h = head.bind(&bound, "")?;
        let a = g.constant(z.clone());
        let b = g.constant(z_next.clone());
        let r = hamilton_residual(&mut g, &h, a, b, DT, ResidualPoint::Midpoint)?;
        if epoch % 300 == 0 {
            println!("epoch {epoch:>4}: residual {:.3e}", g.value(r).item()?);
        }
        g.backward(r)?;
        adam.step(&mut params, &bound.grads(&g))?;
    }

    // The learned H should grow with the radius and be nearly constant on circles.
    let mut g = Graph::new();
    let bound = params.bind_frozen(&mut g);
    let h = head.bind(&bound, "")?;
    let probe: Vec<Vec<f64>> = [0.25, 0.5, 1.0]
        .iter()
        .flat_map(|&r| {
            (0..4).map(move |k| {
                let a = k as f64 * std::f64::consts::FRAC_PI_2 + 0.3;
                vec![r * a.cos(), r * a.sin()]
            })
        })
        .collect();
    let x = g.constant(Tensor::from_rows(&probe)?);
    let hv = h.forward(&mut g, x)?;
    let grad = h.input_gradient(&mut g, x)?;
    let (hv, grad) = (g.value(hv).clone(), g.value(grad).clone());
    for (i, p) in probe.iter().enumerate() {
        println!(
            "q {:+.3} p {:+.3}: H {:+.4}  ∂H/∂q {:+.3} (exact {:+.3})  ∂H/∂p {:+.3} (exact {:+.3})",
            p[0],
            p[1],
            hv.data()[i],
            grad.row(i)[0],
            p[0],
            grad.row(i)[1],
            p[1]
        );
    }
    Ok(())
}
