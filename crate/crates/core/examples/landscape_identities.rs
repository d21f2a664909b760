//! Numerical checks of the identities behind the landscape analysis: the
//! gradient formula, the second moment of the random tangent direction, and
//! the nuclear-norm bound on the quartic remainder.

use bmsync::certificates::{expected_direction_matrix, nuclear_norm, q_decompose};
use bmsync::instances::gen_gaussian;
use bmsync::manifold::{objective, random_point, random_tangent, retract, riemannian_gradient};
use bmsync::rng;
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

pub struct Outcome {
    pub gradient_rel_error: f64,
    pub moment_rel_error: f64,
    /// Largest `||Q~||_* / ||W||_F^2` seen; the bound is 14.
    pub nuclear_ratio: f64,
}

pub fn run_example() -> bmsync::Result<Outcome> {
    // Directional derivative of the objective along a retraction curve.
    let inst = gen_gaussian(15, 1.0, 1)?;
    let y = random_point(15, 4, 2)?;
    let v = random_tangent(&y, 3);
    let g = riemannian_gradient(&inst.cost, &y)?;
    let analytic = g.matrix().dot(v.matrix());
    let h = 1e-5;
    let f_plus = objective(&inst.cost, &retract(&y, &v, h)?)?;
    let f_minus = objective(&inst.cost, &retract(&y, &v.scaled(-1.0), h)?)?;
    let numeric = (f_plus - f_minus) / (2.0 * h);
    let gradient_rel_error = (analytic - numeric).abs() / analytic.abs();
    println!("gradient: analytic {analytic:.8}, central difference {numeric:.8}");

    // E[Ydot Ydot^T] for Ydot_i = g - <g, Y_i> Y_i with a shared Gaussian g.
    let (n, r, samples) = (8, 5, 40_000);
    let y = random_point(n, r, 5)?;
    let mut g_rng = rng::stream(6, &[]);
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for _ in 0..samples {
        let gv = DVector::<f64>::from_fn(r, |_, _| StandardNormal.sample(&mut g_rng));
        let yd = DMatrix::from_fn(n, r, |i, k| {
            let c = y.matrix().row(i).transpose().dot(&gv);
            gv[k] - c * y.matrix()[(i, k)]
        });
        acc += &yd * yd.transpose();
    }
    acc /= samples as f64;
    let exact = expected_direction_matrix(&y, r)?;
    let moment_rel_error = (&acc - &exact).abs().max() / exact.abs().min();
    println!(
        "second moment: largest relative deviation {moment_rel_error:.4} over {samples} samples"
    );

    let mut nuclear_ratio: f64 = 0.0;
    for seed in 0..20 {
        let y = random_point(10 + seed as usize, 3, 100 + seed)?;
        let d = q_decompose(&y);
        nuclear_ratio = nuclear_ratio.max(nuclear_norm(&d.q_tilde) / d.w.norm_squared());
    }
    println!("nuclear norm of the remainder: at most {nuclear_ratio:.3} ||W||_F^2 (bound 14)");
    Ok(Outcome {
        gradient_rel_error,
        moment_rel_error,
        nuclear_ratio,
    })
}

#[allow(dead_code)]
fn main() -> bmsync::Result<()> {
    run_example().map(|_| ())
}
