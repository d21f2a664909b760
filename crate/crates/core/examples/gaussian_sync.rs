//! Z2 synchronization under Gaussian noise below the recovery threshold.
//!
//! Run with `cargo run --release --example gaussian_sync`.

use bmsync::certificates::{certify, check_exact_recovery, DEFAULT_TOL};
use bmsync::conditions::gaussian_sigma_threshold;
use bmsync::instances::gen_gaussian;
use bmsync::solver::{solve, SolverConfig};

pub struct Outcome {
    pub threshold: f64,
    pub recovered: bool,
    pub certified: bool,
}

pub fn run_example() -> bmsync::Result<Outcome> {
    let (n, r) = (200, 8);
    let threshold = gaussian_sigma_threshold(n, r, 0.01)?;
    // Well inside the benign regime.
    let sigma = 0.5 * threshold;
    let inst = gen_gaussian(n, sigma, 42)?;
    let res = solve(&inst.cost, r, &SolverConfig::default(), 7)?;
    let cert = certify(&inst.cost, &res.point, DEFAULT_TOL)?;
    let rec = check_exact_recovery(&res.point, inst.truth.as_ref().expect("planted"))?;

    println!("n = {n}, r = {r}, sigma = {sigma:.3} (threshold {threshold:.3})");
    println!(
        "status {:?} after {} iterations, objective {:.4}",
        res.status, res.iterations, res.objective_value
    );
    println!(
        "S(Y) min eigenvalue {:.3e}, global certificate: {}",
        cert.s_min_eig, cert.is_global
    );
    println!(
        "exact recovery: {} (sigma_2/sigma_1 = {:.2e}, correlation {:.3})",
        rec.is_exact,
        rec.rank1_gap / rec.sigma1,
        rec.correlation
    );
    Ok(Outcome {
        threshold,
        recovered: rec.is_exact,
        certified: cert.is_global,
    })
}

#[allow(dead_code)]
fn main() -> bmsync::Result<()> {
    run_example().map(|_| ())
}
