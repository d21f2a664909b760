//! Compares the relaxation's certificate with exhaustive search on small
//! random problems.
//!
//! A global certificate proves the factor solves the semidefinite
//! relaxation. It pins down the sign optimum only when the factor is also
//! rank one.

use bmsync::certificates::{brute_force_opt, certify, DEFAULT_TOL};
use bmsync::instances::CostMatrix;
use bmsync::rng;
use bmsync::solver::{solve, SolverConfig};
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

pub struct Outcome {
    pub trials: usize,
    pub global: usize,
    pub tight: usize,
    /// Tight certificates whose value differs from the exhaustive optimum.
    pub tight_mismatches: usize,
}

pub fn run_example() -> bmsync::Result<Outcome> {
    let (n, trials) = (10, 20);
    let mut out = Outcome {
        trials,
        global: 0,
        tight: 0,
        tight_mismatches: 0,
    };
    for t in 0..trials {
        let mut g = rng::stream(2024, &[t as u64]);
        let mut m = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut g));
        m = (&m + m.transpose()) * 0.5;
        let c = CostMatrix::zeroing_diagonal(m)?;
        let res = solve(&c, n, &SolverConfig::default(), t as u64)?;
        let cert = certify(&c, &res.point, DEFAULT_TOL)?;
        let (_, best) = brute_force_opt(&c)?;
        let gap = (res.objective_value - best) / best.abs();
        out.global += cert.is_global as usize;
        if cert.is_tight {
            out.tight += 1;
            if gap.abs() > 1e-8 {
                out.tight_mismatches += 1;
            }
        }
        println!(
            "trial {t:>2}: global {:<5} rank one {:<5} relaxation/optimum - 1 = {gap:.2e}",
            cert.is_global, cert.rank_one
        );
    }
    println!(
        "{} of {trials} certified global, {} tight, {} tight mismatches",
        out.global, out.tight, out.tight_mismatches
    );
    Ok(out)
}

#[allow(dead_code)]
fn main() -> bmsync::Result<()> {
    run_example().map(|_| ())
}
