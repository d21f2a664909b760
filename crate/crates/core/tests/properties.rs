use std::collections::BTreeMap;

use bmsync::certificates::{
    brute_force_opt, certify, check_exact_recovery, nuclear_norm, q_decompose, DEFAULT_TOL,
};
use bmsync::conditions::{algebraic_connectivity, check_z2_determ, rho_delta};
use bmsync::experiment::{parse_csv, wilson_interval, CellResult, SweepResult, TrialRecord};
use bmsync::instances::{
    apply_monotone_adversary, gen_er_bernoulli, gen_gaussian, z2_decomposition, CostMatrix, Graph,
    NoiseMatrix, SignVector,
};
use bmsync::manifold::{
    hessian_form, objective, project_tangent, random_point, random_tangent, retract,
    riemannian_gradient, s_matrix, FactorPoint,
};
use bmsync::solver::{solve, SolverConfig};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn matrix(n: usize, r: usize, vals: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n, r, |i, k| vals[(i * r + k) % vals.len()])
}

fn signs(bits: &[bool]) -> SignVector {
    SignVector::new(bits.iter().map(|&b| if b { 1 } else { -1 }).collect()).unwrap()
}

fn sym_zero_diag(n: usize, vals: &[f64]) -> DMatrix<f64> {
    let mut m = matrix(n, n, vals);
    m = (&m + m.transpose()) * 0.5;
    m.fill_diagonal(0.0);
    m
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn projection_is_idempotent_and_self_adjoint(
        n in 2usize..12, r in 2usize..6, seed in 0u64..1000,
        a in prop::collection::vec(-2.0f64..2.0, 64), b in prop::collection::vec(-2.0f64..2.0, 64),
    ) {
        let y = random_point(n, r, seed).unwrap();
        let (a, b) = (matrix(n, r, &a), matrix(n, r, &b));
        let pa = project_tangent(&y, &a).unwrap();
        let pb = project_tangent(&y, &b).unwrap();
        let lhs = pa.matrix().dot(&b);
        let rhs = a.dot(pb.matrix());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        let ppa = project_tangent(&y, pa.matrix()).unwrap();
        prop_assert!((ppa.matrix() - pa.matrix()).norm() <= 1e-12 * (1.0 + pa.norm()));
        for i in 0..n {
            prop_assert!(pa.matrix().row(i).dot(&y.matrix().row(i)).abs() <= 1e-12 * (1.0 + a.row(i).norm()));
        }
    }

    #[test]
    fn retraction_stays_feasible(n in 1usize..15, r in 1usize..6, seed in 0u64..1000, t in 0.0f64..50.0) {
        let y = random_point(n, r, seed).unwrap();
        let v = random_tangent(&y, seed + 1);
        let next = retract(&y, &v, t).unwrap();
        prop_assert!(next.feasibility_error() <= 1e-12);
    }

    #[test]
    fn gradient_is_minus_two_s_y(n in 2usize..12, r in 2usize..5, seed in 0u64..500, sigma in 0.0f64..3.0) {
        let inst = gen_gaussian(n, sigma, seed).unwrap();
        let y = random_point(n, r, seed + 7).unwrap();
        let g = riemannian_gradient(&inst.cost, &y).unwrap();
        let s = s_matrix(&inst.cost, &y).unwrap();
        let expect = s.matrix() * y.matrix() * -2.0;
        prop_assert!((g.matrix() - &expect).norm() <= 1e-10 * (1.0 + expect.norm()));
    }

    #[test]
    fn hessian_form_matches_double_loop(n in 2usize..10, r in 2usize..5, seed in 0u64..500) {
        let inst = gen_gaussian(n, 1.0, seed).unwrap();
        let y = random_point(n, r, seed + 1).unwrap();
        let v = random_tangent(&y, seed + 2);
        let c = inst.cost.entries();
        let (ym, vm) = (y.matrix(), v.matrix());
        let mut direct = 0.0;
        for i in 0..n {
            let si: f64 = (0..n).map(|j| c[(i, j)] * ym.row(i).dot(&ym.row(j))).sum();
            direct += si * vm.row(i).norm_squared();
            for j in 0..n {
                direct -= c[(i, j)] * vm.row(i).dot(&vm.row(j));
            }
        }
        let h = hessian_form(&inst.cost, &y, &v).unwrap();
        prop_assert!((h - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn nuclear_bound_on_quartic_remainder(n in 5usize..30, r in 2usize..10, seed in 0u64..1000) {
        let y = random_point(n, r, seed).unwrap();
        let d = q_decompose(&y);
        prop_assert!(nuclear_norm(&d.q_tilde) <= 14.0 * d.w.norm_squared() + 1e-9);
    }

    #[test]
    fn sign_symbols_round_trip(bits in prop::collection::vec(any::<bool>(), 0..40)) {
        let z = signs(&bits);
        prop_assert_eq!(SignVector::from_symbols(&z.to_symbols()).unwrap(), z);
    }

    #[test]
    fn z2_reports_are_conjugation_invariant(
        n in 4usize..10, vals in prop::collection::vec(-1.0f64..1.0, 100),
        zb in prop::collection::vec(any::<bool>(), 10), sb in prop::collection::vec(any::<bool>(), 10),
    ) {
        let z = signs(&zb[..n]);
        let s = signs(&sb[..n]);
        let g = Graph::complete(n, 1.0);
        let delta = NoiseMatrix::new(sym_zero_diag(n, &vals) * 0.1).unwrap();
        let a = check_z2_determ(&g, &delta, &z, 6).unwrap();
        let conj = NoiseMatrix::new(s.conjugate(delta.entries())).unwrap();
        let b = check_z2_determ(&g, &conj, &s.hadamard(&z), 6).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * (1.0 + x.abs());
        prop_assert!(close(a.rho_delta, b.rho_delta) && close(a.delta_opnorm, b.delta_opnorm));
        prop_assert!(close(a.margin, b.margin));
        prop_assert_eq!(a.satisfied, b.satisfied);
    }

    #[test]
    fn monotone_adversary_raises_connectivity(n in 6usize..20, seed in 0u64..200, density in 0.0f64..1.0) {
        let inst = gen_er_bernoulli(n, 0.5, 0.8, seed).unwrap();
        let adv = apply_monotone_adversary(&inst, 1.0, density, seed + 3).unwrap();
        let (g0, d0) = z2_decomposition(&inst).unwrap();
        let (g1, d1) = z2_decomposition(&adv).unwrap();
        prop_assert!(algebraic_connectivity(&g1) >= algebraic_connectivity(&g0) - 1e-9 * n as f64);
        prop_assert!((d0.entries() - d1.entries()).norm() <= 1e-12);
        if n >= 7 {
            let z = inst.truth.as_ref().unwrap();
            let m0 = check_z2_determ(&g0, &d0, z, 8).unwrap().margin;
            let m1 = check_z2_determ(&g1, &d1, z, 8).unwrap().margin;
            prop_assert!(m1 >= m0 - 1e-9 * n as f64);
        }
    }

    #[test]
    fn single_flip_predicate_matches_objective(n in 3usize..10, vals in prop::collection::vec(-1.0f64..1.0, 100), zb in prop::collection::vec(any::<bool>(), 10)) {
        let z = signs(&zb[..n]);
        let g = Graph::complete(n, 1.0);
        let delta = NoiseMatrix::new(sym_zero_diag(n, &vals) * 3.0).unwrap();
        let cost = CostMatrix::new(z.conjugate(g.weights()) + delta.entries()).unwrap();
        let (_, rho) = rho_delta(&delta, &z).unwrap();
        let base = cost.quadratic_form(&z);
        for (i, d) in g.degrees().iter().enumerate() {
            let decreases = cost.quadratic_form(&z.flipped(i)) < base;
            prop_assert_eq!(decreases, *d > rho[i]);
        }
    }

    #[test]
    fn relaxation_bounds_sign_optimum(n in 3usize..9, vals in prop::collection::vec(-1.0f64..1.0, 81), seed in 0u64..100) {
        let c = CostMatrix::zeroing_diagonal(sym_zero_diag(n, &vals)).unwrap();
        let res = solve(&c, n, &SolverConfig::default(), seed).unwrap();
        let cert = certify(&c, &res.point, DEFAULT_TOL).unwrap();
        let (_, best) = brute_force_opt(&c).unwrap();
        let f = objective(&c, &res.point).unwrap();
        if cert.is_global {
            prop_assert!(f >= best - 1e-8 * best.abs().max(1.0));
        }
        if cert.is_tight {
            prop_assert!((f - best).abs() <= 1e-8 * best.abs().max(1.0));
        }
    }

    #[test]
    fn exact_recovery_implies_small_rank_one_gap(n in 2usize..20, r in 2usize..6, seed in 0u64..500, zb in prop::collection::vec(any::<bool>(), 20), noise in 0.0f64..1e-3) {
        let z = signs(&zb[..n]);
        let base = random_point(1, r, seed).unwrap();
        let u: Vec<f64> = base.matrix().row(0).iter().copied().collect();
        let jitter = random_point(n, r, seed + 1).unwrap();
        let y = FactorPoint::normalized(
            DMatrix::from_fn(n, r, |i, k| z.get(i) * u[k]) + jitter.matrix() * noise,
        ).unwrap();
        let rep = check_exact_recovery(&y, &z).unwrap();
        if rep.is_exact {
            prop_assert!(rep.rank1_gap <= 1e-6 * rep.sigma1);
            prop_assert!(rep.labels == z || rep.labels == z.negated());
        }
        if noise == 0.0 {
            prop_assert!(rep.is_exact);
        }
    }

    #[test]
    fn wilson_interval_contains_the_estimate(n in 1usize..200, k in 0usize..200) {
        let k = k % (n + 1);
        let (lo, hi) = wilson_interval(k, n);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn csv_round_trip_reproduces_frequencies(flags in prop::collection::vec(prop::collection::vec(any::<bool>(), 1..8), 0..5)) {
        let cells: Vec<CellResult> = flags.iter().enumerate().map(|(c, fl)| {
            let mut coords = BTreeMap::new();
            coords.insert("x".to_string(), c as f64 * 0.1);
            let records = fl.iter().enumerate().map(|(t, &rec)| TrialRecord {
                cell: coords.clone(), trial: t, recovered: rec, certified_global: !rec,
                objective: 1.0 / (1.0 + t as f64), grad_residual: 1e-13, s_min_eig: -1e-300,
                condition_margin: -3.25, rank1_gap: 0.1, correlation: 0.7, status: "max-iters".into(), wall_ms: 3,
            }).collect();
            CellResult { coords, records }
        }).collect();
        let result = SweepResult { axes: vec!["x".into()], cells };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        bmsync::experiment::write_csv(&result, &path).unwrap();
        let back = parse_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
        prop_assert_eq!(&back, &result);
        let fa: Vec<f64> = back.cells.iter().map(|c| c.frequency()).collect();
        let fb: Vec<f64> = result.cells.iter().map(|c| c.frequency()).collect();
        prop_assert_eq!(fa, fb);
    }
}
