//! Optimality certificates, label extraction, the exhaustive oracle and the
//! matrix identities used inside the landscape argument.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instances::{CostMatrix, SignVector};
use crate::linalg::{self, CostKernel, CostOperator, LanczosConfig, RitzPair};
use crate::manifold::{self, FactorPoint};
use crate::rng::{self, tag};

/// Default relative tolerance for [`certify`].
pub const DEFAULT_TOL: f64 = 1e-8;

/// Relative Frobenius tolerance for `Y = z u^T`.
pub const EXACT_TOL: f64 = 1e-6;

/// Largest `n` accepted by [`brute_force_opt`].
pub const BRUTE_FORCE_MAX_N: usize = 22;

/// Cap on the Krylov dimension for the tangent-curvature estimate.
const TANGENT_LANCZOS_CAP: usize = 400;

const TIE_SEED: u64 = 0x7469_6573;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalityReport {
    /// `||S(Y) Y||_F / (1 + ||C||_op)`.
    pub grad_residual: f64,
    pub s_y_residual: f64,
    pub s_min_eig: f64,
    /// Residual bound of the Lanczos estimate of `s_min_eig`.
    pub s_min_residual: f64,
    /// `min(0, min <S, V V^T>)` over unit tangent `V`.
    pub tangent_min_curvature: f64,
    pub cost_opnorm: f64,
    /// Absolute threshold `tol (1 + ||C||_op)` used for every flag.
    pub threshold: f64,
    pub is_first_order: bool,
    pub is_second_order: bool,
    /// `S(Y) Y = 0` and `S(Y) >= 0`: `Y Y^T` solves the SDP relaxation.
    pub is_global: bool,
    /// Second singular value of `Y` at most `1e-6` times the first.
    pub rank_one: bool,
    /// Global and rank one, so the sign vector behind `Y` solves the
    /// combinatorial problem as well.
    pub is_tight: bool,
}

/// `s_i = <(C Y)_i, Y_i>`, the diagonal of `C Y Y^T`.
pub(crate) fn s_diagonal<C: CostOperator + ?Sized>(
    c: &C,
    y: &FactorPoint,
) -> (DMatrix<f64>, Vec<f64>) {
    let cy = c.apply(y.matrix());
    let s = manifold::row_dots(&cy, y.matrix());
    (cy, s)
}

/// Smallest eigenpair of `S = diag(s) - C` by Lanczos.
pub(crate) fn s_min_eigenpair<C: CostOperator + ?Sized>(c: &C, s: &[f64], seed: u64) -> RitzPair {
    let n = c.dim();
    let ext = linalg::lanczos_extremes(
        n,
        |x, out| {
            c.apply_vec(x, out);
            for i in 0..n {
                out[i] = s[i] * x[i] - out[i];
            }
        },
        None,
        &LanczosConfig::for_dim(n, seed),
    );
    ext.smallest
}

/// `min(0, min_V <S, V V^T>)` over unit tangent vectors at `y`.
pub(crate) fn tangent_min_curvature<C: CostOperator + ?Sized>(
    c: &C,
    y: &FactorPoint,
    s: &[f64],
    seed: u64,
) -> f64 {
    tangent_min_pair(c, y, s, seed).0.min(0.0)
}

/// Smallest Ritz pair of `V -> P_T(S V)` on the tangent space at `y`.
pub(crate) fn tangent_min_pair<C: CostOperator + ?Sized>(
    c: &C,
    y: &FactorPoint,
    s: &[f64],
    seed: u64,
) -> (f64, DMatrix<f64>) {
    let (n, r) = (y.n(), y.r());
    let dim = n * r;
    let mut cfg = LanczosConfig::for_dim(dim, seed);
    cfg.max_iters = cfg.max_iters.min(TANGENT_LANCZOS_CAP);
    let ym = y.matrix();
    let ext = linalg::lanczos_extremes(
        dim,
        |x, out| {
            let v = manifold::project_rows(ym, &DMatrix::from_column_slice(n, r, x.as_slice()));
            let w = manifold::project_rows(ym, &apply_s(c, s, &v));
            out.copy_from_slice(w.as_slice());
        },
        None,
        &cfg,
    );
    let v = manifold::project_rows(
        ym,
        &DMatrix::from_column_slice(n, r, ext.smallest.vector.as_slice()),
    );
    (ext.smallest.value, v)
}

/// `S V = diag(s) V - C V`.
pub(crate) fn apply_s<C: CostOperator + ?Sized>(
    c: &C,
    s: &[f64],
    v: &DMatrix<f64>,
) -> DMatrix<f64> {
    let mut sv = -c.apply(v);
    for k in 0..v.ncols() {
        for (i, si) in s.iter().enumerate() {
            sv[(i, k)] += si * v[(i, k)];
        }
    }
    sv
}

/// Singular values of `y`, descending.
pub fn singular_values(y: &DMatrix<f64>) -> Vec<f64> {
    if y.nrows() == 0 || y.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = y
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

fn second_singular_value(sv: &[f64]) -> f64 {
    sv.get(1).copied().unwrap_or(0.0)
}

/// Checks first- and second-order criticality and the SDP certificate at `y`.
pub fn certify(c: &CostMatrix, y: &FactorPoint, tol: f64) -> Result<CriticalityReport> {
    let kernel = CostKernel::select(c.entries());
    let norm = linalg::cost_opnorm(&kernel, rng::derive_seed(0, &[tag::LANCZOS]));
    certify_with_norm(&kernel, y, tol, norm)
}

/// As [`certify`] with a precomputed `||C||_op` and any cost operator.
pub fn certify_with_norm<C: CostOperator + ?Sized>(
    c: &C,
    y: &FactorPoint,
    tol: f64,
    cost_opnorm: f64,
) -> Result<CriticalityReport> {
    if c.dim() != y.n() {
        return Err(Error::dims(format!("cost of size {}", y.n()), c.dim()));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::invalid(format!("tolerance {tol} must be positive")));
    }
    let (cy, s) = s_diagonal(c, y);
    let ym = y.matrix();
    // S Y = diag(s) Y - C Y
    let mut sy = -cy;
    for k in 0..y.r() {
        for i in 0..y.n() {
            sy[(i, k)] += s[i] * ym[(i, k)];
        }
    }
    let s_y_residual = sy.norm();
    if !s_y_residual.is_finite() {
        return Err(Error::NonFinite("certificate residual".into()));
    }
    let scale = 1.0 + cost_opnorm;
    let threshold = tol * scale;
    let seed = rng::derive_seed(0, &[tag::LANCZOS, y.n() as u64]);
    let pair = if y.n() == 0 {
        RitzPair {
            value: 0.0,
            vector: DVector::zeros(0),
            residual: 0.0,
        }
    } else {
        s_min_eigenpair(c, &s, seed)
    };
    let is_first_order = s_y_residual <= threshold;
    let curvature = if y.n() == 0 {
        0.0
    } else {
        tangent_min_curvature(c, y, &s, seed ^ 1)
    };
    let is_global = is_first_order && pair.value >= -threshold;
    let sv = singular_values(ym);
    let rank_one = sv
        .first()
        .is_some_and(|s1| second_singular_value(&sv) <= EXACT_TOL * s1);
    Ok(CriticalityReport {
        grad_residual: s_y_residual / scale,
        s_y_residual,
        s_min_eig: pair.value,
        s_min_residual: pair.residual,
        tangent_min_curvature: curvature,
        cost_opnorm,
        threshold,
        is_first_order,
        is_second_order: is_first_order && (curvature >= -threshold || is_global),
        is_global,
        rank_one,
        is_tight: is_global && rank_one,
    })
}

/// Signs of the leading left singular vector of `y`.
///
/// Zero entries map to `+1` and the result is flipped so that the first
/// label is `+1`. When the top two singular values agree to `1e-12`
/// (relative), the direction is the projection of a fixed pseudo-random
/// vector onto the top singular subspace.
pub fn extract_labels(y: &FactorPoint) -> SignVector {
    let ym = y.matrix();
    let n = y.n();
    if n == 0 {
        return SignVector::ones(0);
    }
    let gram = ym.transpose() * ym;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..y.r()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let tied: Vec<usize> = order
        .iter()
        .copied()
        .take_while(|&k| top - eig.eigenvalues[k] <= 1e-12 * top.abs().max(f64::MIN_POSITIVE))
        .collect();
    let w = if tied.len() == 1 {
        eig.eigenvectors.column(order[0]).into_owned()
    } else {
        let mut rng = rng::stream(TIE_SEED, &[]);
        let g = DVector::from_fn(y.r(), |_, _| StandardNormal.sample(&mut rng));
        let mut w = DVector::zeros(y.r());
        for &k in &tied {
            let col = eig.eigenvectors.column(k);
            w.axpy(col.dot(&g), &col, 1.0);
        }
        w
    };
    let u = ym * w;
    let mut labels: Vec<i8> = u.iter().map(|v| if *v < 0.0 { -1 } else { 1 }).collect();
    if labels[0] < 0 {
        labels.iter_mut().for_each(|l| *l = -*l);
    }
    SignVector::new(labels).expect("labels are signs")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub labels: SignVector,
    pub is_exact: bool,
    /// `||Y - z u*^T||_F / ||Y||_F` with `u* = Y^T z / n`.
    pub relative_residual: f64,
    pub u_star: Vec<f64>,
    pub sigma1: f64,
    /// Second singular value of `Y`.
    pub rank1_gap: f64,
    /// `|<labels, z>| / n`.
    pub correlation: f64,
}

/// Tests `Y = z u^T` for some unit `u`, up to the global sign.
pub fn check_exact_recovery(y: &FactorPoint, z: &SignVector) -> Result<RecoveryReport> {
    if y.n() != z.len() {
        return Err(Error::dims(y.n(), z.len()));
    }
    let n = y.n();
    let ym = y.matrix();
    let zf = DVector::from_vec(z.to_f64());
    let u = if n == 0 {
        DVector::zeros(y.r())
    } else {
        ym.transpose() * &zf / n as f64
    };
    let resid = (ym - &zf * u.transpose()).norm();
    let ynorm = ym.norm();
    let relative_residual = if ynorm > 0.0 { resid / ynorm } else { 0.0 };
    let sv = singular_values(ym);
    let sigma1 = sv.first().copied().unwrap_or(0.0);
    let rank1_gap = second_singular_value(&sv);
    let labels = extract_labels(y);
    let agree: f64 = labels
        .entries()
        .iter()
        .zip(z.entries())
        .map(|(a, b)| f64::from(a * b))
        .sum();
    let correlation = if n == 0 { 1.0 } else { agree.abs() / n as f64 };
    Ok(RecoveryReport {
        labels,
        is_exact: relative_residual <= EXACT_TOL && rank1_gap <= EXACT_TOL * sigma1,
        relative_residual,
        u_star: u.iter().copied().collect(),
        sigma1,
        rank1_gap,
        correlation,
    })
}

/// Exact maximizer of `<C, x x^T>` over `x in {+-1}^n` with `x_1 = +1`.
///
/// Patterns are visited in Gray-code order with O(n) incremental updates.
/// Values within `1e-12` (relative) of each other count as ties, resolved in
/// favour of the lexicographically first pattern with `+1 < -1`.
pub fn brute_force_opt(c: &CostMatrix) -> Result<(SignVector, f64)> {
    let n = c.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::TooLarge(format!(
            "exhaustive search needs n <= {BRUTE_FORCE_MAX_N}, got {n}"
        )));
    }
    if n == 0 {
        return Ok((SignVector::ones(0), 0.0));
    }
    let m = c.entries();
    let mut x = vec![1.0f64; n];
    let full = |x: &[f64]| -> (Vec<f64>, f64) {
        let h: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| m[(i, j)] * x[j]).sum())
            .collect();
        let f = h.iter().zip(x).map(|(a, b)| a * b).sum();
        (h, f)
    };
    let (mut h, mut f) = full(&x);
    // key bit (n-1-i) set iff x_i = -1, so smaller keys are lexicographically first
    let mut key: u32 = 0;
    let mut best = (f, key);
    let tie = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let steps: u64 = 1u64 << (n - 1);
    for step in 1..steps {
        let k = 1 + step.trailing_zeros() as usize;
        let xk = x[k];
        f -= 4.0 * xk * h[k];
        for (j, hj) in h.iter_mut().enumerate() {
            *hj -= 2.0 * xk * m[(j, k)];
        }
        x[k] = -xk;
        key ^= 1 << (n - 1 - k);
        if step % 4096 == 0 {
            (h, f) = full(&x);
        }
        if tie(f, best.0) {
            if key < best.1 {
                best = (best.0.max(f), key);
            }
        } else if f > best.0 {
            best = (f, key);
        }
    }
    let pattern: Vec<i8> = (0..n)
        .map(|i| {
            if best.1 >> (n - 1 - i) & 1 == 1 {
                -1
            } else {
                1
            }
        })
        .collect();
    let signs = SignVector::new(pattern)?;
    let value = c.quadratic_form(&signs);
    Ok((signs, value))
}

#[derive(Debug, Clone, PartialEq)]
pub struct QDecomposition {
    /// `Q_ij = ||Y_i - Y_j||^4 / 4`.
    pub q: DMatrix<f64>,
    /// `a_i = ||W_i||^4 / 4`.
    pub a: DVector<f64>,
    /// `Q - a 1^T - 1 a^T`.
    pub q_tilde: DMatrix<f64>,
    /// `Y - 1 u^T` with `u` the column mean of `Y`.
    pub w: DMatrix<f64>,
}

/// Splits the quartic distance matrix of `y` around its mean row.
pub fn q_decompose(y: &FactorPoint) -> QDecomposition {
    let ym = y.matrix();
    let n = y.n();
    let q = DMatrix::from_fn(n, n, |i, j| {
        let d2 = (ym.row(i) - ym.row(j)).norm_squared();
        0.25 * d2 * d2
    });
    let mut w = ym.clone();
    if n > 0 {
        for k in 0..y.r() {
            let mean = ym.column(k).sum() / n as f64;
            w.column_mut(k).add_scalar_mut(-mean);
        }
    }
    let a = DVector::from_fn(n, |i, _| 0.25 * w.row(i).norm_squared().powi(2));
    let q_tilde = DMatrix::from_fn(n, n, |i, j| q[(i, j)] - a[i] - a[j]);
    QDecomposition { q, a, q_tilde, w }
}

/// Sum of singular values.
pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().sum()
}

/// `(r-3) 1 1^T + 2 Y Y^T + Q`, the second moment of `Ydot_i = G - <G, Y_i> Y_i`
/// for a standard Gaussian row `G` in `r` dimensions.
pub fn expected_direction_matrix(y: &FactorPoint, r: usize) -> Result<DMatrix<f64>> {
    if r != y.r() {
        return Err(Error::dims(y.r(), r));
    }
    let ym = y.matrix();
    let gram = ym * ym.transpose();
    let rf = r as f64;
    Ok(DMatrix::from_fn(y.n(), y.n(), |i, j| {
        let c = gram[(i, j)];
        let d2 = (ym.row(i) - ym.row(j)).norm_squared();
        rf - 3.0 + 2.0 * c + 0.25 * d2 * d2
    }))
}
