//! Symmetric eigenvalue kernels and matrix-product backends.
//!
//! The Lanczos routine here keeps the full Krylov basis and reorthogonalizes
//! every new vector against it twice. That costs O(n k) per step but makes the
//! Ritz values reliable down to the tolerances the certificates need.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};

use crate::rng;

/// Anything that can multiply an `n x r` block and an `n`-vector by a symmetric
/// cost matrix.
pub trait CostOperator: Sync {
    fn dim(&self) -> usize;

    /// Returns `C Y`.
    fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64>;

    /// Writes `C x` into `out`.
    fn apply_vec(&self, x: &DVector<f64>, out: &mut DVector<f64>);
}

impl CostOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self * y
    }

    fn apply_vec(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, self, x, 0.0);
    }
}

/// `C = shift * (11^T - I) + R` with `R` stored in compressed sparse rows.
///
/// Graph-derived costs (signed adjacency, centered SBM adjacency) are of this
/// form with a small number of nonzeros in `R`.
#[derive(Debug, Clone)]
pub struct ShiftedSparse {
    n: usize,
    shift: f64,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl ShiftedSparse {
    /// Builds the compressed form when at most `max_fill` of the off-diagonal
    /// entries differ from the most frequent off-diagonal value.
    pub fn from_dense(c: &DMatrix<f64>, max_fill: f64) -> Option<Self> {
        let n = c.nrows();
        if n < 2 {
            return None;
        }
        let mut counts: std::collections::HashMap<u64, usize> = Default::default();
        for j in 0..n {
            for i in (j + 1)..n {
                *counts.entry(c[(i, j)].to_bits()).or_default() += 1;
            }
        }
        let (mode_bits, mode_count) = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(b, c)| (*b, *c))?;
        let pairs = n * (n - 1) / 2;
        if ((pairs - mode_count) as f64) > max_fill * pairs as f64 {
            return None;
        }
        let shift = f64::from_bits(mode_bits);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                if i != j && c[(i, j)].to_bits() != mode_bits {
                    col_idx.push(j);
                    vals.push(c[(i, j)] - shift);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Some(Self {
            n,
            shift,
            row_ptr,
            col_idx,
            vals,
        })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn sparse_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi]
            .iter()
            .zip(&self.vals[lo..hi])
            .map(|(&j, &v)| v * x[j])
            .sum()
    }
}

impl CostOperator for ShiftedSparse {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, y.ncols());
        for k in 0..y.ncols() {
            let col = y.column(k);
            let col = col.as_slice();
            let total: f64 = col.iter().sum();
            let mut dst = out.column_mut(k);
            for i in 0..self.n {
                dst[i] = self.shift * (total - col[i]) + self.sparse_dot(i, col);
            }
        }
        out
    }

    fn apply_vec(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let xs = x.as_slice();
        let total: f64 = xs.iter().sum();
        for i in 0..self.n {
            out[i] = self.shift * (total - xs[i]) + self.sparse_dot(i, xs);
        }
    }
}

/// Dense or compressed backend chosen from the matrix contents.
#[derive(Debug, Clone)]
pub enum CostKernel<'a> {
    Dense(&'a DMatrix<f64>),
    Shifted(ShiftedSparse),
}

impl<'a> CostKernel<'a> {
    pub fn select(c: &'a DMatrix<f64>) -> Self {
        match ShiftedSparse::from_dense(c, 0.2) {
            Some(s) => CostKernel::Shifted(s),
            None => CostKernel::Dense(c),
        }
    }
}

impl CostOperator for CostKernel<'_> {
    fn dim(&self) -> usize {
        match self {
            CostKernel::Dense(m) => m.nrows(),
            CostKernel::Shifted(s) => s.dim(),
        }
    }

    fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            CostKernel::Dense(m) => m.apply(y),
            CostKernel::Shifted(s) => s.apply(y),
        }
    }

    fn apply_vec(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        match self {
            CostKernel::Dense(m) => m.apply_vec(x, out),
            CostKernel::Shifted(s) => s.apply_vec(x, out),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosConfig {
    /// Relative residual tolerance on the extreme Ritz pairs.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl LanczosConfig {
    pub fn for_dim(n: usize, seed: u64) -> Self {
        Self {
            tol: 1e-10,
            max_iters: 5 * n.max(1),
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RitzPair {
    pub value: f64,
    pub vector: DVector<f64>,
    /// `||M v - value v||`, an upper bound on the distance to the spectrum.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Extremes {
    pub smallest: RitzPair,
    pub largest: RitzPair,
    pub iterations: usize,
}

fn project_out(v: &mut DVector<f64>, unit: &DVector<f64>) {
    let c = unit.dot(v);
    v.axpy(-c, unit, 1.0);
}

/// Extreme eigenpairs of a symmetric operator given by `matvec`.
///
/// With `deflate = Some(u)` (unit vector) the iteration runs in the orthogonal
/// complement of `u`, which must be an eigenvector of the operator.
pub fn lanczos_extremes<F>(
    n: usize,
    mut matvec: F,
    deflate: Option<&DVector<f64>>,
    cfg: &LanczosConfig,
) -> Extremes
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>),
{
    let space = if deflate.is_some() {
        n.saturating_sub(1)
    } else {
        n
    };
    if space == 0 {
        let empty = RitzPair {
            value: 0.0,
            vector: DVector::zeros(n),
            residual: 0.0,
        };
        return Extremes {
            smallest: empty.clone(),
            largest: empty,
            iterations: 0,
        };
    }

    let mut rng = rng::stream(cfg.seed, &[rng::tag::LANCZOS]);
    let mut q = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    if let Some(u) = deflate {
        project_out(&mut q, u);
    }
    q /= q.norm();

    let limit = cfg.max_iters.min(space).max(1);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(limit.min(512));
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = DVector::zeros(n);
    let (eig, beta) = loop {
        matvec(&q, &mut w);
        if let Some(u) = deflate {
            project_out(&mut w, u);
        }
        let alpha = q.dot(&w);
        w.axpy(-alpha, &q, 1.0);
        if let (Some(prev), Some(&b)) = (basis.last(), betas.last()) {
            w.axpy(-b, prev, 1.0);
        }
        basis.push(q.clone());
        alphas.push(alpha);
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
            if let Some(u) = deflate {
                project_out(&mut w, u);
            }
        }
        let last_beta = w.norm();
        let k = alphas.len();

        let scale_hint = alphas
            .iter()
            .chain(betas.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let breakdown = last_beta <= 1e-14 * scale_hint.max(f64::MIN_POSITIVE);
        let done = breakdown || k >= limit;
        if done || k <= 20 || k % 8 == 0 {
            let t = DMatrix::from_fn(k, k, |i, j| {
                if i == j {
                    alphas[i]
                } else if i + 1 == j {
                    betas[i]
                } else if j + 1 == i {
                    betas[j]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let (imin, imax) = extreme_indices(&eig.eigenvalues);
            let scale = eig
                .eigenvalues
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(f64::MIN_POSITIVE);
            let rmin = (last_beta * eig.eigenvectors[(k - 1, imin)]).abs();
            let rmax = (last_beta * eig.eigenvectors[(k - 1, imax)]).abs();
            let converged = rmin <= cfg.tol * scale && rmax <= cfg.tol * scale;
            if done || converged {
                break (eig, last_beta);
            }
        }
        betas.push(last_beta);
        q = &w / last_beta;
    };
    let k = alphas.len();
    let (imin, imax) = extreme_indices(&eig.eigenvalues);
    let pair = |idx: usize| {
        let mut v = DVector::zeros(n);
        for (j, b) in basis.iter().enumerate() {
            v.axpy(eig.eigenvectors[(j, idx)], b, 1.0);
        }
        let norm = v.norm();
        if norm > 0.0 {
            v /= norm;
        }
        RitzPair {
            value: eig.eigenvalues[idx],
            vector: v,
            residual: (beta * eig.eigenvectors[(k - 1, idx)]).abs(),
        }
    };
    Extremes {
        smallest: pair(imin),
        largest: pair(imax),
        iterations: k,
    }
}

fn extreme_indices(values: &DVector<f64>) -> (usize, usize) {
    let mut imin = 0;
    let mut imax = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[imin] {
            imin = i;
        }
        if v > values[imax] {
            imax = i;
        }
    }
    (imin, imax)
}

/// All eigenvalues of a dense symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Largest absolute eigenvalue of a symmetric operator.
pub fn spectral_norm<F>(n: usize, matvec: F, seed: u64) -> f64
where
    F: FnMut(&DVector<f64>, &mut DVector<f64>),
{
    if n == 0 {
        return 0.0;
    }
    let ext = lanczos_extremes(n, matvec, None, &LanczosConfig::for_dim(n, seed));
    ext.smallest.value.abs().max(ext.largest.value.abs())
}

/// Spectral norm of a cost operator.
pub fn cost_opnorm<C: CostOperator + ?Sized>(c: &C, seed: u64) -> f64 {
    spectral_norm(c.dim(), |x, out| c.apply_vec(x, out), seed)
}
