//! Geometry of the product of unit spheres `{Y in R^{n x r} : ||Y_i|| = 1}`.
//!
//! Sign convention: the objective `<C, Y Y^T>` is maximized. A point is
//! second-order critical when `S(Y) Y = 0` and `<S(Y), V V^T> >= 0` for every
//! tangent `V`, where `S(Y) = ddiag(C Y Y^T) - C`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::instances::CostMatrix;
use crate::linalg::CostOperator;
use crate::rng::{self, tag};

/// Row-norm tolerance for feasible points.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Feasible point: an `n x r` matrix with unit-norm rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPoint {
    y: DMatrix<f64>,
}

impl FactorPoint {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.ncols() == 0 {
            return Err(Error::invalid("factor rank r must be at least 1"));
        }
        for i in 0..y.nrows() {
            let norm = y.row(i).norm();
            if !norm.is_finite() {
                return Err(Error::NonFinite(format!("factor row {i}")));
            }
            if (norm - 1.0).abs() > FEASIBILITY_TOL {
                return Err(Error::InvariantViolation(format!(
                    "factor row {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self { y })
    }

    /// Normalizes every row; fails on a zero row.
    pub fn normalized(mut y: DMatrix<f64>) -> Result<Self> {
        for i in 0..y.nrows() {
            let norm = y.row(i).norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::DegenerateStep { row: i });
            }
            for k in 0..y.ncols() {
                y[(i, k)] /= norm;
            }
        }
        Ok(Self { y })
    }

    /// `z u^T` for a sign vector `z` and a unit vector `u`.
    pub fn rank_one(z: &[f64], u: &[f64]) -> Result<Self> {
        Self::normalized(DMatrix::from_fn(z.len(), u.len(), |i, k| z[i] * u[k]))
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn r(&self) -> usize {
        self.y.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.y
    }

    /// Largest deviation of a row norm from one.
    pub fn feasibility_error(&self) -> f64 {
        (0..self.n())
            .map(|i| (self.y.row(i).norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Tangent vector at a [`FactorPoint`]: `<Y_i, V_i> = 0` for every row.
#[derive(Debug, Clone)]
pub struct TangentMatrix<'a> {
    base: &'a FactorPoint,
    v: DMatrix<f64>,
}

impl<'a> TangentMatrix<'a> {
    /// Checks tangency within `1e-12` (relative to the row norm of `v`).
    pub fn new(base: &'a FactorPoint, v: DMatrix<f64>) -> Result<Self> {
        check_shape(base, &v)?;
        for i in 0..v.nrows() {
            let dot = base.y.row(i).dot(&v.row(i));
            if dot.abs() > 1e-12 * v.row(i).norm().max(1.0) {
                return Err(Error::InvariantViolation(format!(
                    "row {i} is not tangent: <Y_i, V_i> = {dot}"
                )));
            }
        }
        Ok(Self { base, v })
    }

    pub fn zeros(base: &'a FactorPoint) -> Self {
        Self {
            base,
            v: DMatrix::zeros(base.n(), base.r()),
        }
    }

    pub fn base(&self) -> &FactorPoint {
        self.base
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.v
    }

    pub fn norm(&self) -> f64 {
        self.v.norm()
    }

    pub fn scaled(&self, c: f64) -> TangentMatrix<'a> {
        TangentMatrix {
            base: self.base,
            v: &self.v * c,
        }
    }
}

/// Certificate matrix `S(Y) = ddiag(C Y Y^T) - C`.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateMatrix {
    s: DMatrix<f64>,
}

impl CertificateMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.s
    }
}

fn check_shape(y: &FactorPoint, v: &DMatrix<f64>) -> Result<()> {
    if v.nrows() != y.n() || v.ncols() != y.r() {
        return Err(Error::dims(
            format!("{}x{}", y.n(), y.r()),
            format!("{}x{}", v.nrows(), v.ncols()),
        ));
    }
    Ok(())
}

fn check_cost<C: CostOperator + ?Sized>(c: &C, y: &FactorPoint) -> Result<()> {
    if c.dim() != y.n() {
        return Err(Error::dims(format!("cost of size {}", y.n()), c.dim()));
    }
    Ok(())
}

/// `s_i = <(C Y)_i, Y_i>`, the diagonal of `C Y Y^T`.
pub(crate) fn row_dots(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let mut out = vec![0.0; a.nrows()];
    for k in 0..a.ncols() {
        for (i, o) in out.iter_mut().enumerate() {
            *o += a[(i, k)] * b[(i, k)];
        }
    }
    out
}

/// Rows `V_i - <V_i, Y_i> Y_i`.
pub(crate) fn project_rows(y: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let dots = row_dots(v, y);
    let mut out = v.clone();
    for k in 0..v.ncols() {
        for (i, d) in dots.iter().enumerate() {
            out[(i, k)] -= d * y[(i, k)];
        }
    }
    out
}

/// Gradient rows `2[(CY)_i - s_i Y_i]` from a precomputed `C Y`.
pub(crate) fn gradient_from_product(cy: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    project_rows(y, cy) * 2.0
}

/// Uniformly random point (normalized Gaussian rows).
pub fn random_point(n: usize, r: usize, seed: u64) -> Result<FactorPoint> {
    if r == 0 {
        return Err(Error::invalid("rank r must be at least 1"));
    }
    let mut rng = rng::stream(seed, &[tag::INIT]);
    loop {
        let y = DMatrix::from_fn(n, r, |_, _| StandardNormal.sample(&mut rng));
        // a zero Gaussian row has probability zero; redraw if it ever happens
        if let Ok(p) = FactorPoint::normalized(y) {
            return Ok(p);
        }
    }
}

/// Random tangent vector with Gaussian ambient entries.
pub fn random_tangent(y: &FactorPoint, seed: u64) -> TangentMatrix<'_> {
    let mut rng = rng::stream(seed, &[tag::ESCAPE]);
    let v = DMatrix::from_fn(y.n(), y.r(), |_, _| StandardNormal.sample(&mut rng));
    TangentMatrix {
        base: y,
        v: project_rows(&y.y, &v),
    }
}

/// `<C, Y Y^T>`.
pub fn objective<C: CostOperator + ?Sized>(c: &C, y: &FactorPoint) -> Result<f64> {
    check_cost(c, y)?;
    let cy = c.apply(&y.y);
    Ok(row_dots(&cy, &y.y).iter().sum())
}

/// `S(Y) = ddiag(C Y Y^T) - C` as a dense matrix.
pub fn s_matrix(c: &CostMatrix, y: &FactorPoint) -> Result<CertificateMatrix> {
    check_cost(c, y)?;
    let cy = c.apply(&y.y);
    let diag = row_dots(&cy, &y.y);
    let mut s = -c.entries().clone();
    for (i, d) in diag.into_iter().enumerate() {
        s[(i, i)] += d;
    }
    Ok(CertificateMatrix { s })
}

/// Riemannian gradient of `<C, Y Y^T>`; equals `-2 S(Y) Y`.
pub fn riemannian_gradient<'a, C: CostOperator + ?Sized>(
    c: &C,
    y: &'a FactorPoint,
) -> Result<TangentMatrix<'a>> {
    check_cost(c, y)?;
    let cy = c.apply(&y.y);
    Ok(TangentMatrix {
        base: y,
        v: gradient_from_product(&cy, &y.y),
    })
}

/// Orthogonal projection onto the tangent space at `y`.
pub fn project_tangent<'a>(y: &'a FactorPoint, v: &DMatrix<f64>) -> Result<TangentMatrix<'a>> {
    check_shape(y, v)?;
    Ok(TangentMatrix {
        base: y,
        v: project_rows(&y.y, v),
    })
}

/// Metric-projection retraction: rows `(Y_i + t V_i) / ||Y_i + t V_i||`.
pub fn retract(y: &FactorPoint, v: &TangentMatrix<'_>, t: f64) -> Result<FactorPoint> {
    check_shape(y, &v.v)?;
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("step t = {t} must be >= 0")));
    }
    if t == 0.0 {
        return Ok(y.clone());
    }
    FactorPoint::normalized(&y.y + &v.v * t)
}

/// `<S(Y), V V^T>`, nonnegative for all tangent `V` at a second-order
/// critical point.
pub fn hessian_form<C: CostOperator + ?Sized>(
    c: &C,
    y: &FactorPoint,
    v: &TangentMatrix<'_>,
) -> Result<f64> {
    check_cost(c, y)?;
    check_shape(y, &v.v)?;
    let cy = c.apply(&y.y);
    let s = row_dots(&cy, &y.y);
    let cv = c.apply(&v.v);
    let vv = row_dots(&v.v, &v.v);
    let diag_part: f64 = s.iter().zip(&vv).map(|(a, b)| a * b).sum();
    let c_part: f64 = row_dots(&cv, &v.v).iter().sum();
    Ok(diag_part - c_part)
}
