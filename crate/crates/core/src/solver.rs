//! Riemannian gradient ascent with Armijo backtracking and explicit
//! negative-curvature escapes.
//!
//! Objective increments are evaluated as `2<CY, D> + <CD, D>` with
//! `D = Y' - Y`, which stays accurate long after `<C, Y'Y'^T> - <C, YY^T>`
//! would have cancelled to noise.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{apply_s, s_min_eigenpair, tangent_min_pair};
use crate::error::{Error, Result};
use crate::instances::CostMatrix;
use crate::linalg::{self, CostKernel, CostOperator};
use crate::manifold::{self, FactorPoint};
use crate::rng::{self, tag};

/// `max(4, ceil(log2 n))`.
pub fn default_rank(n: usize) -> usize {
    let log = if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    };
    log.max(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Bound on `||S(Y) Y||_F / (1 + ||C||_op)`.
    pub grad_tol: f64,
    /// Accepted `lambda_min(S(Y)) >= -curvature_tol (1 + ||C||_op)`.
    pub curvature_tol: f64,
    pub escape_step: f64,
    pub max_escapes: usize,
    pub armijo_c: f64,
    pub backtrack: f64,
    /// Keep a per-iteration log in [`SolveResult::trace`].
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            grad_tol: 1e-9,
            curvature_tol: 1e-8,
            escape_step: 1e-3,
            max_escapes: 25,
            armijo_c: 1e-4,
            backtrack: 0.5,
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("curvature_tol", self.curvature_tol),
            ("escape_step", self.escape_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} = {v} must be positive")));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::invalid(format!(
                "armijo_c = {} is not in (0, 1)",
                self.armijo_c
            )));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::invalid(format!(
                "backtrack = {} is not in (0, 1)",
                self.backtrack
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    EscapeExhausted,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max-iters",
            SolveStatus::EscapeExhausted => "escape-exhausted",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceEvent {
    Init,
    Step,
    Escape,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub event: TraceEvent,
    pub objective: f64,
    pub grad_residual: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub point: FactorPoint,
    pub status: SolveStatus,
    pub iterations: usize,
    pub escapes: usize,
    /// `||S(Y) Y||_F / (1 + ||C||_op)` at the returned point.
    pub grad_residual: f64,
    /// Lanczos estimate of `lambda_min(S(Y))` at the returned point.
    pub min_curvature_estimate: f64,
    pub objective_value: f64,
    pub cost_opnorm: f64,
    /// Hash of the bits of the initial point.
    pub init_fingerprint: u64,
    pub trace: Option<Vec<TraceEntry>>,
}

fn fingerprint(m: &DMatrix<f64>) -> u64 {
    m.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
        (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Tangent direction `P_T(v w^T)` with `w` chosen to minimize the curvature
/// `<S, V V^T> / ||V||^2`, and that curvature.
///
/// `w` ranges over the span of the right singular vectors of `Y`, which
/// reduces the choice to an `r x r` generalized eigenproblem.
fn best_lifted_direction<C: CostOperator + ?Sized>(
    c: &C,
    y: &DMatrix<f64>,
    s: &[f64],
    v: &DVector<f64>,
) -> Option<(DMatrix<f64>, f64)> {
    let r = y.ncols();
    let basis = (y.transpose() * y).symmetric_eigen().eigenvectors;
    let lifts: Vec<DMatrix<f64>> = (0..r)
        .map(|k| manifold::project_rows(y, &(v * basis.column(k).transpose())))
        .collect();
    let images: Vec<DMatrix<f64>> = lifts.iter().map(|l| apply_s(c, s, l)).collect();
    let h = DMatrix::from_fn(r, r, |k, l| {
        0.5 * (lifts[k].dot(&images[l]) + lifts[l].dot(&images[k]))
    });
    let m = DMatrix::from_fn(r, r, |k, l| lifts[k].dot(&lifts[l]));
    let me = m.symmetric_eigen();
    let top = me.eigenvalues.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return None;
    }
    let keep: Vec<usize> = (0..r)
        .filter(|&k| me.eigenvalues[k] > 1e-12 * top)
        .collect();
    let p = DMatrix::from_fn(r, keep.len(), |i, j| {
        me.eigenvectors[(i, keep[j])] / me.eigenvalues[keep[j]].sqrt()
    });
    let reduced = p.transpose() * &h * &p;
    let re = reduced.symmetric_eigen();
    let mut kmin = 0;
    for k in 1..keep.len() {
        if re.eigenvalues[k] < re.eigenvalues[kmin] {
            kmin = k;
        }
    }
    let a = &p * re.eigenvectors.column(kmin);
    let mut dir = DMatrix::zeros(y.nrows(), r);
    for (k, l) in lifts.iter().enumerate() {
        dir += l * a[k];
    }
    Some((dir, re.eigenvalues[kmin]))
}

struct State {
    y: FactorPoint,
    cy: DMatrix<f64>,
    f: f64,
}

impl State {
    fn new<C: CostOperator + ?Sized>(c: &C, y: FactorPoint) -> Result<Self> {
        let cy = c.apply(y.matrix());
        let f: f64 = manifold::row_dots(&cy, y.matrix()).iter().sum();
        if !f.is_finite() {
            return Err(Error::NonFinite("objective".into()));
        }
        Ok(Self { y, cy, f })
    }

    fn gradient(&self) -> DMatrix<f64> {
        manifold::gradient_from_product(&self.cy, self.y.matrix())
    }

    /// Candidate `retract(Y, V, t)` for tangent `V`, with `C D` and the
    /// increment of the objective.
    ///
    /// With `rho_i = sqrt(1 + t^2 ||V_i||^2)` the step is
    /// `D_i = (t V_i - t^2 ||V_i||^2 / (1 + rho_i) Y_i) / rho_i`, and
    /// `<(CY)_i, D_i>` splits into `t <G_i, V_i> / (2 rho_i)` and the normal
    /// part `s_i (1 - rho_i) / rho_i`, both free of cancellation.
    fn trial<C: CostOperator + ?Sized>(
        &self,
        c: &C,
        g: &DMatrix<f64>,
        v: &DMatrix<f64>,
        t: f64,
    ) -> Result<(FactorPoint, DMatrix<f64>, f64)> {
        let y = self.y.matrix();
        let (n, r) = (y.nrows(), y.ncols());
        let vv = manifold::row_dots(v, v);
        let gv = manifold::row_dots(g, v);
        let s = manifold::row_dots(&self.cy, y);
        let mut d = DMatrix::zeros(n, r);
        let mut linear = 0.0;
        for i in 0..n {
            let q = t * t * vv[i];
            let rho = (1.0 + q).sqrt();
            let shrink = -q / (1.0 + rho);
            for k in 0..r {
                d[(i, k)] = (t * v[(i, k)] + shrink * y[(i, k)]) / rho;
            }
            linear += t * gv[i] / rho + 2.0 * s[i] * shrink / rho;
        }
        let next = FactorPoint::normalized(y + v * t)?;
        let cd = c.apply(&d);
        let gain = linear + cd.dot(&d);
        if !gain.is_finite() {
            return Err(Error::NonFinite("objective increment".into()));
        }
        Ok((next, cd, gain))
    }
}

/// Gradient ascent for `max <C, Y Y^T>` over `n x r` factors with unit rows.
pub fn solve(c: &CostMatrix, r: usize, cfg: &SolverConfig, seed: u64) -> Result<SolveResult> {
    let kernel = CostKernel::select(c.entries());
    let norm = linalg::cost_opnorm(&kernel, rng::derive_seed(0, &[tag::LANCZOS]));
    solve_operator(&kernel, r, cfg, seed, norm)
}

/// As [`solve`] for any cost operator with a known `||C||_op`.
pub fn solve_operator<C: CostOperator + ?Sized>(
    c: &C,
    r: usize,
    cfg: &SolverConfig,
    seed: u64,
    cost_opnorm: f64,
) -> Result<SolveResult> {
    if r < 2 {
        return Err(Error::invalid(format!("rank r = {r} must be at least 2")));
    }
    let start = manifold::random_point(c.dim(), r, seed)?;
    solve_from(c, start, cfg, seed, cost_opnorm)
}

/// Runs the ascent from a given feasible starting point; `seed` drives the
/// Lanczos starts and random escape directions.
pub fn solve_from<C: CostOperator + ?Sized>(
    c: &C,
    start: FactorPoint,
    cfg: &SolverConfig,
    seed: u64,
    cost_opnorm: f64,
) -> Result<SolveResult> {
    cfg.validate()?;
    let n = c.dim();
    if start.n() != n {
        return Err(Error::dims(format!("factor with {n} rows"), start.n()));
    }
    let scale = 1.0 + cost_opnorm;
    let grad_bound = cfg.grad_tol * scale;
    let curv_bound = cfg.curvature_tol * scale;
    let t0 = 1.0 / scale;
    const REFRESH: usize = 50;

    let init_fingerprint = fingerprint(start.matrix());
    let mut st = State::new(c, start)?;
    let mut trace = cfg.trace.then(Vec::new);
    let mut g = st.gradient();
    let mut gnorm = g.norm();
    if let Some(tr) = trace.as_mut() {
        tr.push(TraceEntry {
            iteration: 0,
            event: TraceEvent::Init,
            objective: st.f,
            grad_residual: gnorm / 2.0 / scale,
            step: 0.0,
        });
    }

    let mut t = t0;
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut escapes = 0usize;
    let mut escape_step = cfg.escape_step;
    let mut last_escape_f: Option<f64> = None;
    let mut flat_at: Option<f64> = None;
    let mut since_refresh = 0usize;
    let mut iterations = 0usize;
    let mut lanczos_calls = 0u64;

    let status = loop {
        // ||S Y||_F = ||G||_F / 2
        if gnorm / 2.0 <= grad_bound {
            lanczos_calls += 1;
            let s0 = manifold::row_dots(&st.cy, st.y.matrix());
            let pair = s_min_eigenpair(
                c,
                &s0,
                rng::derive_seed(seed, &[tag::LANCZOS, lanczos_calls]),
            );
            if pair.value >= -curv_bound {
                break SolveStatus::Converged;
            }
            if escapes >= cfg.max_escapes {
                break SolveStatus::EscapeExhausted;
            }
            if let Some(prev_f) = last_escape_f {
                if (st.f - prev_f).abs() <= 1e-12 * prev_f.abs().max(1.0) {
                    escape_step = (escape_step * 2.0).min(1.0);
                }
            }
            last_escape_f = Some(st.f);
            escapes += 1;

            let s = manifold::row_dots(&st.cy, st.y.matrix());
            let esc_seed = rng::derive_seed(seed, &[tag::ESCAPE, escapes as u64]);
            let same_point =
                |f: Option<f64>| f.is_some_and(|f| (st.f - f).abs() <= 1e-9 * st.f.abs().max(1.0));
            let mut dir = best_lifted_direction(c, st.y.matrix(), &s, &pair.vector)
                .filter(|(_, curv)| *curv < -curv_bound);
            // The tangent eigenproblem is costly; skip it where it already
            // found no negative curvature.
            if dir.is_none() && !same_point(flat_at) {
                let (curv, v) = tangent_min_pair(c, &st.y, &s, esc_seed);
                if curv < -curv_bound && v.norm() >= 1e-12 {
                    dir = Some((v, curv));
                } else {
                    flat_at = Some(st.f);
                }
            }
            let ascent = dir.is_some();
            let mut v = match dir {
                Some((v, _)) => v,
                None => manifold::random_tangent(&st.y, esc_seed).into_inner(),
            };
            let vn = v.norm();
            if vn > 0.0 {
                v *= (n as f64).sqrt() / vn;
            }
            if v.dot(&g) < 0.0 {
                v = -v;
            }
            let mut te = escape_step;
            let mut moved = false;
            if ascent {
                for _ in 0..30 {
                    let (next, cd, gain) = st.trial(c, &g, &v, te)?;
                    if gain > 0.0 {
                        st.cy += cd;
                        st.y = next;
                        st.f += gain;
                        moved = true;
                        break;
                    }
                    te *= 0.5;
                }
            }
            if !moved {
                // No ascent direction: the point is second-order critical on
                // the tangent space although S(Y) is indefinite. Perturb
                // anyway and let ascent resume.
                te = escape_step;
                let (next, _, _) = st.trial(c, &g, &v, te)?;
                st = State::new(c, next)?;
                escape_step = (escape_step * 2.0).min(1.0);
            }
            g = st.gradient();
            gnorm = g.norm();
            prev = None;
            t = t0;
            if let Some(tr) = trace.as_mut() {
                tr.push(TraceEntry {
                    iteration: iterations,
                    event: TraceEvent::Escape,
                    objective: st.f,
                    grad_residual: gnorm / 2.0 / scale,
                    step: te,
                });
            }
            continue;
        }

        if iterations >= cfg.max_iters {
            break SolveStatus::MaxIters;
        }
        iterations += 1;

        if let Some((dy, dg)) = &prev {
            let sy = dy.dot(dg).abs();
            if sy > 0.0 {
                t = (dy.norm_squared() / sy).clamp(1e-3 * t0, 1e3 * t0);
            }
        }
        let g2 = gnorm * gnorm;
        let mut accepted = None;
        for _ in 0..60 {
            let (next, cd, gain) = st.trial(c, &g, &g, t)?;
            if gain >= cfg.armijo_c * t * g2 && gain > 0.0 {
                accepted = Some((next, cd, gain));
                break;
            }
            t *= cfg.backtrack;
        }
        let Some((next, cd, gain)) = accepted else {
            break SolveStatus::MaxIters;
        };
        let dy = next.matrix() - st.y.matrix();
        st.y = next;
        st.f += gain;
        since_refresh += 1;
        if since_refresh >= REFRESH {
            st.cy = c.apply(st.y.matrix());
            since_refresh = 0;
        } else {
            st.cy += cd;
        }
        let g_new = st.gradient();
        prev = Some((dy, &g_new - &g));
        g = g_new;
        gnorm = g.norm();
        if let Some(tr) = trace.as_mut() {
            tr.push(TraceEntry {
                iteration: iterations,
                event: TraceEvent::Step,
                objective: st.f,
                grad_residual: gnorm / 2.0 / scale,
                step: t,
            });
        }
    };

    let fresh = State::new(c, st.y)?;
    let g = fresh.gradient();
    let min_curvature_estimate = if n == 0 {
        0.0
    } else {
        let s = manifold::row_dots(&fresh.cy, fresh.y.matrix());
        s_min_eigenpair(
            c,
            &s,
            rng::derive_seed(seed, &[tag::LANCZOS, lanczos_calls + 1]),
        )
        .value
    };
    let grad_residual = g.norm() / 2.0 / scale;
    let status = match status {
        // the final check runs on a freshly recomputed point
        SolveStatus::Converged
            if grad_residual > cfg.grad_tol || min_curvature_estimate < -curv_bound =>
        {
            SolveStatus::MaxIters
        }
        other => other,
    };
    Ok(SolveResult {
        point: fresh.y,
        status,
        iterations,
        escapes,
        grad_residual,
        min_curvature_estimate,
        objective_value: fresh.f,
        cost_opnorm,
        init_fingerprint,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStart {
    pub results: Vec<SolveResult>,
    /// Highest objective among converged starts (all starts if none
    /// converged); lowest index on ties.
    pub best: usize,
}

impl MultiStart {
    pub fn best(&self) -> &SolveResult {
        &self.results[self.best]
    }
}

/// Seed of start `k`: the base seed for `k = 0`, a derived stream otherwise.
pub fn start_seed(seed: u64, k: usize) -> u64 {
    if k == 0 {
        seed
    } else {
        rng::derive_seed(seed, &[tag::SOLVE, k as u64])
    }
}

/// Runs `starts` independent solves; starts may execute concurrently.
pub fn multi_start(
    c: &CostMatrix,
    r: usize,
    cfg: &SolverConfig,
    starts: usize,
    seed: u64,
) -> Result<MultiStart> {
    if starts == 0 {
        return Err(Error::invalid("starts must be at least 1"));
    }
    let kernel = CostKernel::select(c.entries());
    let norm = linalg::cost_opnorm(&kernel, rng::derive_seed(0, &[tag::LANCZOS]));
    let results = (0..starts)
        .into_par_iter()
        .map(|k| solve_operator(&kernel, r, cfg, start_seed(seed, k), norm))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiStart {
        best: pick_best(&results),
        results,
    })
}

pub(crate) fn pick_best(results: &[SolveResult]) -> usize {
    let any_converged = results.iter().any(|r| r.status == SolveStatus::Converged);
    let mut best: Option<usize> = None;
    for (k, res) in results.iter().enumerate() {
        if any_converged && res.status != SolveStatus::Converged {
            continue;
        }
        match best {
            None => best = Some(k),
            Some(b) => {
                let fb = results[b].objective_value;
                if res.objective_value > fb + 1e-12 * fb.abs().max(1.0) {
                    best = Some(k);
                }
            }
        }
    }
    best.unwrap_or(0)
}
