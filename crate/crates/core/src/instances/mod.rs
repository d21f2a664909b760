//! Problem instances: sign vectors, graphs, cost matrices, the three random
//! measurement models and the monotone adversary.

mod format;

pub use format::{load_factor, load_instance, save_factor, save_instance};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Largest dimension handled with dense storage.
pub const MAX_DENSE_N: usize = 4096;

/// A vector in `{+1, -1}^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignVector(Vec<i8>);

impl SignVector {
    pub fn new(entries: Vec<i8>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::InvariantViolation(format!(
                "sign entry {i} is {} (must be +1 or -1)",
                entries[i]
            )));
        }
        Ok(Self(entries))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1; n])
    }

    pub fn from_f64(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .map(|&v| if v < 0.0 { -1 } else { 1 })
                .collect(),
        )
    }

    /// Uniform over `{+1, -1}^n`.
    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        Self(
            (0..n)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect(),
        )
    }

    /// Uniform over sign vectors with `n/2` entries of each sign.
    pub fn random_balanced(n: usize, rng: &mut impl Rng) -> Result<Self> {
        if n % 2 != 0 {
            return Err(Error::invalid(format!(
                "balanced labels need even n, got {n}"
            )));
        }
        let mut v: Vec<i8> = (0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect();
        v.shuffle(rng);
        Ok(Self(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i] as f64
    }

    pub fn is_balanced(&self) -> bool {
        self.0.iter().map(|&s| s as i64).sum::<i64>() == 0
    }

    /// Entrywise product `self ⊙ other`.
    pub fn hadamard(&self, other: &SignVector) -> SignVector {
        SignVector(self.0.iter().zip(&other.0).map(|(a, b)| a * b).collect())
    }

    pub fn negated(&self) -> SignVector {
        SignVector(self.0.iter().map(|s| -s).collect())
    }

    pub fn flipped(&self, i: usize) -> SignVector {
        let mut v = self.0.clone();
        v[i] = -v[i];
        SignVector(v)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&s| s as f64).collect()
    }

    /// `+`/`-` string form used by the instance file format.
    pub fn to_symbols(&self) -> String {
        self.0
            .iter()
            .map(|&s| if s > 0 { '+' } else { '-' })
            .collect()
    }

    pub fn from_symbols(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::invalid(format!("bad sign symbol {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }

    /// `diag(s) M diag(s)`.
    pub fn conjugate(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            m[(i, j)] * (self.0[i] * self.0[j]) as f64
        })
    }

    /// `diag(s) Y` (row sign flips).
    pub fn scale_rows(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y.nrows(), y.ncols(), |i, k| y[(i, k)] * self.0[i] as f64)
    }
}

impl serde::Serialize for SignVector {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.to_symbols())
    }
}

fn check_symmetric_zero_diag(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::dims(
            format!("square {what}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    let n = m.nrows();
    for j in 0..n {
        if m[(j, j)] != 0.0 {
            return Err(Error::InvariantViolation(format!(
                "{what} has nonzero diagonal entry at {j}"
            )));
        }
        for i in (j + 1)..n {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite(format!("{what} entry ({i},{j})")));
            }
            if m[(i, j)].to_bits() != m[(j, i)].to_bits() {
                return Err(Error::InvariantViolation(format!(
                    "{what} is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_DENSE_N {
        return Err(Error::TooLarge(format!(
            "n = {n} exceeds the dense limit {MAX_DENSE_N}"
        )));
    }
    Ok(())
}

/// Undirected weighted graph with nonnegative weights and zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    weights: DMatrix<f64>,
}

impl Graph {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        check_symmetric_zero_diag(&weights, "graph weights")?;
        if let Some(w) = weights.iter().find(|w| **w < 0.0) {
            return Err(Error::InvariantViolation(format!(
                "graph weight {w} is negative"
            )));
        }
        Ok(Self { weights })
    }

    /// Complete graph with every edge weight equal to `w`.
    pub fn complete(n: usize, w: f64) -> Self {
        Self {
            weights: DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { w }),
        }
    }

    pub fn empty(n: usize) -> Self {
        Self {
            weights: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.weights.row_iter().map(|r| r.sum()).collect()
    }

    /// `L = diag(A 1) - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = -self.weights.clone();
        for (i, d) in self.degrees().into_iter().enumerate() {
            l[(i, i)] = d;
        }
        l
    }

    pub fn edge_count(&self) -> usize {
        let n = self.n();
        (0..n)
            .flat_map(|j| ((j + 1)..n).map(move |i| (i, j)))
            .filter(|&(i, j)| self.weights[(i, j)] != 0.0)
            .count()
    }
}

/// Symmetric zero-diagonal noise matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMatrix {
    entries: DMatrix<f64>,
}

impl NoiseMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_symmetric_zero_diag(&entries, "noise matrix")?;
        Ok(Self { entries })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: DMatrix::zeros(n, n),
        }
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|v| *v == 0.0)
    }
}

/// Symmetric cost matrix; the diagonal is always stored as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: DMatrix<f64>,
}

impl CostMatrix {
    /// Validates symmetry and finiteness. A nonzero diagonal is rejected; use
    /// [`Self::zeroing_diagonal`] to drop it.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        check_size(entries.nrows())?;
        check_symmetric_zero_diag(&entries, "cost matrix")?;
        Ok(Self { entries })
    }

    /// Accepts any symmetric matrix and forces its diagonal to zero.
    pub fn zeroing_diagonal(mut entries: DMatrix<f64>) -> Result<Self> {
        for i in 0..entries.nrows().min(entries.ncols()) {
            entries[(i, i)] = 0.0;
        }
        Self::new(entries)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    /// `<C, x x^T>`.
    pub fn quadratic_form(&self, x: &SignVector) -> f64 {
        let n = self.n();
        let mut total = 0.0;
        for j in 0..n {
            let mut col = 0.0;
            for i in 0..n {
                col += self.entries[(i, j)] * x.get(i);
            }
            total += col * x.get(j);
        }
        total
    }
}

impl crate::linalg::CostOperator for CostMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        &self.entries * y
    }

    fn apply_vec(&self, x: &nalgebra::DVector<f64>, out: &mut nalgebra::DVector<f64>) {
        out.gemv(1.0, &self.entries, x, 0.0);
    }
}

/// How the SBM adjacency matrix is centered into a cost matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    /// Subtract the empirical mean of all entries of `A`.
    MeanEstimate,
    /// Subtract `(p + q) / 2`.
    KnownPq,
}

impl Centering {
    pub fn as_str(self) -> &'static str {
        match self {
            Centering::MeanEstimate => "mean-estimate",
            Centering::KnownPq => "known-pq",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean-estimate" | "mean" => Ok(Centering::MeanEstimate),
            "known-pq" | "known" => Ok(Centering::KnownPq),
            other => Err(Error::invalid(format!("unknown centering {other:?}"))),
        }
    }
}

/// Generating model of an instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams {
    /// `C = z z^T + sigma W` on the complete graph.
    Gaussian { n: usize, sigma: f64 },
    /// Erdős–Rényi measurement graph with sign flips.
    ErBernoulli { n: usize, p: f64, delta: f64 },
    /// Balanced two-cluster stochastic block model.
    Sbm {
        n: usize,
        p: f64,
        q: f64,
        centering: Centering,
    },
    /// Cost supplied directly.
    Raw,
}

impl ModelParams {
    pub fn name(&self) -> &'static str {
        match self {
            ModelParams::Gaussian { .. } => "gaussian",
            ModelParams::ErBernoulli { .. } => "erbern",
            ModelParams::Sbm { .. } => "sbm",
            ModelParams::Raw => "raw",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} is not in [0, 1]")))
            }
        };
        match *self {
            ModelParams::Gaussian { n, sigma } => {
                if n < 2 {
                    return Err(Error::invalid(format!("n = {n} must be at least 2")));
                }
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(Error::invalid(format!("sigma = {sigma} must be >= 0")));
                }
                check_size(n)
            }
            ModelParams::ErBernoulli { n, p, delta } => {
                if n < 2 {
                    return Err(Error::invalid(format!("n = {n} must be at least 2")));
                }
                prob("p", p)?;
                prob("delta", delta)?;
                check_size(n)
            }
            ModelParams::Sbm { n, p, q, .. } => {
                if n < 2 || n % 2 != 0 {
                    return Err(Error::invalid(format!("SBM needs even n >= 2, got {n}")));
                }
                prob("p", p)?;
                prob("q", q)?;
                if q >= p {
                    return Err(Error::invalid(format!(
                        "SBM needs q < p, got q = {q} >= p = {p}"
                    )));
                }
                check_size(n)
            }
            ModelParams::Raw => Ok(()),
        }
    }
}

/// Record of monotone perturbations applied to an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryRecord {
    /// Accumulated `Δ⁺`; satisfies `Δ⁺_ij z_i z_j >= 0`.
    pub delta_plus: DMatrix<f64>,
    /// `(strength, density, seed)` of every application, in order.
    pub applications: Vec<(f64, f64, u64)>,
}

/// A cost matrix together with optional ground truth and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub cost: CostMatrix,
    pub truth: Option<SignVector>,
    /// Measurement graph (ER edges or SBM adjacency).
    pub graph: Option<Graph>,
    pub params: ModelParams,
    pub seed: u64,
    pub adversary: Option<AdversaryRecord>,
}

impl ProblemInstance {
    pub fn raw(cost: CostMatrix, truth: Option<SignVector>) -> Self {
        Self {
            cost,
            truth,
            graph: None,
            params: ModelParams::Raw,
            seed: 0,
            adversary: None,
        }
    }

    pub fn n(&self) -> usize {
        self.cost.n()
    }

    /// Checks the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if let Some(t) = &self.truth {
            if t.len() != n {
                return Err(Error::dims(n, t.len()));
            }
        }
        if let Some(g) = &self.graph {
            if g.n() != n {
                return Err(Error::dims(n, g.n()));
            }
        }
        match self.params {
            ModelParams::Sbm { n: pn, .. } => {
                if pn != n {
                    return Err(Error::dims(pn, n));
                }
                match &self.truth {
                    Some(t) if t.is_balanced() => {}
                    _ => {
                        return Err(Error::InvariantViolation(
                            "SBM instance needs balanced ground truth".into(),
                        ))
                    }
                }
                if self.graph.is_none() {
                    return Err(Error::InvariantViolation(
                        "SBM instance needs a graph".into(),
                    ));
                }
            }
            ModelParams::ErBernoulli { n: pn, .. } => {
                if pn != n {
                    return Err(Error::dims(pn, n));
                }
                if self.graph.is_none() {
                    return Err(Error::InvariantViolation(
                        "ER-Bernoulli instance needs a graph".into(),
                    ));
                }
            }
            ModelParams::Gaussian { n: pn, .. } if pn != n => return Err(Error::dims(pn, n)),
            _ => {}
        }
        if let Some(adv) = &self.adversary {
            if adv.delta_plus.nrows() != n || adv.delta_plus.ncols() != n {
                return Err(Error::dims(n, adv.delta_plus.nrows()));
            }
        }
        Ok(())
    }
}

/// `C = z z^T + sigma W` with zero diagonal.
pub fn gen_gaussian(n: usize, sigma: f64, seed: u64) -> Result<ProblemInstance> {
    let params = ModelParams::Gaussian { n, sigma };
    params.validate()?;
    let truth = SignVector::random(n, &mut rng::stream(seed, &[tag::TRUTH]));
    gaussian_with_truth(truth, sigma, seed)
}

/// Gaussian model with a caller-chosen ground truth.
pub fn gaussian_with_truth(truth: SignVector, sigma: f64, seed: u64) -> Result<ProblemInstance> {
    let n = truth.len();
    let params = ModelParams::Gaussian { n, sigma };
    params.validate()?;
    let mut noise = rng::stream(seed, &[tag::NOISE]);
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let w: f64 = StandardNormal.sample(&mut noise);
            let v = truth.get(i) * truth.get(j) + sigma * w;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(ProblemInstance {
        cost: CostMatrix::new(c)?,
        truth: Some(truth),
        graph: None,
        params,
        seed,
        adversary: None,
    })
}

/// Erdős–Rényi graph `G(n, p)` with measurements `±z_i z_j`, correct with
/// probability `(1 + delta) / 2`.
pub fn gen_er_bernoulli(n: usize, p: f64, delta: f64, seed: u64) -> Result<ProblemInstance> {
    let params = ModelParams::ErBernoulli { n, p, delta };
    params.validate()?;
    let truth = SignVector::random(n, &mut rng::stream(seed, &[tag::TRUTH]));
    let mut edges = rng::stream(seed, &[tag::EDGES]);
    let mut flips = rng::stream(seed, &[tag::NOISE]);
    let keep = (1.0 + delta) / 2.0;
    let mut a = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if edges.random::<f64>() < p {
                let zz = truth.get(i) * truth.get(j);
                let r = if flips.random::<f64>() < keep {
                    zz
                } else {
                    -zz
                };
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
                c[(i, j)] = r;
                c[(j, i)] = r;
            }
        }
    }
    Ok(ProblemInstance {
        cost: CostMatrix::new(c)?,
        truth: Some(truth),
        graph: Some(Graph::new(a)?),
        params,
        seed,
        adversary: None,
    })
}

/// Balanced binary SBM with within/between probabilities `p > q`.
pub fn gen_sbm(
    n: usize,
    p: f64,
    q: f64,
    centering: Centering,
    seed: u64,
) -> Result<ProblemInstance> {
    let params = ModelParams::Sbm { n, p, q, centering };
    params.validate()?;
    let truth = SignVector::random_balanced(n, &mut rng::stream(seed, &[tag::TRUTH]))?;
    let mut edges = rng::stream(seed, &[tag::EDGES]);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let prob = if truth.get(i) == truth.get(j) { p } else { q };
            if edges.random::<f64>() < prob {
                a[(i, j)] = 1.0;
                a[(j, i)] = 1.0;
            }
        }
    }
    let graph = Graph::new(a)?;
    let cost = build_sbm_cost(&graph, centering, Some((p, q)))?;
    Ok(ProblemInstance {
        cost,
        truth: Some(truth),
        graph: Some(graph),
        params,
        seed,
        adversary: None,
    })
}

/// Centers an adjacency matrix into an SBM cost matrix.
pub fn build_sbm_cost(
    a: &Graph,
    centering: Centering,
    pq: Option<(f64, f64)>,
) -> Result<CostMatrix> {
    let n = a.n();
    let offset = match centering {
        Centering::MeanEstimate => a.weights().sum() / (n as f64 * n as f64),
        Centering::KnownPq => {
            let (p, q) = pq.ok_or_else(|| Error::invalid("known-pq centering needs p and q"))?;
            (p + q) / 2.0
        }
    };
    let c = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            a.weights()[(i, j)] - offset
        }
    });
    CostMatrix::new(c)
}

/// Returns `C + Δ⁺` where `Δ⁺_ij = s_ij z_i z_j`, `s_ij ~ U[0, strength]`,
/// supported on a random `density` fraction of pairs.
pub fn apply_monotone_adversary(
    inst: &ProblemInstance,
    strength: f64,
    density: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    let z = inst
        .truth
        .as_ref()
        .ok_or_else(|| Error::invalid("monotone adversary needs the ground truth"))?;
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(Error::invalid(format!(
            "strength = {strength} must be >= 0"
        )));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::invalid(format!(
            "density = {density} is not in [0, 1]"
        )));
    }
    let n = inst.n();
    let mut rng = rng::stream(seed, &[tag::ADVERSARY]);
    let mut dp = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let hit = rng.random::<f64>() < density;
            let s = rng.random::<f64>() * strength;
            if hit && s > 0.0 {
                let v = s * z.get(i) * z.get(j);
                dp[(i, j)] = v;
                dp[(j, i)] = v;
            }
        }
    }
    let mut out = inst.clone();
    if strength == 0.0 {
        return Ok(out);
    }
    out.cost = CostMatrix::new(inst.cost.entries() + &dp)?;
    let record = out.adversary.get_or_insert_with(|| AdversaryRecord {
        delta_plus: DMatrix::zeros(n, n),
        applications: Vec::new(),
    });
    record.delta_plus += &dp;
    record.applications.push((strength, density, seed));
    Ok(out)
}

/// Splits a Z2 instance as `C = diag(z) A diag(z) + Δ` with the measurement
/// graph as `A` (complete graph for the Gaussian model). Monotone
/// perturbations are folded into `A` as `A + Δ⁺ ⊙ z z^T`.
pub fn z2_decomposition(inst: &ProblemInstance) -> Result<(Graph, NoiseMatrix)> {
    let z = inst
        .truth
        .as_ref()
        .ok_or_else(|| Error::invalid("decomposition needs the ground truth"))?;
    let n = inst.n();
    let mut a = match (&inst.params, &inst.graph) {
        (ModelParams::Gaussian { .. }, _) => Graph::complete(n, 1.0).weights().clone(),
        (_, Some(g)) => g.weights().clone(),
        (_, None) => {
            return Err(Error::invalid("instance has no measurement graph"));
        }
    };
    if let Some(adv) = &inst.adversary {
        a += z.conjugate(&adv.delta_plus);
    }
    let delta = inst.cost.entries() - z.conjugate(&a);
    Ok((Graph::new(a)?, NoiseMatrix::new(symmetrize_exact(delta))?))
}

/// Copies the upper triangle onto the lower one so that floating-point
/// round-off cannot break exact symmetry.
pub(crate) fn symmetrize_exact(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for j in 0..n {
        m[(j, j)] = 0.0;
        for i in (j + 1)..n {
            m[(i, j)] = m[(j, i)];
        }
    }
    m
}
