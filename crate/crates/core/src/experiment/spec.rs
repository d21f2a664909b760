//! Sweep specification files.
//!
//! ```toml
//! model = "sbm"            # gaussian | erbern | sbm
//! trials_per_cell = 20
//! starts = 1
//! master_seed = 2024
//! centering = "known-pq"    # sbm only: known-pq (default) | mean-estimate
//! artifacts = "first"       # none (default) | first | all
//!
//! [fixed]
//! n = 1000
//! r = 12
//!
//! [grid]
//! a = [16, 5]
//! b = [4]
//!
//! [solver]                  # any SolverConfig field
//! max_iters = 10000
//!
//! [adversary]               # optional monotone perturbation
//! strength = 1.0
//! density = 0.2
//! ```
//!
//! Parameter axes may appear under `[fixed]` (one value) or `[grid]` (a
//! list); the sweep runs the Cartesian product of the grid lists.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{Centering, ModelParams};
use crate::solver::{default_rank, SolverConfig};

/// Axis names accepted under `[fixed]` and `[grid]`.
///
/// `sigma_rel` is measured in units of `sqrt(n / (2 ln n))`; `a` and `b`
/// give `p = a ln n / n` and `q = b ln n / n`.
pub const AXES: [&str; 9] = ["a", "b", "delta", "n", "p", "q", "r", "sigma", "sigma_rel"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gaussian,
    Erbern,
    Sbm,
}

/// Which trials keep their instance and final factor on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Artifacts {
    #[default]
    None,
    First,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub strength: f64,
    pub density: f64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub model: ModelKind,
    pub trials_per_cell: usize,
    #[serde(default = "one")]
    pub starts: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centering: Option<Centering>,
    #[serde(default)]
    pub artifacts: Artifacts,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    pub grid: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversarySpec>,
}

/// Fully resolved parameters of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub model: ModelParams,
    pub r: usize,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text)
            .map_err(|e| Error::invalid(format!("sweep spec: {}", e.message())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str::<SweepSpec>(&text)
            .map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                field: e
                    .span()
                    .map(|s| format!("bytes {}..{}", s.start, s.end))
                    .unwrap_or_default(),
                reason: e.message().to_string(),
            })
            .and_then(|s| s.validate().map(|_| s))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid("sweep grid has no axes"));
        }
        if self.trials_per_cell == 0 {
            return Err(Error::invalid("trials_per_cell must be at least 1"));
        }
        if self.starts == 0 {
            return Err(Error::invalid("starts must be at least 1"));
        }
        for name in self.fixed.keys().chain(self.grid.keys()) {
            if !AXES.contains(&name.as_str()) {
                return Err(Error::invalid(format!(
                    "unknown axis {name:?}; expected one of {}",
                    AXES.join(", ")
                )));
            }
        }
        for (name, values) in &self.grid {
            if values.is_empty() {
                return Err(Error::invalid(format!("grid axis {name:?} has no values")));
            }
            if self.fixed.contains_key(name) {
                return Err(Error::invalid(format!(
                    "axis {name:?} is both fixed and gridded"
                )));
            }
        }
        if self.centering.is_some() && self.model != ModelKind::Sbm {
            return Err(Error::invalid("centering applies to the sbm model only"));
        }
        if let Some(adv) = &self.adversary {
            if !(adv.strength >= 0.0 && adv.strength.is_finite()) {
                return Err(Error::invalid("adversary strength must be >= 0"));
            }
            if !(0.0..=1.0).contains(&adv.density) {
                return Err(Error::invalid("adversary density must be in [0, 1]"));
            }
        }
        self.solver.validate()?;
        for cell in self.cells() {
            self.resolve(&cell)?;
        }
        Ok(())
    }

    /// Gridded axis names, sorted.
    pub fn axes(&self) -> Vec<String> {
        self.grid.keys().cloned().collect()
    }

    /// Cartesian product of the grid, earlier (sorted) axes varying slowest
    /// and values in listed order.
    pub fn cells(&self) -> Vec<BTreeMap<String, f64>> {
        let mut cells = vec![BTreeMap::new()];
        for (name, values) in &self.grid {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for cell in &cells {
                for &v in values {
                    let mut c = cell.clone();
                    c.insert(name.clone(), v);
                    next.push(c);
                }
            }
            cells = next;
        }
        cells
    }

    /// Instance parameters and rank of a cell.
    pub fn resolve(&self, cell: &BTreeMap<String, f64>) -> Result<CellParams> {
        let get = |k: &str| cell.get(k).or_else(|| self.fixed.get(k)).copied();
        let int = |k: &str, v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v <= 1e9 {
                Ok(v as usize)
            } else {
                Err(Error::invalid(format!(
                    "axis {k} = {v} must be a nonnegative integer"
                )))
            }
        };
        let n = int(
            "n",
            get("n").ok_or_else(|| Error::invalid("axis n is required"))?,
        )?;
        let r = match get("r") {
            Some(v) => int("r", v)?,
            None => default_rank(n),
        };
        let log_scale = (n as f64).ln() / n as f64;
        let either = |plain: &str, scaled: &str, factor: f64| -> Result<f64> {
            match (get(plain), get(scaled)) {
                (Some(v), None) => Ok(v),
                (None, Some(v)) => Ok(v * factor),
                (Some(_), Some(_)) => Err(Error::invalid(format!(
                    "axes {plain} and {scaled} are exclusive"
                ))),
                (None, None) => Err(Error::invalid(format!(
                    "{:?} model needs axis {plain} or {scaled}",
                    self.model
                ))),
            }
        };
        let allow = |keys: &[&str]| -> Result<()> {
            for k in self.fixed.keys().chain(self.grid.keys()) {
                if !keys.contains(&k.as_str()) {
                    return Err(Error::invalid(format!(
                        "axis {k:?} does not apply to the {:?} model",
                        self.model
                    )));
                }
            }
            Ok(())
        };
        let model = match self.model {
            ModelKind::Gaussian => {
                allow(&["n", "r", "sigma", "sigma_rel"])?;
                let unit = (n as f64 / (2.0 * (n as f64).ln())).sqrt();
                ModelParams::Gaussian {
                    n,
                    sigma: either("sigma", "sigma_rel", unit)?,
                }
            }
            ModelKind::Erbern => {
                allow(&["n", "r", "p", "a", "delta"])?;
                let delta =
                    get("delta").ok_or_else(|| Error::invalid("erbern model needs axis delta"))?;
                ModelParams::ErBernoulli {
                    n,
                    p: either("p", "a", log_scale)?,
                    delta,
                }
            }
            ModelKind::Sbm => {
                allow(&["n", "r", "p", "a", "q", "b"])?;
                ModelParams::Sbm {
                    n,
                    p: either("p", "a", log_scale)?,
                    q: either("q", "b", log_scale)?,
                    centering: self.centering.unwrap_or(Centering::KnownPq),
                }
            }
        };
        model.validate()?;
        if r < 2 || r > n {
            return Err(Error::invalid(format!(
                "rank r = {r} must be in [2, n = {n}]"
            )));
        }
        Ok(CellParams { model, r })
    }

    /// Hash of everything that influences a trial except the grid and the
    /// trial count, so checkpoints survive growing either.
    pub(crate) fn settings_hash(&self) -> u64 {
        let mut s = self.clone();
        s.grid.clear();
        s.trials_per_cell = 0;
        s.artifacts = Artifacts::None;
        fnv(serde_json::to_string(&s)
            .expect("spec serializes")
            .as_bytes())
    }
}

pub(crate) fn fnv(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Seed-path component of a cell: a hash of its `(axis, value bits)` pairs.
pub fn cell_hash(cell: &BTreeMap<String, f64>) -> u64 {
    let mut bytes = Vec::new();
    for (k, v) in cell {
        bytes.extend_from_slice(k.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fnv(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SBM: &str = r#"
model = "sbm"
trials_per_cell = 3
master_seed = 9
[fixed]
n = 100
[grid]
a = [16, 5]
b = [4]
"#;

    #[test]
    fn parses_and_expands_grid() {
        let s = SweepSpec::parse(SBM).unwrap();
        assert_eq!(s.axes(), vec!["a".to_string(), "b".to_string()]);
        let cells = s.cells();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0]["a"], 16.0);
        assert_eq!(cells[1]["a"], 5.0);
        let p = s.resolve(&cells[0]).unwrap();
        let l = (100f64).ln() / 100.0;
        match p.model {
            ModelParams::Sbm { n, p, q, centering } => {
                assert_eq!(n, 100);
                assert!((p - 16.0 * l).abs() < 1e-15);
                assert!((q - 4.0 * l).abs() < 1e-15);
                assert_eq!(centering, Centering::KnownPq);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(p.r, default_rank(100));
        assert_eq!(s.solver, SolverConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let s = SweepSpec::parse(SBM).unwrap();
        assert_eq!(SweepSpec::parse(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            SBM.replace("trials_per_cell = 3", "trials_per_cell = 0"),
            SBM.replace("a = [16, 5]", "a = []"),
            SBM.replace("a = [16, 5]", "zeta = [1]"),
            SBM.replace("[fixed]\nn = 100", "[fixed]\nn = 100\nsigma = 1"),
            SBM.replace("b = [4]", "b = [4]\nq = [0.1]"),
            SBM.replace("n = 100", "n = 101"),
            SBM.replace("model = \"sbm\"", "model = \"sbm\"\nbogus = 1"),
            "model = \"gaussian\"\ntrials_per_cell = 1\n[grid]\n".to_string(),
            "model = \"gaussian\"\ntrials_per_cell = 1\ncentering = \"known-pq\"\n[grid]\nn = [10]\nsigma = [0]\n".to_string(),
        ];
        for text in bad {
            assert!(SweepSpec::parse(&text).is_err(), "{text}");
        }
    }

    #[test]
    fn gaussian_relative_sigma() {
        let s = SweepSpec::parse(
            "model = \"gaussian\"\ntrials_per_cell = 1\n[fixed]\nn = 300\nr = 8\n[grid]\nsigma_rel = [0.5]\n",
        )
        .unwrap();
        let p = s.resolve(&s.cells()[0]).unwrap();
        let expect = 0.5 * (300.0 / (2.0 * 300f64.ln())).sqrt();
        assert_eq!(
            p.model,
            ModelParams::Gaussian {
                n: 300,
                sigma: expect
            }
        );
        assert_eq!(p.r, 8);
    }

    #[test]
    fn cell_hash_depends_on_coordinates_only() {
        let mut a = BTreeMap::new();
        a.insert("a".to_string(), 16.0);
        let mut b = a.clone();
        assert_eq!(cell_hash(&a), cell_hash(&b));
        b.insert("a".to_string(), 5.0);
        assert_ne!(cell_hash(&a), cell_hash(&b));
    }
}
