//! Seeded Monte Carlo recovery experiments over parameter grids.
//!
//! Every trial draws from its own stream `derive(master_seed, [cell_hash,
//! trial])`, so results do not depend on execution order, on the number of
//! worker threads, on other cells, or on how many trials a cell has.

mod output;
mod spec;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

pub use output::{
    check_monotone, emit_summary, parse_csv, read_csv, summarize, verify, wilson_interval,
    wilson_se, write_csv, ArtifactEntry, CellSummary, Manifest, MonotoneViolation, VerifyReport,
    CSV_COLUMNS, WILSON_Z,
};
pub use spec::{cell_hash, AdversarySpec, Artifacts, CellParams, ModelKind, SweepSpec, AXES};

use crate::certificates::{self, DEFAULT_TOL};
use crate::conditions;
use crate::error::{Error, Result};
use crate::instances::{self, ModelParams, ProblemInstance};
use crate::linalg::CostKernel;
use crate::manifold::FactorPoint;
use crate::rng::{self, tag};
use crate::solver;

const TRIAL: u64 = 0x7472_6961;

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Grid coordinates of the cell.
    pub cell: BTreeMap<String, f64>,
    pub trial: usize,
    /// Exact recovery of the planted signs by the best start.
    pub recovered: bool,
    pub certified_global: bool,
    pub objective: f64,
    pub grad_residual: f64,
    pub s_min_eig: f64,
    /// Margin of the deterministic benign-landscape condition for the
    /// trial's instance (`NaN` where it is undefined).
    pub condition_margin: f64,
    pub rank1_gap: f64,
    pub correlation: f64,
    /// Solver status of the best start, or `error` if solving failed.
    pub status: String,
    pub wall_ms: u64,
}

/// Seed of trial `trial` in `cell`.
pub fn trial_seed(spec: &SweepSpec, cell: &BTreeMap<String, f64>, trial: usize) -> u64 {
    rng::derive_seed(spec.master_seed, &[cell_hash(cell), trial as u64, TRIAL])
}

/// Generates the (possibly perturbed) instance of a trial.
pub fn trial_instance(
    spec: &SweepSpec,
    cell: &BTreeMap<String, f64>,
    trial: usize,
) -> Result<(ProblemInstance, CellParams)> {
    let params = spec.resolve(cell)?;
    let seed = trial_seed(spec, cell, trial);
    let inst_seed = rng::derive_seed(seed, &[tag::INSTANCE]);
    let mut inst = match params.model {
        ModelParams::Gaussian { n, sigma } => instances::gen_gaussian(n, sigma, inst_seed)?,
        ModelParams::ErBernoulli { n, p, delta } => {
            instances::gen_er_bernoulli(n, p, delta, inst_seed)?
        }
        ModelParams::Sbm { n, p, q, centering } => {
            instances::gen_sbm(n, p, q, centering, inst_seed)?
        }
        ModelParams::Raw => unreachable!("sweeps never produce raw instances"),
    };
    if let Some(adv) = &spec.adversary {
        let adv_seed = rng::derive_seed(seed, &[tag::ADVERSARY]);
        inst = instances::apply_monotone_adversary(&inst, adv.strength, adv.density, adv_seed)?;
    }
    Ok((inst, params))
}

/// Margin of the deterministic condition matching the instance's model.
pub fn condition_margin(inst: &ProblemInstance, r: usize) -> f64 {
    let z = match &inst.truth {
        Some(z) => z,
        None => return f64::NAN,
    };
    let margin = match (inst.params, &inst.graph) {
        (
            ModelParams::Sbm {
                p, q, centering, ..
            },
            Some(g),
        ) => conditions::check_sbm_determ(g, z, p, q, r, centering).map(|rep| rep.margin),
        _ => instances::z2_decomposition(inst)
            .and_then(|(g, delta)| conditions::check_z2_determ(&g, &delta, z, r))
            .map(|rep| rep.margin),
    };
    margin.unwrap_or(f64::NAN)
}

fn failed_record(cell: &BTreeMap<String, f64>, trial: usize, margin: f64, ms: u64) -> TrialRecord {
    TrialRecord {
        cell: cell.clone(),
        trial,
        recovered: false,
        certified_global: false,
        objective: f64::NAN,
        grad_residual: f64::NAN,
        s_min_eig: f64::NAN,
        condition_margin: margin,
        rank1_gap: f64::NAN,
        correlation: f64::NAN,
        status: "error".into(),
        wall_ms: ms,
    }
}

fn run_trial_full(
    spec: &SweepSpec,
    cell: &BTreeMap<String, f64>,
    trial: usize,
) -> Result<(TrialRecord, ProblemInstance, Option<FactorPoint>)> {
    let clock = Instant::now();
    let (inst, params) = trial_instance(spec, cell, trial)?;
    let margin = condition_margin(&inst, params.r);
    let solve_seed = rng::derive_seed(trial_seed(spec, cell, trial), &[tag::SOLVE]);
    let outcome = (|| -> Result<(TrialRecord, FactorPoint)> {
        let ms = solver::multi_start(&inst.cost, params.r, &spec.solver, spec.starts, solve_seed)?;
        let best = ms.best();
        let kernel = CostKernel::select(inst.cost.entries());
        let cert =
            certificates::certify_with_norm(&kernel, &best.point, DEFAULT_TOL, best.cost_opnorm)?;
        let z = inst
            .truth
            .as_ref()
            .ok_or_else(|| Error::invalid("trial has no truth"))?;
        let rec = certificates::check_exact_recovery(&best.point, z)?;
        let record = TrialRecord {
            cell: cell.clone(),
            trial,
            recovered: rec.is_exact,
            certified_global: cert.is_global,
            objective: best.objective_value,
            grad_residual: cert.grad_residual,
            s_min_eig: cert.s_min_eig,
            condition_margin: margin,
            rank1_gap: rec.rank1_gap,
            correlation: rec.correlation,
            status: best.status.as_str().into(),
            wall_ms: 0,
        };
        Ok((record, best.point.clone()))
    })();
    let ms = clock.elapsed().as_millis() as u64;
    Ok(match outcome {
        Ok((mut record, y)) => {
            record.wall_ms = ms;
            (record, inst, Some(y))
        }
        Err(_) => (failed_record(cell, trial, margin, ms), inst, None),
    })
}

/// Generates, perturbs, solves, certifies and scores one trial. Solver
/// failures are recorded in `status`; only an invalid spec is an error.
pub fn run_trial(
    spec: &SweepSpec,
    cell: &BTreeMap<String, f64>,
    trial: usize,
) -> Result<TrialRecord> {
    run_trial_full(spec, cell, trial).map(|(r, _, _)| r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub coords: BTreeMap<String, f64>,
    /// Ordered by trial index.
    pub records: Vec<TrialRecord>,
}

impl CellResult {
    pub fn recovered(&self) -> usize {
        self.records.iter().filter(|r| r.recovered).count()
    }

    pub fn frequency(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.recovered() as f64 / self.records.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Gridded axis names, sorted.
    pub axes: Vec<String>,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn records(&self) -> impl Iterator<Item = &TrialRecord> {
        self.cells.iter().flat_map(|c| c.records.iter())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Output directory; nothing is written when absent.
    pub out: Option<PathBuf>,
    /// Worker threads (rayon default when absent).
    pub jobs: Option<usize>,
    /// Reuse per-cell checkpoints found in `out`.
    pub resume: bool,
}

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const ARTIFACT_DIR: &str = "artifacts";

fn checkpoint_path(out: &Path, spec: &SweepSpec, cell: &BTreeMap<String, f64>) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!(
        "{:016x}-{:016x}.csv",
        spec.settings_hash(),
        cell_hash(cell)
    ))
}

/// Artifact file names `(instance, factor)` of a trial, relative to the
/// output directory.
pub fn artifact_names(cell: &BTreeMap<String, f64>, trial: usize) -> (String, String) {
    let stem = format!("{ARTIFACT_DIR}/{:016x}-{trial:04}", cell_hash(cell));
    (format!("{stem}.inst"), format!("{stem}.factor"))
}

fn keeps_artifact(spec: &SweepSpec, trial: usize) -> bool {
    match spec.artifacts {
        Artifacts::None => false,
        Artifacts::First => trial == 0,
        Artifacts::All => true,
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn run_cell(
    spec: &SweepSpec,
    cell: &BTreeMap<String, f64>,
    opts: &SweepOptions,
) -> Result<CellResult> {
    let mut done: BTreeMap<usize, TrialRecord> = BTreeMap::new();
    let ckpt = opts.out.as_deref().map(|o| checkpoint_path(o, spec, cell));
    if let (true, Some(path)) = (opts.resume, &ckpt) {
        if path.exists() {
            for rec in read_csv(path)?.records() {
                if &rec.cell == cell && rec.trial < spec.trials_per_cell {
                    done.insert(rec.trial, rec.clone());
                }
            }
        }
    }
    let missing: Vec<usize> = (0..spec.trials_per_cell)
        .filter(|t| !done.contains_key(t))
        .collect();
    let fresh: Vec<Result<TrialRecord>> = missing
        .par_iter()
        .map(|&t| {
            let (record, inst, y) = run_trial_full(spec, cell, t)?;
            if let (Some(out), Some(y), true) = (&opts.out, &y, keeps_artifact(spec, t)) {
                let (ip, yp) = artifact_names(cell, t);
                instances::save_instance(&inst, out.join(ip))?;
                instances::save_factor(y, out.join(yp))?;
            }
            Ok(record)
        })
        .collect();
    for rec in fresh {
        let rec = rec?;
        done.insert(rec.trial, rec);
    }
    let result = CellResult {
        coords: cell.clone(),
        records: done.into_values().collect(),
    };
    if let Some(path) = ckpt {
        let partial = SweepResult {
            axes: cell.keys().cloned().collect(),
            cells: vec![result.clone()],
        };
        write_atomic(&path, output::csv_string(&partial)?.as_bytes())?;
    }
    Ok(result)
}

/// Runs every cell of the grid. With an output directory, each finished
/// cell is checkpointed before the next one starts, and the CSV, summary
/// and manifest are written at the end.
pub fn run_sweep(spec: &SweepSpec, opts: &SweepOptions) -> Result<SweepResult> {
    spec.validate()?;
    if let Some(out) = &opts.out {
        mkdir(out)?;
        mkdir(&out.join(CHECKPOINT_DIR))?;
        if spec.artifacts != Artifacts::None {
            mkdir(&out.join(ARTIFACT_DIR))?;
        }
    }
    let body = || -> Result<SweepResult> {
        let mut cells = Vec::new();
        for cell in spec.cells() {
            cells.push(run_cell(spec, &cell, opts)?);
        }
        Ok(SweepResult {
            axes: spec.axes(),
            cells,
        })
    };
    let result = match opts.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(body)?,
        None => body()?,
    };
    if let Some(out) = &opts.out {
        write_csv(&result, out.join(RESULTS_FILE))?;
        write_atomic(&out.join(SUMMARY_FILE), emit_summary(&result).as_bytes())?;
        let manifest = Manifest::new(spec, &result);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&out.join(MANIFEST_FILE), format!("{json}\n").as_bytes())?;
    }
    Ok(result)
}
