//! CSV, summary and manifest files of a sweep, and their offline check.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::spec::SweepSpec;
use super::{
    artifact_names, keeps_artifact, CellResult, SweepResult, TrialRecord, MANIFEST_FILE,
    RESULTS_FILE,
};
use crate::certificates;
use crate::error::{Error, Result};
use crate::instances;

/// Columns after the `axis_*` ones, in order.
pub const CSV_COLUMNS: [&str; 11] = [
    "trial",
    "recovered",
    "certified_global",
    "objective",
    "grad_residual",
    "s_min_eig",
    "condition_margin",
    "rank1_gap",
    "correlation",
    "status",
    "wall_ms",
];

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes out of `n` at [`WILSON_Z`].
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n, z2) = (k as f64, n as f64, WILSON_Z * WILSON_Z);
    let p = k / n;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Half-width of the Wilson interval divided by [`WILSON_Z`].
pub fn wilson_se(k: usize, n: usize) -> f64 {
    let (lo, hi) = wilson_interval(k, n);
    (hi - lo) / (2.0 * WILSON_Z)
}

fn float(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn csv_string(result: &SweepResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = result.axes.iter().map(|a| format!("axis_{a}")).collect();
    header.extend(CSV_COLUMNS.iter().map(|c| c.to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for rec in result.records() {
        let mut row: Vec<String> = result
            .axes
            .iter()
            .map(|a| rec.cell.get(a).map(|v| float(*v)).unwrap_or_default())
            .collect();
        row.extend([
            rec.trial.to_string(),
            rec.recovered.to_string(),
            rec.certified_global.to_string(),
            float(rec.objective),
            float(rec.grad_residual),
            float(rec.s_min_eig),
            float(rec.condition_margin),
            float(rec.rank1_gap),
            float(rec.correlation),
            rec.status.clone(),
            rec.wall_ms.to_string(),
        ]);
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

/// One row per trial: sorted `axis_*` columns, then [`CSV_COLUMNS`].
pub fn write_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, csv_string(result)?).map_err(|e| Error::io(path, e))
}

/// Inverse of the CSV writer; cells appear in first-seen order.
pub fn parse_csv(text: &str) -> Result<SweepResult> {
    let malformed = |field: &str, reason: String| Error::Malformed {
        path: "<csv>".into(),
        field: field.to_string(),
        reason,
    };
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| malformed("header", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let naxes = header.iter().take_while(|h| h.starts_with("axis_")).count();
    let axes: Vec<String> = header[..naxes]
        .iter()
        .map(|h| h["axis_".len()..].to_string())
        .collect();
    if header[naxes..] != CSV_COLUMNS {
        return Err(malformed(
            "header",
            format!("unexpected columns {:?}", &header[naxes..]),
        ));
    }
    let mut cells: Vec<CellResult> = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| malformed("row", e.to_string()))?;
        let at = |i: usize| row.get(i).unwrap_or("");
        let f = |i: usize| -> Result<f64> {
            at(i)
                .parse::<f64>()
                .map_err(|e| malformed(&header[i], format!("row {}: {e}", line + 1)))
        };
        let b = |i: usize| -> Result<bool> {
            at(i)
                .parse::<bool>()
                .map_err(|e| malformed(&header[i], format!("row {}: {e}", line + 1)))
        };
        let u = |i: usize| -> Result<u64> {
            at(i)
                .parse::<u64>()
                .map_err(|e| malformed(&header[i], format!("row {}: {e}", line + 1)))
        };
        let mut cell = BTreeMap::new();
        for (k, a) in axes.iter().enumerate() {
            cell.insert(a.clone(), f(k)?);
        }
        let o = naxes;
        let rec = TrialRecord {
            cell: cell.clone(),
            trial: u(o)? as usize,
            recovered: b(o + 1)?,
            certified_global: b(o + 2)?,
            objective: f(o + 3)?,
            grad_residual: f(o + 4)?,
            s_min_eig: f(o + 5)?,
            condition_margin: f(o + 6)?,
            rank1_gap: f(o + 7)?,
            correlation: f(o + 8)?,
            status: at(o + 9).to_string(),
            wall_ms: u(o + 10)?,
        };
        match cells.iter_mut().find(|c| c.coords == cell) {
            Some(c) => c.records.push(rec),
            None => cells.push(CellResult {
                coords: cell,
                records: vec![rec],
            }),
        }
    }
    Ok(SweepResult { axes, cells })
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<SweepResult> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text).map_err(|e| match e {
        Error::Malformed { field, reason, .. } => Error::Malformed {
            path: path.to_path_buf(),
            field,
            reason,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub coords: BTreeMap<String, f64>,
    pub trials: usize,
    pub recovered: usize,
    pub certified: usize,
    pub frequency: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

pub fn summarize(result: &SweepResult) -> Vec<CellSummary> {
    result
        .cells
        .iter()
        .map(|c| {
            let (lo, hi) = wilson_interval(c.recovered(), c.records.len());
            CellSummary {
                coords: c.coords.clone(),
                trials: c.records.len(),
                recovered: c.recovered(),
                certified: c.records.iter().filter(|r| r.certified_global).count(),
                frequency: c.frequency(),
                wilson_low: lo,
                wilson_high: hi,
            }
        })
        .collect()
}

/// Fixed-width table of per-cell recovery frequencies with Wilson 95%
/// intervals.
pub fn emit_summary(result: &SweepResult) -> String {
    let mut out = String::new();
    for a in &result.axes {
        let _ = write!(out, "{a:>12} ");
    }
    let _ = writeln!(
        out,
        "{:>9} {:>9} {:>9} {:>19}",
        "recovered", "certified", "freq", "wilson95"
    );
    for s in summarize(result) {
        for a in &result.axes {
            let _ = write!(out, "{:>12} ", format!("{}", s.coords[a]));
        }
        let _ = writeln!(
            out,
            "{:>9} {:>9} {:>9.3} {:>19}",
            format!("{}/{}", s.recovered, s.trials),
            format!("{}/{}", s.certified, s.trials),
            s.frequency,
            format!("[{:.4}, {:.4}]", s.wilson_low, s.wilson_high)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneViolation {
    pub lower: usize,
    pub higher: usize,
    pub excess: f64,
}

/// Cells in the given order whose frequency rises above an earlier cell's
/// by more than two combined Wilson standard errors.
pub fn check_monotone(cells: &[CellResult]) -> Vec<MonotoneViolation> {
    let mut out = Vec::new();
    for i in 0..cells.len() {
        for j in (i + 1)..cells.len() {
            let (ki, ni) = (cells[i].recovered(), cells[i].records.len());
            let (kj, nj) = (cells[j].recovered(), cells[j].records.len());
            let bound = 2.0 * (wilson_se(ki, ni).powi(2) + wilson_se(kj, nj).powi(2)).sqrt();
            let excess = cells[j].frequency() - cells[i].frequency() - bound;
            if excess > 0.0 {
                out.push(MonotoneViolation {
                    lower: i,
                    higher: j,
                    excess,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub coords: BTreeMap<String, f64>,
    pub trial: usize,
    pub instance: String,
    pub factor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub spec: SweepSpec,
    pub results: String,
    pub cells: Vec<CellSummary>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    pub fn new(spec: &SweepSpec, result: &SweepResult) -> Self {
        let mut artifacts = Vec::new();
        for rec in result.records() {
            if keeps_artifact(spec, rec.trial) && rec.status != "error" {
                let (instance, factor) = artifact_names(&rec.cell, rec.trial);
                artifacts.push(ArtifactEntry {
                    coords: rec.cell.clone(),
                    trial: rec.trial,
                    instance,
                    factor,
                });
            }
        }
        Self {
            format: "bmsync-sweep".into(),
            version: 1,
            spec: spec.clone(),
            results: RESULTS_FILE.into(),
            cells: summarize(result),
            artifacts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub records: usize,
    pub artifacts_checked: usize,
    pub frequencies_match: bool,
    pub mismatches: Vec<String>,
    pub ok: bool,
}

/// Re-derives the stored recovery flags from the saved instances and
/// factors, and the manifest frequencies from the CSV.
pub fn verify(dir: impl AsRef<Path>) -> Result<VerifyReport> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: mpath.clone(),
        field: "manifest".into(),
        reason: e.to_string(),
    })?;
    let result = read_csv(dir.join(&manifest.results))?;
    let mut mismatches = Vec::new();
    let frequencies_match = summarize(&result) == manifest.cells;
    if !frequencies_match {
        mismatches.push("manifest cell summaries differ from the CSV".to_string());
    }
    let mut checked = 0;
    for art in &manifest.artifacts {
        let label = format!("{:?} trial {}", art.coords, art.trial);
        let Some(rec) = result
            .records()
            .find(|r| r.cell == art.coords && r.trial == art.trial)
        else {
            mismatches.push(format!("{label}: no CSV row"));
            continue;
        };
        let inst = instances::load_instance(dir.join(&art.instance))?;
        let y = instances::load_factor(dir.join(&art.factor))?;
        if let Some(z) = &inst.truth {
            let rep = certificates::check_exact_recovery(&y, z)?;
            if rep.is_exact != rec.recovered {
                mismatches.push(format!(
                    "{label}: recovered = {} in CSV, {} offline",
                    rec.recovered, rep.is_exact
                ));
            }
            checked += 1;
        }
    }
    Ok(VerifyReport {
        records: result.records().count(),
        artifacts_checked: checked,
        frequencies_match,
        ok: mismatches.is_empty(),
        mismatches,
    })
}
