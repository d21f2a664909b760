//! Text container for instances and factor matrices.
//!
//! ```text
//! format = bmsync-instance
//! version = 1
//! model = sbm
//! n = 4
//! p = 0.5
//! q = 0.1
//! centering = known-pq
//! seed = 17
//! truth = ++--
//! cost = <base64 of n*n little-endian f64, row-major>
//! graph = <base64 ...>            (optional)
//! adversary.applications = 1.0:0.2:5;...   (optional)
//! adversary.delta = <base64 ...>  (optional)
//! checksum = sha256:<hex of every byte before this line>
//! ```
//!
//! Floats in the header use Rust's shortest round-trip formatting, so every
//! field survives a save/load cycle bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use super::{
    AdversaryRecord, Centering, CostMatrix, Graph, ModelParams, ProblemInstance, SignVector,
};
use crate::error::{Error, Result};
use crate::manifold::FactorPoint;

const INSTANCE_FORMAT: &str = "bmsync-instance";
const FACTOR_FORMAT: &str = "bmsync-factor";
const VERSION: u32 = 1;

fn encode_matrix(m: &DMatrix<f64>) -> String {
    let mut bytes = Vec::with_capacity(m.nrows() * m.ncols() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    B64.encode(bytes)
}

fn checksum(body: &str) -> String {
    let digest = Sha256::digest(body.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

fn seal(body: String) -> String {
    let sum = checksum(&body);
    format!("{body}checksum = {sum}\n")
}

struct Parsed {
    path: PathBuf,
    fields: BTreeMap<String, String>,
}

impl Parsed {
    fn malformed(&self, field: &str, reason: impl Into<String>) -> Error {
        Error::Malformed {
            path: self.path.clone(),
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    fn get(&self, field: &str) -> Result<&str> {
        self.fields
            .get(field)
            .map(String::as_str)
            .ok_or_else(|| self.malformed(field, "missing"))
    }

    fn parse<T: std::str::FromStr>(&self, field: &str) -> Result<T> {
        let raw = self.get(field)?;
        raw.parse()
            .map_err(|_| self.malformed(field, format!("cannot parse {raw:?}")))
    }

    fn matrix(&self, field: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let bytes = B64
            .decode(self.get(field)?)
            .map_err(|e| self.malformed(field, format!("bad base64: {e}")))?;
        if bytes.len() != rows * cols * 8 {
            return Err(self.malformed(
                field,
                format!("expected {} bytes, found {}", rows * cols * 8, bytes.len()),
            ));
        }
        let mut m = DMatrix::zeros(rows, cols);
        for (k, chunk) in bytes.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            m[(k / cols, k % cols)] = v;
        }
        Ok(m)
    }
}

fn parse_container(path: &Path, text: &str, expected_format: &str) -> Result<Parsed> {
    let malformed = |field: &str, reason: &str| Error::Malformed {
        path: path.to_path_buf(),
        field: field.to_string(),
        reason: reason.to_string(),
    };
    let marker = "checksum = ";
    let pos = text
        .rfind(marker)
        .filter(|&p| p == 0 || text.as_bytes()[p - 1] == b'\n')
        .ok_or_else(|| malformed("checksum", "missing (file truncated?)"))?;
    let (body, tail) = text.split_at(pos);
    let stored = tail[marker.len()..].trim_end();
    if stored != checksum(body) {
        return Err(malformed("checksum", "does not match file contents"));
    }
    let mut fields = BTreeMap::new();
    for (lineno, line) in body.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once(" = ")
            .ok_or_else(|| malformed(&format!("line {}", lineno + 1), "expected `key = value`"))?;
        if fields
            .insert(k.trim().to_string(), v.trim().to_string())
            .is_some()
        {
            return Err(malformed(k.trim(), "duplicate key"));
        }
    }
    let parsed = Parsed {
        path: path.to_path_buf(),
        fields,
    };
    let format = parsed.get("format")?;
    if format != expected_format {
        return Err(parsed.malformed(
            "format",
            format!("expected {expected_format}, found {format}"),
        ));
    }
    let version: u32 = parsed.parse("version")?;
    if version != VERSION {
        return Err(parsed.malformed("version", format!("unsupported version {version}")));
    }
    Ok(parsed)
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|_| Error::Malformed {
        path: path.to_path_buf(),
        field: "<file>".into(),
        reason: "not UTF-8".into(),
    })
}

pub(crate) fn instance_to_string(inst: &ProblemInstance) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    kv("format", INSTANCE_FORMAT.into());
    kv("version", VERSION.to_string());
    kv("model", inst.params.name().into());
    kv("n", inst.n().to_string());
    match inst.params {
        ModelParams::Gaussian { sigma, .. } => kv("sigma", format!("{sigma:?}")),
        ModelParams::ErBernoulli { p, delta, .. } => {
            kv("p", format!("{p:?}"));
            kv("delta", format!("{delta:?}"));
        }
        ModelParams::Sbm {
            p, q, centering, ..
        } => {
            kv("p", format!("{p:?}"));
            kv("q", format!("{q:?}"));
            kv("centering", centering.as_str().into());
        }
        ModelParams::Raw => {}
    }
    kv("seed", inst.seed.to_string());
    kv(
        "truth",
        inst.truth
            .as_ref()
            .map(SignVector::to_symbols)
            .unwrap_or_else(|| "none".into()),
    );
    kv("cost", encode_matrix(inst.cost.entries()));
    kv(
        "graph",
        inst.graph
            .as_ref()
            .map(|g| encode_matrix(g.weights()))
            .unwrap_or_else(|| "none".into()),
    );
    if let Some(adv) = &inst.adversary {
        let apps: Vec<String> = adv
            .applications
            .iter()
            .map(|(s, d, seed)| format!("{s:?}:{d:?}:{seed}"))
            .collect();
        kv("adversary.applications", apps.join(";"));
        kv("adversary.delta", encode_matrix(&adv.delta_plus));
    }
    seal(s)
}

pub(crate) fn instance_from_str(path: &Path, text: &str) -> Result<ProblemInstance> {
    let f = parse_container(path, text, INSTANCE_FORMAT)?;
    let n: usize = f.parse("n")?;
    if n > super::MAX_DENSE_N {
        return Err(f.malformed("n", format!("{n} exceeds the dense limit")));
    }
    let params = match f.get("model")? {
        "gaussian" => ModelParams::Gaussian {
            n,
            sigma: f.parse("sigma")?,
        },
        "erbern" => ModelParams::ErBernoulli {
            n,
            p: f.parse("p")?,
            delta: f.parse("delta")?,
        },
        "sbm" => ModelParams::Sbm {
            n,
            p: f.parse("p")?,
            q: f.parse("q")?,
            centering: Centering::parse(f.get("centering")?)
                .map_err(|e| f.malformed("centering", e.to_string()))?,
        },
        "raw" => ModelParams::Raw,
        other => return Err(f.malformed("model", format!("unknown model {other:?}"))),
    };
    let truth = match f.get("truth")? {
        "none" => None,
        s => {
            let t = SignVector::from_symbols(s).map_err(|e| f.malformed("truth", e.to_string()))?;
            if t.len() != n {
                return Err(f.malformed("truth", format!("length {} != n = {n}", t.len())));
            }
            Some(t)
        }
    };
    let cost = CostMatrix::new(f.matrix("cost", n, n)?)?;
    let graph = match f.get("graph")? {
        "none" => None,
        _ => Some(Graph::new(f.matrix("graph", n, n)?)?),
    };
    let adversary = match f.fields.get("adversary.applications") {
        None => None,
        Some(apps) => {
            let applications = apps
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|entry| {
                    let parts: Vec<&str> = entry.split(':').collect();
                    match parts.as_slice() {
                        [s, d, seed] => Ok((
                            s.parse().map_err(|_| ())?,
                            d.parse().map_err(|_| ())?,
                            seed.parse().map_err(|_| ())?,
                        )),
                        _ => Err(()),
                    }
                })
                .collect::<std::result::Result<Vec<(f64, f64, u64)>, ()>>()
                .map_err(|_| {
                    f.malformed("adversary.applications", "expected strength:density:seed")
                })?;
            Some(AdversaryRecord {
                delta_plus: f.matrix("adversary.delta", n, n)?,
                applications,
            })
        }
    };
    let inst = ProblemInstance {
        cost,
        truth,
        graph,
        params,
        seed: f.parse("seed")?,
        adversary,
    };
    params
        .validate()
        .map_err(|e| Error::InvariantViolation(format!("{path:?}: {e}")))?;
    inst.validate()?;
    Ok(inst)
}

pub fn save_instance(inst: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, instance_to_string(inst)).map_err(|e| Error::io(path, e))
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    let path = path.as_ref();
    instance_from_str(path, &read_text(path)?)
}

pub fn save_factor(y: &FactorPoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let m = y.matrix();
    let body = format!(
        "format = {FACTOR_FORMAT}\nversion = {VERSION}\nn = {}\nr = {}\ny = {}\n",
        m.nrows(),
        m.ncols(),
        encode_matrix(m)
    );
    fs::write(path, seal(body)).map_err(|e| Error::io(path, e))
}

pub fn load_factor(path: impl AsRef<Path>) -> Result<FactorPoint> {
    let path = path.as_ref();
    let f = parse_container(path, &read_text(path)?, FACTOR_FORMAT)?;
    let n: usize = f.parse("n")?;
    let r: usize = f.parse("r")?;
    FactorPoint::new(f.matrix("y", n, r)?)
}
