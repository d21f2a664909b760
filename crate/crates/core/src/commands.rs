//! The `bmsync` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 invariant or verification
//! failure, 3 I/O error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::certificates::{self, DEFAULT_TOL};
use crate::conditions;
use crate::error::{Error, Result};
use crate::experiment::{self, SweepOptions, SweepSpec};
use crate::instances::{self, Centering, ModelParams, ProblemInstance};
use crate::linalg::CostKernel;
use crate::manifold;
use crate::solver::{self, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "bmsync",
    version,
    about = "Burer-Monteiro Z2 synchronization and SBM recovery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Model {
    Gaussian,
    Erbern,
    Sbm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CenteringArg {
    KnownPq,
    MeanEstimate,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a random instance.
    Gen {
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long, value_enum, default_value = "known-pq")]
        centering: CenteringArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the rank-r relaxation of an instance from random starts.
    Solve {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to max(4, ceil(log2 n)).
        #[arg(long)]
        r: Option<usize>,
        #[arg(long, default_value_t = 1)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        grad_tol: Option<f64>,
        #[arg(long)]
        curv_tol: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Where to store the best factor.
        #[arg(long)]
        y_out: Option<PathBuf>,
    },
    /// Check first-order, second-order and global optimality of a factor.
    Certify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Exhaustive optimum of the sign problem (n <= 22).
    Oracle {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate the recovery conditions on an instance with known truth.
    Conditions {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        r: usize,
        /// Slack of the asymptotic conditions.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Add a monotone perturbation aligned with the planted signs.
    Adversary {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        strength: f64,
        #[arg(long)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo sweep described by a TOML spec.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        resume: bool,
    },
    /// Recheck a sweep directory against its saved artifacts.
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Reports go to `--report` files or to `stdout`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn emit(report: &Value, path: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    let text = format!("{}\n", serde_json::to_string_pretty(report).expect("json"));
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn need(name: &str, v: Option<f64>, model: &str) -> Result<f64> {
    v.ok_or_else(|| Error::invalid(format!("--{name} is required for the {model} model")))
}

fn dispatch(cmd: Command, stdout: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Gen {
            model,
            n,
            sigma,
            p,
            delta,
            q,
            centering,
            seed,
            out,
        } => {
            let inst = match model {
                Model::Gaussian => {
                    instances::gen_gaussian(n, need("sigma", sigma, "gaussian")?, seed)?
                }
                Model::Erbern => instances::gen_er_bernoulli(
                    n,
                    need("p", p, "erbern")?,
                    need("delta", delta, "erbern")?,
                    seed,
                )?,
                Model::Sbm => {
                    let c = match centering {
                        CenteringArg::KnownPq => Centering::KnownPq,
                        CenteringArg::MeanEstimate => Centering::MeanEstimate,
                    };
                    instances::gen_sbm(n, need("p", p, "sbm")?, need("q", q, "sbm")?, c, seed)?
                }
            };
            instances::save_instance(&inst, &out)?;
            let _ = writeln!(
                stdout,
                "wrote {} instance with n = {n} to {}",
                inst.params.name(),
                out.display()
            );
            Ok(EXIT_OK)
        }
        Command::Solve {
            input,
            r,
            starts,
            seed,
            max_iters,
            grad_tol,
            curv_tol,
            report,
            y_out,
        } => {
            let inst = instances::load_instance(&input)?;
            let r = r.unwrap_or_else(|| solver::default_rank(inst.n()));
            let mut cfg = SolverConfig::default();
            if let Some(v) = max_iters {
                cfg.max_iters = v;
            }
            if let Some(v) = grad_tol {
                cfg.grad_tol = v;
            }
            if let Some(v) = curv_tol {
                cfg.curvature_tol = v;
            }
            let ms = solver::multi_start(&inst.cost, r, &cfg, starts, seed)?;
            let best = ms.best();
            let cert = certificates::certify(&inst.cost, &best.point, DEFAULT_TOL)?;
            let recovery = match &inst.truth {
                Some(z) => {
                    serde_json::to_value(certificates::check_exact_recovery(&best.point, z)?)
                        .expect("json")
                }
                None => Value::Null,
            };
            if let Some(path) = &y_out {
                instances::save_factor(&best.point, path)?;
            }
            let per_start: Vec<Value> = ms
                .results
                .iter()
                .enumerate()
                .map(|(k, res)| {
                    json!({
                        "start": k,
                        "seed": solver::start_seed(seed, k),
                        "status": res.status.as_str(),
                        "objective": res.objective_value,
                        "iterations": res.iterations,
                        "escapes": res.escapes,
                    })
                })
                .collect();
            let rep = json!({
                "command": "solve",
                "n": inst.n(),
                "r": r,
                "seed": seed,
                "solver": cfg,
                "best_start": ms.best,
                "status": best.status.as_str(),
                "iterations": best.iterations,
                "escapes": best.escapes,
                "objective": best.objective_value,
                "grad_residual": best.grad_residual,
                "min_curvature_estimate": best.min_curvature_estimate,
                "cost_opnorm": best.cost_opnorm,
                "certificate": cert,
                "recovery": recovery,
                "starts": per_start,
            });
            emit(&rep, report.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Certify {
            input,
            y,
            tol,
            report,
        } => {
            let inst = instances::load_instance(&input)?;
            let y = instances::load_factor(&y)?;
            if y.n() != inst.n() {
                return Err(Error::InvariantViolation(format!(
                    "factor has {} rows but the instance has n = {}",
                    y.n(),
                    inst.n()
                )));
            }
            let objective = manifold::objective(&CostKernel::select(inst.cost.entries()), &y)?;
            let cert = certificates::certify(&inst.cost, &y, tol)?;
            let recovery = match &inst.truth {
                Some(z) => {
                    serde_json::to_value(certificates::check_exact_recovery(&y, z)?).expect("json")
                }
                None => Value::Null,
            };
            let rep = json!({
                "command": "certify",
                "n": y.n(),
                "r": y.r(),
                "objective": objective,
                "tol": tol,
                "certificate": cert,
                "recovery": recovery,
            });
            emit(&rep, report.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Oracle { input, report } => {
            let inst = instances::load_instance(&input)?;
            let (x, value) = certificates::brute_force_opt(&inst.cost)?;
            let truth = inst.truth.as_ref().map(|z| {
                let tv = inst.cost.quadratic_form(z);
                json!({
                    "signs": z,
                    "value": tv,
                    "optimal": (value - tv).abs() <= 1e-12 * value.abs().max(1.0),
                })
            });
            let rep = json!({
                "command": "oracle",
                "n": inst.n(),
                "signs": x,
                "value": value,
                "truth": truth,
            });
            emit(&rep, report.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Conditions {
            input,
            r,
            eps,
            report,
        } => {
            let inst = instances::load_instance(&input)?;
            let rep = conditions_report(&inst, r, eps)?;
            emit(&rep, report.as_deref(), stdout)?;
            Ok(EXIT_OK)
        }
        Command::Adversary {
            input,
            strength,
            density,
            seed,
            out,
        } => {
            let inst = instances::load_instance(&input)?;
            let next = instances::apply_monotone_adversary(&inst, strength, density, seed)?;
            instances::save_instance(&next, &out)?;
            let _ = writeln!(stdout, "wrote perturbed instance to {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Sweep {
            spec,
            out,
            jobs,
            resume,
        } => {
            let spec = SweepSpec::load(&spec)?;
            let result = experiment::run_sweep(
                &spec,
                &SweepOptions {
                    out: Some(out.clone()),
                    jobs,
                    resume,
                },
            )?;
            let _ = stdout.write_all(experiment::emit_summary(&result).as_bytes());
            let _ = writeln!(stdout, "results in {}", out.display());
            Ok(EXIT_OK)
        }
        Command::Verify { dir } => {
            let rep = experiment::verify(&dir)?;
            emit(&serde_json::to_value(&rep).expect("json"), None, stdout)?;
            Ok(if rep.ok { EXIT_OK } else { EXIT_INVARIANT })
        }
    }
}

fn conditions_report(inst: &ProblemInstance, r: usize, eps: f64) -> Result<Value> {
    let z = inst
        .truth
        .as_ref()
        .ok_or_else(|| Error::invalid("conditions need an instance with ground truth"))?;
    let n = inst.n();
    let ln = (n as f64).ln();
    let or_error = |v: Result<Value>| v.unwrap_or_else(|e| json!({ "error": e.to_string() }));
    let z2 = || -> Result<Value> {
        let (g, delta) = instances::z2_decomposition(inst)?;
        Ok(serde_json::to_value(conditions::check_z2_determ(&g, &delta, z, r)?).expect("json"))
    };
    let rep = match inst.params {
        ModelParams::Gaussian { sigma, .. } => {
            let asym = conditions::gaussian_sigma_threshold(n, r, eps)
                .map(|t| json!({ "sigma": sigma, "threshold": t, "satisfied": sigma <= t }));
            json!({ "model": "gaussian", "z2_determ": or_error(z2()), "asymptotic": or_error(asym) })
        }
        ModelParams::ErBernoulli { p, delta, .. } => {
            let asym = conditions::bern_condition(n as f64 * p / ln, delta, r, eps)
                .map(|b| serde_json::to_value(b).expect("json"));
            json!({ "model": "erbern", "z2_determ": or_error(z2()), "asymptotic": or_error(asym) })
        }
        ModelParams::Sbm {
            p, q, centering, ..
        } => {
            let g = inst
                .graph
                .as_ref()
                .ok_or_else(|| Error::InvariantViolation("SBM instance without graph".into()))?;
            let det = conditions::check_sbm_determ(g, z, p, q, r, centering)
                .map(|d| serde_json::to_value(d).expect("json"));
            let asym = conditions::sbm_condition(n, p, q, r, eps)
                .map(|s| serde_json::to_value(s).expect("json"));
            json!({ "model": "sbm", "sbm_determ": or_error(det), "asymptotic": or_error(asym) })
        }
        ModelParams::Raw => json!({ "model": "raw", "z2_determ": or_error(z2()) }),
    };
    Ok(json!({ "command": "conditions", "n": n, "r": r, "eps": eps, "report": rep }))
}
