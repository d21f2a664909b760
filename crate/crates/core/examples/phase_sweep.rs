//! A small Gaussian phase-transition sweep written to a results directory.
//!
//! The same experiment runs from the command line with
//! `bmsync sweep --spec <file> --out <dir>`, using the spec text below.

use bmsync::experiment::{check_monotone, emit_summary, run_sweep, SweepOptions, SweepSpec};

const SPEC: &str = r#"
model = "gaussian"
trials_per_cell = 6
master_seed = 11

[fixed]
n = 60
r = 6

[grid]
sigma_rel = [0.25, 1.0, 2.0, 4.0]
"#;

pub struct Outcome {
    pub frequencies: Vec<f64>,
    pub monotone: bool,
}

pub fn run_example() -> bmsync::Result<Outcome> {
    let spec = SweepSpec::parse(SPEC)?;
    let out = std::env::temp_dir().join(format!("bmsync-phase-sweep-{}", std::process::id()));
    let result = run_sweep(
        &spec,
        &SweepOptions {
            out: Some(out.clone()),
            jobs: None,
            resume: false,
        },
    )?;
    print!("{}", emit_summary(&result));
    let monotone = check_monotone(&result.cells).is_empty();
    println!("non-increasing within 2 standard errors: {monotone}");
    println!("CSV, summary and manifest in {}", out.display());
    Ok(Outcome {
        frequencies: result.cells.iter().map(|c| c.frequency()).collect(),
        monotone,
    })
}

#[allow(dead_code)]
fn main() -> bmsync::Result<()> {
    run_example().map(|_| ())
}
