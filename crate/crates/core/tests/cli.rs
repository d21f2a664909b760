use std::path::Path;
use std::process::{Command, Output};

fn bmsync(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmsync"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_solve_certify_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = bmsync(
        &[
            "gen", "--model", "erbern", "--n", "80", "--p", "0.3", "--delta", "0.9", "--seed", "4",
            "--out", "g.inst",
        ],
        d,
    );
    assert!(out.status.success(), "{out:?}");
    let out = bmsync(
        &[
            "solve",
            "--in",
            "g.inst",
            "--r",
            "6",
            "--starts",
            "2",
            "--seed",
            "1",
            "--report",
            "solve.json",
            "--y-out",
            "g.y",
        ],
        d,
    );
    assert!(out.status.success(), "{out:?}");
    let rep = json(&d.join("solve.json"));
    assert_eq!(rep["status"], "converged");
    assert_eq!(rep["certificate"]["is_global"], true);
    assert_eq!(rep["recovery"]["is_exact"], true);
    assert_eq!(rep["starts"].as_array().unwrap().len(), 2);

    let out = bmsync(
        &[
            "certify",
            "--in",
            "g.inst",
            "--y",
            "g.y",
            "--report",
            "cert.json",
        ],
        d,
    );
    assert!(out.status.success(), "{out:?}");
    let cert = json(&d.join("cert.json"));
    assert_eq!(cert["certificate"], rep["certificate"]);
    assert_eq!(
        cert["objective"].as_f64().unwrap(),
        rep["objective"].as_f64().unwrap()
    );

    let out = bmsync(
        &[
            "conditions",
            "--in",
            "g.inst",
            "--r",
            "6",
            "--report",
            "cond.json",
        ],
        d,
    );
    assert!(out.status.success(), "{out:?}");
    let cond = json(&d.join("cond.json"));
    assert!(cond["report"]["z2_determ"]["margin"].is_number());
    assert!(cond["report"]["asymptotic"]["value"].is_number());

    let out = bmsync(
        &[
            "adversary",
            "--in",
            "g.inst",
            "--strength",
            "1",
            "--density",
            "0.2",
            "--seed",
            "2",
            "--out",
            "g2.inst",
        ],
        d,
    );
    assert!(out.status.success(), "{out:?}");
    let out = bmsync(
        &[
            "solve",
            "--in",
            "g2.inst",
            "--r",
            "6",
            "--report",
            "solve2.json",
        ],
        d,
    );
    assert!(out.status.success());
    assert_eq!(json(&d.join("solve2.json"))["recovery"]["is_exact"], true);
}

#[test]
fn oracle_and_size_limit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(bmsync(
        &["gen", "--model", "gaussian", "--n", "9", "--sigma", "0.5", "--out", "s.inst"],
        d
    )
    .status
    .success());
    let out = bmsync(&["oracle", "--in", "s.inst"], d);
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["truth"]["optimal"], true);
    assert!(bmsync(
        &["gen", "--model", "gaussian", "--n", "30", "--sigma", "0.5", "--out", "b.inst"],
        d
    )
    .status
    .success());
    assert_eq!(
        bmsync(&["oracle", "--in", "b.inst"], d).status.code(),
        Some(1)
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(bmsync(&["bogus"], d).status.code(), Some(1));
    assert_eq!(bmsync(&["solve"], d).status.code(), Some(1));
    assert_eq!(
        bmsync(&["solve", "--in", "missing.inst"], d).status.code(),
        Some(3)
    );
    std::fs::write(
        d.join("bad.inst"),
        "format = bmsync-instance\nversion = 1\n",
    )
    .unwrap();
    assert_eq!(
        bmsync(&["solve", "--in", "bad.inst"], d).status.code(),
        Some(2)
    );
    std::fs::write(
        d.join("bad.toml"),
        "model = \"gaussian\"\ntrials_per_cell = 0\n[grid]\nn = [10]\nsigma = [0]\n",
    )
    .unwrap();
    assert_eq!(
        bmsync(&["sweep", "--spec", "bad.toml", "--out", "o"], d)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        bmsync(&["verify", "--dir", "nowhere"], d).status.code(),
        Some(3)
    );
}

const SPEC: &str = "model = \"gaussian\"\ntrials_per_cell = 3\nmaster_seed = 3\nartifacts = \"all\"\n[fixed]\nn = 40\nr = 5\n[grid]\nsigma_rel = [0.3, 3.0]\n";

fn strip_wall(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn sweep_verify_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("spec.toml"), SPEC).unwrap();
    let out = bmsync(
        &["sweep", "--spec", "spec.toml", "--out", "a", "--jobs", "2"],
        d,
    );
    assert!(out.status.success(), "{out:?}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("3/3"));
    let out = bmsync(&["sweep", "--spec", "spec.toml", "--out", "b"], d);
    assert!(out.status.success());
    let a = std::fs::read_to_string(d.join("a/results.csv")).unwrap();
    let b = std::fs::read_to_string(d.join("b/results.csv")).unwrap();
    assert_eq!(a.lines().count(), 7);
    assert_eq!(strip_wall(&a), strip_wall(&b));

    let out = bmsync(&["verify", "--dir", "a"], d);
    assert!(out.status.success(), "{out:?}");
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["artifacts_checked"], 6);

    // Tampering with a recovery flag is caught.
    let flipped = a.replacen(",true,", ",false,", 1);
    std::fs::write(d.join("a/results.csv"), flipped).unwrap();
    assert_eq!(bmsync(&["verify", "--dir", "a"], d).status.code(), Some(2));

    let out = bmsync(
        &["sweep", "--spec", "spec.toml", "--out", "b", "--resume"],
        d,
    );
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(d.join("b/results.csv")).unwrap(), b);
}
