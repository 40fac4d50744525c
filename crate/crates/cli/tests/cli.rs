use std::path::Path;
use std::process::{Command, Output};

use fdrlab::design::{DesignKind, DesignMatrix, DesignSpec};
use fdrlab::io::{fmt_f64, load_matrix, load_vector};
use fdrlab::mirror_stats::{select_scores_at_fdr, KnockoffPlan, Ranker, StatKind};
use fdrlab::rank::DegeneratePolicy;
use fdrlab::tamper::{build_knockoffs, knockoff_s, KnockoffFlavor};
use serde_json::Value;
use tempfile::TempDir;

fn fdrlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdrlab"))
        .current_dir(dir)
        .args(args)
        .env_remove("FDRLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn manifest(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

#[test]
fn help_and_version_exit_zero() {
    let dir = TempDir::new().unwrap();
    assert_eq!(fdrlab(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(fdrlab(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(
        fdrlab(dir.path(), &["simulate", "--help"]).status.code(),
        Some(0)
    );
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let cases: [(&[&str], &str); 5] = [
        (
            &[
                "design", "--family", "block2", "--p", "10", "--n", "30", "--out", "x.csv",
            ],
            "rho",
        ),
        (
            &[
                "design", "--family", "block2", "--rho", "1.5", "--p", "10", "--n", "30", "--out",
                "x.csv",
            ],
            "rho",
        ),
        (
            &["theory-phase", "--method", "nonsense", "--out", "p.csv"],
            "method",
        ),
        (
            &[
                "select",
                "--x",
                "missing.csv",
                "--y",
                "missing.csv",
                "--method",
                "gm",
                "--q",
                "0.1",
                "--out",
                "s.csv",
            ],
            "x",
        ),
        (
            &["simulate", "--preset", "exp9", "--out", "s.csv"],
            "preset",
        ),
    ];
    for (args, key) in cases {
        let out = fdrlab(d, args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
        assert!(
            stderr(&out).contains(key),
            "{args:?} should name `{key}`: {}",
            stderr(&out)
        );
    }
}

#[test]
fn knockoffs_on_a_short_design_fail_at_runtime_or_config() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    // n < 2p makes knockoff construction impossible.
    let ok = fdrlab(
        d,
        &[
            "design",
            "--family",
            "orthogonal",
            "--p",
            "10",
            "--n",
            "15",
            "--seed",
            "2",
            "--out",
            "x.csv",
            "--theta",
            "0.5",
            "--r",
            "2",
            "--y-out",
            "y.csv",
        ],
    );
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    let out = fdrlab(
        d,
        &[
            "select", "--x", "x.csv", "--y", "y.csv", "--method", "knockoff", "--q", "0.2",
            "--out", "s.csv",
        ],
    );
    assert_ne!(out.status.code(), Some(0));
    assert!(matches!(out.status.code(), Some(1) | Some(2)));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn unreadable_output_path_is_a_runtime_failure() {
    let dir = TempDir::new().unwrap();
    let out = fdrlab(
        dir.path(),
        &[
            "design",
            "--family",
            "orthogonal",
            "--p",
            "4",
            "--n",
            "8",
            "--out",
            "no/such/dir/x.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn phase_table_carries_the_h5_branch_below_rho0() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = fdrlab(
        d,
        &[
            "theory-phase",
            "--method",
            "knockoff-ec",
            "--rho",
            "-0.4",
            "--out",
            "phase.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = read(d, "phase.csv");
    assert!(table.starts_with("theta,value,method,design,rho,branch\n"));
    assert!(table.lines().any(|l| l.ends_with(",h5")));
    let m = manifest(d, "phase.manifest.json");
    assert_eq!(m["command"], "theory-phase");
    assert!(m["wall_time_s"].as_f64().is_some());
}

#[test]
fn design_output_matches_the_library() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = fdrlab(
        d,
        &[
            "design", "--family", "expdecay", "--rho", "0.6", "--p", "12", "--n", "40", "--seed",
            "9", "--out", "x.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let from_cli = load_matrix(&d.join("x.csv")).unwrap();
    let direct = DesignSpec::new(DesignKind::ExpDecay { rho: 0.6 }, 12, 40, 9)
        .build()
        .unwrap();
    assert_eq!(from_cli.shape(), direct.x().shape());
    for (a, b) in from_cli.iter().zip(direct.x().iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn design_then_select_round_trip_matches_in_process_pipeline() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = fdrlab(
        d,
        &[
            "design",
            "--family",
            "block2",
            "--rho",
            "0.5",
            "--p",
            "30",
            "--n",
            "90",
            "--seed",
            "4",
            "--out",
            "x.csv",
            "--theta",
            "0.4",
            "--r",
            "3",
            "--y-out",
            "y.csv",
            "--beta-out",
            "beta.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = fdrlab(
        d,
        &[
            "select", "--x", "x.csv", "--y", "y.csv", "--method", "knockoff", "--flavor", "ci",
            "--q", "0.2", "--seed", "7", "--out", "sel.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let x = DesignMatrix::from_matrix(load_matrix(&d.join("x.csv")).unwrap()).unwrap();
    let y = load_vector(&d.join("y.csv")).unwrap();
    let s = knockoff_s(x.gram().matrix(), KnockoffFlavor::ConditionalIndependence).unwrap();
    let bundle = build_knockoffs(&x, &s, 7).unwrap();
    let plan = KnockoffPlan::new(&bundle, Ranker::LassoPath, DegeneratePolicy::RecordTied).unwrap();
    let scores = plan.scores(&y, StatKind::SignedMax, "reference").unwrap();
    let selection = select_scores_at_fdr(&scores.scores, 0.2).unwrap();

    let table = read(d, "sel.csv");
    let mut lines = table.lines();
    assert_eq!(
        lines.next(),
        Some("variable,score,importance,importance_tilde,selected")
    );
    let rows: Vec<Vec<String>> = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(rows.len(), 30);
    for (j, row) in rows.iter().enumerate() {
        let (z, zt) = scores.pairs[j];
        let chosen = selection.selected.contains(&j);
        let expected = [
            j.to_string(),
            fmt_f64(scores.scores[j]),
            fmt_f64(z),
            fmt_f64(zt),
            u8::from(chosen).to_string(),
        ];
        assert_eq!(row.as_slice(), expected.as_slice(), "variable {j}");
    }
    let m = manifest(d, "sel.manifest.json");
    assert_eq!(m["result"]["threshold"], fmt_f64(selection.threshold));
    assert_eq!(m["result"]["n_selected"], selection.selected.len());
    assert_eq!(m["seed"], 7);
}

#[test]
fn prototypes_need_a_fixed_threshold() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let design = [
        "design",
        "--family",
        "orthogonal",
        "--p",
        "20",
        "--n",
        "60",
        "--out",
        "x.csv",
        "--theta",
        "0.5",
        "--r",
        "4",
        "--y-out",
        "y.csv",
    ];
    assert_eq!(fdrlab(d, &design).status.code(), Some(0));
    for method in ["lasso", "ols"] {
        let refused = fdrlab(
            d,
            &[
                "select", "--x", "x.csv", "--y", "y.csv", "--method", method, "--q", "0.1",
                "--out", "s.csv",
            ],
        );
        assert_eq!(refused.status.code(), Some(2));
        let fixed = fdrlab(
            d,
            &[
                "select", "--x", "x.csv", "--y", "y.csv", "--method", method, "--u", "1", "--out",
                "s.csv",
            ],
        );
        assert_eq!(fixed.status.code(), Some(0), "{}", stderr(&fixed));
    }
}

#[test]
fn flag_file_values_are_overridden_by_explicit_flags() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("flags.json"),
        r#"{"family": "block2", "rho": 0.3, "p": 8, "n": 24, "seed": 5, "out": "from_file.csv"}"#,
    )
    .unwrap();
    let out = fdrlab(
        d,
        &[
            "design",
            "--config",
            "flags.json",
            "--p",
            "10",
            "--out",
            "x.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(!d.join("from_file.csv").exists());
    let x = load_matrix(&d.join("x.csv")).unwrap();
    assert_eq!(x.shape(), (24, 10));
    let direct = DesignSpec::new(DesignKind::Block2 { rho: 0.3 }, 10, 24, 5)
        .build()
        .unwrap();
    assert!(x
        .iter()
        .zip(direct.x().iter())
        .all(|(a, b)| a.to_bits() == b.to_bits()));

    std::fs::write(d.join("bad.json"), r#"{"rho": [1, 2]}"#).unwrap();
    let bad = fdrlab(
        d,
        &[
            "design",
            "--config",
            "bad.json",
            "--family",
            "orthogonal",
            "--p",
            "4",
            "--n",
            "8",
            "--out",
            "y.csv",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("rho"));
}

const SMALL_EXPERIMENT: &str = r#"{
  "preset": "custom",
  "n": 90,
  "p": 30,
  "designs": [{"family": "orthogonal"}],
  "thetas": [0.4],
  "r_grid": [1.0, 3.0],
  "signed": false,
  "methods": [{"kind": "lasso_path"}, {"kind": "gaussian_mirror", "stat": "signed_max"}],
  "reps": 4,
  "threshold": {"mode": "optimal_u"},
  "master_seed": 3
}"#;

#[test]
fn simulate_is_reproducible_and_honours_overrides() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("exp.json"), SMALL_EXPERIMENT).unwrap();
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["simulate", "--config", "exp.json", "--out", out];
        args.extend_from_slice(extra);
        let o = fdrlab(d, &args);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        read(d, out)
    };
    let a = run("a.csv", &[]);
    let b = run("b.csv", &["--threads", "2"]);
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 1 + 4);
    let c = run("c.csv", &["--seed", "4"]);
    assert_ne!(a, c);
    let m = manifest(d, "c.manifest.json");
    assert_eq!(m["run"]["master_seed"], 4);
    assert!(m["run"]["total_wall_time_s"].as_f64().is_some());
    let r = run("r.csv", &["--reps", "2"]);
    assert!(r.lines().skip(1).all(|l| l.split(',').any(|f| f == "2")));
}

#[test]
fn thread_variable_does_not_change_results() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("exp.json"), SMALL_EXPERIMENT).unwrap();
    let run = |out: &str, threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_fdrlab"))
            .current_dir(d)
            .args(["simulate", "--config", "exp.json", "--out", out])
            .env("FDRLAB_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (
            read(d, out),
            manifest(d, &out.replace(".csv", ".manifest.json")),
        )
    };
    let (one, m1) = run("one.csv", "1");
    let (three, m3) = run("three.csv", "3");
    assert_eq!(one, three);
    assert_eq!(m1["run"]["workers"], 1);
    assert!(m3["run"]["workers"].as_u64().unwrap() >= 1);
}

#[test]
fn exponent_at_zero_strength_matches_the_null_rate() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = fdrlab(
        d,
        &[
            "theory-exponent",
            "--method",
            "gm-sgm",
            "--theta",
            "0.3",
            "--r",
            "0",
            "--out",
            "e.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = read(d, "e.csv");
    let hamm = table.lines().find(|l| l.ends_with(",exp_hamm")).unwrap();
    let value: f64 = hamm.split(',').nth(1).unwrap().parse().unwrap();
    // With no signal strength nothing is found: E[Hamming] is p^(1 - theta).
    assert!((value - 0.7).abs() < 1e-6, "{value}");
}
