use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use fdrlab::design::{DesignMatrix, DesignSpec};
use fdrlab::io::{fmt_f64, load_matrix, load_vector, save_matrix, save_vector};
use fdrlab::mc::{run_experiment, write_rows, ExperimentConfig, Preset, RunManifest};
use fdrlab::mirror_stats::{
    degm_scores, gm_scores, select_scores_at_fdr, select_scores_at_u, KnockoffPlan, Ranker,
    SelectionResult, StatKind,
};
use fdrlab::rank::{least_squares_gram, DegeneratePolicy, PathPlan};
use fdrlab::seeds::derive_seed;
use fdrlab::signal::{draw_beta, draw_response, SignalConfig};
use fdrlab::tamper::{build_knockoffs, knockoff_s, KnockoffBundle, KnockoffFlavor};
use fdrlab::theory::{
    fp_fn_exponents, numeric_phase_point, optimal_u, phase_curves, tradeoff_curve, MethodSpec,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    DesignArgs, ExponentArgs, PhaseArgs, SelectArgs, SelectMethod, SimulateArgs, TradeoffArgs,
};
use crate::error::{json_error, CliError, CliResult};

/// Seed streams for the signal and the noise drawn by `design`.
pub const BETA_STREAM: u64 = 0x6265_7461;
pub const NOISE_STREAM: u64 = 0x6e6f_6973;

/// Every numeric theta in `theory-phase --numeric` is this many grid points
/// apart; each numeric point costs two bisections over optimized exponents.
const NUMERIC_STRIDE: usize = 10;

#[derive(Debug, Serialize)]
struct Manifest<'a, A: Serialize> {
    command: &'a str,
    crate_version: &'a str,
    args: &'a A,
    seed: Option<u64>,
    outputs: Vec<String>,
    wall_time_s: f64,
    result: Value,
}

fn manifest_path(out: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| out.with_extension("manifest.json"))
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_manifest_json<A: Serialize>(
    path: &Path,
    command: &str,
    args: &A,
    seed: Option<u64>,
    outputs: &[&Path],
    started: Instant,
    result: Value,
) -> CliResult<()> {
    let manifest = Manifest {
        command,
        crate_version: env!("CARGO_PKG_VERSION"),
        args,
        seed,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_time_s: started.elapsed().as_secs_f64(),
        result,
    };
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(runtime)?;
    writeln!(w).map_err(runtime)?;
    w.flush().map_err(runtime)
}

pub fn design(args: &DesignArgs) -> CliResult<()> {
    let started = Instant::now();
    let kind = args.kind()?;
    let spec = DesignSpec::new(kind, args.p, args.n, args.seed);
    let x = spec.build()?;
    save_matrix(&args.out, x.x()).map_err(runtime)?;
    let mut outputs = vec![args.out.as_path()];
    let mut result = json!({ "design": kind, "label": kind.label() });

    if args.y_out.is_some() || args.beta_out.is_some() {
        let theta = args
            .theta
            .ok_or_else(|| CliError::config("theta", "required to draw a signal"))?;
        let r = args
            .r
            .ok_or_else(|| CliError::config("r", "required to draw a signal"))?;
        let signal = SignalConfig::new(theta, r, args.signed, args.p)?;
        let beta_seed = derive_seed(args.seed, &[BETA_STREAM]);
        let noise_seed = derive_seed(args.seed, &[NOISE_STREAM]);
        let beta = draw_beta(&signal, beta_seed)?;
        let response = draw_response(&x, &beta, noise_seed)?;
        if let Some(path) = &args.beta_out {
            save_vector(path, beta.beta()).map_err(runtime)?;
            outputs.push(path);
        }
        if let Some(path) = &args.y_out {
            save_vector(path, &response.y).map_err(runtime)?;
            outputs.push(path);
        }
        result["signal"] = json!({
            "theta": theta,
            "r": r,
            "tau": signal.tau(),
            "support_size": beta.support().len(),
            "beta_seed": beta_seed,
            "noise_seed": noise_seed,
        });
    }
    let manifest = manifest_path(&args.out, &args.common.manifest);
    write_manifest_json(
        &manifest,
        "design",
        args,
        Some(args.seed),
        &outputs,
        started,
        result,
    )
}

fn knockoff_bundle(
    x: &DesignMatrix,
    flavor: KnockoffFlavor,
    seed: u64,
) -> CliResult<KnockoffBundle> {
    let s = knockoff_s(x.gram().matrix(), flavor)?;
    Ok(build_knockoffs(x, &s, seed)?)
}

/// Scores and, for filters, the importance pairs behind them.
type Scored = (Vec<f64>, Vec<(f64, f64)>);

fn select_scores(
    args: &SelectArgs,
    x: &DesignMatrix,
    y: &nalgebra::DVector<f64>,
) -> CliResult<Scored> {
    let kind = StatKind::from(args.stat);
    let flavor = KnockoffFlavor::from(args.flavor);
    match args.method {
        SelectMethod::Knockoff => {
            let bundle = knockoff_bundle(x, flavor, args.seed)?;
            let plan = KnockoffPlan::new(
                &bundle,
                Ranker::from(args.ranker),
                DegeneratePolicy::RecordTied,
            )?;
            let sv = plan.scores(y, kind, "knockoff")?;
            Ok((sv.scores, sv.pairs))
        }
        SelectMethod::Gm => {
            let sv = gm_scores(x, y, kind, args.seed)?;
            Ok((sv.scores, sv.pairs))
        }
        SelectMethod::Degm => {
            let bundle = knockoff_bundle(x, flavor, args.seed)?;
            let sv = degm_scores(x, bundle.xtilde(), y, kind)?;
            Ok((sv.scores, sv.pairs))
        }
        SelectMethod::Lasso => {
            let plan = PathPlan::new(x.gram().matrix(), DegeneratePolicy::Refuse);
            let e = plan.entry_times(x.x().tr_mul(y).as_slice())?.into_vec();
            Ok((e, Vec::new()))
        }
        SelectMethod::Ols => {
            let b = least_squares_gram(x.gram().matrix(), &x.x().tr_mul(y))?;
            Ok((b.as_slice().iter().map(|v| v.abs()).collect(), Vec::new()))
        }
    }
}

fn threshold_rule(args: &SelectArgs, scores: &[f64]) -> CliResult<SelectionResult> {
    let prototype = matches!(args.method, SelectMethod::Lasso | SelectMethod::Ols);
    match (args.q, args.u) {
        (Some(_), _) if prototype => Err(CliError::config(
            "q",
            "lasso and ols rank without a symmetric statistic; use --u",
        )),
        (Some(q), _) => Ok(select_scores_at_fdr(scores, q)?),
        (None, Some(u)) => Ok(select_scores_at_u(scores, u, scores.len())?),
        (None, None) => Err(CliError::config("q", "give --q or --u")),
    }
}

pub fn select(args: &SelectArgs) -> CliResult<()> {
    let started = Instant::now();
    let xm = load_matrix(&args.x).map_err(|e| CliError::config("x", e.to_string()))?;
    let y = load_vector(&args.y).map_err(|e| CliError::config("y", e.to_string()))?;
    if y.len() != xm.nrows() {
        return Err(CliError::config(
            "y",
            format!(
                "has {} entries, the design has {} rows",
                y.len(),
                xm.nrows()
            ),
        ));
    }
    let x = DesignMatrix::from_matrix(xm)?;
    let (scores, pairs) = select_scores(args, &x, &y)?;
    let selection = threshold_rule(args, &scores)?;

    let mut w = csv::Writer::from_writer(create(&args.out)?);
    w.write_record([
        "variable",
        "score",
        "importance",
        "importance_tilde",
        "selected",
    ])
    .map_err(runtime)?;
    for (j, score) in scores.iter().enumerate() {
        let (z, zt) = pairs
            .get(j)
            .map(|&(a, b)| (fmt_f64(a), fmt_f64(b)))
            .unwrap_or_default();
        let chosen = selection.selected.binary_search(&j).is_ok();
        w.write_record([
            j.to_string(),
            fmt_f64(*score),
            z,
            zt,
            u8::from(chosen).to_string(),
        ])
        .map_err(runtime)?;
    }
    w.flush().map_err(runtime)?;

    let result = json!({
        "threshold": fmt_f64(selection.threshold),
        "mode": selection.mode,
        "selected": selection.selected,
        "n_selected": selection.selected.len(),
    });
    let manifest = manifest_path(&args.out, &args.common.manifest);
    write_manifest_json(
        &manifest,
        "select",
        args,
        Some(args.seed),
        &[&args.out],
        started,
        result,
    )
}

/// Long-format theory table: (theta | u, value, method, design, rho, branch).
fn write_theory_csv(
    path: &Path,
    first: &str,
    spec: &MethodSpec,
    rows: &[(f64, f64, String)],
) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([first, "value", "method", "design", "rho", "branch"])
        .map_err(runtime)?;
    for (x, value, branch) in rows {
        w.write_record([
            fmt_f64(*x),
            fmt_f64(*value),
            spec.method.label().to_string(),
            spec.design.label().to_string(),
            fmt_f64(spec.design.param()),
            branch.clone(),
        ])
        .map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

pub fn theory_phase(args: &PhaseArgs) -> CliResult<()> {
    let started = Instant::now();
    let spec = args.target.spec()?;
    let curves = phase_curves(&spec)?;
    let mut rows = Vec::with_capacity(2 * curves.points.len());
    for (i, pt) in curves.points.iter().enumerate() {
        rows.push((pt.theta, pt.h_ar, "h_ar".to_string()));
        rows.push((pt.theta, pt.h_er, pt.branch.to_string()));
        if args.numeric && i % NUMERIC_STRIDE == NUMERIC_STRIDE / 2 {
            let (ar, er) = numeric_phase_point(&spec, pt.theta)?;
            rows.push((pt.theta, ar, "numeric_h_ar".to_string()));
            rows.push((pt.theta, er, "numeric_h_er".to_string()));
        }
    }
    write_theory_csv(&args.out, "theta", &spec, &rows)?;
    let result = json!({ "spec": spec, "points": curves.points.len(), "rho0": curves.rho0 });
    let manifest = manifest_path(&args.out, &args.common.manifest);
    write_manifest_json(
        &manifest,
        "theory-phase",
        args,
        None,
        &[&args.out],
        started,
        result,
    )
}

pub fn theory_tradeoff(args: &TradeoffArgs) -> CliResult<()> {
    let started = Instant::now();
    let spec = args.target.spec()?;
    if args.points < 2 {
        return Err(CliError::config("points", "need at least two grid points"));
    }
    let u_max = args.u_max.unwrap_or(args.r.max(1.0) + args.theta);
    if !(u_max.is_finite() && u_max > 0.0) {
        return Err(CliError::config(
            "u_max",
            format!("must be positive, got {u_max}"),
        ));
    }
    let grid: Vec<f64> = (0..args.points)
        .map(|i| u_max * i as f64 / (args.points - 1) as f64)
        .collect();
    let curve = tradeoff_curve(&spec, args.theta, args.r, &grid)?;
    let mut rows = Vec::with_capacity(2 * curve.len());
    for pt in &curve {
        rows.push((pt.u, pt.g_tpr, "g_tpr".to_string()));
        rows.push((pt.u, pt.g_fdr, "g_fdr".to_string()));
    }
    write_theory_csv(&args.out, "u", &spec, &rows)?;
    let result = json!({ "spec": spec, "theta": args.theta, "r": args.r, "u_max": u_max });
    let manifest = manifest_path(&args.out, &args.common.manifest);
    write_manifest_json(
        &manifest,
        "theory-tradeoff",
        args,
        None,
        &[&args.out],
        started,
        result,
    )
}

pub fn theory_exponent(args: &ExponentArgs) -> CliResult<()> {
    let started = Instant::now();
    let spec = args.target.spec()?;
    let u = match args.u {
        Some(u) => u,
        None => optimal_u(&spec, args.theta, args.r)?,
    };
    let pair = fp_fn_exponents(&spec, args.theta, args.r, u)?;
    let mut rows = Vec::new();
    if let Some(v) = pair.exp_fp {
        rows.push((u, v, "exp_fp".to_string()));
    }
    if let Some(v) = pair.exp_fn {
        rows.push((u, v, "exp_fn".to_string()));
    }
    rows.push((u, pair.exp_hamm, "exp_hamm".to_string()));
    rows.push((u, pair.exp_hamm - 1.0, "log_p_hamming_over_p".to_string()));
    write_theory_csv(&args.out, "u", &spec, &rows)?;
    let result = json!({
        "spec": spec,
        "theta": args.theta,
        "r": args.r,
        "u": u,
        "u_optimized": args.u.is_none(),
        "exponents": pair,
    });
    let manifest = manifest_path(&args.out, &args.common.manifest);
    write_manifest_json(
        &manifest,
        "theory-exponent",
        args,
        None,
        &[&args.out],
        started,
        result,
    )
}

fn experiment_config(args: &SimulateArgs) -> CliResult<ExperimentConfig> {
    let mut config = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::config("config", format!("cannot read {}: {e}", path.display()))
            })?;
            serde_json::from_str::<ExperimentConfig>(&text).map_err(|e| json_error("config", &e))?
        }
        (None, Some(name)) => ExperimentConfig::preset(Preset::parse(name)?)?,
        (None, None) => return Err(CliError::config("preset", "give --preset or --config")),
    };
    if let Some(reps) = args.reps {
        config.reps = reps;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(threads) = args.threads {
        config.threads = Some(threads);
    }
    config.validate()?;
    Ok(config)
}

#[derive(Serialize)]
struct SimulateManifest<'a> {
    command: &'a str,
    args: &'a SimulateArgs,
    outputs: Vec<String>,
    run: &'a RunManifest,
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let config = experiment_config(args)?;
    let out = run_experiment(&config)?;
    write_rows(create(&args.out)?, &out.rows).map_err(runtime)?;
    let path = manifest_path(&args.out, &args.manifest);
    let manifest = SimulateManifest {
        command: "simulate",
        args,
        outputs: vec![args.out.display().to_string()],
        run: &out.manifest,
    };
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(runtime)?;
    writeln!(w).map_err(runtime)?;
    w.flush().map_err(runtime)
}
