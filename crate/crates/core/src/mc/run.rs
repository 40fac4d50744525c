//! Replication runner, aggregation and theory overlay.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use nalgebra::{Cholesky, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use super::config::{ExperimentConfig, Procedure, ThresholdMode};
use crate::design::{DesignKind, DesignMatrix, DesignSpec};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::mirror_stats::{
    evaluate, select_scores_at_fdr, select_scores_at_u, ErrorCounts, GmPlan, KnockoffPlan, Ranker,
    StatKind,
};
use crate::rank::{DegeneratePolicy, PathPlan};
use crate::seeds::derive_seed;
use crate::signal::{draw_beta, draw_response, SignalConfig};
use crate::tamper::{build_knockoffs, knockoff_s, KnockoffBundle, KnockoffFlavor};
use crate::theory::{hamming_exponent, optimal_u, Method, MethodSpec, TheoryDesign};

const DESIGN_STREAM: u64 = 1;
const KNOCKOFF_STREAM: u64 = 2;
const MIRROR_STREAM: u64 = 3;
const BETA_STREAM: u64 = 4;
const NOISE_STREAM: u64 = 5;

/// Environment variable capping the number of workers.
pub const THREADS_ENV: &str = "FDRLAB_THREADS";

pub const QUANTILE_LEVELS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// The closed-form result matching a procedure on a design, if any.
pub fn theory_spec(
    procedure: &Procedure,
    design: &DesignKind,
    s_gap: Option<f64>,
) -> Option<MethodSpec> {
    use Method::*;
    let make = |m: Method, d: TheoryDesign| MethodSpec::new(m, d).ok();
    match (*procedure, *design) {
        (Procedure::LassoPath | Procedure::LeastSquares, DesignKind::Orthogonal) => {
            make(BhMarginal, TheoryDesign::Orthogonal { a: 0.0 })
        }
        (Procedure::LassoPath, DesignKind::Block2 { rho }) => {
            make(LassopathPrototype, TheoryDesign::Block2 { rho })
        }
        (Procedure::LeastSquares, DesignKind::Block2 { rho }) => {
            make(OlsPrototype, TheoryDesign::Block2 { rho })
        }
        (
            Procedure::Knockoff {
                ranker: Ranker::LassoPath,
                stat,
                ..
            },
            DesignKind::Orthogonal,
        ) => {
            let a = 1.0 - s_gap?;
            let m = match stat {
                StatKind::SignedMax => KnockoffSgm,
                StatKind::Difference => KnockoffDif,
            };
            make(m, TheoryDesign::Orthogonal { a })
        }
        (
            Procedure::Knockoff {
                flavor,
                ranker: Ranker::LassoPath,
                stat: StatKind::SignedMax,
            },
            DesignKind::Block2 { rho },
        ) => match flavor {
            KnockoffFlavor::Equicorrelated => make(KnockoffEc, TheoryDesign::Block2 { rho }),
            KnockoffFlavor::ConditionalIndependence => {
                make(KnockoffCi, TheoryDesign::Block2 { rho })
            }
            KnockoffFlavor::Custom => None,
        },
        (
            Procedure::Knockoff {
                flavor: KnockoffFlavor::ConditionalIndependence,
                ranker: Ranker::LeastSquares,
                stat: StatKind::SignedMax,
            },
            DesignKind::Block2 { rho },
        ) => make(KnockoffOls, TheoryDesign::Block2 { rho }),
        (Procedure::GaussianMirror { stat }, DesignKind::Orthogonal) => {
            let m = match stat {
                StatKind::SignedMax => GmSgm,
                StatKind::Difference => GmDif,
            };
            make(m, TheoryDesign::Orthogonal { a: 0.0 })
        }
        (
            Procedure::GaussianMirror {
                stat: StatKind::SignedMax,
            },
            DesignKind::Block2 { rho },
        ) => make(GmSgm, TheoryDesign::Block2 { rho }),
        (
            Procedure::DerandomizedMirror {
                flavor: KnockoffFlavor::ConditionalIndependence,
                stat: StatKind::SignedMax,
            },
            DesignKind::Block2 { rho },
        ) => make(Degm, TheoryDesign::Block2 { rho }),
        _ => None,
    }
}

/// Knockoff gap s of an orthogonal design under `flavor`; both rules give
/// s = 1 there.
fn orthogonal_gap(flavor: KnockoffFlavor) -> Option<f64> {
    match flavor {
        KnockoffFlavor::Equicorrelated | KnockoffFlavor::ConditionalIndependence => Some(1.0),
        KnockoffFlavor::Custom => None,
    }
}

/// Threshold exponent and theoretical log_p(H*/p) at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayPoint {
    pub design_index: usize,
    pub design: String,
    pub theta: f64,
    pub r: f64,
    pub method: String,
    pub theory: Option<MethodSpec>,
    /// u* of the matching closed form, or of the marginal statistic when
    /// the design has none.
    pub u_star: f64,
    /// Exponent of FP + FN minus one at u*; None without a closed form.
    pub log_p_hamming: Option<f64>,
}

fn marginal_spec() -> MethodSpec {
    MethodSpec::orthogonal(Method::BhMarginal, 0.0)
        .expect("marginal statistic on an orthogonal design")
}

/// Theory reference for every (design, theta, r, method), in the order of
/// the result table.
pub fn theory_overlay(config: &ExperimentConfig) -> Result<Vec<OverlayPoint>> {
    config.validate()?;
    let mut out = Vec::new();
    for (d, kind) in config.designs.iter().enumerate() {
        for &theta in &config.thetas {
            for &r in &config.r_grid {
                for m in &config.methods {
                    let gap = match kind {
                        DesignKind::Orthogonal => m.knockoff_flavor().and_then(orthogonal_gap),
                        _ => None,
                    };
                    let theory = theory_spec(m, kind, gap);
                    let u_spec = theory.unwrap_or_else(marginal_spec);
                    let u_star = optimal_u(&u_spec, theta, r)?;
                    let log_p_hamming = match theory {
                        Some(spec) => Some(hamming_exponent(&spec, theta, r, u_star)? - 1.0),
                        None => None,
                    };
                    out.push(OverlayPoint {
                        design_index: d,
                        design: kind.label(),
                        theta,
                        r,
                        method: m.label(),
                        theory,
                        u_star,
                        log_p_hamming,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Aggregated outcome of one method at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub preset: String,
    pub design: String,
    pub rho: Option<f64>,
    pub theta: f64,
    pub r: f64,
    pub method: String,
    /// Threshold exponent for fixed-u modes.
    pub u: Option<f64>,
    /// Target level for the FDR mode.
    pub q: Option<f64>,
    pub reps: usize,
    pub failed: usize,
    pub mean_fp: f64,
    pub mean_fn: f64,
    pub mean_hamming: f64,
    /// log(mean_hamming / p) / log(p); -inf when no errors occurred.
    pub log_p_hamming_over_p: f64,
    pub mean_fdp: f64,
    pub mean_tpr: f64,
    /// At QUANTILE_LEVELS.
    pub fdp_quantiles: [f64; 5],
    pub tpr_quantiles: [f64; 5],
    pub theory_log_p_hamming: Option<f64>,
    /// `theory`, `marginal` (u* of the marginal statistic), `fixed` or `fdr`.
    pub threshold_source: String,
    /// Summed replication time. Excluded from the CSV so tables stay
    /// reproducible; reported in the manifest.
    pub wall_time_s: f64,
}

/// Timing and provenance of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub crate_version: String,
    pub workers: usize,
    pub rows: usize,
    pub failed_replications: usize,
    pub total_wall_time_s: f64,
    /// (method, design, theta, r, seconds) per row.
    pub row_wall_times: Vec<(String, String, f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub manifest: RunManifest,
}

enum Prepared {
    Lasso(PathPlan),
    Ols(Cholesky<f64, Dyn>),
    Knockoff(KnockoffPlan, StatKind),
    Mirror(GmPlan, StatKind),
}

impl Prepared {
    /// Scores whose large positive values indicate signals.
    fn scores(&self, x: &DesignMatrix, y: &DVector<f64>) -> Result<Vec<f64>> {
        match self {
            Prepared::Lasso(plan) => Ok(plan.entry_times(x.x().tr_mul(y).as_slice())?.into_vec()),
            Prepared::Ols(chol) => Ok(chol
                .solve(&x.x().tr_mul(y))
                .iter()
                .map(|b| b.abs())
                .collect()),
            Prepared::Knockoff(plan, kind) => plan.score_values(y, *kind),
            Prepared::Mirror(plan, kind) => Ok(plan.scores(y, *kind, "")?.scores),
        }
    }
}

struct DesignState {
    kind: DesignKind,
    x: DesignMatrix,
    methods: Vec<Prepared>,
}

fn prepare_design(config: &ExperimentConfig, d: usize) -> Result<DesignState> {
    let kind = config.designs[d];
    let spec = DesignSpec::new(
        kind,
        config.p,
        config.n,
        derive_seed(config.master_seed, &[DESIGN_STREAM, d as u64]),
    );
    let x = spec.build()?;
    let mut bundles: HashMap<KnockoffFlavor, KnockoffBundle> = HashMap::new();
    let mut bundle = |flavor: KnockoffFlavor| -> Result<KnockoffBundle> {
        if let Some(b) = bundles.get(&flavor) {
            return Ok(b.clone());
        }
        let s = knockoff_s(x.gram().matrix(), flavor)?;
        let seed = derive_seed(
            config.master_seed,
            &[KNOCKOFF_STREAM, d as u64, flavor as u64],
        );
        let b = build_knockoffs(&x, &s, seed)?;
        bundles.insert(flavor, b.clone());
        Ok(b)
    };
    let mut methods = Vec::with_capacity(config.methods.len());
    for m in &config.methods {
        let prepared = match *m {
            Procedure::LassoPath => {
                Prepared::Lasso(PathPlan::new(x.gram().matrix(), DegeneratePolicy::Refuse))
            }
            Procedure::LeastSquares => Prepared::Ols(crate::linalg::cholesky(x.gram().matrix())?),
            Procedure::Knockoff {
                flavor,
                ranker,
                stat,
            } => {
                // Singular equicorrelated knockoffs on general designs record
                // tied entries instead of failing.
                Prepared::Knockoff(
                    KnockoffPlan::new(&bundle(flavor)?, ranker, DegeneratePolicy::RecordTied)?,
                    stat,
                )
            }
            Procedure::GaussianMirror { stat } => {
                let seed = derive_seed(config.master_seed, &[MIRROR_STREAM, d as u64]);
                Prepared::Mirror(GmPlan::randomized(&x, seed)?, stat)
            }
            Procedure::DerandomizedMirror { flavor, stat } => {
                Prepared::Mirror(GmPlan::derandomized(&x, bundle(flavor)?.xtilde())?, stat)
            }
        };
        methods.push(prepared);
    }
    Ok(DesignState { kind, x, methods })
}

/// Outcome of every (r, method) pair in one replication.
type RepOutcome = Vec<Vec<std::result::Result<ErrorCounts, String>>>;

fn run_replication(
    config: &ExperimentConfig,
    state: &DesignState,
    d: usize,
    t: usize,
    rep: usize,
    thresholds: &[Vec<f64>],
) -> (RepOutcome, f64) {
    let start = Instant::now();
    let theta = config.thetas[t];
    let path = [d as u64, t as u64, rep as u64];
    let beta_seed = derive_seed(
        config.master_seed,
        &[BETA_STREAM, path[0], path[1], path[2]],
    );
    let noise_seed = derive_seed(
        config.master_seed,
        &[NOISE_STREAM, path[0], path[1], path[2]],
    );
    let outcome = config
        .r_grid
        .iter()
        .enumerate()
        .map(|(ri, &r)| {
            // Common random numbers: the support, signs and noise depend on
            // the replication only, so curves in r are smooth.
            let data = SignalConfig::new(theta, r, config.signed, config.p)
                .and_then(|sig| draw_beta(&sig, beta_seed))
                .and_then(|beta| Ok((draw_response(&state.x, &beta, noise_seed)?, beta)));
            let (response, beta) = match data {
                Ok(v) => v,
                Err(e) => return vec![Err(e.to_string()); config.methods.len()],
            };
            state
                .methods
                .iter()
                .enumerate()
                .map(|(mi, method)| {
                    let scores = method
                        .scores(&state.x, &response.y)
                        .map_err(|e| e.to_string())?;
                    let selection = match config.threshold {
                        ThresholdMode::FdrQ { q } => select_scores_at_fdr(&scores, q),
                        _ => select_scores_at_u(&scores, thresholds[ri][mi], config.p),
                    }
                    .map_err(|e| e.to_string())?;
                    Ok(evaluate(&selection, &beta))
                })
                .collect()
        })
        .collect();
    (outcome, start.elapsed().as_secs_f64())
}

fn quantiles(values: &[f64]) -> [f64; 5] {
    if values.is_empty() {
        return [f64::NAN; 5];
    }
    let mut data = Data::new(values.to_vec());
    QUANTILE_LEVELS.map(|level| data.quantile(level))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Worker count: the config's cap, then `FDRLAB_THREADS`, then the machine.
pub fn worker_count(config: &ExperimentConfig) -> Result<usize> {
    let machine = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let mut workers = config.threads.unwrap_or(machine);
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let cap: usize = v.trim().parse().ok().filter(|c| *c > 0).ok_or_else(|| {
            crate::error::invalid(
                "FDRLAB_THREADS",
                format!("expected a positive integer, got `{v}`"),
            )
        })?;
        workers = workers.min(cap);
    }
    Ok(workers.max(1))
}

/// Run every grid point and method. Results do not depend on the worker
/// count: each replication owns its random streams and aggregation is
/// sequential in a fixed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let workers = worker_count(config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invariant(format!("cannot start worker pool: {e}")))?;
    let started = Instant::now();
    let overlay = theory_overlay(config)?;
    let n_methods = config.methods.len();
    let n_r = config.r_grid.len();

    let mut rows = Vec::with_capacity(overlay.len());
    let mut failed_total = 0;
    for d in 0..config.designs.len() {
        let state = pool.install(|| prepare_design(config, d))?;
        for (t, &theta) in config.thetas.iter().enumerate() {
            let base = (d * config.thetas.len() + t) * n_r * n_methods;
            let thresholds: Vec<Vec<f64>> = (0..n_r)
                .map(|ri| {
                    (0..n_methods)
                        .map(|mi| match config.threshold {
                            ThresholdMode::FixedU { u } => u,
                            _ => overlay[base + ri * n_methods + mi].u_star,
                        })
                        .collect()
                })
                .collect();
            let outcomes: Vec<(RepOutcome, f64)> = pool.install(|| {
                (0..config.reps)
                    .into_par_iter()
                    .map(|rep| run_replication(config, &state, d, t, rep, &thresholds))
                    .collect()
            });
            let rep_time: f64 = outcomes.iter().map(|o| o.1).sum();
            for ri in 0..n_r {
                for mi in 0..n_methods {
                    let cell: Vec<&std::result::Result<ErrorCounts, String>> =
                        outcomes.iter().map(|o| &o.0[ri][mi]).collect();
                    let ok: Vec<ErrorCounts> = cell
                        .iter()
                        .filter_map(|c| c.as_ref().ok().copied())
                        .collect();
                    let failed = cell.len() - ok.len();
                    failed_total += failed;
                    let point = &overlay[base + ri * n_methods + mi];
                    rows.push(summarize(
                        config,
                        &state.kind,
                        theta,
                        point,
                        &ok,
                        failed,
                        thresholds[ri][mi],
                        rep_time,
                    ));
                }
            }
        }
    }
    let manifest = RunManifest {
        config: config.clone(),
        master_seed: config.master_seed,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        workers,
        rows: rows.len(),
        failed_replications: failed_total,
        total_wall_time_s: started.elapsed().as_secs_f64(),
        row_wall_times: rows
            .iter()
            .map(|r| {
                (
                    r.method.clone(),
                    r.design.clone(),
                    r.theta,
                    r.r,
                    r.wall_time_s,
                )
            })
            .collect(),
    };
    Ok(RunOutput { rows, manifest })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    config: &ExperimentConfig,
    kind: &DesignKind,
    theta: f64,
    point: &OverlayPoint,
    ok: &[ErrorCounts],
    failed: usize,
    u: f64,
    rep_time: f64,
) -> ResultRow {
    let p = config.p as f64;
    let mean_hamming = mean(ok.iter().map(|c| c.hamming() as f64));
    let fdp: Vec<f64> = ok.iter().map(|c| c.fdp()).collect();
    let tpr: Vec<f64> = ok.iter().map(|c| c.tpr()).collect();
    let (u, q, source) = match config.threshold {
        ThresholdMode::FdrQ { q } => (None, Some(q), "fdr"),
        ThresholdMode::FixedU { .. } => (Some(u), None, "fixed"),
        ThresholdMode::OptimalU if point.theory.is_some() => (Some(u), None, "theory"),
        ThresholdMode::OptimalU => (Some(u), None, "marginal"),
    };
    ResultRow {
        preset: config.preset.label().to_string(),
        design: kind.label(),
        rho: kind.rho(),
        theta,
        r: point.r,
        method: point.method.clone(),
        u,
        q,
        reps: ok.len(),
        failed,
        mean_fp: mean(ok.iter().map(|c| c.fp as f64)),
        mean_fn: mean(ok.iter().map(|c| c.fn_ as f64)),
        mean_hamming,
        log_p_hamming_over_p: (mean_hamming / p).ln() / p.ln(),
        mean_fdp: mean(fdp.iter().copied()),
        mean_tpr: mean(tpr.iter().copied()),
        fdp_quantiles: quantiles(&fdp),
        tpr_quantiles: quantiles(&tpr),
        theory_log_p_hamming: point.log_p_hamming,
        threshold_source: source.to_string(),
        wall_time_s: rep_time / (config.r_grid.len() * config.methods.len()) as f64,
    }
}

pub const CSV_HEADER: [&str; 29] = [
    "preset",
    "design",
    "rho",
    "theta",
    "r",
    "method",
    "u",
    "q",
    "reps",
    "failed",
    "mean_fp",
    "mean_fn",
    "mean_hamming",
    "log_p_hamming_over_p",
    "mean_fdp",
    "mean_tpr",
    "fdp_q05",
    "fdp_q25",
    "fdp_q50",
    "fdp_q75",
    "fdp_q95",
    "tpr_q05",
    "tpr_q25",
    "tpr_q50",
    "tpr_q75",
    "tpr_q95",
    "theory_log_p_hamming",
    "theory_gap",
    "threshold_source",
];

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Write the result table; floats carry 17 significant digits.
pub fn write_rows<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for row in rows {
        let gap = row
            .theory_log_p_hamming
            .map(|t| row.log_p_hamming_over_p - t);
        let mut record = vec![
            row.preset.clone(),
            row.design.clone(),
            opt(row.rho),
            fmt_f64(row.theta),
            fmt_f64(row.r),
            row.method.clone(),
            opt(row.u),
            opt(row.q),
            row.reps.to_string(),
            row.failed.to_string(),
            fmt_f64(row.mean_fp),
            fmt_f64(row.mean_fn),
            fmt_f64(row.mean_hamming),
            fmt_f64(row.log_p_hamming_over_p),
            fmt_f64(row.mean_fdp),
            fmt_f64(row.mean_tpr),
        ];
        record.extend(row.fdp_quantiles.iter().map(|v| fmt_f64(*v)));
        record.extend(row.tpr_quantiles.iter().map(|v| fmt_f64(*v)));
        record.push(opt(row.theory_log_p_hamming));
        record.push(opt(gap));
        record.push(row.threshold_source.clone());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_manifest<W: Write>(out: W, manifest: &RunManifest) -> Result<()> {
    serde_json::to_writer_pretty(out, manifest)?;
    Ok(())
}
