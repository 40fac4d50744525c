//! Experiment configuration and the built-in presets.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design::DesignKind;
use crate::error::{invalid, Error, Result};
use crate::mirror_stats::{Ranker, StatKind};
use crate::tamper::KnockoffFlavor;

/// Selection procedure evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Procedure {
    /// Lasso entry times on the original design.
    LassoPath,
    /// Absolute least-squares coefficients on the original design.
    LeastSquares,
    Knockoff {
        flavor: KnockoffFlavor,
        ranker: Ranker,
        stat: StatKind,
    },
    GaussianMirror {
        stat: StatKind,
    },
    /// Gaussian mirror with the knockoff columns of `flavor` as directions.
    DerandomizedMirror {
        flavor: KnockoffFlavor,
        stat: StatKind,
    },
}

impl Procedure {
    pub fn knockoff(flavor: KnockoffFlavor, stat: StatKind) -> Self {
        Procedure::Knockoff {
            flavor,
            ranker: Ranker::LassoPath,
            stat,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Procedure::LassoPath => "lasso".into(),
            Procedure::LeastSquares => "ols".into(),
            Procedure::Knockoff {
                flavor,
                ranker,
                stat,
            } => match ranker {
                Ranker::LassoPath => format!("kf-{}-{}", flavor.label(), stat.label()),
                Ranker::LeastSquares => format!("kf-{}-ols-{}", flavor.label(), stat.label()),
            },
            Procedure::GaussianMirror { stat } => format!("gm-{}", stat.label()),
            Procedure::DerandomizedMirror { flavor, stat } => {
                format!("degm-{}-{}", flavor.label(), stat.label())
            }
        }
    }

    /// Prototypes rank without a symmetric statistic and cannot pick a
    /// data-driven threshold.
    pub fn is_prototype(&self) -> bool {
        matches!(self, Procedure::LassoPath | Procedure::LeastSquares)
    }

    pub fn knockoff_flavor(&self) -> Option<KnockoffFlavor> {
        match *self {
            Procedure::Knockoff { flavor, .. } | Procedure::DerandomizedMirror { flavor, .. } => {
                Some(flavor)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// How the selection threshold is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    /// sqrt(2 u* log p) with u* minimizing the theoretical Hamming exponent.
    OptimalU,
    /// sqrt(2 u log p) for a given u.
    FixedU { u: f64 },
    /// Data-driven threshold at target FDR level q.
    FdrQ { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
    Exp5,
    Custom,
}

impl Preset {
    pub fn label(&self) -> &'static str {
        match self {
            Preset::Exp1 => "exp1",
            Preset::Exp2 => "exp2",
            Preset::Exp3 => "exp3",
            Preset::Exp4 => "exp4",
            Preset::Exp5 => "exp5",
            Preset::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let all = [
            Preset::Exp1,
            Preset::Exp2,
            Preset::Exp3,
            Preset::Exp4,
            Preset::Exp5,
            Preset::Custom,
        ];
        all.into_iter()
            .find(|p| p.label() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| invalid("preset", format!("unknown preset `{s}`")))
    }
}

/// A full Monte Carlo experiment: every design in `designs` is crossed with
/// every theta and r, and each method is run on the same replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub n: usize,
    pub p: usize,
    pub designs: Vec<DesignKind>,
    pub thetas: Vec<f64>,
    pub r_grid: Vec<f64>,
    /// Random signs on the signals when true.
    pub signed: bool,
    pub methods: Vec<Procedure>,
    pub reps: usize,
    pub threshold: ThresholdMode,
    pub master_seed: u64,
    /// Worker cap; `FDRLAB_THREADS` caps it further.
    #[serde(default)]
    pub threads: Option<usize>,
}

/// Evenly spaced grid from `start` to `stop` inclusive, rounded to 10
/// decimals so the values print cleanly.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=count)
        .map(|k| ((start + k as f64 * step) * 1e10).round() / 1e10)
        .collect()
}

const SGM: StatKind = StatKind::SignedMax;
const DIF: StatKind = StatKind::Difference;
const EC: KnockoffFlavor = KnockoffFlavor::Equicorrelated;
const CI: KnockoffFlavor = KnockoffFlavor::ConditionalIndependence;

impl ExperimentConfig {
    /// Desk-scale defaults of each preset.
    ///
    /// - exp1: orthogonal, (n, p) = (2000, 1000), theta in {0.3, 0.5}, r in
    ///   0..6 step 0.2, six methods, 100 reps.
    /// - exp2: block2 rho in {0.5, 0.7}, (2000, 1000), theta = 0.2, r in 0..8
    ///   step 0.2, EC and CI knockoffs, mirror and both prototypes, 100 reps.
    /// - exp3: block4 rho = 0.4 and block5 rho = 0.3, (2000, 1000), theta =
    ///   0.3, r in 0..6 step 0.2, 100 reps.
    /// - exp4: factor, block2 (0.5), expdecay (0.6) and Wishart designs,
    ///   (n, p) = (600, 150), theta in {0.2, 0.4}, signed signals, r in 0..6
    ///   step 0.2, 50 reps. p is halved from 300 because the general-design
    ///   Lasso path dominates the runtime.
    /// - exp5: block2 and expdecay with rho in 0.1..0.9, (1000, 300), theta
    ///   = 0.2, r = 5, signed signals, FDR level 0.1, 200 reps.
    pub fn preset(preset: Preset) -> Result<Self> {
        let base =
            |n, p, designs, thetas, r_grid, signed, methods, reps, threshold| ExperimentConfig {
                preset,
                n,
                p,
                designs,
                thetas,
                r_grid,
                signed,
                methods,
                reps,
                threshold,
                master_seed: 20_240_101,
                threads: None,
            };
        let cfg = match preset {
            Preset::Exp1 => base(
                2000,
                1000,
                vec![DesignKind::Orthogonal],
                vec![0.3, 0.5],
                grid(0.0, 6.0, 0.2),
                false,
                vec![
                    Procedure::knockoff(EC, SGM),
                    Procedure::knockoff(EC, DIF),
                    Procedure::GaussianMirror { stat: SGM },
                    Procedure::GaussianMirror { stat: DIF },
                    Procedure::LassoPath,
                    Procedure::LeastSquares,
                ],
                100,
                ThresholdMode::OptimalU,
            ),
            Preset::Exp2 => base(
                2000,
                1000,
                vec![
                    DesignKind::Block2 { rho: 0.5 },
                    DesignKind::Block2 { rho: 0.7 },
                ],
                vec![0.2],
                grid(0.0, 8.0, 0.2),
                false,
                vec![
                    Procedure::knockoff(EC, SGM),
                    Procedure::knockoff(CI, SGM),
                    Procedure::GaussianMirror { stat: SGM },
                    Procedure::LassoPath,
                    Procedure::LeastSquares,
                ],
                100,
                ThresholdMode::OptimalU,
            ),
            Preset::Exp3 => base(
                2000,
                1000,
                vec![
                    DesignKind::BlockD { d: 4, rho: 0.4 },
                    DesignKind::BlockD { d: 5, rho: 0.3 },
                ],
                vec![0.3],
                grid(0.0, 6.0, 0.2),
                false,
                vec![
                    Procedure::knockoff(EC, SGM),
                    Procedure::GaussianMirror { stat: SGM },
                    Procedure::LassoPath,
                    Procedure::LeastSquares,
                ],
                100,
                ThresholdMode::OptimalU,
            ),
            Preset::Exp4 => base(
                600,
                150,
                vec![
                    DesignKind::Factor { k: 2 },
                    DesignKind::Block2 { rho: 0.5 },
                    DesignKind::ExpDecay { rho: 0.6 },
                    DesignKind::Wishart,
                ],
                vec![0.2, 0.4],
                grid(0.0, 6.0, 0.2),
                true,
                vec![
                    Procedure::knockoff(EC, SGM),
                    Procedure::knockoff(CI, SGM),
                    Procedure::LassoPath,
                ],
                50,
                ThresholdMode::OptimalU,
            ),
            Preset::Exp5 => {
                let rhos = grid(0.1, 0.9, 0.1);
                let designs = rhos
                    .iter()
                    .map(|&rho| DesignKind::Block2 { rho })
                    .chain(rhos.iter().map(|&rho| DesignKind::ExpDecay { rho }))
                    .collect();
                base(
                    1000,
                    300,
                    designs,
                    vec![0.2],
                    vec![5.0],
                    true,
                    vec![
                        Procedure::knockoff(EC, SGM),
                        Procedure::knockoff(CI, SGM),
                        Procedure::GaussianMirror { stat: SGM },
                    ],
                    200,
                    ThresholdMode::FdrQ { q: 0.1 },
                )
            }
            Preset::Custom => {
                return Err(invalid(
                    "preset",
                    "the custom preset has no defaults; supply a config file",
                ));
            }
        };
        Ok(cfg)
    }

    pub fn needs_knockoffs(&self) -> bool {
        self.methods.iter().any(|m| m.knockoff_flavor().is_some())
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(invalid("reps", "need at least one replication"));
        }
        if self.designs.is_empty() {
            return Err(invalid("designs", "grid is empty"));
        }
        if self.thetas.is_empty() {
            return Err(invalid("thetas", "grid is empty"));
        }
        if self.r_grid.is_empty() {
            return Err(invalid("r_grid", "grid is empty"));
        }
        if self.methods.is_empty() {
            return Err(invalid("methods", "no methods given"));
        }
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(invalid("threads", "need at least one worker"));
            }
        }
        for &theta in &self.thetas {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(invalid(
                    "thetas",
                    format!("must lie in (0, 1), got {theta}"),
                ));
            }
        }
        for &r in &self.r_grid {
            if !(r.is_finite() && r >= 0.0) {
                return Err(invalid(
                    "r_grid",
                    format!("must be finite and nonnegative, got {r}"),
                ));
            }
        }
        match self.threshold {
            ThresholdMode::OptimalU => {}
            ThresholdMode::FixedU { u } => {
                if !(u.is_finite() && u >= 0.0) {
                    return Err(invalid(
                        "threshold.u",
                        format!("must be finite and nonnegative, got {u}"),
                    ));
                }
            }
            ThresholdMode::FdrQ { q } => {
                if !(q > 0.0 && q < 1.0) {
                    return Err(invalid(
                        "threshold.q",
                        format!("must lie in (0, 1), got {q}"),
                    ));
                }
                if let Some(m) = self.methods.iter().find(|m| m.is_prototype()) {
                    return Err(Error::Unsupported(format!(
                        "{m} has no symmetric statistic and cannot be thresholded at an FDR level"
                    )));
                }
            }
        }
        for m in &self.methods {
            if m.knockoff_flavor() == Some(KnockoffFlavor::Custom) {
                return Err(invalid(
                    "methods",
                    "custom knockoff s cannot be used in experiments",
                ));
            }
        }
        for &kind in &self.designs {
            let spec = crate::design::DesignSpec::new(kind, self.p, self.n, 0);
            if self.needs_knockoffs() {
                spec.validate_for_knockoffs()?;
            } else {
                spec.validate()?;
            }
        }
        Ok(())
    }

    /// Parse a JSON config; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
