//! Monte Carlo checks of the calibrators' guarantees on a synthetic model with
//! closed-form risks.
//!
//! Trial `k` draws its data from `ChaCha8(seed)` on stream `k`, and every
//! calibrator sees the same trials.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::crc::{lambda_hat_t, tcrc_split_calibrate, CrcThresholds, SplitConfig};
use crate::error::{Error, Result};
use crate::harness::config::{CalibratorConfig, GridSpec, Lambda0Keyword, Lambda0Spec};
use crate::harness::synth::{AnalyticRisk, SynthConfig};
use crate::ltt::{compute_pvalue_families, ltt_feasible_set};
use crate::par;
use crate::retrieval::{build_loss_tables, ranking_loss, retrieval_loss, QueryRecord, R0Config};
use crate::sum::CompensatedSum;
use crate::table::RiskLevels;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub calibrators: Vec<CalibratorConfig>,
    pub trials: usize,
    /// Calibration queries per trial.
    pub n: usize,
    /// Fresh test queries per trial for the expected-loss checks.
    pub holdout: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub grid_lambda: GridSpec,
    pub grid_gamma: GridSpec,
    pub r0: u32,
    /// Must use a template composition.
    pub synth: SynthConfig,
    /// Interpolation points of the conformal calibrators.
    pub t_values: Vec<f64>,
    /// Allowance for the full-sample calibrator's second stage, whose control
    /// is only asymptotic.
    pub asymptotic_slack: f64,
    pub seed: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            calibrators: vec![
                CalibratorConfig::ltt(0.1, Default::default(), None),
                CalibratorConfig::Tcrc,
                CalibratorConfig::TcrcS {
                    split_fraction: 0.5,
                    lambda0: Lambda0Spec::Keyword(Lambda0Keyword::Analytic),
                },
            ],
            trials: 500,
            n: 200,
            holdout: 1,
            alpha1: 0.1,
            alpha2: 0.1,
            grid_lambda: GridSpec::range(0.0, 1.0, 0.05),
            grid_gamma: GridSpec::range(0.0, 1.0, 0.05),
            r0: 2,
            synth: SynthConfig::template_default(),
            t_values: vec![0.0, 0.5, 1.0],
            asymptotic_slack: 0.015,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuaranteeReport {
    pub calibrator: String,
    pub trials: usize,
    /// Trials where calibration failed outright; excluded from the checks.
    pub infeasible_trials: usize,
    pub checks: Vec<Check>,
}

impl GuaranteeReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub reports: Vec<GuaranteeReport>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(GuaranteeReport::pass)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            out.push_str(&format!(
                "{} ({} trials, {} infeasible)\n",
                r.calibrator, r.trials, r.infeasible_trials
            ));
            for c in &r.checks {
                out.push_str(&format!(
                    "  {} {}: {:.5} (se {:.5}) <= {:.5}\n",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.estimate,
                    c.std_error,
                    c.bound
                ));
            }
        }
        out.push_str(if self.pass() { "overall: PASS\n" } else { "overall: FAIL\n" });
        out
    }
}

/// Outcome of one calibrator on one trial.
enum Trial {
    Violation(bool),
    /// Held-out stage-1 and stage-2 losses, one pair per `t`.
    Losses(Vec<(f64, f64)>),
    Infeasible,
}

fn mean_loss(queries: &[QueryRecord], f: impl Fn(&QueryRecord) -> f64) -> f64 {
    let mut s = CompensatedSum::default();
    for q in queries {
        s.add(f(q));
    }
    s.value() / queries.len() as f64
}

struct Setup {
    levels: RiskLevels,
    r0: R0Config,
    gl: crate::grid::ParameterGrid,
    gg: crate::grid::ParameterGrid,
    risk1: Vec<f64>,
    risk2: Vec<f64>,
    lambda0: f64,
}

fn run_trial(k: usize, cfg: &ValidateConfig, s: &Setup) -> Result<Vec<Trial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(k as u64);
    let cal = cfg.synth.sample_queries(cfg.n, &mut rng);
    let test = cfg.synth.sample_queries(cfg.holdout, &mut rng);
    let split_seed = rng.next_u64();
    let (t1, t2) = build_loss_tables(&cal, &s.gl, &s.gg, s.r0)?;
    let losses_at = |pairs: Vec<(f64, f64)>| {
        Trial::Losses(
            pairs
                .into_iter()
                .map(|(l, g)| {
                    (
                        mean_loss(&test, |q| retrieval_loss(q, l)),
                        mean_loss(&test, |q| ranking_loss(q, l, g, s.r0)),
                    )
                })
                .collect(),
        )
    };
    let mg = s.gg.len();
    cfg.calibrators
        .iter()
        .map(|c| -> Result<Trial> {
            let outcome = match c {
                CalibratorConfig::Ltt { .. } => {
                    let fam = compute_pvalue_families(&t1, &t2, s.levels)?;
                    ltt_feasible_set(&fam, &c.ltt_config().unwrap()).map(|set| {
                        Trial::Violation(set.iter().any(|(a, b)| {
                            s.risk1[a] > s.levels.alpha1 || s.risk2[a * mg + b] > s.levels.alpha2
                        }))
                    })
                }
                CalibratorConfig::Tcrc => CrcThresholds::compute(&t1, &t2, s.levels).and_then(|th| {
                    let pairs = cfg
                        .t_values
                        .iter()
                        .map(|&t| {
                            let l = lambda_hat_t(t, &th, &s.gl)?;
                            Ok((l.value, th.gamma0_by_lambda[l.index].value))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(losses_at(pairs))
                }),
                CalibratorConfig::TcrcS { split_fraction, lambda0 } => {
                    let split = SplitConfig { split_fraction: *split_fraction, seed: split_seed };
                    let policy = lambda0.policy(Some(s.lambda0))?;
                    tcrc_split_calibrate(&t1, &t2, s.levels, &split, policy).and_then(|cal| {
                        let pairs = cfg
                            .t_values
                            .iter()
                            .map(|&t| cal.point(t).map(|(l, g)| (l.value, g.value)))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(losses_at(pairs))
                    })
                }
            };
            match outcome {
                Ok(t) => Ok(t),
                Err(Error::Infeasible(_)) | Err(Error::EmptyFeasibleSet) => Ok(Trial::Infeasible),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mut s = CompensatedSum::default();
    values.iter().for_each(|&v| s.add(v));
    let mean = s.value() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let mut ss = CompensatedSum::default();
    values.iter().for_each(|&v| ss.add((v - mean) * (v - mean)));
    (mean, (ss.value() / (n - 1) as f64 / n as f64).sqrt())
}

fn summarize(c: &CalibratorConfig, idx: usize, trials: &[Vec<Trial>], cfg: &ValidateConfig) -> GuaranteeReport {
    let outcomes: Vec<&Trial> = trials.iter().map(|t| &t[idx]).collect();
    let infeasible = outcomes.iter().filter(|t| matches!(t, Trial::Infeasible)).count();
    let mut checks = Vec::new();
    match c {
        CalibratorConfig::Ltt { delta, .. } => {
            let t = outcomes.len() as f64;
            let violations = outcomes.iter().filter(|o| matches!(o, Trial::Violation(true))).count();
            let se = (delta * (1.0 - delta) / t).sqrt();
            let estimate = violations as f64 / t;
            let bound = delta + 3.0 * se;
            checks.push(Check { name: "fwer".into(), estimate, std_error: se, bound, pass: estimate <= bound });
        }
        CalibratorConfig::Tcrc | CalibratorConfig::TcrcS { .. } => {
            let asymptotic = matches!(c, CalibratorConfig::Tcrc);
            for (j, t) in cfg.t_values.iter().enumerate() {
                let pick = |stage: usize| -> Vec<f64> {
                    outcomes
                        .iter()
                        .filter_map(|o| match o {
                            Trial::Losses(v) => Some(if stage == 1 { v[j].0 } else { v[j].1 }),
                            _ => None,
                        })
                        .collect()
                };
                let (m1, se1) = mean_se(&pick(1));
                let b1 = cfg.alpha1 + 3.0 * se1;
                checks.push(Check { name: format!("stage1 t={t}"), estimate: m1, std_error: se1, bound: b1, pass: m1 <= b1 });
                let (m2, se2) = mean_se(&pick(2));
                let b2 = if asymptotic { cfg.alpha2 + cfg.asymptotic_slack } else { cfg.alpha2 + 3.0 * se2 };
                checks.push(Check { name: format!("stage2 t={t}"), estimate: m2, std_error: se2, bound: b2, pass: m2 <= b2 });
            }
        }
    }
    GuaranteeReport { calibrator: c.label(), trials: outcomes.len(), infeasible_trials: infeasible, checks }
}

pub fn mc_validate(cfg: &ValidateConfig) -> Result<ValidationReport> {
    if cfg.trials == 0 || cfg.n == 0 || cfg.holdout == 0 {
        return Err(Error::Config("trials, n and holdout must be positive".into()));
    }
    if cfg.calibrators.is_empty() {
        return Err(Error::Config("no calibrator given".into()));
    }
    for c in &cfg.calibrators {
        c.validate()?;
    }
    if cfg.t_values.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Config("t values must lie in [0, 1]".into()));
    }
    let r0 = R0Config::new(cfg.r0)?;
    let model = AnalyticRisk::new(&cfg.synth, r0)?;
    let (gl, gg) = (cfg.grid_lambda.build()?, cfg.grid_gamma.build()?);
    let (risk1, risk2) = model.surface(&gl, &gg);
    let setup = Setup {
        levels: RiskLevels::new(cfg.alpha1, cfg.alpha2)?,
        r0,
        lambda0: model.guaranteed_lambda0(cfg.alpha2, &gl),
        gl,
        gg,
        risk1,
        risk2,
    };
    let trials = par::map_range(cfg.trials, |k| run_trial(k, cfg, &setup))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ValidationReport {
        reports: cfg.calibrators.iter().enumerate().map(|(i, c)| summarize(c, i, &trials, cfg)).collect(),
    })
}
