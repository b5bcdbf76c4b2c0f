//! Replicated calibrate/select/evaluate runs.
//!
//! Replication `r` shuffles the queries with `ChaCha8(seed)` on stream `2r`
//! and draws the split-calibrator seed from stream `2r + 1`, so results do not
//! depend on scheduling.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::crc::{tcrc_feasible_set, tcrc_split_calibrate, SplitConfig};
use crate::error::{Error, Result};
use crate::harness::config::{CalibratorConfig, ExperimentConfig};
use crate::harness::synth::AnalyticRisk;
use crate::ltt::{compute_pvalue_families, ltt_feasible_set};
use crate::par;
use crate::retrieval::{build_loss_tables, QueryRecord};
use crate::selection::{evaluate, select_pair, EvalReport};
use crate::sum::CompensatedSum;
use crate::table::{FeasibleSet, LossTable1, LossTable2, RiskLevels};

pub const SCHEMA_LINE: &str = "# twostage-risk results v1";
pub const CSV_COLUMNS: [&str; 13] = [
    "replication",
    "method",
    "alpha1",
    "alpha2",
    "risk1",
    "risk2",
    "set_size",
    "recall_ge2",
    "recall_eq1",
    "precision",
    "lambda_hat",
    "gamma_hat",
    "feasible_size",
];

/// Runs one calibrator on calibration tables.
///
/// `split_seed` seeds the split calibrator; `analytic_lambda0` backs the
/// `"analytic"` λ₀ setting.
pub fn calibrate(
    calibrator: &CalibratorConfig,
    table1: &LossTable1,
    table2: &LossTable2,
    levels: RiskLevels,
    split_seed: u64,
    analytic_lambda0: Option<f64>,
) -> Result<FeasibleSet> {
    calibrator.validate()?;
    match calibrator {
        CalibratorConfig::Ltt { .. } => {
            let families = compute_pvalue_families(table1, table2, levels)?;
            ltt_feasible_set(&families, &calibrator.ltt_config().unwrap())
        }
        CalibratorConfig::Tcrc => tcrc_feasible_set(table1, table2, levels),
        CalibratorConfig::TcrcS { split_fraction, lambda0 } => {
            let split = SplitConfig { split_fraction: *split_fraction, seed: split_seed };
            let policy = lambda0.policy(analytic_lambda0)?;
            Ok(tcrc_split_calibrate(table1, table2, levels, &split, policy)?.feasible)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibrated {
    pub report: EvalReport,
    pub lambda_hat: f64,
    pub gamma_hat: f64,
    pub feasible_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub method: String,
    /// The error message when calibration was infeasible.
    pub outcome: std::result::Result<Calibrated, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub alpha1: f64,
    pub alpha2: f64,
    pub methods: Vec<String>,
    pub replications: usize,
    /// Ordered by replication, then calibrator.
    pub rows: Vec<ReplicationRow>,
}

fn is_infeasible(e: &Error) -> bool {
    matches!(e, Error::Infeasible(_) | Error::EmptyFeasibleSet)
}

fn split_queries(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_cal = (fraction * n as f64).round() as usize;
    if n_cal == 0 || n_cal >= n {
        return Err(Error::Config(format!(
            "calibration fraction {fraction} leaves an empty part of {n} queries"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (mut cal, mut test) = (idx[..n_cal].to_vec(), idx[n_cal..].to_vec());
    cal.sort_unstable();
    test.sort_unstable();
    Ok((cal, test))
}

fn replication_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn replicate(
    r: usize,
    queries: &[QueryRecord],
    config: &ExperimentConfig,
    analytic_lambda0: Option<f64>,
) -> Result<Vec<ReplicationRow>> {
    let levels = config.levels()?;
    let r0 = config.r0()?;
    let (gl, gg) = config.grids()?;
    let (cal_idx, test_idx) =
        split_queries(queries.len(), config.calibration_fraction, &mut replication_rng(config.seed, 2 * r as u64))?;
    let split_seed = replication_rng(config.seed, 2 * r as u64 + 1).next_u64();
    let cal: Vec<QueryRecord> = cal_idx.iter().map(|&i| queries[i].clone()).collect();
    let test: Vec<QueryRecord> = test_idx.iter().map(|&i| queries[i].clone()).collect();
    let (t1, t2) = build_loss_tables(&cal, &gl, &gg, r0)?;

    let mut rows = Vec::with_capacity(config.calibrators.len());
    for c in &config.calibrators {
        let outcome = calibrate(c, &t1, &t2, levels, split_seed, analytic_lambda0)
            .and_then(|set| {
                let s = select_pair(&set, &cal, &gl, &gg, &config.objective)?;
                Ok(Calibrated {
                    report: evaluate(&test, s.lambda.value, s.gamma.value, r0),
                    lambda_hat: s.lambda.value,
                    gamma_hat: s.gamma.value,
                    feasible_size: set.len(),
                })
            });
        let outcome = match outcome {
            Ok(c) => Ok(c),
            Err(e) if is_infeasible(&e) => Err(e.to_string()),
            Err(e) => return Err(e),
        };
        rows.push(ReplicationRow { replication: r, method: c.label(), outcome });
    }
    Ok(rows)
}

/// Runs every replication. Infeasible calibrations become rows, other errors
/// abort.
pub fn run_experiment(
    queries: &[QueryRecord],
    config: &ExperimentConfig,
    model: Option<&AnalyticRisk>,
) -> Result<ExperimentResult> {
    config.validate()?;
    if queries.len() < 2 {
        return Err(Error::Config("need at least two queries to split".into()));
    }
    for q in queries {
        q.validate()?;
    }
    config.r0()?.check_against(queries)?;
    let (gl, _) = config.grids()?;
    let analytic_lambda0 = model.map(|m| m.guaranteed_lambda0(config.alpha2, &gl));
    let per_rep = par::map_range(config.replications, |r| replicate(r, queries, config, analytic_lambda0));
    let mut rows = Vec::with_capacity(config.replications * config.calibrators.len());
    for rep in per_rep {
        rows.extend(rep?);
    }
    Ok(ExperimentResult {
        alpha1: config.alpha1,
        alpha2: config.alpha2,
        methods: config.calibrators.iter().map(CalibratorConfig::label).collect(),
        replications: config.replications,
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

#[derive(Default)]
struct ColumnMean {
    sum: CompensatedSum,
    count: usize,
}

impl ColumnMean {
    fn push(&mut self, v: Option<f64>) {
        if let Some(v) = v {
            self.sum.add(v);
            self.count += 1;
        }
    }

    fn get(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum.value() / self.count as f64)
    }
}

fn metric_values(c: &Calibrated) -> [Option<f64>; 9] {
    let r = &c.report;
    [
        Some(r.risk1),
        Some(r.risk2),
        Some(r.set_size),
        r.recall_ge2,
        r.recall_eq1,
        r.precision,
        Some(c.lambda_hat),
        Some(c.gamma_hat),
        Some(c.feasible_size as f64),
    ]
}

impl ExperimentResult {
    /// Rows of one method, in replication order.
    pub fn method_rows<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a ReplicationRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Column means over the feasible replications of `method`, in
    /// [`CSV_COLUMNS`] order from `risk1`, and the feasible count.
    pub fn means(&self, method: &str) -> ([Option<f64>; 9], usize) {
        let mut cols: [ColumnMean; 9] = Default::default();
        let mut feasible = 0;
        for row in self.method_rows(method) {
            if let Ok(c) = &row.outcome {
                feasible += 1;
                for (col, v) in cols.iter_mut().zip(metric_values(c)) {
                    col.push(v);
                }
            }
        }
        (cols.map(|c| c.get()), feasible)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let prefix = |rep: &str, method: &str| format!("{rep},{method},{},{}", self.alpha1, self.alpha2);
        writeln!(out, "{SCHEMA_LINE}").unwrap();
        writeln!(out, "{}", CSV_COLUMNS.join(",")).unwrap();
        for row in &self.rows {
            let values = match &row.outcome {
                Ok(c) => metric_values(c).map(fmt_opt),
                Err(_) => std::array::from_fn(|_| "NA".to_string()),
            };
            writeln!(out, "{},{}", prefix(&row.replication.to_string(), &row.method), values.join(",")).unwrap();
        }
        for m in &self.methods {
            let (means, feasible) = self.means(m);
            writeln!(out, "{},{}", prefix("mean", m), means.map(fmt_opt).join(",")).unwrap();
            writeln!(out, "# {m}: mean over {feasible} of {} feasible replications", self.replications).unwrap();
        }
        out
    }
}
