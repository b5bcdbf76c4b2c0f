//! Choosing one pair from a feasible set, and held-out evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridPoint, ParameterGrid};
use crate::retrieval::{c2_size, inclusion_index, passes, ranking_loss, retrieval_loss, QueryRecord, R0Config};
use crate::sum::CompensatedSum;
use crate::table::FeasibleSet;

/// Weights of the linear set-size objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectiveConfig {
    /// Weight on the mean first-stage set size.
    pub weight_c1: f64,
    /// Weight on the mean second-stage set size.
    pub weight_c2: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { weight_c1: 0.0, weight_c2: 1.0 }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.weight_c1) || !ok(self.weight_c2) {
            return Err(Error::Config("objective weights must be finite and nonnegative".into()));
        }
        if self.weight_c1 == 0.0 && self.weight_c2 == 0.0 {
            return Err(Error::Config("objective weights are both zero".into()));
        }
        Ok(())
    }
}

/// Exact total set sizes over a query set, for every grid pair.
#[derive(Debug, Clone)]
pub struct SetSizeTotals {
    n_queries: usize,
    m_gamma: usize,
    c1: Vec<u64>,
    /// Row-major `m_λ × m_γ`.
    c2: Vec<u64>,
}

impl SetSizeTotals {
    pub fn compute(queries: &[QueryRecord], grid_lambda: &ParameterGrid, grid_gamma: &ParameterGrid) -> Self {
        let (ml, mg) = (grid_lambda.len(), grid_gamma.len());
        // Histogram of first-inclusion indices, then 2-D prefix sums.
        let mut hist = vec![0u64; ml * mg];
        for d in queries.iter().flat_map(|q| &q.docs) {
            let a = inclusion_index(d.score_retrieval, grid_lambda);
            let b = inclusion_index(d.score_rank, grid_gamma);
            if a < ml && b < mg {
                hist[a * mg + b] += 1;
            }
        }
        let mut c1 = vec![0u64; ml];
        for d in queries.iter().flat_map(|q| &q.docs) {
            let a = inclusion_index(d.score_retrieval, grid_lambda);
            if a < ml {
                c1[a] += 1;
            }
        }
        for a in 1..ml {
            c1[a] += c1[a - 1];
        }
        let mut c2 = hist;
        for a in 0..ml {
            for b in 0..mg {
                let mut v = c2[a * mg + b];
                if a > 0 {
                    v += c2[(a - 1) * mg + b];
                }
                if b > 0 {
                    v += c2[a * mg + b - 1];
                }
                if a > 0 && b > 0 {
                    v -= c2[(a - 1) * mg + b - 1];
                }
                c2[a * mg + b] = v;
            }
        }
        Self { n_queries: queries.len(), m_gamma: mg, c1, c2 }
    }

    pub fn total_c1(&self, a: usize) -> u64 {
        self.c1[a]
    }

    pub fn total_c2(&self, a: usize, b: usize) -> u64 {
        self.c2[a * self.m_gamma + b]
    }

    pub fn mean_c1(&self, a: usize) -> f64 {
        self.total_c1(a) as f64 / self.n_queries.max(1) as f64
    }

    pub fn mean_c2(&self, a: usize, b: usize) -> f64 {
        self.total_c2(a, b) as f64 / self.n_queries.max(1) as f64
    }

    pub fn objective(&self, a: usize, b: usize, w: &ObjectiveConfig) -> f64 {
        w.weight_c2 * self.mean_c2(a, b) + w.weight_c1 * self.mean_c1(a)
    }
}

/// The chosen pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Selection {
    pub lambda: GridPoint,
    pub gamma: GridPoint,
    pub objective: f64,
    pub mean_c1: f64,
    pub mean_c2: f64,
}

/// Minimizes the objective over `feasible` on `queries`; ties go to the
/// smallest λ, then the smallest γ.
pub fn select_pair(
    feasible: &FeasibleSet,
    queries: &[QueryRecord],
    grid_lambda: &ParameterGrid,
    grid_gamma: &ParameterGrid,
    objective: &ObjectiveConfig,
) -> Result<Selection> {
    objective.validate()?;
    if feasible.is_empty() {
        return Err(Error::EmptyFeasibleSet);
    }
    let totals = SetSizeTotals::compute(queries, grid_lambda, grid_gamma);
    let mut best: Option<(usize, usize, f64)> = None;
    for (a, b) in feasible.iter() {
        let v = totals.objective(a, b, objective);
        if best.is_none_or(|(_, _, bv)| v < bv) {
            best = Some((a, b, v));
        }
    }
    let (a, b, v) = best.expect("feasible set is nonempty");
    Ok(Selection {
        lambda: grid_lambda.point(a),
        gamma: grid_gamma.point(b),
        objective: v,
        mean_c1: totals.mean_c1(a),
        mean_c2: totals.mean_c2(a, b),
    })
}

/// Held-out metrics at one pair. Rates whose denominator set is empty for a
/// query skip that query; `None` when every query was skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub n_queries: usize,
    pub risk1: f64,
    pub risk2: f64,
    pub set_size: f64,
    pub recall_ge2: Option<f64>,
    pub recall_eq1: Option<f64>,
    pub precision: Option<f64>,
    pub skipped_recall_ge2: usize,
    pub skipped_recall_eq1: usize,
    pub skipped_precision: usize,
}

#[derive(Default)]
struct MeanAcc {
    sum: CompensatedSum,
    count: usize,
    skipped: usize,
}

impl MeanAcc {
    fn push_ratio(&mut self, num: usize, den: usize) {
        if den == 0 {
            self.skipped += 1;
        } else {
            self.sum.add(num as f64 / den as f64);
            self.count += 1;
        }
    }

    fn push(&mut self, v: f64) {
        self.sum.add(v);
        self.count += 1;
    }

    fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum.value() / self.count as f64)
    }
}

pub fn evaluate(queries: &[QueryRecord], lambda: f64, gamma: f64, r0: R0Config) -> EvalReport {
    let mut risk1 = MeanAcc::default();
    let mut risk2 = MeanAcc::default();
    let mut size = MeanAcc::default();
    let mut rec2 = MeanAcc::default();
    let mut rec1 = MeanAcc::default();
    let mut prec = MeanAcc::default();
    for q in queries {
        risk1.push(retrieval_loss(q, lambda));
        risk2.push(ranking_loss(q, lambda, gamma, r0));
        size.push(c2_size(q, lambda, gamma) as f64);
        let (mut in_c2, mut rel_in, mut ge2, mut ge2_in, mut eq1, mut eq1_in) = (0, 0, 0, 0, 0, 0);
        for d in &q.docs {
            let inc = passes(d.score_retrieval, lambda) && passes(d.score_rank, gamma);
            in_c2 += inc as usize;
            rel_in += (inc && d.relevance >= 1) as usize;
            if d.relevance >= 2 {
                ge2 += 1;
                ge2_in += inc as usize;
            }
            if d.relevance == 1 {
                eq1 += 1;
                eq1_in += inc as usize;
            }
        }
        rec2.push_ratio(ge2_in, ge2);
        rec1.push_ratio(eq1_in, eq1);
        prec.push_ratio(rel_in, in_c2);
    }
    EvalReport {
        n_queries: queries.len(),
        risk1: risk1.mean().unwrap_or(0.0),
        risk2: risk2.mean().unwrap_or(0.0),
        set_size: size.mean().unwrap_or(0.0),
        recall_ge2: rec2.mean(),
        recall_eq1: rec1.mean(),
        precision: prec.mean(),
        skipped_recall_ge2: rec2.skipped,
        skipped_recall_eq1: rec1.skipped,
        skipped_precision: prec.skipped,
    }
}
