//! Learn-then-test calibration: Hoeffding–Bentkus p-values for every grid
//! hypothesis, then one of four FWER-controlling testing schemes that
//! certify a set of `(λ, γ)` pairs.
//!
//! Hypotheses are tested from the top of each grid downwards (index
//! `m - 1` first), since monotone losses make large thresholds the easiest
//! to certify.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::pvalue::hb_pvalue_from_sum;
use crate::table::{FeasibleSet, LossTable1, LossTable2, Provenance, RiskLevels};

/// Stage-1 and stage-2 p-value families over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueFamilies {
    m_lambda: usize,
    m_gamma: usize,
    stage1: Vec<f64>,
    stage2: Vec<f64>,
}

impl PValueFamilies {
    /// `stage2` is `m_λ × m_γ` row-major. Values must lie in `[0, 1]`.
    pub fn new(stage1: Vec<f64>, stage2: Vec<Vec<f64>>) -> Result<Self> {
        let m_lambda = stage1.len();
        if stage2.len() != m_lambda {
            return Err(Error::Domain("stage-2 rows must match stage-1 length".into()));
        }
        let m_gamma = stage2.first().map_or(0, Vec::len);
        if stage2.iter().any(|r| r.len() != m_gamma) {
            return Err(Error::Domain("ragged stage-2 p-value matrix".into()));
        }
        let stage2 = stage2.concat();
        if stage1.iter().chain(&stage2).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain("p-value outside [0, 1]".into()));
        }
        Ok(Self { m_lambda, m_gamma, stage1, stage2 })
    }

    pub fn m_lambda(&self) -> usize {
        self.m_lambda
    }

    pub fn m_gamma(&self) -> usize {
        self.m_gamma
    }

    pub fn stage1(&self, i: usize) -> f64 {
        self.stage1[i]
    }

    pub fn stage2(&self, i: usize, j: usize) -> f64 {
        self.stage2[i * self.m_gamma + j]
    }
}

/// HB p-values for `R1(λ_i) > α1` and `R2(λ_i, γ_j) > α2` on every grid cell.
pub fn compute_pvalue_families(
    table1: &LossTable1,
    table2: &LossTable2,
    levels: RiskLevels,
) -> Result<PValueFamilies> {
    let n = table1.n();
    if table2.n() != n {
        return Err(Error::InvalidTable(format!(
            "sample counts differ: {} vs {}",
            n,
            table2.n()
        )));
    }
    if table1.grid() != table2.grid_lambda() {
        return Err(Error::InvalidTable("λ grids of the two tables differ".into()));
    }
    let stage1 = table1
        .column_sums()
        .into_iter()
        .map(|s| hb_pvalue_from_sum(s, n, levels.alpha1).map(|p| p.value()))
        .collect::<Result<Vec<_>>>()?;
    let sums = table2.fiber_sums();
    let stage2 = par::map_slice(&sums, |&s| hb_pvalue_from_sum(s, n, levels.alpha2).map(|p| p.value()))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(PValueFamilies {
        m_lambda: table1.m(),
        m_gamma: table2.m_gamma(),
        stage1,
        stage2,
    })
}

/// The four testing schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LttProcedure {
    /// Bonferroni over λ, then fixed-sequence over γ at `δ/m_λ`.
    #[default]
    #[serde(alias = "main")]
    BonferroniFixedSequence,
    /// Fixed-sequence over λ with geometric budgets `w^{m-i}δ`, then
    /// fixed-sequence over γ at `(1-w)w^{m-i}δ`.
    #[serde(alias = "appendix1")]
    GeometricFixedSequence,
    /// Bonferroni over λ at `δ/m_λ`, then Bonferroni over γ at `δ/(m_λ m_γ)`.
    #[serde(alias = "appendix2")]
    BonferroniBonferroni,
    /// Geometric fixed-sequence over λ, then Bonferroni over γ at `(1-w)w^{m-i}δ/m_γ`.
    #[serde(alias = "appendix3")]
    GeometricBonferroni,
}

impl LttProcedure {
    pub const ALL: [LttProcedure; 4] = [
        LttProcedure::BonferroniFixedSequence,
        LttProcedure::GeometricFixedSequence,
        LttProcedure::BonferroniBonferroni,
        LttProcedure::GeometricBonferroni,
    ];

    pub fn needs_weight(self) -> bool {
        matches!(self, Self::GeometricFixedSequence | Self::GeometricBonferroni)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::BonferroniFixedSequence => "bonferroni-fixed-sequence",
            Self::GeometricFixedSequence => "geometric-fixed-sequence",
            Self::BonferroniBonferroni => "bonferroni-bonferroni",
            Self::GeometricBonferroni => "geometric-bonferroni",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LttConfig {
    pub delta: f64,
    pub procedure: LttProcedure,
    /// Geometric weight, required by the geometric procedures.
    #[serde(default)]
    pub w: Option<f64>,
}

impl LttConfig {
    pub fn new(delta: f64, procedure: LttProcedure, w: Option<f64>) -> Result<Self> {
        let cfg = Self { delta, procedure, w };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta = {} not in (0, 1)", self.delta)));
        }
        if self.procedure.needs_weight() {
            match self.w {
                Some(w) if w > 0.0 && w < 1.0 => {}
                Some(w) => return Err(Error::Config(format!("w = {w} not in (0, 1)"))),
                None => {
                    return Err(Error::Config(format!(
                        "procedure {} requires w",
                        self.procedure.name()
                    )))
                }
            }
        }
        Ok(())
    }
}

/// A rejection threshold, stored in log space when it is a geometric budget
/// so that `w^{m-1}δ` never underflows for large grids.
#[derive(Debug, Clone, Copy)]
enum Level {
    Linear(f64),
    Log(f64),
}

impl Level {
    fn rejects(self, p: f64) -> bool {
        match self {
            Level::Linear(l) => p <= l,
            Level::Log(ln_l) => p.ln() <= ln_l,
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Level::Linear(l) => l,
            Level::Log(ln_l) => ln_l.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scan {
    Bonferroni,
    FixedSequence,
}

fn geometric_ln_level(delta: f64, w: f64, m: usize, i: usize) -> f64 {
    (m - 1 - i) as f64 * w.ln() + delta.ln()
}

fn scan(levels: &[Level], pvals: impl Fn(usize) -> f64, mode: Scan) -> Vec<usize> {
    let m = levels.len();
    match mode {
        Scan::Bonferroni => (0..m).filter(|&i| levels[i].rejects(pvals(i))).collect(),
        Scan::FixedSequence => {
            let mut start = m;
            while start > 0 && levels[start - 1].rejects(pvals(start - 1)) {
                start -= 1;
            }
            (start..m).collect()
        }
    }
}

fn run_procedure(
    families: &PValueFamilies,
    delta: f64,
    w: f64,
    procedure: LttProcedure,
) -> FeasibleSet {
    let (ml, mg) = (families.m_lambda, families.m_gamma);
    let bonf1 = Level::Linear(delta / ml as f64);
    let (stage1_levels, stage1_scan): (Vec<Level>, Scan) = match procedure {
        LttProcedure::BonferroniFixedSequence | LttProcedure::BonferroniBonferroni => {
            (vec![bonf1; ml], Scan::Bonferroni)
        }
        LttProcedure::GeometricFixedSequence | LttProcedure::GeometricBonferroni => (
            (0..ml).map(|i| Level::Log(geometric_ln_level(delta, w, ml, i))).collect(),
            Scan::FixedSequence,
        ),
    };
    let stage2_level = |i: usize| -> (Level, Scan) {
        match procedure {
            LttProcedure::BonferroniFixedSequence => (bonf1, Scan::FixedSequence),
            LttProcedure::BonferroniBonferroni => {
                (Level::Linear(delta / (ml as f64 * mg as f64)), Scan::Bonferroni)
            }
            LttProcedure::GeometricFixedSequence => (
                Level::Log((-w).ln_1p() + geometric_ln_level(delta, w, ml, i)),
                Scan::FixedSequence,
            ),
            LttProcedure::GeometricBonferroni => (
                Level::Log((-w).ln_1p() + geometric_ln_level(delta, w, ml, i) - (mg as f64).ln()),
                Scan::Bonferroni,
            ),
        }
    };

    let mut set = FeasibleSet::empty(Provenance::Ltt(procedure), ml, mg);
    for i in scan(&stage1_levels, |i| families.stage1(i), stage1_scan) {
        let (level, mode) = stage2_level(i);
        for j in scan(&vec![level; mg], |j| families.stage2(i, j), mode) {
            set.insert(i, j);
        }
    }
    set
}

/// Bonferroni over λ, fixed-sequence over γ, both at `δ/m_λ`.
pub fn ltt_bonferroni_fixed_sequence(families: &PValueFamilies, delta: f64) -> FeasibleSet {
    run_procedure(families, delta, 0.5, LttProcedure::BonferroniFixedSequence)
}

pub fn ltt_geometric_fixed_sequence(families: &PValueFamilies, delta: f64, w: f64) -> FeasibleSet {
    run_procedure(families, delta, w, LttProcedure::GeometricFixedSequence)
}

pub fn ltt_bonferroni_bonferroni(families: &PValueFamilies, delta: f64) -> FeasibleSet {
    run_procedure(families, delta, 0.5, LttProcedure::BonferroniBonferroni)
}

pub fn ltt_geometric_bonferroni(families: &PValueFamilies, delta: f64, w: f64) -> FeasibleSet {
    run_procedure(families, delta, w, LttProcedure::GeometricBonferroni)
}

/// Runs the configured procedure.
pub fn ltt_feasible_set(families: &PValueFamilies, config: &LttConfig) -> Result<FeasibleSet> {
    config.validate()?;
    let w = config.w.unwrap_or(0.5);
    Ok(run_procedure(families, config.delta, w, config.procedure))
}

/// Per-hypothesis rejection levels of a procedure, for inspection:
/// `(stage-1 level per i, stage-2 level per i)`.
pub fn procedure_levels(config: &LttConfig, m_lambda: usize, m_gamma: usize) -> (Vec<f64>, Vec<f64>) {
    let (d, w) = (config.delta, config.w.unwrap_or(0.5));
    let geo = |i: usize| geometric_ln_level(d, w, m_lambda, i);
    (0..m_lambda)
        .map(|i| match config.procedure {
            LttProcedure::BonferroniFixedSequence => (d / m_lambda as f64, d / m_lambda as f64),
            LttProcedure::BonferroniBonferroni => {
                (d / m_lambda as f64, d / (m_lambda * m_gamma) as f64)
            }
            LttProcedure::GeometricFixedSequence => (
                Level::Log(geo(i)).value(),
                Level::Log((-w).ln_1p() + geo(i)).value(),
            ),
            LttProcedure::GeometricBonferroni => (
                Level::Log(geo(i)).value(),
                Level::Log((-w).ln_1p() + geo(i) - (m_gamma as f64).ln()).value(),
            ),
        })
        .unzip()
}
