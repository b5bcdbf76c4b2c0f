//! Two-stage conformal risk control.
//!
//! Every threshold below is the smallest grid value whose summed loss is at
//! most `(n+1)α - 1`. The comparison is an exact `<=` on compensated sums.
//!
//! Two calibrators are provided:
//! * the full-sample calibrator, whose first-stage control is finite-sample
//!   and second-stage control is asymptotic;
//! * the data-splitting calibrator, which picks λ on one half of the data and
//!   γ on the other, and needs a known `λ₀` with `L(λ₀, 1) <= α₂` per sample.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridPoint, ParameterGrid};
use crate::table::{check_conformal_level, FeasibleSet, LossTable1, LossTable2, Provenance, RiskLevels};

fn conformal_bound(n: usize, alpha: f64) -> f64 {
    (n as f64 + 1.0) * alpha - 1.0
}

/// First index whose sum is within the bound, if any.
fn first_within(sums: impl IntoIterator<Item = f64>, bound: f64) -> Option<usize> {
    sums.into_iter().position(|s| s <= bound)
}

fn require_monotone1(t: &LossTable1) -> Result<()> {
    if t.is_monotone() {
        Ok(())
    } else {
        Err(Error::NonMonotone("first-stage"))
    }
}

fn require_monotone2(t: &LossTable2) -> Result<()> {
    if t.is_monotone() {
        Ok(())
    } else {
        Err(Error::NonMonotone("second-stage"))
    }
}

/// Smallest λ with `Σ_i L1_i(λ) <= (n+1)α₁ - 1`.
pub fn lambda_hat0_stage1(table1: &LossTable1, alpha1: f64) -> Result<GridPoint> {
    require_monotone1(table1)?;
    check_conformal_level(alpha1, table1.n())?;
    let bound = conformal_bound(table1.n(), alpha1);
    first_within(table1.column_sums(), bound)
        .map(|a| table1.grid().point(a))
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no λ satisfies the first-stage bound; losses at λ = 1 sum to {} > {bound}",
                table1.column_sum(table1.m() - 1)
            ))
        })
}

/// Smallest λ with `Σ_i L2_i(λ, 1) <= (n+1)α₂ - 1`.
pub fn lambda_hat0_stage2(table2: &LossTable2, alpha2: f64) -> Result<GridPoint> {
    require_monotone2(table2)?;
    check_conformal_level(alpha2, table2.n())?;
    let bound = conformal_bound(table2.n(), alpha2);
    let top = table2.m_gamma() - 1;
    first_within((0..table2.m_lambda()).map(|a| table2.fiber_sum(a, top)), bound)
        .map(|a| table2.grid_lambda().point(a))
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "no λ satisfies the second-stage bound at γ = 1; losses at (1, 1) sum to {} > {bound}",
                table2.fiber_sum(table2.m_lambda() - 1, top)
            ))
        })
}

fn gamma_from_sums(sums_row: &[f64], bound: f64, grid_gamma: &ParameterGrid) -> GridPoint {
    first_within(sums_row.iter().copied(), bound)
        .map(|b| grid_gamma.point(b))
        .unwrap_or_else(|| grid_gamma.last())
}

/// Smallest γ with `Σ_i L2_i(λ_a, γ) <= (n+1)α₂ - 1`; `1.0` when none qualifies.
pub fn gamma_hat0(table2: &LossTable2, lambda_index: usize, alpha2: f64) -> Result<GridPoint> {
    require_monotone2(table2)?;
    let bound = conformal_bound(table2.n(), alpha2);
    let row: Vec<f64> = (0..table2.m_gamma()).map(|b| table2.fiber_sum(lambda_index, b)).collect();
    Ok(gamma_from_sums(&row, bound, table2.grid_gamma()))
}

/// Full-sample thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrcThresholds {
    pub lambda0_stage1: GridPoint,
    pub lambda0_stage2: GridPoint,
    /// `γ̂₀(λ_a)` for every λ grid index.
    pub gamma0_by_lambda: Vec<GridPoint>,
}

impl CrcThresholds {
    pub fn compute(table1: &LossTable1, table2: &LossTable2, levels: RiskLevels) -> Result<Self> {
        check_pair(table1, table2)?;
        levels.check_conformal(table1.n())?;
        let lambda0_stage1 = lambda_hat0_stage1(table1, levels.alpha1)?;
        let lambda0_stage2 = lambda_hat0_stage2(table2, levels.alpha2)?;
        let bound = conformal_bound(table2.n(), levels.alpha2);
        let sums = table2.fiber_sums();
        let gamma0_by_lambda = sums
            .chunks(table2.m_gamma())
            .map(|row| gamma_from_sums(row, bound, table2.grid_gamma()))
            .collect();
        Ok(Self { lambda0_stage1, lambda0_stage2, gamma0_by_lambda })
    }

    /// `λ̂₀⁽¹⁾ ∨ λ̂₀⁽²⁾`.
    pub fn lambda0(&self) -> GridPoint {
        if self.lambda0_stage1.index >= self.lambda0_stage2.index {
            self.lambda0_stage1
        } else {
            self.lambda0_stage2
        }
    }
}

fn check_pair(table1: &LossTable1, table2: &LossTable2) -> Result<()> {
    if table1.n() != table2.n() {
        return Err(Error::InvalidTable(format!(
            "sample counts differ: {} vs {}",
            table1.n(),
            table2.n()
        )));
    }
    if table1.grid() != table2.grid_lambda() {
        return Err(Error::InvalidTable("λ grids of the two tables differ".into()));
    }
    require_monotone1(table1)?;
    require_monotone2(table2)
}

/// `⌈t·λ₀ + (1 - t)⌉` on the grid, for a base threshold `λ₀`.
fn interpolate(t: f64, base: f64, grid: &ParameterGrid) -> Result<GridPoint> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t = {t} not in [0, 1]")));
    }
    Ok(grid.ceil(t * base + (1.0 - t)))
}

/// `λ̂(t) = ⌈t(λ̂₀⁽¹⁾ ∨ λ̂₀⁽²⁾) + (1 - t)⌉`.
pub fn lambda_hat_t(t: f64, thresholds: &CrcThresholds, grid_lambda: &ParameterGrid) -> Result<GridPoint> {
    interpolate(t, thresholds.lambda0().value, grid_lambda)
}

/// All `(λ, γ)` with `λ >= ⌈λ̂₀⁽¹⁾ ∨ λ̂₀⁽²⁾⌉` and `γ >= γ̂₀(λ)`. The sweep of
/// `λ̂(t)` over `t ∈ [0, 1]` hits exactly this grid suffix.
pub fn tcrc_feasible_set(
    table1: &LossTable1,
    table2: &LossTable2,
    levels: RiskLevels,
) -> Result<FeasibleSet> {
    let th = CrcThresholds::compute(table1, table2, levels)?;
    let mut set = FeasibleSet::empty(Provenance::Tcrc, table2.m_lambda(), table2.m_gamma());
    for a in th.lambda0().index..table2.m_lambda() {
        for b in th.gamma0_by_lambda[a].index..table2.m_gamma() {
            set.insert(a, b);
        }
    }
    Ok(set)
}

/// `(λ̂(t), γ̂₀(λ̂(t)))`.
pub fn tcrc_point(
    table1: &LossTable1,
    table2: &LossTable2,
    levels: RiskLevels,
    t: f64,
) -> Result<(GridPoint, GridPoint)> {
    let th = CrcThresholds::compute(table1, table2, levels)?;
    let lambda = lambda_hat_t(t, &th, table1.grid())?;
    Ok((lambda, th.gamma0_by_lambda[lambda.index]))
}

/// Smallest λ with `max_i L2_i(λ, 1) <= α₂`; `1.0` when none qualifies.
///
/// A per-sample bound rather than a mean, so the estimate targets the
/// per-sample feasibility condition the split calibrator relies on.
pub fn estimate_lambda0(table2: &LossTable2, alpha2: f64) -> Result<GridPoint> {
    require_monotone2(table2)?;
    let top = table2.m_gamma() - 1;
    let found = (0..table2.m_lambda()).find(|&a| {
        (0..table2.n()).all(|i| table2.get(i, a, top) <= alpha2)
    });
    Ok(found
        .map(|a| table2.grid_lambda().point(a))
        .unwrap_or_else(|| table2.grid_lambda().last()))
}

/// How the split calibrator obtains `λ₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda0Policy {
    Known(f64),
    /// Estimate from the first split half with [`estimate_lambda0`].
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Fraction of calibration samples assigned to the first half.
    pub split_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { split_fraction: 0.5, seed: 0 }
    }
}

/// Seeded uniform split into `(I₁, I₂)`, each sorted ascending.
pub fn split_indices(n: usize, split: &SplitConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(split.split_fraction > 0.0 && split.split_fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction {} not in (0, 1)",
            split.split_fraction
        )));
    }
    let n1 = (split.split_fraction * n as f64).round() as usize;
    if n1 == 0 || n1 >= n {
        return Err(Error::Config(format!(
            "split of {n} samples at fraction {} leaves an empty half",
            split.split_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(split.seed));
    let (mut i1, mut i2) = (idx[..n1].to_vec(), idx[n1..].to_vec());
    i1.sort_unstable();
    i2.sort_unstable();
    Ok((i1, i2))
}

/// Result of split calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCalibration {
    pub lambda0: f64,
    pub lambda0_estimated: bool,
    /// `λ̃₀⁽¹⁾` from the first half.
    pub lambda_tilde0: GridPoint,
    /// `⌈λ̃₀⁽¹⁾ ∨ λ₀⌉`, the smallest feasible λ.
    pub lambda_start: GridPoint,
    /// `γ̄`, computed on the second half at `λ = λ_start`.
    pub gamma_bar: GridPoint,
    pub feasible: FeasibleSet,
    n2: usize,
    alpha2: f64,
    i2_sums: Vec<f64>,
    grid_lambda: ParameterGrid,
    grid_gamma: ParameterGrid,
}

impl SplitCalibration {
    /// `λ̃(t) = ⌈t(λ̃₀⁽¹⁾ ∨ λ₀) + (1 - t)⌉`.
    pub fn lambda_at(&self, t: f64) -> Result<GridPoint> {
        interpolate(t, self.lambda_tilde0.value.max(self.lambda0), &self.grid_lambda)
    }

    /// `γ̃₀(λ)` on the second half.
    pub fn gamma_at(&self, lambda_index: usize) -> GridPoint {
        let mg = self.grid_gamma.len();
        let row = &self.i2_sums[lambda_index * mg..(lambda_index + 1) * mg];
        gamma_from_sums(row, conformal_bound(self.n2, self.alpha2), &self.grid_gamma)
    }

    /// `(λ̃(t), γ̃₀(λ̃(t)))`.
    pub fn point(&self, t: f64) -> Result<(GridPoint, GridPoint)> {
        let lambda = self.lambda_at(t)?;
        Ok((lambda, self.gamma_at(lambda.index)))
    }
}

/// Split calibration on pre-split tables: `*_i1` restricted to `I₁`,
/// `table2_i2` restricted to `I₂`.
pub fn tcrc_split_calibrate_parts(
    table1_i1: &LossTable1,
    table2_i1: &LossTable2,
    table2_i2: &LossTable2,
    levels: RiskLevels,
    lambda0: Lambda0Policy,
) -> Result<SplitCalibration> {
    check_pair(table1_i1, table2_i1)?;
    require_monotone2(table2_i2)?;
    let n1 = table1_i1.n();
    if n1 == 0 || table2_i2.n() == 0 {
        return Err(Error::Config("both split halves must be nonempty".into()));
    }
    levels.check_conformal(n1)?;
    let (lambda0_value, estimated) = match lambda0 {
        Lambda0Policy::Known(v) => {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("λ₀ = {v} not in [0, 1]")));
            }
            (v, false)
        }
        Lambda0Policy::Estimate => (estimate_lambda0(table2_i1, levels.alpha2)?.value, true),
    };
    let lambda_tilde0 = lambda_hat0_stage1(table1_i1, levels.alpha1)?;
    let grid_lambda = table1_i1.grid().clone();
    let grid_gamma = table2_i2.grid_gamma().clone();
    let lambda_start = grid_lambda.ceil(lambda_tilde0.value.max(lambda0_value));

    let mut cal = SplitCalibration {
        lambda0: lambda0_value,
        lambda0_estimated: estimated,
        lambda_tilde0,
        lambda_start,
        gamma_bar: grid_gamma.last(),
        feasible: FeasibleSet::empty(Provenance::TcrcSplit, grid_lambda.len(), grid_gamma.len()),
        n2: table2_i2.n(),
        alpha2: levels.alpha2,
        i2_sums: table2_i2.fiber_sums(),
        grid_lambda,
        grid_gamma,
    };
    cal.gamma_bar = cal.gamma_at(lambda_start.index);
    for a in lambda_start.index..cal.grid_lambda.len() {
        for b in cal.gamma_bar.index..cal.grid_gamma.len() {
            cal.feasible.insert(a, b);
        }
    }
    Ok(cal)
}

/// Splits the calibration rows and runs [`tcrc_split_calibrate_parts`].
pub fn tcrc_split_calibrate(
    table1: &LossTable1,
    table2: &LossTable2,
    levels: RiskLevels,
    split: &SplitConfig,
    lambda0: Lambda0Policy,
) -> Result<SplitCalibration> {
    check_pair(table1, table2)?;
    let (i1, i2) = split_indices(table1.n(), split)?;
    tcrc_split_calibrate_parts(
        &table1.select_rows(&i1),
        &table2.select_rows(&i1),
        &table2.select_rows(&i2),
        levels,
        lambda0,
    )
}

/// `{(λ, γ) : λ >= ⌈λ̃₀⁽¹⁾ ∨ λ₀⌉, γ >= γ̄}`.
pub fn tcrc_split_feasible_set(
    table1: &LossTable1,
    table2: &LossTable2,
    levels: RiskLevels,
    split: &SplitConfig,
    lambda0: Lambda0Policy,
) -> Result<FeasibleSet> {
    Ok(tcrc_split_calibrate(table1, table2, levels, split, lambda0)?.feasible)
}
