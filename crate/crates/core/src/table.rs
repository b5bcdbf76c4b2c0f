//! Loss tables, empirical risks, risk levels and feasible sets.
//!
//! Losses are stored only at grid points. A table records whether each
//! sample's loss is non-increasing along every grid axis; calibrators refuse
//! tables without that flag.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ParameterGrid;
use crate::ltt::LttProcedure;
use crate::sum::CompensatedSum;

fn check_entries(entries: &[f64]) -> Result<()> {
    if let Some((i, v)) = entries
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::InvalidTable(format!("entry {i} = {v} outside [0, 1]")));
    }
    Ok(())
}

/// First-stage losses `L_i(λ_a)`, an `n × m` row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable1 {
    n: usize,
    grid: ParameterGrid,
    entries: Vec<f64>,
    monotone: bool,
}

impl LossTable1 {
    pub fn new(grid: ParameterGrid, n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * grid.len() {
            return Err(Error::InvalidTable(format!(
                "expected {}x{} entries, got {}",
                n,
                grid.len(),
                entries.len()
            )));
        }
        check_entries(&entries)?;
        let m = grid.len();
        let monotone = entries
            .chunks(m.max(1))
            .all(|row| row.windows(2).all(|w| w[0] >= w[1]));
        Ok(Self { n, grid, entries, monotone })
    }

    pub fn from_rows(grid: ParameterGrid, rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        Self::new(grid, n, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.grid.len()
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn get(&self, i: usize, a: usize) -> f64 {
        self.entries[i * self.m() + a]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.entries[i * m..(i + 1) * m]
    }

    /// `Σ_i L_i(λ_a)`, accumulated with compensation in row order.
    pub fn column_sum(&self, a: usize) -> f64 {
        let mut acc = CompensatedSum::default();
        for i in 0..self.n {
            acc.add(self.get(i, a));
        }
        acc.value()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.m()).map(|a| self.column_sum(a)).collect()
    }

    pub fn empirical_risk(&self, a: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.column_sum(a) / self.n as f64
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let entries = rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self {
            n: rows.len(),
            grid: self.grid.clone(),
            entries,
            monotone: self.monotone,
        }
    }

    pub(crate) fn into_parts(self) -> (ParameterGrid, usize, Vec<f64>) {
        (self.grid, self.n, self.entries)
    }
}

/// Second-stage losses `L_i(λ_a, γ_b)`, an `n × m_λ × m_γ` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable2 {
    n: usize,
    grid_lambda: ParameterGrid,
    grid_gamma: ParameterGrid,
    entries: Vec<f64>,
    monotone: bool,
}

pub(crate) fn slice_is_monotone(slice: &[f64], ml: usize, mg: usize) -> bool {
    for a in 0..ml {
        for b in 0..mg {
            let v = slice[a * mg + b];
            if a + 1 < ml && slice[(a + 1) * mg + b] > v {
                return false;
            }
            if b + 1 < mg && slice[a * mg + b + 1] > v {
                return false;
            }
        }
    }
    true
}

impl LossTable2 {
    pub fn new(
        grid_lambda: ParameterGrid,
        grid_gamma: ParameterGrid,
        n: usize,
        entries: Vec<f64>,
    ) -> Result<Self> {
        let cell = grid_lambda.len() * grid_gamma.len();
        if entries.len() != n * cell {
            return Err(Error::InvalidTable(format!(
                "expected {}x{}x{} entries, got {}",
                n,
                grid_lambda.len(),
                grid_gamma.len(),
                entries.len()
            )));
        }
        check_entries(&entries)?;
        let (ml, mg) = (grid_lambda.len(), grid_gamma.len());
        let monotone = entries.chunks(cell.max(1)).all(|s| slice_is_monotone(s, ml, mg));
        Ok(Self { n, grid_lambda, grid_gamma, entries, monotone })
    }

    /// Builds from per-sample slices, each `m_λ × m_γ` row-major.
    pub fn from_slices(
        grid_lambda: ParameterGrid,
        grid_gamma: ParameterGrid,
        slices: &[Vec<f64>],
    ) -> Result<Self> {
        Self::new(grid_lambda, grid_gamma, slices.len(), slices.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m_lambda(&self) -> usize {
        self.grid_lambda.len()
    }

    pub fn m_gamma(&self) -> usize {
        self.grid_gamma.len()
    }

    pub fn grid_lambda(&self) -> &ParameterGrid {
        &self.grid_lambda
    }

    pub fn grid_gamma(&self) -> &ParameterGrid {
        &self.grid_gamma
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    fn cell(&self) -> usize {
        self.m_lambda() * self.m_gamma()
    }

    pub fn get(&self, i: usize, a: usize, b: usize) -> f64 {
        self.entries[i * self.cell() + a * self.m_gamma() + b]
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let c = self.cell();
        &self.entries[i * c..(i + 1) * c]
    }

    /// `Σ_i L_i(λ_a, γ_b)`.
    pub fn fiber_sum(&self, a: usize, b: usize) -> f64 {
        let mut acc = CompensatedSum::default();
        for i in 0..self.n {
            acc.add(self.get(i, a, b));
        }
        acc.value()
    }

    /// All fiber sums, `m_λ × m_γ` row-major; bitwise equal to [`Self::fiber_sum`].
    pub fn fiber_sums(&self) -> Vec<f64> {
        let mut acc = vec![CompensatedSum::default(); self.cell()];
        for i in 0..self.n {
            for (s, &v) in acc.iter_mut().zip(self.slice(i)) {
                s.add(v);
            }
        }
        acc.iter().map(CompensatedSum::value).collect()
    }

    pub fn empirical_risk(&self, a: usize, b: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.fiber_sum(a, b) / self.n as f64
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let entries = rows.iter().flat_map(|&i| self.slice(i).iter().copied()).collect();
        Self {
            n: rows.len(),
            grid_lambda: self.grid_lambda.clone(),
            grid_gamma: self.grid_gamma.clone(),
            entries,
            monotone: self.monotone,
        }
    }

    pub(crate) fn into_parts(self) -> (ParameterGrid, ParameterGrid, usize, Vec<f64>) {
        (self.grid_lambda, self.grid_gamma, self.n, self.entries)
    }
}

/// Target risk levels for the two stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskLevels {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl RiskLevels {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        for a in [alpha1, alpha2] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Domain(format!("risk level {a} outside [0, 1]")));
            }
        }
        Ok(Self { alpha1, alpha2 })
    }

    /// Both levels must exceed `1/(n+1)` for conformal calibration on `n` samples.
    pub fn check_conformal(&self, n: usize) -> Result<()> {
        for alpha in [self.alpha1, self.alpha2] {
            check_conformal_level(alpha, n)?;
        }
        Ok(())
    }
}

pub(crate) fn check_conformal_level(alpha: f64, n: usize) -> Result<()> {
    if !(alpha > 1.0 / (n as f64 + 1.0) && alpha <= 1.0) {
        return Err(Error::LevelOutOfRange { alpha, n });
    }
    Ok(())
}

/// Which calibrator certified a feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Provenance {
    Ltt(LttProcedure),
    Tcrc,
    TcrcSplit,
}

/// Certified `(λ, γ)` grid-index pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    pairs: BTreeSet<(usize, usize)>,
    provenance: Provenance,
    m_lambda: usize,
    m_gamma: usize,
}

impl FeasibleSet {
    pub fn empty(provenance: Provenance, m_lambda: usize, m_gamma: usize) -> Self {
        Self { pairs: BTreeSet::new(), provenance, m_lambda, m_gamma }
    }

    pub fn from_pairs<I>(provenance: Provenance, m_lambda: usize, m_gamma: usize, pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = Self::empty(provenance, m_lambda, m_gamma);
        for (a, b) in pairs {
            if a >= m_lambda || b >= m_gamma {
                return Err(Error::Domain(format!("pair ({a}, {b}) out of grid bounds")));
            }
            set.pairs.insert((a, b));
        }
        Ok(set)
    }

    pub(crate) fn insert(&mut self, a: usize, b: usize) {
        debug_assert!(a < self.m_lambda && b < self.m_gamma);
        self.pairs.insert((a, b));
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.pairs.contains(&(a, b))
    }

    /// Pairs in ascending `(λ, γ)` index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<(usize, usize)> {
        self.iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid3() -> ParameterGrid {
        ParameterGrid::new(vec![0.0, 0.5, 1.0]).unwrap()
    }

    #[test]
    fn empirical_risk_examples() {
        let g = ParameterGrid::new(vec![0.5, 1.0]).unwrap();
        let t = LossTable1::from_rows(
            g.clone(),
            &[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(t.empirical_risk(0), 0.5);
        assert_eq!(t.empirical_risk(1), 0.0);

        let t2 = LossTable2::from_slices(
            g.clone(),
            g.clone(),
            &[vec![1.0, 0.2, 1.0, 0.0], vec![1.0, 0.4, 0.5, 0.0]],
        )
        .unwrap();
        assert_eq!(t2.empirical_risk(0, 0), 1.0);
        assert!((t2.empirical_risk(0, 1) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn detects_monotonicity() {
        let t = LossTable1::from_rows(grid3(), &[vec![0.2, 0.5, 0.1]]).unwrap();
        assert!(!t.is_monotone());
        let t = LossTable1::from_rows(grid3(), &[vec![0.5, 0.5, 0.1]]).unwrap();
        assert!(t.is_monotone());
    }

    #[test]
    fn rejects_out_of_range_entries() {
        assert!(LossTable1::from_rows(grid3(), &[vec![0.2, 1.5, 0.1]]).is_err());
        assert!(LossTable1::new(grid3(), 2, vec![0.0; 5]).is_err());
    }

    #[test]
    fn conformal_level_bounds() {
        let lv = RiskLevels::new(0.1, 0.1).unwrap();
        assert!(lv.check_conformal(9).is_err());
        assert!(lv.check_conformal(10).is_ok());
        assert!(RiskLevels::new(1.1, 0.1).is_err());
    }

    #[test]
    fn feasible_set_bounds_and_dedup() {
        let s = FeasibleSet::from_pairs(Provenance::Tcrc, 2, 2, [(0, 1), (0, 1), (1, 1)]).unwrap();
        assert_eq!(s.len(), 2);
        assert!(FeasibleSet::from_pairs(Provenance::Tcrc, 2, 2, [(2, 0)]).is_err());
    }

    fn monotone_rows(n: usize, m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(0.0f64..=1.0, m), n).prop_map(|rows| {
            rows.into_iter()
                .map(|mut r| {
                    r.sort_by(|a, b| b.partial_cmp(a).unwrap());
                    r
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn sums_match_naive_resummation(rows in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 3), 1..40)) {
            let t = LossTable1::from_rows(grid3(), &rows).unwrap();
            for a in 0..3 {
                let naive: f64 = rows.iter().map(|r| r[a]).sum::<f64>() / rows.len() as f64;
                prop_assert!((t.empirical_risk(a) - naive).abs() < 1e-12);
            }
        }

        #[test]
        fn monotone_tables_have_monotone_risk(rows in monotone_rows(12, 3)) {
            let t = LossTable1::from_rows(grid3(), &rows).unwrap();
            prop_assert!(t.is_monotone());
            for a in 1..3 {
                prop_assert!(t.empirical_risk(a) <= t.empirical_risk(a - 1));
            }
        }

        #[test]
        fn fiber_sums_agree(slices in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 9), 1..20)) {
            let t = LossTable2::from_slices(grid3(), grid3(), &slices).unwrap();
            let all = t.fiber_sums();
            for a in 0..3 {
                for b in 0..3 {
                    prop_assert_eq!(all[a * 3 + b], t.fiber_sum(a, b));
                    let naive: f64 = slices.iter().map(|s| s[a * 3 + b]).sum::<f64>() / slices.len() as f64;
                    prop_assert!((t.empirical_risk(a, b) - naive).abs() < 1e-12);
                }
            }
        }
    }
}
