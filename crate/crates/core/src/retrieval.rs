//! Ranked-retrieval records, the two prediction sets and their losses.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ParameterGrid;
use crate::par;
use crate::sum::compensated_sum;
use crate::table::{LossTable1, LossTable2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocRecord {
    pub doc_id: String,
    pub relevance: u32,
    pub score_retrieval: f64,
    pub score_rank: f64,
}

impl DocRecord {
    pub fn new(doc_id: impl Into<String>, relevance: u32, score_retrieval: f64, score_rank: f64) -> Self {
        Self { doc_id: doc_id.into(), relevance, score_retrieval, score_rank }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("score_retrieval", self.score_retrieval), ("score_rank", self.score_rank)] {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::Domain(format!(
                    "document {}: {name} = {s} not in [0, 1]",
                    self.doc_id
                )));
            }
        }
        Ok(())
    }
}

/// A query with its candidate documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub docs: Vec<DocRecord>,
}

impl QueryRecord {
    pub fn new(query_id: impl Into<String>, docs: Vec<DocRecord>) -> Result<Self> {
        let q = Self { query_id: query_id.into(), docs };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.docs.is_empty() {
            return Err(Error::Domain(format!("query {} has no documents", self.query_id)));
        }
        let mut seen = HashSet::with_capacity(self.docs.len());
        for d in &self.docs {
            d.validate()
                .map_err(|e| Error::Domain(format!("query {}: {e}", self.query_id)))?;
            if !seen.insert(d.doc_id.as_str()) {
                return Err(Error::Domain(format!(
                    "query {}: duplicate doc_id {}",
                    self.query_id, d.doc_id
                )));
            }
        }
        Ok(())
    }

    /// Relevant documents (`relevance > 0`).
    pub fn relevant(&self) -> impl Iterator<Item = &DocRecord> {
        self.docs.iter().filter(|d| d.relevance > 0)
    }

    /// Documents with `relevance >= r0`, by descending relevance; equal grades
    /// keep input order.
    pub fn ideal_order(&self, r0: R0Config) -> Vec<&DocRecord> {
        let mut z: Vec<&DocRecord> = self.docs.iter().filter(|d| d.relevance >= r0.r0).collect();
        z.sort_by_key(|d| std::cmp::Reverse(d.relevance));
        z
    }

    pub fn max_relevance(&self) -> u32 {
        self.docs.iter().map(|d| d.relevance).max().unwrap_or(0)
    }
}

/// Relevance cutoff for the ranking stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct R0Config {
    pub r0: u32,
}

impl R0Config {
    pub fn new(r0: u32) -> Result<Self> {
        if r0 == 0 {
            return Err(Error::Config("r0 must be at least 1".into()));
        }
        Ok(Self { r0 })
    }

    /// Rejects a cutoff above every grade present in `queries`.
    pub fn check_against(&self, queries: &[QueryRecord]) -> Result<()> {
        let top = queries.iter().map(QueryRecord::max_relevance).max().unwrap_or(0);
        if !queries.is_empty() && self.r0 > top {
            return Err(Error::Config(format!(
                "r0 = {} exceeds the largest relevance grade {top}",
                self.r0
            )));
        }
        Ok(())
    }
}

impl Default for R0Config {
    fn default() -> Self {
        Self { r0: 2 }
    }
}

pub(crate) fn passes(score: f64, threshold: f64) -> bool {
    score >= 1.0 - threshold
}

fn in_c1(d: &DocRecord, lambda: f64) -> bool {
    passes(d.score_retrieval, lambda)
}

fn in_c2(d: &DocRecord, lambda: f64, gamma: f64) -> bool {
    passes(d.score_retrieval, lambda) && passes(d.score_rank, gamma)
}

/// Ids of documents with `score_retrieval >= 1 - λ`, in input order.
pub fn build_c1(query: &QueryRecord, lambda: f64) -> Vec<&str> {
    query.docs.iter().filter(|d| in_c1(d, lambda)).map(|d| d.doc_id.as_str()).collect()
}

/// Ids of documents in the first-stage set with `score_rank >= 1 - γ`.
pub fn build_c2(query: &QueryRecord, lambda: f64, gamma: f64) -> Vec<&str> {
    query
        .docs
        .iter()
        .filter(|d| in_c2(d, lambda, gamma))
        .map(|d| d.doc_id.as_str())
        .collect()
}

pub fn c1_size(query: &QueryRecord, lambda: f64) -> usize {
    query.docs.iter().filter(|d| in_c1(d, lambda)).count()
}

pub fn c2_size(query: &QueryRecord, lambda: f64, gamma: f64) -> usize {
    query.docs.iter().filter(|d| in_c2(d, lambda, gamma)).count()
}

fn miscoverage(total: usize, covered: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        (total - covered) as f64 / total as f64
    }
}

/// Fraction of relevant documents missed by the first-stage set; 0 without
/// relevant documents.
pub fn retrieval_loss(query: &QueryRecord, lambda: f64) -> f64 {
    let (total, covered) = query
        .relevant()
        .fold((0, 0), |(t, c), d| (t + 1, c + in_c1(d, lambda) as usize));
    miscoverage(total, covered)
}

/// `1 - Σ_j flag_j / ln(j+1) / Σ_j 1 / ln(j+1)` for positions `j = 1..`.
fn ndcg_loss(flags: impl ExactSizeIterator<Item = bool> + Clone) -> f64 {
    if flags.len() == 0 {
        return 0.0;
    }
    let weight = |j: usize| 1.0 / ((j + 2) as f64).ln();
    let ideal = compensated_sum((0..flags.len()).map(weight));
    let gain = compensated_sum(flags.enumerate().map(|(j, f)| if f { weight(j) } else { 0.0 }));
    (1.0 - gain / ideal).clamp(0.0, 1.0)
}

/// One minus the modified nDCG of the second-stage set against the
/// `r0`-relevant documents in ideal order; 0 when there are none.
pub fn ranking_loss(query: &QueryRecord, lambda: f64, gamma: f64, r0: R0Config) -> f64 {
    let flags: Vec<bool> = query.ideal_order(r0).iter().map(|d| in_c2(d, lambda, gamma)).collect();
    ndcg_loss(flags.into_iter())
}

/// First grid index at which `score >= 1 - g` holds; `len` if never.
pub(crate) fn inclusion_index(score: f64, grid: &ParameterGrid) -> usize {
    grid.values().partition_point(|&g| !passes(score, g))
}

fn query_rows(
    q: &QueryRecord,
    grid_lambda: &ParameterGrid,
    grid_gamma: &ParameterGrid,
    r0: R0Config,
) -> (Vec<f64>, Vec<f64>) {
    let (ml, mg) = (grid_lambda.len(), grid_gamma.len());
    let rel_idx: Vec<usize> =
        q.relevant().map(|d| inclusion_index(d.score_retrieval, grid_lambda)).collect();
    let row1 = (0..ml)
        .map(|a| miscoverage(rel_idx.len(), rel_idx.iter().filter(|&&i| i <= a).count()))
        .collect();

    let z: Vec<(usize, usize)> = q
        .ideal_order(r0)
        .iter()
        .map(|d| {
            (
                inclusion_index(d.score_retrieval, grid_lambda),
                inclusion_index(d.score_rank, grid_gamma),
            )
        })
        .collect();
    let mut slice = Vec::with_capacity(ml * mg);
    for a in 0..ml {
        for b in 0..mg {
            slice.push(ndcg_loss(z.iter().map(|&(ia, ib)| ia <= a && ib <= b)));
        }
    }
    (row1, slice)
}

/// Loss tables over the grids, one row per query in input order.
pub fn build_loss_tables(
    queries: &[QueryRecord],
    grid_lambda: &ParameterGrid,
    grid_gamma: &ParameterGrid,
    r0: R0Config,
) -> Result<(LossTable1, LossTable2)> {
    for q in queries {
        q.validate()?;
    }
    let rows = par::map_slice(queries, |q| query_rows(q, grid_lambda, grid_gamma, r0));
    let n = queries.len();
    let mut e1 = Vec::with_capacity(n * grid_lambda.len());
    let mut e2 = Vec::with_capacity(n * grid_lambda.len() * grid_gamma.len());
    for (r1, s2) in rows {
        e1.extend(r1);
        e2.extend(s2);
    }
    Ok((
        LossTable1::new(grid_lambda.clone(), n, e1)?,
        LossTable2::new(grid_lambda.clone(), grid_gamma.clone(), n, e2)?,
    ))
}

/// Dataset-level counts of degenerate queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TableDiagnostics {
    pub n_queries: usize,
    /// Queries without relevant documents.
    pub empty_relevant: usize,
    /// Queries without `r0`-relevant documents.
    pub empty_ideal: usize,
    /// Queries whose retrieval loss at `λ = 0` is below 1.
    pub retrieval_loss_below_one_at_zero: usize,
}

impl TableDiagnostics {
    pub fn compute(queries: &[QueryRecord], r0: R0Config) -> Self {
        Self {
            n_queries: queries.len(),
            empty_relevant: queries.iter().filter(|q| q.relevant().next().is_none()).count(),
            empty_ideal: queries.iter().filter(|q| q.ideal_order(r0).is_empty()).count(),
            retrieval_loss_below_one_at_zero: queries
                .iter()
                .filter(|q| q.relevant().next().is_some() && retrieval_loss(q, 0.0) < 1.0)
                .count(),
        }
    }

    /// More than 1% of queries retrieve something relevant at `λ = 0`.
    pub fn warns(&self) -> bool {
        self.retrieval_loss_below_one_at_zero as f64 > 0.01 * self.n_queries as f64
    }
}

/// Replaces each row by its suffix running maximum.
pub fn monotonize1(table: LossTable1) -> LossTable1 {
    let (grid, n, mut entries) = table.into_parts();
    let m = grid.len();
    for row in entries.chunks_mut(m) {
        for a in (0..m.saturating_sub(1)).rev() {
            row[a] = row[a].max(row[a + 1]);
        }
    }
    LossTable1::new(grid, n, entries).expect("suffix maxima stay in range")
}

/// Replaces each slice by its two-dimensional suffix maximum.
pub fn monotonize2(table: LossTable2) -> LossTable2 {
    let (gl, gg, n, mut entries) = table.into_parts();
    let (ml, mg) = (gl.len(), gg.len());
    for s in entries.chunks_mut(ml * mg) {
        for a in (0..ml).rev() {
            for b in (0..mg).rev() {
                let mut v = s[a * mg + b];
                if a + 1 < ml {
                    v = v.max(s[(a + 1) * mg + b]);
                }
                if b + 1 < mg {
                    v = v.max(s[a * mg + b + 1]);
                }
                s[a * mg + b] = v;
            }
        }
    }
    LossTable2::new(gl, gg, n, entries).expect("suffix maxima stay in range")
}
