//! Synthetic queries whose true risks are known in closed form.
//!
//! A document of grade `g` gets score `clip(loc[g] + width·(2U - 1), 0, 1)`
//! with `U ~ Uniform[0, 1)`, independently for the retrieval and the rank
//! score. For `s ∈ (0, 1]` the clip does not change `P(score >= s)`, which is
//! therefore `clamp((loc + width - s) / (2·width), 0, 1)`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ParameterGrid;
use crate::retrieval::{ranking_loss, DocRecord, QueryRecord, R0Config};

/// Per-grade score locations and a shared noise half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreModel {
    /// Non-decreasing in the grade.
    pub locations: Vec<f64>,
    pub width: f64,
}

impl ScoreModel {
    pub fn new(locations: Vec<f64>, width: f64) -> Result<Self> {
        let m = Self { locations, width };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.locations.is_empty() {
            return Err(Error::Config("score model has no grades".into()));
        }
        if self.locations.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::Config("score locations must lie in [0, 1]".into()));
        }
        if self.locations.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("score locations must be non-decreasing in the grade".into()));
        }
        if !(self.width.is_finite() && self.width >= 0.0) {
            return Err(Error::Config(format!("noise width {} must be nonnegative", self.width)));
        }
        Ok(())
    }

    pub fn grades(&self) -> usize {
        self.locations.len()
    }

    fn sample<R: Rng>(&self, grade: u32, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        (self.locations[grade as usize] + self.width * (2.0 * u - 1.0)).clamp(0.0, 1.0)
    }

    /// `P(score >= s)`.
    pub fn exceedance(&self, grade: u32, s: f64) -> f64 {
        let loc = self.locations[grade as usize];
        if s <= 0.0 {
            1.0
        } else if s > 1.0 {
            0.0
        } else if self.width == 0.0 {
            if loc >= s {
                1.0
            } else {
                0.0
            }
        } else {
            ((loc + self.width - s) / (2.0 * self.width)).clamp(0.0, 1.0)
        }
    }

    /// `P(score <= s)`.
    pub fn cdf(&self, grade: u32, s: f64) -> f64 {
        let loc = self.locations[grade as usize];
        if s >= 1.0 {
            1.0
        } else if s < 0.0 {
            0.0
        } else if self.width == 0.0 {
            if loc <= s {
                1.0
            } else {
                0.0
            }
        } else {
            ((s - loc + self.width) / (2.0 * self.width)).clamp(0.0, 1.0)
        }
    }

    /// Smallest score a document of this grade can receive.
    pub fn min_score(&self, grade: u32) -> f64 {
        (self.locations[grade as usize] - self.width).max(0.0)
    }
}

/// How many documents a query has and which grades they carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Composition {
    /// Uniform document count, i.i.d. grades.
    Random { docs_min: usize, docs_max: usize, grade_probs: Vec<f64> },
    /// Every query has exactly these grades, in this order.
    Template { grades: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_queries: usize,
    pub composition: Composition,
    pub retrieval: ScoreModel,
    pub rank: ScoreModel,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_queries: 1000,
            composition: Composition::Random {
                docs_min: 5,
                docs_max: 20,
                grade_probs: vec![0.5, 0.25, 0.15, 0.07, 0.03],
            },
            retrieval: ScoreModel { locations: vec![0.3, 0.5, 0.6, 0.7, 0.8], width: 0.3 },
            rank: ScoreModel { locations: vec![0.2, 0.45, 0.6, 0.75, 0.9], width: 0.25 },
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// The default score models with a fixed ten-document query.
    pub fn template_default() -> Self {
        Self {
            composition: Composition::Template { grades: vec![4, 3, 2, 2, 1, 1, 0, 0, 0, 0] },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.retrieval.validate()?;
        self.rank.validate()?;
        let grades = self.retrieval.grades();
        if self.rank.grades() != grades {
            return Err(Error::Config("retrieval and rank models cover different grades".into()));
        }
        match &self.composition {
            Composition::Random { docs_min, docs_max, grade_probs } => {
                if *docs_min == 0 || docs_min > docs_max {
                    return Err(Error::Config(format!("bad document range {docs_min}..={docs_max}")));
                }
                if grade_probs.len() != grades {
                    return Err(Error::Config(format!(
                        "{} grade probabilities for {grades} grades",
                        grade_probs.len()
                    )));
                }
                WeightedIndex::new(grade_probs)
                    .map_err(|e| Error::Config(format!("grade probabilities: {e}")))?;
            }
            Composition::Template { grades: t } => {
                if t.is_empty() {
                    return Err(Error::Config("template has no documents".into()));
                }
                if t.iter().any(|&g| g as usize >= grades) {
                    return Err(Error::Config("template grade outside the score models".into()));
                }
            }
        }
        Ok(())
    }

    /// `n` queries drawn from `rng`; assumes a validated config.
    pub fn sample_queries<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<QueryRecord> {
        let weights = match &self.composition {
            Composition::Random { grade_probs, .. } => Some(WeightedIndex::new(grade_probs).expect("validated")),
            Composition::Template { .. } => None,
        };
        (0..n)
            .map(|i| {
                let grades: Vec<u32> = match (&self.composition, &weights) {
                    (Composition::Random { docs_min, docs_max, .. }, Some(w)) => {
                        let k = rng.random_range(*docs_min..=*docs_max);
                        (0..k).map(|_| w.sample(rng) as u32).collect()
                    }
                    (Composition::Template { grades }, _) => grades.clone(),
                    _ => unreachable!(),
                };
                let docs = grades
                    .into_iter()
                    .enumerate()
                    .map(|(j, g)| {
                        let sr = self.retrieval.sample(g, rng);
                        let sk = self.rank.sample(g, rng);
                        DocRecord::new(format!("d{j}"), g, sr, sk)
                    })
                    .collect();
                QueryRecord { query_id: format!("q{i}"), docs }
            })
            .collect()
    }
}

/// `n_queries` queries from `ChaCha8(seed)`.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<QueryRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(config.sample_queries(config.n_queries, &mut rng))
}

/// Per-grade exceedance probabilities on a list of thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExceedanceReport {
    pub thresholds: Vec<f64>,
    /// `retrieval[g][k] = P(score_retrieval >= thresholds[k] | grade g)`.
    pub retrieval: Vec<Vec<f64>>,
    pub rank: Vec<Vec<f64>>,
}

pub fn exceedance_report(config: &SynthConfig, thresholds: &[f64]) -> ExceedanceReport {
    let table = |m: &ScoreModel| {
        (0..m.grades() as u32)
            .map(|g| thresholds.iter().map(|&s| m.exceedance(g, s)).collect())
            .collect()
    };
    ExceedanceReport {
        thresholds: thresholds.to_vec(),
        retrieval: table(&config.retrieval),
        rank: table(&config.rank),
    }
}

/// True risks of a template composition.
#[derive(Debug, Clone)]
pub struct AnalyticRisk {
    config: SynthConfig,
    grades: Vec<u32>,
    r0: R0Config,
}

impl AnalyticRisk {
    pub fn new(config: &SynthConfig, r0: R0Config) -> Result<Self> {
        config.validate()?;
        match &config.composition {
            Composition::Template { grades } => {
                Ok(Self { config: config.clone(), grades: grades.clone(), r0 })
            }
            Composition::Random { .. } => Err(Error::Config(
                "closed-form risks need a template composition".into(),
            )),
        }
    }

    /// `E[retrieval_loss(λ)]`.
    pub fn risk1(&self, lambda: f64) -> f64 {
        let rel: Vec<u32> = self.grades.iter().copied().filter(|&g| g > 0).collect();
        if rel.is_empty() {
            return 0.0;
        }
        let miss: f64 = rel.iter().map(|&g| 1.0 - self.config.retrieval.exceedance(g, 1.0 - lambda)).sum();
        miss / rel.len() as f64
    }

    fn ideal(&self) -> Vec<u32> {
        let mut z: Vec<u32> = self.grades.iter().copied().filter(|&g| g >= self.r0.r0).collect();
        z.sort_by(|a, b| b.cmp(a));
        z
    }

    /// `E[ranking_loss(λ, γ)]`.
    pub fn risk2(&self, lambda: f64, gamma: f64) -> f64 {
        let z = self.ideal();
        if z.is_empty() {
            return 0.0;
        }
        let (mut gain, mut ideal) = (0.0, 0.0);
        for (j, &g) in z.iter().enumerate() {
            let w = 1.0 / ((j + 2) as f64).ln();
            let p = self.config.retrieval.exceedance(g, 1.0 - lambda) * self.config.rank.exceedance(g, 1.0 - gamma);
            gain += w * p;
            ideal += w;
        }
        (1.0 - gain / ideal).clamp(0.0, 1.0)
    }

    /// Risks on every grid cell: `(R1[a], R2[a·m_γ + b])`.
    pub fn surface(&self, grid_lambda: &ParameterGrid, grid_gamma: &ParameterGrid) -> (Vec<f64>, Vec<f64>) {
        let r1 = grid_lambda.values().iter().map(|&l| self.risk1(l)).collect();
        let r2 = grid_lambda
            .values()
            .iter()
            .flat_map(|&l| grid_gamma.values().iter().map(move |&g| (l, g)))
            .map(|(l, g)| self.risk2(l, g))
            .collect();
        (r1, r2)
    }

    /// Smallest grid λ at which every possible query has ranking loss at
    /// `(λ, 1)` of at most `alpha2`; `1.0` if none does.
    pub fn guaranteed_lambda0(&self, alpha2: f64, grid_lambda: &ParameterGrid) -> f64 {
        let worst = QueryRecord {
            query_id: "worst".into(),
            docs: self
                .grades
                .iter()
                .enumerate()
                .map(|(j, &g)| DocRecord::new(format!("d{j}"), g, self.config.retrieval.min_score(g), 0.0))
                .collect(),
        };
        grid_lambda
            .values()
            .iter()
            .copied()
            .find(|&l| ranking_loss(&worst, l, 1.0, self.r0) <= alpha2)
            .unwrap_or(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_width_hits_locations() {
        let cfg = SynthConfig {
            n_queries: 20,
            retrieval: ScoreModel::new(vec![0.1, 0.2, 0.3, 0.4, 0.5], 0.0).unwrap(),
            rank: ScoreModel::new(vec![0.5, 0.6, 0.7, 0.8, 0.9], 0.0).unwrap(),
            ..SynthConfig::default()
        };
        for q in synth_generate(&cfg).unwrap() {
            for d in &q.docs {
                assert_eq!(d.score_retrieval, cfg.retrieval.locations[d.relevance as usize]);
                assert_eq!(d.score_rank, cfg.rank.locations[d.relevance as usize]);
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig { n_queries: 50, seed: 9, ..SynthConfig::default() };
        assert_eq!(synth_generate(&cfg).unwrap(), synth_generate(&cfg).unwrap());
        let other = SynthConfig { seed: 10, ..cfg.clone() };
        assert_ne!(synth_generate(&cfg).unwrap(), synth_generate(&other).unwrap());
    }

    #[test]
    fn validation() {
        let mut c = SynthConfig::default();
        c.retrieval.locations = vec![0.5, 0.4, 0.6, 0.7, 0.8];
        assert!(c.validate().is_err());
        let c = SynthConfig {
            composition: Composition::Template { grades: vec![7] },
            ..SynthConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(AnalyticRisk::new(&SynthConfig::default(), R0Config::default()).is_err());
    }

    #[test]
    fn exceedance_and_cdf_agree() {
        let m = ScoreModel::new(vec![0.1, 0.9], 0.3).unwrap();
        for g in 0..2 {
            for k in 1..100 {
                let s = k as f64 / 100.0;
                assert!((m.exceedance(g, s) + m.cdf(g, s) - 1.0).abs() < 1e-12);
            }
            assert_eq!(m.exceedance(g, 0.0), 1.0);
        }
    }

    #[test]
    fn risk_endpoints() {
        let a = AnalyticRisk::new(&SynthConfig::template_default(), R0Config::default()).unwrap();
        assert_eq!(a.risk1(1.0), 0.0);
        assert_eq!(a.risk2(1.0, 1.0), 0.0);
        // Only the grade-4 document can reach score 1, with probability 1/6.
        assert!((a.risk1(0.0) - (6.0 - 1.0 / 6.0) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn guaranteed_lambda0_holds_per_sample() {
        let cfg = SynthConfig::template_default();
        let r0 = R0Config::default();
        let a = AnalyticRisk::new(&cfg, r0).unwrap();
        let g = ParameterGrid::uniform(0.0, 1.0, 0.05).unwrap();
        let l0 = a.guaranteed_lambda0(0.1, &g);
        assert!(l0 < 1.0);
        let qs = cfg.sample_queries(2000, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(qs.iter().all(|q| ranking_loss(q, l0, 1.0, r0) <= 0.1));
        // The worst case sits on a score boundary of probability zero, so
        // look two grid steps down.
        let below = g.value(g.ceil_index(l0) - 2);
        assert!(qs.iter().any(|q| ranking_loss(q, below, 1.0, r0) > 0.1));
    }
}
