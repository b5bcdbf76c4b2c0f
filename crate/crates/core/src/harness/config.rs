//! JSON configuration for the command-line harness.

use serde::{Deserialize, Serialize};

use crate::crc::Lambda0Policy;
use crate::error::{Error, Result};
use crate::grid::ParameterGrid;
use crate::harness::synth::SynthConfig;
use crate::harness::validate::ValidateConfig;
use crate::ltt::{LttConfig, LttProcedure};
use crate::retrieval::R0Config;
use crate::selection::ObjectiveConfig;
use crate::table::RiskLevels;

/// A grid given either as an arithmetic range or as explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Range { start: f64, stop: f64, step: f64 },
    Values(Vec<f64>),
}

impl GridSpec {
    pub fn range(start: f64, stop: f64, step: f64) -> Self {
        Self::Range { start, stop, step }
    }

    pub fn build(&self) -> Result<ParameterGrid> {
        match self {
            Self::Range { start, stop, step } => ParameterGrid::uniform(*start, *stop, *step),
            Self::Values(v) => ParameterGrid::new(v.clone()),
        }
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::range(0.95, 1.0, 0.001)
    }
}

/// `λ₀` for the split calibrator: a number, `"estimate"`, or `"analytic"`
/// (synthetic models only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lambda0Spec {
    Value(f64),
    Keyword(Lambda0Keyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lambda0Keyword {
    /// Estimated from the calibration data; the split guarantee then holds
    /// only approximately.
    Estimate,
    /// Worst case of a template synthetic model.
    Analytic,
}

impl Default for Lambda0Spec {
    fn default() -> Self {
        Self::Keyword(Lambda0Keyword::Estimate)
    }
}

impl Lambda0Spec {
    /// Resolves to a policy; `analytic` needs the model's guaranteed value.
    pub fn policy(&self, analytic: Option<f64>) -> Result<Lambda0Policy> {
        match *self {
            Self::Value(v) => Ok(Lambda0Policy::Known(v)),
            Self::Keyword(Lambda0Keyword::Estimate) => Ok(Lambda0Policy::Estimate),
            Self::Keyword(Lambda0Keyword::Analytic) => analytic
                .map(Lambda0Policy::Known)
                .ok_or_else(|| Error::Config("lambda0 \"analytic\" requires a synthetic model".into())),
        }
    }
}

fn default_delta() -> f64 {
    0.01
}

fn default_half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum CalibratorConfig {
    Ltt {
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default)]
        procedure: LttProcedure,
        #[serde(default)]
        w: Option<f64>,
    },
    Tcrc,
    TcrcS {
        #[serde(default = "default_half")]
        split_fraction: f64,
        #[serde(default)]
        lambda0: Lambda0Spec,
    },
}

impl CalibratorConfig {
    pub fn ltt(delta: f64, procedure: LttProcedure, w: Option<f64>) -> Self {
        Self::Ltt { delta, procedure, w }
    }

    /// Label used in result tables.
    pub fn label(&self) -> String {
        match self {
            Self::Ltt { procedure, .. } => format!("ltt:{}", procedure.name()),
            Self::Tcrc => "tcrc".into(),
            Self::TcrcS { .. } => "tcrc-s".into(),
        }
    }

    pub fn ltt_config(&self) -> Option<LttConfig> {
        match *self {
            Self::Ltt { delta, procedure, w } => Some(LttConfig { delta, procedure, w }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Ltt { .. } => self.ltt_config().unwrap().validate(),
            Self::Tcrc => Ok(()),
            Self::TcrcS { split_fraction, lambda0 } => {
                if !(*split_fraction > 0.0 && *split_fraction < 1.0) {
                    return Err(Error::Config(format!("split_fraction = {split_fraction} not in (0, 1)")));
                }
                if let Lambda0Spec::Value(v) = lambda0 {
                    if !(0.0..=1.0).contains(v) {
                        return Err(Error::Config(format!("lambda0 = {v} not in [0, 1]")));
                    }
                }
                Ok(())
            }
        }
    }
}

/// One calibrator or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(CalibratorConfig),
    Many(Vec<CalibratorConfig>),
}

fn calibrators<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<CalibratorConfig>, D::Error> {
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(c) => vec![c],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(alias = "calibrator", deserialize_with = "calibrators")]
    pub calibrators: Vec<CalibratorConfig>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub grid_lambda: GridSpec,
    pub grid_gamma: GridSpec,
    pub r0: u32,
    pub replications: usize,
    /// Fraction of queries used for calibration; the rest are test queries.
    pub calibration_fraction: f64,
    pub seed: u64,
    pub objective: ObjectiveConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            calibrators: vec![CalibratorConfig::Tcrc],
            alpha1: 0.1,
            alpha2: 0.1,
            grid_lambda: GridSpec::default(),
            grid_gamma: GridSpec::default(),
            r0: 2,
            replications: 10,
            calibration_fraction: 0.5,
            seed: 0,
            objective: ObjectiveConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn levels(&self) -> Result<RiskLevels> {
        RiskLevels::new(self.alpha1, self.alpha2)
    }

    pub fn r0(&self) -> Result<R0Config> {
        R0Config::new(self.r0)
    }

    pub fn grids(&self) -> Result<(ParameterGrid, ParameterGrid)> {
        Ok((self.grid_lambda.build()?, self.grid_gamma.build()?))
    }

    pub fn validate(&self) -> Result<()> {
        if self.calibrators.is_empty() {
            return Err(Error::Config("no calibrator given".into()));
        }
        for c in &self.calibrators {
            c.validate()?;
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return Err(Error::Config(format!(
                "calibration_fraction = {} not in (0, 1)",
                self.calibration_fraction
            )));
        }
        self.levels()?;
        self.r0()?;
        self.grids()?;
        self.objective.validate()
    }
}

/// Top-level configuration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub experiment: ExperimentConfig,
    pub synth: SynthConfig,
    pub validate: ValidateConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::from_json("{}").unwrap();
        assert_eq!(c.experiment.replications, 10);
        assert_eq!(c.experiment.grid_lambda.build().unwrap().len(), 51);
        assert_eq!(c.experiment.calibrators, vec![CalibratorConfig::Tcrc]);
        c.experiment.validate().unwrap();
    }

    #[test]
    fn calibrator_forms() {
        let c = Config::from_json(
            r#"{"experiment": {"calibrator": {"method": "ltt", "procedure": "appendix1", "w": 0.5}}}"#,
        )
        .unwrap();
        assert_eq!(
            c.experiment.calibrators,
            vec![CalibratorConfig::ltt(0.01, LttProcedure::GeometricFixedSequence, Some(0.5))]
        );
        let c = Config::from_json(
            r#"{"experiment": {"calibrators": [{"method": "tcrc"},
                {"method": "tcrc-s", "lambda0": 0.4}, {"method": "tcrc-s", "lambda0": "analytic"}],
                "grid_lambda": [0.5, 1.0]}}"#,
        )
        .unwrap();
        assert_eq!(c.experiment.calibrators.len(), 3);
        assert_eq!(c.experiment.grid_lambda, GridSpec::Values(vec![0.5, 1.0]));
        let CalibratorConfig::TcrcS { lambda0, .. } = c.experiment.calibrators[2] else { panic!() };
        assert!(lambda0.policy(None).is_err());
        assert_eq!(lambda0.policy(Some(0.7)).unwrap(), Lambda0Policy::Known(0.7));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::from_json(r#"{"experiment": {"replicatons": 3}}"#).is_err());
        let c = Config::from_json(r#"{"experiment": {"replications": 0}}"#).unwrap();
        assert!(c.experiment.validate().is_err());
        let c = Config::from_json(r#"{"experiment": {"calibrator": {"method": "ltt", "procedure": "appendix3"}}}"#)
            .unwrap();
        assert!(c.experiment.validate().is_err());
    }
}
