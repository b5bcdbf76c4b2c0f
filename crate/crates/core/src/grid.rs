//! Finite threshold grids and the grid-ceiling operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack applied when rounding up onto the grid, so that a convex
/// combination landing one or two ulps above a grid point (e.g. `0.5 * 0.9 + 0.5`)
/// maps to that point instead of its successor.
pub const GRID_SNAP: f64 = 1e-12;

/// A member of a [`ParameterGrid`], carried with its position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub value: f64,
}

/// Strictly increasing thresholds in `[0, 1]` whose maximum is exactly `1.0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterGrid {
    values: Vec<f64>,
}

impl ParameterGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidGrid(format!("value {v} outside [0, 1]")));
        }
        if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(format!(
                "values not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        if *values.last().unwrap() != 1.0 {
            return Err(Error::InvalidGrid("maximum value must be exactly 1.0".into()));
        }
        Ok(Self { values })
    }

    /// `start, start + step, ..., stop`. Points are rounded to nine decimals so
    /// that e.g. `0.954` is represented by the same double as the literal.
    pub fn uniform(start: f64, stop: f64, step: f64) -> Result<Self> {
        if [start, stop, step].iter().any(|v| v.is_nan()) || step <= 0.0 || stop < start {
            return Err(Error::InvalidGrid(format!(
                "bad range start={start} stop={stop} step={step}"
            )));
        }
        let steps = ((stop - start) / step).round();
        if (start + steps * step - stop).abs() > 1e-9 {
            return Err(Error::InvalidGrid(format!(
                "step {step} does not divide [{start}, {stop}]"
            )));
        }
        let steps = steps as usize;
        let values = (0..=steps)
            .map(|i| {
                if i == steps {
                    stop
                } else {
                    ((start + i as f64 * step) * 1e9).round() / 1e9
                }
            })
            .collect();
        Self::new(values)
    }

    /// The single-point grid `{1.0}`.
    pub fn unit() -> Self {
        Self { values: vec![1.0] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn point(&self, index: usize) -> GridPoint {
        GridPoint { index, value: self.values[index] }
    }

    pub fn first(&self) -> GridPoint {
        self.point(0)
    }

    /// The top endpoint, always `1.0`.
    pub fn last(&self) -> GridPoint {
        self.point(self.values.len() - 1)
    }

    /// Index of the smallest grid value `>= x`.
    pub fn ceil_index(&self, x: f64) -> usize {
        let i = self.values.partition_point(|&v| v < x - GRID_SNAP);
        i.min(self.values.len() - 1)
    }

    pub fn ceil(&self, x: f64) -> GridPoint {
        self.point(self.ceil_index(x))
    }
}

/// `⌈x⌉` restricted to the grid.
pub fn ceil_to_grid(x: f64, grid: &ParameterGrid) -> f64 {
    grid.ceil(x).value
}
