//! Two-stage risk control for retrieval and ranking pipelines.
//!
//! Loss tables over a threshold grid feed two families of calibrators:
//! multiple-testing calibration (`ltt`) with high-probability guarantees, and
//! conformal risk control (`crc`) with guarantees in expectation. A selection
//! step then picks one `(λ, γ)` pair from the certified set.

pub mod crc;
pub mod error;
pub mod grid;
pub mod harness;
pub mod ltt;
mod par;
pub mod pvalue;
pub mod retrieval;
pub mod selection;
mod sum;
pub mod table;

pub use error::{Error, Result};
pub use grid::{ceil_to_grid, GridPoint, ParameterGrid};
pub use table::{FeasibleSet, LossTable1, LossTable2, Provenance, RiskLevels};
