//! Data sets, evaluation, model files and experiment drivers around
//! [`aia_core`].

pub mod error;
pub mod eval;
pub mod experiment;
pub mod jsonl;
pub mod model;
pub mod synthetic;
pub mod text;

pub use error::{HarnessError, Result};
pub use eval::{evaluate, ParetoRow, RowKind};
pub use experiment::{static_baseline, sweep_lambda, HarnessConfig};
pub use synthetic::{generate_synthetic, Splits, SyntheticConfig};
