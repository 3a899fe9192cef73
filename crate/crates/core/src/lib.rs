//! Active information acquisition.
//!
//! An input is split into `n` parts. A task predictor maps any subset of the
//! parts to a class distribution, and a selection policy decides, one step at
//! a time, which part to acquire next or whether to stop and answer. Both are
//! trained together by learning to search: the learned policy rolls in, every
//! alternative action at each visited state is scored by rolling out a greedy
//! label-aware reference policy, and the resulting cost-sensitive examples
//! train per-action cost regressors.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, data sets and
//! the command line live in the companion `aia` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod domain;
pub mod engine;
mod error;
pub mod oracle;
pub mod predictor;
pub mod reference;
pub mod scorer;
pub mod selector;

pub use dataset::Dataset;
pub use domain::{
    Action, Difficulty, LossConfig, PartedInstance, PartialView, Prediction, TaskLoss,
};
pub use engine::{ModelBundle, TrainConfig, Trajectory};
pub use error::{Error, Result};
pub use predictor::{PartialFeatures, SubsetSampler, TaskPredictor};
pub use reference::ReferenceContext;
pub use scorer::PartScorer;
pub use selector::{CostExample, Policy, StateFeatures};
