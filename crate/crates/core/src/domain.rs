//! Parted inputs, partial views, actions and the combined task/acquisition loss.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Largest supported number of parts per instance. Views are tracked as a
/// 64-bit mask.
pub const MAX_PARTS: usize = 64;

/// Per-class probability floor applied before renormalizing.
pub const PROB_FLOOR: f64 = 1e-6;

/// A sparse bag of `(feature index, weight)` pairs.
pub type FeatureBag = Vec<(u32, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Difficulty {
    Easy,
    Hard,
}

/// An input decomposed into `n` acquirable parts, plus its label.
#[derive(Debug, Clone, PartialEq)]
pub struct PartedInstance {
    pub id: String,
    pub label: usize,
    pub parts: Vec<FeatureBag>,
    pub difficulty: Option<Difficulty>,
}

impl PartedInstance {
    pub fn new(id: impl Into<String>, label: usize, parts: Vec<FeatureBag>) -> Result<Self> {
        let n = parts.len();
        if n == 0 || n > MAX_PARTS {
            return Err(Error::PartCount(n));
        }
        Ok(Self {
            id: id.into(),
            label,
            parts,
            difficulty: None,
        })
    }

    pub fn with_difficulty(mut self, difficulty: Difficulty) -> Self {
        self.difficulty = Some(difficulty);
        self
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    /// Checks the label and that every feature index fits in `hash_bits`.
    pub fn validate(&self, classes: usize, hash_bits: u32) -> Result<()> {
        let n = self.parts.len();
        if n == 0 || n > MAX_PARTS {
            return Err(Error::PartCount(n));
        }
        if self.label >= classes {
            return Err(Error::LabelOutOfRange {
                label: self.label,
                classes,
            });
        }
        for bag in &self.parts {
            for &(index, _) in bag {
                if hash_bits < 32 && index >> hash_bits != 0 {
                    return Err(Error::FeatureOutOfRange { index, hash_bits });
                }
            }
        }
        Ok(())
    }
}

/// One step of the search: acquire an unobserved part, or stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Acquire(usize),
    Stop,
}

impl Action {
    /// Dense index with parts first and `Stop` last.
    pub fn index(self, parts: usize) -> usize {
        match self {
            Action::Acquire(i) => i,
            Action::Stop => parts,
        }
    }

    pub fn from_index(index: usize, parts: usize) -> Self {
        if index == parts {
            Action::Stop
        } else {
            Action::Acquire(index)
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Acquire(i) => write!(f, "acquire({i})"),
            Action::Stop => f.write_str("stop"),
        }
    }
}

/// The parts acquired so far, in acquisition order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PartialView {
    parts: usize,
    observed: Vec<usize>,
    mask: u64,
}

impl PartialView {
    pub fn empty(parts: usize) -> Result<Self> {
        if parts == 0 || parts > MAX_PARTS {
            return Err(Error::PartCount(parts));
        }
        Ok(Self {
            parts,
            observed: Vec::new(),
            mask: 0,
        })
    }

    pub fn full(parts: usize) -> Result<Self> {
        Self::from_observed(parts, &(0..parts).collect::<Vec<_>>())
    }

    pub fn from_observed(parts: usize, observed: &[usize]) -> Result<Self> {
        let mut view = Self::empty(parts)?;
        for &i in observed {
            view.push(i)?;
        }
        Ok(view)
    }

    /// The first `k` parts, as a static reader would see them.
    pub fn prefix(parts: usize, k: usize) -> Result<Self> {
        if k > parts {
            return Err(Error::PartOutOfRange { index: k, parts });
        }
        Self::from_observed(parts, &(0..k).collect::<Vec<_>>())
    }

    pub fn push(&mut self, part: usize) -> Result<()> {
        if part >= self.parts {
            return Err(Error::PartOutOfRange {
                index: part,
                parts: self.parts,
            });
        }
        if self.contains(part) {
            return Err(Error::DuplicatePart(part));
        }
        self.observed.push(part);
        self.mask |= 1 << part;
        Ok(())
    }

    pub fn with(&self, part: usize) -> Result<Self> {
        let mut next = self.clone();
        next.push(part)?;
        Ok(next)
    }

    pub fn num_parts(&self) -> usize {
        self.parts
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.observed.len() == self.parts
    }

    pub fn contains(&self, part: usize) -> bool {
        part < self.parts && self.mask & (1 << part) != 0
    }

    /// Bit `i` is set iff part `i` is observed.
    pub fn mask(&self) -> u64 {
        self.mask
    }

    /// Unobserved parts in ascending order.
    pub fn unobserved(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.parts).filter(move |&i| !self.contains(i))
    }

    /// `A(X')`: every unobserved part, followed by `Stop`.
    pub fn action_set(&self) -> Vec<Action> {
        let mut actions: Vec<Action> = self.unobserved().map(Action::Acquire).collect();
        actions.push(Action::Stop);
        actions
    }

    pub fn allows(&self, action: Action) -> bool {
        match action {
            Action::Stop => true,
            Action::Acquire(i) => i < self.parts && !self.contains(i),
        }
    }

    /// Fraction of parts acquired, `|X'| / n`.
    pub fn acquisition_cost(&self) -> f64 {
        PartFraction.cost(self)
    }

    /// Applies an action; `Stop` leaves the view unchanged.
    pub fn apply(&self, action: Action) -> Result<Self> {
        match action {
            Action::Stop => Ok(self.clone()),
            Action::Acquire(i) => self.with(i),
        }
    }
}

/// Cost of an information set. The default charges `|X'| / n`.
pub trait AcquisitionCost {
    fn cost(&self, view: &PartialView) -> f64;
}

/// Fraction of parts acquired.
#[derive(Debug, Clone, Copy, Default)]
pub struct PartFraction;

impl AcquisitionCost for PartFraction {
    fn cost(&self, view: &PartialView) -> f64 {
        view.len() as f64 / view.num_parts() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskLoss {
    ZeroOne,
    LogLoss,
}

impl fmt::Display for TaskLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskLoss::ZeroOne => "zero-one",
            TaskLoss::LogLoss => "log-loss",
        })
    }
}

/// Trade-off weight `lambda` and the task loss it is added to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    lambda: f64,
    task_loss: TaskLoss,
}

impl LossConfig {
    pub fn new(lambda: f64, task_loss: TaskLoss) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Self { lambda, task_loss })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn task_loss(&self) -> TaskLoss {
        self.task_loss
    }
}

/// A class distribution with its negative log scores and argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub scores: Vec<f64>,
    pub argmax: usize,
}

impl Prediction {
    /// Softmax of raw class scores, floored and renormalized.
    pub fn from_logits(logits: &[f64]) -> Self {
        let mut probs = alloc::vec![0.0; logits.len()];
        smoothed_softmax(logits, &mut probs);
        Self::from_smoothed(probs)
    }

    /// Floors and renormalizes an arbitrary non-negative distribution.
    pub fn from_probs(raw: &[f64]) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least 2 classes, got {}",
                raw.len()
            )));
        }
        if raw.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::NonFinite("probabilities"));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::Config(String::from("probabilities sum to zero")));
        }
        let mut probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
        floor_and_normalize(&mut probs);
        Ok(Self::from_smoothed(probs))
    }

    fn from_smoothed(probs: Vec<f64>) -> Self {
        let scores = probs.iter().map(|p| -libm::log(*p)).collect();
        let argmax = argmax(&probs);
        Self {
            probs,
            scores,
            argmax,
        }
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// Probability gap between the best and second best class.
    pub fn margin(&self) -> f64 {
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for &p in &self.probs {
            if p > best {
                second = best;
                best = p;
            } else if p > second {
                second = p;
            }
        }
        best - second
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Writes the floored softmax of `logits` into `out`. Every prediction in
/// the crate goes through this function so that scores computed along
/// different code paths compare exactly.
pub fn smoothed_softmax(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = libm::exp(l - max);
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    floor_and_normalize(out);
}

fn floor_and_normalize(probs: &mut [f64]) {
    let mut total = 0.0;
    for p in probs.iter_mut() {
        if *p < PROB_FLOOR {
            *p = PROB_FLOOR;
        }
        total += *p;
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
}

/// Task loss of a smoothed distribution against label `y`.
pub fn task_loss_of_probs(probs: &[f64], y: usize, kind: TaskLoss) -> f64 {
    match kind {
        TaskLoss::ZeroOne => {
            if argmax(probs) == y {
                0.0
            } else {
                1.0
            }
        }
        TaskLoss::LogLoss => -libm::log(probs[y]),
    }
}

pub fn task_loss(pred: &Prediction, y: usize, kind: TaskLoss) -> Result<f64> {
    if y >= pred.classes() {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: pred.classes(),
        });
    }
    Ok(match kind {
        TaskLoss::ZeroOne => {
            if pred.argmax == y {
                0.0
            } else {
                1.0
            }
        }
        TaskLoss::LogLoss => -libm::log(pred.probs[y]),
    })
}

/// `task_loss + lambda * |X'| / n`.
pub fn combined_loss(
    pred: &Prediction,
    y: usize,
    view: &PartialView,
    cfg: &LossConfig,
) -> Result<f64> {
    combined_loss_with(pred, y, view, cfg, &PartFraction)
}

pub fn combined_loss_with(
    pred: &Prediction,
    y: usize,
    view: &PartialView,
    cfg: &LossConfig,
    cost: &dyn AcquisitionCost,
) -> Result<f64> {
    Ok(task_loss(pred, y, cfg.task_loss)? + cfg.lambda * cost.cost(view))
}
