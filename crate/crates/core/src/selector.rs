//! The selection policy: state features and per-action cost regressors.
//!
//! Cost-sensitive multiclass learning is reduced to one linear regressor per
//! action (`n` parts plus `Stop`), each trained with squared loss toward the
//! action's normalized cost. The policy acts by taking the allowed action
//! with the lowest predicted cost.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{Action, PartialView, Prediction};
use crate::error::{Error, Result};

pub const DEFAULT_POLICY_LEARN_RATE: f64 = 0.01;

/// Featurized search state `(X', ŷ)`.
///
/// The base vector is laid out as: class scores (`-log p`, one per class),
/// margin, KL to the prior, one-hot argmax, steps taken, steps taken / n.
/// With the quadratic expansion every product `x_i * x_j` for `i <= j`
/// follows the base block.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFeatures {
    pub scores: Vec<f64>,
    pub margin: f64,
    pub kl_to_prior: f64,
    pub argmax_onehot: Vec<f64>,
    pub steps_taken: usize,
    pub steps_fraction: f64,
    pub quadratic: bool,
    values: Vec<f64>,
}

impl StateFeatures {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn base_len(&self) -> usize {
        base_dim(self.scores.len())
    }
}

pub fn base_dim(classes: usize) -> usize {
    2 * classes + 4
}

pub fn feature_dim(classes: usize, quadratic: bool) -> usize {
    let d = base_dim(classes);
    if quadratic {
        d + d * (d + 1) / 2
    } else {
        d
    }
}

/// `KL(p || q)` with natural logs.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * libm::log(pi / qi))
        .sum::<f64>()
        .max(0.0)
}

pub fn featurize_state(
    pred: &Prediction,
    prior: &[f64],
    view: &PartialView,
    quadratic: bool,
) -> Result<StateFeatures> {
    let k = pred.classes();
    if prior.len() != k {
        return Err(Error::Shape(format!(
            "prior has {} classes, prediction {k}",
            prior.len()
        )));
    }
    // Floor the prior like predictions so the KL stays finite.
    let prior = Prediction::from_probs(prior)?.probs;
    let margin = pred.margin();
    let kl_to_prior = kl_divergence(&pred.probs, &prior);
    let mut argmax_onehot = vec![0.0; k];
    argmax_onehot[pred.argmax] = 1.0;
    let steps_taken = view.len();
    let steps_fraction = steps_taken as f64 / view.num_parts() as f64;

    let mut values = Vec::with_capacity(feature_dim(k, quadratic));
    values.extend_from_slice(&pred.scores);
    values.push(margin);
    values.push(kl_to_prior);
    values.extend_from_slice(&argmax_onehot);
    values.push(steps_taken as f64);
    values.push(steps_fraction);
    if quadratic {
        let d = values.len();
        for i in 0..d {
            for j in i..d {
                values.push(values[i] * values[j]);
            }
        }
    }
    Ok(StateFeatures {
        scores: pred.scores.clone(),
        margin,
        kl_to_prior,
        argmax_onehot,
        steps_taken,
        steps_fraction,
        quadratic,
        values,
    })
}

/// A state paired with normalized costs of its allowed actions.
#[derive(Debug, Clone, PartialEq)]
pub struct CostExample {
    pub features: StateFeatures,
    costs: Vec<(Action, f64)>,
}

impl CostExample {
    /// Subtracts the minimum terminal loss, so the best action costs 0.
    pub fn from_losses(features: StateFeatures, losses: Vec<(Action, f64)>) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::Empty("action set"));
        }
        if losses.iter().any(|(_, l)| !l.is_finite()) {
            return Err(Error::NonFinite("terminal losses"));
        }
        let min = losses.iter().map(|(_, l)| *l).fold(f64::INFINITY, f64::min);
        let costs = losses.into_iter().map(|(a, l)| (a, l - min)).collect();
        Ok(Self { features, costs })
    }

    pub fn costs(&self) -> &[(Action, f64)] {
        &self.costs
    }

    pub fn cost_of(&self, action: Action) -> Option<f64> {
        self.costs
            .iter()
            .find(|(a, _)| *a == action)
            .map(|(_, c)| *c)
    }
}

/// Per-action linear cost regressors. Regressor `a` owns `dim + 1` weights,
/// the last being its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    parts: usize,
    classes: usize,
    quadratic: bool,
    learn_rate: f64,
    weights: Vec<f64>,
    /// Running sums of squared gradients, one per weight.
    accum: Vec<f64>,
    updates: u64,
}

impl Policy {
    pub fn new(classes: usize, parts: usize, quadratic: bool, learn_rate: f64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if parts == 0 || parts > crate::domain::MAX_PARTS {
            return Err(Error::PartCount(parts));
        }
        if !(learn_rate.is_finite() && learn_rate >= 0.0) {
            return Err(Error::Config(format!("invalid learning rate {learn_rate}")));
        }
        let width = feature_dim(classes, quadratic) + 1;
        Ok(Self {
            parts,
            classes,
            quadratic,
            learn_rate,
            weights: vec![0.0; (parts + 1) * width],
            accum: vec![0.0; (parts + 1) * width],
            updates: 0,
        })
    }

    pub fn from_weights(
        classes: usize,
        parts: usize,
        quadratic: bool,
        learn_rate: f64,
        weights: Vec<f64>,
        updates: u64,
    ) -> Result<Self> {
        let mut p = Self::new(classes, parts, quadratic, learn_rate)?;
        if weights.len() != p.weights.len() {
            return Err(Error::Shape(format!(
                "expected {} policy weights, got {}",
                p.weights.len(),
                weights.len()
            )));
        }
        p.weights = weights;
        p.updates = updates;
        Ok(p)
    }

    /// Like [`from_weights`](Policy::from_weights), also restoring the
    /// learner's squared-gradient sums.
    pub fn from_state(
        classes: usize,
        parts: usize,
        quadratic: bool,
        learn_rate: f64,
        weights: Vec<f64>,
        accum: Vec<f64>,
        updates: u64,
    ) -> Result<Self> {
        let mut p = Self::from_weights(classes, parts, quadratic, learn_rate, weights, updates)?;
        if accum.len() != p.accum.len() || accum.iter().any(|g| g.is_nan() || *g < 0.0) {
            return Err(Error::Shape(format!(
                "expected {} non-negative accumulators, got {}",
                p.accum.len(),
                accum.len()
            )));
        }
        p.accum = accum;
        Ok(p)
    }

    pub fn accumulators(&self) -> &[f64] {
        &self.accum
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn quadratic(&self) -> bool {
        self.quadratic
    }

    pub fn learn_rate(&self) -> f64 {
        self.learn_rate
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn num_regressors(&self) -> usize {
        self.parts + 1
    }

    pub fn feature_dim(&self) -> usize {
        feature_dim(self.classes, self.quadratic)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn regressor(&self, action: Action) -> &[f64] {
        let width = self.feature_dim() + 1;
        let a = action.index(self.parts);
        &self.weights[a * width..(a + 1) * width]
    }

    fn check(&self, sf: &StateFeatures) -> Result<()> {
        if sf.values.len() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "state has {} features, policy expects {}",
                sf.values.len(),
                self.feature_dim()
            )));
        }
        Ok(())
    }

    fn check_action(&self, action: Action) -> Result<()> {
        match action {
            Action::Acquire(i) if i >= self.parts => Err(Error::PartOutOfRange {
                index: i,
                parts: self.parts,
            }),
            _ => Ok(()),
        }
    }

    /// Predicted cost of `action` in state `sf`.
    pub fn predict_cost(&self, action: Action, sf: &StateFeatures) -> Result<f64> {
        self.check(sf)?;
        self.check_action(action)?;
        Ok(dot_with_bias(self.regressor(action), &sf.values))
    }

    /// Argmin of predicted cost over `allowed`. Ties prefer `Stop`, then the
    /// lowest part index.
    pub fn act(&self, sf: &StateFeatures, allowed: &[Action]) -> Result<Action> {
        self.check(sf)?;
        let mut best: Option<(f64, usize, Action)> = None;
        for &action in allowed {
            self.check_action(action)?;
            let cost = dot_with_bias(self.regressor(action), &sf.values);
            let rank = match action {
                Action::Stop => 0,
                Action::Acquire(i) => i + 1,
            };
            let better = match best {
                None => true,
                Some((c, r, _)) => cost < c || (cost == c && rank < r),
            };
            if better {
                best = Some((cost, rank, action));
            }
        }
        best.map(|(_, _, a)| a).ok_or(Error::Empty("action set"))
    }

    /// Choice among the actions of a view.
    pub fn act_in(&self, sf: &StateFeatures, view: &PartialView) -> Result<Action> {
        self.act(sf, &view.action_set())
    }

    /// `0.5 * (w_a · x - target)^2`.
    pub fn squared_loss(&self, action: Action, sf: &StateFeatures, target: f64) -> Result<f64> {
        let r = self.predict_cost(action, sf)? - target;
        Ok(0.5 * r * r)
    }

    /// Gradient of [`squared_loss`] with respect to regressor `action`'s
    /// weights (bias last).
    ///
    /// [`squared_loss`]: Policy::squared_loss
    pub fn gradient(&self, action: Action, sf: &StateFeatures, target: f64) -> Result<Vec<f64>> {
        let r = self.predict_cost(action, sf)? - target;
        let mut g: Vec<f64> = sf.values.iter().map(|x| r * x).collect();
        g.push(r);
        Ok(g)
    }

    /// One step per allowed action's regressor toward its cost. Each
    /// coordinate of the squared-loss gradient is scaled by
    /// `learn_rate / sqrt(sum of its squared gradients so far)` (AdaGrad),
    /// so features of very different magnitude learn at comparable speed.
    /// Regressors of actions missing from the example are untouched.
    pub fn update(&mut self, ex: &CostExample) -> Result<()> {
        self.check(&ex.features)?;
        for &(action, _) in &ex.costs {
            self.check_action(action)?;
        }
        let width = self.feature_dim() + 1;
        let values = &ex.features.values;
        for &(action, target) in &ex.costs {
            if self.learn_rate == 0.0 {
                continue;
            }
            let a = action.index(self.parts);
            let w = &mut self.weights[a * width..(a + 1) * width];
            let g2 = &mut self.accum[a * width..(a + 1) * width];
            let r = dot_with_bias(w, values) - target;
            for (j, (wj, gj)) in w.iter_mut().zip(g2.iter_mut()).enumerate() {
                let x = if j + 1 == width { 1.0 } else { values[j] };
                let g = r * x;
                if g != 0.0 {
                    *gj += g * g;
                    *wj -= self.learn_rate * g / libm::sqrt(*gj);
                }
            }
        }
        self.updates += 1;
        Ok(())
    }

    fn same_shape(&self, other: &Policy) -> bool {
        self.parts == other.parts
            && self.classes == other.classes
            && self.quadratic == other.quadratic
    }
}

fn dot_with_bias(w: &[f64], x: &[f64]) -> f64 {
    let (bias, body) = w.split_last().expect("regressor has a bias");
    body.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + bias
}

/// Element-wise mean of the policies' weights.
pub fn average_policies(policies: &[Policy]) -> Result<Policy> {
    let first = policies.first().ok_or(Error::Empty("policy list"))?;
    if let Some(bad) = policies.iter().find(|p| !first.same_shape(p)) {
        return Err(Error::Shape(format!(
            "policy over {} parts / {} classes cannot be averaged with {} parts / {} classes",
            bad.parts, bad.classes, first.parts, first.classes
        )));
    }
    let count = policies.len() as f64;
    let mut out = first.clone();
    for (i, w) in out.weights.iter_mut().enumerate() {
        *w = policies.iter().map(|p| p.weights[i]).sum::<f64>() / count;
    }
    for (i, g) in out.accum.iter_mut().enumerate() {
        *g = policies.iter().map(|p| p.accum[i]).sum::<f64>() / count;
    }
    out.updates = policies.iter().map(|p| p.updates).max().unwrap_or(0);
    Ok(out)
}

/// Incremental mean of policy snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningAverage {
    mean: Option<Policy>,
    count: u64,
}

impl RunningAverage {
    pub fn new() -> Self {
        Self {
            mean: None,
            count: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn absorb(&mut self, snapshot: &Policy) -> Result<()> {
        self.count += 1;
        match &mut self.mean {
            None => self.mean = Some(snapshot.clone()),
            Some(mean) => {
                if !mean.same_shape(snapshot) {
                    return Err(Error::Shape(format!(
                        "snapshot over {} parts does not match average over {}",
                        snapshot.parts, mean.parts
                    )));
                }
                let n = self.count as f64;
                for (m, w) in mean.weights.iter_mut().zip(&snapshot.weights) {
                    *m += (w - *m) / n;
                }
                for (m, g) in mean.accum.iter_mut().zip(&snapshot.accum) {
                    *m += (g - *m) / n;
                }
                mean.updates = snapshot.updates;
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> Option<&Policy> {
        self.mean.as_ref()
    }

    pub fn into_mean(self) -> Option<Policy> {
        self.mean
    }
}

impl Default for RunningAverage {
    fn default() -> Self {
        Self::new()
    }
}
