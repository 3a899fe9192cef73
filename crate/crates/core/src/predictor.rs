//! Hashed linear softmax predictor over partial inputs.
//!
//! A partial input is the union of the observed part bags plus one indicator
//! per part that is 1 iff the part was observed. Unobserved parts contribute
//! no feature mass.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::domain::{PartedInstance, PartialView, Prediction};
use crate::error::{Error, Result};

pub const DEFAULT_HASH_BITS: u32 = 18;
pub const DEFAULT_LEARN_RATE: f64 = 0.5;
/// Keeps a predictor at `MAX_HASH_BITS` around tens of MB per class.
pub const MAX_HASH_BITS: u32 = 24;

/// Features of a partial input: sorted, de-duplicated sparse pairs and the
/// observed-part indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialFeatures {
    pub sparse: Vec<(u32, f64)>,
    pub indicators: Vec<bool>,
}

/// Unions the observed bags, summing weights of repeated indices.
pub fn featurize_partial(instance: &PartedInstance, view: &PartialView) -> Result<PartialFeatures> {
    if view.num_parts() != instance.num_parts() {
        return Err(Error::Shape(format!(
            "view over {} parts applied to instance with {}",
            view.num_parts(),
            instance.num_parts()
        )));
    }
    let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
    // Ascending part order makes the sums independent of acquisition order.
    for part in 0..instance.num_parts() {
        if !view.contains(part) {
            continue;
        }
        for &(index, weight) in &instance.parts[part] {
            *merged.entry(index).or_insert(0.0) += weight;
        }
    }
    let indicators = (0..view.num_parts()).map(|i| view.contains(i)).collect();
    Ok(PartialFeatures {
        sparse: merged.into_iter().collect(),
        indicators,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorConfig {
    pub hash_bits: u32,
    pub learn_rate: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hash_bits: DEFAULT_HASH_BITS,
            learn_rate: DEFAULT_LEARN_RATE,
        }
    }
}

/// How pre-training picks the view of each example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetSampler {
    /// Size `m` uniform in `0..=n`, then a uniform `m`-subset.
    Uniform,
    /// Always the full input.
    Full,
    /// Always the first `k` parts.
    Prefix(usize),
}

/// Multiclass linear model `h`. Weights are stored slot-major: slot `s`,
/// class `k` lives at `s * classes + k`. Slots are the `2^hash_bits`
/// hashed features, then one indicator per part, then the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPredictor {
    hash_bits: u32,
    classes: usize,
    parts: usize,
    learn_rate: f64,
    weights: Vec<f64>,
}

impl TaskPredictor {
    pub fn new(classes: usize, parts: usize, cfg: PredictorConfig) -> Result<Self> {
        check_shape(classes, parts, cfg.hash_bits, cfg.learn_rate)?;
        let slots = (1usize << cfg.hash_bits) + parts + 1;
        Ok(Self {
            hash_bits: cfg.hash_bits,
            classes,
            parts,
            learn_rate: cfg.learn_rate,
            weights: vec![0.0; slots * classes],
        })
    }

    /// Rebuilds a predictor from a flat weight vector in slot-major order.
    pub fn from_weights(
        classes: usize,
        parts: usize,
        cfg: PredictorConfig,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let mut p = Self::new(classes, parts, cfg)?;
        if weights.len() != p.weights.len() {
            return Err(Error::Shape(format!(
                "expected {} weights, got {}",
                p.weights.len(),
                weights.len()
            )));
        }
        p.weights = weights;
        Ok(p)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn hash_bits(&self) -> u32 {
        self.hash_bits
    }

    pub fn learn_rate(&self) -> f64 {
        self.learn_rate
    }

    pub fn config(&self) -> PredictorConfig {
        PredictorConfig {
            hash_bits: self.hash_bits,
            learn_rate: self.learn_rate,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn feature_slots(&self) -> usize {
        1 << self.hash_bits
    }

    pub fn indicator_slot(&self, part: usize) -> usize {
        self.feature_slots() + part
    }

    pub fn bias_slot(&self) -> usize {
        self.feature_slots() + self.parts
    }

    /// Weight row (one entry per class) of a slot.
    pub fn slot(&self, slot: usize) -> &[f64] {
        &self.weights[slot * self.classes..(slot + 1) * self.classes]
    }

    fn check_features(&self, f: &PartialFeatures) -> Result<()> {
        if f.indicators.len() != self.parts {
            return Err(Error::Shape(format!(
                "{} indicators for a {}-part predictor",
                f.indicators.len(),
                self.parts
            )));
        }
        let limit = self.feature_slots();
        if let Some(&(index, _)) = f.sparse.iter().find(|(i, _)| *i as usize >= limit) {
            return Err(Error::FeatureOutOfRange {
                index,
                hash_bits: self.hash_bits,
            });
        }
        Ok(())
    }

    /// Raw per-class scores.
    pub fn logits(&self, f: &PartialFeatures) -> Result<Vec<f64>> {
        self.check_features(f)?;
        let k = self.classes;
        let mut out = self.slot(self.bias_slot()).to_vec();
        for &(index, value) in &f.sparse {
            let row = self.slot(index as usize);
            for c in 0..k {
                out[c] += row[c] * value;
            }
        }
        for (part, _) in f.indicators.iter().enumerate().filter(|(_, on)| **on) {
            let row = self.slot(self.indicator_slot(part));
            for c in 0..k {
                out[c] += row[c];
            }
        }
        Ok(out)
    }

    pub fn predict(&self, f: &PartialFeatures) -> Result<Prediction> {
        Ok(Prediction::from_logits(&self.logits(f)?))
    }

    /// `-log p(y | f)` under the plain softmax, the objective of [`update`].
    ///
    /// [`update`]: TaskPredictor::update
    pub fn neg_log_likelihood(&self, f: &PartialFeatures, y: usize) -> Result<f64> {
        self.check_label(y)?;
        let logits = self.logits(f)?;
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(logits.iter().map(|l| libm::exp(l - max)).sum::<f64>());
        Ok(lse - logits[y])
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: self.classes,
            });
        }
        Ok(())
    }

    fn plain_softmax(logits: &[f64]) -> Vec<f64> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }

    /// Gradient of [`neg_log_likelihood`] as `(flat weight index, value)`
    /// pairs; weights not listed have zero gradient.
    ///
    /// [`neg_log_likelihood`]: TaskPredictor::neg_log_likelihood
    pub fn gradient(&self, f: &PartialFeatures, y: usize) -> Result<Vec<(usize, f64)>> {
        self.check_label(y)?;
        let probs = Self::plain_softmax(&self.logits(f)?);
        let k = self.classes;
        let residual: Vec<f64> = (0..k)
            .map(|c| probs[c] - if c == y { 1.0 } else { 0.0 })
            .collect();
        let mut grad = Vec::new();
        let mut push_slot = |slot: usize, x: f64| {
            for (c, r) in residual.iter().enumerate() {
                grad.push((slot * k + c, r * x));
            }
        };
        for &(index, value) in &f.sparse {
            push_slot(index as usize, value);
        }
        for part in (0..self.parts).filter(|&p| f.indicators[p]) {
            push_slot(self.feature_slots() + part, 1.0);
        }
        push_slot(self.bias_slot(), 1.0);
        Ok(grad)
    }

    /// One logistic gradient step at the configured rate.
    pub fn update(&mut self, f: &PartialFeatures, y: usize) -> Result<()> {
        self.update_with_rate(f, y, self.learn_rate)
    }

    pub fn update_with_rate(&mut self, f: &PartialFeatures, y: usize, rate: f64) -> Result<()> {
        if rate == 0.0 {
            self.check_label(y)?;
            return self.check_features(f);
        }
        for (index, g) in self.gradient(f, y)? {
            self.weights[index] -= rate * g;
        }
        Ok(())
    }
}

fn check_shape(classes: usize, parts: usize, hash_bits: u32, learn_rate: f64) -> Result<()> {
    if classes < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if parts == 0 || parts > crate::domain::MAX_PARTS {
        return Err(Error::PartCount(parts));
    }
    if hash_bits > MAX_HASH_BITS {
        return Err(Error::Config(format!(
            "hash_bits {hash_bits} exceeds {MAX_HASH_BITS}"
        )));
    }
    if !(learn_rate.is_finite() && learn_rate >= 0.0) {
        return Err(Error::Config(format!("invalid learning rate {learn_rate}")));
    }
    Ok(())
}

/// Draws a view for pre-training.
pub fn sample_view<R: Rng>(
    rng: &mut R,
    parts: usize,
    sampler: SubsetSampler,
) -> Result<PartialView> {
    match sampler {
        SubsetSampler::Full => PartialView::full(parts),
        SubsetSampler::Prefix(k) => PartialView::prefix(parts, k),
        SubsetSampler::Uniform => {
            let size = rng.gen_range(0..=parts);
            let mut order: Vec<usize> = (0..parts).collect();
            for i in 0..size {
                let j = rng.gen_range(i..parts);
                order.swap(i, j);
            }
            PartialView::from_observed(parts, &order[..size])
        }
    }
}

/// Seeded in-place Fisher-Yates shuffle of `0..len`.
pub(crate) fn shuffled_order<R: Rng>(rng: &mut R, len: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    for i in (1..len).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Trains a fresh predictor on sampled views of every example, `passes`
/// times, visiting examples in a seeded shuffled order each pass.
pub fn pretrain(
    dataset: &Dataset,
    cfg: PredictorConfig,
    sampler: SubsetSampler,
    passes: usize,
    seed: u64,
) -> Result<TaskPredictor> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if let SubsetSampler::Prefix(k) = sampler {
        if k > dataset.parts() {
            return Err(Error::PartOutOfRange {
                index: k,
                parts: dataset.parts(),
            });
        }
    }
    let mut predictor = TaskPredictor::new(dataset.classes(), dataset.parts(), cfg)?;
    for inst in dataset.instances() {
        inst.validate(dataset.classes(), cfg.hash_bits)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..passes {
        for idx in shuffled_order(&mut rng, dataset.len()) {
            let inst = &dataset.instances()[idx];
            let view = sample_view(&mut rng, dataset.parts(), sampler)?;
            let f = featurize_partial(inst, &view)?;
            predictor.update(&f, inst.label)?;
        }
    }
    Ok(predictor)
}
