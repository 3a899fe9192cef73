//! Per-instance cache of each part's contribution to the class scores.
//!
//! The predictor is linear, so the scores of `X' ∪ {x_a}` are the scores of
//! `X'` plus the contribution of part `a` (its bag and its indicator). The
//! greedy reference and the training loop evaluate thousands of one-part
//! extensions per instance; caching the contributions avoids re-featurizing
//! the union each time.
//!
//! Scores are always accumulated from the bias in acquisition order, so an
//! extension computed incrementally is bit-identical to scoring the
//! extended view directly.

use alloc::format;
use alloc::vec::Vec;

use crate::domain::{smoothed_softmax, PartedInstance, PartialView, Prediction};
use crate::error::{Error, Result};
use crate::predictor::TaskPredictor;

#[derive(Debug, Clone)]
pub struct PartScorer<'a> {
    instance: &'a PartedInstance,
    classes: usize,
    bias: Vec<f64>,
    contrib: Vec<f64>,
}

impl<'a> PartScorer<'a> {
    pub fn new(predictor: &TaskPredictor, instance: &'a PartedInstance) -> Result<Self> {
        let parts = instance.num_parts();
        if parts != predictor.parts() {
            return Err(Error::Shape(format!(
                "instance {} has {parts} parts, predictor expects {}",
                instance.id,
                predictor.parts()
            )));
        }
        let k = predictor.classes();
        let limit = predictor.feature_slots();
        let mut contrib = alloc::vec![0.0; parts * k];
        for (part, bag) in instance.parts.iter().enumerate() {
            let out = &mut contrib[part * k..(part + 1) * k];
            for &(index, value) in bag {
                if index as usize >= limit {
                    return Err(Error::FeatureOutOfRange {
                        index,
                        hash_bits: predictor.hash_bits(),
                    });
                }
                let row = predictor.slot(index as usize);
                for c in 0..k {
                    out[c] += row[c] * value;
                }
            }
            let row = predictor.slot(predictor.indicator_slot(part));
            for c in 0..k {
                out[c] += row[c];
            }
        }
        Ok(Self {
            instance,
            classes: k,
            bias: predictor.slot(predictor.bias_slot()).to_vec(),
            contrib,
        })
    }

    pub fn instance(&self) -> &'a PartedInstance {
        self.instance
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn parts(&self) -> usize {
        self.instance.num_parts()
    }

    pub fn label(&self) -> usize {
        self.instance.label
    }

    pub fn part_contribution(&self, part: usize) -> &[f64] {
        &self.contrib[part * self.classes..(part + 1) * self.classes]
    }

    pub fn logits_into(&self, view: &PartialView, out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for &part in view.observed() {
            self.add_part(out, part);
        }
    }

    pub fn logits(&self, view: &PartialView) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.classes];
        self.logits_into(view, &mut out);
        out
    }

    pub fn add_part(&self, logits: &mut [f64], part: usize) {
        for (l, c) in logits.iter_mut().zip(self.part_contribution(part)) {
            *l += c;
        }
    }

    /// `h(X')`.
    pub fn predict(&self, view: &PartialView) -> Prediction {
        Prediction::from_logits(&self.logits(view))
    }

    /// Smoothed class probabilities of a view, written into `out`.
    pub fn probs_into(&self, view: &PartialView, logits: &mut [f64], out: &mut [f64]) {
        self.logits_into(view, logits);
        smoothed_softmax(logits, out);
    }
}
