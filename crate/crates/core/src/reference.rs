//! Greedy label-aware reference policy and its roll-outs.
//!
//! At each state the reference takes the action whose resulting view has the
//! lowest combined loss under the true label, with `Stop` keeping the view
//! as is. Ties go to `Stop`, then to the lowest part index.

use alloc::vec::Vec;

use crate::domain::{
    smoothed_softmax, task_loss_of_probs, Action, LossConfig, PartialView, Prediction,
};
use crate::scorer::PartScorer;

/// Combined loss of an information set, split into a task term and an
/// acquisition term weighted by `lambda`.
///
/// Implementations that override [`acquisition_cost`] must override
/// [`extended_cost`] to match.
///
/// [`acquisition_cost`]: SetLoss::acquisition_cost
/// [`extended_cost`]: SetLoss::extended_cost
pub trait SetLoss {
    fn num_parts(&self) -> usize;

    fn lambda(&self) -> f64;

    fn task_loss(&self, view: &PartialView) -> f64;

    fn acquisition_cost(&self, view: &PartialView) -> f64 {
        view.acquisition_cost()
    }

    /// Acquisition cost of `view` plus `part`.
    fn extended_cost(&self, view: &PartialView, _part: usize) -> f64 {
        (view.len() + 1) as f64 / self.num_parts() as f64
    }

    fn combined(&self, view: &PartialView) -> f64 {
        self.task_loss(view) + self.lambda() * self.acquisition_cost(view)
    }

    /// Task loss after adding each unobserved part, ascending by part.
    fn extension_task_losses(&self, view: &PartialView, out: &mut Vec<(usize, f64)>) {
        out.clear();
        for part in view.unobserved() {
            let next = view.with(part).expect("unobserved part");
            out.push((part, self.task_loss(&next)));
        }
    }
}

/// The reference's view of one training instance: the predictor snapshot
/// (through its part cache), the true label and the loss.
#[derive(Debug, Clone)]
pub struct ReferenceContext<'s, 'a> {
    scorer: &'s PartScorer<'a>,
    label: usize,
    loss: LossConfig,
}

impl<'s, 'a> ReferenceContext<'s, 'a> {
    pub fn new(scorer: &'s PartScorer<'a>, loss: LossConfig) -> Self {
        Self {
            scorer,
            label: scorer.label(),
            loss,
        }
    }

    pub fn scorer(&self) -> &'s PartScorer<'a> {
        self.scorer
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn loss_config(&self) -> LossConfig {
        self.loss
    }

    /// Runs the reference from `view` to its terminal state.
    pub fn rollout(&self, view: &PartialView) -> (Prediction, PartialView) {
        let terminal = rollout_reference(self, view);
        (self.scorer.predict(&terminal), terminal)
    }

    pub fn action(&self, view: &PartialView) -> Action {
        reference_action(self, view)
    }
}

impl SetLoss for ReferenceContext<'_, '_> {
    fn num_parts(&self) -> usize {
        self.scorer.parts()
    }

    fn lambda(&self) -> f64 {
        self.loss.lambda()
    }

    fn task_loss(&self, view: &PartialView) -> f64 {
        let k = self.scorer.classes();
        let mut logits = alloc::vec![0.0; k];
        let mut probs = alloc::vec![0.0; k];
        self.scorer.probs_into(view, &mut logits, &mut probs);
        task_loss_of_probs(&probs, self.label, self.loss.task_loss())
    }

    fn extension_task_losses(&self, view: &PartialView, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let k = self.scorer.classes();
        let mut here = alloc::vec![0.0; k];
        let mut logits = alloc::vec![0.0; k];
        let mut probs = alloc::vec![0.0; k];
        self.scorer.logits_into(view, &mut here);
        for part in view.unobserved() {
            logits.copy_from_slice(&here);
            self.scorer.add_part(&mut logits, part);
            smoothed_softmax(&logits, &mut probs);
            out.push((
                part,
                task_loss_of_probs(&probs, self.label, self.loss.task_loss()),
            ));
        }
    }
}

/// Greedy one-step choice.
///
/// Combined losses are compared relative to the current state: part `a`
/// wins over `Stop` iff `task(X') > task(X' + a) + lambda * (C(X' + a) - C(X'))`.
/// When every part adds the same cost (the default `|X'| / n`), parts are
/// ranked by task loss alone, so the chosen part never depends on `lambda`.
pub fn reference_action<L: SetLoss + ?Sized>(loss: &L, view: &PartialView) -> Action {
    if view.is_full() {
        return Action::Stop;
    }
    let mut ext = Vec::with_capacity(view.num_parts());
    loss.extension_task_losses(view, &mut ext);
    let here_cost = loss.acquisition_cost(view);
    let marginal: Vec<f64> = ext
        .iter()
        .map(|&(part, _)| loss.extended_cost(view, part) - here_cost)
        .collect();
    let uniform = marginal
        .windows(2)
        .all(|w| w[0].to_bits() == w[1].to_bits());
    let lambda = loss.lambda();
    let key = |i: usize| {
        if uniform {
            ext[i].1
        } else {
            ext[i].1 + lambda * marginal[i]
        }
    };
    let mut best = 0;
    for i in 1..ext.len() {
        if key(i) < key(best) {
            best = i;
        }
    }
    let (part, task_after) = ext[best];
    if loss.task_loss(view) <= task_after + lambda * marginal[best] {
        Action::Stop
    } else {
        Action::Acquire(part)
    }
}

/// Follows the reference from `view` until it stops; returns the terminal view.
pub fn rollout_reference<L: SetLoss + ?Sized>(loss: &L, view: &PartialView) -> PartialView {
    let mut current = view.clone();
    while let Action::Acquire(part) = reference_action(loss, &current) {
        current
            .push(part)
            .expect("reference acquires unobserved parts");
    }
    current
}
