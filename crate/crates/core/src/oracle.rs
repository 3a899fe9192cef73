//! Exhaustive checks of the reference policy and an empirical audit of the
//! learned policy's regret bound.
//!
//! The terminal loss depends only on the final set of parts and transitions
//! are deterministic, so optimal behaviour from a state is found by
//! enumerating subsets of the unobserved parts rather than sequences.
//!
//! The audit measures, on a sample, every quantity of the bound
//! `J(π) - J(π*) <= T δ` with `δ = ε_c (Δ_max + λ C + (1 - 1/α) Q*_max)`.
//! Maxima are taken over the sampled states only, so the report is a
//! consistency check, not a certificate.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::domain::{LossConfig, PartedInstance, PartialView};
use crate::engine::{run_selector, ModelBundle, Selector};
use crate::error::{Error, Result};
use crate::predictor::TaskPredictor;
use crate::reference::{reference_action, rollout_reference, ReferenceContext, SetLoss};
use crate::scorer::PartScorer;

/// Largest part count accepted by the exhaustive routines.
pub const ENUMERATION_LIMIT: usize = 12;

fn guard(parts: usize) -> Result<()> {
    if parts > ENUMERATION_LIMIT {
        return Err(Error::EnumerationLimit {
            parts,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Best terminal set reachable from `start`: returns its combined loss and
/// the parts added to `start`, ascending. Ties prefer fewer parts, then the
/// lexicographically smallest list.
pub fn brute_force_optimal<L: SetLoss + ?Sized>(
    loss: &L,
    start: &PartialView,
) -> Result<(f64, Vec<usize>)> {
    guard(loss.num_parts())?;
    let free: Vec<usize> = start.unobserved().collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in 0u32..(1 << free.len()) {
        let added: Vec<usize> = free
            .iter()
            .enumerate()
            .filter(|(bit, _)| subset & (1 << bit) != 0)
            .map(|(_, &p)| p)
            .collect();
        let mut view = start.clone();
        for &p in &added {
            view.push(p)?;
        }
        let value = loss.combined(&view);
        let better = match &best {
            None => true,
            Some((b, parts)) => {
                value < *b || (value == *b && (added.len(), &added) < (parts.len(), parts))
            }
        };
        if better {
            best = Some((value, added));
        }
    }
    Ok(best.expect("at least the empty subset"))
}

/// `reference / optimal`, with `0 / 0 = 1`.
pub fn suboptimality_ratio(reference: f64, optimal: f64) -> f64 {
    if optimal <= 0.0 {
        if reference <= 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        reference / optimal
    }
}

/// Worst reference/optimal ratio over the states on the reference
/// trajectory from the empty view (never below 1).
pub fn alpha_along_reference<L: SetLoss + ?Sized>(loss: &L) -> Result<f64> {
    guard(loss.num_parts())?;
    let mut alpha: f64 = 1.0;
    let mut view = PartialView::empty(loss.num_parts())?;
    loop {
        alpha = alpha.max(state_alpha(loss, &view)?);
        match reference_action(loss, &view) {
            crate::domain::Action::Stop => break,
            crate::domain::Action::Acquire(p) => view.push(p)?,
        }
    }
    Ok(alpha)
}

fn state_alpha<L: SetLoss + ?Sized>(loss: &L, view: &PartialView) -> Result<f64> {
    let reference = loss.combined(&rollout_reference(loss, view));
    let (optimal, _) = brute_force_optimal(loss, view)?;
    Ok(suboptimality_ratio(reference, optimal))
}

/// `α̂` over a collection of per-instance losses.
pub fn measure_alpha_over<L: SetLoss>(losses: &[L]) -> Result<f64> {
    let mut alpha: f64 = 1.0;
    for l in losses {
        alpha = alpha.max(alpha_along_reference(l)?);
    }
    Ok(alpha)
}

/// `α̂` for a sample of instances under a fixed predictor.
pub fn measure_alpha(
    instances: &[PartedInstance],
    predictor: &TaskPredictor,
    loss: LossConfig,
) -> Result<f64> {
    let mut alpha: f64 = 1.0;
    for inst in instances {
        guard(inst.num_parts())?;
        let scorer = PartScorer::new(predictor, inst)?;
        let ctx = ReferenceContext::new(&scorer, loss);
        alpha = alpha.max(alpha_along_reference(&ctx)?);
    }
    Ok(alpha)
}

/// A loss where each part independently switches one additive term:
/// `task(S) = Σ_i (i ∈ S ? present[i] : absent[i])`. The greedy reference
/// is optimal on such losses.
#[derive(Debug, Clone, PartialEq)]
pub struct ModularLoss {
    lambda: f64,
    absent: Vec<f64>,
    present: Vec<f64>,
}

impl ModularLoss {
    pub fn new(lambda: f64, absent: Vec<f64>, present: Vec<f64>) -> Result<Self> {
        if absent.len() != present.len() || absent.is_empty() {
            return Err(Error::Shape(format!(
                "{} absent terms vs {} present terms",
                absent.len(),
                present.len()
            )));
        }
        if absent.len() > crate::domain::MAX_PARTS {
            return Err(Error::PartCount(absent.len()));
        }
        LossConfig::new(lambda, crate::domain::TaskLoss::LogLoss)?;
        Ok(Self {
            lambda,
            absent,
            present,
        })
    }
}

impl SetLoss for ModularLoss {
    fn num_parts(&self) -> usize {
        self.absent.len()
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn task_loss(&self, view: &PartialView) -> f64 {
        // Summed in part order so the value depends on the set only.
        (0..self.absent.len())
            .map(|i| {
                if view.contains(i) {
                    self.present[i]
                } else {
                    self.absent[i]
                }
            })
            .sum()
    }
}

/// Empirical counterparts of the regret bound's quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretAuditReport {
    pub instances: usize,
    pub states: usize,
    /// Horizon `T = n + 1`.
    pub horizon: usize,
    pub lambda: f64,
    /// Disagreement rate with the reference on the learned policy's states.
    pub epsilon_c: f64,
    pub alpha_hat: f64,
    pub delta_max_hat: f64,
    pub q_star_max_hat: f64,
    /// `λ C` with `C = 1/n`, the largest cost of one part.
    pub per_part_cost: f64,
    pub delta_hat: f64,
    pub j_learned: f64,
    pub j_reference: f64,
    pub empirical_regret: f64,
    pub bound: f64,
    pub slack: f64,
    pub bound_satisfied: bool,
}

impl RegretAuditReport {
    /// Field names and values in a fixed order.
    pub fn fields(&self) -> [(&'static str, f64); 16] {
        [
            ("instances", self.instances as f64),
            ("states", self.states as f64),
            ("horizon", self.horizon as f64),
            ("lambda", self.lambda),
            ("epsilon_c", self.epsilon_c),
            ("alpha_hat", self.alpha_hat),
            ("delta_max_hat", self.delta_max_hat),
            ("q_star_max_hat", self.q_star_max_hat),
            ("per_part_cost", self.per_part_cost),
            ("delta_hat", self.delta_hat),
            ("j_learned", self.j_learned),
            ("j_reference", self.j_reference),
            ("empirical_regret", self.empirical_regret),
            ("bound", self.bound),
            ("slack", self.slack),
            (
                "bound_satisfied",
                if self.bound_satisfied { 1.0 } else { 0.0 },
            ),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.fields().iter().all(|(_, v)| v.is_finite())
    }
}

impl fmt::Display for RegretAuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, value) in self.fields() {
            match name {
                "instances" | "states" | "horizon" => writeln!(f, "{name} = {}", value as u64)?,
                "bound_satisfied" => writeln!(f, "{name} = {}", self.bound_satisfied)?,
                _ => writeln!(f, "{name} = {value}")?,
            }
        }
        Ok(())
    }
}

/// Largest change in task loss from inserting, deleting or substituting one
/// part of `view`.
fn max_single_change<L: SetLoss + ?Sized>(loss: &L, view: &PartialView) -> Result<f64> {
    let n = view.num_parts();
    let here = loss.task_loss(view);
    let observed: Vec<usize> = view.observed().to_vec();
    let free: Vec<usize> = view.unobserved().collect();
    let mut worst: f64 = 0.0;
    let mut consider = |parts: &[usize]| -> Result<()> {
        let v = PartialView::from_observed(n, parts)?;
        worst = worst.max((loss.task_loss(&v) - here).abs());
        Ok(())
    };
    for &a in &free {
        let mut s = observed.clone();
        s.push(a);
        consider(&s)?;
    }
    for (i, _) in observed.iter().enumerate() {
        let mut s = observed.clone();
        s.remove(i);
        consider(&s)?;
        for &a in &free {
            let mut t = s.clone();
            t.insert(i, a);
            consider(&t)?;
        }
    }
    Ok(worst)
}

/// Audit of the bundle's learned policy.
pub fn regret_audit(
    instances: &[PartedInstance],
    bundle: &ModelBundle,
    slack: f64,
) -> Result<RegretAuditReport> {
    regret_audit_with(
        instances,
        &bundle.predictor,
        bundle.loss,
        &bundle.selector(),
        slack,
    )
}

/// Audit of any selector against the reference under `predictor`.
pub fn regret_audit_with<S: Selector + ?Sized>(
    instances: &[PartedInstance],
    predictor: &TaskPredictor,
    loss: LossConfig,
    selector: &S,
    slack: f64,
) -> Result<RegretAuditReport> {
    let first = instances.first().ok_or(Error::Empty("audit sample"))?;
    let n = first.num_parts();
    guard(n)?;
    let mut states = 0usize;
    let mut disagreements = 0usize;
    let mut alpha: f64 = 1.0;
    let mut delta_max: f64 = 0.0;
    let mut q_star_max: f64 = 0.0;
    let mut j_learned = 0.0;
    let mut j_reference = 0.0;

    for inst in instances {
        if inst.num_parts() != n {
            return Err(Error::Shape(format!(
                "instance {} has {} parts, sample has {n}",
                inst.id,
                inst.num_parts()
            )));
        }
        let scorer = PartScorer::new(predictor, inst)?;
        let ctx = ReferenceContext::new(&scorer, loss);
        let learned = run_selector(&scorer, selector)?;
        for step in &learned.steps {
            states += 1;
            if reference_action(&ctx, &step.view) != step.action {
                disagreements += 1;
            }
            for action in step.view.action_set() {
                let after = step.view.apply(action)?;
                let q = ctx.combined(&rollout_reference(&ctx, &after));
                q_star_max = q_star_max.max(q);
            }
            delta_max = delta_max.max(max_single_change(&ctx, &step.view)?);
            alpha = alpha.max(state_alpha(&ctx, &step.view)?);
        }
        j_learned += ctx.combined(&learned.terminal_view);

        let mut view = PartialView::empty(n)?;
        loop {
            delta_max = delta_max.max(max_single_change(&ctx, &view)?);
            alpha = alpha.max(state_alpha(&ctx, &view)?);
            match reference_action(&ctx, &view) {
                crate::domain::Action::Stop => break,
                crate::domain::Action::Acquire(p) => view.push(p)?,
            }
        }
        j_reference += ctx.combined(&view);
    }

    let count = instances.len() as f64;
    let horizon = n + 1;
    let epsilon_c = disagreements as f64 / states as f64;
    let per_part_cost = loss.lambda() / n as f64;
    let delta_hat = epsilon_c * (delta_max + per_part_cost + (1.0 - 1.0 / alpha) * q_star_max);
    let j_learned = j_learned / count;
    let j_reference = j_reference / count;
    let empirical_regret = j_learned - j_reference;
    let bound = horizon as f64 * delta_hat;
    Ok(RegretAuditReport {
        instances: instances.len(),
        states,
        horizon,
        lambda: loss.lambda(),
        epsilon_c,
        alpha_hat: alpha,
        delta_max_hat: delta_max,
        q_star_max_hat: q_star_max,
        per_part_cost,
        delta_hat,
        j_learned,
        j_reference,
        empirical_regret,
        bound,
        slack,
        bound_satisfied: empirical_regret <= bound + slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TaskLoss;
    use crate::engine::{AlwaysStop, ReferenceSelector};
    use crate::predictor::PredictorConfig;
    use alloc::vec;

    fn modular() -> ModularLoss {
        ModularLoss::new(
            1.0,
            vec![0.75, 0.5, 0.125, 1.0],
            vec![0.0, 0.375, 0.0, 0.25],
        )
        .unwrap()
    }

    /// Independent enumeration in reverse subset order.
    fn reverse_enumeration<L: SetLoss>(loss: &L) -> f64 {
        let n = loss.num_parts();
        let mut best = f64::INFINITY;
        for subset in (0u32..(1 << n)).rev() {
            let parts: Vec<usize> = (0..n).rev().filter(|i| subset & (1 << i) != 0).collect();
            let v = PartialView::from_observed(n, &parts).unwrap();
            let value = loss.task_loss(&v) + loss.lambda() * parts.len() as f64 / n as f64;
            best = best.min(value);
        }
        best
    }

    #[test]
    fn brute_force_agrees_with_reverse_enumeration() {
        let m = modular();
        let (value, parts) = brute_force_optimal(&m, &PartialView::empty(4).unwrap()).unwrap();
        assert_eq!(value, reverse_enumeration(&m));
        // Gains 0.75, 0.125, 0.125, 0.75 against a per-part cost of 0.25.
        assert_eq!(parts, vec![0, 3]);
        // 0 + 0.5 + 0.125 + 0.25 plus 2/4 of lambda.
        assert_eq!(value, 1.375);
    }

    #[test]
    fn greedy_is_optimal_on_modular_loss() {
        assert_eq!(alpha_along_reference(&modular()).unwrap(), 1.0);
        let terminal = rollout_reference(&modular(), &PartialView::empty(4).unwrap());
        let mut got = terminal.observed().to_vec();
        got.sort();
        assert_eq!(got, vec![0, 3]);
    }

    #[test]
    fn ratio_guard() {
        assert_eq!(suboptimality_ratio(0.0, 0.0), 1.0);
        assert_eq!(suboptimality_ratio(1.0, 0.0), f64::INFINITY);
        assert_eq!(suboptimality_ratio(3.0, 2.0), 1.5);
    }

    #[test]
    fn enumeration_guard() {
        let m = ModularLoss::new(0.0, vec![1.0; 13], vec![0.0; 13]).unwrap();
        assert!(matches!(
            brute_force_optimal(&m, &PartialView::empty(13).unwrap()),
            Err(Error::EnumerationLimit { .. })
        ));
    }

    fn predictor_fixture() -> (TaskPredictor, Vec<PartedInstance>) {
        let mut p = TaskPredictor::new(
            2,
            3,
            PredictorConfig {
                hash_bits: 4,
                learn_rate: 0.5,
            },
        )
        .unwrap();
        // Feature f pushes class f % 2.
        for f in 0..8usize {
            p.weights_mut()[f * 2 + f % 2] = 0.5 + f as f64 * 0.25;
        }
        let bias = p.bias_slot();
        p.weights_mut()[bias * 2] = 0.3;
        let mut out = Vec::new();
        for (i, label) in [0usize, 1, 1, 0, 1].iter().enumerate() {
            let parts = (0..3)
                .map(|j| vec![(((i + j * 3) % 8) as u32, 1.0)])
                .collect();
            out.push(PartedInstance::new(format!("i{i}"), *label, parts).unwrap());
        }
        (p, out)
    }

    #[test]
    fn forced_stop_regime_has_unit_alpha_and_empty_optimum() {
        let (p, insts) = predictor_fixture();
        let loss = LossConfig::new(4.0, TaskLoss::ZeroOne).unwrap();
        assert_eq!(measure_alpha(&insts, &p, loss).unwrap(), 1.0);
        for inst in &insts {
            let scorer = PartScorer::new(&p, inst).unwrap();
            let ctx = ReferenceContext::new(&scorer, loss);
            if scorer.predict(&PartialView::empty(3).unwrap()).argmax == inst.label {
                let (value, parts) =
                    brute_force_optimal(&ctx, &PartialView::empty(3).unwrap()).unwrap();
                assert_eq!(value, 0.0);
                assert!(parts.is_empty());
            }
        }
    }

    #[test]
    fn optimum_bounds_reference_bounds_stop() {
        let (p, insts) = predictor_fixture();
        for lambda in [0.0, 0.3, 1.0, 2.5] {
            let loss = LossConfig::new(lambda, TaskLoss::LogLoss).unwrap();
            for inst in &insts {
                let scorer = PartScorer::new(&p, inst).unwrap();
                let ctx = ReferenceContext::new(&scorer, loss);
                let empty = PartialView::empty(3).unwrap();
                let (opt, _) = brute_force_optimal(&ctx, &empty).unwrap();
                let reference = ctx.combined(&rollout_reference(&ctx, &empty));
                assert!(opt <= reference + 1e-12);
                assert!(reference <= ctx.combined(&empty) + 1e-12);
            }
        }
    }

    #[test]
    fn self_audit_has_no_disagreement() {
        let (p, insts) = predictor_fixture();
        let loss = LossConfig::new(0.5, TaskLoss::LogLoss).unwrap();
        let report =
            regret_audit_with(&insts, &p, loss, &ReferenceSelector { loss }, 0.01).unwrap();
        assert_eq!(report.epsilon_c, 0.0);
        assert!(report.empirical_regret <= 1e-12);
        assert!(report.bound_satisfied);
        assert!(report.alpha_hat >= 1.0);
        assert_eq!(report.horizon, 4);
    }

    #[test]
    fn always_stop_matches_stopping_reference() {
        let (p, insts) = predictor_fixture();
        let loss = LossConfig::new(4.0, TaskLoss::ZeroOne).unwrap();
        let report = regret_audit_with(&insts, &p, loss, &AlwaysStop, 0.0).unwrap();
        assert_eq!(report.epsilon_c, 0.0);
        assert_eq!(report.empirical_regret, 0.0);
        assert!(report.bound_satisfied);
        assert_eq!(report.states, insts.len());
    }

    #[test]
    fn single_change_counts_substitutions() {
        let m = modular();
        let v = PartialView::from_observed(4, &[1]).unwrap();
        // Task 2.25; inserting 0 or 3 lowers it by 0.75, the largest move.
        // Swapping 1 for 0 moves it by 0.625, dropping 1 by 0.125.
        assert_eq!(max_single_change(&m, &v).unwrap(), 0.75);
        let w = PartialView::from_observed(4, &[0, 3]).unwrap();
        // Task 0.875; substituting 3 -> 2 gives 1.5.
        assert_eq!(max_single_change(&m, &w).unwrap(), 0.75);
    }
}
