use aia_core::engine::{collect_deviation_costs, run_selector, LearnedSelector};
use aia_core::oracle::{alpha_along_reference, brute_force_optimal, ModularLoss};
use aia_core::predictor::PredictorConfig;
use aia_core::reference::{reference_action, rollout_reference, SetLoss};
use aia_core::selector::featurize_state;
use aia_core::{
    Action, CostExample, LossConfig, PartScorer, PartedInstance, PartialView, Policy, Prediction,
    ReferenceContext, TaskLoss, TaskPredictor,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BITS: u32 = 6;

/// A random predictor and a matching instance.
fn fixture(seed: u64, classes: usize, parts: usize, scale: f64) -> (TaskPredictor, PartedInstance) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = TaskPredictor::new(
        classes,
        parts,
        PredictorConfig {
            hash_bits: BITS,
            learn_rate: 0.5,
        },
    )
    .unwrap();
    for w in p.weights_mut() {
        *w = rng.gen_range(-scale..scale);
    }
    let bags = (0..parts)
        .map(|_| {
            (0..rng.gen_range(0..4))
                .map(|_| (rng.gen_range(0..1u32 << BITS), rng.gen_range(0.0..2.0)))
                .collect()
        })
        .collect();
    let label = rng.gen_range(0..classes);
    (p, PartedInstance::new("p", label, bags).unwrap())
}

fn random_view(rng: &mut ChaCha8Rng, parts: usize) -> PartialView {
    let mut v = PartialView::empty(parts).unwrap();
    for _ in 0..rng.gen_range(0..=parts) {
        let free: Vec<usize> = v.unobserved().collect();
        v.push(free[rng.gen_range(0..free.len())]).unwrap();
    }
    v
}

fn task_kind(zero_one: bool) -> TaskLoss {
    if zero_one {
        TaskLoss::ZeroOne
    } else {
        TaskLoss::LogLoss
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reference_acquires_fewer_parts_as_lambda_grows(
        seed in any::<u64>(), classes in 2usize..5, parts in 1usize..9, zero_one in any::<bool>()
    ) {
        let (p, inst) = fixture(seed, classes, parts, 1.5);
        let scorer = PartScorer::new(&p, &inst).unwrap();
        let mut last = usize::MAX;
        for lambda in [0.0, 0.5, 1.0, 2.0, 4.0, 20.0] {
            let ctx = ReferenceContext::new(&scorer, LossConfig::new(lambda, task_kind(zero_one)).unwrap());
            let acquired = rollout_reference(&ctx, &PartialView::empty(parts).unwrap()).len();
            prop_assert!(acquired <= last);
            last = acquired;
        }
    }

    #[test]
    fn reference_moves_are_legal_and_never_worse_than_stopping(
        seed in any::<u64>(), parts in 1usize..8, lambda in 0.0f64..3.0, zero_one in any::<bool>()
    ) {
        let (p, inst) = fixture(seed, 3, parts, 1.0);
        let scorer = PartScorer::new(&p, &inst).unwrap();
        let ctx = ReferenceContext::new(&scorer, LossConfig::new(lambda, task_kind(zero_one)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let view = random_view(&mut rng, parts);
        if let Action::Acquire(a) = reference_action(&ctx, &view) {
            prop_assert!(!view.contains(a));
        }
        let terminal = rollout_reference(&ctx, &view);
        prop_assert!(terminal.len() >= view.len());
        prop_assert_eq!(&terminal.observed()[..view.len()], view.observed());
        prop_assert!(ctx.combined(&terminal) <= ctx.combined(&view) + 1e-12);
    }

    #[test]
    fn optimum_below_reference_below_stop(
        seed in any::<u64>(), parts in 1usize..7, lambda in 0.0f64..3.0, zero_one in any::<bool>()
    ) {
        let (p, inst) = fixture(seed, 3, parts, 1.5);
        let scorer = PartScorer::new(&p, &inst).unwrap();
        let ctx = ReferenceContext::new(&scorer, LossConfig::new(lambda, task_kind(zero_one)).unwrap());
        let empty = PartialView::empty(parts).unwrap();
        let (opt, set) = brute_force_optimal(&ctx, &empty).unwrap();
        let reference = ctx.combined(&rollout_reference(&ctx, &empty));
        prop_assert!(opt <= reference + 1e-12);
        prop_assert!(reference <= ctx.combined(&empty) + 1e-12);
        let v = PartialView::from_observed(parts, &set).unwrap();
        prop_assert!((ctx.combined(&v) - opt).abs() < 1e-12);
    }

    #[test]
    fn greedy_is_exact_on_modular_losses(
        seed in any::<u64>(), parts in 1usize..7, lambda in 0.0f64..3.0
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let absent: Vec<f64> = (0..parts).map(|_| rng.gen_range(0.0..1.0)).collect();
        let present: Vec<f64> = (0..parts).map(|_| rng.gen_range(0.0..1.0)).collect();
        let m = ModularLoss::new(lambda, absent, present).unwrap();
        prop_assert_eq!(alpha_along_reference(&m).unwrap(), 1.0);
        let empty = PartialView::empty(parts).unwrap();
        let (opt, _) = brute_force_optimal(&m, &empty).unwrap();
        prop_assert_eq!(m.combined(&rollout_reference(&m, &empty)), opt);
    }

    #[test]
    fn trajectories_are_bounded_and_never_repeat(
        seed in any::<u64>(), classes in 2usize..5, parts in 1usize..10, quadratic in any::<bool>()
    ) {
        let (p, inst) = fixture(seed, classes, parts, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let mut policy = Policy::new(classes, parts, quadratic, 0.1).unwrap();
        for w in policy.weights_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
        let prior = vec![1.0 / classes as f64; classes];
        let scorer = PartScorer::new(&p, &inst).unwrap();
        let t = run_selector(&scorer, &LearnedSelector { policy: &policy, prior: &prior }).unwrap();
        prop_assert!(t.len() <= parts + 1);
        prop_assert_eq!(t.steps.last().unwrap().action, Action::Stop);
        let mut seen = vec![false; parts];
        for step in &t.steps {
            if let Action::Acquire(a) = step.action {
                prop_assert!(!seen[a]);
                seen[a] = true;
            }
        }
        prop_assert_eq!(t.terminal_view.len(), seen.iter().filter(|s| **s).count());
    }

    #[test]
    fn cost_examples_are_normalized(
        seed in any::<u64>(), parts in 1usize..8, lambda in 0.0f64..5.0, zero_one in any::<bool>()
    ) {
        let (p, inst) = fixture(seed, 3, parts, 1.5);
        let scorer = PartScorer::new(&p, &inst).unwrap();
        let ctx = ReferenceContext::new(&scorer, LossConfig::new(lambda, task_kind(zero_one)).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let view = random_view(&mut rng, parts);
        let sf = featurize_state(&scorer.predict(&view), &[0.2, 0.3, 0.5], &view, true).unwrap();
        let ex = collect_deviation_costs(&ctx, &view, sf).unwrap();
        prop_assert_eq!(ex.costs().len(), parts - view.len() + 1);
        prop_assert!(ex.costs().iter().all(|c| c.1 >= 0.0));
        prop_assert_eq!(ex.costs().iter().map(|c| c.1).fold(f64::INFINITY, f64::min), 0.0);
    }
}

#[test]
fn learned_cost_pattern_transfers_to_new_states() {
    // Acquire(2) always costs 0, everything else 1.
    let (classes, parts) = (3, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let prior = [0.5, 0.3, 0.2];
    let draw = |rng: &mut ChaCha8Rng| {
        let logits: Vec<f64> = (0..classes).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let pred = Prediction::from_logits(&logits);
        let mut view = random_view(rng, parts);
        while view.contains(2) || view.is_full() {
            view = random_view(rng, parts);
        }
        (featurize_state(&pred, &prior, &view, true).unwrap(), view)
    };
    let mut policy = Policy::new(classes, parts, true, 0.05).unwrap();
    for _ in 0..3000 {
        let (sf, view) = draw(&mut rng);
        let losses = view
            .action_set()
            .into_iter()
            .map(|a| (a, if a == Action::Acquire(2) { 0.0 } else { 1.0 }))
            .collect();
        policy
            .update(&CostExample::from_losses(sf, losses).unwrap())
            .unwrap();
    }
    for _ in 0..200 {
        let (sf, view) = draw(&mut rng);
        assert_eq!(policy.act_in(&sf, &view).unwrap(), Action::Acquire(2));
    }
}
