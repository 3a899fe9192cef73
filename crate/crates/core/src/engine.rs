//! Test-time acquisition and learning-to-search joint training.

use alloc::format;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::domain::{Action, LossConfig, PartedInstance, PartialView, Prediction};
use crate::error::{Error, Result};
use crate::predictor::{featurize_partial, shuffled_order, TaskPredictor};
use crate::reference::{rollout_reference, ReferenceContext, SetLoss};
use crate::scorer::PartScorer;
use crate::selector::{
    featurize_state, CostExample, Policy, RunningAverage, StateFeatures, DEFAULT_POLICY_LEARN_RATE,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub passes: usize,
    /// Zero-based pass from which the predictor is fine-tuned. The default,
    /// 1, starts fine-tuning once the first pass is over.
    pub fine_tune_start_pass: usize,
    pub policy_learn_rate: f64,
    /// Fine-tuning step size; `None` uses the predictor's own rate.
    pub finetune_learn_rate: Option<f64>,
    pub quadratic: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            passes: 2,
            fine_tune_start_pass: 1,
            policy_learn_rate: DEFAULT_POLICY_LEARN_RATE,
            finetune_learn_rate: None,
            quadratic: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.passes == 0 {
            return Err(Error::Config("passes must be >= 1".into()));
        }
        if self.fine_tune_start_pass > self.passes {
            return Err(Error::Config(format!(
                "fine_tune_start_pass {} exceeds passes {}",
                self.fine_tune_start_pass, self.passes
            )));
        }
        for rate in core::iter::once(self.policy_learn_rate).chain(self.finetune_learn_rate) {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(Error::Config(format!("invalid learning rate {rate}")));
            }
        }
        Ok(())
    }
}

/// A trained predictor and averaged policy, with what is needed to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub predictor: TaskPredictor,
    pub policy: Policy,
    pub prior: Vec<f64>,
    pub loss: LossConfig,
    pub config: TrainConfig,
}

impl ModelBundle {
    pub fn new(
        predictor: TaskPredictor,
        policy: Policy,
        prior: Vec<f64>,
        loss: LossConfig,
        config: TrainConfig,
    ) -> Result<Self> {
        if predictor.classes() != policy.classes() || predictor.parts() != policy.parts() {
            return Err(Error::Shape(format!(
                "predictor is {}x{} (classes x parts) but policy is {}x{}",
                predictor.classes(),
                predictor.parts(),
                policy.classes(),
                policy.parts()
            )));
        }
        if prior.len() != predictor.classes() {
            return Err(Error::Shape(format!(
                "prior has {} entries for {} classes",
                prior.len(),
                predictor.classes()
            )));
        }
        Ok(Self {
            predictor,
            policy,
            prior,
            loss,
            config,
        })
    }

    pub fn classes(&self) -> usize {
        self.predictor.classes()
    }

    pub fn parts(&self) -> usize {
        self.predictor.parts()
    }

    pub fn selector(&self) -> LearnedSelector<'_> {
        LearnedSelector {
            policy: &self.policy,
            prior: &self.prior,
        }
    }
}

/// Picks the next action during a trajectory.
pub trait Selector {
    fn select(
        &self,
        scorer: &PartScorer<'_>,
        view: &PartialView,
        pred: &Prediction,
    ) -> Result<Action>;
}

/// The learned policy acting on featurized states.
#[derive(Debug, Clone, Copy)]
pub struct LearnedSelector<'p> {
    pub policy: &'p Policy,
    pub prior: &'p [f64],
}

impl LearnedSelector<'_> {
    pub fn features(&self, view: &PartialView, pred: &Prediction) -> Result<StateFeatures> {
        featurize_state(pred, self.prior, view, self.policy.quadratic())
    }
}

impl Selector for LearnedSelector<'_> {
    fn select(
        &self,
        _scorer: &PartScorer<'_>,
        view: &PartialView,
        pred: &Prediction,
    ) -> Result<Action> {
        let sf = self.features(view, pred)?;
        self.policy.act_in(&sf, view)
    }
}

/// The label-aware reference, usable wherever a policy is expected
/// (training-time only, since it reads the label).
#[derive(Debug, Clone, Copy)]
pub struct ReferenceSelector {
    pub loss: LossConfig,
}

impl Selector for ReferenceSelector {
    fn select(
        &self,
        scorer: &PartScorer<'_>,
        view: &PartialView,
        _pred: &Prediction,
    ) -> Result<Action> {
        Ok(ReferenceContext::new(scorer, self.loss).action(view))
    }
}

/// Stops immediately.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysStop;

impl Selector for AlwaysStop {
    fn select(&self, _: &PartScorer<'_>, _: &PartialView, _: &Prediction) -> Result<Action> {
        Ok(Action::Stop)
    }
}

/// Acquires the first `k` parts in order, then stops.
#[derive(Debug, Clone, Copy)]
pub struct FirstK(pub usize);

impl Selector for FirstK {
    fn select(&self, _: &PartScorer<'_>, view: &PartialView, _: &Prediction) -> Result<Action> {
        if view.len() < self.0.min(view.num_parts()) {
            Ok(Action::Acquire(view.len()))
        } else {
            Ok(Action::Stop)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub view: PartialView,
    pub prediction: Prediction,
    pub action: Action,
}

/// One execution of the acquisition loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
    pub terminal_prediction: Prediction,
    pub terminal_view: PartialView,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

/// Runs the acquisition loop from the empty view with `selector`.
pub fn run_selector<S: Selector + ?Sized>(
    scorer: &PartScorer<'_>,
    selector: &S,
) -> Result<Trajectory> {
    run_selector_from(scorer, selector, PartialView::empty(scorer.parts())?)
}

pub fn run_selector_from<S: Selector + ?Sized>(
    scorer: &PartScorer<'_>,
    selector: &S,
    start: PartialView,
) -> Result<Trajectory> {
    let n = scorer.parts();
    let mut view = start;
    let mut steps = Vec::with_capacity(n + 1);
    while steps.len() <= n {
        let prediction = scorer.predict(&view);
        let action = selector.select(scorer, &view, &prediction)?;
        if !view.allows(action) {
            return Err(Error::ActionNotAllowed(format!("{action}")));
        }
        steps.push(TrajectoryStep {
            view: view.clone(),
            prediction: prediction.clone(),
            action,
        });
        match action {
            Action::Stop => {
                return Ok(Trajectory {
                    steps,
                    terminal_prediction: prediction,
                    terminal_view: view,
                })
            }
            Action::Acquire(part) => view.push(part)?,
        }
    }
    // Unreachable for a well-behaved selector, since a full view only
    // allows Stop; return the full-view prediction.
    Ok(Trajectory {
        terminal_prediction: scorer.predict(&view),
        terminal_view: view,
        steps,
    })
}

fn check_instance(bundle: &ModelBundle, instance: &PartedInstance) -> Result<()> {
    if instance.num_parts() != bundle.parts() {
        return Err(Error::Shape(format!(
            "instance {} has {} parts, model expects {}",
            instance.id,
            instance.num_parts(),
            bundle.parts()
        )));
    }
    Ok(())
}

/// Test-time acquisition with the bundle's predictor and averaged policy.
pub fn predict(bundle: &ModelBundle, instance: &PartedInstance) -> Result<Trajectory> {
    check_instance(bundle, instance)?;
    let scorer = PartScorer::new(&bundle.predictor, instance)?;
    run_selector(&scorer, &bundle.selector())
}

/// Scores every allowed action at `view` by executing it and rolling out the
/// reference to termination, then normalizes by the minimum.
pub fn collect_deviation_costs(
    ctx: &ReferenceContext<'_, '_>,
    view: &PartialView,
    features: StateFeatures,
) -> Result<CostExample> {
    let mut losses = Vec::with_capacity(view.num_parts() - view.len() + 1);
    for action in view.action_set() {
        let terminal = match action {
            Action::Stop => view.clone(),
            Action::Acquire(part) => rollout_reference(ctx, &view.with(part)?),
        };
        losses.push((action, ctx.combined(&terminal)));
    }
    CostExample::from_losses(features, losses)
}

/// One predictor update on the terminal view toward the true label.
pub fn finetune_step(
    predictor: &mut TaskPredictor,
    instance: &PartedInstance,
    terminal: &PartialView,
    rate: f64,
) -> Result<()> {
    let f = featurize_partial(instance, terminal)?;
    predictor.update_with_rate(&f, instance.label, rate)
}

/// Hooks into training, for audits and tests.
pub trait TrainObserver {
    fn cost_example(&mut self, _example: &CostExample) {}
    /// Called after each example with the current and averaged policies.
    fn example_done(&mut self, _current: &Policy, _average: &Policy) {}
}

impl TrainObserver for () {}

/// Online learning-to-search state carried across examples and passes.
#[derive(Debug, Clone)]
pub struct Trainer {
    predictor: TaskPredictor,
    policy: Policy,
    average: RunningAverage,
    prior: Vec<f64>,
    loss: LossConfig,
    config: TrainConfig,
    rng: ChaCha8Rng,
    passes_done: usize,
}

impl Trainer {
    pub fn new(
        predictor: TaskPredictor,
        prior: Vec<f64>,
        loss: LossConfig,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let policy = Policy::new(
            predictor.classes(),
            predictor.parts(),
            config.quadratic,
            config.policy_learn_rate,
        )?;
        if prior.len() != predictor.classes() {
            return Err(Error::Shape(format!(
                "prior has {} entries for {} classes",
                prior.len(),
                predictor.classes()
            )));
        }
        Ok(Self {
            predictor,
            policy,
            average: RunningAverage::new(),
            prior,
            loss,
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            passes_done: 0,
        })
    }

    pub fn predictor(&self) -> &TaskPredictor {
        &self.predictor
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn average(&self) -> Option<&Policy> {
        self.average.mean()
    }

    pub fn passes_done(&self) -> usize {
        self.passes_done
    }

    fn finetuning(&self) -> bool {
        self.passes_done >= self.config.fine_tune_start_pass
    }

    /// One pass over `instances` in a seeded shuffled order.
    pub fn run_pass<O: TrainObserver + ?Sized>(
        &mut self,
        instances: &[PartedInstance],
        observer: &mut O,
    ) -> Result<()> {
        let finetune = self.finetuning();
        for idx in shuffled_order(&mut self.rng, instances.len()) {
            self.train_example(&instances[idx], finetune, observer)?;
        }
        self.passes_done += 1;
        Ok(())
    }

    /// Rolls in with the current policy. At every visited state the
    /// deviation costs are collected and the policy updated; on `Stop` the
    /// predictor is optionally fine-tuned on the terminal view.
    pub fn train_example<O: TrainObserver + ?Sized>(
        &mut self,
        instance: &PartedInstance,
        finetune: bool,
        observer: &mut O,
    ) -> Result<()> {
        if instance.label >= self.predictor.classes() {
            return Err(Error::LabelOutOfRange {
                label: instance.label,
                classes: self.predictor.classes(),
            });
        }
        let n = self.predictor.parts();
        let terminal = {
            let scorer = PartScorer::new(&self.predictor, instance)?;
            let ctx = ReferenceContext::new(&scorer, self.loss);
            let mut view = PartialView::empty(n)?;
            let mut steps = 0;
            loop {
                steps += 1;
                assert!(steps <= n + 1, "roll-in exceeded n + 1 steps");
                let pred = scorer.predict(&view);
                let sf = featurize_state(&pred, &self.prior, &view, self.config.quadratic)?;
                let action = self.policy.act_in(&sf, &view)?;
                let example = collect_deviation_costs(&ctx, &view, sf)?;
                observer.cost_example(&example);
                self.policy.update(&example)?;
                match action {
                    Action::Stop => break view,
                    Action::Acquire(part) => {
                        debug_assert!(!view.contains(part));
                        view.push(part)?;
                    }
                }
            }
        };
        if finetune {
            let rate = self
                .config
                .finetune_learn_rate
                .unwrap_or(self.predictor.learn_rate());
            finetune_step(&mut self.predictor, instance, &terminal, rate)?;
        }
        self.average.absorb(&self.policy)?;
        observer.example_done(&self.policy, self.average.mean().expect("absorbed"));
        Ok(())
    }

    /// The bundle with the averaged policy (the initial policy if no
    /// example was processed).
    pub fn finish(self) -> Result<ModelBundle> {
        let policy = self.average.into_mean().unwrap_or(self.policy);
        ModelBundle::new(self.predictor, policy, self.prior, self.loss, self.config)
    }
}

pub fn train(
    dataset: &Dataset,
    initial: TaskPredictor,
    loss: LossConfig,
    config: TrainConfig,
) -> Result<ModelBundle> {
    train_observed(dataset, initial, loss, config, &mut ())
}

pub fn train_observed<O: TrainObserver + ?Sized>(
    dataset: &Dataset,
    initial: TaskPredictor,
    loss: LossConfig,
    config: TrainConfig,
    observer: &mut O,
) -> Result<ModelBundle> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if dataset.classes() != initial.classes() || dataset.parts() != initial.parts() {
        return Err(Error::Shape(format!(
            "dataset is {}x{} (classes x parts) but predictor is {}x{}",
            dataset.classes(),
            dataset.parts(),
            initial.classes(),
            initial.parts()
        )));
    }
    for inst in dataset.instances() {
        inst.validate(dataset.classes(), initial.hash_bits())?;
    }
    let mut trainer = Trainer::new(initial, dataset.prior().to_vec(), loss, config)?;
    for _ in 0..config.passes {
        trainer.run_pass(dataset.instances(), observer)?;
    }
    trainer.finish()
}
