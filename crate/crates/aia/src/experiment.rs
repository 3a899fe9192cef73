//! λ sweeps, the first-k baseline and audit output.

use std::io::Write;

use aia_core::engine::{train, FirstK};
use aia_core::oracle::{regret_audit, RegretAuditReport};
use aia_core::predictor::{pretrain, PredictorConfig};
use aia_core::{
    LossConfig, ModelBundle, PartedInstance, SubsetSampler, TaskLoss, TaskPredictor, TrainConfig,
};
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::eval::{evaluate, evaluate_selector, ParetoRow, RowKind};
use crate::synthetic::Splits;

/// Predictor step size used by the experiment drivers. Synthetic and text
/// parts carry dozens of active features per view, where the library
/// default of 0.5 overshoots and yields overconfident predictions.
pub const HARNESS_PREDICTOR_LEARN_RATE: f64 = 0.02;

/// Everything needed to go from raw splits to trained models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessConfig {
    pub predictor: PredictorConfig,
    pub pretrain_passes: usize,
    pub task_loss: TaskLoss,
    pub train: TrainConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            predictor: PredictorConfig {
                learn_rate: HARNESS_PREDICTOR_LEARN_RATE,
                ..PredictorConfig::default()
            },
            pretrain_passes: 2,
            task_loss: TaskLoss::LogLoss,
            train: TrainConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn loss(&self, lambda: f64) -> Result<LossConfig> {
        Ok(LossConfig::new(lambda, self.task_loss)?)
    }
}

/// Predictor pre-trained on uniformly sampled views, shared by every λ.
pub fn pretrain_shared(splits: &Splits, cfg: &HarnessConfig) -> Result<TaskPredictor> {
    Ok(pretrain(
        &splits.train,
        cfg.predictor,
        SubsetSampler::Uniform,
        cfg.pretrain_passes,
        cfg.train.seed,
    )?)
}

pub fn train_lambda(
    splits: &Splits,
    pretrained: &TaskPredictor,
    lambda: f64,
    cfg: &HarnessConfig,
) -> Result<ModelBundle> {
    Ok(train(
        &splits.train,
        pretrained.clone(),
        cfg.loss(lambda)?,
        cfg.train,
    )?)
}

/// One trained bundle and its test row per λ, in λ order.
pub fn sweep_models(
    splits: &Splits,
    lambdas: &[f64],
    cfg: &HarnessConfig,
) -> Result<Vec<(ModelBundle, ParetoRow)>> {
    if lambdas.is_empty() {
        return Err(HarnessError::Config("no lambda values".into()));
    }
    for &l in lambdas {
        cfg.loss(l)?;
    }
    let pretrained = pretrain_shared(splits, cfg)?;
    lambdas
        .par_iter()
        .map(|&lambda| {
            let bundle = train_lambda(splits, &pretrained, lambda, cfg)?;
            let row = evaluate(&bundle, &splits.test)?;
            Ok((bundle, row))
        })
        .collect()
}

pub fn sweep_lambda(
    splits: &Splits,
    lambdas: &[f64],
    cfg: &HarnessConfig,
) -> Result<Vec<ParetoRow>> {
    Ok(sweep_models(splits, lambdas, cfg)?
        .into_iter()
        .map(|(_, row)| row)
        .collect())
}

/// Predictor trained on the first `k` parts of every training example.
/// It gets as many passes as the dynamic pipeline's pre-training and
/// training combined.
pub fn static_predictor(splits: &Splits, k: usize, cfg: &HarnessConfig) -> Result<TaskPredictor> {
    let n = splits.train.parts();
    if k == 0 || k > n {
        return Err(HarnessError::Config(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    Ok(pretrain(
        &splits.train,
        cfg.predictor,
        SubsetSampler::Prefix(k),
        cfg.pretrain_passes + cfg.train.passes,
        cfg.train.seed,
    )?)
}

/// First-k rows, scored with the task loss alone.
pub fn static_baseline(
    splits: &Splits,
    ks: &[usize],
    cfg: &HarnessConfig,
) -> Result<Vec<ParetoRow>> {
    if ks.is_empty() {
        return Err(HarnessError::Config("no k values".into()));
    }
    let loss = cfg.loss(0.0)?;
    ks.par_iter()
        .map(|&k| {
            let predictor = static_predictor(splits, k, cfg)?;
            evaluate_selector(
                &predictor,
                &FirstK(k),
                loss,
                &splits.test,
                RowKind::Static,
                k as f64,
            )
        })
        .collect()
}

pub fn audit(
    sample: &[PartedInstance],
    bundle: &ModelBundle,
    slack: f64,
) -> Result<RegretAuditReport> {
    Ok(regret_audit(sample, bundle, slack)?)
}

/// Header and one row for the audit CSV.
pub fn write_audit_csv<W: Write>(writer: W, report: &RegretAuditReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let fields = report.fields();
    let csv_err = |e: csv::Error| HarnessError::Config(format!("csv: {e}"));
    w.write_record(fields.iter().map(|(name, _)| *name))
        .map_err(csv_err)?;
    w.write_record(fields.iter().map(|(_, v)| v.to_string()))
        .map_err(csv_err)?;
    w.flush()
        .map_err(|e| HarnessError::Config(format!("csv: {e}")))
}
