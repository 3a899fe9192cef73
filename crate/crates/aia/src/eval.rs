//! Test-set evaluation of an acquisition strategy.

use std::io::Write;

use aia_core::domain::combined_loss;
use aia_core::engine::{run_selector, Selector, Trajectory};
use aia_core::{Dataset, Difficulty, LossConfig, ModelBundle, PartScorer, TaskPredictor};
use rayon::prelude::*;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Learned policy; `param` is λ.
    Dynamic,
    /// First-k acquisition; `param` is k.
    Static,
}

impl RowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RowKind::Dynamic => "dynamic",
            RowKind::Static => "static",
        }
    }
}

/// One operating point on the cost/accuracy plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoRow {
    pub kind: RowKind,
    pub param: f64,
    pub instances: usize,
    pub avg_fraction_parts: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub mean_loss: f64,
    /// How often each part index was acquired.
    pub histogram: Vec<u64>,
    /// Mean parts acquired, per true class (0 for classes absent from the set).
    pub class_usage: Vec<f64>,
    pub easy_usage: Option<f64>,
    pub hard_usage: Option<f64>,
}

impl ParetoRow {
    pub fn total_acquired(&self) -> u64 {
        self.histogram.iter().sum()
    }
}

/// Mean of per-class F1; a class with no true and no predicted instances
/// scores 0.
pub fn macro_f1(labels: &[usize], predicted: &[usize], classes: usize) -> f64 {
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&y, &p) in labels.iter().zip(predicted) {
        if y == p {
            tp[y] += 1;
        } else {
            fp[p] += 1;
            fn_[y] += 1;
        }
    }
    let total: f64 = (0..classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fn_[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    total / classes as f64
}

/// Runs `selector` on every instance (in parallel) and aggregates in
/// instance order.
pub fn evaluate_selector<S: Selector + Sync + ?Sized>(
    predictor: &TaskPredictor,
    selector: &S,
    loss: LossConfig,
    dataset: &Dataset,
    kind: RowKind,
    param: f64,
) -> Result<ParetoRow> {
    if dataset.parts() != predictor.parts() || dataset.classes() != predictor.classes() {
        return Err(HarnessError::Config(format!(
            "data set is {}x{} (classes x parts) but model is {}x{}",
            dataset.classes(),
            dataset.parts(),
            predictor.classes(),
            predictor.parts()
        )));
    }
    if dataset.is_empty() {
        return Err(HarnessError::Config(format!(
            "{}: no instances",
            dataset.name
        )));
    }
    let trajectories: Vec<Trajectory> = dataset
        .instances()
        .par_iter()
        .map(|inst| {
            let scorer = PartScorer::new(predictor, inst)?;
            run_selector(&scorer, selector)
        })
        .collect::<aia_core::Result<_>>()?;
    summarize(dataset, &trajectories, loss, kind, param)
}

fn summarize(
    dataset: &Dataset,
    trajectories: &[Trajectory],
    loss: LossConfig,
    kind: RowKind,
    param: f64,
) -> Result<ParetoRow> {
    let n = dataset.parts();
    let k = dataset.classes();
    let count = trajectories.len();
    let mut histogram = vec![0u64; n];
    let mut class_parts = vec![0usize; k];
    let mut class_count = vec![0usize; k];
    let mut easy = (0usize, 0usize);
    let mut hard = (0usize, 0usize);
    let mut labels = Vec::with_capacity(count);
    let mut predicted = Vec::with_capacity(count);
    let mut loss_sum = 0.0;
    for (inst, t) in dataset.instances().iter().zip(trajectories) {
        let acquired = t.terminal_view.len();
        for &p in t.terminal_view.observed() {
            histogram[p] += 1;
        }
        class_parts[inst.label] += acquired;
        class_count[inst.label] += 1;
        match inst.difficulty {
            Some(Difficulty::Easy) => easy = (easy.0 + acquired, easy.1 + 1),
            Some(Difficulty::Hard) => hard = (hard.0 + acquired, hard.1 + 1),
            None => {}
        }
        labels.push(inst.label);
        predicted.push(t.terminal_prediction.argmax);
        loss_sum += combined_loss(&t.terminal_prediction, inst.label, &t.terminal_view, &loss)?;
    }
    let correct = labels
        .iter()
        .zip(&predicted)
        .filter(|(a, b)| a == b)
        .count();
    let mean = |(sum, c): (usize, usize)| (c > 0).then(|| sum as f64 / c as f64);
    Ok(ParetoRow {
        kind,
        param,
        instances: count,
        avg_fraction_parts: histogram.iter().sum::<u64>() as f64 / (count * n) as f64,
        accuracy: correct as f64 / count as f64,
        macro_f1: macro_f1(&labels, &predicted, k),
        mean_loss: loss_sum / count as f64,
        histogram,
        class_usage: class_parts
            .iter()
            .zip(&class_count)
            .map(|(&s, &c)| mean((s, c)).unwrap_or(0.0))
            .collect(),
        easy_usage: mean(easy),
        hard_usage: mean(hard),
    })
}

/// The bundle's learned policy on `dataset`, scored with its own loss.
pub fn evaluate(bundle: &ModelBundle, dataset: &Dataset) -> Result<ParetoRow> {
    evaluate_selector(
        &bundle.predictor,
        &bundle.selector(),
        bundle.loss,
        dataset,
        RowKind::Dynamic,
        bundle.loss.lambda(),
    )
}

pub fn csv_header(parts: usize, classes: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "kind",
        "param",
        "avg_fraction_parts",
        "accuracy",
        "macro_f1",
        "mean_loss",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((0..parts).map(|i| format!("h{i}")));
    h.extend((0..classes).map(|c| format!("c{c}")));
    h
}

/// Writes a header and one line per row. All rows must share `n` and `K`.
pub fn write_csv<W: Write>(writer: W, rows: &[ParetoRow]) -> Result<()> {
    let Some(first) = rows.first() else {
        return Err(HarnessError::Config("no rows to write".into()));
    };
    let (n, k) = (first.histogram.len(), first.class_usage.len());
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| HarnessError::Config(format!("csv: {e}"));
    w.write_record(csv_header(n, k)).map_err(csv_err)?;
    for r in rows {
        if r.histogram.len() != n || r.class_usage.len() != k {
            return Err(HarnessError::Config(
                "rows disagree on parts or classes".into(),
            ));
        }
        let mut rec = vec![
            r.kind.as_str().to_string(),
            r.param.to_string(),
            r.avg_fraction_parts.to_string(),
            r.accuracy.to_string(),
            r.macro_f1.to_string(),
            r.mean_loss.to_string(),
        ];
        rec.extend(r.histogram.iter().map(u64::to_string));
        rec.extend(r.class_usage.iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| HarnessError::Config(format!("csv: {e}")))
}
