use aia::eval::{evaluate_selector, write_csv};
use aia::experiment::{pretrain_shared, static_predictor, sweep_models, train_lambda};
use aia::{
    generate_synthetic, static_baseline, sweep_lambda, HarnessConfig, RowKind, Splits,
    SyntheticConfig,
};
use aia_core::engine::{AlwaysStop, FirstK};
use aia_core::predictor::pretrain;
use aia_core::{Difficulty, LossConfig, SubsetSampler, TaskLoss};

fn small_splits(seed: u64) -> Splits {
    generate_synthetic(&SyntheticConfig {
        train_size: 600,
        test_size: 300,
        hash_bits: 14,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

fn small_cfg() -> HarnessConfig {
    let mut cfg = HarnessConfig::default();
    cfg.predictor.hash_bits = 14;
    cfg
}

#[test]
fn generator_is_seeded_and_labelled() {
    let a = small_splits(3);
    assert_eq!(a, small_splits(3));
    assert_ne!(a, small_splits(4));
    let hard = a
        .train
        .instances()
        .iter()
        .filter(|i| i.difficulty == Some(Difficulty::Hard))
        .count();
    let frac = hard as f64 / a.train.len() as f64;
    assert!((0.15..0.25).contains(&frac), "hard fraction {frac}");
    assert!(a.train.instances().iter().all(|i| i.difficulty.is_some()));
}

#[test]
fn always_stop_acquires_nothing() {
    let s = small_splits(1);
    let cfg = small_cfg();
    let p = pretrain_shared(&s, &cfg).unwrap();
    let row = evaluate_selector(
        &p,
        &AlwaysStop,
        cfg.loss(1.0).unwrap(),
        &s.test,
        RowKind::Dynamic,
        1.0,
    )
    .unwrap();
    assert_eq!(row.avg_fraction_parts, 0.0);
    assert_eq!(row.total_acquired(), 0);
    assert!(row.class_usage.iter().all(|u| *u == 0.0));
}

#[test]
fn static_rows_use_exactly_k_parts() {
    let s = small_splits(2);
    let cfg = small_cfg();
    let rows = static_baseline(&s, &[1, 3, 10], &cfg).unwrap();
    let n = s.test.parts();
    for row in &rows {
        let k = row.param as usize;
        assert_eq!(row.kind, RowKind::Static);
        assert_eq!(row.avg_fraction_parts, k as f64 / n as f64);
        assert_eq!(row.total_acquired(), (k * s.test.len()) as u64);
        for (i, &h) in row.histogram.iter().enumerate() {
            assert_eq!(h, if i < k { s.test.len() as u64 } else { 0 });
        }
    }
    assert!(static_baseline(&s, &[0], &cfg).is_err());
    assert!(static_baseline(&s, &[11], &cfg).is_err());
}

#[test]
fn full_prefix_equals_full_view_training() {
    let s = small_splits(5);
    let cfg = small_cfg();
    let n = s.train.parts();
    let prefix = static_predictor(&s, n, &cfg).unwrap();
    let full = pretrain(
        &s.train,
        cfg.predictor,
        SubsetSampler::Full,
        cfg.pretrain_passes + cfg.train.passes,
        cfg.train.seed,
    )
    .unwrap();
    assert_eq!(prefix, full);
    let a = evaluate_selector(
        &prefix,
        &FirstK(n),
        cfg.loss(0.0).unwrap(),
        &s.test,
        RowKind::Static,
        n as f64,
    )
    .unwrap();
    let b = evaluate_selector(
        &full,
        &FirstK(n),
        cfg.loss(0.0).unwrap(),
        &s.test,
        RowKind::Static,
        n as f64,
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn full_view_predictor_learns_easy_instances() {
    let s = small_splits(6);
    let cfg = small_cfg();
    let n = s.train.parts();
    let p = pretrain(&s.train, cfg.predictor, SubsetSampler::Full, 4, 0).unwrap();
    let train_row = evaluate_selector(
        &p,
        &FirstK(n),
        cfg.loss(0.0).unwrap(),
        &s.train,
        RowKind::Static,
        n as f64,
    )
    .unwrap();
    assert!(
        train_row.accuracy >= 0.95,
        "train accuracy {}",
        train_row.accuracy
    );
    let easy: Vec<_> = s
        .test
        .instances()
        .iter()
        .filter(|i| i.difficulty == Some(Difficulty::Easy))
        .cloned()
        .collect();
    let easy = aia_core::Dataset::new("easy", s.test.classes(), n, easy).unwrap();
    let row = evaluate_selector(
        &p,
        &FirstK(n),
        cfg.loss(0.0).unwrap(),
        &easy,
        RowKind::Static,
        n as f64,
    )
    .unwrap();
    assert!(row.accuracy >= 0.95, "easy accuracy {}", row.accuracy);
}

#[test]
fn sweep_rows_are_consistent_and_deterministic() {
    let s = small_splits(7);
    let cfg = small_cfg();
    let rows = sweep_lambda(&s, &[0.5], &cfg).unwrap();
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(row.kind, RowKind::Dynamic);
    assert_eq!(row.param, 0.5);
    assert_eq!(row.instances, s.test.len());
    let n = s.test.parts();
    assert_eq!(
        row.avg_fraction_parts,
        row.total_acquired() as f64 / (n * s.test.len()) as f64
    );
    assert!(row.easy_usage.is_some() && row.hard_usage.is_some());

    let mut a = Vec::new();
    let mut b = Vec::new();
    write_csv(&mut a, &rows).unwrap();
    write_csv(&mut b, &sweep_lambda(&s, &[0.5], &cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("dynamic,"));
    assert!(sweep_lambda(&s, &[], &cfg).is_err());
    assert!(sweep_lambda(&s, &[-1.0], &cfg).is_err());
}

#[test]
fn prohibitive_lambda_stops_immediately() {
    let s = small_splits(8);
    let mut cfg = small_cfg();
    cfg.task_loss = TaskLoss::ZeroOne;
    let lambda = s.train.parts() as f64 + 1.0;
    let pre = pretrain_shared(&s, &cfg).unwrap();
    let bundle = train_lambda(&s, &pre, lambda, &cfg).unwrap();
    let row = aia::evaluate(&bundle, &s.test).unwrap();
    assert!(
        row.avg_fraction_parts < 0.05,
        "fraction {}",
        row.avg_fraction_parts
    );
    assert_eq!(
        bundle.loss,
        LossConfig::new(lambda, TaskLoss::ZeroOne).unwrap()
    );
}

#[test]
fn larger_lambda_never_buys_more_on_average() {
    let s = small_splits(9);
    let cfg = small_cfg();
    let rows: Vec<_> = sweep_models(&s, &[0.0, 4.0], &cfg)
        .unwrap()
        .into_iter()
        .map(|(_, r)| r)
        .collect();
    assert!(rows[1].avg_fraction_parts <= rows[0].avg_fraction_parts);
}
