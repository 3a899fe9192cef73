use std::io::Cursor;

use aia::jsonl::{load_jsonl, read_jsonl, save_jsonl, write_jsonl};
use aia::model::{
    read_bundle, read_policy, read_predictor, write_bundle, write_policy, write_predictor,
};
use aia::text::{feature_index, text_to_parts};
use aia::HarnessError;
use aia_core::predictor::PredictorConfig;
use aia_core::{Difficulty, LossConfig, ModelBundle, Policy, TaskLoss, TaskPredictor, TrainConfig};
use proptest::prelude::*;

const FIXTURE: &str = r#"{"id": "a", "label": 1, "difficulty": "hard", "parts": [[[3, 1.0], [7, 0.5]], []]}

{"id": "b", "label": 0, "parts": [[], [[15, 2.0]]]}
"#;

#[test]
fn hand_written_fixture_parses() {
    let ds = read_jsonl(Cursor::new(FIXTURE), "fx", 4, None).unwrap();
    assert_eq!((ds.len(), ds.classes(), ds.parts()), (2, 2, 2));
    let a = &ds.instances()[0];
    assert_eq!(a.id, "a");
    assert_eq!(a.label, 1);
    assert_eq!(a.difficulty, Some(Difficulty::Hard));
    assert_eq!(a.parts[0], vec![(3, 1.0), (7, 0.5)]);
    assert!(a.parts[1].is_empty());
    assert_eq!(ds.instances()[1].difficulty, None);
}

#[test]
fn jsonl_round_trip_is_exact() {
    let ds = read_jsonl(Cursor::new(FIXTURE), "fx", 4, Some(3)).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &ds).unwrap();
    let back = read_jsonl(Cursor::new(&buf), "fx", 4, Some(3)).unwrap();
    assert_eq!(ds, back);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fx.jsonl");
    save_jsonl(&ds, &path).unwrap();
    assert_eq!(load_jsonl(&path, 4, Some(3)).unwrap(), ds);
}

#[test]
fn empty_input_is_an_error() {
    assert!(read_jsonl(Cursor::new(""), "e", 4, None).is_err());
    assert!(read_jsonl(Cursor::new("\n  \n"), "e", 4, None).is_err());
}

#[test]
fn malformed_lines_report_their_number() {
    let bad = [
        "{\"id\": \"a\", \"label\": 0, \"parts\": [[]]}\n{\"id\": \"b\", \"label\": }\n",
        "{\"id\": \"a\", \"label\": 0, \"parts\": [[]]}\n{\"id\": \"b\", \"label\": 0, \"parts\": [[], []]}\n",
        "{\"id\": \"a\", \"label\": 0, \"parts\": [[]]}\n{\"id\": \"b\", \"label\": 0, \"parts\": [[[99, 1.0]]]}\n",
        "{\"id\": \"a\", \"label\": 0, \"parts\": [[]]}\n{\"id\": \"b\", \"label\": 0, \"parts\": [[]], \"extra\": 1}\n",
        "{\"id\": \"a\", \"label\": 0, \"parts\": [[]]}\n{\"id\": \"b\", \"label\": 0}\n",
    ];
    for text in bad {
        match read_jsonl(Cursor::new(text), "m", 4, Some(2)) {
            Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 2, "{text}"),
            other => panic!("expected a parse error for {text:?}, got {other:?}"),
        }
    }
    assert!(load_jsonl(std::path::Path::new("/nonexistent/x.jsonl"), 4, None).is_err());
}

#[test]
fn sentence_lines_are_hashed() {
    let line = r#"{"id": "s", "label": 0, "sentences": ["Good movie.", "bad plot"]}"#;
    let ds = read_jsonl(Cursor::new(line), "s", 10, None).unwrap();
    let parts = &ds.instances()[0].parts;
    assert_eq!(
        parts,
        &text_to_parts(&["Good movie.", "bad plot"], 10).unwrap()
    );
    let expect: Vec<(u32, f64)> = ["good", "movie", "good_movie"]
        .iter()
        .map(|t| (feature_index(t, 10), 1.0))
        .collect();
    assert_eq!(parts[0], expect);
}

/// Independent FNV-1a 64 folded through the same mask.
fn fnv_oracle(token: &str, bits: u32) -> u32 {
    let mut h: u128 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h ^= b as u128;
        h = (h * 0x100_0000_01b3) % (1u128 << 64);
    }
    (h as u64 & ((1u64 << bits) - 1)) as u32
}

proptest! {
    #[test]
    fn hashing_matches_oracle(token in "[a-z0-9_]{0,24}", bits in 1u32..=24) {
        prop_assert_eq!(feature_index(&token, bits), fnv_oracle(&token, bits));
    }

    #[test]
    fn predictor_round_trip_is_bit_exact(
        weights in proptest::collection::vec(-1e6f64..1e6, 2 * ((1 << 3) + 4)),
        lr in 1e-6f64..1.0,
    ) {
        let mut p = TaskPredictor::new(2, 3, PredictorConfig { hash_bits: 3, learn_rate: lr }).unwrap();
        p.weights_mut().copy_from_slice(&weights);
        let mut buf = Vec::new();
        write_predictor(&mut buf, &p).unwrap();
        let q = read_predictor(Cursor::new(&buf)).unwrap();
        prop_assert_eq!(&p, &q);
        for (a, b) in p.weights().iter().zip(q.weights()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

fn sample_bundle() -> ModelBundle {
    let mut p = TaskPredictor::new(
        3,
        4,
        PredictorConfig {
            hash_bits: 5,
            learn_rate: 0.1,
        },
    )
    .unwrap();
    for (i, w) in p.weights_mut().iter_mut().enumerate() {
        *w = (i as f64 * 0.731).sin() * 1e-3;
    }
    let mut policy = Policy::new(3, 4, true, 0.01).unwrap();
    for (i, w) in policy.weights_mut().iter_mut().enumerate() {
        *w = (i as f64 * 1.37).cos() / 3.0;
    }
    let cfg = TrainConfig {
        finetune_learn_rate: Some(0.125),
        seed: 9,
        ..TrainConfig::default()
    };
    ModelBundle::new(
        p,
        policy,
        vec![0.2, 0.3, 0.5],
        LossConfig::new(0.75, TaskLoss::ZeroOne).unwrap(),
        cfg,
    )
    .unwrap()
}

#[test]
fn bundle_and_policy_round_trip() {
    let b = sample_bundle();
    let mut buf = Vec::new();
    write_bundle(&mut buf, &b).unwrap();
    assert_eq!(read_bundle(Cursor::new(&buf)).unwrap(), b);

    let mut pbuf = Vec::new();
    write_policy(&mut pbuf, &b.policy).unwrap();
    assert_eq!(read_policy(Cursor::new(&pbuf)).unwrap(), b.policy);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    aia::model::save_bundle(&path, &b).unwrap();
    assert_eq!(aia::model::load_bundle(&path).unwrap(), b);
}

#[test]
fn corrupt_models_are_rejected() {
    let b = sample_bundle();
    let mut buf = Vec::new();
    write_bundle(&mut buf, &b).unwrap();

    let mut magic = buf.clone();
    magic[0] = b'X';
    assert!(read_bundle(Cursor::new(&magic)).is_err());

    let mut version = buf.clone();
    version[4] = 99;
    assert!(read_bundle(Cursor::new(&version)).is_err());

    for cut in [0, 3, 8, buf.len() / 2, buf.len() - 1] {
        assert!(
            read_bundle(Cursor::new(&buf[..cut])).is_err(),
            "cut at {cut}"
        );
    }

    let mut trailing = buf.clone();
    trailing.push(0);
    assert!(read_bundle(Cursor::new(&trailing)).is_err());

    // A bundle is not a predictor.
    assert!(read_predictor(Cursor::new(&buf)).is_err());
}
