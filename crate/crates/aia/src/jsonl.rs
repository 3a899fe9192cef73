//! Line-delimited JSON data sets.
//!
//! Each line holds one instance:
//!
//! ```text
//! {"id": "r1", "label": 2, "difficulty": "hard", "parts": [[[17, 1.0], [4, 0.5]], []]}
//! ```
//!
//! Instead of `parts`, a line may carry `"sentences": ["...", ...]`, which
//! are featurized with [`text_to_parts`](crate::text::text_to_parts).
//! `difficulty` is optional.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use aia_core::domain::FeatureBag;
use aia_core::{Dataset, Difficulty, PartedInstance};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::text::text_to_parts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum DifficultyTag {
    Easy,
    Hard,
}

impl From<DifficultyTag> for Difficulty {
    fn from(d: DifficultyTag) -> Self {
        match d {
            DifficultyTag::Easy => Difficulty::Easy,
            DifficultyTag::Hard => Difficulty::Hard,
        }
    }
}

impl From<Difficulty> for DifficultyTag {
    fn from(d: Difficulty) -> Self {
        match d {
            Difficulty::Easy => DifficultyTag::Easy,
            Difficulty::Hard => DifficultyTag::Hard,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    difficulty: Option<DifficultyTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parts: Option<Vec<FeatureBag>>,
    #[serde(default, skip_serializing)]
    sentences: Option<Vec<String>>,
}

/// Reads instances from `reader`. Text lines are hashed with `hash_bits`.
/// With `classes` unset the class count is one past the largest label.
pub fn read_jsonl<R: BufRead>(
    reader: R,
    name: &str,
    hash_bits: u32,
    classes: Option<usize>,
) -> Result<Dataset> {
    let mut instances = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| HarnessError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| HarnessError::Parse {
            line: line_no,
            message,
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let parts = match (rec.parts, rec.sentences) {
            (Some(p), None) => p,
            (None, Some(s)) => {
                text_to_parts(&s, hash_bits).map_err(|e| parse_err(e.to_string()))?
            }
            _ => {
                return Err(parse_err(
                    "expected exactly one of `parts` or `sentences`".into(),
                ))
            }
        };
        let mut inst =
            PartedInstance::new(rec.id, rec.label, parts).map_err(|e| parse_err(e.to_string()))?;
        inst.difficulty = rec.difficulty.map(Into::into);
        if let Some(first) = instances.first() {
            let first: &PartedInstance = first;
            if first.num_parts() != inst.num_parts() {
                return Err(parse_err(format!(
                    "{} parts, earlier lines have {}",
                    inst.num_parts(),
                    first.num_parts()
                )));
            }
        }
        if let Some(k) = classes {
            inst.validate(k, hash_bits)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        instances.push(inst);
    }
    if instances.is_empty() {
        return Err(HarnessError::Config(format!("{name}: no instances")));
    }
    Ok(match classes {
        Some(k) => {
            let parts = instances[0].num_parts();
            Dataset::new(name, k, parts, instances)?
        }
        None => Dataset::from_instances(name, instances)?,
    })
}

pub fn load_jsonl(path: &Path, hash_bits: u32, classes: Option<usize>) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_jsonl(BufReader::new(file), &name, hash_bits, classes)
}

pub fn write_jsonl<W: Write>(mut writer: W, dataset: &Dataset) -> std::io::Result<()> {
    for inst in dataset.instances() {
        let rec = Record {
            id: inst.id.clone(),
            label: inst.label,
            difficulty: inst.difficulty.map(Into::into),
            parts: Some(inst.parts.clone()),
            sentences: None,
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_jsonl(BufWriter::new(file), dataset).map_err(|e| HarnessError::io(path, e))
}
