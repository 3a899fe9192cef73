//! A collection of parted instances sharing a class count and part count.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{PartedInstance, MAX_PARTS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    classes: usize,
    parts: usize,
    instances: Vec<PartedInstance>,
    prior: Vec<f64>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        classes: usize,
        parts: usize,
        instances: Vec<PartedInstance>,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if parts == 0 || parts > MAX_PARTS {
            return Err(Error::PartCount(parts));
        }
        let mut counts = vec![0usize; classes];
        for inst in &instances {
            if inst.num_parts() != parts {
                return Err(Error::Shape(format!(
                    "instance {} has {} parts, expected {parts}",
                    inst.id,
                    inst.num_parts()
                )));
            }
            if inst.label >= classes {
                return Err(Error::LabelOutOfRange {
                    label: inst.label,
                    classes,
                });
            }
            counts[inst.label] += 1;
        }
        let prior = if instances.is_empty() {
            vec![1.0 / classes as f64; classes]
        } else {
            let total = instances.len() as f64;
            counts.iter().map(|&c| c as f64 / total).collect()
        };
        Ok(Self {
            name: name.into(),
            classes,
            parts,
            instances,
            prior,
        })
    }

    /// Infers the class count from the largest label.
    pub fn from_instances(name: impl Into<String>, instances: Vec<PartedInstance>) -> Result<Self> {
        let first = instances.first().ok_or(Error::Empty("dataset"))?;
        let parts = first.num_parts();
        let classes = instances.iter().map(|i| i.label).max().unwrap_or(0) + 1;
        Self::new(name, classes.max(2), parts, instances)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn instances(&self) -> &[PartedInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Empirical class distribution (uniform when empty).
    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// A dataset over the first `count` instances.
    pub fn head(&self, count: usize) -> Self {
        let instances = self.instances.iter().take(count).cloned().collect();
        Self::new(self.name.clone(), self.classes, self.parts, instances)
            .expect("subset of a valid dataset")
    }
}
