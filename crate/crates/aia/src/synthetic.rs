//! Seeded synthetic parted data.
//!
//! Every class owns a vocabulary of class words; there is also a shared
//! pool of noise words. An easy instance hides `strong_parts` strongly
//! indicative parts at uniformly random positions; a hard instance hides a
//! single weak one. All other parts are noise. Words are hashed exactly like
//! text tokens, so the same word has the same feature index at every
//! position: where an informative part sits can only be learned through the
//! part indicators and the content, never from the index itself.

use aia_core::domain::FeatureBag;
use aia_core::{Dataset, Difficulty, PartedInstance};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};
use crate::text::{check_hash_bits, feature_index};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub parts: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Informative parts of an easy instance.
    pub strong_parts: usize,
    /// Informative parts of a hard instance.
    pub weak_parts: usize,
    pub hard_fraction: f64,
    /// Chance that a word of a strong part is replaced by a noise word.
    pub noise: f64,
    /// Chance that a word of a weak part names the true class; otherwise it
    /// names a random class with the same chance, else it is noise.
    pub weak_signal: f64,
    pub words_per_part: usize,
    pub class_vocab: usize,
    pub noise_vocab: usize,
    pub hash_bits: u32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            parts: 10,
            train_size: 4000,
            test_size: 1000,
            strong_parts: 2,
            weak_parts: 1,
            hard_fraction: 0.2,
            noise: 0.2,
            weak_signal: 0.3,
            words_per_part: 6,
            class_vocab: 30,
            noise_vocab: 500,
            hash_bits: aia_core::predictor::DEFAULT_HASH_BITS,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.parts == 0 || self.parts > aia_core::domain::MAX_PARTS {
            return bad(format!("part count {} out of range", self.parts));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return bad("train and test sizes must be at least 1".into());
        }
        if self.strong_parts > self.parts || self.weak_parts > self.parts {
            return bad("more informative parts than parts".into());
        }
        for (name, p) in [
            ("hard_fraction", self.hard_fraction),
            ("noise", self.noise),
            ("weak_signal", self.weak_signal),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.weak_signal * 2.0 > 1.0 {
            return bad("weak_signal must be at most 0.5".into());
        }
        if self.words_per_part == 0 || self.class_vocab == 0 || self.noise_vocab == 0 {
            return bad("word and vocabulary counts must be at least 1".into());
        }
        check_hash_bits(self.hash_bits)
    }
}

/// Train and test sets drawn from the same distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
}

struct Vocab {
    class_words: Vec<Vec<u32>>,
    noise_words: Vec<u32>,
}

impl Vocab {
    fn new(cfg: &SyntheticConfig) -> Self {
        let h = |w: String| feature_index(&w, cfg.hash_bits);
        Self {
            class_words: (0..cfg.classes)
                .map(|c| {
                    (0..cfg.class_vocab)
                        .map(|w| h(format!("class{c}word{w}")))
                        .collect()
                })
                .collect(),
            noise_words: (0..cfg.noise_vocab)
                .map(|w| h(format!("noise{w}")))
                .collect(),
        }
    }

    fn class_word<R: Rng>(&self, rng: &mut R, class: usize) -> u32 {
        let words = &self.class_words[class];
        words[rng.gen_range(0..words.len())]
    }

    fn noise_word<R: Rng>(&self, rng: &mut R) -> u32 {
        self.noise_words[rng.gen_range(0..self.noise_words.len())]
    }
}

fn bag<R: Rng>(rng: &mut R, count: usize, mut word: impl FnMut(&mut R) -> u32) -> FeatureBag {
    (0..count).map(|_| (word(rng), 1.0)).collect()
}

fn instance<R: Rng>(
    rng: &mut R,
    cfg: &SyntheticConfig,
    vocab: &Vocab,
    id: String,
) -> Result<PartedInstance> {
    let k = cfg.classes;
    let label = rng.gen_range(0..k);
    let hard = rng.gen_bool(cfg.hard_fraction);
    let informative = if hard {
        cfg.weak_parts
    } else {
        cfg.strong_parts
    };
    let positions = sample(rng, cfg.parts, informative).into_vec();
    let mut parts = Vec::with_capacity(cfg.parts);
    for p in 0..cfg.parts {
        let b = if !positions.contains(&p) {
            bag(rng, cfg.words_per_part, |r| vocab.noise_word(r))
        } else if hard {
            bag(rng, cfg.words_per_part, |r| {
                let u: f64 = r.gen();
                if u < cfg.weak_signal {
                    vocab.class_word(r, label)
                } else if u < 2.0 * cfg.weak_signal {
                    let c = r.gen_range(0..k);
                    vocab.class_word(r, c)
                } else {
                    vocab.noise_word(r)
                }
            })
        } else {
            bag(rng, cfg.words_per_part, |r| {
                if r.gen_bool(cfg.noise) {
                    vocab.noise_word(r)
                } else {
                    vocab.class_word(r, label)
                }
            })
        };
        parts.push(b);
    }
    let difficulty = if hard {
        Difficulty::Hard
    } else {
        Difficulty::Easy
    };
    Ok(PartedInstance::new(id, label, parts)?.with_difficulty(difficulty))
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Splits> {
    cfg.validate()?;
    let vocab = Vocab::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |prefix: &str, count: usize| -> Result<Vec<PartedInstance>> {
        (0..count)
            .map(|i| instance(&mut rng, cfg, &vocab, format!("{prefix}{i}")))
            .collect()
    };
    let train = draw("train-", cfg.train_size)?;
    let test = draw("test-", cfg.test_size)?;
    Ok(Splits {
        train: Dataset::new("synthetic-train", cfg.classes, cfg.parts, train)?,
        test: Dataset::new("synthetic-test", cfg.classes, cfg.parts, test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            train_size: 50,
            test_size: 20,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn sizes_and_shapes() {
        let s = generate_synthetic(&small()).unwrap();
        assert_eq!(s.train.len(), 50);
        assert_eq!(s.test.len(), 20);
        assert_eq!(s.train.parts(), 10);
        assert_eq!(s.test.classes(), 5);
        for inst in s.train.instances() {
            assert!(inst.parts.iter().all(|b| b.len() == 6));
            assert!(inst.difficulty.is_some());
            inst.validate(5, 18).unwrap();
        }
    }

    #[test]
    fn seeded() {
        assert_eq!(
            generate_synthetic(&small()).unwrap(),
            generate_synthetic(&small()).unwrap()
        );
        let other = SyntheticConfig { seed: 1, ..small() };
        assert_ne!(
            generate_synthetic(&small()).unwrap(),
            generate_synthetic(&other).unwrap()
        );
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            SyntheticConfig {
                train_size: 0,
                ..small()
            },
            SyntheticConfig {
                test_size: 0,
                ..small()
            },
            SyntheticConfig {
                strong_parts: 11,
                ..small()
            },
            SyntheticConfig {
                noise: 1.5,
                ..small()
            },
            SyntheticConfig {
                classes: 1,
                ..small()
            },
        ] {
            assert!(generate_synthetic(&cfg).is_err());
        }
    }

    #[test]
    fn easy_instances_carry_their_class_words() {
        let cfg = SyntheticConfig {
            noise: 0.0,
            hard_fraction: 0.0,
            ..small()
        };
        let vocab = Vocab::new(&cfg);
        let s = generate_synthetic(&cfg).unwrap();
        for inst in s.train.instances() {
            let own = &vocab.class_words[inst.label];
            let informative = inst
                .parts
                .iter()
                .filter(|b| b.iter().all(|(i, _)| own.contains(i)))
                .count();
            assert!(informative >= 2);
        }
    }
}
