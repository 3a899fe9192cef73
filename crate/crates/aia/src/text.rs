//! Hashed unigram and bigram featurization of sentences.
//!
//! Tokens are maximal runs of alphanumeric characters after lowercasing.
//! Each unigram `t` and each adjacent pair as `a_b` is hashed with 64-bit
//! FNV-1a over its UTF-8 bytes and masked to the low `hash_bits` bits.

use aia_core::domain::FeatureBag;

use crate::error::{HarnessError, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

pub fn feature_index(token: &str, hash_bits: u32) -> u32 {
    let mask = (1u64 << hash_bits) - 1;
    (fnv1a64(token.as_bytes()) & mask) as u32
}

pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Unigrams in order, then bigrams in order, each with weight 1.
pub fn sentence_features(sentence: &str, hash_bits: u32) -> FeatureBag {
    let tokens = tokenize(sentence);
    let mut bag: FeatureBag = tokens
        .iter()
        .map(|t| (feature_index(t, hash_bits), 1.0))
        .collect();
    for pair in tokens.windows(2) {
        let bigram = format!("{}_{}", pair[0], pair[1]);
        bag.push((feature_index(&bigram, hash_bits), 1.0));
    }
    bag
}

/// One part per sentence.
pub fn text_to_parts<S: AsRef<str>>(sentences: &[S], hash_bits: u32) -> Result<Vec<FeatureBag>> {
    if sentences.is_empty() {
        return Err(HarnessError::Config("document has no sentences".into()));
    }
    check_hash_bits(hash_bits)?;
    Ok(sentences
        .iter()
        .map(|s| sentence_features(s.as_ref(), hash_bits))
        .collect())
}

pub(crate) fn check_hash_bits(hash_bits: u32) -> Result<()> {
    if hash_bits == 0 || hash_bits > aia_core::predictor::MAX_HASH_BITS {
        return Err(HarnessError::Config(format!(
            "hash bits must be in 1..={}, got {hash_bits}",
            aia_core::predictor::MAX_HASH_BITS
        )));
    }
    Ok(())
}
