//! Deterministic record-to-token featurization for the miniature scorer.
//!
//! The built prompt string is split on whitespace and each word is hashed
//! (FNV-1a, 64-bit) into the model's vocabulary. No wall-clock or environment
//! entropy: the same record, task, and vocabulary always produce the same
//! token sequence.

use crate::dataset::{build_prompt, SampleRecord, Task};
use crate::error::{Error, Result};
use crate::score::ScoreSpace;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Hashes one word into the vocabulary.
pub fn hash_token(word: &str, vocab_size: usize) -> u32 {
    (fnv1a(word.as_bytes()) % vocab_size as u64) as u32
}

/// Tokenizes the record's built prompt, capped at `max_tokens` words.
pub fn featurize_record(
    record: &SampleRecord,
    task: Task,
    space: &ScoreSpace,
    vocab_size: usize,
    max_tokens: usize,
) -> Result<Vec<u32>> {
    if vocab_size == 0 {
        return Err(Error::input("vocab_size must be positive"));
    }
    if max_tokens == 0 {
        return Err(Error::input("max_tokens must be positive"));
    }
    let prompt = build_prompt(record, task, space)?;
    let tokens: Vec<u32> = prompt
        .split_whitespace()
        .take(max_tokens)
        .map(|w| hash_token(w, vocab_size))
        .collect();
    if tokens.is_empty() {
        return Err(Error::input("featurized token sequence is empty"));
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ElementAnnotation, ElementCategory, PromptType};
    use crate::score::TaskKind;

    fn record() -> SampleRecord {
        SampleRecord {
            sample_id: "s1".into(),
            prompt_id: "p1".into(),
            prompt_text: "a quiet harbor at dawn".into(),
            t2i_model: "flux-dev".into(),
            prompt_type: PromptType::Real,
            prompt_quality: None,
            image_ref: "img".into(),
            total_score: 4.0,
            elements: vec![ElementAnnotation {
                text: "harbor".into(),
                category: ElementCategory::Object,
                score: 1.0,
            }],
        }
    }

    #[test]
    fn featurize_is_deterministic_and_bounded() {
        let space = ScoreSpace::from_pairs(&[(0, 1.0), (1, 5.0)], TaskKind::Total).unwrap();
        let a = featurize_record(&record(), Task::Total, &space, 128, 64).unwrap();
        let b = featurize_record(&record(), Task::Total, &space, 128, 64).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&t| (t as usize) < 128));
        assert!(!a.is_empty());
    }

    #[test]
    fn different_tasks_differ() {
        let space = ScoreSpace::from_pairs(&[(0, 0.0), (1, 1.0)], TaskKind::Element).unwrap();
        let a = featurize_record(&record(), Task::Total, &space, 128, 64).unwrap();
        let b = featurize_record(&record(), Task::Element(0), &space, 128, 64).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn known_fnv_vector() {
        // Published FNV-1a test vector: "a" hashes to 0xaf63dc4c8601ec8c.
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
