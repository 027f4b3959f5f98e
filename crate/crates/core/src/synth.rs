//! Synthetic fixtures: desk-scale datasets with known deterministic targets.
//!
//! Two generators live here. `synthetic_sequences` emits raw token sequences
//! whose target is an affine function of the mean token value, used by the
//! miniature end-to-end training experiment. `synthetic_records` emits full
//! annotation records built from a fixed word list whose FNV buckets are
//! collision-free at the record-model vocabulary size, so the fold/blend
//! pipeline can run over real prompts, featurization, and fold plans.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ElementAnnotation, ElementCategory, PromptType, SampleRecord};
use crate::error::Result;
use crate::model::ToyModelParams;
use crate::optim::TrainingConfig;
use crate::score::{ProjectionMode, ScoreSpace, TaskKind};
use crate::train::{train, TrainOutcome, TrainSample};

/// Model dimensions for the sequence-level miniature experiment.
pub const MINI_VOCAB: usize = 16;
pub const MINI_EMBED: usize = 16;
pub const MINI_HIDDEN: usize = 16;
pub const MINI_SEQ_LEN: usize = 6;

/// Model dimensions for the record-level (featurized prompt) experiments.
pub const RECORD_VOCAB: usize = 512;
pub const RECORD_EMBED: usize = 12;
pub const RECORD_HIDDEN: usize = 12;
pub const RECORD_MAX_TOKENS: usize = 48;

/// The 24 words synthetic prompts are built from. Their FNV buckets at
/// `RECORD_VOCAB` are pairwise distinct and avoid the prompt template's
/// boilerplate words (checked by a unit test below).
pub const SYNTH_WORDS: [&str; 24] = [
    "leaf00", "leaf01", "leaf02", "leaf03", "leaf04", "leaf05", "leaf06", "leaf07", "leaf08",
    "leaf09", "leaf10", "leaf11", "leaf12", "leaf13", "leaf14", "leaf15", "leaf16", "leaf17",
    "leaf18", "leaf19", "leaf20", "leaf21", "leaf22", "leaf23",
];

/// Five-point score space on the first five vocabulary entries.
pub fn miniature_space() -> ScoreSpace {
    ScoreSpace::from_pairs(
        &[(0, 1.0), (1, 2.0), (2, 3.0), (3, 4.0), (4, 5.0)],
        TaskKind::Total,
    )
    .expect("static space is valid")
}

/// Element score space: 0/1 on two fixed token ids.
pub fn element_space() -> ScoreSpace {
    ScoreSpace::from_pairs(&[(5, 0.0), (6, 1.0)], TaskKind::Element).expect("static space is valid")
}

/// Token sequences with target `lo + (hi - lo) * mean(token) / (vocab - 1)`.
pub fn synthetic_sequences(
    n: usize,
    vocab_size: usize,
    seq_len: usize,
    space: &ScoreSpace,
    seed: u64,
) -> Vec<TrainSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (space.min_value(), space.max_value());
    (0..n)
        .map(|_| {
            let tokens: Vec<u32> = (0..seq_len)
                .map(|_| rng.random_range(0..vocab_size as u32))
                .collect();
            let mean = tokens.iter().map(|&t| t as f64).sum::<f64>()
                / (seq_len as f64 * (vocab_size - 1) as f64);
            TrainSample {
                tokens,
                target: lo + (hi - lo) * mean,
            }
        })
        .collect()
}

/// Desk-scale training settings for the miniature experiments.
///
/// The optimizer family, betas, weight decay, batch size, epoch count, and
/// cosine-with-warmup shape follow the reference recipe; the learning-rate
/// magnitudes and warmup length are rescaled for a run of a few dozen steps
/// (the 10:1 head-to-encoder ratio is preserved).
pub fn miniature_training_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        base_lr: 0.05,
        encoder_lr: 0.005,
        weight_decay: 0.05,
        beta1: 0.9,
        beta2: 0.95,
        batch_size: 64,
        warmup_steps: 8,
        total_steps: 0,
        epochs: 3,
        seed,
        projection_mode: ProjectionMode::LogitRenorm,
    }
}

/// Outcome of one miniature sequence-level run.
pub struct MiniatureOutcome {
    pub outcome: TrainOutcome,
    pub eval: Vec<TrainSample>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Runs the miniature experiment: 1000 train / 200 eval sequences, three
/// epochs under [`miniature_training_config`].
pub fn run_miniature_experiment(seed: u64) -> Result<MiniatureOutcome> {
    let space = miniature_space();
    let train_data = synthetic_sequences(1000, MINI_VOCAB, MINI_SEQ_LEN, &space, seed);
    let eval_data = synthetic_sequences(200, MINI_VOCAB, MINI_SEQ_LEN, &space, seed ^ 0x5eed);
    let cfg = miniature_training_config(seed);
    let model = ToyModelParams::init(MINI_VOCAB, MINI_EMBED, MINI_HIDDEN, seed)?;

    let refs: Vec<&TrainSample> = train_data.iter().collect();
    let initial_loss = crate::train::batch_loss(&model, &refs, &space, cfg.projection_mode)?;
    let outcome = train(model, &train_data, &space, &cfg)?;
    let final_loss = crate::train::batch_loss(&outcome.model, &refs, &space, cfg.projection_mode)?;
    Ok(MiniatureOutcome {
        outcome,
        eval: eval_data,
        initial_loss,
        final_loss,
    })
}

fn word_value(word_idx: usize) -> f64 {
    word_idx as f64 / (SYNTH_WORDS.len() - 1) as f64
}

/// Synthetic annotation records over the fixed word list.
///
/// Every sample of a prompt shares the prompt text; the total score is a
/// deterministic function of the prompt's word values plus a small generator
/// bias, so a scorer reading the featurized prompt can learn it. Element
/// scores are annotator-style thirds derived from each element word's value.
pub fn synthetic_records(
    n_prompts: usize,
    samples_per_prompt: usize,
    seed: u64,
) -> Vec<SampleRecord> {
    synthetic_records_offset(n_prompts, samples_per_prompt, seed, 0)
}

/// Like [`synthetic_records`] with prompt numbering starting at `offset`,
/// so separate train/test sets get disjoint prompt and sample ids.
pub fn synthetic_records_offset(
    n_prompts: usize,
    samples_per_prompt: usize,
    seed: u64,
    offset: usize,
) -> Vec<SampleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n_prompts * samples_per_prompt);
    for p in offset..offset + n_prompts {
        let word_idx: Vec<usize> = (0..6)
            .map(|_| rng.random_range(0..SYNTH_WORDS.len()))
            .collect();
        let words: Vec<&str> = word_idx.iter().map(|&i| SYNTH_WORDS[i]).collect();
        let prompt_text = words.join(" ");
        let mean_value =
            word_idx.iter().map(|&i| word_value(i)).sum::<f64>() / word_idx.len() as f64;
        let prompt_quality = match p % 3 {
            0 => Some(0.5),
            1 => Some(0.8),
            _ => None,
        };
        for s in 0..samples_per_prompt {
            let model_bias = if s % 2 == 0 { 0.15 } else { -0.15 };
            let total_score = (1.0 + 4.0 * mean_value + model_bias).clamp(1.0, 5.0);
            let elements: Vec<ElementAnnotation> = word_idx
                .iter()
                .take(2)
                .enumerate()
                .map(|(j, &wi)| ElementAnnotation {
                    text: SYNTH_WORDS[wi].to_string(),
                    category: match j {
                        0 => ElementCategory::Object,
                        _ => ElementCategory::Attribute,
                    },
                    score: (word_value(wi) * 3.0).round() / 3.0,
                })
                .collect();
            records.push(SampleRecord {
                sample_id: format!("p{p:04}_s{s}"),
                prompt_id: format!("p{p:04}"),
                prompt_text: prompt_text.clone(),
                t2i_model: if s % 2 == 0 {
                    "synthgen-a".to_string()
                } else {
                    "synthgen-b".to_string()
                },
                prompt_type: if p % 2 == 0 {
                    PromptType::Real
                } else {
                    PromptType::Synthetic
                },
                prompt_quality,
                image_ref: format!("images/p{p:04}_s{s}.png"),
                total_score,
                elements,
            });
        }
    }
    records
}

/// Training settings for fold models over featurized synthetic records.
///
/// Featurized prompts dilute the signal words with template boilerplate, so
/// fold models get smaller batches (more steps) and proportionally higher
/// learning rates than the sequence-level run.
pub fn record_training_config(seed: u64) -> TrainingConfig {
    TrainingConfig {
        base_lr: 0.1,
        encoder_lr: 0.01,
        batch_size: 16,
        warmup_steps: 4,
        ..miniature_training_config(seed)
    }
}

/// Outcome of one 5-fold blend run on synthetic records.
pub struct FoldBlendOutcome {
    /// SRCC of each fold model's predictions on the held-out test records.
    pub fold_srcc: Vec<f64>,
    /// SRCC of the blended predictions on the same test records.
    pub blend_srcc: f64,
}

/// Runs the 5-fold miniature blend experiment: trains one scorer per fold on
/// featurized synthetic records, blends their predictions through the
/// boosted-tree meta-learner, and reports per-fold and blended test SRCC.
pub fn run_fold_blend_experiment(seed: u64) -> Result<FoldBlendOutcome> {
    use crate::dataset::{fold_view, split_folds, Task};
    use crate::ensemble::{blend, BlendInput};
    use crate::featurize::featurize_record;
    use crate::gbt::GbtConfig;
    use crate::metrics::srcc;
    use crate::train::predict;

    const K: usize = 5;
    let space = miniature_space();
    let train_records = synthetic_records(80, 5, seed);
    let test_records = synthetic_records_offset(20, 5, seed ^ 0xb1ed, 1000);
    let plan = split_folds(&train_records, K, seed)?;

    let space_ref = &space;
    let featurize = move |r: &SampleRecord| {
        featurize_record(r, Task::Total, space_ref, RECORD_VOCAB, RECORD_MAX_TOKENS)
    };

    let mut fold_models = Vec::with_capacity(K);
    for f in 0..K {
        let view = fold_view(&train_records, &plan, f)?;
        let samples: Vec<TrainSample> = view
            .train
            .iter()
            .map(|r| {
                Ok(TrainSample {
                    tokens: featurize(r)?,
                    target: r.total_score,
                })
            })
            .collect::<Result<_>>()?;
        let cfg = record_training_config(seed.wrapping_add(f as u64));
        // One initialization shared across folds: fold models differ only
        // through their training views, which keeps their prediction
        // locations aligned so the fold-mean test feature stays inside the
        // meta-learner's training distribution.
        let model = ToyModelParams::init(RECORD_VOCAB, RECORD_EMBED, RECORD_HIDDEN, seed)?;
        let outcome = train(model, &samples, &space, &cfg)?;
        fold_models.push(outcome.model);
    }

    let test_targets: Vec<f64> = test_records.iter().map(|r| r.total_score).collect();
    let mode = ProjectionMode::LogitRenorm;
    let mut fold_srcc = Vec::with_capacity(K);
    for model in &fold_models {
        let preds: Vec<f64> = test_records
            .iter()
            .map(|r| predict(model, None, &featurize(r)?, &space, mode))
            .collect::<Result<_>>()?;
        fold_srcc.push(srcc(&preds, &test_targets)?);
    }

    let train_targets: Vec<f64> = train_records.iter().map(|r| r.total_score).collect();
    let scorers: Vec<_> = fold_models
        .iter()
        .map(|m| move |r: &SampleRecord| predict(m, None, &featurize(r)?, space_ref, mode))
        .collect();
    let input = BlendInput {
        train_records: &train_records,
        train_targets: &train_targets,
        test_records: &test_records,
        plan: &plan,
    };
    let gbt_cfg = GbtConfig {
        n_rounds: 80,
        max_depth: 3,
        shrinkage: 0.1,
        min_samples_leaf: 5,
        seed,
    };
    let result = blend(&input, &scorers, &gbt_cfg)?;
    let blend_srcc = srcc(&result.test_predictions, &test_targets)?;

    Ok(FoldBlendOutcome {
        fold_srcc,
        blend_srcc,
    })
}
