//! End-to-end training of the miniature scorer with the token-focus loss.
//!
//! Each step runs forward -> score projection -> expected value -> squared
//! gap, backpropagates through the projection analytically and through the
//! model by the chain rule, and applies AdamW with the warmup/cosine schedule.
//! The embedding/attention tensors and the head tensors form separate
//! learning-rate groups. Training is single-threaded and fully determined by
//! the config seed.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{backward, forward_cached, AdapterSet, ToyModelGrads, ToyModelParams};
use crate::optim::{adamw_step, cosine_lr, OptimizerState, TrainingConfig};
use crate::score::{
    expected_score, predict_from_logits, project_scores, softmax_full, stable_softmax,
    tokenfocus_loss, tokenfocus_loss_grad, ProjectionMode, ScoreSpace, TokenDistribution,
};

/// One training example: an input token sequence and its annotated score.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub tokens: Vec<u32>,
    pub target: f64,
}

/// Trained model plus the per-step mean batch loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModelParams,
    pub loss_trajectory: Vec<f64>,
}

/// Mean token-focus loss and mean gradients over a batch.
///
/// Exposed so the finite-difference suite can check the full analytic
/// gradient of exactly what `train` optimizes.
pub fn batch_gradients(
    params: &ToyModelParams,
    batch: &[&TrainSample],
    space: &ScoreSpace,
    mode: ProjectionMode,
) -> Result<(f64, ToyModelGrads)> {
    if batch.is_empty() {
        return Err(Error::input("batch must be non-empty"));
    }
    let mut grads = ToyModelGrads::zeros_like(params);
    let mut loss_sum = 0.0;
    for sample in batch {
        let cache = forward_cached(params, None, &sample.tokens)?;
        let dist = TokenDistribution::from_logits(cache.logits.clone())?;
        let pred = predict_from_logits(&dist, space, mode)?;
        loss_sum += tokenfocus_loss(pred, sample.target)?;
        let dlogits = tokenfocus_loss_grad(&dist, space, mode, sample.target)?;
        backward(params, &cache, &dlogits, &mut grads)?;
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((loss_sum * inv, grads))
}

/// Mean batch loss without gradients; used by the loss trajectory and tests.
pub fn batch_loss(
    params: &ToyModelParams,
    batch: &[&TrainSample],
    space: &ScoreSpace,
    mode: ProjectionMode,
) -> Result<f64> {
    let mut sum = 0.0;
    for sample in batch {
        let pred = predict(params, None, &sample.tokens, space, mode)?;
        sum += tokenfocus_loss(pred, sample.target)?;
    }
    Ok(sum / batch.len() as f64)
}

fn validate_targets(data: &[TrainSample], space: &ScoreSpace) -> Result<()> {
    if data.is_empty() {
        return Err(Error::input("training dataset must be non-empty"));
    }
    let (lo, hi) = (space.min_value(), space.max_value());
    for (i, s) in data.iter().enumerate() {
        if !(s.target >= lo && s.target <= hi) {
            return Err(Error::input(format!(
                "sample {i}: target {} outside score range [{lo}, {hi}]",
                s.target
            )));
        }
    }
    Ok(())
}

struct GroupedOptimizer {
    encoder: OptimizerState,
    head: OptimizerState,
}

impl GroupedOptimizer {
    fn new(params: &ToyModelParams) -> Self {
        GroupedOptimizer {
            encoder: OptimizerState::for_shapes(&[&params.embedding, &params.attn_query]),
            head: OptimizerState::for_shapes(&[&params.w1, &params.b1, &params.w2, &params.b2]),
        }
    }
}

fn apply_update(
    params: &mut ToyModelParams,
    grads: &ToyModelGrads,
    opt: &mut GroupedOptimizer,
    step: usize,
    cfg: &TrainingConfig,
) -> Result<()> {
    let lr_encoder = cosine_lr(step, cfg.encoder_lr, cfg)?;
    let lr_head = cosine_lr(step, cfg.base_lr, cfg)?;
    {
        let ToyModelParams {
            embedding,
            attn_query,
            ..
        } = params;
        adamw_step(
            &mut [embedding, attn_query],
            &[&grads.embedding, &grads.attn_query],
            &mut opt.encoder,
            lr_encoder,
            cfg,
        )?;
    }
    {
        let ToyModelParams { w1, b1, w2, b2, .. } = params;
        adamw_step(
            &mut [w1, b1, w2, b2],
            &[&grads.w1, &grads.b1, &grads.w2, &grads.b2],
            &mut opt.head,
            lr_head,
            cfg,
        )?;
    }
    Ok(())
}

/// Trains the scorer with the token-focus loss.
///
/// Deterministic given `cfg.seed`: epoch shuffles, batching, and updates all
/// flow from the single seeded generator.
pub fn train(
    model: ToyModelParams,
    data: &[TrainSample],
    space: &ScoreSpace,
    cfg: &TrainingConfig,
) -> Result<TrainOutcome> {
    train_with_loss(model, data, space, cfg, LossKind::TokenFocus)
}

/// Loss used by the training loop. Cross-entropy against the nearest score
/// token is kept as a comparison baseline for the token-focus objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    TokenFocus,
    CrossEntropy,
}

/// Shared trainer for the token-focus loss and the cross-entropy baseline.
pub fn train_with_loss(
    mut model: ToyModelParams,
    data: &[TrainSample],
    space: &ScoreSpace,
    cfg: &TrainingConfig,
    loss_kind: LossKind,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    validate_targets(data, space)?;

    let planned = cfg.epochs * data.len().div_ceil(cfg.batch_size);
    let schedule = TrainingConfig {
        total_steps: cfg.schedule_steps(data.len()),
        ..cfg.clone()
    };
    if planned > schedule.total_steps {
        return Err(Error::input(format!(
            "planned {planned} steps exceed total_steps {}",
            schedule.total_steps
        )));
    }
    if schedule.warmup_steps > schedule.total_steps {
        return Err(Error::input(format!(
            "warmup_steps ({}) exceeds derived total_steps ({})",
            schedule.warmup_steps, schedule.total_steps
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = GroupedOptimizer::new(&model);
    let mut trajectory = Vec::with_capacity(planned);
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut step = 0usize;

    for _ in 0..cfg.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size) {
            // The shuffle decides batch membership; reducing in index order
            // keeps losses and gradients independent of visit order.
            let mut members: Vec<usize> = chunk.to_vec();
            members.sort_unstable();
            let batch: Vec<&TrainSample> = members.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = match loss_kind {
                LossKind::TokenFocus => {
                    batch_gradients(&model, &batch, space, cfg.projection_mode)?
                }
                LossKind::CrossEntropy => cross_entropy_batch(&model, &batch, space)?,
            };
            apply_update(&mut model, &grads, &mut opt, step, &schedule)?;
            trajectory.push(loss);
            step += 1;
        }
    }

    if !model.all_finite() {
        return Err(Error::numeric("training produced non-finite parameters"));
    }
    Ok(TrainOutcome {
        model,
        loss_trajectory: trajectory,
    })
}

/// Cross-entropy baseline: one-hot target on the score token nearest the
/// annotated value, negative log-likelihood under the full softmax.
fn cross_entropy_batch(
    params: &ToyModelParams,
    batch: &[&TrainSample],
    space: &ScoreSpace,
) -> Result<(f64, ToyModelGrads)> {
    let mut grads = ToyModelGrads::zeros_like(params);
    let mut loss_sum = 0.0;
    for sample in batch {
        let cache = forward_cached(params, None, &sample.tokens)?;
        let probs = stable_softmax(&cache.logits);
        let target_entry = space
            .entries()
            .iter()
            .min_by(|a, b| {
                (a.value - sample.target)
                    .abs()
                    .partial_cmp(&(b.value - sample.target).abs())
                    .unwrap()
            })
            .expect("score space is non-empty");
        let t = target_entry.token_id as usize;
        loss_sum += -(probs[t].max(1e-300)).ln();
        // d(-log p_t)/dz = p - onehot(t).
        let mut dlogits = probs;
        dlogits[t] -= 1.0;
        backward(params, &cache, &dlogits, &mut grads)?;
    }
    let inv = 1.0 / batch.len() as f64;
    grads.scale(inv);
    Ok((loss_sum * inv, grads))
}

/// Inference: forward, project, take the expected score.
pub fn predict(
    params: &ToyModelParams,
    adapters: Option<&AdapterSet>,
    tokens: &[u32],
    space: &ScoreSpace,
    mode: ProjectionMode,
) -> Result<f64> {
    let dist = crate::model::forward(params, adapters, tokens)?;
    let prepared = match mode {
        ProjectionMode::Literal => softmax_full(&dist)?,
        ProjectionMode::LogitRenorm => dist,
    };
    let sd = project_scores(&prepared, space, mode)?;
    expected_score(&sd, space)
}
