//! Training configuration, the warmup/cosine schedule, and AdamW.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::ProjectionMode;

const ADAM_EPS: f64 = 1e-8;

/// Optimizer and run settings for the miniature scorer.
///
/// Defaults carry the reference training recipe: AdamW with betas 0.9/0.95,
/// weight decay 0.05, base lr 1e-4 against encoder lr 1e-5 (two parameter
/// groups), global batch 64, 200 warmup steps into cosine decay, seed 1234,
/// 3 epochs. `total_steps == 0` means "derive from epochs and dataset size"
/// at the start of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub base_lr: f64,
    pub encoder_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub epochs: usize,
    pub seed: u64,
    pub projection_mode: ProjectionMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            base_lr: 1e-4,
            encoder_lr: 1e-5,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.95,
            batch_size: 64,
            warmup_steps: 200,
            total_steps: 0,
            epochs: 3,
            seed: 1234,
            projection_mode: ProjectionMode::Literal,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("base_lr", self.base_lr),
            ("encoder_lr", self.encoder_lr),
            ("weight_decay", self.weight_decay),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::input(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0 < b && b < 1.0) {
                return Err(Error::input(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::input("batch_size must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::input("epochs must be positive"));
        }
        if self.total_steps > 0 && self.warmup_steps > self.total_steps {
            return Err(Error::input(format!(
                "warmup_steps ({}) exceeds total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        Ok(())
    }

    /// Schedule length for `n_samples`: derives `epochs * ceil(n / batch)`
    /// when `total_steps` is unset.
    pub fn schedule_steps(&self, n_samples: usize) -> usize {
        if self.total_steps > 0 {
            self.total_steps
        } else {
            self.epochs * n_samples.div_ceil(self.batch_size)
        }
    }
}

/// Schedule multiplier in [0, 1]: linear warmup from the (step+1)/warmup
/// convention, then cosine decay to zero at `total_steps`.
pub fn schedule_multiplier(step: usize, warmup_steps: usize, total_steps: usize) -> Result<f64> {
    if step > total_steps {
        return Err(Error::input(format!(
            "step {step} out of schedule range 0..={total_steps}"
        )));
    }
    if step < warmup_steps {
        return Ok((step + 1) as f64 / warmup_steps as f64);
    }
    if total_steps == warmup_steps {
        return Ok(0.0);
    }
    let t = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    Ok(0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

/// Learning rate for one parameter group at `step`.
pub fn cosine_lr(step: usize, group_base: f64, cfg: &TrainingConfig) -> Result<f64> {
    if cfg.total_steps == 0 {
        return Err(Error::input("cosine_lr needs total_steps > 0"));
    }
    Ok(group_base * schedule_multiplier(step, cfg.warmup_steps, cfg.total_steps)?)
}

/// First/second-moment accumulators for one parameter group.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    /// Fresh state with accumulators shaped like the given tensors.
    pub fn for_shapes(tensors: &[&[f64]]) -> Self {
        OptimizerState {
            m: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            v: tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One AdamW update over a parameter group.
///
/// Decoupled weight decay is applied first (`p -= lr * wd * p`), then the
/// bias-corrected moment update. The state's step counter advances once per
/// call.
pub fn adamw_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut OptimizerState,
    lr: f64,
    cfg: &TrainingConfig,
) -> Result<()> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::input(format!(
            "lr must be finite and >= 0, got {lr}"
        )));
    }
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::input(
            "parameter/gradient/state tensor counts differ",
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::input(format!("shape mismatch in tensor {i}")));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("non-finite gradient in tensor {i}")));
        }
    }

    let t = state.step + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for j in 0..p.len() {
            p[j] -= lr * cfg.weight_decay * p[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    state.step = t;
    Ok(())
}
