//! Position-aware first-token scoring for image-text alignment evaluation.
//!
//! The library projects a model's first-generated-token distribution onto a
//! configured score space, maps it to a continuous prediction by expectation,
//! and optimizes the squared gap to annotator-averaged targets with analytic
//! gradients. Around that core sit a desk-scale differentiable scorer with
//! AdamW/cosine training and low-rank adapters, prompt-disjoint k-fold data
//! management, SRCC/PLCC/accuracy/composite metrics, and a gradient-boosted
//! stacking ensemble, plus loaders for externally produced distributions.

pub mod checkpoint;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod featurize;
pub mod gbt;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod score;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use score::{
    ProjectionMode, ScoreDistribution, ScoreEntry, ScoreSpace, TaskKind, TokenDistribution,
};
