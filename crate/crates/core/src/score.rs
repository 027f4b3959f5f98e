//! First-token score projection.
//!
//! The scoring chain runs: full-vocabulary softmax over the first generated
//! token's logits, projection of that distribution onto a small ordered score
//! space, expected-value mapping to a continuous prediction, and a squared-gap
//! loss against the annotated target. [`tokenfocus_loss_grad`] differentiates
//! the whole chain analytically with respect to the vocabulary logits.
//!
//! Two projection readings are supported and kept apart deliberately:
//! [`ProjectionMode::Literal`] exponentiates the already-softmaxed
//! probabilities of the score tokens, while [`ProjectionMode::LogitRenorm`]
//! renormalizes the raw logits of the score tokens. Both are monotone in the
//! filtered logits, so they always agree on the top-ranked score entry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which annotation task a score space serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Total,
    Element,
}

/// One score label: the vocabulary token that encodes it and its numeric value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub token_id: u32,
    pub value: f64,
}

/// Ordered set of score labels onto which a vocabulary distribution is projected.
///
/// Token identifiers are always supplied by configuration; nothing here infers
/// which vocabulary entries encode "1".."5" or "0"/"1" from text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScoreSpaceRepr", into = "ScoreSpaceRepr")]
pub struct ScoreSpace {
    entries: Vec<ScoreEntry>,
    task_kind: TaskKind,
}

#[derive(Serialize, Deserialize)]
struct ScoreSpaceRepr {
    entries: Vec<ScoreEntry>,
    task_kind: TaskKind,
}

impl TryFrom<ScoreSpaceRepr> for ScoreSpace {
    type Error = Error;
    fn try_from(repr: ScoreSpaceRepr) -> Result<Self> {
        ScoreSpace::new(repr.entries, repr.task_kind)
    }
}

impl From<ScoreSpace> for ScoreSpaceRepr {
    fn from(s: ScoreSpace) -> Self {
        ScoreSpaceRepr {
            entries: s.entries,
            task_kind: s.task_kind,
        }
    }
}

impl ScoreSpace {
    /// Validates and builds a score space.
    ///
    /// Requires at least two entries, distinct token ids, distinct score
    /// values, and values sorted ascending in entry order.
    pub fn new(entries: Vec<ScoreEntry>, task_kind: TaskKind) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::input(format!(
                "score space needs at least 2 entries, got {}",
                entries.len()
            )));
        }
        for e in &entries {
            if !e.value.is_finite() {
                return Err(Error::numeric(format!(
                    "score value for token {} is not finite",
                    e.token_id
                )));
            }
        }
        for pair in entries.windows(2) {
            if pair[1].value <= pair[0].value {
                return Err(Error::input(format!(
                    "score values must be strictly ascending, got {} then {}",
                    pair[0].value, pair[1].value
                )));
            }
        }
        let mut ids: Vec<u32> = entries.iter().map(|e| e.token_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::input("duplicate token_id in score space"));
        }
        Ok(ScoreSpace { entries, task_kind })
    }

    /// Convenience constructor from `(token_id, value)` pairs.
    pub fn from_pairs(pairs: &[(u32, f64)], task_kind: TaskKind) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(token_id, value)| ScoreEntry { token_id, value })
                .collect(),
            task_kind,
        )
    }

    pub fn entries(&self) -> &[ScoreEntry] {
        &self.entries
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Smallest score value (first entry; values are ascending).
    pub fn min_value(&self) -> f64 {
        self.entries[0].value
    }

    /// Largest score value (last entry).
    pub fn max_value(&self) -> f64 {
        self.entries[self.entries.len() - 1].value
    }

    fn check_vocab(&self, vocab_size: usize) -> Result<()> {
        for e in &self.entries {
            if e.token_id as usize >= vocab_size {
                return Err(Error::input(format!(
                    "score token {} out of range for vocab size {}",
                    e.token_id, vocab_size
                )));
            }
        }
        Ok(())
    }
}

/// Logits and/or full-softmax probabilities at the first generated position.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    vocab_size: usize,
    logits: Option<Vec<f64>>,
    probabilities: Option<Vec<f64>>,
}

impl TokenDistribution {
    pub fn from_logits(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::input("logit vector must be non-empty"));
        }
        if let Some(bad) = logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!(
                "logit at index {bad} is not finite"
            )));
        }
        Ok(TokenDistribution {
            vocab_size: logits.len(),
            logits: Some(logits),
            probabilities: None,
        })
    }

    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        validate_probabilities(&probabilities)?;
        Ok(TokenDistribution {
            vocab_size: probabilities.len(),
            logits: None,
            probabilities: Some(probabilities),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn logits(&self) -> Option<&[f64]> {
        self.logits.as_deref()
    }

    pub fn probabilities(&self) -> Option<&[f64]> {
        self.probabilities.as_deref()
    }

    fn require_logits(&self) -> Result<&[f64]> {
        self.logits
            .as_deref()
            .ok_or_else(|| Error::input("token distribution has no logits"))
    }

    fn require_probabilities(&self) -> Result<&[f64]> {
        self.probabilities.as_deref().ok_or_else(|| {
            Error::input(
                "token distribution has no probabilities; apply softmax_full or supply them",
            )
        })
    }
}

fn validate_probabilities(probabilities: &[f64]) -> Result<()> {
    if probabilities.is_empty() {
        return Err(Error::input("probability vector must be non-empty"));
    }
    let mut sum = 0.0;
    for (i, &p) in probabilities.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::numeric(format!(
                "probability at index {i} is not finite"
            )));
        }
        if p < 0.0 {
            return Err(Error::input(format!(
                "probability at index {i} is negative ({p})"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!(
            "probabilities sum to {sum}, expected 1 within 1e-9"
        )));
    }
    Ok(())
}

/// Probability masses aligned with a [`ScoreSpace`]'s entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreDistribution {
    masses: Vec<f64>,
}

impl ScoreDistribution {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        validate_probabilities(&masses)?;
        Ok(ScoreDistribution { masses })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Index of the entry with maximal mass (first index on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &m) in self.masses.iter().enumerate() {
            if m > self.masses[best] {
                best = i;
            }
        }
        best
    }
}

/// The two readings of the score-space renormalization step.
///
/// `Literal` exponentiates softmax outputs a second time; `LogitRenorm`
/// applies a single softmax to the filtered raw logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    Literal,
    LogitRenorm,
}

/// Numerically stabilized softmax over a slice.
///
/// Subtracts the maximum before exponentiating; identical to the plain
/// definition in exact arithmetic.
pub fn stable_softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Full-vocabulary softmax of a logit vector; the logits are preserved.
pub fn softmax_full(dist: &TokenDistribution) -> Result<TokenDistribution> {
    let logits = dist.require_logits()?;
    let probabilities = stable_softmax(logits);
    Ok(TokenDistribution {
        vocab_size: dist.vocab_size,
        logits: Some(logits.to_vec()),
        probabilities: Some(probabilities),
    })
}

/// Projects a vocabulary distribution onto a score space.
///
/// Literal mode renormalizes `exp(p(s_i))` over the score tokens and
/// therefore requires probabilities; logit-renorm mode softmaxes the raw
/// logits of the score tokens and requires logits.
pub fn project_scores(
    dist: &TokenDistribution,
    space: &ScoreSpace,
    mode: ProjectionMode,
) -> Result<ScoreDistribution> {
    space.check_vocab(dist.vocab_size)?;
    let filtered: Vec<f64> = match mode {
        ProjectionMode::Literal => {
            let probs = dist.require_probabilities()?;
            space
                .entries()
                .iter()
                .map(|e| probs[e.token_id as usize])
                .collect()
        }
        ProjectionMode::LogitRenorm => {
            let logits = dist.require_logits()?;
            space
                .entries()
                .iter()
                .map(|e| logits[e.token_id as usize])
                .collect()
        }
    };
    ScoreDistribution::new(stable_softmax(&filtered))
}

/// Expected-value mapping from a score distribution to a continuous score.
pub fn expected_score(sd: &ScoreDistribution, space: &ScoreSpace) -> Result<f64> {
    if sd.masses().len() != space.len() {
        return Err(Error::input(format!(
            "score distribution has {} masses but space has {} entries",
            sd.masses().len(),
            space.len()
        )));
    }
    Ok(space
        .entries()
        .iter()
        .zip(sd.masses())
        .map(|(e, &m)| e.value * m)
        .sum())
}

/// Squared gap between prediction and target.
pub fn tokenfocus_loss(pred: f64, target: f64) -> Result<f64> {
    if !pred.is_finite() || !target.is_finite() {
        return Err(Error::numeric(format!(
            "loss inputs must be finite, got pred={pred}, target={target}"
        )));
    }
    Ok((pred - target) * (pred - target))
}

/// Analytic gradient of the composed loss with respect to every vocabulary logit.
///
/// The chain is softmax -> projection -> expected score -> squared gap. In
/// logit-renorm mode only the score-token logits carry gradient; in literal
/// mode the full softmax couples every logit. Writing `m` for the projected
/// masses, `yhat` for the expected score and `g_j = m_j (s_j - yhat)` for the
/// expectation's derivative with respect to the j-th filtered input, the
/// logit-renorm gradient is `2 (yhat - y) g_j` at score token j, and the
/// literal gradient propagates `g` through the full-softmax Jacobian:
/// `d yhat / d z_w = p_w (g_{j(w)} - sum_j g_j p_{t_j})` where the first term
/// only appears when `w` is score token `j(w)`.
pub fn tokenfocus_loss_grad(
    dist: &TokenDistribution,
    space: &ScoreSpace,
    mode: ProjectionMode,
    target: f64,
) -> Result<Vec<f64>> {
    if !target.is_finite() {
        return Err(Error::numeric(format!(
            "target must be finite, got {target}"
        )));
    }
    space.check_vocab(dist.vocab_size)?;
    let logits = dist.require_logits()?;
    let mut grad = vec![0.0; dist.vocab_size];

    match mode {
        ProjectionMode::LogitRenorm => {
            let filtered: Vec<f64> = space
                .entries()
                .iter()
                .map(|e| logits[e.token_id as usize])
                .collect();
            let masses = stable_softmax(&filtered);
            let yhat: f64 = space
                .entries()
                .iter()
                .zip(&masses)
                .map(|(e, &m)| e.value * m)
                .sum();
            let scale = 2.0 * (yhat - target);
            for (e, &m) in space.entries().iter().zip(&masses) {
                grad[e.token_id as usize] = scale * m * (e.value - yhat);
            }
        }
        ProjectionMode::Literal => {
            let probs = stable_softmax(logits);
            let filtered: Vec<f64> = space
                .entries()
                .iter()
                .map(|e| probs[e.token_id as usize])
                .collect();
            let masses = stable_softmax(&filtered);
            let yhat: f64 = space
                .entries()
                .iter()
                .zip(&masses)
                .map(|(e, &m)| e.value * m)
                .sum();
            let scale = 2.0 * (yhat - target);
            // g_j = d yhat / d p_{t_j}; c = sum_j g_j p_{t_j}.
            let g: Vec<f64> = space
                .entries()
                .iter()
                .zip(&masses)
                .map(|(e, &m)| m * (e.value - yhat))
                .collect();
            let c: f64 = space
                .entries()
                .iter()
                .zip(&g)
                .map(|(e, &gj)| gj * probs[e.token_id as usize])
                .sum();
            for (w, &pw) in probs.iter().enumerate() {
                grad[w] = -scale * pw * c;
            }
            for (e, &gj) in space.entries().iter().zip(&g) {
                let w = e.token_id as usize;
                grad[w] += scale * probs[w] * gj;
            }
        }
    }
    Ok(grad)
}

/// Forward pass of the full chain: logits to predicted score.
pub fn predict_from_logits(
    dist: &TokenDistribution,
    space: &ScoreSpace,
    mode: ProjectionMode,
) -> Result<f64> {
    let prepared;
    let view = match mode {
        ProjectionMode::Literal => {
            if dist.probabilities().is_some() {
                dist
            } else {
                prepared = softmax_full(dist)?;
                &prepared
            }
        }
        ProjectionMode::LogitRenorm => dist,
    };
    let sd = project_scores(view, space, mode)?;
    expected_score(&sd, space)
}
