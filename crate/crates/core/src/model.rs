//! Miniature differentiable first-token scorer.
//!
//! Token embeddings are pooled by a single learned attention query, passed
//! through a tanh feed-forward head, and projected to vocabulary logits. The
//! embedding matrix and attention query form the "encoder" parameter group;
//! the head weights form the "head" group, mirroring the two-learning-rate
//! split used when fine-tuning a vision encoder against a language decoder.
//!
//! Matrices are flat row-major `Vec<f64>`: `W[r][c] == w[r * cols + c]`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::score::{stable_softmax, TokenDistribution};

const INIT_RANGE: f64 = 0.08;

/// All weights of the miniature scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelParams {
    vocab_size: usize,
    embed_dim: usize,
    hidden_dim: usize,
    pub embedding: Vec<f64>,  // vocab_size x embed_dim
    pub attn_query: Vec<f64>, // embed_dim
    pub w1: Vec<f64>,         // embed_dim x hidden_dim
    pub b1: Vec<f64>,         // hidden_dim
    pub w2: Vec<f64>,         // hidden_dim x vocab_size
    pub b2: Vec<f64>,         // vocab_size
}

impl ToyModelParams {
    pub fn zeros(vocab_size: usize, embed_dim: usize, hidden_dim: usize) -> Result<Self> {
        if vocab_size == 0 || embed_dim == 0 || hidden_dim == 0 {
            return Err(Error::input("model dimensions must be positive"));
        }
        Ok(ToyModelParams {
            vocab_size,
            embed_dim,
            hidden_dim,
            embedding: vec![0.0; vocab_size * embed_dim],
            attn_query: vec![0.0; embed_dim],
            w1: vec![0.0; embed_dim * hidden_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim * vocab_size],
            b2: vec![0.0; vocab_size],
        })
    }

    /// Seeded uniform(-0.08, 0.08) initialization; keeps the initial
    /// softmax close to uniform.
    pub fn init(vocab_size: usize, embed_dim: usize, hidden_dim: usize, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(vocab_size, embed_dim, hidden_dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for tensor in [
            &mut params.embedding,
            &mut params.attn_query,
            &mut params.w1,
            &mut params.b1,
            &mut params.w2,
            &mut params.b2,
        ] {
            for v in tensor.iter_mut() {
                *v = rng.random_range(-INIT_RANGE..INIT_RANGE);
            }
        }
        Ok(params)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn param_count(&self) -> usize {
        self.embedding.len()
            + self.attn_query.len()
            + self.w1.len()
            + self.b1.len()
            + self.w2.len()
            + self.b2.len()
    }

    pub fn all_finite(&self) -> bool {
        [
            &self.embedding,
            &self.attn_query,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
        .iter()
        .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Additive low-rank weight delta `(alpha / r) * B * A` for an `m x n` target.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankAdapter {
    pub a: Vec<f64>, // r x n
    pub b: Vec<f64>, // m x r
    pub rank: usize,
    pub alpha: f64,
    pub out_dim: usize, // m
    pub in_dim: usize,  // n
}

impl LowRankAdapter {
    pub fn new(
        a: Vec<f64>,
        b: Vec<f64>,
        rank: usize,
        alpha: f64,
        out_dim: usize,
        in_dim: usize,
    ) -> Result<Self> {
        if rank == 0 || rank > out_dim.min(in_dim) {
            return Err(Error::input(format!(
                "rank {rank} must lie in 1..=min({out_dim}, {in_dim})"
            )));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::input(format!("alpha must be positive, got {alpha}")));
        }
        if a.len() != rank * in_dim || b.len() != out_dim * rank {
            return Err(Error::input(
                "adapter factor shapes do not match rank and dims",
            ));
        }
        Ok(LowRankAdapter {
            a,
            b,
            rank,
            alpha,
            out_dim,
            in_dim,
        })
    }

    /// Zero-initialized factors (B = 0 makes the delta vanish).
    pub fn zeros(rank: usize, alpha: f64, out_dim: usize, in_dim: usize) -> Result<Self> {
        Self::new(
            vec![0.0; rank * in_dim],
            vec![0.0; out_dim * rank],
            rank,
            alpha,
            out_dim,
            in_dim,
        )
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    /// The dense delta `(alpha / r) * B * A`.
    pub fn delta(&self) -> Vec<f64> {
        let scale = self.scaling();
        let mut delta = vec![0.0; self.out_dim * self.in_dim];
        for i in 0..self.out_dim {
            for k in 0..self.rank {
                let b_ik = self.b[i * self.rank + k];
                if b_ik == 0.0 {
                    continue;
                }
                for j in 0..self.in_dim {
                    delta[i * self.in_dim + j] += scale * b_ik * self.a[k * self.in_dim + j];
                }
            }
        }
        delta
    }
}

/// `W + (alpha / r) * B * A` for a row-major `out_dim x in_dim` weight.
pub fn apply_adapter(w: &[f64], adapter: &LowRankAdapter) -> Result<Vec<f64>> {
    if w.len() != adapter.out_dim * adapter.in_dim {
        return Err(Error::input(format!(
            "weight has {} entries, adapter targets {}x{}",
            w.len(),
            adapter.out_dim,
            adapter.in_dim
        )));
    }
    let delta = adapter.delta();
    Ok(w.iter().zip(&delta).map(|(x, d)| x + d).collect())
}

/// Optional adapters for the two head weights.
#[derive(Debug, Clone, Default)]
pub struct AdapterSet {
    pub w1: Option<LowRankAdapter>,
    pub w2: Option<LowRankAdapter>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub tokens: Vec<u32>,
    pub attn_scores: Vec<f64>,
    pub attn_weights: Vec<f64>,
    pub pooled: Vec<f64>,
    pub hidden: Vec<f64>, // post-tanh
    pub logits: Vec<f64>,
}

fn effective_head_weights(
    params: &ToyModelParams,
    adapters: Option<&AdapterSet>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut w1, mut w2) = (params.w1.clone(), params.w2.clone());
    if let Some(set) = adapters {
        if let Some(a) = &set.w1 {
            if (a.out_dim, a.in_dim) != (params.embed_dim, params.hidden_dim) {
                return Err(Error::input("w1 adapter shape mismatch"));
            }
            w1 = apply_adapter(&w1, a)?;
        }
        if let Some(a) = &set.w2 {
            if (a.out_dim, a.in_dim) != (params.hidden_dim, params.vocab_size) {
                return Err(Error::input("w2 adapter shape mismatch"));
            }
            w2 = apply_adapter(&w2, a)?;
        }
    }
    Ok((w1, w2))
}

/// Forward pass keeping activations; `forward` wraps this.
pub fn forward_cached(
    params: &ToyModelParams,
    adapters: Option<&AdapterSet>,
    tokens: &[u32],
) -> Result<ForwardCache> {
    if tokens.is_empty() {
        return Err(Error::input("token sequence must be non-empty"));
    }
    for &t in tokens {
        if t as usize >= params.vocab_size {
            return Err(Error::input(format!(
                "token {t} out of range for vocab size {}",
                params.vocab_size
            )));
        }
    }
    let (w1, w2) = effective_head_weights(params, adapters)?;
    let d = params.embed_dim;
    let h = params.hidden_dim;
    let v = params.vocab_size;

    let attn_scores: Vec<f64> = tokens
        .iter()
        .map(|&t| {
            let row = &params.embedding[t as usize * d..(t as usize + 1) * d];
            row.iter().zip(&params.attn_query).map(|(x, q)| x * q).sum()
        })
        .collect();
    let attn_weights = stable_softmax(&attn_scores);

    let mut pooled = vec![0.0; d];
    for (&t, &w) in tokens.iter().zip(&attn_weights) {
        let row = &params.embedding[t as usize * d..(t as usize + 1) * d];
        for (p, x) in pooled.iter_mut().zip(row) {
            *p += w * x;
        }
    }

    let mut hidden = vec![0.0; h];
    for j in 0..h {
        let mut u = params.b1[j];
        for i in 0..d {
            u += pooled[i] * w1[i * h + j];
        }
        hidden[j] = u.tanh();
    }

    let mut logits = vec![0.0; v];
    for j in 0..v {
        let mut z = params.b2[j];
        for i in 0..h {
            z += hidden[i] * w2[i * v + j];
        }
        logits[j] = z;
    }

    Ok(ForwardCache {
        tokens: tokens.to_vec(),
        attn_scores,
        attn_weights,
        pooled,
        hidden,
        logits,
    })
}

/// Deterministic first-token logits for a token sequence.
pub fn forward(
    params: &ToyModelParams,
    adapters: Option<&AdapterSet>,
    tokens: &[u32],
) -> Result<TokenDistribution> {
    let cache = forward_cached(params, adapters, tokens)?;
    TokenDistribution::from_logits(cache.logits)
}

/// Per-tensor gradients shaped like [`ToyModelParams`].
#[derive(Debug, Clone)]
pub struct ToyModelGrads {
    pub embedding: Vec<f64>,
    pub attn_query: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl ToyModelGrads {
    pub fn zeros_like(params: &ToyModelParams) -> Self {
        ToyModelGrads {
            embedding: vec![0.0; params.embedding.len()],
            attn_query: vec![0.0; params.attn_query.len()],
            w1: vec![0.0; params.w1.len()],
            b1: vec![0.0; params.b1.len()],
            w2: vec![0.0; params.w2.len()],
            b2: vec![0.0; params.b2.len()],
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in [
            &mut self.embedding,
            &mut self.attn_query,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ] {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }
}

/// Accumulates gradients of a scalar loss into `grads`, given the upstream
/// gradient with respect to the logits. Applies the chain rule back through
/// the head, the pooling softmax, and the embeddings.
// Row-major kernels read clearer with explicit indices.
#[allow(clippy::needless_range_loop)]
pub fn backward(
    params: &ToyModelParams,
    cache: &ForwardCache,
    dloss_dlogits: &[f64],
    grads: &mut ToyModelGrads,
) -> Result<()> {
    let d = params.embed_dim;
    let h = params.hidden_dim;
    let v = params.vocab_size;
    if dloss_dlogits.len() != v {
        return Err(Error::input("logit gradient length mismatch"));
    }

    // Head second layer.
    let mut dhidden = vec![0.0; h];
    for i in 0..h {
        for j in 0..v {
            let dz = dloss_dlogits[j];
            grads.w2[i * v + j] += cache.hidden[i] * dz;
            dhidden[i] += params.w2[i * v + j] * dz;
        }
    }
    for j in 0..v {
        grads.b2[j] += dloss_dlogits[j];
    }

    // tanh; hidden = tanh(u), du = (1 - hidden^2) dhidden.
    let dpre: Vec<f64> = cache
        .hidden
        .iter()
        .zip(&dhidden)
        .map(|(&hv, &g)| (1.0 - hv * hv) * g)
        .collect();

    // Head first layer.
    let mut dpooled = vec![0.0; d];
    for i in 0..d {
        for j in 0..h {
            grads.w1[i * h + j] += cache.pooled[i] * dpre[j];
            dpooled[i] += params.w1[i * h + j] * dpre[j];
        }
    }
    for j in 0..h {
        grads.b1[j] += dpre[j];
    }

    // Pooling: pooled = sum_j alpha_j x_j.
    let n = cache.tokens.len();
    let mut dalpha = vec![0.0; n];
    for (j, &t) in cache.tokens.iter().enumerate() {
        let row = &params.embedding[t as usize * d..(t as usize + 1) * d];
        dalpha[j] = row.iter().zip(&dpooled).map(|(x, g)| x * g).sum();
    }
    // Softmax over attention scores.
    let inner: f64 = cache
        .attn_weights
        .iter()
        .zip(&dalpha)
        .map(|(&w, &g)| w * g)
        .sum();
    let dscores: Vec<f64> = cache
        .attn_weights
        .iter()
        .zip(&dalpha)
        .map(|(&w, &g)| w * (g - inner))
        .collect();

    // Scores a_j = q . x_j; embeddings feed both pooling and scores.
    for (j, &t) in cache.tokens.iter().enumerate() {
        let base = t as usize * d;
        let alpha_j = cache.attn_weights[j];
        for i in 0..d {
            let x = params.embedding[base + i];
            grads.attn_query[i] += dscores[j] * x;
            grads.embedding[base + i] += alpha_j * dpooled[i] + dscores[j] * params.attn_query[i];
        }
    }
    Ok(())
}
