//! End-to-end gradient verification for the miniature scorer, the two-group
//! schedule invariant, and adapter-equivalence on a linear probe.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tokenfocus_core::model::{apply_adapter, LowRankAdapter, ToyModelParams};
use tokenfocus_core::optim::{cosine_lr, TrainingConfig};
use tokenfocus_core::score::{ProjectionMode, ScoreSpace, TaskKind};
use tokenfocus_core::train::{batch_gradients, TrainSample};

fn space() -> ScoreSpace {
    ScoreSpace::from_pairs(
        &[(0, 1.0), (1, 2.0), (2, 3.0), (3, 4.0), (4, 5.0)],
        TaskKind::Total,
    )
    .unwrap()
}

fn micro_batch() -> Vec<TrainSample> {
    vec![
        TrainSample {
            tokens: vec![3, 7, 1],
            target: 2.0,
        },
        TrainSample {
            tokens: vec![0, 4, 4, 6],
            target: 4.5,
        },
        TrainSample {
            tokens: vec![5],
            target: 1.0,
        },
    ]
}

/// Perturbs one flat parameter index across the whole model.
fn with_perturbed(params: &ToyModelParams, flat_idx: usize, delta: f64) -> ToyModelParams {
    let mut p = params.clone();
    let lens = [
        p.embedding.len(),
        p.attn_query.len(),
        p.w1.len(),
        p.b1.len(),
        p.w2.len(),
        p.b2.len(),
    ];
    let mut remaining = flat_idx;
    for (tensor, &len) in lens.iter().enumerate() {
        if remaining < len {
            match tensor {
                0 => p.embedding[remaining] += delta,
                1 => p.attn_query[remaining] += delta,
                2 => p.w1[remaining] += delta,
                3 => p.b1[remaining] += delta,
                4 => p.w2[remaining] += delta,
                _ => p.b2[remaining] += delta,
            }
            return p;
        }
        remaining -= len;
    }
    panic!("flat index out of range");
}

fn flat_grads(g: &tokenfocus_core::model::ToyModelGrads) -> Vec<f64> {
    let mut out = Vec::new();
    out.extend_from_slice(&g.embedding);
    out.extend_from_slice(&g.attn_query);
    out.extend_from_slice(&g.w1);
    out.extend_from_slice(&g.b1);
    out.extend_from_slice(&g.w2);
    out.extend_from_slice(&g.b2);
    out
}

#[test]
fn end_to_end_gradients_match_finite_differences() {
    let space = space();
    let data = micro_batch();
    let batch: Vec<&TrainSample> = data.iter().collect();
    let h = 1e-5;

    for mode in [ProjectionMode::Literal, ProjectionMode::LogitRenorm] {
        let params = ToyModelParams::init(8, 4, 5, 2718).unwrap();
        let (_, grads) = batch_gradients(&params, &batch, &space, mode).unwrap();
        let flat = flat_grads(&grads);
        let mut worst: f64 = 0.0;
        for (i, &analytic) in flat.iter().enumerate() {
            let plus = with_perturbed(&params, i, h);
            let minus = with_perturbed(&params, i, -h);
            let (lp, _) = batch_gradients(&plus, &batch, &space, mode).unwrap();
            let (lm, _) = batch_gradients(&minus, &batch, &space, mode).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-2);
            worst = worst.max((analytic - fd).abs() / denom);
        }
        assert!(
            worst <= 1e-4,
            "{mode:?}: worst end-to-end gradient error {worst:e}"
        );
    }
}

#[test]
fn group_learning_rates_keep_configured_ratio() {
    let cfg = TrainingConfig {
        base_lr: 1e-4,
        encoder_lr: 1e-5,
        warmup_steps: 200,
        total_steps: 1000,
        ..TrainingConfig::default()
    };
    let ratio = cfg.encoder_lr / cfg.base_lr;
    for step in [0, 1, 57, 199, 200, 201, 500, 999, 1000] {
        let head = cosine_lr(step, cfg.base_lr, &cfg).unwrap();
        let enc = cosine_lr(step, cfg.encoder_lr, &cfg).unwrap();
        if head == 0.0 {
            assert_eq!(enc, 0.0);
            continue;
        }
        // Both groups share one schedule multiplier; the quotient can move
        // only by rounding of the two products.
        assert!(
            (enc / head - ratio).abs() < 1e-15,
            "step {step}: ratio {} vs {ratio}",
            enc / head
        );
    }
}

/// Least-squares probe: rows of X map to targets Y through a 3x3 weight.
/// Full-matrix gradient descent and adapter-only descent at full rank must
/// reach the same minimum loss.
#[test]
fn full_rank_adapter_matches_full_matrix_training_on_linear_probe() {
    let dim = 3;
    let n = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let w_true: Vec<f64> = (0..dim * dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let y: Vec<Vec<f64>> = x.iter().map(|row| matvec(&w_true, row, dim)).collect();

    fn matvec(w: &[f64], x: &[f64], dim: usize) -> Vec<f64> {
        (0..dim)
            .map(|i| (0..dim).map(|j| w[i * dim + j] * x[j]).sum())
            .collect()
    }

    fn loss_and_grad(w: &[f64], x: &[Vec<f64>], y: &[Vec<f64>], dim: usize) -> (f64, Vec<f64>) {
        let mut loss = 0.0;
        let mut grad = vec![0.0; dim * dim];
        for (row, target) in x.iter().zip(y) {
            let pred = matvec(w, row, dim);
            for i in 0..dim {
                let err = pred[i] - target[i];
                loss += err * err;
                for j in 0..dim {
                    grad[i * dim + j] += 2.0 * err * row[j];
                }
            }
        }
        let inv = 1.0 / x.len() as f64;
        for g in grad.iter_mut() {
            *g *= inv;
        }
        (loss * inv, grad)
    }

    let w0: Vec<f64> = (0..dim * dim)
        .map(|_| rng.random_range(-0.2..0.2))
        .collect();
    let lr = 0.15;
    let steps = 4000;

    // Route 1: descend on the full matrix.
    let mut w_full = w0.clone();
    for _ in 0..steps {
        let (_, g) = loss_and_grad(&w_full, &x, &y, dim);
        for (wv, gv) in w_full.iter_mut().zip(&g) {
            *wv -= lr * gv;
        }
    }
    let (loss_full, _) = loss_and_grad(&w_full, &x, &y, dim);

    // Route 2: freeze w0, descend on full-rank adapter factors.
    let rank = dim;
    let alpha = rank as f64; // scaling 1
    let mut a: Vec<f64> = (0..rank * dim)
        .map(|_| rng.random_range(-0.2..0.2))
        .collect();
    let mut b: Vec<f64> = vec![0.0; dim * rank];
    for _ in 0..steps {
        let adapter = LowRankAdapter::new(a.clone(), b.clone(), rank, alpha, dim, dim).unwrap();
        let w_eff = apply_adapter(&w0, &adapter).unwrap();
        let (_, g) = loss_and_grad(&w_eff, &x, &y, dim);
        // dL/dB = g . A^T, dL/dA = B^T . g (scaling is 1).
        let mut gb = vec![0.0; dim * rank];
        let mut ga = vec![0.0; rank * dim];
        for i in 0..dim {
            for k in 0..rank {
                for j in 0..dim {
                    gb[i * rank + k] += g[i * dim + j] * a[k * dim + j];
                    ga[k * dim + j] += b[i * rank + k] * g[i * dim + j];
                }
            }
        }
        for (v, gv) in b.iter_mut().zip(&gb) {
            *v -= lr * gv;
        }
        for (v, gv) in a.iter_mut().zip(&ga) {
            *v -= lr * gv;
        }
    }
    let adapter = LowRankAdapter::new(a, b, rank, alpha, dim, dim).unwrap();
    let w_eff = apply_adapter(&w0, &adapter).unwrap();
    let (loss_adapter, _) = loss_and_grad(&w_eff, &x, &y, dim);

    assert!(
        loss_full < 1e-8,
        "full-matrix training failed to converge: {loss_full:e}"
    );
    assert!(
        loss_adapter < 1e-6,
        "adapter training failed to converge: {loss_adapter:e}"
    );
    assert!(
        (loss_full - loss_adapter).abs() < 1e-6,
        "losses diverge: {loss_full:e} vs {loss_adapter:e}"
    );
}
