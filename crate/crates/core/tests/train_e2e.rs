//! The miniature end-to-end experiment at operation level: loss reduction,
//! held-out rank correlation, and per-seed determinism.

use tokenfocus_core::metrics::srcc;
use tokenfocus_core::score::ProjectionMode;
use tokenfocus_core::synth::{miniature_space, run_miniature_experiment};
use tokenfocus_core::train::predict;

#[test]
fn miniature_training_cuts_loss_below_twenty_percent() {
    let out = run_miniature_experiment(1234).unwrap();
    assert!(out.initial_loss > 0.0);
    let ratio = out.final_loss / out.initial_loss;
    assert!(
        ratio < 0.2,
        "final/initial loss ratio {ratio:.4} not below 0.2 (init {:.4}, final {:.4})",
        out.initial_loss,
        out.final_loss
    );
    // 1000 samples, batch 64, 3 epochs.
    assert_eq!(out.outcome.loss_trajectory.len(), 3 * 16);
}

#[test]
fn miniature_model_ranks_held_out_samples() {
    let out = run_miniature_experiment(1234).unwrap();
    let space = miniature_space();
    let preds: Vec<f64> = out
        .eval
        .iter()
        .map(|s| {
            predict(
                &out.outcome.model,
                None,
                &s.tokens,
                &space,
                ProjectionMode::LogitRenorm,
            )
            .unwrap()
        })
        .collect();
    let targets: Vec<f64> = out.eval.iter().map(|s| s.target).collect();
    let r = srcc(&preds, &targets).unwrap();
    assert!(r >= 0.9, "held-out SRCC {r:.4} below 0.9");
    for p in preds {
        assert!((1.0..=5.0).contains(&p));
    }
}

#[test]
fn miniature_run_is_deterministic_per_seed() {
    let a = run_miniature_experiment(77).unwrap();
    let b = run_miniature_experiment(77).unwrap();
    assert_eq!(a.outcome.loss_trajectory, b.outcome.loss_trajectory);
    assert_eq!(a.outcome.model, b.outcome.model);
    assert_eq!(a.initial_loss, b.initial_loss);
    assert_eq!(a.final_loss, b.final_loss);

    let c = run_miniature_experiment(78).unwrap();
    assert_ne!(a.outcome.loss_trajectory, c.outcome.loss_trajectory);
}
