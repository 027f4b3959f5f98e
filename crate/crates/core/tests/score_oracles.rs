//! Independent oracles for the projection chain and its gradients.
//!
//! The brute-force oracles below recompute everything from first principles
//! (plain exp/normalize without stabilization, explicit two-stage
//! composition, central finite differences) and never call the library's
//! projection internals beyond the public entry points under test.

use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tokenfocus_core::score::{
    expected_score, project_scores, softmax_full, tokenfocus_loss, tokenfocus_loss_grad,
    ProjectionMode, ScoreSpace, TaskKind, TokenDistribution,
};

/// Plain softmax without max-subtraction.
fn oracle_softmax(values: &[f64]) -> Vec<f64> {
    let exps: Vec<f64> = values.iter().map(|&v| v.exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// One-stage oracle: softmax over the raw logits of the score tokens.
fn oracle_logit_renorm(logits: &[f64], token_ids: &[u32]) -> Vec<f64> {
    let filtered: Vec<f64> = token_ids.iter().map(|&t| logits[t as usize]).collect();
    oracle_softmax(&filtered)
}

/// Two-stage oracle: full softmax, then exp/normalize of the score-token
/// probabilities.
fn oracle_literal(logits: &[f64], token_ids: &[u32]) -> Vec<f64> {
    let probs = oracle_softmax(logits);
    let filtered: Vec<f64> = token_ids.iter().map(|&t| probs[t as usize]).collect();
    oracle_softmax(&filtered)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Random (vocab, score-token, logits) configuration.
fn random_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<u32>, Vec<f64>) {
    let vocab = rng.random_range(4..=32usize);
    let k = rng.random_range(2..=5usize.min(vocab));
    let mut ids: Vec<u32> = (0..vocab as u32).collect();
    for i in (1..ids.len()).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    ids.truncate(k);
    ids.sort_unstable();
    let logits: Vec<f64> = (0..vocab).map(|_| rng.random_range(-4.0..4.0)).collect();
    let mut values: Vec<f64> = (0..k)
        .map(|i| i as f64 + rng.random_range(0.0..0.5))
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (logits, ids, values)
}

#[test]
fn projection_matches_brute_force_on_1000_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        let (logits, ids, values) = random_case(&mut rng);
        let pairs: Vec<(u32, f64)> = ids.iter().cloned().zip(values.iter().cloned()).collect();
        let space = ScoreSpace::from_pairs(&pairs, TaskKind::Total).unwrap();
        let dist = TokenDistribution::from_logits(logits.clone()).unwrap();
        let with_probs = softmax_full(&dist).unwrap();

        let got_renorm = project_scores(&dist, &space, ProjectionMode::LogitRenorm).unwrap();
        let want_renorm = oracle_logit_renorm(&logits, &ids);
        for (g, w) in got_renorm.masses().iter().zip(&want_renorm) {
            assert!((g - w).abs() < 1e-12, "case {case}: renorm {g} vs {w}");
        }

        let got_literal = project_scores(&with_probs, &space, ProjectionMode::Literal).unwrap();
        let want_literal = oracle_literal(&logits, &ids);
        for (g, w) in got_literal.masses().iter().zip(&want_literal) {
            assert!((g - w).abs() < 1e-12, "case {case}: literal {g} vs {w}");
        }

        // Both modes are monotone transforms of the filtered logits, so the
        // top-ranked entry must agree.
        assert_eq!(
            argmax(got_renorm.masses()),
            argmax(got_literal.masses()),
            "case {case}: argmax disagreement"
        );

        // Masses are normalized in both modes.
        for masses in [got_renorm.masses(), got_literal.masses()] {
            let sum: f64 = masses.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}

/// Composed loss as a pure function of the logits, for finite differences.
fn composed_loss(logits: &[f64], space: &ScoreSpace, mode: ProjectionMode, target: f64) -> f64 {
    let dist = TokenDistribution::from_logits(logits.to_vec()).unwrap();
    let prepared = match mode {
        ProjectionMode::Literal => softmax_full(&dist).unwrap(),
        ProjectionMode::LogitRenorm => dist,
    };
    let sd = project_scores(&prepared, space, mode).unwrap();
    let pred = expected_score(&sd, space).unwrap();
    tokenfocus_loss(pred, target).unwrap()
}

fn max_grad_rel_error(
    logits: &[f64],
    space: &ScoreSpace,
    mode: ProjectionMode,
    target: f64,
) -> f64 {
    let dist = TokenDistribution::from_logits(logits.to_vec()).unwrap();
    let grad = tokenfocus_loss_grad(&dist, space, mode, target).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..logits.len() {
        let mut plus = logits.to_vec();
        plus[i] += h;
        let mut minus = logits.to_vec();
        minus[i] -= h;
        let fd = (composed_loss(&plus, space, mode, target)
            - composed_loss(&minus, space, mode, target))
            / (2.0 * h);
        let denom = grad[i].abs().max(fd.abs()).max(1e-2);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    worst
}

#[test]
fn gradient_matches_central_differences_100_cases_per_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for mode in [ProjectionMode::Literal, ProjectionMode::LogitRenorm] {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let (logits, ids, values) = random_case(&mut rng);
            let pairs: Vec<(u32, f64)> = ids.iter().cloned().zip(values.iter().cloned()).collect();
            let space = ScoreSpace::from_pairs(&pairs, TaskKind::Total).unwrap();
            let target = rng.random_range(space.min_value()..space.max_value());
            worst = worst.max(max_grad_rel_error(&logits, &space, mode, target));
        }
        assert!(
            worst <= 1e-5,
            "{mode:?}: worst relative error {worst:e} exceeds 1e-5"
        );
    }
}

#[test]
fn gradient_finite_difference_example_case() {
    // The worked projection example: vocab 5, score tokens {2, 4}.
    let space = ScoreSpace::from_pairs(&[(2, 0.0), (4, 1.0)], TaskKind::Element).unwrap();
    let logits = vec![0.0, 0.0, 2.0f64.ln(), 0.0, 3.0f64.ln()];
    for mode in [ProjectionMode::Literal, ProjectionMode::LogitRenorm] {
        let err = max_grad_rel_error(&logits, &space, mode, 1.0);
        assert!(err <= 1e-5, "{mode:?}: {err:e}");
    }
}

proptest! {
    #[test]
    fn masses_normalize_and_bound_expectation(
        logits in proptest::collection::vec(-6.0f64..6.0, 5..24),
        shift in -50.0f64..50.0,
    ) {
        let vocab = logits.len();
        let space = ScoreSpace::from_pairs(
            &[(0, 1.0), (1, 2.0), ((vocab - 1) as u32, 5.0)],
            TaskKind::Total,
        ).unwrap();
        let dist = TokenDistribution::from_logits(logits.clone()).unwrap();
        let with_probs = softmax_full(&dist).unwrap();

        for (mode, d) in [
            (ProjectionMode::LogitRenorm, &dist),
            (ProjectionMode::Literal, &with_probs),
        ] {
            let sd = project_scores(d, &space, mode).unwrap();
            let sum: f64 = sd.masses().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            let e = expected_score(&sd, &space).unwrap();
            prop_assert!(e >= space.min_value() - 1e-12);
            prop_assert!(e <= space.max_value() + 1e-12);
        }

        // Shift invariance: adding a constant to all logits leaves the
        // projected masses unchanged in both modes.
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let sdist = TokenDistribution::from_logits(shifted).unwrap();
        let swith = softmax_full(&sdist).unwrap();
        let a = project_scores(&dist, &space, ProjectionMode::LogitRenorm).unwrap();
        let b = project_scores(&sdist, &space, ProjectionMode::LogitRenorm).unwrap();
        for (x, y) in a.masses().iter().zip(b.masses()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let a = project_scores(&with_probs, &space, ProjectionMode::Literal).unwrap();
        let b = project_scores(&swith, &space, ProjectionMode::Literal).unwrap();
        for (x, y) in a.masses().iter().zip(b.masses()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn expectation_attains_bounds_only_at_point_mass(
        // Above ~16 the minority mass underflows below f64 resolution and
        // the expectation rounds onto the bound itself.
        spread in 1.0f64..15.0,
    ) {
        let space = ScoreSpace::from_pairs(&[(0, 1.0), (1, 5.0)], TaskKind::Total).unwrap();
        let dist = TokenDistribution::from_logits(vec![spread, -spread]).unwrap();
        let sd = project_scores(&dist, &space, ProjectionMode::LogitRenorm).unwrap();
        let e = expected_score(&sd, &space).unwrap();
        // Mass on the low entry is strictly below 1, so the expectation
        // stays strictly inside the bounds.
        prop_assert!(e > space.min_value());
        prop_assert!(e < space.max_value());
    }
}
