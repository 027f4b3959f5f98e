//! Evaluation metrics: rank correlation, linear correlation, element accuracy,
//! and the weighted composite used to summarize a run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractional (tie-averaged) ranks, 1-based.
///
/// Tied values all receive the mean of the rank positions they occupy.
pub fn ranks_tie_averaged(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());

    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average of ranks i+1..=j+1.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::input("need at least 2 observations"));
    }
    if let Some(i) = x.iter().chain(y.iter()).position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("non-finite value at index {i}")));
    }
    Ok(())
}

/// Pearson linear correlation coefficient.
///
/// Constant input is an error rather than a silent 0; a degenerate
/// evaluation should be visible.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mean_x: f64 = x.iter().sum::<f64>() / n;
    let mean_y: f64 = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(Error::input("correlation undefined for constant input"));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Spearman rank correlation: Pearson correlation of tie-averaged ranks.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let rx = ranks_tie_averaged(x);
    let ry = ranks_tie_averaged(y);
    plcc(&rx, &ry).map_err(|e| match e {
        Error::Input(msg) if msg.contains("constant") => {
            Error::input("rank correlation undefined: zero rank variance")
        }
        other => other,
    })
}

/// Fraction of indices where `pred >= threshold` agrees with
/// `label >= threshold`. The tie rule is `>=` on both sides.
pub fn accuracy(preds: &[f64], labels: &[f64], threshold: f64) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::input(format!(
            "length mismatch: {} vs {}",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::input("accuracy undefined on empty input"));
    }
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|(&p, &l)| (p >= threshold) == (l >= threshold))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Accuracy averaged per group: instances are bucketed by `groups[i]`, each
/// group's accuracy is computed, and the group accuracies are averaged.
pub fn accuracy_grouped(
    preds: &[f64],
    labels: &[f64],
    groups: &[String],
    threshold: f64,
) -> Result<f64> {
    if preds.len() != labels.len() || preds.len() != groups.len() {
        return Err(Error::input("preds, labels, and groups must align"));
    }
    if preds.is_empty() {
        return Err(Error::input("accuracy undefined on empty input"));
    }
    let mut totals: std::collections::BTreeMap<&str, (usize, usize)> =
        std::collections::BTreeMap::new();
    for ((&p, &l), g) in preds.iter().zip(labels).zip(groups) {
        let entry = totals.entry(g.as_str()).or_insert((0, 0));
        entry.1 += 1;
        if (p >= threshold) == (l >= threshold) {
            entry.0 += 1;
        }
    }
    let sum: f64 = totals.values().map(|&(hit, n)| hit as f64 / n as f64).sum();
    Ok(sum / totals.len() as f64)
}

/// Weighted composite: `0.25 * srcc + 0.25 * plcc + 0.5 * acc`.
pub fn composite(s: f64, p: f64, a: f64) -> f64 {
    0.25 * s + 0.25 * p + 0.5 * a
}

/// One evaluation run's metric summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub srcc: f64,
    pub plcc: f64,
    pub acc: f64,
    pub overall: f64,
}

impl MetricReport {
    pub fn new(srcc: f64, plcc: f64, acc: f64) -> Self {
        MetricReport {
            srcc,
            plcc,
            acc,
            overall: composite(srcc, plcc, acc),
        }
    }

    /// JSON rendering with values rounded to 6 decimals.
    pub fn to_json(&self) -> serde_json::Value {
        fn r6(v: f64) -> f64 {
            (v * 1e6).round() / 1e6
        }
        serde_json::json!({
            "srcc": r6(self.srcc),
            "plcc": r6(self.plcc),
            "acc": r6(self.acc),
            "overall": r6(self.overall),
        })
    }

    /// One table row with 6-decimal formatting.
    pub fn table_row(&self, label: &str) -> String {
        format!(
            "{label:<24} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            self.srcc, self.plcc, self.acc, self.overall
        )
    }

    pub fn table_header() -> String {
        format!(
            "{:<24} {:>10} {:>10} {:>10} {:>10}",
            "run", "srcc", "plcc", "acc", "overall"
        )
    }
}
