//! Fold-prediction stacking: feature construction from records plus fold
//! predictions, and the boosted-tree meta-learner that blends them.
//!
//! Feature column order is fixed and documented by [`FeatureSchema`]:
//! `fold_pred_0..k-1`, one-hot t2i model columns (training vocabulary,
//! sorted, plus an explicit unknown column), one-hot prompt type columns
//! (plus unknown), `prompt_token_count`, `element_count`,
//! `prompt_quality_present`, `prompt_quality`. One-hot vocabularies are
//! built from the training set once and frozen for inference.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::{FoldPlan, SampleRecord};
use crate::error::{Error, Result};
use crate::gbt::{fit_gbt, predict_gbt, GbtConfig, GbtModel};

/// Rectangular named-column matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &columns {
            if !seen.insert(c) {
                return Err(Error::input(format!("duplicate column name `{c}`")));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(Error::input(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    columns.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::numeric(format!(
                    "non-finite value at row {i}, column `{}`",
                    columns[j]
                )));
            }
        }
        Ok(FeatureMatrix { columns, rows })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col]
    }

    /// Headered CSV export.
    pub fn to_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        writer
            .write_record(&self.columns)
            .map_err(|e| Error::input(format!("csv write: {e}")))?;
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writer
                .write_record(&fields)
                .map_err(|e| Error::input(format!("csv write: {e}")))?;
        }
        writer
            .flush()
            .map_err(|e| Error::input(format!("csv write: {e}")))?;
        Ok(())
    }

    /// Headered CSV import.
    pub fn from_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let columns: Vec<String> = reader
            .headers()
            .map_err(|e| Error::input(format!("csv read: {e}")))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for (i, result) in reader.records().enumerate() {
            let record = result.map_err(|e| Error::input(format!("csv read: {e}")))?;
            let mut row = Vec::with_capacity(columns.len());
            for field in record.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|e| Error::parse(i + 2, None, format!("bad number `{field}`: {e}")))?;
                row.push(v);
            }
            rows.push(row);
        }
        FeatureMatrix::new(columns, rows)
    }
}

const UNKNOWN: &str = "<unknown>";

/// Frozen featurization schema fit on the training records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub fold_count: usize,
    pub t2i_models: Vec<String>,
    pub prompt_types: Vec<String>,
}

impl FeatureSchema {
    /// Learns the categorical vocabularies from the training set.
    pub fn fit(records: &[SampleRecord], fold_count: usize) -> Result<Self> {
        if fold_count == 0 {
            return Err(Error::input("fold_count must be positive"));
        }
        let mut models: Vec<String> = records
            .iter()
            .map(|r| r.t2i_model.clone())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        models.sort();
        let mut types: Vec<String> = records
            .iter()
            .map(|r| r.prompt_type.to_string())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        types.sort();
        Ok(FeatureSchema {
            fold_count,
            t2i_models: models,
            prompt_types: types,
        })
    }

    /// The documented column order.
    pub fn column_names(&self) -> Vec<String> {
        let mut cols: Vec<String> = (0..self.fold_count)
            .map(|i| format!("fold_pred_{i}"))
            .collect();
        for m in &self.t2i_models {
            cols.push(format!("t2i_model={m}"));
        }
        cols.push(format!("t2i_model={UNKNOWN}"));
        for t in &self.prompt_types {
            cols.push(format!("prompt_type={t}"));
        }
        cols.push(format!("prompt_type={UNKNOWN}"));
        cols.push("prompt_token_count".to_string());
        cols.push("element_count".to_string());
        cols.push("prompt_quality_present".to_string());
        cols.push("prompt_quality".to_string());
        cols
    }

    /// Builds rows for `records`, pulling each record's fold-prediction
    /// vector from `fold_predictions` by sample id.
    pub fn build(
        &self,
        records: &[SampleRecord],
        fold_predictions: &BTreeMap<String, Vec<f64>>,
    ) -> Result<FeatureMatrix> {
        let columns = self.column_names();
        let mut rows = Vec::with_capacity(records.len());
        for r in records {
            let preds = fold_predictions.get(&r.sample_id).ok_or_else(|| {
                Error::input(format!(
                    "missing fold predictions for sample `{}`",
                    r.sample_id
                ))
            })?;
            if preds.len() != self.fold_count {
                return Err(Error::input(format!(
                    "sample `{}` has {} predictions, expected {}",
                    r.sample_id,
                    preds.len(),
                    self.fold_count
                )));
            }
            let mut row = Vec::with_capacity(columns.len());
            row.extend_from_slice(preds);

            let model_idx = self.t2i_models.iter().position(|m| *m == r.t2i_model);
            for i in 0..self.t2i_models.len() {
                row.push(if model_idx == Some(i) { 1.0 } else { 0.0 });
            }
            row.push(if model_idx.is_none() { 1.0 } else { 0.0 });

            let type_name = r.prompt_type.to_string();
            let type_idx = self.prompt_types.iter().position(|t| *t == type_name);
            for i in 0..self.prompt_types.len() {
                row.push(if type_idx == Some(i) { 1.0 } else { 0.0 });
            }
            row.push(if type_idx.is_none() { 1.0 } else { 0.0 });

            row.push(r.prompt_text.split_whitespace().count() as f64);
            row.push(r.elements.len() as f64);
            row.push(if r.prompt_quality.is_some() { 1.0 } else { 0.0 });
            row.push(r.prompt_quality.unwrap_or(0.0));
            rows.push(row);
        }
        FeatureMatrix::new(columns, rows)
    }
}

/// Fits a schema on `records` and builds their feature matrix in one shot.
pub fn build_features(
    records: &[SampleRecord],
    fold_predictions: &BTreeMap<String, Vec<f64>>,
    fold_count: usize,
) -> Result<(FeatureSchema, FeatureMatrix)> {
    let schema = FeatureSchema::fit(records, fold_count)?;
    let matrix = schema.build(records, fold_predictions)?;
    Ok((schema, matrix))
}

/// Anything that can score a sample record (a fold-trained scorer, or a
/// lookup over externally produced predictions).
pub trait SampleScorer {
    fn score_sample(&self, record: &SampleRecord) -> Result<f64>;
}

impl<F> SampleScorer for F
where
    F: Fn(&SampleRecord) -> Result<f64>,
{
    fn score_sample(&self, record: &SampleRecord) -> Result<f64> {
        self(record)
    }
}

/// Inputs to a blending run.
pub struct BlendInput<'a> {
    pub train_records: &'a [SampleRecord],
    pub train_targets: &'a [f64],
    pub test_records: &'a [SampleRecord],
    pub plan: &'a FoldPlan,
}

/// A fitted blend: the frozen schema, the meta-learner, and its outputs.
#[derive(Debug, Clone)]
pub struct BlendResult {
    pub schema: FeatureSchema,
    pub meta_model: GbtModel,
    /// Meta-learner predictions on the test records, in input order.
    pub test_predictions: Vec<f64>,
    /// Per-fold model predictions on the test records (row = fold).
    pub test_fold_predictions: Vec<Vec<f64>>,
}

/// Blends fold-model predictions through the boosted-tree meta-learner.
///
/// Meta-training rows give column j the fold-j model's prediction (columns
/// sorted by fold index, so the column of a sample's own fold is out-of-fold
/// by construction). Test rows fill every prediction column with the mean of
/// all k fold models' predictions, the fold-averaged "bagging" component.
pub fn blend_predictions(
    input: &BlendInput<'_>,
    train_pred_cols: &[Vec<f64>],
    test_pred_cols: &[Vec<f64>],
    cfg: &GbtConfig,
) -> Result<BlendResult> {
    let k = input.plan.k;
    if k < 2 {
        return Err(Error::input("blending needs k >= 2 folds"));
    }
    if train_pred_cols.len() != k || test_pred_cols.len() != k {
        return Err(Error::input(format!(
            "expected {k} prediction columns, got {} train / {} test",
            train_pred_cols.len(),
            test_pred_cols.len()
        )));
    }
    if input.train_records.len() != input.train_targets.len() {
        return Err(Error::input("train records and targets must align"));
    }
    for (f, col) in train_pred_cols.iter().enumerate() {
        if col.len() != input.train_records.len() {
            return Err(Error::input(format!(
                "train prediction column {f} misaligned"
            )));
        }
    }
    for (f, col) in test_pred_cols.iter().enumerate() {
        if col.len() != input.test_records.len() {
            return Err(Error::input(format!(
                "test prediction column {f} misaligned"
            )));
        }
    }
    for r in input.train_records {
        if !input.plan.assignment.contains_key(&r.prompt_id) {
            return Err(Error::input(format!(
                "prompt `{}` is not covered by the fold plan",
                r.prompt_id
            )));
        }
    }

    let schema = FeatureSchema::fit(input.train_records, k)?;

    let mut train_map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, r) in input.train_records.iter().enumerate() {
        let preds: Vec<f64> = (0..k).map(|f| train_pred_cols[f][i]).collect();
        train_map.insert(r.sample_id.clone(), preds);
    }
    let train_x = schema.build(input.train_records, &train_map)?;
    let meta_model = fit_gbt(&train_x, input.train_targets, cfg)?;

    let mut test_map: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, r) in input.test_records.iter().enumerate() {
        let mean: f64 = (0..k).map(|f| test_pred_cols[f][i]).sum::<f64>() / k as f64;
        test_map.insert(r.sample_id.clone(), vec![mean; k]);
    }
    let test_x = schema.build(input.test_records, &test_map)?;
    let test_predictions = predict_gbt(&meta_model, &test_x)?;

    Ok(BlendResult {
        schema,
        meta_model,
        test_predictions,
        test_fold_predictions: test_pred_cols.to_vec(),
    })
}

/// Runs one scorer per fold over the train and test records, then blends.
pub fn blend<S: SampleScorer>(
    input: &BlendInput<'_>,
    fold_models: &[S],
    cfg: &GbtConfig,
) -> Result<BlendResult> {
    if fold_models.len() != input.plan.k {
        return Err(Error::input(format!(
            "expected one scorer per fold ({}), got {}",
            input.plan.k,
            fold_models.len()
        )));
    }
    let score_all = |records: &[SampleRecord]| -> Result<Vec<Vec<f64>>> {
        fold_models
            .iter()
            .map(|m| records.iter().map(|r| m.score_sample(r)).collect())
            .collect()
    };
    let train_cols = score_all(input.train_records)?;
    let test_cols = score_all(input.test_records)?;
    blend_predictions(input, &train_cols, &test_cols, cfg)
}
