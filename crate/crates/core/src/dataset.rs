//! Annotation records, prompt construction, fold plans, and externally
//! produced first-token distributions.
//!
//! Dataset files are UTF-8 line-delimited JSON: a one-line header record
//! `{"format": ..., "version": 1}` followed by one record per line. Fold
//! assignment is prompt-ID-disjoint: every sample of a prompt lands in the
//! same fold, while generator models may overlap across folds freely.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{expected_score, stable_softmax, ProjectionMode, ScoreDistribution, ScoreSpace};

pub const DATASET_FORMAT: &str = "samples";
pub const EXTERNAL_FORMAT: &str = "external-distributions";
pub const FORMAT_VERSION: u32 = 1;

/// The one-line header that opens every line-delimited artifact file.
#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct FileHeader {
    pub format: String,
    pub version: u32,
}

impl FileHeader {
    pub fn new(format: &str) -> Self {
        FileHeader {
            format: format.to_string(),
            version: FORMAT_VERSION,
        }
    }
}

/// Whether a prompt came from a real user or was synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptType {
    Real,
    Synthetic,
}

impl fmt::Display for PromptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptType::Real => write!(f, "real"),
            PromptType::Synthetic => write!(f, "synthetic"),
        }
    }
}

/// Element category from the annotation scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementCategory {
    Object,
    Action,
    Attribute,
}

impl fmt::Display for ElementCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementCategory::Object => write!(f, "object"),
            ElementCategory::Action => write!(f, "action"),
            ElementCategory::Attribute => write!(f, "attribute"),
        }
    }
}

/// One fine-grained element with its annotator-averaged presence score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementAnnotation {
    pub text: String,
    pub category: ElementCategory,
    pub score: f64,
}

/// One image-text pair with its prompt identity, structural metadata, and
/// annotator-averaged scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub prompt_id: String,
    pub prompt_text: String,
    pub t2i_model: String,
    pub prompt_type: PromptType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_quality: Option<f64>,
    pub image_ref: String,
    pub total_score: f64,
    pub elements: Vec<ElementAnnotation>,
}

impl SampleRecord {
    /// Field-level validation; returns the offending field name on failure.
    pub fn validate(&self) -> std::result::Result<(), (String, String)> {
        if self.sample_id.is_empty() {
            return Err(("sample_id".into(), "must be non-empty".into()));
        }
        if self.prompt_id.is_empty() {
            return Err(("prompt_id".into(), "must be non-empty".into()));
        }
        if !(self.total_score >= 1.0 && self.total_score <= 5.0) {
            return Err((
                "total_score".into(),
                format!("{} outside [1, 5]", self.total_score),
            ));
        }
        if let Some(q) = self.prompt_quality {
            if !(0.0..=1.0).contains(&q) {
                return Err(("prompt_quality".into(), format!("{q} outside [0, 1]")));
            }
        }
        for (i, e) in self.elements.iter().enumerate() {
            if !(0.0..=1.0).contains(&e.score) {
                return Err((
                    format!("elements[{i}].score"),
                    format!("{} outside [0, 1]", e.score),
                ));
            }
        }
        Ok(())
    }
}

/// A positioned problem found while scanning a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseDiagnostic {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for ParseDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "line {}: field `{}`: {}", self.line, field, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

fn check_header(line: &str, line_no: usize, expected: &str) -> Option<ParseDiagnostic> {
    match serde_json::from_str::<FileHeader>(line) {
        Ok(h) if h.format == expected && h.version == FORMAT_VERSION => None,
        Ok(h) => Some(ParseDiagnostic {
            line: line_no,
            field: None,
            message: format!(
                "expected header {{\"format\":\"{expected}\",\"version\":{FORMAT_VERSION}}}, got format `{}` version {}",
                h.format, h.version
            ),
        }),
        Err(e) => Some(ParseDiagnostic {
            line: line_no,
            field: None,
            message: format!("missing or malformed header: {e}"),
        }),
    }
}

/// Scans the whole file, collecting every valid record and every diagnostic.
/// No partial records: a line either validates completely or is reported.
pub fn scan_dataset<R: BufRead>(reader: R) -> Result<(Vec<SampleRecord>, Vec<ParseDiagnostic>)> {
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    let mut header_checked = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !header_checked {
            header_checked = true;
            if let Some(d) = check_header(&line, line_no, DATASET_FORMAT) {
                diagnostics.push(d);
                break;
            }
            continue;
        }
        match serde_json::from_str::<SampleRecord>(&line) {
            Ok(record) => {
                if let Err((field, message)) = record.validate() {
                    diagnostics.push(ParseDiagnostic {
                        line: line_no,
                        field: Some(field),
                        message,
                    });
                    continue;
                }
                if !seen_ids.insert(record.sample_id.clone()) {
                    diagnostics.push(ParseDiagnostic {
                        line: line_no,
                        field: Some("sample_id".into()),
                        message: format!("duplicate sample_id `{}`", record.sample_id),
                    });
                    continue;
                }
                records.push(record);
            }
            Err(e) => diagnostics.push(ParseDiagnostic {
                line: line_no,
                field: None,
                message: format!("malformed record: {e}"),
            }),
        }
    }
    Ok((records, diagnostics))
}

/// Strict parse: errors on the first diagnostic.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Vec<SampleRecord>> {
    let (records, diagnostics) = scan_dataset(reader)?;
    if let Some(d) = diagnostics.into_iter().next() {
        return Err(Error::parse(d.line, d.field.as_deref(), d.message));
    }
    Ok(records)
}

/// Canonical single-line serialization of a record.
pub fn record_to_line(record: &SampleRecord) -> Result<String> {
    Ok(serde_json::to_string(record)?)
}

/// Writes header plus one canonical line per record.
pub fn write_dataset<W: Write>(mut w: W, records: &[SampleRecord]) -> Result<()> {
    serde_json::to_writer(&mut w, &FileHeader::new(DATASET_FORMAT))?;
    w.write_all(b"\n")?;
    for r in records {
        w.write_all(record_to_line(r)?.as_bytes())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Scoring task selector: the holistic rating or one element by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Total,
    Element(usize),
}

fn format_score_label(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        format!("{value}")
    }
}

/// Deterministic prompt template over a record's structural fields.
///
/// Field order is fixed: task instruction, allowed answer labels, generator
/// model, prompt type, optional prompt-quality block (omitted entirely when
/// absent), the user prompt, and for element tasks the element text and
/// category. The wording is a versioned artifact of this repo; golden copies
/// live under `fixtures/`.
pub fn build_prompt(record: &SampleRecord, task: Task, space: &ScoreSpace) -> Result<String> {
    let labels: Vec<String> = space
        .entries()
        .iter()
        .map(|e| format_score_label(e.value))
        .collect();
    let mut out = String::new();
    match task {
        Task::Total => {
            out.push_str("Task: rate how well the image matches the prompt overall.\n");
        }
        Task::Element(i) => {
            if i >= record.elements.len() {
                return Err(Error::input(format!(
                    "element index {i} out of range for record `{}` with {} elements",
                    record.sample_id,
                    record.elements.len()
                )));
            }
            out.push_str("Task: decide whether the element below is present in the image.\n");
        }
    }
    out.push_str(&format!(
        "Answer with exactly one of: {}.\n",
        labels.join(", ")
    ));
    out.push_str(&format!("Generator model: {}\n", record.t2i_model));
    out.push_str(&format!("Prompt type: {}\n", record.prompt_type));
    if let Some(q) = record.prompt_quality {
        out.push_str(&format!("Prompt quality: {q:.2}\n"));
    }
    out.push_str(&format!("Prompt: {}\n", record.prompt_text));
    if let Task::Element(i) = task {
        let e = &record.elements[i];
        out.push_str(&format!("Element: {} ({})\n", e.text, e.category));
    }
    out.push_str("Answer:");
    Ok(out)
}

/// Prompt-ID-disjoint assignment of records to `k` folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::input(format!("k must be >= 2, got {}", self.k)));
        }
        for (prompt, &fold) in &self.assignment {
            if fold >= self.k {
                return Err(Error::input(format!(
                    "prompt `{prompt}` assigned to fold {fold}, out of range for k={}",
                    self.k
                )));
            }
        }
        Ok(())
    }

    /// Unique-prompt count per fold.
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &fold in self.assignment.values() {
            sizes[fold] += 1;
        }
        sizes
    }
}

/// Deterministic prompt-disjoint k-fold split.
///
/// Pure function of the sorted prompt-ID set, `k`, and `seed`: prompt ids are
/// sorted, shuffled with the seeded generator, and dealt round-robin, so fold
/// sizes differ by at most one and record order never changes the plan.
pub fn split_folds(records: &[SampleRecord], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::input(format!("k must be >= 2, got {k}")));
    }
    let unique: BTreeSet<&str> = records.iter().map(|r| r.prompt_id.as_str()).collect();
    if unique.len() < k {
        return Err(Error::input(format!(
            "need at least {k} distinct prompt ids, got {}",
            unique.len()
        )));
    }
    let mut prompts: Vec<&str> = unique.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    prompts.shuffle(&mut rng);
    let assignment = prompts
        .into_iter()
        .enumerate()
        .map(|(i, p)| (p.to_string(), i % k))
        .collect();
    Ok(FoldPlan { k, assignment })
}

/// Train/eval views of one fold.
#[derive(Debug)]
pub struct FoldView<'a> {
    pub train: Vec<&'a SampleRecord>,
    pub eval: Vec<&'a SampleRecord>,
    /// Set when the view is degenerate (empty train or eval side).
    pub warning: Option<String>,
}

/// Eval = samples whose prompt maps to `fold`; train = the rest.
pub fn fold_view<'a>(
    records: &'a [SampleRecord],
    plan: &FoldPlan,
    fold: usize,
) -> Result<FoldView<'a>> {
    plan.validate()?;
    if fold >= plan.k {
        return Err(Error::input(format!(
            "fold {fold} out of range for k={}",
            plan.k
        )));
    }
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for r in records {
        match plan.assignment.get(&r.prompt_id) {
            Some(&f) if f == fold => eval.push(r),
            Some(_) => train.push(r),
            None => {
                return Err(Error::input(format!(
                    "prompt `{}` is not covered by the fold plan",
                    r.prompt_id
                )))
            }
        }
    }
    let warning = if train.is_empty() {
        Some(format!("fold {fold}: training side is empty"))
    } else if eval.is_empty() {
        Some(format!("fold {fold}: eval side is empty"))
    } else {
        None
    };
    Ok(FoldView {
        train,
        eval,
        warning,
    })
}

/// Task tag for an external distribution record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalTask {
    Total,
    Element(usize),
}

/// First-token evidence produced by an external model for one sample/task.
///
/// `score_token_probs` are full-softmax probabilities of the score tokens
/// (usable in literal mode); `score_token_logits` are raw logits (usable in
/// logit-renorm mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalDistributionRecord {
    pub sample_id: String,
    pub task: ExternalTask,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_token_probs: Option<BTreeMap<u32, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_token_logits: Option<BTreeMap<u32, f64>>,
}

/// Score-token-only distribution fragment keyed for projection.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionFragment {
    pub probs: Option<BTreeMap<u32, f64>>,
    pub logits: Option<BTreeMap<u32, f64>>,
}

impl DistributionFragment {
    /// Projects the fragment onto the score space under `mode`.
    ///
    /// Literal mode needs probabilities, logit-renorm needs logits; asking
    /// for the missing side is a mode-mismatch error.
    pub fn project(&self, space: &ScoreSpace, mode: ProjectionMode) -> Result<ScoreDistribution> {
        let map = match mode {
            ProjectionMode::Literal => self.probs.as_ref().ok_or_else(|| {
                Error::input("fragment has no score_token_probs; literal mode unavailable")
            })?,
            ProjectionMode::LogitRenorm => self.logits.as_ref().ok_or_else(|| {
                Error::input("fragment has no score_token_logits; logit-renorm mode unavailable")
            })?,
        };
        let mut filtered = Vec::with_capacity(space.len());
        for e in space.entries() {
            match map.get(&e.token_id) {
                Some(&v) => filtered.push(v),
                None => {
                    return Err(Error::input(format!(
                        "fragment missing value for score token {}",
                        e.token_id
                    )))
                }
            }
        }
        ScoreDistribution::new(stable_softmax(&filtered))
    }

    /// Projection followed by the expected-value mapping.
    pub fn expected(&self, space: &ScoreSpace, mode: ProjectionMode) -> Result<f64> {
        expected_score(&self.project(space, mode)?, space)
    }
}

fn validate_external(
    record: &ExternalDistributionRecord,
    space: &ScoreSpace,
) -> std::result::Result<(), String> {
    if record.score_token_probs.is_none() && record.score_token_logits.is_none() {
        return Err("record carries neither probabilities nor logits".into());
    }
    let space_ids: BTreeSet<u32> = space.entries().iter().map(|e| e.token_id).collect();
    if let Some(probs) = &record.score_token_probs {
        for (&t, &p) in probs {
            if !space_ids.contains(&t) {
                return Err(format!("unknown token_id {t} (not in the score space)"));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("probability {p} for token {t} outside [0, 1]"));
            }
        }
    }
    if let Some(logits) = &record.score_token_logits {
        for (&t, &z) in logits {
            if !space_ids.contains(&t) {
                return Err(format!("unknown token_id {t} (not in the score space)"));
            }
            if !z.is_finite() {
                return Err(format!("logit for token {t} is not finite"));
            }
        }
    }
    Ok(())
}

fn load_external_inner<R: BufRead>(
    reader: R,
    total_space: &ScoreSpace,
    element_space: &ScoreSpace,
) -> Result<BTreeMap<(String, ExternalTask), DistributionFragment>> {
    let mut out = BTreeMap::new();
    let mut header_checked = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !header_checked {
            header_checked = true;
            if let Some(d) = check_header(&line, line_no, EXTERNAL_FORMAT) {
                return Err(Error::parse(d.line, None, d.message));
            }
            continue;
        }
        let record: ExternalDistributionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(line_no, None, format!("malformed record: {e}")))?;
        let space = match record.task {
            ExternalTask::Total => total_space,
            ExternalTask::Element(_) => element_space,
        };
        if let Err(msg) = validate_external(&record, space) {
            return Err(Error::parse(line_no, None, msg));
        }
        let key = (record.sample_id.clone(), record.task);
        if out.contains_key(&key) {
            return Err(Error::parse(
                line_no,
                Some("sample_id"),
                format!("duplicate (sample_id, task) = (`{}`, {:?})", key.0, key.1),
            ));
        }
        out.insert(
            key,
            DistributionFragment {
                probs: record.score_token_probs,
                logits: record.score_token_logits,
            },
        );
    }
    Ok(out)
}

/// Loads an external-distribution file into fragments keyed by
/// `(sample_id, task)`. Duplicate keys and unknown token ids are errors.
pub fn load_external_distributions<R: BufRead>(
    reader: R,
    space: &ScoreSpace,
) -> Result<BTreeMap<(String, ExternalTask), DistributionFragment>> {
    load_external_inner(reader, space, space)
}

/// Mixed-task variant of [`load_external_distributions`]: total-task records
/// validate against `total_space`, element-task records against
/// `element_space`.
pub fn load_external_distributions_mixed<R: BufRead>(
    reader: R,
    total_space: &ScoreSpace,
    element_space: &ScoreSpace,
) -> Result<BTreeMap<(String, ExternalTask), DistributionFragment>> {
    load_external_inner(reader, total_space, element_space)
}

/// Writes an external-distribution file.
pub fn write_external_distributions<W: Write>(
    mut w: W,
    records: &[ExternalDistributionRecord],
) -> Result<()> {
    serde_json::to_writer(&mut w, &FileHeader::new(EXTERNAL_FORMAT))?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::TaskKind;

    pub(crate) fn record(sample: &str, prompt: &str) -> SampleRecord {
        SampleRecord {
            sample_id: sample.to_string(),
            prompt_id: prompt.to_string(),
            prompt_text: "a red fox under a maple tree".to_string(),
            t2i_model: "flux-dev".to_string(),
            prompt_type: PromptType::Real,
            prompt_quality: Some(0.8),
            image_ref: format!("images/{sample}.png"),
            total_score: 3.5,
            elements: vec![
                ElementAnnotation {
                    text: "red fox".into(),
                    category: ElementCategory::Object,
                    score: 1.0,
                },
                ElementAnnotation {
                    text: "under tree".into(),
                    category: ElementCategory::Action,
                    score: 1.0 / 3.0,
                },
            ],
        }
    }

    fn space_01() -> ScoreSpace {
        ScoreSpace::from_pairs(&[(2, 0.0), (4, 1.0)], TaskKind::Element).unwrap()
    }

    #[test]
    fn empty_file_parses_to_empty_list() {
        let (records, diags) = scan_dataset("".as_bytes()).unwrap();
        assert!(records.is_empty());
        assert!(diags.is_empty());
    }

    #[test]
    fn header_only_is_empty() {
        let src = "{\"format\":\"samples\",\"version\":1}\n";
        assert!(parse_dataset(src.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_total_score_names_field() {
        let mut r = record("s1", "p1");
        r.total_score = 5.5;
        let mut buf = Vec::new();
        write_dataset(&mut buf, &[r]).unwrap();
        let (records, diags) = scan_dataset(&buf[..]).unwrap();
        assert!(records.is_empty());
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].field.as_deref(), Some("total_score"));
        assert_eq!(diags[0].line, 2);
    }

    #[test]
    fn duplicate_sample_id_is_reported() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, &[record("s1", "p1"), record("s1", "p2")]).unwrap();
        let (records, diags) = scan_dataset(&buf[..]).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("duplicate"));
    }

    #[test]
    fn missing_header_is_diagnosed() {
        let line = record_to_line(&record("s1", "p1")).unwrap();
        let (_, diags) = scan_dataset(line.as_bytes()).unwrap();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].line, 1);
    }

    #[test]
    fn records_roundtrip_bit_identically() {
        let originals: Vec<SampleRecord> = (0..10)
            .map(|i| {
                let mut r = record(&format!("s{i}"), &format!("p{}", i / 2));
                if i % 3 == 0 {
                    r.prompt_quality = None;
                }
                r
            })
            .collect();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &originals).unwrap();
        let parsed = parse_dataset(&buf[..]).unwrap();
        assert_eq!(parsed, originals);
        let mut buf2 = Vec::new();
        write_dataset(&mut buf2, &parsed).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn prompt_differs_exactly_in_changed_segment() {
        let a = record("s1", "p1");
        let mut b = a.clone();
        b.t2i_model = "sdxl".to_string();
        let space = space_01();
        let pa = build_prompt(&a, Task::Total, &space).unwrap();
        let pb = build_prompt(&b, Task::Total, &space).unwrap();
        assert_ne!(pa, pb);
        let diff: Vec<(&str, &str)> = pa.lines().zip(pb.lines()).filter(|(x, y)| x != y).collect();
        assert_eq!(
            diff,
            vec![("Generator model: flux-dev", "Generator model: sdxl")]
        );
    }

    #[test]
    fn optional_block_is_elided() {
        let mut r = record("s1", "p1");
        r.prompt_quality = None;
        let p = build_prompt(&r, Task::Total, &space_01()).unwrap();
        assert!(!p.contains("Prompt quality"));
        assert!(!p.to_lowercase().contains("none"));
    }

    #[test]
    fn element_prompt_includes_text_and_category() {
        let r = record("s1", "p1");
        let p = build_prompt(&r, Task::Element(1), &space_01()).unwrap();
        assert!(p.contains("Element: under tree (action)"));
        assert!(build_prompt(&r, Task::Element(7), &space_01()).is_err());
    }

    #[test]
    fn prompt_is_deterministic() {
        let r = record("s1", "p1");
        let space = space_01();
        assert_eq!(
            build_prompt(&r, Task::Total, &space).unwrap(),
            build_prompt(&r, Task::Total, &space).unwrap()
        );
    }

    fn many_records(prompts: usize, per_prompt: usize) -> Vec<SampleRecord> {
        let mut out = Vec::new();
        for p in 0..prompts {
            for s in 0..per_prompt {
                out.push(record(&format!("s{p}_{s}"), &format!("p{p:03}")));
            }
        }
        out
    }

    #[test]
    fn split_balances_unique_prompts() {
        let records = many_records(100, 6);
        let plan = split_folds(&records, 5, 7).unwrap();
        assert_eq!(plan.fold_sizes(), vec![20; 5]);
        // Partition law: union of eval prompt sets covers everything once.
        assert_eq!(plan.assignment.len(), 100);
    }

    #[test]
    fn split_is_order_insensitive_and_seeded() {
        let records = many_records(20, 3);
        let mut reversed = records.clone();
        reversed.reverse();
        let a = split_folds(&records, 4, 99).unwrap();
        let b = split_folds(&reversed, 4, 99).unwrap();
        assert_eq!(a, b);
        let c = split_folds(&records, 4, 100).unwrap();
        assert_ne!(a, c);
        assert_eq!(c.fold_sizes(), vec![5; 4]);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        let records = many_records(5, 2);
        assert!(split_folds(&records, 1, 0).is_err());
        assert!(split_folds(&records, 6, 0).is_err());
    }

    #[test]
    fn fold_view_is_disjoint_and_conserving() {
        let records = many_records(10, 4);
        let plan = split_folds(&records, 5, 3).unwrap();
        for fold in 0..5 {
            let view = fold_view(&records, &plan, fold).unwrap();
            assert_eq!(view.train.len() + view.eval.len(), records.len());
            let train_prompts: BTreeSet<&str> =
                view.train.iter().map(|r| r.prompt_id.as_str()).collect();
            let eval_prompts: BTreeSet<&str> =
                view.eval.iter().map(|r| r.prompt_id.as_str()).collect();
            assert!(train_prompts.is_disjoint(&eval_prompts));
            assert!(view.warning.is_none());
        }
        assert!(fold_view(&records, &plan, 5).is_err());
    }

    #[test]
    fn single_prompt_view_warns() {
        let records = many_records(1, 4);
        let plan = FoldPlan {
            k: 2,
            assignment: [("p000".to_string(), 0)].into_iter().collect(),
        };
        let view = fold_view(&records, &plan, 0).unwrap();
        assert!(view.train.is_empty());
        assert!(view.warning.is_some());
        let other = fold_view(&records, &plan, 1).unwrap();
        assert!(other.eval.is_empty());
        assert!(other.warning.is_some());
    }

    #[test]
    fn external_fragment_matches_projection_example() {
        let space = space_01();
        let rec = ExternalDistributionRecord {
            sample_id: "s1".into(),
            task: ExternalTask::Total,
            score_token_probs: Some([(2u32, 0.25), (4u32, 0.375)].into_iter().collect()),
            score_token_logits: None,
        };
        let mut buf = Vec::new();
        write_external_distributions(&mut buf, &[rec]).unwrap();
        let map = load_external_distributions(&buf[..], &space).unwrap();
        let frag = &map[&("s1".to_string(), ExternalTask::Total)];
        let sd = frag.project(&space, ProjectionMode::Literal).unwrap();
        assert!((sd.masses()[0] - 0.4688).abs() < 5e-5);
        assert!((sd.masses()[1] - 0.5312).abs() < 5e-5);
        // Logits absent: logit-renorm is a mode mismatch.
        assert!(frag.project(&space, ProjectionMode::LogitRenorm).is_err());
    }

    #[test]
    fn external_unknown_token_and_duplicates_error() {
        let space = space_01();
        let bad = ExternalDistributionRecord {
            sample_id: "s1".into(),
            task: ExternalTask::Total,
            score_token_probs: Some([(9u32, 0.5)].into_iter().collect()),
            score_token_logits: None,
        };
        let mut buf = Vec::new();
        write_external_distributions(&mut buf, &[bad]).unwrap();
        assert!(load_external_distributions(&buf[..], &space).is_err());

        let ok = ExternalDistributionRecord {
            sample_id: "s1".into(),
            task: ExternalTask::Element(0),
            score_token_probs: None,
            score_token_logits: Some([(2u32, 0.0), (4u32, 1.0)].into_iter().collect()),
        };
        let mut buf = Vec::new();
        write_external_distributions(&mut buf, &[ok.clone(), ok]).unwrap();
        assert!(load_external_distributions(&buf[..], &space).is_err());
    }

    #[test]
    fn external_empty_source_is_empty_map() {
        let space = space_01();
        let map = load_external_distributions("".as_bytes(), &space).unwrap();
        assert!(map.is_empty());
    }
}
