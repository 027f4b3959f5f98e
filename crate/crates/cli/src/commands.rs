//! Command implementations. Every function returns the process exit code on
//! success so callers keep the 0/1/2 contract in one place.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use tokenfocus_core::checkpoint::{load_checkpoint, save_checkpoint};
use tokenfocus_core::dataset::{
    fold_view, load_external_distributions_mixed, scan_dataset, split_folds, DistributionFragment,
    ExternalTask, FoldPlan, SampleRecord, Task,
};
use tokenfocus_core::ensemble::{blend as ensemble_blend, BlendInput};
use tokenfocus_core::featurize::featurize_record;
use tokenfocus_core::metrics::{accuracy, accuracy_grouped, composite, plcc, srcc, MetricReport};
use tokenfocus_core::model::ToyModelParams;
use tokenfocus_core::score::ScoreSpace;
use tokenfocus_core::train::{predict, train as train_model, TrainSample};

use crate::config::{RunConfig, TaskSelection};
use crate::CliError;

pub const PREDICTIONS_FORMAT: &str = "predictions";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionRecord {
    sample_id: String,
    total: Option<f64>,
    elements: Vec<f64>,
}

fn read_to_records(path: &Path) -> Result<(Vec<SampleRecord>, Vec<String>), CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))?;
    let (records, diagnostics) = scan_dataset(BufReader::new(file))?;
    Ok((records, diagnostics.iter().map(|d| d.to_string()).collect()))
}

fn read_dataset_strict(path: &Path) -> Result<Vec<SampleRecord>, CliError> {
    let (records, diagnostics) = read_to_records(path)?;
    if let Some(d) = diagnostics.first() {
        return Err(CliError::Domain(format!("{}: {d}", path.display())));
    }
    Ok(records)
}

fn dataset_path<'a>(config: &'a RunConfig, flag: Option<&'a Path>) -> Result<&'a Path, CliError> {
    flag.or(config.dataset.as_deref())
        .ok_or_else(|| CliError::Domain("no dataset given (flag or config.dataset)".into()))
}

fn load_plan(path: &Path) -> Result<FoldPlan, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read plan {}: {e}", path.display())))?;
    let plan: FoldPlan = serde_json::from_str(&text)
        .map_err(|e| CliError::Domain(format!("bad plan {}: {e}", path.display())))?;
    plan.validate()?;
    Ok(plan)
}

fn plan_for(
    config: &RunConfig,
    records: &[SampleRecord],
    plan_flag: Option<&Path>,
) -> Result<FoldPlan, CliError> {
    match plan_flag {
        Some(p) => load_plan(p),
        None => Ok(split_folds(records, config.k, config.seed)?),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    fs::write(path, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

// --- validate ---------------------------------------------------------

pub fn validate(config: &RunConfig, dataset: Option<&Path>) -> Result<i32, CliError> {
    let path = dataset_path(config, dataset)?;
    let (records, diagnostics) = read_to_records(path)?;
    for d in &diagnostics {
        println!("{d}");
    }
    if diagnostics.is_empty() {
        println!("{} records OK", records.len());
        Ok(0)
    } else {
        println!(
            "{} records OK, {} problem(s)",
            records.len(),
            diagnostics.len()
        );
        Ok(1)
    }
}

// --- split ------------------------------------------------------------

pub fn split(
    config: &RunConfig,
    dataset: Option<&Path>,
    k: Option<usize>,
    out: &Path,
) -> Result<i32, CliError> {
    let path = dataset_path(config, dataset)?;
    let records = read_dataset_strict(path)?;
    let k = k.unwrap_or(config.k);
    let plan = split_folds(&records, k, config.seed)?;

    let mut json = serde_json::to_string_pretty(&plan)
        .map_err(|e| CliError::Domain(format!("plan serialization: {e}")))?;
    json.push('\n');
    write_file(out, json.as_bytes())?;

    println!(
        "{:<6} {:>14} {:>14} {:>12}",
        "fold", "unique_prompts", "train_samples", "eval_samples"
    );
    for (fold, prompts) in plan.fold_sizes().iter().enumerate() {
        let view = fold_view(&records, &plan, fold)?;
        println!(
            "{:<6} {:>14} {:>14} {:>12}",
            fold,
            prompts,
            view.train.len(),
            view.eval.len()
        );
    }
    println!(
        "{:<6} {:>14} {:>14} {:>12}",
        "all",
        plan.assignment.len(),
        "-",
        records.len()
    );
    println!("plan written to {}", out.display());
    Ok(0)
}

// --- train ------------------------------------------------------------

fn training_samples(
    config: &RunConfig,
    records: &[&SampleRecord],
    task: TaskSelection,
    space: &ScoreSpace,
) -> Result<Vec<TrainSample>, CliError> {
    let mut samples = Vec::new();
    for r in records {
        match task {
            TaskSelection::Total => samples.push(TrainSample {
                tokens: featurize_record(
                    r,
                    Task::Total,
                    space,
                    config.model.vocab_size,
                    config.model.max_tokens,
                )?,
                target: r.total_score,
            }),
            TaskSelection::Element => {
                for (i, e) in r.elements.iter().enumerate() {
                    samples.push(TrainSample {
                        tokens: featurize_record(
                            r,
                            Task::Element(i),
                            space,
                            config.model.vocab_size,
                            config.model.max_tokens,
                        )?,
                        target: e.score,
                    });
                }
            }
        }
    }
    Ok(samples)
}

pub fn train(
    config: &RunConfig,
    fold: usize,
    plan_flag: Option<&Path>,
    task_flag: Option<TaskSelection>,
    out_flag: Option<&Path>,
) -> Result<i32, CliError> {
    let task = task_flag.unwrap_or(config.task);
    let path = dataset_path(config, None)?;
    let records = read_dataset_strict(path)?;
    let plan = plan_for(config, &records, plan_flag)?;
    if fold >= plan.k {
        return Err(CliError::Domain(format!(
            "fold {fold} out of range for k={}",
            plan.k
        )));
    }
    let view = fold_view(&records, &plan, fold)?;
    if let Some(w) = &view.warning {
        eprintln!("warning: {w}");
    }
    let space = config.space(task)?;
    let samples = training_samples(config, &view.train, task, &space)?;
    if samples.is_empty() {
        return Err(CliError::Domain(format!(
            "fold {fold} training view has no samples"
        )));
    }

    let cfg = config.training_for_run();
    let model = ToyModelParams::init(
        config.model.vocab_size,
        config.model.embed_dim,
        config.model.hidden_dim,
        config.seed,
    )?;
    let outcome = train_model(model, &samples, &space, &cfg)?;

    let out_dir = out_flag.unwrap_or(&config.out_dir);
    ensure_dir(out_dir)?;
    let tag = match task {
        TaskSelection::Total => "total",
        TaskSelection::Element => "element",
    };
    let ckpt_path = out_dir.join(format!("fold{fold}-{tag}.ckpt"));
    let mut buf = Vec::new();
    save_checkpoint(&mut buf, &outcome.model, &cfg)?;
    write_file(&ckpt_path, &buf)?;

    let loss_path = out_dir.join(format!("fold{fold}-{tag}-loss.csv"));
    let mut csv = String::from("step,loss\n");
    for (step, loss) in outcome.loss_trajectory.iter().enumerate() {
        csv.push_str(&format!("{step},{loss}\n"));
    }
    write_file(&loss_path, csv.as_bytes())?;

    println!(
        "fold {fold} ({tag}): {} samples, {} steps, first loss {:.6}, last loss {:.6}",
        samples.len(),
        outcome.loss_trajectory.len(),
        outcome.loss_trajectory.first().unwrap(),
        outcome.loss_trajectory.last().unwrap()
    );
    println!("checkpoint written to {}", ckpt_path.display());
    println!("loss log written to {}", loss_path.display());
    Ok(0)
}

// --- score ------------------------------------------------------------

fn load_checkpoint_file(path: &Path) -> Result<ToyModelParams, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Io(format!("cannot open checkpoint {}: {e}", path.display())))?;
    let (params, _) = load_checkpoint(BufReader::new(file))?;
    Ok(params)
}

fn score_with_model(
    config: &RunConfig,
    params: &ToyModelParams,
    records: &[SampleRecord],
) -> Result<Vec<PredictionRecord>, CliError> {
    let total_space = config.space(TaskSelection::Total)?;
    let element_space = config.space(TaskSelection::Element)?;
    let mode = config.mode;
    // Per-sample scoring fans out across workers; collect keeps input order.
    records
        .par_iter()
        .map(|r| {
            let tokens = featurize_record(
                r,
                Task::Total,
                &total_space,
                config.model.vocab_size,
                config.model.max_tokens,
            )?;
            let total = predict(params, None, &tokens, &total_space, mode)?;
            let mut elements = Vec::with_capacity(r.elements.len());
            for i in 0..r.elements.len() {
                let tokens = featurize_record(
                    r,
                    Task::Element(i),
                    &element_space,
                    config.model.vocab_size,
                    config.model.max_tokens,
                )?;
                elements.push(predict(params, None, &tokens, &element_space, mode)?);
            }
            Ok(PredictionRecord {
                sample_id: r.sample_id.clone(),
                total: Some(total),
                elements,
            })
        })
        .collect::<Result<Vec<_>, tokenfocus_core::Error>>()
        .map_err(CliError::from)
}

fn score_with_external(
    config: &RunConfig,
    fragments: &BTreeMap<(String, ExternalTask), DistributionFragment>,
    records: &[SampleRecord],
) -> Result<Vec<PredictionRecord>, CliError> {
    let total_space = config.space(TaskSelection::Total)?;
    let element_space = config.space(TaskSelection::Element)?;
    let mode = config.mode;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let fragment = fragments
            .get(&(r.sample_id.clone(), ExternalTask::Total))
            .ok_or_else(|| {
                CliError::Domain(format!(
                    "no external total-task distribution for sample `{}`",
                    r.sample_id
                ))
            })?;
        let total = fragment
            .expected(&total_space, mode)
            .map_err(|e| CliError::Domain(format!("sample `{}`: {e}", r.sample_id)))?;
        let mut elements = Vec::with_capacity(r.elements.len());
        for i in 0..r.elements.len() {
            let fragment = fragments
                .get(&(r.sample_id.clone(), ExternalTask::Element(i)))
                .ok_or_else(|| {
                    CliError::Domain(format!(
                        "no external element-{i} distribution for sample `{}`",
                        r.sample_id
                    ))
                })?;
            elements.push(fragment.expected(&element_space, mode).map_err(|e| {
                CliError::Domain(format!("sample `{}` element {i}: {e}", r.sample_id))
            })?);
        }
        out.push(PredictionRecord {
            sample_id: r.sample_id.clone(),
            total: Some(total),
            elements,
        });
    }
    Ok(out)
}

fn write_predictions(path: &Path, predictions: &[PredictionRecord]) -> Result<(), CliError> {
    let mut buf = Vec::new();
    let header = serde_json::json!({"format": PREDICTIONS_FORMAT, "version": 1});
    serde_json::to_writer(&mut buf, &header).map_err(tokenfocus_core::Error::from)?;
    buf.push(b'\n');
    for p in predictions {
        serde_json::to_writer(&mut buf, p).map_err(tokenfocus_core::Error::from)?;
        buf.push(b'\n');
    }
    write_file(path, &buf)
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read predictions {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            let header: serde_json::Value =
                serde_json::from_str(line).map_err(tokenfocus_core::Error::from)?;
            if header["format"] != PREDICTIONS_FORMAT {
                return Err(CliError::Domain(format!(
                    "{}: not a predictions file",
                    path.display()
                )));
            }
            continue;
        }
        let p: PredictionRecord =
            serde_json::from_str(line).map_err(tokenfocus_core::Error::from)?;
        out.push(p);
    }
    Ok(out)
}

/// Which side of a fold view `score` operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SubsetArg {
    Train,
    Eval,
    All,
}

#[allow(clippy::too_many_arguments)]
pub fn score(
    config: &RunConfig,
    checkpoint: Option<&Path>,
    external: Option<&Path>,
    dataset: Option<&Path>,
    plan_flag: Option<&Path>,
    fold: Option<usize>,
    subset: SubsetArg,
    out: &Path,
) -> Result<i32, CliError> {
    let path = dataset_path(config, dataset)?;
    let mut records = read_dataset_strict(path)?;
    if let (Some(plan_path), Some(fold)) = (plan_flag, fold) {
        let plan = load_plan(plan_path)?;
        let selected: Vec<SampleRecord> = {
            let view = fold_view(&records, &plan, fold)?;
            match subset {
                SubsetArg::Train => view.train.into_iter().cloned().collect(),
                SubsetArg::Eval => view.eval.into_iter().cloned().collect(),
                SubsetArg::All => records.clone(),
            }
        };
        records = selected;
    } else if subset != SubsetArg::All {
        return Err(CliError::Domain(
            "--subset train/eval needs --plan and --fold".into(),
        ));
    }

    let predictions = match (checkpoint, external.or(config.external.as_deref())) {
        (Some(ckpt), _) => {
            let params = load_checkpoint_file(ckpt)?;
            score_with_model(config, &params, &records)?
        }
        (None, Some(ext)) => {
            let file = fs::File::open(ext)
                .map_err(|e| CliError::Io(format!("cannot open {}: {e}", ext.display())))?;
            let fragments = load_external_distributions_mixed(
                BufReader::new(file),
                &config.space(TaskSelection::Total)?,
                &config.space(TaskSelection::Element)?,
            )?;
            score_with_external(config, &fragments, &records)?
        }
        (None, None) => {
            return Err(CliError::Domain(
                "score needs --checkpoint or --external (or config.external)".into(),
            ))
        }
    };

    write_predictions(out, &predictions)?;
    println!(
        "{} predictions written to {}",
        predictions.len(),
        out.display()
    );
    Ok(0)
}

// --- report -----------------------------------------------------------

struct Joined {
    totals_pred: Vec<f64>,
    totals_label: Vec<f64>,
    elems_pred: Vec<f64>,
    elems_label: Vec<f64>,
    elem_groups: Vec<String>,
}

fn join_predictions(
    records: &[SampleRecord],
    predictions: &[PredictionRecord],
) -> Result<Joined, CliError> {
    let by_id: BTreeMap<&str, &PredictionRecord> = predictions
        .iter()
        .map(|p| (p.sample_id.as_str(), p))
        .collect();
    if by_id.len() != predictions.len() {
        return Err(CliError::Domain(
            "duplicate sample_id in predictions".into(),
        ));
    }
    let mut joined = Joined {
        totals_pred: Vec::new(),
        totals_label: Vec::new(),
        elems_pred: Vec::new(),
        elems_label: Vec::new(),
        elem_groups: Vec::new(),
    };
    for r in records {
        let p = by_id.get(r.sample_id.as_str()).ok_or_else(|| {
            CliError::Domain(format!("no prediction for sample `{}`", r.sample_id))
        })?;
        if let Some(t) = p.total {
            joined.totals_pred.push(t);
            joined.totals_label.push(r.total_score);
        }
        if !p.elements.is_empty() {
            if p.elements.len() != r.elements.len() {
                return Err(CliError::Domain(format!(
                    "sample `{}` has {} element predictions but {} annotations",
                    r.sample_id,
                    p.elements.len(),
                    r.elements.len()
                )));
            }
            for (pe, le) in p.elements.iter().zip(&r.elements) {
                joined.elems_pred.push(*pe);
                joined.elems_label.push(le.score);
                joined.elem_groups.push(r.sample_id.clone());
            }
        }
    }
    if by_id.len() != records.len() {
        return Err(CliError::Domain(format!(
            "predictions cover {} samples, dataset has {}",
            by_id.len(),
            records.len()
        )));
    }
    Ok(joined)
}

fn report_for(joined: &Joined, per_image_acc: bool) -> Result<MetricReport, CliError> {
    let s = srcc(&joined.totals_pred, &joined.totals_label).map_err(CliError::from)?;
    let p = plcc(&joined.totals_pred, &joined.totals_label).map_err(CliError::from)?;
    let a = if joined.elems_pred.is_empty() {
        return Err(CliError::Domain(
            "dataset has no element annotations; accuracy undefined".into(),
        ));
    } else if per_image_acc {
        accuracy_grouped(
            &joined.elems_pred,
            &joined.elems_label,
            &joined.elem_groups,
            0.5,
        )?
    } else {
        accuracy(&joined.elems_pred, &joined.elems_label, 0.5)?
    };
    Ok(MetricReport::new(s, p, a))
}

pub fn report(
    config: &RunConfig,
    predictions: &[PathBuf],
    dataset: Option<&Path>,
    per_image_acc: bool,
    precomputed: Option<&str>,
    out: Option<&Path>,
) -> Result<i32, CliError> {
    if let Some(triple) = precomputed {
        let parts: Vec<f64> = triple
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Domain(format!("bad --precomputed triple: {e}")))?;
        if parts.len() != 3 {
            return Err(CliError::Domain(
                "--precomputed expects exactly srcc,plcc,acc".into(),
            ));
        }
        let r = MetricReport::new(parts[0], parts[1], parts[2]);
        println!("{}", MetricReport::table_header());
        println!("{}", r.table_row("precomputed"));
        println!("overall = {:.4}", composite(parts[0], parts[1], parts[2]));
        if let Some(path) = out {
            let mut json =
                serde_json::to_string_pretty(&r.to_json()).map_err(tokenfocus_core::Error::from)?;
            json.push('\n');
            write_file(path, json.as_bytes())?;
        }
        return Ok(0);
    }

    let path = dataset_path(config, dataset)?;
    let records = read_dataset_strict(path)?;
    let mut rows = Vec::new();
    println!("{}", MetricReport::table_header());
    for pred_path in predictions {
        let preds = read_predictions(pred_path)?;
        let joined = join_predictions(&records, &preds)?;
        let r = report_for(&joined, per_image_acc)?;
        let label = pred_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| pred_path.display().to_string());
        println!("{}", r.table_row(&label));
        rows.push((label, r));
    }
    if let Some(path) = out {
        let value = if rows.len() == 1 {
            rows[0].1.to_json()
        } else {
            serde_json::Value::Array(
                rows.iter()
                    .map(|(label, r)| {
                        let mut v = r.to_json();
                        v["run"] = serde_json::Value::String(label.clone());
                        v
                    })
                    .collect(),
            )
        };
        let mut json =
            serde_json::to_string_pretty(&value).map_err(tokenfocus_core::Error::from)?;
        json.push('\n');
        write_file(path, json.as_bytes())?;
        println!("report written to {}", path.display());
    }
    Ok(0)
}

// --- blend ------------------------------------------------------------

/// Element-task blending reuses the record machinery on element-level rows:
/// each (record, element) pair becomes a derived record.
fn expand_elements(records: &[SampleRecord]) -> Vec<SampleRecord> {
    let mut out = Vec::new();
    for r in records {
        for (i, e) in r.elements.iter().enumerate() {
            let mut derived = r.clone();
            derived.sample_id = format!("{}::e{i}", r.sample_id);
            derived.elements = vec![e.clone()];
            out.push(derived);
        }
    }
    out
}

struct FoldScorer<'a> {
    params: ToyModelParams,
    config: &'a RunConfig,
    space: &'a ScoreSpace,
    task: TaskSelection,
}

impl tokenfocus_core::ensemble::SampleScorer for FoldScorer<'_> {
    fn score_sample(&self, record: &SampleRecord) -> tokenfocus_core::Result<f64> {
        let task = match self.task {
            TaskSelection::Total => Task::Total,
            // Expanded element rows hold exactly one element.
            TaskSelection::Element => Task::Element(0),
        };
        let tokens = featurize_record(
            record,
            task,
            self.space,
            self.config.model.vocab_size,
            self.config.model.max_tokens,
        )?;
        predict(&self.params, None, &tokens, self.space, self.config.mode)
    }
}

pub fn blend(
    config: &RunConfig,
    checkpoints: &[PathBuf],
    plan_flag: Option<&Path>,
    test_flag: Option<&Path>,
    out_flag: Option<&Path>,
) -> Result<i32, CliError> {
    if checkpoints.len() < 2 {
        return Err(CliError::Domain(format!(
            "blending needs at least 2 fold checkpoints, got {}",
            checkpoints.len()
        )));
    }
    for ckpt in checkpoints {
        if !ckpt.exists() {
            return Err(CliError::Domain(format!(
                "missing fold checkpoint {}",
                ckpt.display()
            )));
        }
    }
    let train_path = dataset_path(config, None)?;
    let test_path = test_flag
        .or(config.test_dataset.as_deref())
        .ok_or_else(|| CliError::Domain("blend needs --test or config.test_dataset".into()))?;
    let train_records_raw = read_dataset_strict(train_path)?;
    let test_records_raw = read_dataset_strict(test_path)?;
    let plan = plan_for(config, &train_records_raw, plan_flag)?;
    if plan.k != checkpoints.len() {
        return Err(CliError::Domain(format!(
            "plan has {} folds but {} checkpoints given",
            plan.k,
            checkpoints.len()
        )));
    }

    let task = config.task;
    let space = config.space(task)?;
    let (train_records, test_records) = match task {
        TaskSelection::Total => (train_records_raw.clone(), test_records_raw.clone()),
        TaskSelection::Element => (
            expand_elements(&train_records_raw),
            expand_elements(&test_records_raw),
        ),
    };
    let target_of = |r: &SampleRecord| match task {
        TaskSelection::Total => r.total_score,
        TaskSelection::Element => r.elements[0].score,
    };
    let train_targets: Vec<f64> = train_records.iter().map(&target_of).collect();
    let test_targets: Vec<f64> = test_records.iter().map(&target_of).collect();

    let scorers: Vec<FoldScorer> = checkpoints
        .iter()
        .map(|ckpt| {
            Ok(FoldScorer {
                params: load_checkpoint_file(ckpt)?,
                config,
                space: &space,
                task,
            })
        })
        .collect::<Result<_, CliError>>()?;

    // Per-fold metrics on the test set, before blending.
    use tokenfocus_core::ensemble::SampleScorer;
    let mut fold_rows: Vec<(String, f64, f64)> = Vec::new();
    let mut fold_pred_cols: Vec<Vec<f64>> = Vec::new();
    for (f, scorer) in scorers.iter().enumerate() {
        let preds: Vec<f64> = test_records
            .iter()
            .map(|r| scorer.score_sample(r))
            .collect::<tokenfocus_core::Result<_>>()?;
        let s = srcc(&preds, &test_targets)?;
        let p = plcc(&preds, &test_targets)?;
        fold_rows.push((format!("fold {f}"), s, p));
        fold_pred_cols.push(preds);
    }

    let input = BlendInput {
        train_records: &train_records,
        train_targets: &train_targets,
        test_records: &test_records,
        plan: &plan,
    };
    let result = ensemble_blend(&input, &scorers, &config.gbt)?;
    let blend_s = srcc(&result.test_predictions, &test_targets)?;
    let blend_p = plcc(&result.test_predictions, &test_targets)?;

    let avg_s = fold_rows.iter().map(|r| r.1).sum::<f64>() / fold_rows.len() as f64;
    let avg_p = fold_rows.iter().map(|r| r.2).sum::<f64>() / fold_rows.len() as f64;

    println!("{:<10} {:>10} {:>10}", "run", "srcc", "plcc");
    for (label, s, p) in &fold_rows {
        println!("{label:<10} {s:>10.6} {p:>10.6}");
    }
    println!("{:<10} {:>10.6} {:>10.6}", "avg", avg_s, avg_p);
    println!("{:<10} {:>10.6} {:>10.6}", "blend", blend_s, blend_p);

    let out_dir = out_flag.unwrap_or(&config.out_dir);
    ensure_dir(out_dir)?;
    let predictions: Vec<PredictionRecord> = test_records
        .iter()
        .zip(&result.test_predictions)
        .map(|(r, &v)| match task {
            TaskSelection::Total => PredictionRecord {
                sample_id: r.sample_id.clone(),
                total: Some(v),
                elements: vec![],
            },
            TaskSelection::Element => PredictionRecord {
                sample_id: r.sample_id.clone(),
                total: None,
                elements: vec![v],
            },
        })
        .collect();
    let pred_path = out_dir.join("blend-predictions.jsonl");
    write_predictions(&pred_path, &predictions)?;

    let round6 = |v: f64| (v * 1e6).round() / 1e6;
    let report = serde_json::json!({
        "per_fold": fold_rows.iter().map(|(label, s, p)| serde_json::json!({
            "run": label, "srcc": round6(*s), "plcc": round6(*p),
        })).collect::<Vec<_>>(),
        "avg": {"srcc": round6(avg_s), "plcc": round6(avg_p)},
        "blend": {"srcc": round6(blend_s), "plcc": round6(blend_p)},
    });
    let report_path = out_dir.join("blend-report.json");
    let mut json = serde_json::to_string_pretty(&report).map_err(tokenfocus_core::Error::from)?;
    json.push('\n');
    write_file(&report_path, json.as_bytes())?;
    println!("blend outputs written to {}", out_dir.display());
    Ok(0)
}
