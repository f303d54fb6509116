use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use vitmerge::io::{load_manifest, load_tensor, load_weights, Record};
use vitmerge::{PruneConfig, VitModel};

use crate::args::{OutputArgs, PruneArgs};
use crate::report::{argmax, fmt_pct, to_rows, RunReport};

#[derive(Debug, Args)]
pub struct EvalCmd {
    /// Weight container (.vpkw)
    #[arg(long)]
    weights: PathBuf,
    /// JSON manifest of image tensors and labels
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    prune: PruneArgs,
    /// Write one CSV row per image
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageRow {
    pub index: usize,
    pub tensor_path: String,
    pub label: usize,
    pub prediction: usize,
    pub unpruned_prediction: usize,
    pub reference_top1: Option<usize>,
    pub correct: bool,
    pub agrees_unpruned: bool,
    pub agrees_reference: Option<bool>,
    /// Largest |unpruned − reference| logit gap over the largest |reference| logit.
    pub reference_logit_rel_diff: Option<f64>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub images: usize,
    pub top1_accuracy: Option<f64>,
    pub agreement_vs_unpruned: Option<f64>,
    pub agreement_vs_reference: Option<f64>,
    pub max_reference_logit_rel_diff: Option<f64>,
    pub mean_wall_time_ms: Option<f64>,
}

fn evaluate(model: &VitModel, index: usize, rec: &Record, prune: Option<&PruneConfig>) -> Result<ImageRow> {
    let image = load_tensor(&rec.tensor_path)?;
    let t0 = Instant::now();
    let (logits, _) = model.forward(&image, prune)?;
    let seconds = t0.elapsed().as_secs_f64();
    let unpruned = match prune {
        Some(_) => model.forward(&image, None)?.0,
        None => logits.clone(),
    };
    let reference_logit_rel_diff = match &rec.reference_logits_path {
        Some(p) => {
            let reference = load_tensor(p)?;
            anyhow::ensure!(
                reference.data.len() == unpruned.len(),
                "{}: {} reference logits, model has {} classes",
                p.display(),
                reference.data.len(),
                unpruned.len()
            );
            let scale = reference.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            let gap = reference
                .data
                .iter()
                .zip(&unpruned)
                .fold(0.0f64, |m, (r, u)| m.max((r - u).abs()));
            Some(gap / scale)
        }
        None => None,
    };
    let prediction = argmax(&logits);
    let unpruned_prediction = argmax(&unpruned);
    Ok(ImageRow {
        index,
        tensor_path: rec.tensor_path.display().to_string(),
        label: rec.label,
        prediction,
        unpruned_prediction,
        reference_top1: rec.reference_top1,
        correct: prediction == rec.label,
        agrees_unpruned: prediction == unpruned_prediction,
        agrees_reference: rec.reference_top1.map(|r| r == unpruned_prediction),
        reference_logit_rel_diff,
        seconds,
    })
}

fn fraction(rows: &[ImageRow], f: impl Fn(&ImageRow) -> Option<bool>) -> Option<f64> {
    let vals: Vec<bool> = rows.iter().filter_map(f).collect();
    (!vals.is_empty()).then(|| vals.iter().filter(|&&v| v).count() as f64 / vals.len() as f64)
}

pub fn summarize(rows: &[ImageRow]) -> EvalSummary {
    EvalSummary {
        images: rows.len(),
        top1_accuracy: fraction(rows, |r| Some(r.correct)),
        agreement_vs_unpruned: fraction(rows, |r| Some(r.agrees_unpruned)),
        agreement_vs_reference: fraction(rows, |r| r.agrees_reference),
        max_reference_logit_rel_diff: rows
            .iter()
            .filter_map(|r| r.reference_logit_rel_diff)
            .reduce(f64::max),
        mean_wall_time_ms: (!rows.is_empty())
            .then(|| 1e3 * rows.iter().map(|r| r.seconds).sum::<f64>() / rows.len() as f64),
    }
}

/// Runs every record, in parallel, returning rows in manifest order.
pub fn run_manifest(model: &VitModel, records: &[Record], prune: Option<&PruneConfig>) -> Result<Vec<ImageRow>> {
    records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| evaluate(model, i, rec, prune).with_context(|| format!("record {i}")))
        .collect()
}

pub fn write_csv<T: Serialize>(path: &PathBuf, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(cmd: EvalCmd) -> Result<()> {
    let started = Instant::now();
    let store = load_weights(&cmd.weights)?;
    let model = VitModel::from_store(&store)?;
    let manifest = load_manifest(&cmd.manifest, model.config().num_classes)?;
    let prune = cmd.prune.config();
    if let Some(p) = &prune {
        p.validate(model.config().depth)?;
    }
    let rows = run_manifest(&model, &manifest.records, prune.as_ref())?;
    if let Some(path) = &cmd.csv {
        write_csv(path, &rows)?;
    }
    let summary = summarize(&rows);
    if cmd.out.json {
        return RunReport::new(
            started,
            json!({
                "weights": cmd.weights,
                "manifest": cmd.manifest,
                "model": model.config().tag(),
                "prune": prune,
                "threads": rayon::current_num_threads(),
            }),
            to_rows(&rows)?,
            &summary,
        )?
        .print_json();
    }
    println!("model {}", model.config().tag());
    println!("images {}", summary.images);
    println!("top-1 accuracy {}", fmt_pct(summary.top1_accuracy));
    println!("agreement vs unpruned {}", fmt_pct(summary.agreement_vs_unpruned));
    println!("agreement vs reference {}", fmt_pct(summary.agreement_vs_reference));
    if let Some(d) = summary.max_reference_logit_rel_diff {
        println!("max reference logit rel diff {d:.3e}");
    }
    match summary.mean_wall_time_ms {
        Some(ms) => println!("mean wall time {ms:.2} ms/image"),
        None => println!("mean wall time undefined"),
    }
    Ok(())
}
