use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use vitmerge::diversity::{measure, Scope};
use vitmerge::io::{load_manifest, load_tensor, load_weights};
use vitmerge::{PruneConfig, Strategy, VitModel};

use super::eval::write_csv;
use crate::args::{parse_keep_rate, OutputArgs};
use crate::report::{argmax, to_rows, RunReport};

#[derive(Debug, Args)]
pub struct DiversityCmd {
    /// Weight container (.vpkw)
    #[arg(long)]
    weights: PathBuf,
    /// JSON manifest of image tensors and labels
    #[arg(long)]
    manifest: PathBuf,
    /// Strategies to compare, comma separated
    #[arg(long, value_delimiter = ',', default_value = "importance_only,decouple_merge")]
    strategies: Vec<String>,
    /// Keep rates to sweep, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,0.9", value_parser = parse_keep_rate)]
    keep_rates: Vec<f64>,
    /// 1-based blocks where reduction runs, comma separated
    #[arg(long, value_delimiter = ',', default_value = "4,7,10")]
    prune_layers: Vec<usize>,
    /// Write the grid as CSV here instead of stdout
    #[arg(long)]
    csv: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub strategy: Strategy,
    pub keep_rate: f64,
    pub images: usize,
    /// Mean diversity of the patch tokens at the final prune layer.
    pub mean_diversity: Option<f64>,
    pub mean_diversity_per_token: Option<f64>,
    pub top1_agreement: Option<f64>,
}

pub fn run(cmd: DiversityCmd) -> Result<()> {
    let started = Instant::now();
    let store = load_weights(&cmd.weights)?;
    let model = VitModel::from_store(&store)?;
    let manifest = load_manifest(&cmd.manifest, model.config().num_classes)?;
    let strategies = cmd
        .strategies
        .iter()
        .map(|s| s.parse::<Strategy>())
        .collect::<Result<Vec<_>, _>>()?;

    let images = manifest
        .records
        .par_iter()
        .map(|r| {
            let image = load_tensor(&r.tensor_path)?;
            let unpruned = argmax(&model.forward(&image, None)?.0);
            Ok((image, unpruned))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut grid = Vec::new();
    for &strategy in &strategies {
        for &keep_rate in &cmd.keep_rates {
            let cfg = PruneConfig {
                prune_layers: cmd.prune_layers.clone(),
                ..PruneConfig::with_strategy(strategy, keep_rate)
            };
            cfg.validate(model.config().depth)?;
            let per_image = images
                .par_iter()
                .map(|(image, unpruned)| {
                    let (logits, trace) = model.forward(image, Some(&cfg))?;
                    let entry = measure(&trace, Scope::FinalPruneLayer)?.per_layer.remove(0);
                    Ok((entry.score, entry.per_token, argmax(&logits) == *unpruned))
                })
                .collect::<Result<Vec<_>>>()
                .with_context(|| format!("{strategy} at keep rate {keep_rate}"))?;
            let n = per_image.len();
            let mean = |f: &dyn Fn(&(f64, f64, bool)) -> f64| {
                (n > 0).then(|| per_image.iter().map(f).sum::<f64>() / n as f64)
            };
            grid.push(GridRow {
                strategy,
                keep_rate,
                images: n,
                mean_diversity: mean(&|r| r.0),
                mean_diversity_per_token: mean(&|r| r.1),
                top1_agreement: mean(&|r| f64::from(u8::from(r.2))),
            });
        }
    }

    if let Some(path) = &cmd.csv {
        write_csv(path, &grid)?;
    }
    if cmd.out.json {
        return RunReport::new(
            started,
            json!({
                "weights": cmd.weights,
                "manifest": cmd.manifest,
                "model": model.config().tag(),
                "prune_layers": cmd.prune_layers,
                "measured_at": "final_prune_layer",
            }),
            to_rows(&grid)?,
            json!({ "rows": grid.len() }),
        )?
        .print_json();
    }
    if cmd.csv.is_none() {
        let mut w = csv::Writer::from_writer(std::io::stdout());
        for r in &grid {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(())
}
