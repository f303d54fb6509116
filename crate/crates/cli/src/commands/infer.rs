use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;
use serde_json::json;
use vitmerge::io::{load_tensor, load_weights};
use vitmerge::prune::PruneStats;
use vitmerge::{ClsAttention, ForwardTrace, VitModel};

use crate::args::{OutputArgs, PruneArgs};
use crate::report::{to_rows, top_k, RunReport};

#[derive(Debug, Args)]
pub struct InferCmd {
    /// Weight container (.vpkw)
    #[arg(long)]
    weights: PathBuf,
    /// Image tensor (.vpkt), shape [3, S, S]
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    prune: PruneArgs,
    /// Write per-layer token counts, class attention and reduction stats as JSON
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Serialize)]
struct LayerDump<'a> {
    block: usize,
    tokens_mhsa: usize,
    tokens_ffn: usize,
    cls_attention: &'a ClsAttention,
    prune: &'a Option<PruneStats>,
}

#[derive(Serialize)]
struct TraceDump<'a> {
    prune_layers: &'a [usize],
    logits: &'a [f64],
    layers: Vec<LayerDump<'a>>,
}

#[derive(Serialize)]
struct Top {
    rank: usize,
    class: usize,
    logit: f64,
}

fn dump_trace(path: &PathBuf, trace: &ForwardTrace, logits: &[f64]) -> Result<()> {
    let dump = TraceDump {
        prune_layers: &trace.prune_layers,
        logits,
        layers: trace
            .layers
            .iter()
            .map(|l| LayerDump {
                block: l.block,
                tokens_mhsa: l.tokens_mhsa,
                tokens_ffn: l.tokens_ffn,
                cls_attention: &l.cls_attention,
                prune: &l.prune,
            })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&dump)?;
    std::fs::write(path, json).with_context(|| format!("writing trace {}", path.display()))
}

pub fn run(cmd: InferCmd) -> Result<()> {
    let started = Instant::now();
    let store = load_weights(&cmd.weights)?;
    let model = VitModel::from_store(&store)?;
    let image = load_tensor(&cmd.input)?;
    let prune = cmd.prune.config();
    let (logits, trace) = model.forward(&image, prune.as_ref())?;
    if let Some(path) = &cmd.trace {
        dump_trace(path, &trace, &logits)?;
    }
    let top: Vec<Top> = top_k(&logits, 5)
        .into_iter()
        .enumerate()
        .map(|(rank, (class, logit))| Top {
            rank: rank + 1,
            class,
            logit,
        })
        .collect();
    let counts: Vec<usize> = trace.layers.iter().map(|l| l.tokens_ffn).collect();
    let report = RunReport::new(
        started,
        json!({
            "weights": cmd.weights,
            "input": cmd.input,
            "model": model.config().tag(),
            "prune": prune,
        }),
        to_rows(&top)?,
        json!({ "ffn_token_counts": counts }),
    )?;
    if cmd.out.json {
        return report.print_json();
    }
    println!("model {}", model.config().tag());
    println!("ffn tokens per block {counts:?}");
    println!("{:>4} {:>6} {:>14}", "rank", "class", "logit");
    for t in &top {
        println!("{:>4} {:>6} {:>14.6}", t.rank, t.class, t.logit);
    }
    Ok(())
}
