use std::time::Instant;

use anyhow::Result;
use clap::Args;
use serde_json::json;
use vitmerge::{flops, FlopsOptions};

use crate::args::{GeometryArgs, OutputArgs, PruneArgs};
use crate::report::{to_rows, RunReport};

#[derive(Debug, Args)]
pub struct FlopsCmd {
    #[command(flatten)]
    geometry: GeometryArgs,
    #[command(flatten)]
    prune: PruneArgs,
    /// Count the patch embedding and classifier head as well
    #[arg(long)]
    include_embed: bool,
    /// Add an estimate of the reduction stage's own cost
    #[arg(long)]
    include_merge: bool,
    #[command(flatten)]
    out: OutputArgs,
}

pub fn run(cmd: FlopsCmd) -> Result<()> {
    let started = Instant::now();
    let cfg = cmd.geometry.config()?;
    let prune = cmd.prune.config();
    let opts = FlopsOptions {
        include_embed_head: cmd.include_embed,
        include_merge: cmd.include_merge,
    };
    let r = flops(&cfg, prune.as_ref(), opts)?;
    let report = RunReport::new(
        started,
        json!({ "model": cfg.tag(), "geometry": cfg, "prune": prune, "options": opts }),
        to_rows(&r.per_layer)?,
        json!({
            "total_flops": r.total_flops,
            "baseline_flops": r.baseline_flops,
            "embed_head_flops": r.embed_head_flops,
            "reduction_pct": r.reduction_pct,
        }),
    )?;
    if cmd.out.json {
        return report.print_json();
    }
    println!("model {}", cfg.tag());
    match &prune {
        Some(p) => println!(
            "strategy {} keep_rate {} prune_layers {:?} pairs {} clusters {}",
            p.strategy, p.keep_rate, p.prune_layers, p.pair_count, p.cluster_count
        ),
        None => println!("unpruned"),
    }
    println!("{:>5} {:>6} {:>6} {:>14} {:>14} {:>12}", "block", "n_mhsa", "n_ffn", "mhsa", "ffn", "merge");
    for l in &r.per_layer {
        println!(
            "{:>5} {:>6} {:>6} {:>14} {:>14} {:>12}",
            l.block, l.tokens_mhsa, l.tokens_ffn, l.mhsa_flops, l.ffn_flops, l.merge_flops
        );
    }
    if r.embed_head_flops > 0 {
        println!("embed+head {}", r.embed_head_flops);
    }
    println!("total {} ({:.3} G)", r.total_flops, r.total_flops as f64 / 1e9);
    println!("baseline {} ({:.3} G)", r.baseline_flops, r.baseline_flops as f64 / 1e9);
    println!("reduction {:.2}%", r.reduction_pct);
    Ok(())
}
