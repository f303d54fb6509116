//! Analytic multiply-accumulate count.
//!
//! Per block with `N` tokens of width `D`: MHSA costs `4ND² + 2N²D` (QKV and
//! output projections plus the two attention products) and the FFN costs
//! `2·N·D·hidden`, i.e. `8ND²` at MLP ratio 4. At a prune layer MHSA sees the
//! incoming count and the FFN sees the reduced one.

use serde::Serialize;

use super::VitConfig;
use crate::error::{Error, Result};
use crate::prune::{PruneConfig, Strategy};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FlopsOptions {
    /// Add patch-embedding and classifier-head projections.
    pub include_embed_head: bool,
    /// Add an estimate of the reduction stage itself (pairwise distances,
    /// similarities and merges).
    pub include_merge: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerFlops {
    pub block: usize,
    pub tokens_mhsa: usize,
    pub tokens_ffn: usize,
    pub mhsa_flops: u64,
    pub ffn_flops: u64,
    pub merge_flops: u64,
}

impl LayerFlops {
    pub fn total(&self) -> u64 {
        self.mhsa_flops + self.ffn_flops + self.merge_flops
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopsReport {
    pub per_layer: Vec<LayerFlops>,
    /// Zero unless `include_embed_head` was set.
    pub embed_head_flops: u64,
    pub total_flops: u64,
    /// Same geometry and options without any reduction.
    pub baseline_flops: u64,
    pub reduction_pct: f64,
}

fn mhsa_cost(n: u64, d: u64) -> u64 {
    4 * n * d * d + 2 * n * n * d
}

fn ffn_cost(n: u64, d: u64, hidden: u64) -> u64 {
    2 * n * d * hidden
}

fn merge_cost(strategy: Strategy, n_in: u64, keep: u64, d: u64) -> u64 {
    let pairs = |m: u64| m * m.saturating_sub(1) / 2;
    let m = n_in - keep;
    match strategy {
        Strategy::None | Strategy::ImportanceOnly => 0,
        Strategy::PackOne => m * d,
        Strategy::AvgPool | Strategy::MaxPool => n_in * d,
        Strategy::DiversityOnly => pairs(n_in) * d + n_in * d,
        Strategy::DecoupleMerge => (pairs(keep) + pairs(m)) * d + n_in * d,
    }
}

fn layers(cfg: &VitConfig, prune: Option<&PruneConfig>, opts: FlopsOptions) -> Result<Vec<LayerFlops>> {
    let d = cfg.embed_dim as u64;
    let hidden = cfg.hidden_dim() as u64;
    let mut n_patch = cfg.num_patches();
    let mut out = Vec::with_capacity(cfg.depth);
    for block in 1..=cfg.depth {
        let tokens_mhsa = n_patch + 1;
        let mut merge_flops = 0;
        if let Some(p) = prune.filter(|p| p.is_prune_layer(block)) {
            let plan = p.plan(n_patch)?;
            if opts.include_merge {
                merge_flops = merge_cost(p.strategy, n_patch as u64, plan.keep as u64, d);
            }
            n_patch = plan.n_out;
        }
        let tokens_ffn = n_patch + 1;
        out.push(LayerFlops {
            block,
            tokens_mhsa,
            tokens_ffn,
            mhsa_flops: mhsa_cost(tokens_mhsa as u64, d),
            ffn_flops: ffn_cost(tokens_ffn as u64, d, hidden),
            merge_flops,
        });
    }
    Ok(out)
}

pub fn flops(cfg: &VitConfig, prune: Option<&PruneConfig>, opts: FlopsOptions) -> Result<FlopsReport> {
    cfg.validate()?;
    if let Some(p) = prune {
        p.validate(cfg.depth).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidInput(m),
            other => other,
        })?;
    }
    let embed_head_flops = if opts.include_embed_head {
        let d = cfg.embed_dim as u64;
        cfg.num_patches() as u64 * cfg.patch_dim() as u64 * d + d * cfg.num_classes as u64
    } else {
        0
    };
    let per_layer = layers(cfg, prune, opts)?;
    let total_flops = per_layer.iter().map(LayerFlops::total).sum::<u64>() + embed_head_flops;
    let baseline_flops = layers(cfg, None, opts)?
        .iter()
        .map(LayerFlops::total)
        .sum::<u64>()
        + embed_head_flops;
    let reduction_pct = 100.0 * (1.0 - total_flops as f64 / baseline_flops as f64);
    Ok(FlopsReport {
        per_layer,
        embed_head_flops,
        total_flops,
        baseline_flops,
        reduction_pct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unpruned_deit_s_matches_closed_form() {
        let cfg = VitConfig::deit_small();
        let r = flops(&cfg, None, FlopsOptions::default()).unwrap();
        let (n, d) = (197u64, 384u64);
        assert_eq!(r.total_flops, 12 * (12 * n * d * d + 2 * n * n * d));
        assert_eq!(r.total_flops, 4_540_695_552);
        assert_eq!(r.reduction_pct, 0.0);
    }

    #[test]
    fn pruned_deit_s_schedule() {
        let cfg = VitConfig::deit_small();
        let r = flops(&cfg, Some(&PruneConfig::default()), FlopsOptions::default()).unwrap();
        let ffn: Vec<usize> = r.per_layer.iter().map(|l| l.tokens_ffn).collect();
        assert_eq!(ffn, vec![197, 197, 197, 139, 139, 139, 98, 98, 98, 69, 69, 69]);
        let mhsa: Vec<usize> = r.per_layer.iter().map(|l| l.tokens_mhsa).collect();
        assert_eq!(mhsa, vec![197, 197, 197, 197, 139, 139, 139, 98, 98, 98, 69, 69]);
        // Per block: 589824·N + 768·N² for MHSA and 1179648·N for the FFN.
        let expect: u64 = mhsa
            .iter()
            .zip(&ffn)
            .map(|(&a, &f)| {
                let (a, f) = (a as u64, f as u64);
                589_824 * a + 768 * a * a + 1_179_648 * f
            })
            .sum();
        assert_eq!(r.total_flops, expect);
        assert!((r.total_flops as f64 / 1e9 - 2.94).abs() < 0.01);
        assert!((r.reduction_pct - 35.2).abs() < 0.5, "{}", r.reduction_pct);
    }

    #[test]
    fn total_is_sum_of_layers() {
        let opts = FlopsOptions {
            include_embed_head: true,
            include_merge: true,
        };
        let r = flops(&VitConfig::deit_tiny(), Some(&PruneConfig::default()), opts).unwrap();
        let sum: u64 = r.per_layer.iter().map(LayerFlops::total).sum();
        assert_eq!(r.total_flops, sum + r.embed_head_flops);
        assert!(r.embed_head_flops > 0);
        assert!(r.per_layer.iter().filter(|l| l.merge_flops > 0).count() == 3);
    }

    #[test]
    fn rejects_bad_layer() {
        let p = PruneConfig {
            prune_layers: vec![0, 4],
            ..Default::default()
        };
        assert!(matches!(
            flops(&VitConfig::deit_small(), Some(&p), FlopsOptions::default()),
            Err(Error::InvalidInput(_))
        ));
        let p = PruneConfig {
            prune_layers: vec![13],
            ..Default::default()
        };
        assert!(flops(&VitConfig::deit_small(), Some(&p), FlopsOptions::default()).is_err());
    }
}
