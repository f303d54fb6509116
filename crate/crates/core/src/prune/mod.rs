//! In-block token reduction.
//!
//! The main strategy, [`Strategy::DecoupleMerge`], splits patch tokens by
//! class attention into attentive and inattentive sets, fuses the most
//! cosine-similar attentive pairs, clusters the inattentive tokens with
//! density-peak clustering and replaces every group by an attention-weighted
//! sum. The other strategies are ablation baselines sharing the same pieces.

mod dpc;
mod importance;
mod matching;
mod merge;

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

pub use dpc::{dpc_cluster, ClusterAssignment};
pub use importance::{decouple, importance_scores, keep_count, Decoupled, ImportanceScores};
pub use matching::{match_attentive, PairMatching};
pub use merge::{weighted_merge, Merged, WeightMode};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tokens::{ClsAttention, TokenSequence};
use importance::decouple_top_k;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Leave the sequence untouched.
    None,
    /// Keep the top-K attentive tokens and drop the rest.
    ImportanceOnly,
    /// Keep the attentive tokens and fuse all inattentive ones into one token.
    PackOne,
    /// Cluster all patch tokens into K groups, ignoring importance.
    DiversityOnly,
    /// Match attentive pairs, cluster inattentive tokens, merge both.
    DecoupleMerge,
    /// Average fixed windows of consecutive tokens down to K tokens.
    AvgPool,
    /// Per-coordinate max over fixed windows of consecutive tokens.
    MaxPool,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::None,
        Strategy::ImportanceOnly,
        Strategy::PackOne,
        Strategy::DiversityOnly,
        Strategy::DecoupleMerge,
        Strategy::AvgPool,
        Strategy::MaxPool,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::ImportanceOnly => "importance_only",
            Strategy::PackOne => "pack_one",
            Strategy::DiversityOnly => "diversity_only",
            Strategy::DecoupleMerge => "decouple_merge",
            Strategy::AvgPool => "avg_pool",
            Strategy::MaxPool => "max_pool",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == norm)
            .ok_or_else(|| Error::config(format!("unknown strategy {s:?}")))
    }
}

/// A pair or cluster count, either fixed or derived per layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Count {
    #[default]
    Auto,
    Fixed(usize),
}

impl fmt::Display for Count {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Count::Auto => f.write_str("auto"),
            Count::Fixed(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Count {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Count::Auto);
        }
        s.parse()
            .map(Count::Fixed)
            .map_err(|_| Error::config(format!("count must be \"auto\" or an integer, got {s:?}")))
    }
}

impl Serialize for Count {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Count::Auto => s.serialize_str("auto"),
            Count::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneConfig {
    pub strategy: Strategy,
    /// 1-based block indices, strictly increasing.
    pub prune_layers: Vec<usize>,
    pub keep_rate: f64,
    pub pair_count: Count,
    pub cluster_count: Count,
    pub weight_mode: WeightMode,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig {
            strategy: Strategy::DecoupleMerge,
            prune_layers: vec![4, 7, 10],
            keep_rate: 0.7,
            pair_count: Count::Auto,
            cluster_count: Count::Auto,
            weight_mode: WeightMode::Normalized,
        }
    }
}

/// Resolved token counts for one prune layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayerPlan {
    pub n_in: usize,
    /// Attentive tokens, `⌈η·n_in⌉`.
    pub keep: usize,
    /// Attentive pairs that will be fused.
    pub pairs: usize,
    /// Clusters formed from the inattentive tokens.
    pub clusters: usize,
    pub n_out: usize,
}

impl PruneConfig {
    pub fn with_strategy(strategy: Strategy, keep_rate: f64) -> Self {
        PruneConfig {
            strategy,
            keep_rate,
            ..Default::default()
        }
    }

    /// Keep everything: η = 1 and no attentive pairs.
    pub fn identity() -> Self {
        PruneConfig {
            keep_rate: 1.0,
            pair_count: Count::Fixed(0),
            ..Default::default()
        }
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        if !(self.keep_rate > 0.0 && self.keep_rate <= 1.0) {
            return Err(Error::config(format!(
                "keep rate {} outside (0, 1]",
                self.keep_rate
            )));
        }
        if let Some(&l) = self.prune_layers.iter().find(|&&l| l == 0 || l > depth) {
            return Err(Error::config(format!("prune layer {l} outside [1, {depth}]")));
        }
        if self.prune_layers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("prune layers must be strictly increasing"));
        }
        Ok(())
    }

    pub fn is_prune_layer(&self, block: usize) -> bool {
        self.strategy != Strategy::None && self.prune_layers.contains(&block)
    }

    /// Token counts this configuration produces from `n_in` patch tokens.
    ///
    /// Under `auto`, `q = c = max(1, round(n_in / 20))`, capped by the
    /// number of inattentive tokens and by `⌊K/2⌋`, so the output count is K.
    pub fn plan(&self, n_in: usize) -> Result<LayerPlan> {
        let passthrough = LayerPlan {
            n_in,
            keep: n_in,
            pairs: 0,
            clusters: 0,
            n_out: n_in,
        };
        if self.strategy == Strategy::None || n_in == 0 {
            return Ok(passthrough);
        }
        if !(self.keep_rate > 0.0 && self.keep_rate <= 1.0) {
            return Err(Error::config(format!(
                "keep rate {} outside (0, 1]",
                self.keep_rate
            )));
        }
        let keep = keep_count(self.keep_rate, n_in);
        if keep == 0 {
            return Err(Error::config(format!(
                "keep rate {} keeps no tokens out of {n_in}",
                self.keep_rate
            )));
        }
        let inattentive = n_in - keep;
        let plan = |pairs, clusters, n_out| LayerPlan {
            n_in,
            keep,
            pairs,
            clusters,
            n_out,
        };
        Ok(match self.strategy {
            Strategy::None => unreachable!(),
            Strategy::ImportanceOnly | Strategy::AvgPool | Strategy::MaxPool => plan(0, 0, keep),
            Strategy::DiversityOnly => plan(0, keep, keep),
            Strategy::PackOne => {
                let c = usize::from(inattentive > 0);
                plan(0, c, keep + c)
            }
            Strategy::DecoupleMerge => {
                let pairs = match self.pair_count {
                    Count::Auto => {
                        let auto = ((n_in as f64 / 20.0).round() as usize).max(1);
                        auto.min(inattentive).min(keep / 2)
                    }
                    Count::Fixed(q) if q > 0 && q >= keep => {
                        return Err(Error::config(format!(
                            "{q} attentive pairs requested but only {keep} attentive tokens"
                        )))
                    }
                    Count::Fixed(q) => q.min(keep / 2),
                };
                let clusters = match (self.cluster_count, self.pair_count) {
                    (Count::Fixed(c), _) => c.min(inattentive),
                    (Count::Auto, Count::Auto) => pairs,
                    (Count::Auto, Count::Fixed(q)) => q.min(inattentive),
                };
                plan(pairs, clusters, keep - pairs + clusters)
            }
        })
    }
}

/// What one prune layer did.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneStats {
    pub strategy: Strategy,
    pub plan: LayerPlan,
    /// Requested pairs could not all be formed.
    pub matching_clamped: bool,
    /// Groups merged by plain average because their scores summed to zero.
    pub fallback_groups: usize,
}

struct SequenceBuilder {
    data: Vec<f64>,
    dim: usize,
    provenance: Vec<Vec<u32>>,
}

impl SequenceBuilder {
    fn new(class_token: &[f64], capacity: usize) -> Self {
        let mut data = Vec::with_capacity((capacity + 1) * class_token.len());
        data.extend_from_slice(class_token);
        SequenceBuilder {
            data,
            dim: class_token.len(),
            provenance: Vec::with_capacity(capacity),
        }
    }

    fn push(&mut self, row: &[f64], provenance: Vec<u32>) {
        self.data.extend_from_slice(row);
        self.provenance.push(provenance);
    }

    fn finish(self) -> Result<TokenSequence> {
        let rows = self.provenance.len() + 1;
        TokenSequence::new(Matrix::new(rows, self.dim, self.data)?, self.provenance)
    }
}

fn union_provenance(seq: &TokenSequence, members: impl IntoIterator<Item = usize>) -> Vec<u32> {
    let mut out: Vec<u32> = members
        .into_iter()
        .flat_map(|i| seq.provenance()[i].iter().copied())
        .collect();
    out.sort_unstable();
    out
}

/// Runs the configured reduction on one block's tokens.
pub fn prune_layer(
    tokens: &TokenSequence,
    attn: &ClsAttention,
    cfg: &PruneConfig,
) -> Result<TokenSequence> {
    prune_layer_with_stats(tokens, attn, cfg).map(|(seq, _)| seq)
}

pub fn prune_layer_with_stats(
    tokens: &TokenSequence,
    attn: &ClsAttention,
    cfg: &PruneConfig,
) -> Result<(TokenSequence, PruneStats)> {
    if attn.n_tokens() != tokens.len() {
        return Err(Error::input(format!(
            "class attention covers {} tokens, sequence has {}",
            attn.n_tokens(),
            tokens.len()
        )));
    }
    let plan = cfg.plan(tokens.n_patches())?;
    let mut stats = PruneStats {
        strategy: cfg.strategy,
        plan,
        matching_clamped: false,
        fallback_groups: 0,
    };
    if cfg.strategy == Strategy::None || tokens.n_patches() == 0 {
        return Ok((tokens.clone(), stats));
    }

    let scores = importance_scores(attn);
    let patches = tokens.patch_tokens();
    let mut out = SequenceBuilder::new(tokens.class_token(), plan.n_out);

    match cfg.strategy {
        Strategy::None => unreachable!(),
        Strategy::ImportanceOnly => {
            let split = decouple_top_k(&scores, plan.keep);
            for &i in &split.attentive {
                out.push(patches.row(i), tokens.provenance()[i].clone());
            }
        }
        Strategy::PackOne => {
            let split = decouple_top_k(&scores, plan.keep);
            for &i in &split.attentive {
                out.push(patches.row(i), tokens.provenance()[i].clone());
            }
            if !split.inattentive.is_empty() {
                let all = vec![(0..split.inattentive.len()).collect::<Vec<_>>()];
                merge_groups(tokens, &patches, &scores, &split.inattentive, &all, cfg.weight_mode, &mut out, &mut stats)?;
            }
        }
        Strategy::DecoupleMerge => {
            let split = decouple_top_k(&scores, plan.keep);
            merge_attentive(tokens, &patches, &scores, &split.attentive, cfg, &mut out, &mut stats)?;
            if plan.clusters > 0 && !split.inattentive.is_empty() {
                let subset = patches.select_rows(&split.inattentive);
                let clusters = dpc_cluster(&subset, plan.clusters)?;
                merge_groups(
                    tokens,
                    &patches,
                    &scores,
                    &split.inattentive,
                    &clusters.groups(),
                    cfg.weight_mode,
                    &mut out,
                    &mut stats,
                )?;
            }
        }
        Strategy::DiversityOnly => {
            let all: Vec<usize> = (0..tokens.n_patches()).collect();
            let clusters = dpc_cluster(&patches, plan.keep)?;
            let by_cluster = clusters.groups();
            let mut order: Vec<usize> = (0..by_cluster.len()).collect();
            order.sort_by_key(|&k| clusters.centers[k]);
            let groups: Vec<Vec<usize>> = order.into_iter().map(|k| by_cluster[k].clone()).collect();
            merge_groups(tokens, &patches, &scores, &all, &groups, cfg.weight_mode, &mut out, &mut stats)?;
        }
        Strategy::AvgPool | Strategy::MaxPool => {
            let n = tokens.n_patches();
            let k = plan.keep;
            let dim = patches.cols();
            for w in 0..k {
                let (start, end) = (w * n / k, (w + 1) * n / k);
                let mut row = vec![
                    if cfg.strategy == Strategy::MaxPool { f64::NEG_INFINITY } else { 0.0 };
                    dim
                ];
                for i in start..end {
                    for (r, x) in row.iter_mut().zip(patches.row(i)) {
                        if cfg.strategy == Strategy::MaxPool {
                            *r = r.max(*x);
                        } else {
                            *r += x;
                        }
                    }
                }
                if cfg.strategy == Strategy::AvgPool && end - start > 1 {
                    let len = (end - start) as f64;
                    row.iter_mut().for_each(|r| *r /= len);
                }
                out.push(&row, union_provenance(tokens, start..end));
            }
        }
    }

    let seq = out.finish()?;
    debug_assert_eq!(seq.n_patches(), plan.n_out);
    Ok((seq, stats))
}

/// Fuses matched attentive pairs; unmatched tokens pass through unchanged.
/// Groups appear in sequence order of their highest-scoring member.
fn merge_attentive(
    tokens: &TokenSequence,
    patches: &Matrix,
    scores: &ImportanceScores,
    attentive: &[usize],
    cfg: &PruneConfig,
    out: &mut SequenceBuilder,
    stats: &mut PruneStats,
) -> Result<()> {
    let q = match cfg.pair_count {
        Count::Fixed(q) => q,
        Count::Auto => stats.plan.pairs,
    };
    let subset = patches.select_rows(attentive);
    let matching = match_attentive(&subset, q)?;
    debug_assert_eq!(matching.pairs.len(), stats.plan.pairs);
    stats.matching_clamped = matching.clamped;

    let s = scores.as_slice();
    let mut groups: Vec<Vec<usize>> = matching
        .pairs
        .iter()
        .map(|&(i, j)| vec![attentive[i], attentive[j]])
        .chain(matching.unmatched.iter().map(|&i| vec![attentive[i]]))
        .collect();
    let representative = |g: &Vec<usize>| -> usize {
        *g.iter()
            .max_by(|&&a, &&b| s[a].total_cmp(&s[b]).then(b.cmp(&a)))
            .expect("groups are non-empty")
    };
    groups.sort_by_key(representative);

    for g in &groups {
        if g.len() == 1 {
            out.push(patches.row(g[0]), tokens.provenance()[g[0]].clone());
        } else {
            let rows = patches.select_rows(g);
            let merged = weighted_merge(&rows, &[vec![0, 1]], &scores.subset(g), cfg.weight_mode)?;
            stats.fallback_groups += merged.fallback_groups.len();
            out.push(merged.tokens.row(0), union_provenance(tokens, g.iter().copied()));
        }
    }
    Ok(())
}

/// Merges `groups` (indices into `members`) and appends them in order.
#[allow(clippy::too_many_arguments)]
fn merge_groups(
    tokens: &TokenSequence,
    patches: &Matrix,
    scores: &ImportanceScores,
    members: &[usize],
    groups: &[Vec<usize>],
    mode: WeightMode,
    out: &mut SequenceBuilder,
    stats: &mut PruneStats,
) -> Result<()> {
    let subset = patches.select_rows(members);
    let merged = weighted_merge(&subset, groups, &scores.subset(members), mode)?;
    stats.fallback_groups += merged.fallback_groups.len();
    for (g, group) in groups.iter().enumerate() {
        out.push(
            merged.tokens.row(g),
            union_provenance(tokens, group.iter().map(|&i| members[i])),
        );
    }
    Ok(())
}
