//! Token diversity as the l1 distance from a token matrix to its closest
//! rank-1 matrix of identical rows, `min_z ‖Z − 1zᵀ‖₁`.
//!
//! The minimizing `z` is the column-wise median, so the score is exact.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{column_median, Matrix};
use crate::vit::ForwardTrace;

/// Sums column by column over sorted values, so row order cannot change
/// the result even in the last bit.
pub fn diversity_score(tokens: &Matrix) -> Result<f64> {
    let median = column_median(tokens)?;
    let mut col = Vec::with_capacity(tokens.rows());
    let mut total = 0.0;
    for (c, m) in median.iter().enumerate() {
        col.clear();
        col.extend((0..tokens.rows()).map(|r| tokens.get(r, c)));
        col.sort_by(f64::total_cmp);
        total += col.iter().map(|x| (x - m).abs()).sum::<f64>();
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// The last prune layer of the trace, or the last block when the trace
    /// has no prune layers.
    FinalPruneLayer,
    Layer(usize),
    AllLayers,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityEntry {
    pub block: usize,
    /// Patch tokens measured (class token excluded).
    pub n_tokens: usize,
    pub score: f64,
    /// `score / n_tokens`.
    pub per_token: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityReport {
    pub measured_at: Scope,
    pub per_layer: Vec<DiversityEntry>,
}

/// Scores the patch tokens handed to the FFN at the requested blocks,
/// i.e. after the reduction stage at prune layers.
pub fn measure(trace: &ForwardTrace, scope: Scope) -> Result<DiversityReport> {
    let blocks: Vec<usize> = match scope {
        Scope::AllLayers => trace.layers.iter().map(|l| l.block).collect(),
        Scope::Layer(b) => vec![b],
        Scope::FinalPruneLayer => match trace.prune_layers.last() {
            Some(&b) => vec![b],
            None => trace.layers.last().map(|l| l.block).into_iter().collect(),
        },
    };
    let mut per_layer = Vec::with_capacity(blocks.len());
    for b in blocks {
        let layer = trace
            .layer(b)
            .ok_or_else(|| Error::input(format!("trace has no block {b}")))?;
        let patches = layer.ffn_input.patch_tokens();
        let n = patches.rows();
        let score = if n == 0 { 0.0 } else { diversity_score(&patches)? };
        per_layer.push(DiversityEntry {
            block: b,
            n_tokens: n,
            score,
            per_token: if n == 0 { 0.0 } else { score / n as f64 },
        });
    }
    Ok(DiversityReport {
        measured_at: scope,
        per_layer,
    })
}
