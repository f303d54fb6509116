//! CPU inference for ViT-family classifiers with in-block token reduction.
//!
//! The crate is organised as:
//!
//! - [`linalg`]: dense `f64` matrix kernels.
//! - [`vit`]: model geometry, the forward pass and the analytic FLOPs model.
//! - [`prune`]: class-attention decoupling, density-peak clustering of
//!   inattentive tokens, cosine matching of attentive tokens, weighted
//!   merging, and the ablation baselines.
//! - [`diversity`]: the rank-1 l1 token-diversity score.
//! - [`io`]: the portable weight, tensor and manifest formats.
//! - [`selftest`]: the seeded invariant suite behind `vitmerge selftest`.

pub mod diversity;
pub mod error;
pub mod io;
pub mod linalg;
pub mod prune;
pub mod selftest;
pub mod tokens;
pub mod vit;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use prune::{prune_layer, Count, PruneConfig, Strategy, WeightMode};
pub use tokens::{ClsAttention, TokenSequence};
pub use vit::{flops, FlopsOptions, FlopsReport, ForwardTrace, VitConfig, VitModel};
