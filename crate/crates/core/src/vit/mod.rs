//! ViT/DeiT forward pass with a hook for in-block token reduction, plus the
//! analytic FLOPs model.

mod config;
mod flops;
mod init;
mod model;

pub use config::VitConfig;
pub use flops::{flops, FlopsOptions, FlopsReport, LayerFlops};
pub use init::{random_image, random_weights};
pub use model::{ffn, mhsa, BlockWeights, ForwardTrace, LayerTrace, VitModel};
