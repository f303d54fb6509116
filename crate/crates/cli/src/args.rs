use anyhow::Result;
use clap::Args;
use vitmerge::{Count, PruneConfig, Strategy, VitConfig, WeightMode};

pub fn parse_keep_rate(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("keep rate must lie in (0, 1], got {v}"))
    }
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: vitmerge::Error| e.to_string())
}

fn parse_count(s: &str) -> Result<Count, String> {
    s.parse().map_err(|e: vitmerge::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<WeightMode, String> {
    match s {
        "normalized" => Ok(WeightMode::Normalized),
        "raw" => Ok(WeightMode::Raw),
        _ => Err(format!("weight mode must be normalized or raw, got {s:?}")),
    }
}

/// Token-reduction flags. Pruning is off unless one of them is given.
#[derive(Debug, Clone, Default, Args)]
pub struct PruneArgs {
    /// Reduction strategy [none, importance_only, pack_one, diversity_only,
    /// decouple_merge, avg_pool, max_pool]
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    /// Fraction of patch tokens kept as attentive, in (0, 1]
    #[arg(long, value_parser = parse_keep_rate)]
    pub keep_rate: Option<f64>,
    /// 1-based blocks where reduction runs, comma separated
    #[arg(long, value_delimiter = ',')]
    pub prune_layers: Option<Vec<usize>>,
    /// Attentive pairs fused per layer: an integer or "auto"
    #[arg(long, value_parser = parse_count)]
    pub pairs: Option<Count>,
    /// Clusters formed from inattentive tokens: an integer or "auto"
    #[arg(long, value_parser = parse_count)]
    pub clusters: Option<Count>,
    /// Merge weights: normalized or raw
    #[arg(long, value_parser = parse_mode)]
    pub weight_mode: Option<WeightMode>,
}

impl PruneArgs {
    fn any_set(&self) -> bool {
        self.strategy.is_some()
            || self.keep_rate.is_some()
            || self.prune_layers.is_some()
            || self.pairs.is_some()
            || self.clusters.is_some()
            || self.weight_mode.is_some()
    }

    /// `None` means run unpruned.
    pub fn config(&self) -> Option<PruneConfig> {
        if !self.any_set() || self.strategy == Some(Strategy::None) {
            return None;
        }
        let d = PruneConfig::default();
        Some(PruneConfig {
            strategy: self.strategy.unwrap_or(d.strategy),
            prune_layers: self.prune_layers.clone().unwrap_or(d.prune_layers),
            keep_rate: self.keep_rate.unwrap_or(d.keep_rate),
            pair_count: self.pairs.unwrap_or(d.pair_count),
            cluster_count: self.clusters.unwrap_or(d.cluster_count),
            weight_mode: self.weight_mode.unwrap_or(d.weight_mode),
        })
    }
}

/// Model geometry: a preset or tag, optionally overridden field by field.
#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    /// deit-t, deit-s, deit-b or a full "vit:img=..,patch=..,..." tag
    #[arg(long, default_value = "deit-s")]
    pub model: String,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub mlp_ratio: Option<f64>,
    #[arg(long)]
    pub num_classes: Option<usize>,
}

impl GeometryArgs {
    pub fn config(&self) -> Result<VitConfig> {
        let mut cfg: VitConfig = self.model.parse()?;
        if let Some(v) = self.image_size {
            cfg.image_size = v;
        }
        if let Some(v) = self.patch_size {
            cfg.patch_size = v;
        }
        if let Some(v) = self.embed_dim {
            cfg.embed_dim = v;
        }
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = self.heads {
            cfg.heads = v;
        }
        if let Some(v) = self.mlp_ratio {
            cfg.mlp_ratio = v;
        }
        if let Some(v) = self.num_classes {
            cfg.num_classes = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Print the report as JSON instead of text
    #[arg(long)]
    pub json: bool,
}
