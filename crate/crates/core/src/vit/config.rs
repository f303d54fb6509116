use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of a plain ViT/DeiT classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VitConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    pub num_classes: usize,
    pub ln_eps: f64,
}

impl VitConfig {
    fn deit(embed_dim: usize, heads: usize) -> Self {
        VitConfig {
            image_size: 224,
            patch_size: 16,
            embed_dim,
            depth: 12,
            heads,
            mlp_ratio: 4.0,
            num_classes: 1000,
            ln_eps: 1e-6,
        }
    }

    pub fn deit_tiny() -> Self {
        Self::deit(192, 3)
    }

    pub fn deit_small() -> Self {
        Self::deit(384, 6)
    }

    pub fn deit_base() -> Self {
        Self::deit(768, 12)
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "deit-t" | "deit-tiny" => Some(Self::deit_tiny()),
            "deit-s" | "deit-small" => Some(Self::deit_small()),
            "deit-b" | "deit-base" => Some(Self::deit_base()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.heads == 0 || self.depth == 0 || self.num_classes == 0 {
            return Err(Error::config("embed_dim, heads, depth and num_classes must be positive"));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.patch_size == 0 || self.image_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::config(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.hidden_dim() == 0 || !(self.ln_eps > 0.0) {
            return Err(Error::config("mlp hidden size and ln_eps must be positive"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Patches plus the class token.
    pub fn num_tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn hidden_dim(&self) -> usize {
        (self.mlp_ratio * self.embed_dim as f64).round() as usize
    }

    pub fn patch_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    /// Canonical model tag. Presets print their short name; anything else
    /// prints the full geometry so that it parses back to the same config.
    pub fn tag(&self) -> String {
        for name in ["deit-t", "deit-s", "deit-b"] {
            if Self::preset(name).as_ref() == Some(self) {
                return name.to_string();
            }
        }
        format!(
            "vit:img={},patch={},dim={},depth={},heads={},mlp={},classes={},eps={}",
            self.image_size,
            self.patch_size,
            self.embed_dim,
            self.depth,
            self.heads,
            self.mlp_ratio,
            self.num_classes,
            self.ln_eps
        )
    }
}

impl fmt::Display for VitConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for VitConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(cfg) = Self::preset(s) {
            return Ok(cfg);
        }
        let body = s
            .strip_prefix("vit:")
            .ok_or_else(|| Error::config(format!("unknown model tag {s:?}")))?;
        let mut cfg = VitConfig::deit_tiny();
        for kv in body.split(',') {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::config(format!("malformed model tag field {kv:?}")))?;
            let bad = || Error::config(format!("bad value in model tag field {kv:?}"));
            match k {
                "img" => cfg.image_size = v.parse().map_err(|_| bad())?,
                "patch" => cfg.patch_size = v.parse().map_err(|_| bad())?,
                "dim" => cfg.embed_dim = v.parse().map_err(|_| bad())?,
                "depth" => cfg.depth = v.parse().map_err(|_| bad())?,
                "heads" => cfg.heads = v.parse().map_err(|_| bad())?,
                "classes" => cfg.num_classes = v.parse().map_err(|_| bad())?,
                "mlp" => cfg.mlp_ratio = v.parse().map_err(|_| bad())?,
                "eps" => cfg.ln_eps = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::config(format!("unknown model tag field {k:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deit_geometry() {
        let s = VitConfig::deit_small();
        assert_eq!(s.num_patches(), 196);
        assert_eq!(s.num_tokens(), 197);
        assert_eq!(s.head_dim(), 64);
        assert_eq!(s.hidden_dim(), 1536);
        assert_eq!(VitConfig::deit_tiny().head_dim(), 64);
        assert_eq!(VitConfig::deit_base().head_dim(), 64);
    }

    #[test]
    fn tags_round_trip() {
        for cfg in [VitConfig::deit_tiny(), VitConfig::deit_base()] {
            assert_eq!(cfg.tag().parse::<VitConfig>().unwrap(), cfg);
        }
        let custom = VitConfig {
            image_size: 32,
            patch_size: 8,
            embed_dim: 24,
            depth: 4,
            heads: 3,
            mlp_ratio: 2.0,
            num_classes: 7,
            ln_eps: 1e-5,
        };
        assert_eq!(custom.tag().parse::<VitConfig>().unwrap(), custom);
    }

    #[test]
    fn rejects_bad_geometry() {
        let mut cfg = VitConfig::deit_small();
        cfg.heads = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = VitConfig::deit_small();
        cfg.image_size = 225;
        assert!(cfg.validate().is_err());
        assert!("resnet50".parse::<VitConfig>().is_err());
    }
}
