use crate::error::{Error, Result};
use crate::io::{Tensor, WeightStore};
use crate::linalg::{gelu_inplace, layer_norm, linear, matmul, matmul_transposed, row_softmax, Matrix};
use crate::prune::{prune_layer_with_stats, PruneConfig, PruneStats};
use crate::tokens::{ClsAttention, TokenSequence};

use super::VitConfig;

/// Weights of one transformer block, widened to `f64`.
///
/// Linear weights are `[out_features, in_features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub norm1_weight: Vec<f64>,
    pub norm1_bias: Vec<f64>,
    pub qkv_weight: Matrix,
    pub qkv_bias: Vec<f64>,
    pub proj_weight: Matrix,
    pub proj_bias: Vec<f64>,
    pub norm2_weight: Vec<f64>,
    pub norm2_bias: Vec<f64>,
    pub fc1_weight: Matrix,
    pub fc1_bias: Vec<f64>,
    pub fc2_weight: Matrix,
    pub fc2_bias: Vec<f64>,
}

impl BlockWeights {
    /// All-zero linear layers with unit layer-norm gain: the block is the identity.
    pub fn zeros(cfg: &VitConfig) -> Self {
        let d = cfg.embed_dim;
        let h = cfg.hidden_dim();
        BlockWeights {
            norm1_weight: vec![1.0; d],
            norm1_bias: vec![0.0; d],
            qkv_weight: Matrix::zeros(3 * d, d),
            qkv_bias: vec![0.0; 3 * d],
            proj_weight: Matrix::zeros(d, d),
            proj_bias: vec![0.0; d],
            norm2_weight: vec![1.0; d],
            norm2_bias: vec![0.0; d],
            fc1_weight: Matrix::zeros(h, d),
            fc1_bias: vec![0.0; h],
            fc2_weight: Matrix::zeros(d, h),
            fc2_bias: vec![0.0; d],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VitModel {
    config: VitConfig,
    cls_token: Vec<f64>,
    pos_embed: Matrix,
    patch_weight: Matrix,
    patch_bias: Vec<f64>,
    blocks: Vec<BlockWeights>,
    norm_weight: Vec<f64>,
    norm_bias: Vec<f64>,
    head_weight: Matrix,
    head_bias: Vec<f64>,
}

fn vector(store: &WeightStore, name: &str) -> Result<Vec<f64>> {
    Ok(store.get(name)?.data.iter().map(|&v| f64::from(v)).collect())
}

/// Reads a tensor as a matrix with `rows` rows, flattening trailing dims.
fn matrix(store: &WeightStore, name: &str, rows: usize) -> Result<Matrix> {
    let t = store.get(name)?;
    let cols = t.data.len().checked_div(rows).unwrap_or(0);
    Matrix::new(rows, cols, t.data.iter().map(|&v| f64::from(v)).collect())
}

/// Everything one forward pass observed.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub prune_layers: Vec<usize>,
    pub layers: Vec<LayerTrace>,
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// 1-based block index.
    pub block: usize,
    /// Tokens entering MHSA, class token included.
    pub tokens_mhsa: usize,
    /// Tokens entering the FFN, class token included.
    pub tokens_ffn: usize,
    pub cls_attention: ClsAttention,
    pub prune: Option<PruneStats>,
    /// The sequence handed to the FFN: post-prune at prune layers,
    /// post-MHSA elsewhere.
    pub ffn_input: TokenSequence,
}

impl ForwardTrace {
    pub fn layer(&self, block: usize) -> Option<&LayerTrace> {
        self.layers.iter().find(|l| l.block == block)
    }

    pub fn token_counts(&self) -> Vec<(usize, usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.block, l.tokens_mhsa, l.tokens_ffn))
            .collect()
    }
}

impl VitModel {
    /// Builds a model from a checkpoint, validating it against its model tag.
    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let cfg = store.validate()?;
        let d = cfg.embed_dim;
        let h = cfg.hidden_dim();
        let blocks = (0..cfg.depth)
            .map(|b| {
                let n = |s: &str| format!("blocks.{b}.{s}");
                Ok(BlockWeights {
                    norm1_weight: vector(store, &n("norm1.weight"))?,
                    norm1_bias: vector(store, &n("norm1.bias"))?,
                    qkv_weight: matrix(store, &n("attn.qkv.weight"), 3 * d)?,
                    qkv_bias: vector(store, &n("attn.qkv.bias"))?,
                    proj_weight: matrix(store, &n("attn.proj.weight"), d)?,
                    proj_bias: vector(store, &n("attn.proj.bias"))?,
                    norm2_weight: vector(store, &n("norm2.weight"))?,
                    norm2_bias: vector(store, &n("norm2.bias"))?,
                    fc1_weight: matrix(store, &n("mlp.fc1.weight"), h)?,
                    fc1_bias: vector(store, &n("mlp.fc1.bias"))?,
                    fc2_weight: matrix(store, &n("mlp.fc2.weight"), d)?,
                    fc2_bias: vector(store, &n("mlp.fc2.bias"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(VitModel {
            config: cfg,
            cls_token: vector(store, "cls_token")?,
            pos_embed: matrix(store, "pos_embed", cfg.num_tokens())?,
            patch_weight: matrix(store, "patch_embed.proj.weight", d)?,
            patch_bias: vector(store, "patch_embed.proj.bias")?,
            blocks,
            norm_weight: vector(store, "norm.weight")?,
            norm_bias: vector(store, "norm.bias")?,
            head_weight: matrix(store, "head.weight", cfg.num_classes)?,
            head_bias: vector(store, "head.bias")?,
        })
    }

    pub fn config(&self) -> &VitConfig {
        &self.config
    }

    pub fn block(&self, index: usize) -> &BlockWeights {
        &self.blocks[index]
    }

    /// Splits a `[3, S, S]` image into raster-ordered patches, projects them,
    /// prepends the class token and adds position embeddings.
    pub fn patch_embed(&self, image: &Tensor) -> Result<TokenSequence> {
        let cfg = &self.config;
        let s = cfg.image_size;
        if image.shape != [3, s, s] {
            return Err(Error::input(format!(
                "image shape {:?}, model expects [3, {s}, {s}]",
                image.shape
            )));
        }
        let p = cfg.patch_size;
        let g = cfg.grid();
        let mut patches = Matrix::zeros(cfg.num_patches(), cfg.patch_dim());
        for gy in 0..g {
            for gx in 0..g {
                let row = patches.row_mut(gy * g + gx);
                let mut k = 0;
                for c in 0..3 {
                    for y in 0..p {
                        let base = (c * s + gy * p + y) * s + gx * p;
                        row[k..k + p].copy_from_slice(&image.data[base..base + p]);
                        k += p;
                    }
                }
            }
        }
        let embedded = linear(&patches, &self.patch_weight, Some(&self.patch_bias))?;
        let cls = Matrix::new(1, cfg.embed_dim, self.cls_token.clone())?;
        let mut tokens = Matrix::vstack(&[&cls, &embedded])?;
        tokens.add_assign(&self.pos_embed)?;
        TokenSequence::from_embeddings(tokens)
    }

    /// Final layer norm on the class token, then the classifier head.
    pub fn classify(&self, tokens: &TokenSequence) -> Result<Vec<f64>> {
        let cls = Matrix::new(1, tokens.dim(), tokens.class_token().to_vec())?;
        let normed = layer_norm(&cls, &self.norm_weight, &self.norm_bias, self.config.ln_eps)?;
        Ok(linear(&normed, &self.head_weight, Some(&self.head_bias))?.into_data())
    }

    /// Runs every block, applying the reduction stage between MHSA and FFN
    /// at the configured blocks.
    pub fn forward(&self, image: &Tensor, prune: Option<&PruneConfig>) -> Result<(Vec<f64>, ForwardTrace)> {
        if let Some(p) = prune {
            p.validate(self.config.depth)?;
        }
        let mut seq = self.patch_embed(image)?;
        let mut trace = ForwardTrace {
            prune_layers: prune
                .filter(|p| p.strategy != crate::prune::Strategy::None)
                .map(|p| p.prune_layers.clone())
                .unwrap_or_default(),
            layers: Vec::with_capacity(self.config.depth),
        };
        for (b, weights) in self.blocks.iter().enumerate() {
            let block = b + 1;
            let tokens_mhsa = seq.len();
            let (after_attn, attn) = mhsa(&seq, weights, &self.config)?;
            let (ffn_input, stats) = match prune.filter(|p| p.is_prune_layer(block)) {
                Some(p) => {
                    let (s, st) = prune_layer_with_stats(&after_attn, &attn, p)?;
                    (s, Some(st))
                }
                None => (after_attn, None),
            };
            seq = ffn(&ffn_input, weights, &self.config)?;
            trace.layers.push(LayerTrace {
                block,
                tokens_mhsa,
                tokens_ffn: ffn_input.len(),
                cls_attention: attn,
                prune: stats,
                ffn_input,
            });
        }
        Ok((self.classify(&seq)?, trace))
    }
}

/// Pre-norm multi-head self-attention with residual.
///
/// Returns the updated tokens and the class token's softmaxed attention row
/// for every head.
pub fn mhsa(tokens: &TokenSequence, w: &BlockWeights, cfg: &VitConfig) -> Result<(TokenSequence, ClsAttention)> {
    let d_model = cfg.embed_dim;
    if tokens.dim() != d_model {
        return Err(Error::input(format!(
            "token dim {} does not match embed_dim {d_model}",
            tokens.dim()
        )));
    }
    let hd = cfg.head_dim();
    let scale = 1.0 / (hd as f64).sqrt();
    let x = layer_norm(tokens.tokens(), &w.norm1_weight, &w.norm1_bias, cfg.ln_eps)?;
    let qkv = linear(&x, &w.qkv_weight, Some(&w.qkv_bias))?;

    let n = tokens.len();
    let mut concat = Matrix::zeros(n, d_model);
    let mut per_head = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let q = qkv.column_slice(h * hd, hd);
        let k = qkv.column_slice(d_model + h * hd, hd);
        let v = qkv.column_slice(2 * d_model + h * hd, hd);
        let mut scores = matmul_transposed(&q, &k)?;
        scores.scale(scale);
        let attn = row_softmax(&scores);
        per_head.push(attn.row(0).to_vec());
        let out = matmul(&attn, &v)?;
        for r in 0..n {
            concat.row_mut(r)[h * hd..(h + 1) * hd].copy_from_slice(out.row(r));
        }
    }
    let projected = linear(&concat, &w.proj_weight, Some(&w.proj_bias))?;
    let mut out = tokens.clone();
    out.tokens_mut().add_assign(&projected)?;
    Ok((out, ClsAttention::from_heads(per_head)?))
}

/// Pre-norm `Linear → GeLU → Linear` with residual.
pub fn ffn(tokens: &TokenSequence, w: &BlockWeights, cfg: &VitConfig) -> Result<TokenSequence> {
    if w.fc1_weight.rows() != cfg.hidden_dim() {
        return Err(Error::input(format!(
            "fc1 has {} outputs, expected hidden size {}",
            w.fc1_weight.rows(),
            cfg.hidden_dim()
        )));
    }
    let x = layer_norm(tokens.tokens(), &w.norm2_weight, &w.norm2_bias, cfg.ln_eps)?;
    let mut hidden = linear(&x, &w.fc1_weight, Some(&w.fc1_bias))?;
    gelu_inplace(&mut hidden);
    let y = linear(&hidden, &w.fc2_weight, Some(&w.fc2_bias))?;
    let mut out = tokens.clone();
    out.tokens_mut().add_assign(&y)?;
    Ok(out)
}
