use std::collections::BTreeMap;
use std::path::Path;

use super::{element_count, put_shape, put_string, read_file, write_file, ByteReader};
use crate::error::{Error, Result};
use crate::vit::VitConfig;

pub const WEIGHT_MAGIC: &[u8; 4] = b"VPKW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Named `f32` tensors for one checkpoint.
///
/// Entries are kept sorted by name, which is also the order they are written in.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub model_tag: String,
    pub format_version: u32,
    entries: BTreeMap<String, StoredTensor>,
}

/// Canonical tensor names and shapes for a model geometry.
///
/// Names and shapes follow the usual DeiT state-dict layout so that a
/// converter can map a checkpoint one-to-one.
pub fn canonical_tensors(cfg: &VitConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.embed_dim;
    let h = cfg.hidden_dim();
    let p = cfg.patch_size;
    let mut out = vec![
        ("cls_token".to_string(), vec![1, 1, d]),
        ("pos_embed".to_string(), vec![1, cfg.num_tokens(), d]),
        ("patch_embed.proj.weight".to_string(), vec![d, 3, p, p]),
        ("patch_embed.proj.bias".to_string(), vec![d]),
    ];
    for b in 0..cfg.depth {
        let pre = format!("blocks.{b}");
        out.extend([
            (format!("{pre}.norm1.weight"), vec![d]),
            (format!("{pre}.norm1.bias"), vec![d]),
            (format!("{pre}.attn.qkv.weight"), vec![3 * d, d]),
            (format!("{pre}.attn.qkv.bias"), vec![3 * d]),
            (format!("{pre}.attn.proj.weight"), vec![d, d]),
            (format!("{pre}.attn.proj.bias"), vec![d]),
            (format!("{pre}.norm2.weight"), vec![d]),
            (format!("{pre}.norm2.bias"), vec![d]),
            (format!("{pre}.mlp.fc1.weight"), vec![h, d]),
            (format!("{pre}.mlp.fc1.bias"), vec![h]),
            (format!("{pre}.mlp.fc2.weight"), vec![d, h]),
            (format!("{pre}.mlp.fc2.bias"), vec![d]),
        ]);
    }
    out.extend([
        ("norm.weight".to_string(), vec![d]),
        ("norm.bias".to_string(), vec![d]),
        ("head.weight".to_string(), vec![cfg.num_classes, d]),
        ("head.bias".to_string(), vec![cfg.num_classes]),
    ]);
    out
}

impl WeightStore {
    pub fn new(model_tag: impl Into<String>) -> Self {
        WeightStore {
            model_tag: model_tag.into(),
            format_version: FORMAT_VERSION,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        if element_count(&shape)? != data.len() {
            return Err(Error::Shape {
                name,
                expected: shape,
                actual: vec![data.len()],
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input(format!("tensor {name} has non-finite values")));
        }
        self.entries.insert(name, StoredTensor { shape, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&StoredTensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::TensorNotFound(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut StoredTensor> {
        self.entries.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<StoredTensor> {
        self.entries.remove(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &StoredTensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Geometry declared by `model_tag`.
    pub fn config(&self) -> Result<VitConfig> {
        self.model_tag.parse()
    }

    /// Checks that every canonical tensor for the declared geometry is
    /// present with the expected shape. Extra tensors are ignored.
    pub fn validate(&self) -> Result<VitConfig> {
        let cfg = self.config()?;
        for (name, shape) in canonical_tensors(&cfg) {
            let t = self
                .entries
                .get(&name)
                .ok_or_else(|| Error::IncompleteCheckpoint(name.clone()))?;
            if t.shape != shape {
                return Err(Error::Shape {
                    name,
                    expected: shape,
                    actual: t.shape.clone(),
                });
            }
        }
        Ok(cfg)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        put_string(&mut out, &self.model_tag)?;
        let count = u32::try_from(self.entries.len())
            .map_err(|_| Error::input("too many tensors for one container"))?;
        out.extend_from_slice(&count.to_le_bytes());
        for (name, t) in &self.entries {
            put_string(&mut out, name)?;
            put_shape(&mut out, &t.shape)?;
            out.reserve(4 * t.data.len());
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a container without checking it against its model tag.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4, "magic")?;
        if magic != WEIGHT_MAGIC {
            return Err(Error::format(format!(
                "bad weight magic {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let format_version = r.u32("version")?;
        if format_version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported weight format version {format_version}"
            )));
        }
        let model_tag = r.string("model tag")?;
        let count = r.u32("entry count")?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let name = r.string("tensor name")?;
            let shape = r.shape("tensor shape")?;
            let n = element_count(&shape)?;
            let data = r.f32s(n, "tensor payload")?;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(format!("tensor {name} has non-finite values")));
            }
            if entries.insert(name.clone(), StoredTensor { shape, data }).is_some() {
                return Err(Error::format(format!("duplicate tensor {name}")));
            }
        }
        r.finish("last tensor")?;
        Ok(WeightStore {
            model_tag,
            format_version,
            entries,
        })
    }
}

/// Reads a weight container and checks it is complete for its model tag.
pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    let path = path.as_ref();
    let store = WeightStore::from_bytes(&read_file(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    store.validate()?;
    Ok(store)
}

pub fn write_weights(path: impl AsRef<Path>, store: &WeightStore) -> Result<()> {
    write_file(path.as_ref(), &store.to_bytes()?)
}
