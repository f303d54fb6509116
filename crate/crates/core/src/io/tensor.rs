use std::path::Path;

use super::{element_count, put_shape, read_file, write_file, ByteReader};
use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"VPKT";
const TENSOR_VERSION: u32 = 1;

/// A shape-tagged tensor held in computation precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if element_count(&shape)? != data.len() {
            return Err(Error::input(format!(
                "tensor shape {shape:?} needs {} values, got {}",
                element_count(&shape)?,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        put_shape(&mut out, &self.shape)?;
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4, "magic")?;
        if magic != TENSOR_MAGIC {
            return Err(Error::format(format!(
                "bad tensor magic {:?}",
                String::from_utf8_lossy(magic)
            )));
        }
        let version = r.u32("version")?;
        if version != TENSOR_VERSION {
            return Err(Error::format(format!("unsupported tensor version {version}")));
        }
        let shape = r.shape("tensor shape")?;
        let count = element_count(&shape)?;
        let data = r.f32s(count, "tensor payload")?;
        r.finish("tensor payload")?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("tensor payload contains non-finite values"));
        }
        Ok(Tensor {
            shape,
            data: data.into_iter().map(f64::from).collect(),
        })
    }
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    Tensor::from_bytes(&read_file(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes `tensor`, narrowing each value to `f32`.
pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    write_file(path.as_ref(), &tensor.to_bytes()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_shape() {
        let t = Tensor::new(vec![3, 224, 224], vec![0.25; 3 * 224 * 224]).unwrap();
        let back = Tensor::from_bytes(&t.to_bytes().unwrap()).unwrap();
        assert_eq!(back.shape, vec![3, 224, 224]);
        assert_eq!(back, t);
    }

    #[test]
    fn scalar() {
        let t = Tensor::new(vec![], vec![1.5]).unwrap();
        let bytes = t.to_bytes().unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 1 + 4);
        let back = Tensor::from_bytes(&bytes).unwrap();
        assert!(back.shape.is_empty());
        assert_eq!(back.data, vec![1.5]);
    }

    #[test]
    fn layout_is_little_endian() {
        let t = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let bytes = t.to_bytes().unwrap();
        let mut want = b"VPKT".to_vec();
        want.extend_from_slice(&[1, 0, 0, 0, 1, 2, 0, 0, 0]);
        want.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f]);
        want.extend_from_slice(&[0x00, 0x00, 0x00, 0xc0]);
        assert_eq!(bytes, want);
    }

    #[test]
    fn length_mismatch_is_format_error() {
        let t = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut bytes = t.to_bytes().unwrap();
        bytes.truncate(bytes.len() - 2);
        assert!(matches!(Tensor::from_bytes(&bytes), Err(Error::Format(_))));

        let mut bytes = t.to_bytes().unwrap();
        bytes.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(Tensor::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = Tensor::new(vec![1], vec![0.0]).unwrap().to_bytes().unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(Tensor::from_bytes(&bytes), Err(Error::Format(_))));
    }
}
