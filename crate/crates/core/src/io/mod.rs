//! Portable on-disk formats: weight containers (`VPKW`), single tensors
//! (`VPKT`) and JSON evaluation manifests.
//!
//! Both binary formats are little-endian regardless of host and store
//! payloads as IEEE-754 binary32.

mod manifest;
mod tensor;
mod weights;

pub use manifest::{load_manifest, write_manifest, Manifest, Record};
pub use tensor::{load_tensor, write_tensor, Tensor, TENSOR_MAGIC};
pub use weights::{
    canonical_tensors, load_weights, write_weights, StoredTensor, WeightStore, FORMAT_VERSION,
    WEIGHT_MAGIC,
};

use crate::error::{Error, Result};

/// Bounds-checked little-endian cursor.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::format(format!(
                    "truncated {what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub(crate) fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u16(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::format(format!("{what} is not UTF-8")))
    }

    pub(crate) fn shape(&mut self, what: &str) -> Result<Vec<usize>> {
        let ndim = self.u8(what)? as usize;
        (0..ndim).map(|_| Ok(self.u32(what)? as usize)).collect()
    }

    pub(crate) fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = count
            .checked_mul(4)
            .ok_or_else(|| Error::format(format!("{what}: element count overflows")))?;
        let b = self.take(bytes, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub(crate) fn finish(&self, what: &str) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(format!(
                "{} trailing bytes after {what}",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn put_string(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::input(format!("string of {} bytes exceeds u16 length", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub(crate) fn put_shape(out: &mut Vec<u8>, shape: &[usize]) -> Result<()> {
    let ndim = u8::try_from(shape.len())
        .map_err(|_| Error::input(format!("tensor rank {} exceeds 255", shape.len())))?;
    out.push(ndim);
    for &d in shape {
        let d = u32::try_from(d).map_err(|_| Error::input(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    Ok(())
}

pub(crate) fn element_count(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format(format!("shape {shape:?} overflows")))
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
