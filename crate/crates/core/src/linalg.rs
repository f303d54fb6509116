//! Dense row-major matrix kernels.
//!
//! Everything here computes in `f64`. Weights are stored as `f32` on disk and
//! widened on load, so accumulation order has no visible effect on the
//! tolerances used elsewhere in the crate.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for r in 0..self.rows {
            list.entry(&self.row(r));
        }
        list.finish()
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::input(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equal-length rows. An empty slice yields a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::input(format!(
                    "row {i} has length {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |r| self.row(r))
    }

    /// New matrix made of the listed rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Copy of columns `start..start + len`.
    pub fn column_slice(&self, start: usize, len: usize) -> Matrix {
        assert!(start + len <= self.cols, "column slice out of bounds");
        let mut data = Vec::with_capacity(self.rows * len);
        for r in self.row_iter() {
            data.extend_from_slice(&r[start..start + len]);
        }
        Matrix {
            rows: self.rows,
            cols: len,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::input(format!(
                "add: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.cols {
            return Err(Error::input(format!(
                "bias length {} does not match {} columns",
                bias.len(),
                self.cols
            )));
        }
        for r in 0..self.rows {
            for (x, b) in self.row_mut(r).iter_mut().zip(bias) {
                *x += b;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for x in &mut self.data {
            *x *= alpha;
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for x in &mut self.data {
            *x = f(*x);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Vertical concatenation.
    pub fn vstack(parts: &[&Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::input(format!(
                    "vstack: column count {} vs {cols}",
                    m.cols
                )));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Matrix { rows, cols, data })
    }
}

/// Four interleaved partial sums, which lets the compiler vectorize.
#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len().min(v.len());
    let (u, v) = (&u[..n], &v[..n]);
    let mut acc = [0.0; 4];
    let (uc, vc) = (u.chunks_exact(4), v.chunks_exact(4));
    let tail: f64 = uc.remainder().iter().zip(vc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in uc.zip(vc) {
        for k in 0..4 {
            acc[k] += a[k] * b[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn sqdist(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::input(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let aik = a.data[i * a.cols + k];
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ`, the shape of every linear layer with `[out, in]` weights.
pub fn matmul_transposed(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::input(format!(
            "matmul_transposed: {}x{} times ({}x{})^T",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(ar, b.row(j));
        }
    }
    Ok(out)
}

/// Affine map `x · Wᵀ + b` with `weight` laid out `[out_features, in_features]`.
pub fn linear(x: &Matrix, weight: &Matrix, bias: Option<&[f64]>) -> Result<Matrix> {
    let mut y = matmul_transposed(x, weight)?;
    if let Some(b) = bias {
        y.add_row_vector(b)?;
    }
    Ok(y)
}

/// Numerically stable softmax of every row (max subtracted first).
pub fn row_softmax(a: &Matrix) -> Matrix {
    let mut out = a.clone();
    for r in 0..out.rows {
        softmax_inplace(out.row_mut(r));
    }
    out
}

pub fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Per-row normalization with biased variance, followed by `gamma`/`beta`.
pub fn layer_norm(a: &Matrix, gamma: &[f64], beta: &[f64], eps: f64) -> Result<Matrix> {
    if gamma.len() != a.cols || beta.len() != a.cols {
        return Err(Error::input(format!(
            "layer_norm: gamma/beta lengths {}/{} for {} columns",
            gamma.len(),
            beta.len(),
            a.cols
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::input("layer_norm: eps must be positive"));
    }
    let n = a.cols as f64;
    let mut out = a.clone();
    for r in 0..out.rows {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        for ((x, g), b) in row.iter_mut().zip(gamma).zip(beta) {
            *x = (*x - mean) * inv * g + b;
        }
    }
    Ok(out)
}

/// Exact GeLU, `x · Φ(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_inplace(a: &mut Matrix) {
    a.map_inplace(gelu);
}

/// Symmetric matrix of squared Euclidean distances between rows.
pub fn pairwise_sqdist(a: &Matrix) -> Matrix {
    let n = a.rows;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = sqdist(a.row(i), a.row(j));
            out.data[i * n + j] = d;
            out.data[j * n + i] = d;
        }
    }
    out
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::input(format!(
            "cosine_similarity: lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::input("cosine_similarity: zero-norm vector"));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Per-column median; the midpoint of the two central values for even row counts.
pub fn column_median(a: &Matrix) -> Result<Vec<f64>> {
    if a.rows == 0 {
        return Err(Error::input("column_median: empty matrix"));
    }
    let mid = a.rows / 2;
    let mut col = Vec::with_capacity(a.rows);
    let mut out = Vec::with_capacity(a.cols);
    for c in 0..a.cols {
        col.clear();
        col.extend((0..a.rows).map(|r| a.get(r, c)));
        col.sort_by(f64::total_cmp);
        let m = if a.rows % 2 == 1 {
            col[mid]
        } else {
            0.5 * (col[mid - 1] + col[mid])
        };
        out.push(m);
    }
    Ok(out)
}
