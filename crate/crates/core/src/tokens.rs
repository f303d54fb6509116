use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Token embeddings for one image: the class token at row 0, patch tokens after it.
///
/// `provenance[i]` lists the original patch indices owned by patch token
/// `i + 1`. Merging concatenates provenance, so the lists always partition
/// the original patch set.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    tokens: Matrix,
    provenance: Vec<Vec<u32>>,
}

impl TokenSequence {
    pub fn new(tokens: Matrix, provenance: Vec<Vec<u32>>) -> Result<Self> {
        if tokens.rows() == 0 {
            return Err(Error::input("token sequence needs a class token"));
        }
        if provenance.len() != tokens.rows() - 1 {
            return Err(Error::input(format!(
                "{} provenance entries for {} patch tokens",
                provenance.len(),
                tokens.rows() - 1
            )));
        }
        Ok(TokenSequence { tokens, provenance })
    }

    /// Fresh sequence where patch token `i` owns original patch `i`.
    pub fn from_embeddings(tokens: Matrix) -> Result<Self> {
        let n = tokens.rows().saturating_sub(1);
        Self::new(tokens, (0..n as u32).map(|i| vec![i]).collect())
    }

    pub fn tokens(&self) -> &Matrix {
        &self.tokens
    }

    pub fn tokens_mut(&mut self) -> &mut Matrix {
        &mut self.tokens
    }

    pub fn into_tokens(self) -> Matrix {
        self.tokens
    }

    pub fn provenance(&self) -> &[Vec<u32>] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.tokens.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows() == 0
    }

    pub fn n_patches(&self) -> usize {
        self.tokens.rows() - 1
    }

    pub fn dim(&self) -> usize {
        self.tokens.cols()
    }

    pub fn class_token(&self) -> &[f64] {
        self.tokens.row(0)
    }

    /// Patch tokens only (class token dropped).
    pub fn patch_tokens(&self) -> Matrix {
        let idx: Vec<usize> = (1..self.tokens.rows()).collect();
        self.tokens.select_rows(&idx)
    }

    /// Returns true when the provenance lists cover `0..n_original` exactly once.
    pub fn is_partition_of(&self, n_original: usize) -> bool {
        self.disjoint_coverage(n_original) == Some(n_original)
    }

    /// Number of original patches covered, or `None` when a patch appears
    /// twice or lies outside `0..n_original`.
    pub fn disjoint_coverage(&self, n_original: usize) -> Option<usize> {
        let mut seen = vec![false; n_original];
        let mut count = 0;
        for p in self.provenance.iter().flatten() {
            match seen.get_mut(*p as usize) {
                Some(s) if !*s => {
                    *s = true;
                    count += 1;
                }
                _ => return None,
            }
        }
        Some(count)
    }
}

/// Class-token attention rows captured inside one MHSA block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsAttention {
    pub per_head: Vec<Vec<f64>>,
    pub head_mean: Vec<f64>,
}

impl ClsAttention {
    pub fn from_heads(per_head: Vec<Vec<f64>>) -> Result<Self> {
        let n = per_head.first().map_or(0, Vec::len);
        if per_head.is_empty() || per_head.iter().any(|h| h.len() != n) {
            return Err(Error::input("attention heads must be non-empty and equal length"));
        }
        let h = per_head.len() as f64;
        let head_mean = (0..n)
            .map(|j| per_head.iter().map(|row| row[j]).sum::<f64>() / h)
            .collect();
        Ok(ClsAttention {
            per_head,
            head_mean,
        })
    }

    pub fn n_tokens(&self) -> usize {
        self.head_mean.len()
    }

    pub fn n_heads(&self) -> usize {
        self.per_head.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_sequence_partitions_patches() {
        let seq = TokenSequence::from_embeddings(Matrix::zeros(5, 3)).unwrap();
        assert_eq!(seq.n_patches(), 4);
        assert!(seq.is_partition_of(4));
        assert!(!seq.is_partition_of(5));
    }

    #[test]
    fn duplicate_provenance_is_not_a_partition() {
        let seq = TokenSequence::new(Matrix::zeros(3, 1), vec![vec![0, 1], vec![1]]).unwrap();
        assert!(!seq.is_partition_of(2));
    }

    #[test]
    fn head_mean() {
        let a = ClsAttention::from_heads(vec![vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        assert!((a.head_mean[0] - 0.4).abs() < 1e-15);
        assert!((a.head_mean[1] - 0.6).abs() < 1e-15);
    }
}
