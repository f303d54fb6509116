use crate::error::{Error, Result};
use crate::tokens::ClsAttention;

/// Head-averaged class attention for each patch token, in sequence order.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores(Vec<f64>);

impl ImportanceScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::input("importance scores must be finite and non-negative"));
        }
        Ok(ImportanceScores(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.0[i]).collect()
    }
}

/// Drops the class token's self-attention entry from the head mean. The
/// remaining values are not renormalized.
pub fn importance_scores(attn: &ClsAttention) -> ImportanceScores {
    ImportanceScores(attn.head_mean.iter().skip(1).copied().collect())
}

/// Number of attentive tokens kept out of `n` at keep rate `keep_rate`,
/// `⌈keep_rate · n⌉`.
pub fn keep_count(keep_rate: f64, n: usize) -> usize {
    // The slack absorbs products such as 0.7 * 10 = 7.000000000000001.
    let k = (keep_rate * n as f64 - 1e-9).ceil();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(n)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoupled {
    /// Patch-token indices with the K highest scores, ascending.
    pub attentive: Vec<usize>,
    /// Everything else, ascending.
    pub inattentive: Vec<usize>,
}

/// Indices ordered by descending score, ties to the lower index.
pub(crate) fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Splits patch tokens into the top-K attentive set and the rest.
pub fn decouple(scores: &ImportanceScores, keep_rate: f64) -> Result<Decoupled> {
    if !(keep_rate > 0.0 && keep_rate <= 1.0) {
        return Err(Error::config(format!("keep rate {keep_rate} outside (0, 1]")));
    }
    let k = keep_count(keep_rate, scores.len());
    if k == 0 {
        return Err(Error::config(format!(
            "keep rate {keep_rate} keeps no tokens out of {}",
            scores.len()
        )));
    }
    Ok(decouple_top_k(scores, k))
}

pub(crate) fn decouple_top_k(scores: &ImportanceScores, k: usize) -> Decoupled {
    let order = rank_by_score(scores.as_slice());
    let mut attentive = order[..k].to_vec();
    let mut inattentive = order[k..].to_vec();
    attentive.sort_unstable();
    inattentive.sort_unstable();
    Decoupled {
        attentive,
        inattentive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scores(v: &[f64]) -> ImportanceScores {
        ImportanceScores::new(v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_attention() {
        let attn = ClsAttention::from_heads(vec![vec![0.2; 5]]).unwrap();
        assert_eq!(importance_scores(&attn).as_slice(), &[0.2; 4]);
    }

    #[test]
    fn head_mean_of_two_heads() {
        let attn =
            ClsAttention::from_heads(vec![vec![0.6, 0.1, 0.3], vec![0.6, 0.3, 0.1]]).unwrap();
        let s = importance_scores(&attn);
        assert!((s.as_slice()[0] - 0.2).abs() < 1e-15);
        assert!((s.as_slice()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn keep_count_rounding() {
        assert_eq!(keep_count(0.7, 196), 138);
        assert_eq!(keep_count(0.7, 138), 97);
        assert_eq!(keep_count(0.7, 97), 68);
        assert_eq!(keep_count(0.7, 10), 7);
        assert_eq!(keep_count(0.6, 3), 2);
        assert_eq!(keep_count(1.0, 5), 5);
        assert_eq!(keep_count(0.5, 0), 0);
    }

    #[test]
    fn top_k_split() {
        let d = decouple(&scores(&[0.5, 0.2, 0.3]), 0.6).unwrap();
        assert_eq!(d.attentive, vec![0, 2]);
        assert_eq!(d.inattentive, vec![1]);
    }

    #[test]
    fn keep_all() {
        let d = decouple(&scores(&[0.5, 0.2, 0.3]), 1.0).unwrap();
        assert_eq!(d.attentive, vec![0, 1, 2]);
        assert!(d.inattentive.is_empty());
    }

    #[test]
    fn ties_go_to_lower_index() {
        let d = decouple(&scores(&[0.25; 4]), 0.5).unwrap();
        assert_eq!(d.attentive, vec![0, 1]);
        assert_eq!(d.inattentive, vec![2, 3]);
    }

    #[test]
    fn rejects_empty_keep() {
        assert!(matches!(
            decouple(&scores(&[0.1, 0.2]), 1e-12),
            Err(Error::InvalidConfig(_))
        ));
        assert!(decouple(&scores(&[0.1]), 0.0).is_err());
        assert!(decouple(&scores(&[0.1]), 1.5).is_err());
    }

    proptest! {
        #[test]
        fn sum_and_mean_rank_alike(heads in proptest::collection::vec(
            proptest::collection::vec(0.0f64..1.0, 9), 1..5)) {
            let attn = ClsAttention::from_heads(heads.clone()).unwrap();
            let mean = importance_scores(&attn);
            let sum: Vec<f64> = (1..9).map(|j| heads.iter().map(|h| h[j]).sum()).collect();
            prop_assert_eq!(rank_by_score(mean.as_slice()), rank_by_score(&sum));
        }

        #[test]
        fn positive_scaling_keeps_split(v in proptest::collection::vec(0.0f64..1.0, 1..40),
                                        eta in 0.05f64..=1.0, p in -8i32..8) {
            let c = 2f64.powi(p);
            let a = decouple(&scores(&v), eta);
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let b = decouple(&scores(&scaled), eta);
            prop_assert_eq!(a.ok(), b.ok());
        }
    }
}
