use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Weights `s_j / Σ_{k∈C} s_k`; merged tokens are convex combinations.
    #[default]
    Normalized,
    /// Weights `s_j` as they come, so merged tokens scale with attention mass.
    Raw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Merged {
    pub tokens: Matrix,
    /// Groups whose scores summed to zero and were averaged instead.
    pub fallback_groups: Vec<usize>,
}

fn check_partition(n: usize, groups: &[Vec<usize>]) -> Result<()> {
    let mut seen = vec![false; n];
    for g in groups {
        if g.is_empty() {
            return Err(Error::input("weighted_merge: empty group"));
        }
        for &i in g {
            match seen.get_mut(i) {
                Some(s) if !*s => *s = true,
                Some(_) => return Err(Error::input(format!("weighted_merge: token {i} in two groups"))),
                None => return Err(Error::input(format!("weighted_merge: token {i} out of range"))),
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::input(format!("weighted_merge: token {i} in no group")));
    }
    Ok(())
}

/// Collapses each group of rows into one score-weighted row.
///
/// `groups` must partition `0..tokens.rows()`; `scores` is aligned with rows.
pub fn weighted_merge(
    tokens: &Matrix,
    groups: &[Vec<usize>],
    scores: &[f64],
    mode: WeightMode,
) -> Result<Merged> {
    if scores.len() != tokens.rows() {
        return Err(Error::input(format!(
            "weighted_merge: {} scores for {} tokens",
            scores.len(),
            tokens.rows()
        )));
    }
    check_partition(tokens.rows(), groups)?;

    let dim = tokens.cols();
    let mut out = Matrix::zeros(groups.len(), dim);
    let mut fallback_groups = Vec::new();
    for (g, members) in groups.iter().enumerate() {
        let row = out.row_mut(g);
        if mode == WeightMode::Normalized && members.len() == 1 {
            row.copy_from_slice(tokens.row(members[0]));
            continue;
        }
        let weights: Vec<f64> = match mode {
            WeightMode::Raw => members.iter().map(|&i| scores[i]).collect(),
            WeightMode::Normalized => {
                let total: f64 = members.iter().map(|&i| scores[i]).sum();
                if total > 0.0 {
                    members.iter().map(|&i| scores[i] / total).collect()
                } else {
                    fallback_groups.push(g);
                    vec![1.0 / members.len() as f64; members.len()]
                }
            }
        };
        for (&i, w) in members.iter().zip(&weights) {
            for (o, x) in row.iter_mut().zip(tokens.row(i)) {
                *o += w * x;
            }
        }
        if mode == WeightMode::Normalized {
            // Rounding can leave the hull by an ulp.
            for (c, o) in row.iter_mut().enumerate() {
                let (lo, hi) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let x = tokens.get(i, c);
                    (lo.min(x), hi.max(x))
                });
                *o = o.clamp(lo, hi);
            }
        }
    }
    Ok(Merged {
        tokens: out,
        fallback_groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_tokens_merge_to_themselves() {
        let t = [0.1, -3.7, 2.2];
        let m = Matrix::from_rows(&[t, t, t]).unwrap();
        let out = weighted_merge(&m, &[vec![0, 1, 2]], &[0.3, 0.1, 0.7], WeightMode::Normalized).unwrap();
        assert_eq!(out.tokens.row(0), &t);
    }

    #[test]
    fn two_token_weighted_mean() {
        let m = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let out = weighted_merge(&m, &[vec![0, 1]], &[1.0, 3.0], WeightMode::Normalized).unwrap();
        assert_eq!(out.tokens.row(0), &[1.5]);

        let raw = weighted_merge(&m, &[vec![0, 1]], &[1.0, 3.0], WeightMode::Raw).unwrap();
        assert_eq!(raw.tokens.row(0), &[6.0]);
    }

    #[test]
    fn singletons_pass_through() {
        let m = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let out = weighted_merge(&m, &[vec![0], vec![1]], &[0.2, 0.0], WeightMode::Normalized).unwrap();
        assert_eq!(out.tokens, m);
        assert!(out.fallback_groups.is_empty());
    }

    #[test]
    fn zero_scores_fall_back_to_mean() {
        let m = Matrix::from_rows(&[[1.0], [3.0]]).unwrap();
        let out = weighted_merge(&m, &[vec![0, 1]], &[0.0, 0.0], WeightMode::Normalized).unwrap();
        assert_eq!(out.tokens.row(0), &[2.0]);
        assert_eq!(out.fallback_groups, vec![0]);
    }

    #[test]
    fn rejects_non_partition() {
        let m = Matrix::zeros(3, 1);
        let s = [1.0; 3];
        assert!(weighted_merge(&m, &[vec![0, 1]], &s, WeightMode::Normalized).is_err());
        assert!(weighted_merge(&m, &[vec![0, 1], vec![1, 2]], &s, WeightMode::Normalized).is_err());
        assert!(weighted_merge(&m, &[vec![0, 1, 2, 3]], &s, WeightMode::Normalized).is_err());
    }

    proptest! {
        #[test]
        fn output_in_convex_hull(rows in proptest::collection::vec(
                proptest::collection::vec(-10.0f64..10.0, 4), 1..12),
            scores in proptest::collection::vec(0.0f64..1.0, 12),
            split in 1usize..12) {
            let n = rows.len();
            let m = Matrix::from_rows(&rows).unwrap();
            let cut = split.min(n);
            let groups: Vec<Vec<usize>> = [(0..cut).collect::<Vec<_>>(), (cut..n).collect()]
                .into_iter().filter(|g| !g.is_empty()).collect();
            let out = weighted_merge(&m, &groups, &scores[..n], WeightMode::Normalized).unwrap();
            for (g, members) in groups.iter().enumerate() {
                for c in 0..4 {
                    let lo = members.iter().map(|&i| m.get(i, c)).fold(f64::INFINITY, f64::min);
                    let hi = members.iter().map(|&i| m.get(i, c)).fold(f64::NEG_INFINITY, f64::max);
                    let v = out.tokens.get(g, c);
                    prop_assert!(lo <= v && v <= hi);
                }
            }
        }
    }
}
