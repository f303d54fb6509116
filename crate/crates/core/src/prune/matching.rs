use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMatching {
    /// Disjoint `(i, j)` pairs with `i < j`, in acceptance order.
    pub pairs: Vec<(usize, usize)>,
    /// Tokens not in any pair, ascending.
    pub unmatched: Vec<usize>,
    /// Set when fewer than the requested number of disjoint pairs existed.
    pub clamped: bool,
}

/// Greedily accepts the most cosine-similar disjoint pairs, up to `q`.
///
/// Candidates are visited by descending similarity (ties in lexicographic
/// `(i, j)` order) and skipped when either token is already taken.
pub fn match_attentive(subset: &Matrix, q: usize) -> Result<PairMatching> {
    let n = subset.rows();
    if q == 0 {
        return Ok(PairMatching {
            pairs: Vec::new(),
            unmatched: (0..n).collect(),
            clamped: false,
        });
    }

    let norms: Vec<f64> = subset.row_iter().map(norm).collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::input(format!("match_attentive: token {i} has zero norm")));
    }

    let mut candidates = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let sim = dot(subset.row(i), subset.row(j)) / (norms[i] * norms[j]);
            candidates.push((sim, i, j));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));

    let mut taken = vec![false; n];
    let mut pairs = Vec::with_capacity(q);
    for (_, i, j) in candidates {
        if pairs.len() == q {
            break;
        }
        if taken[i] || taken[j] {
            continue;
        }
        taken[i] = true;
        taken[j] = true;
        pairs.push((i, j));
    }
    let clamped = pairs.len() < q;
    let unmatched = (0..n).filter(|&i| !taken[i]).collect();
    Ok(PairMatching {
        pairs,
        unmatched,
        clamped,
    })
}
