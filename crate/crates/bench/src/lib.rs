//! Fixtures shared by the criterion benches.

use vitmerge::linalg::softmax_inplace;
use vitmerge::{ClsAttention, Matrix, TokenSequence};

/// Deterministic pseudo-random tokens and class attention for `n` patches.
pub fn layer_input(n: usize, dim: usize, seed: u64) -> (TokenSequence, ClsAttention) {
    let mut state = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
    };
    let data = (0..(n + 1) * dim).map(|_| next()).collect();
    let tokens = TokenSequence::from_embeddings(Matrix::new(n + 1, dim, data).expect("sized")).expect("class token");
    let heads = (0..4)
        .map(|_| {
            let mut row: Vec<f64> = (0..=n).map(|_| next()).collect();
            softmax_inplace(&mut row);
            row
        })
        .collect();
    (tokens, ClsAttention::from_heads(heads).expect("equal rows"))
}
