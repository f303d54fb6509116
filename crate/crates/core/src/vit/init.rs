use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::VitConfig;
use crate::io::{canonical_tensors, Tensor, WeightStore};

/// Deterministic random checkpoint for `cfg`.
///
/// Linear weights are drawn from `N(0, 1/fan_in)` so activations keep their
/// scale through depth; layer-norm gains sit near one.
pub fn random_weights(cfg: &VitConfig, seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new(cfg.tag());
    for (name, shape) in canonical_tensors(cfg) {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = if name.ends_with("norm1.weight")
            || name.ends_with("norm2.weight")
            || name == "norm.weight"
        {
            (0..n).map(|_| 1.0 + 0.1 * sample(&mut rng)).collect()
        } else if name.ends_with(".bias") {
            (0..n).map(|_| 0.02 * sample(&mut rng)).collect()
        } else if name == "cls_token" || name == "pos_embed" {
            (0..n).map(|_| 0.5 * sample(&mut rng)).collect()
        } else {
            let fan_in: usize = shape[1..].iter().product();
            let std = 1.0 / (fan_in as f32).sqrt();
            let dist = Normal::new(0.0, std).expect("positive std");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        };
        store
            .insert(name, shape, data)
            .expect("shapes come from the canonical table");
    }
    store
}

fn sample(rng: &mut impl Rng) -> f32 {
    StandardNormal.sample(rng)
}

/// Standard-normal `[3, S, S]` image, rounded through `f32` like a stored tensor.
pub fn random_image(cfg: &VitConfig, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = cfg.image_size;
    let data = (0..3 * s * s)
        .map(|_| f64::from(sample(&mut rng)))
        .collect();
    Tensor::new(vec![3, s, s], data).expect("shape matches data")
}
