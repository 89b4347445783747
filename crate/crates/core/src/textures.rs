//! Procedural piecewise-constant textures used as synthetic scene content.
//!
//! Layers at different depths are told apart only through detail at or
//! above the microlens scale, so the generator scatters rectangles and
//! discs a few texture pixels across rather than smooth gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One texture of `shape` with values in `[0.05, 1]`, fully determined by `seed`.
pub fn procedural_texture(shape: (usize, usize), seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = shape;
    let mut t = Array2::from_elem(shape, rng.random_range(0.05..1.0));
    let shapes = (h * w / 24).max(4);
    let max_side = ((h.min(w) as f64) / 3.0).max(3.0);
    for _ in 0..shapes {
        let value = rng.random_range(0.05..1.0);
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        let a = rng.random_range(1.5..max_side / 2.0);
        let b = rng.random_range(1.5..max_side / 2.0);
        let disc = rng.random_bool(0.4);
        for ((i, j), v) in t.indexed_iter_mut() {
            let dy = (i as f64 + 0.5 - cy) / a;
            let dx = (j as f64 + 0.5 - cx) / b;
            let inside = if disc { dy * dy + dx * dx <= 1.0 } else { dy.abs() <= 1.0 && dx.abs() <= 1.0 };
            if inside {
                *v = value;
            }
        }
    }
    t
}

/// `count` textures with consecutive seeds starting at `seed`.
pub fn texture_corpus(count: usize, shape: (usize, usize), seed: u64) -> Vec<Array2<f64>> {
    (0..count as u64).map(|i| procedural_texture(shape, seed.wrapping_add(i))).collect()
}
