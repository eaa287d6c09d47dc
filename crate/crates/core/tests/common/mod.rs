#![allow(dead_code)]

use lensdof_core::{DepthMap, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random colors in [0, 1].
pub fn noise_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()])
}

/// A smooth slanted depth plus per-pixel jitter and a nearer square.
pub fn random_depth(w: usize, h: usize, rng: &mut ChaCha8Rng) -> DepthMap {
    let base = rng.random_range(2.0..6.0);
    let (gx, gy) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let (cx, cy) = (rng.random_range(0..w), rng.random_range(0..h));
    let half = (w.min(h) / 4).max(1);
    DepthMap::from_fn(w, h, |x, y| {
        let u = x as f64 / w as f64;
        let v = y as f64 / h as f64;
        let jitter: f64 = rng.random_range(0.0..0.3);
        let near = x.abs_diff(cx) <= half && y.abs_diff(cy) <= half;
        let d = base + gx * u + gy * v + jitter;
        if near {
            d * 0.4
        } else {
            d
        }
    })
    .unwrap()
}
