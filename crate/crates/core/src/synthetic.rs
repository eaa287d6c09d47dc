//! Procedural all-in-focus RGB-D scenes for tests, benchmarks and demos.
//!
//! A scene is a tilted, textured background plane with a handful of textured
//! disks and rectangles floating in front of it at random depths. Everything
//! is a deterministic function of the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{DepthMap, Image};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, seed: u64) -> Self {
        Self {
            width,
            height,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Footprint {
    Disk { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Footprint {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Footprint::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Footprint::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Texture {
    base: [f64; 3],
    alt: [f64; 3],
    cell: f64,
    phase: f64,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut color = || {
            [
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
                rng.random_range(0.05..0.95),
            ]
        };
        let base = color();
        let alt = color();
        Self {
            base,
            alt,
            cell: rng.random_range(2.0..5.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }

    fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        let checker = ((x / self.cell).floor() + (y / self.cell).floor()).rem_euclid(2.0);
        let wave = 0.5 + 0.5 * (0.7 * x + 0.4 * y + self.phase).sin();
        let t = (0.75 * checker + 0.25 * wave).clamp(0.0, 1.0);
        [0, 1, 2].map(|c| self.base[c] * (1.0 - t) + self.alt[c] * t)
    }
}

struct Layer {
    footprint: Footprint,
    depth: f64,
    texture: Texture,
}

/// Generates a display-space color image and its depth map.
pub fn generate(spec: &SceneSpec) -> (Image, DepthMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.width as f64, spec.height as f64);

    let far = rng.random_range(8.0..12.0);
    let tilt_x = rng.random_range(-0.3..0.3);
    let tilt_y = rng.random_range(0.0..0.4);
    let background = Texture::random(&mut rng);

    let count = rng.random_range(3..=5);
    let mut layers: Vec<Layer> = (0..count)
        .map(|_| {
            let footprint = if rng.random_bool(0.5) {
                Footprint::Disk {
                    cx: rng.random_range(0.1..0.9) * w,
                    cy: rng.random_range(0.1..0.9) * h,
                    r: rng.random_range(0.12..0.3) * w.min(h),
                }
            } else {
                let (cx, cy) = (
                    rng.random_range(0.15..0.85) * w,
                    rng.random_range(0.15..0.85) * h,
                );
                let (hw, hh) = (
                    rng.random_range(0.1..0.25) * w,
                    rng.random_range(0.1..0.25) * h,
                );
                Footprint::Rect {
                    x0: cx - hw,
                    y0: cy - hh,
                    x1: cx + hw,
                    y1: cy + hh,
                }
            };
            Layer {
                footprint,
                depth: 1.0 / rng.random_range(0.15..1.0),
                texture: Texture::random(&mut rng),
            }
        })
        .collect();
    // nearest layer wins
    layers.sort_by(|a, b| a.depth.total_cmp(&b.depth));

    let mut depth = Vec::with_capacity(spec.width * spec.height);
    let color = Image::from_fn(spec.width, spec.height, |x, y| {
        let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
        match layers.iter().find(|l| l.footprint.contains(xf, yf)) {
            Some(layer) => {
                depth.push(layer.depth);
                layer.texture.sample(xf, yf)
            }
            None => {
                let (u, v) = (xf / w - 0.5, yf / h - 0.5);
                depth.push(far * (1.0 + tilt_x * u - tilt_y * v));
                background.sample(xf, yf)
            }
        }
    });
    let depth = DepthMap::new(spec.width, spec.height, depth).expect("positive procedural depth");
    (color, depth)
}
