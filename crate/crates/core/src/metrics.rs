//! Full-reference image metrics: PSNR, SSIM and mean absolute error.
//!
//! SSIM uses the usual 11×11 Gaussian window (σ = 1.5) with K1 = 0.01,
//! K2 = 0.03 and a dynamic range of 1. Statistics are taken only at window
//! positions fully inside the image; the per-pixel map is zero outside that
//! region. Color images are scored per channel and averaged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

/// PSNR reported for identical images.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::config("ssim.window", "must be odd and positive"));
        }
        if !(self.sigma > 0.0 && self.k1 > 0.0 && self.k2 > 0.0 && self.dynamic_range > 0.0) {
            return Err(Error::config(
                "ssim",
                "sigma, k1, k2 and dynamic_range must be > 0",
            ));
        }
        Ok(())
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let half = (self.window / 2) as f64;
        let taps: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - half;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / sum).collect()
    }

    fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Window centers with full support.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidRegion {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl ValidRegion {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && y >= self.y0 && x < self.x0 + self.width && y < self.y0 + self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct SsimMap {
    /// Mean over the valid region.
    pub mean: f64,
    pub width: usize,
    pub height: usize,
    /// Channel-averaged SSIM per pixel, zero outside `valid`.
    pub map: Vec<f64>,
    pub valid: ValidRegion,
}

pub fn l1(x: &Image, y: &Image) -> Result<f64> {
    x.same_dims(y, "l1")?;
    let sum: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(sum / x.data().len() as f64)
}

pub fn mse(x: &Image, y: &Image) -> Result<f64> {
    x.same_dims(y, "mse")?;
    let sum: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.data().len() as f64)
}

/// `10·log10(peak² / MSE)`; identical images give [`PSNR_IDENTICAL`].
pub fn psnr(x: &Image, y: &Image, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::domain(format!("peak must be > 0, got {peak}")));
    }
    let mse = mse(x, y)?;
    if mse == 0.0 {
        return Ok(PSNR_IDENTICAL);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn valid_region(width: usize, height: usize, cfg: &SsimConfig) -> Result<ValidRegion> {
    if width < cfg.window || height < cfg.window {
        return Err(Error::domain(format!(
            "SSIM needs at least {0}x{0} pixels, got {width}x{height}",
            cfg.window
        )));
    }
    let half = cfg.window / 2;
    Ok(ValidRegion {
        x0: half,
        y0: half,
        width: width - 2 * half,
        height: height - 2 * half,
    })
}

fn channel_plane(img: &Image, ch: usize) -> Vec<f64> {
    img.data()
        .iter()
        .skip(ch)
        .step_by(CHANNELS)
        .copied()
        .collect()
}

/// Windowed weighted sum at every valid center (correlation, no padding).
fn filter_valid(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let vw = width + 1 - k;
    let vh = height + 1 - k;
    let mut horiz = vec![0.0; vw * height];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..vw {
            horiz[y * vw + x] = kernel.iter().zip(&row[x..x + k]).map(|(g, v)| g * v).sum();
        }
    }
    let mut out = vec![0.0; vw * vh];
    for y in 0..vh {
        for x in 0..vw {
            out[y * vw + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, g)| g * horiz[(y + j) * vw + x])
                .sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: spreads a valid-region field back onto the
/// full image.
fn filter_adjoint(field: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let vw = width + 1 - k;
    let vh = height + 1 - k;
    let mut vert = vec![0.0; vw * height];
    for y in 0..vh {
        for x in 0..vw {
            let v = field[y * vw + x];
            for (j, g) in kernel.iter().enumerate() {
                vert[(y + j) * vw + x] += g * v;
            }
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..vw {
            let v = vert[y * vw + x];
            for (i, g) in kernel.iter().enumerate() {
                out[y * width + x + i] += g * v;
            }
        }
    }
    out
}

/// Local statistics of one channel pair at every valid center.
struct LocalStats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    var_x: Vec<f64>,
    var_y: Vec<f64>,
    cov: Vec<f64>,
}

fn local_stats(x: &[f64], y: &[f64], width: usize, height: usize, kernel: &[f64]) -> LocalStats {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(x, width, height, kernel);
    let mu_y = filter_valid(y, width, height, kernel);
    let exx = filter_valid(&xx, width, height, kernel);
    let eyy = filter_valid(&yy, width, height, kernel);
    let exy = filter_valid(&xy, width, height, kernel);
    let var_x = exx.iter().zip(&mu_x).map(|(e, m)| e - m * m).collect();
    let var_y = eyy.iter().zip(&mu_y).map(|(e, m)| e - m * m).collect();
    let cov = exy
        .iter()
        .zip(mu_x.iter().zip(&mu_y))
        .map(|(e, (a, b))| e - a * b)
        .collect();
    LocalStats {
        mu_x,
        mu_y,
        var_x,
        var_y,
        cov,
    }
}

pub fn ssim(x: &Image, y: &Image, cfg: &SsimConfig) -> Result<SsimMap> {
    x.same_dims(y, "ssim")?;
    cfg.validate()?;
    let (w, h) = (x.width(), x.height());
    let valid = valid_region(w, h, cfg)?;
    let kernel = cfg.kernel();
    let (c1, c2) = (cfg.c1(), cfg.c2());

    let mut valid_map = vec![0.0; valid.len()];
    for ch in 0..CHANNELS {
        let s = local_stats(&channel_plane(x, ch), &channel_plane(y, ch), w, h, &kernel);
        for (p, out) in valid_map.iter_mut().enumerate() {
            let num = (2.0 * s.mu_x[p] * s.mu_y[p] + c1) * (2.0 * s.cov[p] + c2);
            let den = (s.mu_x[p] * s.mu_x[p] + s.mu_y[p] * s.mu_y[p] + c1)
                * (s.var_x[p] + s.var_y[p] + c2);
            *out += num / den;
        }
    }
    for v in &mut valid_map {
        *v /= CHANNELS as f64;
    }

    let mean = valid_map.iter().sum::<f64>() / valid.len() as f64;
    let mut map = vec![0.0; w * h];
    for vy in 0..valid.height {
        let row = (vy + valid.y0) * w + valid.x0;
        map[row..row + valid.width]
            .copy_from_slice(&valid_map[vy * valid.width..(vy + 1) * valid.width]);
    }
    Ok(SsimMap {
        mean,
        width: w,
        height: h,
        map,
        valid,
    })
}

/// `(1/N)·Σ_p weight_p · SSIM_p` over the valid region, and its gradient with
/// respect to every value of `x` (laid out like [`Image::data`]).
///
/// With no weights this is the plain SSIM mean.
pub fn ssim_weighted_grad(
    x: &Image,
    y: &Image,
    cfg: &SsimConfig,
    weights: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    x.same_dims(y, "ssim")?;
    cfg.validate()?;
    let (w, h) = (x.width(), x.height());
    if let Some(wt) = weights {
        if wt.len() != w * h {
            return Err(Error::LengthMismatch {
                what: "ssim weights",
                left: wt.len(),
                right: w * h,
            });
        }
    }
    let valid = valid_region(w, h, cfg)?;
    let kernel = cfg.kernel();
    let (c1, c2) = (cfg.c1(), cfg.c2());
    let scale = 1.0 / (valid.len() as f64 * CHANNELS as f64);

    let weight_at = |p: usize| -> f64 {
        match weights {
            None => 1.0,
            Some(wt) => {
                let (vx, vy) = (p % valid.width, p / valid.width);
                wt[(vy + valid.y0) * w + vx + valid.x0]
            }
        }
    };

    let mut value = 0.0;
    let mut grad = vec![0.0; w * h * CHANNELS];
    for ch in 0..CHANNELS {
        let xp = channel_plane(x, ch);
        let yp = channel_plane(y, ch);
        let s = local_stats(&xp, &yp, w, h, &kernel);
        // dS/dx_k = Σ_p g_pk (a_p + b_p·y_k + c_p·x_k)
        let n = valid.len();
        let mut coef_a = vec![0.0; n];
        let mut coef_b = vec![0.0; n];
        let mut coef_c = vec![0.0; n];
        for p in 0..n {
            let (mx, my) = (s.mu_x[p], s.mu_y[p]);
            let a1 = 2.0 * mx * my + c1;
            let a2 = 2.0 * s.cov[p] + c2;
            let b1 = mx * mx + my * my + c1;
            let b2 = s.var_x[p] + s.var_y[p] + c2;
            let ssim = a1 * a2 / (b1 * b2);
            let wp = weight_at(p) * scale;
            value += wp * ssim;
            let b1b2 = b1 * b2;
            coef_a[p] = wp * (2.0 * my * (a2 - a1) / b1b2 - ssim * (2.0 * mx / b1 - 2.0 * mx / b2));
            coef_b[p] = wp * (2.0 * a1 / b1b2);
            coef_c[p] = wp * (-2.0 * ssim / b2);
        }
        let fa = filter_adjoint(&coef_a, w, h, &kernel);
        let fb = filter_adjoint(&coef_b, w, h, &kernel);
        let fc = filter_adjoint(&coef_c, w, h, &kernel);
        for k in 0..w * h {
            grad[k * CHANNELS + ch] = fa[k] + fb[k] * yp[k] + fc[k] * xp[k];
        }
    }
    Ok((value, grad))
}
