//! Depth-prior machinery: scale alignment of a dense prediction to sparse
//! depth, depth and normal regularizers, and the composite training objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_dims, DepthMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthSample {
    pub x: usize,
    pub y: usize,
    pub depth: f64,
}

/// Sparse metric depth for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepth {
    width: usize,
    height: usize,
    samples: Vec<DepthSample>,
}

impl SparseDepth {
    pub fn new(width: usize, height: usize, samples: Vec<DepthSample>) -> Result<Self> {
        for s in &samples {
            if s.x >= width || s.y >= height {
                return Err(Error::domain(format!(
                    "sample ({}, {}) outside {width}x{height}",
                    s.x, s.y
                )));
            }
            if !(s.depth.is_finite() && s.depth > 0.0) {
                return Err(Error::domain(format!(
                    "sample ({}, {}) has depth {}; must be finite and positive",
                    s.x, s.y, s.depth
                )));
            }
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn samples(&self) -> &[DepthSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Log-scale (and optional additive bias) mapping a prediction onto metric depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentParams {
    pub log_scale: f64,
    #[serde(default)]
    pub bias: f64,
}

impl AlignmentParams {
    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn apply(&self, pred: &DepthMap) -> Result<DepthMap> {
        let k = self.scale();
        DepthMap::new(
            pred.width(),
            pred.height(),
            pred.values().iter().map(|d| k * d + self.bias).collect(),
        )
    }
}

/// Log residuals `log d_pred − log d_sparse` at every sample.
fn log_residuals(pred: &DepthMap, sparse: &SparseDepth) -> Result<Vec<f64>> {
    check_dims("prediction vs sparse depth", pred.dims(), sparse.dims())?;
    sparse
        .samples
        .iter()
        .map(|s| {
            let p = pred.at(s.x, s.y);
            if !(p > 0.0) {
                return Err(Error::domain(format!(
                    "prediction at ({}, {}) is not positive",
                    s.x, s.y
                )));
            }
            Ok(p.ln() - s.depth.ln())
        })
        .collect()
}

/// Scale-invariant log loss `(1/2M)·Σ (log(e^s·d_pred) − log d_sparse)²`.
pub fn silog_loss(pred: &DepthMap, sparse: &SparseDepth, log_scale: f64) -> Result<f64> {
    if sparse.is_empty() {
        return Err(Error::domain("silog loss needs at least one sample"));
    }
    let res = log_residuals(pred, sparse)?;
    let m = res.len() as f64;
    Ok(res.iter().map(|r| (log_scale + r).powi(2)).sum::<f64>() / (2.0 * m))
}

/// Closed-form minimizer of [`silog_loss`] over the log-scale.
pub fn fit_scale(pred: &DepthMap, sparse: &SparseDepth) -> Result<AlignmentParams> {
    if sparse.len() < 2 {
        return Err(Error::domain(format!(
            "scale fitting needs at least 2 samples, got {}",
            sparse.len()
        )));
    }
    let res = log_residuals(pred, sparse)?;
    let log_scale = -res.iter().sum::<f64>() / res.len() as f64;
    Ok(AlignmentParams {
        log_scale,
        bias: 0.0,
    })
}

/// Mean squared difference between a depth map and its prior.
pub fn depth_loss(depth: &DepthMap, prior: &DepthMap) -> Result<f64> {
    check_dims("depth vs prior", depth.dims(), prior.dims())?;
    let n = depth.values().len() as f64;
    Ok(depth
        .values()
        .iter()
        .zip(prior.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Per-pixel squared depth difference, for use under a per-pixel weight.
pub fn depth_loss_field(depth: &DepthMap, prior: &DepthMap) -> Result<Vec<f64>> {
    check_dims("depth vs prior", depth.dims(), prior.dims())?;
    Ok(depth
        .values()
        .iter()
        .zip(prior.values())
        .map(|(a, b)| (a - b) * (a - b))
        .collect())
}

/// Unit normals of a depth map, `normalize(−∂d/∂x, −∂d/∂y, 1)`, with unit
/// pixel spacing. Central differences inside, one-sided at the borders.
pub fn normal_from_depth(depth: &DepthMap) -> Result<Vec<[f64; 3]>> {
    let (w, h) = depth.dims();
    if w < 2 || h < 2 {
        return Err(Error::domain(format!(
            "normals need at least 2x2 depth, got {w}x{h}"
        )));
    }
    let diff = |lo: f64, hi: f64, span: f64| (hi - lo) / span;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = match x {
                0 => diff(depth.at(0, y), depth.at(1, y), 1.0),
                _ if x == w - 1 => diff(depth.at(x - 1, y), depth.at(x, y), 1.0),
                _ => diff(depth.at(x - 1, y), depth.at(x + 1, y), 2.0),
            };
            let gy = match y {
                0 => diff(depth.at(x, 0), depth.at(x, 1), 1.0),
                _ if y == h - 1 => diff(depth.at(x, y - 1), depth.at(x, y), 1.0),
                _ => diff(depth.at(x, y - 1), depth.at(x, y + 1), 2.0),
            };
            let norm = (gx * gx + gy * gy + 1.0).sqrt();
            out.push([-gx / norm, -gy / norm, 1.0 / norm]);
        }
    }
    Ok(out)
}

/// `Σ_i w_i·(1 − n_i·n̂_i)`.
pub fn normal_consistency(
    normals: &[[f64; 3]],
    reference: &[[f64; 3]],
    weights: &[f64],
) -> Result<f64> {
    if normals.len() != reference.len() {
        return Err(Error::LengthMismatch {
            what: "normal fields",
            left: normals.len(),
            right: reference.len(),
        });
    }
    if weights.len() != normals.len() {
        return Err(Error::LengthMismatch {
            what: "normal weights",
            left: weights.len(),
            right: normals.len(),
        });
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::domain("normal weights must be >= 0"));
    }
    Ok(normals
        .iter()
        .zip(reference)
        .zip(weights)
        .map(|((n, m), w)| w * (1.0 - (n[0] * m[0] + n[1] * m[1] + n[2] * m[2])))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub w_d: f64,
    pub w_n: f64,
    /// Ratio of the final to the initial depth weight.
    pub depth_decay_to: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_d: 0.01,
            w_n: 0.05,
            depth_decay_to: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_d >= 0.0) {
            return Err(Error::config("w_d", "must be >= 0"));
        }
        if !(self.w_n >= 0.0) {
            return Err(Error::config("w_n", "must be >= 0"));
        }
        if !(self.depth_decay_to > 0.0) {
            return Err(Error::config("depth_decay_to", "must be > 0"));
        }
        Ok(())
    }

    /// Depth weight at `iteration`, decaying geometrically from `w_d` at
    /// iteration 0 to `w_d · depth_decay_to` at `max_iters − 1`.
    pub fn depth_weight_at(&self, iteration: usize, max_iters: usize) -> f64 {
        if max_iters <= 1 {
            return self.w_d * self.depth_decay_to;
        }
        let progress = (iteration.min(max_iters - 1)) as f64 / (max_iters - 1) as f64;
        self.w_d * self.depth_decay_to.powf(progress)
    }
}

/// A loss term given either as one scalar or per pixel.
#[derive(Debug, Clone, Copy)]
pub enum LossTerm<'a> {
    Scalar(f64),
    Field(&'a [f64]),
}

impl LossTerm<'_> {
    fn at(&self, p: usize) -> f64 {
        match self {
            LossTerm::Scalar(v) => *v,
            LossTerm::Field(f) => f[p],
        }
    }

    fn check_len(&self, n: usize, what: &'static str) -> Result<()> {
        match self {
            LossTerm::Field(f) if f.len() != n => Err(Error::LengthMismatch {
                what,
                left: f.len(),
                right: n,
            }),
            _ => Ok(()),
        }
    }
}

/// `mean_p Ψ_p·(ℓ_rec + w_d·ℓ_depth) + w_n·L_normal`.
///
/// The normal term sits outside the Ψ product. `w_d` is taken as given; use
/// [`LossWeights::depth_weight_at`] for the decayed value.
pub fn total_loss(
    rec: LossTerm,
    depth: LossTerm,
    normal: f64,
    psi: &[f64],
    w_d: f64,
    w_n: f64,
) -> Result<f64> {
    if psi.is_empty() {
        return Err(Error::domain("Ψ field is empty"));
    }
    rec.check_len(psi.len(), "reconstruction term vs Ψ")?;
    depth.check_len(psi.len(), "depth term vs Ψ")?;
    let weighted: f64 = psi
        .iter()
        .enumerate()
        .map(|(p, s)| s * (rec.at(p) + w_d * depth.at(p)))
        .sum();
    Ok(weighted / psi.len() as f64 + w_n * normal)
}
