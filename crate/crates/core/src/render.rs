//! Lens-based defocus rendering.
//!
//! Every source pixel scatters its linear-light color over its circle of
//! confusion with the smooth confuse weight; each target divides the
//! accumulated color by the accumulated weight and the result is gamma
//! encoded again. The forward pass can carry forward-mode derivatives with
//! respect to aperture and focus alongside the color.
//!
//! The image is split into fixed row bands. Each band scatters into a private
//! accumulator that covers the band plus the reach of its largest CoC, and the
//! accumulators are summed in band order, so results are bit-identical for any
//! thread count.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::image::{DepthMap, Image, CHANNELS};
use crate::optics::{
    coc_radius, confuse_weight, gamma_decode, gamma_encode, shape_mask, CocProfile, CocShape,
    GammaSpec, LensParams, CONFUSE_SATURATION, SUPPORT_MARGIN_PX,
};
use crate::par;

/// Largest image the quadratic reference renderer accepts, per side.
pub const ORACLE_MAX_SIDE: usize = 64;

const FWD: usize = 4;
const GRAD: usize = 12;

/// A rendered frame.
#[derive(Debug, Clone)]
pub struct Rendered {
    /// Display-space (gamma encoded) output.
    pub image: Image,
    /// Linear-light output before encoding.
    pub linear: Image,
    /// Source pixels whose CoC radius hit `max_radius_px`.
    pub clamped_sources: usize,
}

/// Derivatives of the display-space output with respect to the scalar
/// aperture and focus, laid out like [`Image::data`].
#[derive(Debug, Clone)]
pub struct RenderGradients {
    pub width: usize,
    pub height: usize,
    pub d_aperture: Vec<f64>,
    pub d_focus: Vec<f64>,
}

/// Precomputed render state for one RGB-D frame: linear colors, normalized
/// disparity and the aperture pixel scale (longest image side).
#[derive(Debug, Clone)]
pub struct DefocusRenderer {
    width: usize,
    height: usize,
    linear: Vec<[f64; 3]>,
    disparity: Vec<f64>,
    px_scale: f64,
    profile: CocProfile,
    gamma: GammaSpec,
    support: Support,
    input_clamped: usize,
}

#[derive(Debug, Clone)]
enum Support {
    Circle,
    Polygon {
        normals: Vec<[f64; 2]>,
        apothem_ratio: f64,
    },
}

impl Support {
    fn new(profile: &CocProfile) -> Self {
        let sides = match profile.shape {
            CocShape::Circle => return Support::Circle,
            CocShape::Pentagon => 5,
            CocShape::Hexagon => 6,
        };
        let half = std::f64::consts::PI / sides as f64;
        let normals = (0..sides)
            .map(|k| {
                let a = profile.shape_rotation + half + 2.0 * half * k as f64;
                [a.cos(), a.sin()]
            })
            .collect();
        Support::Polygon {
            normals,
            apothem_ratio: half.cos(),
        }
    }

    /// Radius past which no target can be inside the support.
    fn reach(&self, r: f64) -> f64 {
        match self {
            Support::Circle => r + SUPPORT_MARGIN_PX,
            Support::Polygon { .. } => r,
        }
    }

    #[inline]
    fn contains(&self, dx: f64, dy: f64, r: f64) -> bool {
        match self {
            Support::Circle => true,
            Support::Polygon {
                normals,
                apothem_ratio,
            } => {
                let apothem = r * apothem_ratio + 1e-9;
                normals.iter().all(|n| dx * n[0] + dy * n[1] <= apothem)
            }
        }
    }
}

/// Per-source radius and its sensitivities.
struct Sources {
    radius: Vec<f64>,
    dr_da: Vec<f64>,
    dr_df: Vec<f64>,
    clamped: usize,
}

struct BandAccum {
    row0: usize,
    rows: usize,
    data: Vec<f64>,
}

impl DefocusRenderer {
    /// Prepares a display-space color image and its depth map.
    pub fn new(
        color: &Image,
        depth: &DepthMap,
        profile: &CocProfile,
        gamma: &GammaSpec,
    ) -> Result<Self> {
        depth.matches(color)?;
        profile.validate()?;
        gamma.validate()?;
        let decoded = gamma_decode(color, gamma);
        let linear = decoded
            .image
            .data()
            .chunks_exact(CHANNELS)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Ok(Self {
            width: color.width(),
            height: color.height(),
            linear,
            disparity: depth.normalized_disparity(),
            px_scale: color.width().max(color.height()) as f64,
            profile: *profile,
            gamma: *gamma,
            support: Support::new(profile),
            input_clamped: decoded.clamped,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixels per unit of normalized aperture.
    pub fn px_scale(&self) -> f64 {
        self.px_scale
    }

    pub fn disparity(&self) -> &[f64] {
        &self.disparity
    }

    pub fn profile(&self) -> &CocProfile {
        &self.profile
    }

    pub fn gamma(&self) -> &GammaSpec {
        &self.gamma
    }

    /// Input values that were outside `[0, 1]` and got clamped on decode.
    pub fn input_clamped(&self) -> usize {
        self.input_clamped
    }

    /// Per-pixel CoC radius in pixels (before clamping).
    pub fn radii(&self, lens: &LensParams) -> Vec<f64> {
        self.disparity
            .iter()
            .map(|&rho| self.px_scale * lens.aperture * (lens.focus - rho).abs())
            .collect()
    }

    pub fn render(&self, lens: &LensParams) -> Result<Rendered> {
        lens.validate()?;
        let sources = self.sources(lens, None, false);
        Ok(self.finish(&sources, FWD).0)
    }

    /// Renders with a per-pixel effective aperture `lens.aperture · weights[p]`.
    pub fn render_weighted(&self, lens: &LensParams, weights: &[f64]) -> Result<Rendered> {
        lens.validate()?;
        self.check_weights(weights)?;
        let sources = self.sources(lens, Some(weights), false);
        Ok(self.finish(&sources, FWD).0)
    }

    /// Renders with an explicit per-pixel aperture field.
    pub fn render_aperture_field(&self, focus: f64, field: &[f64]) -> Result<Rendered> {
        if field.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::domain(
                "aperture field entries must be finite and >= 0",
            ));
        }
        if field.len() != self.width * self.height {
            return Err(Error::LengthMismatch {
                what: "aperture field",
                left: field.len(),
                right: self.width * self.height,
            });
        }
        let lens = LensParams::new(1.0, focus)?;
        let sources = self.sources(&lens, Some(field), false);
        Ok(self.finish(&sources, FWD).0)
    }

    /// Forward render plus display-space derivatives with respect to the
    /// scalar aperture and focus. When `weights` is given the effective
    /// aperture is `A · weights[p]`; the weights are held constant.
    pub fn render_with_grad(
        &self,
        lens: &LensParams,
        weights: Option<&[f64]>,
    ) -> Result<(Rendered, RenderGradients)> {
        lens.validate()?;
        if let Some(w) = weights {
            self.check_weights(w)?;
        }
        let sources = self.sources(lens, weights, true);
        let (rendered, grads) = self.finish(&sources, GRAD);
        Ok((rendered, grads.expect("gradient pass")))
    }

    fn check_weights(&self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.width * self.height {
            return Err(Error::LengthMismatch {
                what: "aperture weights",
                left: weights.len(),
                right: self.width * self.height,
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain("aperture weights must be finite and >= 0"));
        }
        Ok(())
    }

    fn sources(&self, lens: &LensParams, weights: Option<&[f64]>, grad: bool) -> Sources {
        let n = self.width * self.height;
        let r_max = self.profile.max_radius_px;
        let mut radius = Vec::with_capacity(n);
        let (mut dr_da, mut dr_df) = if grad {
            (Vec::with_capacity(n), Vec::with_capacity(n))
        } else {
            (Vec::new(), Vec::new())
        };
        let mut clamped = 0;
        for (p, &rho) in self.disparity.iter().enumerate() {
            let weight = weights.map_or(1.0, |w| w[p]);
            let diff = lens.focus - rho;
            let r = self.px_scale * lens.aperture * weight * diff.abs();
            let saturated = r > r_max;
            if saturated {
                clamped += 1;
            }
            radius.push(r.min(r_max));
            if grad {
                if saturated {
                    dr_da.push(0.0);
                    dr_df.push(0.0);
                } else {
                    dr_da.push(self.px_scale * weight * diff.abs());
                    let sign = if diff > 0.0 {
                        1.0
                    } else if diff < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    dr_df.push(self.px_scale * lens.aperture * weight * sign);
                }
            }
        }
        Sources {
            radius,
            dr_da,
            dr_df,
            clamped,
        }
    }

    fn scatter_band<const S: usize>(&self, rows: Range<usize>, src: &Sources) -> BandAccum {
        let width = self.width as isize;
        let height = self.height as isize;
        let alpha = self.profile.alpha;
        let grad = S == GRAD;

        let reach = rows
            .clone()
            .flat_map(|y| (0..self.width).map(move |x| y * self.width + x))
            .map(|i| half_width(src.radius[i]))
            .max()
            .unwrap_or(0);
        let row0 = rows.start.saturating_sub(reach);
        let row1 = (rows.end + reach).min(self.height);
        let mut data = vec![0.0; (row1 - row0) * self.width * S];
        let polygon = !matches!(self.support, Support::Circle);
        let mut radial: Vec<[f64; 2]> = Vec::new();

        for sy in rows {
            for sx in 0..self.width {
                let i = sy * self.width + sx;
                let r = src.radius[i];
                let c = &self.linear[i];
                let (da, df) = if grad {
                    (src.dr_da[i], src.dr_df[i])
                } else {
                    (0.0, 0.0)
                };

                if r <= 0.0 {
                    // point spread: only the self term
                    let wgt = confuse_weight(0.0, 0.0, alpha);
                    let slope = 2.0 * alpha * wgt * (1.0 - wgt);
                    let o = ((sy - row0) * self.width + sx) * S;
                    deposit::<S>(&mut data[o..o + S], c, wgt, slope * da, slope * df);
                    continue;
                }

                let hw = half_width(r) as isize;
                let reach2 = self.support.reach(r).powi(2);
                // weights by integer squared distance; below `lo` they are saturated
                let inner = r - CONFUSE_SATURATION / alpha;
                let lo = if inner > 0.0 {
                    (inner * inner).floor() as usize
                } else {
                    0
                };
                let hi = reach2.floor() as usize;
                radial.clear();
                radial.extend((lo..=hi).map(|d2| {
                    let wgt = confuse_weight(r, (d2 as f64).sqrt(), alpha);
                    [wgt, 2.0 * alpha * wgt * (1.0 - wgt)]
                }));

                let (sx, sy) = (sx as isize, sy as isize);
                for ty in (sy - hw).max(0)..=(sy + hw).min(height - 1) {
                    let dy = ty - sy;
                    let room = reach2 - (dy * dy) as f64;
                    if room < 0.0 {
                        continue;
                    }
                    let ext = (room.sqrt().floor() as isize).min(hw);
                    let (x0, x1) = ((sx - ext).max(0), (sx + ext).min(width - 1));
                    if x0 > x1 {
                        continue;
                    }
                    let a0 = ((ty as usize - row0) * self.width + x0 as usize) * S;
                    let targets = data[a0..a0 + (x1 - x0 + 1) as usize * S].chunks_exact_mut(S);
                    for (acc, tx) in targets.zip(x0..) {
                        let dx = tx - sx;
                        let d2 = (dx * dx + dy * dy) as usize;
                        if d2 > hi || (polygon && !self.support.contains(dx as f64, dy as f64, r)) {
                            continue;
                        }
                        let [wgt, slope] = if d2 < lo { [1.0, 0.0] } else { radial[d2 - lo] };
                        deposit::<S>(acc, c, wgt, slope * da, slope * df);
                    }
                }
            }
        }

        BandAccum {
            row0,
            rows: row1 - row0,
            data,
        }
    }

    fn finish(&self, src: &Sources, stride: usize) -> (Rendered, Option<RenderGradients>) {
        let bands = par::bands(self.height);
        let accums = par::map_ordered(bands, |rows| {
            if stride == GRAD {
                self.scatter_band::<GRAD>(rows, src)
            } else {
                self.scatter_band::<FWD>(rows, src)
            }
        });

        let n = self.width * self.height;
        let mut total = vec![0.0; n * stride];
        for acc in &accums {
            let start = acc.row0 * self.width * stride;
            let len = acc.rows * self.width * stride;
            for (t, a) in total[start..start + len].iter_mut().zip(&acc.data) {
                *t += a;
            }
        }

        let grad = stride == GRAD;
        let inv_gamma = 1.0 / self.gamma.gamma;
        let mut linear = Vec::with_capacity(n * CHANNELS);
        let mut d_aperture = Vec::with_capacity(if grad { n * CHANNELS } else { 0 });
        let mut d_focus = Vec::with_capacity(if grad { n * CHANNELS } else { 0 });
        for acc in total.chunks_exact(stride) {
            let phi = acc[3];
            debug_assert!(
                phi >= 0.5,
                "normalization below the self-weight floor: {phi}"
            );
            for ch in 0..CHANNELS {
                let out = (acc[ch] / phi).clamp(0.0, 1.0);
                linear.push(out);
                if grad {
                    // chain through the quotient and the display encode
                    let encode = if out > 0.0 {
                        inv_gamma * out.powf(inv_gamma - 1.0)
                    } else {
                        0.0
                    };
                    d_aperture.push(encode * (acc[4 + ch] - out * acc[7]) / phi);
                    d_focus.push(encode * (acc[8 + ch] - out * acc[11]) / phi);
                }
            }
        }

        let linear = Image::new(self.width, self.height, linear).expect("finite render");
        let image = gamma_encode(&linear, &self.gamma).image;
        let rendered = Rendered {
            image,
            linear,
            clamped_sources: src.clamped,
        };
        let grads = grad.then_some(RenderGradients {
            width: self.width,
            height: self.height,
            d_aperture,
            d_focus,
        });
        (rendered, grads)
    }
}

#[inline(always)]
fn deposit<const S: usize>(acc: &mut [f64], c: &[f64; 3], wgt: f64, ga: f64, gf: f64) {
    acc[0] += wgt * c[0];
    acc[1] += wgt * c[1];
    acc[2] += wgt * c[2];
    acc[3] += wgt;
    if S == GRAD {
        acc[4] += ga * c[0];
        acc[5] += ga * c[1];
        acc[6] += ga * c[2];
        acc[7] += ga;
        acc[8] += gf * c[0];
        acc[9] += gf * c[1];
        acc[10] += gf * c[2];
        acc[11] += gf;
    }
}

/// Half-width of the square scatter window for a (clamped) radius.
fn half_width(r: f64) -> usize {
    if r <= 0.0 {
        0
    } else {
        r.ceil() as usize + SUPPORT_MARGIN_PX as usize
    }
}

/// Renders a display-space image with the given lens.
pub fn render_defocus(
    color: &Image,
    depth: &DepthMap,
    lens: &LensParams,
    profile: &CocProfile,
    gamma: &GammaSpec,
) -> Result<Image> {
    Ok(DefocusRenderer::new(color, depth, profile, gamma)?
        .render(lens)?
        .image)
}

pub fn render_defocus_grad(
    color: &Image,
    depth: &DepthMap,
    lens: &LensParams,
    profile: &CocProfile,
    gamma: &GammaSpec,
) -> Result<(Image, RenderGradients)> {
    let (rendered, grads) =
        DefocusRenderer::new(color, depth, profile, gamma)?.render_with_grad(lens, None)?;
    Ok((rendered.image, grads))
}

/// Reference renderer: every source against every target, no radius clamp,
/// no windowing and no banding. Quadratic, so limited to
/// [`ORACLE_MAX_SIDE`]² images.
pub fn render_defocus_oracle(
    color: &Image,
    depth: &DepthMap,
    lens: &LensParams,
    profile: &CocProfile,
    gamma: &GammaSpec,
) -> Result<Image> {
    depth.matches(color)?;
    lens.validate()?;
    profile.validate()?;
    if color.width() > ORACLE_MAX_SIDE || color.height() > ORACLE_MAX_SIDE {
        return Err(Error::TooLarge {
            what: "reference renderer",
            width: color.width(),
            height: color.height(),
            limit: ORACLE_MAX_SIDE,
        });
    }
    let (w, h) = (color.width(), color.height());
    let px_scale = w.max(h) as f64;
    let linear = gamma_decode(color, gamma).image;
    let range = depth.disparity_range();

    let mut radius = Vec::with_capacity(w * h);
    for &d in depth.values() {
        radius.push(coc_radius(lens, range.normalize(d)?, px_scale)?);
    }

    let mut out = vec![0.0; w * h * CHANNELS];
    for ty in 0..h {
        for tx in 0..w {
            let mut acc = [0.0; 3];
            let mut phi = 0.0;
            for sy in 0..h {
                for sx in 0..w {
                    let i = sy * w + sx;
                    let dx = tx as f64 - sx as f64;
                    let dy = ty as f64 - sy as f64;
                    if !shape_mask(profile, [dx, dy], radius[i]) {
                        continue;
                    }
                    let lambda = confuse_weight(radius[i], dx.hypot(dy), profile.alpha);
                    let c = linear.pixel(sx, sy);
                    for ch in 0..CHANNELS {
                        acc[ch] += lambda * c[ch];
                    }
                    phi += lambda;
                }
            }
            let o = (ty * w + tx) * CHANNELS;
            for ch in 0..CHANNELS {
                out[o + ch] = acc[ch] / phi;
            }
        }
    }
    let linear_out = Image::new(w, h, out)?;
    Ok(gamma_encode(&linear_out, gamma).image)
}

/// Per-pixel effective aperture `A · Ψ(p)`.
pub fn apply_adaptation_aperture(
    lens: &LensParams,
    depth: &DepthMap,
    psi: &[f64],
) -> Result<Vec<f64>> {
    lens.validate()?;
    if psi.len() != depth.values().len() {
        return Err(Error::LengthMismatch {
            what: "adaptation field vs depth",
            left: psi.len(),
            right: depth.values().len(),
        });
    }
    if let Some(bad) = psi.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(Error::domain(format!(
            "adaptation weight {bad} outside (0, 1]"
        )));
    }
    Ok(psi.iter().map(|p| lens.aperture * p).collect())
}
