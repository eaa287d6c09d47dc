//! Thin-lens primitives: circle-of-confusion radius, the smooth confuse
//! weight, CoC shape masks and power-law color conversion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Default sharpness of the confuse transition.
pub const DEFAULT_ALPHA: f64 = 4.0;
pub const DEFAULT_GAMMA: f64 = 2.2;
pub const DEFAULT_MAX_RADIUS_PX: f64 = 64.0;

/// Distance beyond the CoC radius that a circular CoC still deposits energy.
/// At the default sharpness the confuse weight there is about 1.1e-7.
pub const SUPPORT_MARGIN_PX: f64 = 2.0;

/// Aperture and focus of one image.
///
/// `aperture` is normalized to the longest image side; `focus` is a
/// normalized disparity (1 is the nearest scene point, 0 the farthest).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LensParams {
    pub aperture: f64,
    pub focus: f64,
}

impl LensParams {
    pub fn new(aperture: f64, focus: f64) -> Result<Self> {
        let lens = Self { aperture, focus };
        lens.validate()?;
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.aperture.is_finite() && self.aperture >= 0.0) {
            return Err(Error::domain(format!(
                "aperture must be >= 0, got {}",
                self.aperture
            )));
        }
        if !(self.focus.is_finite() && self.focus > 0.0 && self.focus <= 1.0) {
            return Err(Error::domain(format!(
                "focus must be in (0, 1], got {}",
                self.focus
            )));
        }
        Ok(())
    }

    /// The same lens with zero aperture: an all-in-focus render.
    pub fn pinhole(&self) -> Self {
        Self {
            aperture: 0.0,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CocShape {
    #[default]
    Circle,
    Pentagon,
    Hexagon,
}

impl CocShape {
    fn sides(self) -> Option<usize> {
        match self {
            CocShape::Circle => None,
            CocShape::Pentagon => Some(5),
            CocShape::Hexagon => Some(6),
        }
    }
}

impl std::str::FromStr for CocShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "circle" => Ok(CocShape::Circle),
            "pentagon" => Ok(CocShape::Pentagon),
            "hexagon" => Ok(CocShape::Hexagon),
            other => Err(Error::domain(format!(
                "unknown CoC shape `{other}` (expected circle, pentagon or hexagon)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CocProfile {
    pub alpha: f64,
    pub shape: CocShape,
    /// Polygon rotation in radians; ignored for circles.
    pub shape_rotation: f64,
    pub max_radius_px: f64,
}

impl Default for CocProfile {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            shape: CocShape::Circle,
            shape_rotation: 0.0,
            max_radius_px: DEFAULT_MAX_RADIUS_PX,
        }
    }
}

impl CocProfile {
    pub fn with_shape(shape: CocShape) -> Self {
        Self {
            shape,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::config(
                "alpha",
                format!("must be > 0, got {}", self.alpha),
            ));
        }
        if !(self.max_radius_px >= 1.0) {
            return Err(Error::config(
                "max_radius_px",
                format!("must be >= 1, got {}", self.max_radius_px),
            ));
        }
        if !self.shape_rotation.is_finite() {
            return Err(Error::config("shape_rotation", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    pub gamma: f64,
}

impl Default for GammaSpec {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl GammaSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        let spec = Self { gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::config(
                "gamma",
                format!("must be > 0, got {}", self.gamma),
            ));
        }
        Ok(())
    }
}

/// CoC radius in pixels for a point at normalized disparity `disparity`.
///
/// `px_scale · A · |ρ_F − ρ|`; zero exactly when the point sits on the focal
/// plane.
pub fn coc_radius(lens: &LensParams, disparity: f64, px_scale: f64) -> Result<f64> {
    if !(px_scale.is_finite() && px_scale > 0.0) {
        return Err(Error::domain(format!(
            "pixel scale must be > 0, got {px_scale}"
        )));
    }
    if !disparity.is_finite() {
        return Err(Error::domain("disparity must be finite"));
    }
    Ok(px_scale * lens.aperture * (lens.focus - disparity).abs())
}

/// CoC radius for a raw depth value, mapped through the scene's disparity range.
pub fn coc_radius_at_depth(
    lens: &LensParams,
    depth: f64,
    range: &crate::image::DisparityRange,
    px_scale: f64,
) -> Result<f64> {
    coc_radius(lens, range.normalize(depth)?, px_scale)
}

/// `½ + ½·tanh(α(r − l))`, evaluated as the equivalent logistic so the far
/// tail keeps relative precision instead of rounding to zero.
#[inline]
pub fn confuse_weight(r: f64, l: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * alpha * (r - l)).exp())
}

/// Beyond `alpha · (r - l) >= CONFUSE_SATURATION` the confuse weight is
/// exactly 1.0 in f64 and its derivative exactly 0.
pub const CONFUSE_SATURATION: f64 = 20.0;

/// Derivative of [`confuse_weight`] with respect to `r`.
#[inline]
pub fn confuse_weight_dr(r: f64, l: f64, alpha: f64) -> f64 {
    let w = confuse_weight(r, l, alpha);
    2.0 * alpha * w * (1.0 - w)
}

/// Whether a target at `offset` (pixels, relative to the source) lies in the
/// support of a CoC of radius `r`.
///
/// A zero radius is a point spread: only the source pixel itself. Circles
/// extend [`SUPPORT_MARGIN_PX`] past `r` to cover the smooth falloff; polygons
/// are exact, with circumradius `r`.
pub fn shape_mask(profile: &CocProfile, offset: [f64; 2], r: f64) -> bool {
    let [dx, dy] = offset;
    if dx == 0.0 && dy == 0.0 {
        return true;
    }
    if r <= 0.0 {
        return false;
    }
    match profile.shape.sides() {
        None => dx * dx + dy * dy <= (r + SUPPORT_MARGIN_PX).powi(2),
        Some(n) => inside_regular_polygon(n, profile.shape_rotation, r, dx, dy),
    }
}

/// Point-in-polygon by half-plane tests against each edge normal. The first
/// vertex sits at angle `rotation`.
fn inside_regular_polygon(sides: usize, rotation: f64, circumradius: f64, x: f64, y: f64) -> bool {
    let half = PI / sides as f64;
    let apothem = circumradius * half.cos();
    (0..sides).all(|k| {
        let normal = rotation + half + 2.0 * half * k as f64;
        x * normal.cos() + y * normal.sin() <= apothem + 1e-9
    })
}

/// Result of a power-law conversion, with the number of input values that had
/// to be clamped into `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Converted {
    pub image: Image,
    pub clamped: usize,
}

/// Display values to linear light: `c ↦ c^γ`.
pub fn gamma_decode(image: &Image, spec: &GammaSpec) -> Converted {
    power_law(image, spec.gamma)
}

/// Linear light to display values: `c ↦ c^(1/γ)`.
pub fn gamma_encode(image: &Image, spec: &GammaSpec) -> Converted {
    power_law(image, 1.0 / spec.gamma)
}

fn power_law(image: &Image, exponent: f64) -> Converted {
    let mut clamped = 0;
    let data = image
        .data()
        .iter()
        .map(|&v| {
            let c = v.clamp(0.0, 1.0);
            if c != v {
                clamped += 1;
            }
            c.powf(exponent)
        })
        .collect();
    Converted {
        image: Image::new(image.width(), image.height(), data).expect("same shape"),
        clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn in_focus_has_zero_radius() {
        let lens = LensParams::new(1.0, 0.5).unwrap();
        assert_eq!(coc_radius(&lens, 0.5, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn radius_is_disparity_difference() {
        let lens = LensParams::new(2.0, 0.5).unwrap();
        assert_eq!(coc_radius(&lens, 1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn zero_aperture_kills_blur() {
        let lens = LensParams::new(0.0, 0.3).unwrap();
        for rho in [0.0, 0.1, 0.7, 1.0] {
            assert_eq!(coc_radius(&lens, rho, 64.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn radius_rejects_bad_inputs() {
        let lens = LensParams::new(1.0, 0.5).unwrap();
        assert!(coc_radius(&lens, 0.5, 0.0).is_err());
        let range = crate::image::DisparityRange::new(1.0, 2.0).unwrap();
        assert!(coc_radius_at_depth(&lens, -1.0, &range, 1.0).is_err());
        assert!(coc_radius_at_depth(&lens, 0.0, &range, 1.0).is_err());
    }

    #[test]
    fn lens_validation() {
        assert!(LensParams::new(-0.1, 0.5).is_err());
        assert!(LensParams::new(0.5, 0.0).is_err());
        assert!(LensParams::new(0.5, 1.2).is_err());
        assert!(LensParams::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn confuse_weight_saturates_exactly() {
        for alpha in [0.5, 4.0, 40.0] {
            for r in [0.5, 3.0, 60.0] {
                let l = r - CONFUSE_SATURATION / alpha;
                assert_eq!(confuse_weight(r, l, alpha), 1.0);
                assert_eq!(confuse_weight_dr(r, l, alpha), 0.0);
            }
        }
    }

    #[test]
    fn confuse_weight_values() {
        assert_eq!(confuse_weight(3.0, 3.0, 4.0), 0.5);
        // ½ + ½·tanh(4) to 8 places
        assert!((confuse_weight(2.0, 1.0, 4.0) - 0.999_664_65).abs() < 5e-9);
        let tail = confuse_weight(0.0, 10.0, 4.0);
        assert!(tail > 0.0 && tail < 1e-17);
    }

    #[test]
    fn confuse_derivative_matches_difference() {
        for (r, l) in [(0.3, 1.0), (2.0, 2.5), (5.0, 1.0)] {
            let h = 1e-6;
            let fd = (confuse_weight(r + h, l, 4.0) - confuse_weight(r - h, l, 4.0)) / (2.0 * h);
            assert!((fd - confuse_weight_dr(r, l, 4.0)).abs() < 1e-8);
        }
    }

    fn half_plane_oracle(sides: usize, rot: f64, r: f64, p: [f64; 2]) -> bool {
        // vertices, then cross-product sign against each directed edge
        let verts: Vec<[f64; 2]> = (0..sides)
            .map(|k| {
                let a = rot + 2.0 * PI * k as f64 / sides as f64;
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        (0..sides).all(|k| {
            let a = verts[k];
            let b = verts[(k + 1) % sides];
            (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= -1e-9
        })
    }

    #[test]
    fn shape_mask_examples() {
        let circle = CocProfile::default();
        assert!(shape_mask(&circle, [0.0, 0.0], 3.0));
        assert!(!shape_mask(&circle, [5.5, 0.0], 3.0));
        assert!(shape_mask(&circle, [5.0, 0.0], 3.0));

        let mut hex = CocProfile::with_shape(CocShape::Hexagon);
        assert!(shape_mask(&hex, [0.0, 0.0], 3.0));
        // toward a vertex
        assert!(shape_mask(&hex, [0.9 * 3.0, 0.0], 3.0));
        // toward an edge midpoint, past the apothem 0.866·r
        hex.shape_rotation = PI / 6.0;
        assert!(!shape_mask(&hex, [0.9 * 3.0, 0.0], 3.0));
        assert!(shape_mask(&hex, [0.85 * 3.0, 0.0], 3.0));
    }

    #[test]
    fn zero_radius_is_a_point() {
        for shape in [CocShape::Circle, CocShape::Pentagon, CocShape::Hexagon] {
            let p = CocProfile::with_shape(shape);
            assert!(shape_mask(&p, [0.0, 0.0], 0.0));
            assert!(!shape_mask(&p, [1.0, 0.0], 0.0));
        }
    }

    #[test]
    fn gamma_values() {
        let spec = GammaSpec::default();
        let img = Image::new(1, 1, vec![0.0, 1.0, 0.5]).unwrap();
        let lin = gamma_decode(&img, &spec).image;
        assert_eq!(lin.data()[0], 0.0);
        assert_eq!(lin.data()[1], 1.0);
        assert!((lin.data()[2] - 0.217_637_64).abs() < 5e-9);
    }

    #[test]
    fn gamma_clamps_and_counts() {
        let img = Image::new(1, 1, vec![-0.2, 1.5, 0.5]).unwrap();
        let out = gamma_decode(&img, &GammaSpec::default());
        assert_eq!(out.clamped, 2);
        assert_eq!(out.image.data()[0], 0.0);
        assert_eq!(out.image.data()[1], 1.0);
    }

    proptest! {
        #[test]
        fn polygon_matches_half_plane_oracle(
            x in -4.0f64..4.0, y in -4.0f64..4.0, r in 0.5f64..3.5, rot in 0.0f64..6.3, hexagon in any::<bool>()
        ) {
            let (shape, n) = if hexagon { (CocShape::Hexagon, 6) } else { (CocShape::Pentagon, 5) };
            let profile = CocProfile { shape, shape_rotation: rot, ..CocProfile::default() };
            let expected = half_plane_oracle(n, rot, r, [x, y]);
            // skip points within rounding distance of an edge
            let inner = half_plane_oracle(n, rot, r * (1.0 - 1e-6), [x, y]);
            let outer = half_plane_oracle(n, rot, r * (1.0 + 1e-6), [x, y]);
            prop_assume!(inner == outer);
            prop_assert_eq!(shape_mask(&profile, [x, y], r), expected);
        }

        #[test]
        fn confuse_weight_bounded_and_monotone(r in 0.0f64..50.0, l in 0.0f64..50.0, dr in 0.01f64..1.0) {
            let w = confuse_weight(r, l, 4.0);
            prop_assert!(w > 0.0 && w <= 1.0);
            prop_assert!(confuse_weight(r + dr, l, 4.0) >= w);
            prop_assert!(confuse_weight(r, 0.0, 4.0) >= 0.5);
        }

        #[test]
        fn radius_linear_in_aperture(a in 0.0f64..2.0, k in 0.0f64..4.0, f in 0.01f64..1.0, rho in 0.0f64..1.0) {
            let base = coc_radius(&LensParams::new(a, f).unwrap(), rho, 64.0).unwrap();
            let scaled = coc_radius(&LensParams::new(k * a, f).unwrap(), rho, 64.0).unwrap();
            prop_assert!((scaled - k * base).abs() <= 1e-12 * (1.0 + scaled.abs()));
        }

        #[test]
        fn gamma_round_trip(v in 0.0f64..=1.0, g in 0.5f64..3.0) {
            let spec = GammaSpec::new(g).unwrap();
            let img = Image::new(1, 1, vec![v, v, v]).unwrap();
            let back = gamma_encode(&gamma_decode(&img, &spec).image, &spec).image;
            prop_assert!((back.data()[0] - v).abs() < 1e-6);
        }
    }
}
