//! One RGB-D frame and the render path shared by the CLI and the service.

use std::path::Path;

use lensdof_core::fit::{focus_weights, FitConfig};
use lensdof_core::io::{self, DepthEncoding};
use lensdof_core::optics::{coc_radius, CocShape};
use lensdof_core::{CocProfile, DefocusRenderer, DepthMap, GammaSpec, Image, LensParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    /// The request is well formed but its values are unusable.
    #[error("{0}")]
    Invalid(String),
    #[error("pixel ({x}, {y}) is outside the {width}x{height} image")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error(transparent)]
    Core(#[from] lensdof_core::Error),
}

/// All-in-focus color plus depth, dimension-checked at construction.
#[derive(Debug, Clone)]
pub struct Frame {
    pub name: String,
    color: Image,
    depth: DepthMap,
    disparity: Vec<f64>,
}

impl Frame {
    pub fn new(name: impl Into<String>, color: Image, depth: DepthMap) -> Result<Self, FrameError> {
        depth.matches(&color)?;
        let disparity = depth.normalized_disparity();
        Ok(Self {
            name: name.into(),
            color,
            depth,
            disparity,
        })
    }

    /// Loads a PNG image and a PFM (or 16-bit PNG, given an encoding) depth map.
    pub fn load(
        image: &Path,
        depth: &Path,
        encoding: Option<&DepthEncoding>,
    ) -> Result<Self, FrameError> {
        let name = image
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::new(name, io::read_png(image)?, io::read_depth(depth, encoding)?)
    }

    pub fn color(&self) -> &Image {
        &self.color
    }

    pub fn depth(&self) -> &DepthMap {
        &self.depth
    }

    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    pub fn px_scale(&self) -> f64 {
        self.width().max(self.height()) as f64
    }

    fn check_pixel(&self, x: usize, y: usize) -> Result<(), FrameError> {
        if x >= self.width() || y >= self.height() {
            return Err(FrameError::OutOfBounds {
                x,
                y,
                width: self.width(),
                height: self.height(),
            });
        }
        Ok(())
    }

    /// Metric depth and normalized disparity at a pixel.
    pub fn probe(&self, x: usize, y: usize) -> Result<(f64, f64), FrameError> {
        self.check_pixel(x, y)?;
        Ok((self.depth.at(x, y), self.disparity[y * self.width() + x]))
    }

    /// The CoC radius the renderer uses for the source pixel at `(x, y)`.
    pub fn coc_radius_at(&self, x: usize, y: usize, lens: &LensParams) -> Result<f64, FrameError> {
        let (_, rho) = self.probe(x, y)?;
        Ok(coc_radius(lens, rho, self.px_scale())?)
    }
}

/// Focus as a normalized disparity or as a pixel whose disparity is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocusSpec {
    Disparity(f64),
    Pixel { x: usize, y: usize },
}

/// Smallest focus a pixel lookup resolves to; focus must stay positive.
pub const MIN_FOCUS: f64 = 1e-6;

impl FocusSpec {
    pub fn resolve(&self, frame: &Frame) -> Result<f64, FrameError> {
        match *self {
            FocusSpec::Disparity(f) => Ok(f),
            FocusSpec::Pixel { x, y } => Ok(frame.probe(x, y)?.1.max(MIN_FOCUS)),
        }
    }
}

/// Lens and bokeh settings for one render.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderSettings {
    pub aperture: f64,
    pub focus: FocusSpec,
    pub shape: CocShape,
    pub rotation: f64,
    pub alpha: f64,
    pub max_radius_px: f64,
    pub gamma: f64,
    /// Shrink the aperture away from the focal plane by the adaptation weight.
    pub adaptation: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        let profile = CocProfile::default();
        Self {
            aperture: 0.0,
            focus: FocusSpec::Disparity(0.5),
            shape: profile.shape,
            rotation: profile.shape_rotation,
            alpha: profile.alpha,
            max_radius_px: profile.max_radius_px,
            gamma: GammaSpec::default().gamma,
            adaptation: false,
        }
    }
}

impl RenderSettings {
    pub fn profile(&self) -> CocProfile {
        CocProfile {
            alpha: self.alpha,
            shape: self.shape,
            shape_rotation: self.rotation,
            max_radius_px: self.max_radius_px,
        }
    }

    pub fn lens(&self, frame: &Frame) -> Result<LensParams, FrameError> {
        let focus = self.focus.resolve(frame)?;
        Ok(LensParams::new(self.aperture, focus)?)
    }
}

/// Renders a frame and encodes it as PNG.
pub fn render_png(frame: &Frame, settings: &RenderSettings) -> Result<Vec<u8>, FrameError> {
    Ok(io::encode_png(&render_image(frame, settings)?))
}

pub fn render_image(frame: &Frame, settings: &RenderSettings) -> Result<Image, FrameError> {
    let lens = settings.lens(frame)?;
    let profile = settings.profile();
    profile.validate()?;
    let gamma = GammaSpec::new(settings.gamma)?;
    let renderer = DefocusRenderer::new(&frame.color, &frame.depth, &profile, &gamma)?;
    let rendered = if settings.adaptation {
        let psi = focus_weights(renderer.disparity(), lens.focus, &FitConfig::default());
        renderer.render_weighted(&lens, &psi)?
    } else {
        renderer.render(&lens)?
    };
    Ok(rendered.image)
}
