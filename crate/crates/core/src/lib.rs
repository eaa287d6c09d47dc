//! Thin-lens depth-of-field toolkit.
//!
//! Renders bokeh from RGB-D input with a smooth circle-of-confusion scatter,
//! recovers aperture and focus from defocused observations, aligns dense depth
//! priors to sparse depth and builds shallow depth-of-field datasets with known
//! lens parameters.
//!
//! Rendering is data-parallel over row bands when the `parallel` feature is
//! enabled (the default). Outputs are bit-identical with or without it and for
//! every thread count.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod depth;
pub mod error;
pub mod fit;
pub mod image;
pub mod io;
pub mod metrics;
pub mod optics;
mod par;
pub mod render;
pub mod synthetic;

pub use error::{Error, Result};
pub use image::{DepthMap, DisparityRange, Image};
pub use optics::{CocProfile, CocShape, GammaSpec, LensParams};
pub use render::{DefocusRenderer, RenderGradients, Rendered};
