//! Command-line and HTTP front ends for `lensdof-core`.
//!
//! Both front ends render through [`frame::render_png`], so the same request
//! yields the same PNG bytes whichever way it arrives.

pub mod frame;
pub mod scene;
pub mod server;

pub use frame::{render_png, FocusSpec, Frame, RenderSettings};
pub use scene::{Scene, SceneStore};
pub use server::router;
