//! Sketch-based hair image synthesis.
//!
//! Colored hair strokes become a soft hair matte, then a hair image blended
//! into a background. The crate also provides the procedural auto-completion
//! of braided and unbraided sketches used by the interactive studio.

pub mod braid;
pub mod color;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod losses;
pub mod matte;
pub mod nn;
pub mod raster;
pub mod sketch;
pub mod trace;
pub mod trainer;

pub use error::{Error, Result};
