//! Retarget an exemplar SVG onto a target raster image.
//!
//! The pipeline segments the target into flat-colored components, matches
//! them to exemplar paths through region features, pre-aligns matched paths
//! with affine point-set registration, fits new paths for what is left, and
//! finally refines every control point and fill color by gradient descent
//! through a differentiable rasterizer.

pub mod error;
pub mod eval;
pub mod geom;
pub mod matching;
pub mod optimize;
pub mod pipeline;
pub mod prealign;
pub mod raster;
pub mod segment;
pub mod svg;
pub mod synth;

pub use error::{Error, Result};
