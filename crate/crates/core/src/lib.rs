//! Point-supervised instance edge detection toolkit.
//!
//! - [`annotations`] parses keypoint-polygon instance annotations and
//!   subsamples their keypoints.
//! - [`raster`] turns keypoints into polyline edges, `{0, 0.7, 1}` tunnel
//!   targets, filled masks and mask-derived edges.
//! - [`losses`] implements the penalty-reduced focal loss and the dice loss
//!   with analytical gradients, plus a finite-difference checker.
//! - [`kernels`] holds forward reference kernels for query cross-attention,
//!   the coefficient head and the dense prediction head.
//! - [`metrics`] is the evaluation pipeline: thinning, distance-gated
//!   bipartite matching, and ODS/OIS over a threshold sweep.
//! - [`cli`] wires these into the `instedge` command.

pub mod annotations;
pub mod cli;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod pgm;
pub mod raster;

pub use error::{Error, Result};
pub use grid::{BitMap, Field, GrayMap};
