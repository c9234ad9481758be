//! Crowd motion saliency detection.
//!
//! Dense flow is averaged over an interval, particles are advected through the mean
//! field to obtain finite-time Lyapunov exponents, and both the stability values and
//! the mean-flow directions are lifted into `n x n` pairwise structures. Each
//! particle's rows of those structures form its feature vector; the features are
//! linked into a self-tuned kNN graph, ranked against random queries, and the
//! particles with the highest and lowest averaged scores are reported as salient
//! regions.
//!
//! The main entry points are [`pipeline::analyze_window`] (in memory) and
//! [`pipeline::run_pipeline`] (files in, artifacts out).

pub mod advection;
pub mod error;
pub mod eval;
pub mod flowfield;
pub mod geom;
pub mod phase;
pub mod pipeline;
pub mod ranking;
pub mod raster;
pub mod stability;

pub use error::{Error, Result};
pub use flowfield::{FlowField, FlowSequence, GridSpec, SceneSpec};
pub use geom::{Point, Rect};
pub use pipeline::{analyze_window, run_pipeline, PipelineConfig};
