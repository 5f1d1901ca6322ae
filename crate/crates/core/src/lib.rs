//! Driving-intention prediction with hidden Markov models.
//!
//! Vehicle trajectories are cut into fixed-length trails, turned into
//! per-step mobility features, and scored against three per-intention
//! HMMs (change left, change right, keep lane). Emissions are either
//! discrete (K-means codebook) or continuous (per-feature Gaussian
//! mixtures).
//!
//! The pipeline, bottom up:
//!
//! - [`ingest`]: CSV parsing, lane map-matching, labeled trail extraction.
//! - [`features`]: kinematics, lane offsets, surrounding-vehicle regions,
//!   feature matrices and the featurized dataset format.
//! - [`kmeans`]: discrete characterization of feature rows.
//! - [`gmm`]: Gaussian-mixture emission densities and their M-step.
//! - [`hmm`]: scaled forward/backward and discrete/continuous training.
//! - [`predictor`]: model bank and argmax-likelihood classification.
//! - [`synth`]: synthetic multi-lane traffic with ground truth.
//! - [`experiment`]: train/evaluate/sweep harness used by the CLI.

pub mod error;
pub mod experiment;
pub mod features;
pub mod gmm;
pub mod hmm;
pub mod ingest;
pub mod kmeans;
pub mod predictor;
pub mod synth;

mod prob;
mod serde_arrays;

pub use error::{Error, Result};
pub use ingest::IntentionLabel;

/// Steps per trail.
pub const TRAIL_LEN: usize = 9;

/// Sampling interval of the trajectory grid, in seconds.
pub const STEP_SECONDS: f64 = 0.5;

/// Default lane width in meters.
pub const DEFAULT_LANE_WIDTH: f64 = 3.5;
