//! Confidence-aware multi-field probability calibration.
//!
//! Predicted probabilities from a base model are calibrated per value of one
//! or more categorical fields. Each field-value subset is corrected by a
//! multiplier whose strength depends on how confidently the observed rate
//! contradicts the prediction (via Wilson score intervals), and per-field
//! multipliers are fused by a weighted geometric mean.
//!
//! Modules:
//!
//! - [`dataset`]: samples, field partitioning, subset statistics
//! - [`wilson`]: Wilson interval and its inversion
//! - [`confcalib`]: per-field confidence-aware calibrator
//! - [`fusion`]: multi-field fusion and weight grid search
//! - [`baselines`]: naive, Platt, histogram binning, isotonic
//! - [`pipeline`]: calibrator composition and recalibration
//! - [`metrics`]: Field-RCE, ECE, MVCE, AUC, log loss
//! - [`harness`]: synthetic data and the sliding-window refit simulation
//! - [`io`]: CSV/JSONL datasets and model files
//! - [`cli`]: the `confcal` command line
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod baselines;
pub mod binning;
pub mod cli;
pub mod confcalib;
pub mod dataset;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod wilson;

pub use baselines::CalibratorArtifact;
pub use confcalib::{ConfCalibModel, FitConfig};
pub use dataset::{Dataset, FieldSpec, Sample, SubsetStats};
pub use error::{CalibError, Result};
pub use fusion::{FusionWeights, Objective};
pub use metrics::{EvalConfig, EvalReport};
pub use pipeline::{Pipeline, Stage};
