//! Adaptive background-aware correlation-filter tracking.
//!
//! A HOG context model runs on every frame. When its response map has competing
//! peaks, or the last estimate was semantically rejected, a deep-feature context
//! model is consulted and the estimate whose descriptor best matches the memory
//! of valid target appearances is kept.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64` unless noted.

pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod gate;
pub mod nms;
pub mod scalar;
pub mod solver;
pub mod spectral;
pub mod toy;
pub mod tracker;

pub use error::{Error, ParseErrorKind, Result};
pub use scalar::Scalar;

pub type RealGrid = spectral::RealGrid<f64>;
pub type SpectralGrid = spectral::SpectralGrid<f64>;
pub type FeatureTensor = features::FeatureTensor<f64>;
pub type DescriptorVector = features::DescriptorVector<f64>;
pub type FilterBank = solver::FilterBank<f64>;
pub type ResponseMap = solver::ResponseMap<f64>;
pub type NmsPeaks = nms::NmsPeaks<f64>;
pub type SemanticMemory = gate::SemanticMemory<f64>;
pub type Tracker = tracker::Tracker<f64>;
pub type TrackerF32 = tracker::Tracker<f32>;

pub use config::ConfigFile;
pub use eval::{EvalResult, SequenceSpec};
pub use gate::{Estimate, EstimateSource, GateConfig, GateFlags};
pub use nms::Reliability;
pub use solver::SolverConfig;
pub use tracker::{BoundingBox, ProviderKind, StepReport, TrackerConfig};
