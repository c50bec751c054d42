//! Oscillation source location from synchrophasor records.
//!
//! The pipeline loads a multi-location phasor event, windows and filters
//! it, lifts it into a dictionary of power observables, fits a reduced
//! Koopman operator by extended dynamic mode decomposition and ranks
//! locations by their participation in the dominant oscillatory mode.
//! Dissipating-energy-flow and reactive-voltage phase baselines and a
//! synthetic event generator with known ground truth are included.

pub mod baselines;
pub mod csvio;
pub mod dataset;
pub mod edmd;
pub mod error;
pub mod lifting;
pub mod pipeline;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use pipeline::{run_analysis, AnalysisConfig, AnalysisReport};
