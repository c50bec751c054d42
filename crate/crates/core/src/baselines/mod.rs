//! Comparison methods: dissipating energy flow and reactive-power /
//! voltage phase alignment.
//!
//! Sign convention: P and Q are positive when flowing from the plant into
//! the grid, so a positive energy rate means the location exports
//! oscillating energy.

mod def;
mod qv;

pub use def::{def_energy, def_energy_series, DefLocation, DefResult, DefSeries};
pub use qv::{qv_phase, qv_phase_sweep, wrap_degrees, QvLocation, QvOptions, QvPhaseResult, QvWindow};

use serde::{Deserialize, Serialize};

/// Both baselines as they appear in an analysis report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineResults {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub def: Option<DefResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qv: Option<QvPhaseResult>,
}
