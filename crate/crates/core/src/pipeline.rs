//! End-to-end analysis: clean → window → low-pass → spectral peak →
//! band-pass → crop → lift → EDMD → participation, with optional
//! baselines.
//!
//! Observables are evaluated on the low-passed phasors; the band-pass and
//! crop are applied to each lifted row, so products such as P and Q are
//! formed from full signals rather than from their oscillatory parts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{def_energy, qv_phase, BaselineResults, QvOptions};
use crate::dataset::{
    align_and_window_with, exclude_bad_channels, EventDataset, Exclusion, DEFAULT_F_MIN_HZ,
};
use crate::edmd::{
    assemble_gram, choose_rank, participation, reduce_and_decompose, select_target_mode,
    singular_values, to_continuous, KoopmanSummary, ModeEstimate, ParticipationReport, RankChoice,
};
use crate::error::{Error, Result};
use crate::lifting::{build_dictionary, evaluate_observables, DictionaryConfig, ObservableDef, SnapshotMatrices};
use crate::signal::{
    apply_zero_phase, crop_central, design_butterworth, detect_dominant_frequency_from, FilterKind,
    FilterSpec, SpectralPeak, SpectrumSource, DEFAULT_BAND, DEFAULT_CROP,
};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every parameter of an analysis run; defaults are materialized into the
/// report so a run can be replayed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Analysis window in seconds; the full record when absent.
    pub window: Option<(f64, f64)>,
    pub f_min_hz: f64,
    pub max_gap_fraction: f64,
    /// Low-pass corner; `None` skips the low-pass stage.
    pub lowpass_hz: Option<f64>,
    pub lowpass_order: usize,
    /// Band searched for the dominant spectral peak.
    pub search_band: (f64, f64),
    pub spectrum_source: SpectrumSource,
    /// Band-pass edges as multiples of the detected frequency.
    pub band_rel: (f64, f64),
    /// Fixed band-pass edges in Hz, overriding `band_rel`.
    pub band_abs: Option<(f64, f64)>,
    pub bandpass_order: usize,
    pub crop: (f64, f64),
    /// Truncation rank; elbow detection when absent.
    pub rank: Option<usize>,
    pub dictionary: DictionaryConfig,
    pub def: bool,
    pub qv: bool,
    pub qv_threshold_deg: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            window: None,
            f_min_hz: DEFAULT_F_MIN_HZ,
            max_gap_fraction: 0.05,
            lowpass_hz: Some(3.0),
            lowpass_order: 4,
            search_band: DEFAULT_BAND,
            spectrum_source: SpectrumSource::Magnitudes,
            band_rel: (0.9, 1.1),
            band_abs: None,
            bandpass_order: 4,
            crop: DEFAULT_CROP,
            rank: None,
            dictionary: DictionaryConfig::default(),
            def: false,
            qv: false,
            qv_threshold_deg: 30.0,
        }
    }
}

/// SHA-256 over the numeric content and time base of a dataset.
pub fn dataset_fingerprint(ds: &EventDataset) -> String {
    let mut h = Sha256::new();
    h.update(ds.sample_rate.to_le_bytes());
    h.update(ds.t0().to_le_bytes());
    for loc in &ds.locations {
        h.update(loc.id.to_le_bytes());
        for ch in [&loc.voltage, &loc.current] {
            for v in ch.magnitude.iter().chain(&ch.angle) {
                h.update(v.to_le_bytes());
            }
        }
    }
    for ex in &ds.excluded_locations {
        h.update(ex.location_id.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Dataset after cleaning, windowing and low-pass filtering, with the
/// detected frequency and the band-pass designed around it.
#[derive(Debug, Clone)]
pub struct PreparedEvent {
    pub windowed: EventDataset,
    pub filtered: EventDataset,
    pub peak: SpectralPeak,
    pub lowpass: Option<FilterSpec>,
    pub band: FilterSpec,
    pub warnings: Vec<String>,
}

impl PreparedEvent {
    pub fn f_s(&self) -> f64 {
        self.peak.f_s
    }

    pub fn filter_specs(&self) -> Vec<FilterSpec> {
        self.lowpass.iter().cloned().chain([self.band.clone()]).collect()
    }
}

pub fn prepare_event(ds: &EventDataset, cfg: &AnalysisConfig) -> Result<PreparedEvent> {
    ds.validate()?;
    let mut warnings = Vec::new();
    let cleaned = exclude_bad_channels(ds, cfg.max_gap_fraction)?;
    for ex in &cleaned.excluded_locations {
        warnings.push(format!("location {} excluded: {}", ex.location_id, ex.reason));
    }
    for (id, n) in &cleaned.interpolated {
        warnings.push(format!("location {id}: {n} samples interpolated"));
    }
    let (t_start, t_end) = cfg.window.unwrap_or(cleaned.window);
    let windowed = align_and_window_with(&cleaned, t_start, t_end, cfg.f_min_hz)?;

    let lowpass = cfg
        .lowpass_hz
        .map(|f| design_butterworth(FilterKind::LowPass, cfg.lowpass_order, &[f], windowed.sample_rate))
        .transpose()?;
    let filtered = match &lowpass {
        Some(lp) => windowed.map_series(|x| apply_zero_phase(lp, x))?,
        None => windowed.clone(),
    };
    let peak = detect_dominant_frequency_from(&filtered, cfg.search_band, cfg.spectrum_source)?;
    let edges = match cfg.band_abs {
        Some((lo, hi)) => {
            if !(lo <= peak.f_s && peak.f_s <= hi) {
                warnings.push(format!(
                    "detected frequency {:.4} Hz lies outside the fixed band [{lo}, {hi}] Hz",
                    peak.f_s
                ));
            }
            [lo, hi]
        }
        None => [cfg.band_rel.0 * peak.f_s, cfg.band_rel.1 * peak.f_s],
    };
    let band = design_butterworth(FilterKind::BandPass, cfg.bandpass_order, &edges, filtered.sample_rate)?;
    Ok(PreparedEvent {
        windowed,
        filtered,
        peak,
        lowpass,
        band,
        warnings,
    })
}

/// Band-passed, cropped, mean-removed snapshot pairs of the dictionary.
pub fn lift_prepared(prep: &PreparedEvent, dict: &[ObservableDef], crop: (f64, f64)) -> Result<SnapshotMatrices> {
    let lifted = evaluate_observables(&prep.filtered, dict)?
        .map_rows(|row| crop_central(&apply_zero_phase(&prep.band, row)?, crop))?;
    SnapshotMatrices::from_series(&lifted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub tool_version: String,
    pub dataset_fingerprint: String,
    pub parameters: AnalysisConfig,
    pub window: (f64, f64),
    pub n_samples: usize,
    pub sample_rate_hz: f64,
    pub locations: Vec<u32>,
    pub excluded_locations: Vec<Exclusion>,
    pub interpolated: BTreeMap<u32, usize>,
    pub f_s: f64,
    pub spectral_peak: SpectralPeak,
    pub filter_specs: Vec<FilterSpec>,
    pub observables: Vec<String>,
    pub singular_values: Vec<f64>,
    pub rank_r: usize,
    pub rank_choice: RankChoice,
    pub koopman: KoopmanSummary,
    /// All retained modes, least damped first.
    pub modes: Vec<ModeEstimate>,
    pub target_in_band: bool,
    pub participation: ParticipationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baselines: Option<BaselineResults>,
    pub warnings: Vec<String>,
}

/// Runs the full pipeline on a loaded dataset.
pub fn run_analysis(ds: &EventDataset, cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    let prep = prepare_event(ds, cfg)?;
    let mut warnings = prep.warnings.clone();

    let dict = build_dictionary(&prep.filtered, &cfg.dictionary)?;
    let snap = lift_prepared(&prep, &dict, cfg.crop)?;
    warnings.extend(snap.warnings.iter().cloned());
    let gram = assemble_gram(&snap)?;
    let sigma = singular_values(&gram)?;
    let rank_choice = choose_rank(&sigma, cfg.rank)?;
    warnings.extend(rank_choice.warnings.iter().cloned());
    let model = reduce_and_decompose(&gram, &snap, rank_choice.rank)?;
    warnings.extend(model.warnings.iter().cloned());
    let modes = to_continuous(&model)?;
    warnings.extend(modes.warnings.iter().cloned());
    let target = select_target_mode(&modes.modes, prep.f_s())?;
    warnings.extend(target.warning.iter().cloned());
    let part = participation(&model, &target.mode, &dict)?;

    let baselines = if cfg.def || cfg.qv {
        let def = cfg
            .def
            .then(|| def_energy(&prep.filtered, &prep.band, cfg.crop))
            .transpose()?;
        let qv = cfg
            .qv
            .then(|| {
                let opts = QvOptions {
                    threshold_deg: cfg.qv_threshold_deg,
                    crop: cfg.crop,
                    band: Some(prep.band.clone()),
                };
                qv_phase(&prep.filtered, prep.f_s(), &opts)
            })
            .transpose()?;
        Some(BaselineResults { def, qv })
    } else {
        None
    };

    Ok(AnalysisReport {
        tool_version: TOOL_VERSION.to_string(),
        dataset_fingerprint: dataset_fingerprint(ds),
        parameters: cfg.clone(),
        window: prep.windowed.window,
        n_samples: prep.windowed.len(),
        sample_rate_hz: prep.windowed.sample_rate,
        locations: prep.windowed.location_ids(),
        excluded_locations: prep.windowed.excluded_locations.clone(),
        interpolated: prep.windowed.interpolated.clone(),
        f_s: prep.f_s(),
        spectral_peak: prep.peak.clone(),
        filter_specs: prep.filter_specs(),
        observables: snap.observable_names.clone(),
        singular_values: sigma,
        rank_r: model.rank,
        rank_choice,
        koopman: model.summary(),
        modes: modes.modes,
        target_in_band: target.in_band,
        participation: part,
        baselines,
        warnings,
    })
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(Error::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_event, SynthScenario};

    fn event() -> EventDataset {
        generate_event(&SynthScenario {
            source_location: 4,
            ..SynthScenario::default()
        })
        .unwrap()
        .0
    }

    #[test]
    fn synthetic_source_ranks_first() {
        let cfg = AnalysisConfig {
            def: true,
            qv: true,
            ..AnalysisConfig::default()
        };
        let r = run_analysis(&event(), &cfg).unwrap();
        assert!((r.f_s - 0.158).abs() < 0.005, "{}", r.f_s);
        assert_eq!(r.participation.ranking[0], 4);
        assert!((r.participation.target_mode.frequency_hz - 0.158).abs() < 0.158 * 0.05);
        assert!((r.participation.trace_sum.re - 1.0).abs() < 1e-8);
        let b = r.baselines.as_ref().unwrap();
        assert_eq!(b.def.as_ref().unwrap().ranking_injecting[0], 4);
        assert!(b.qv.as_ref().unwrap().get(4).unwrap().in_phase);
        assert_eq!(r.observables.len(), 10);
        assert_eq!(r.filter_specs.len(), 2);
    }

    #[test]
    fn report_is_deterministic_and_round_trips() {
        let cfg = AnalysisConfig::default();
        let a = run_analysis(&event(), &cfg).unwrap().to_json().unwrap();
        let b = run_analysis(&event(), &cfg).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let parsed = AnalysisReport::from_json(&a).unwrap();
        assert_eq!(parsed.to_json().unwrap(), a);
    }

    #[test]
    fn replay_from_recorded_parameters() {
        let cfg = AnalysisConfig {
            window: Some((10.0, 110.0)),
            rank: Some(4),
            ..AnalysisConfig::default()
        };
        let first = run_analysis(&event(), &cfg).unwrap();
        let replay = run_analysis(&event(), &first.parameters).unwrap();
        assert_eq!(first, replay);
        assert_eq!(first.rank_r, 4);
        assert_eq!(first.n_samples, 5000);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let ds = event();
        let mut other = ds.clone();
        other.locations[0].voltage.magnitude[7] += 1e-9;
        assert_ne!(dataset_fingerprint(&ds), dataset_fingerprint(&other));
        assert_eq!(dataset_fingerprint(&ds).len(), 64);
    }
}
