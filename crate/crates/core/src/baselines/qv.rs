//! Reactive power / voltage magnitude phase alignment at the oscillation
//! frequency.
//!
//! A plant whose reactive power oscillates in phase with its own voltage
//! magnitude is flagged as a candidate source. Phases come from a
//! Hann-windowed single-bin DFT over the cropped window; coherence from the
//! two half-window segments.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{EventDataset, Location};
use crate::error::{Error, Result};
use crate::lifting::compute_pq;
use crate::signal::{apply_zero_phase, crop_range, hann, FilterSpec, DEFAULT_CROP};

/// Minimum window length in oscillation cycles.
pub const MIN_CYCLES: f64 = 3.0;
/// Coherence needed for an in-phase verdict.
pub const MIN_COHERENCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvOptions {
    pub threshold_deg: f64,
    pub crop: (f64, f64),
    /// Band-pass applied to Q and V first; `None` when the dataset is
    /// already filtered.
    pub band: Option<FilterSpec>,
}

impl Default for QvOptions {
    fn default() -> Self {
        QvOptions {
            threshold_deg: 30.0,
            crop: DEFAULT_CROP,
            band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvLocation {
    pub location_id: u32,
    /// angle(Q) − angle(V) in (−180, 180]; positive when V lags Q.
    pub phase_deg: f64,
    pub coherence: f64,
    pub in_phase: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvPhaseResult {
    pub f_s: f64,
    pub threshold_deg: f64,
    pub per_location: Vec<QvLocation>,
}

impl QvPhaseResult {
    pub fn get(&self, location_id: u32) -> Option<&QvLocation> {
        self.per_location.iter().find(|l| l.location_id == location_id)
    }

    pub fn in_phase_locations(&self) -> Vec<u32> {
        self.per_location
            .iter()
            .filter(|l| l.in_phase)
            .map(|l| l.location_id)
            .collect()
    }
}

/// Maps an angle in degrees to (−180, 180].
pub fn wrap_degrees(x: f64) -> f64 {
    let r = x.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Hann-windowed DFT coefficient of the demeaned signal at the bin
/// nearest `f`.
fn bin_coefficient(x: &[f64], f: f64, fs: f64) -> Complex64 {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let w = hann(n);
    let k = (f * n as f64 / fs).round();
    let step = -2.0 * PI * k / n as f64;
    x.iter()
        .zip(&w)
        .enumerate()
        .map(|(j, (v, wj))| Complex64::from_polar((v - mean) * wj, step * j as f64))
        .sum()
}

fn location_phase(loc: &Location, ds: &EventDataset, f_s: f64, opts: &QvOptions) -> Result<QvLocation> {
    let (_, q) = compute_pq(&loc.voltage, &loc.current)?;
    let v = loc.voltage.magnitude.clone();
    let (q, v) = match &opts.band {
        Some(b) => (apply_zero_phase(b, &q)?, apply_zero_phase(b, &v)?),
        None => (q, v),
    };
    let r = crop_range(ds.len(), opts.crop)?;
    let (q, v) = (&q[r.clone()], &v[r]);
    let fs = ds.sample_rate;

    let cq = bin_coefficient(q, f_s, fs);
    let cv = bin_coefficient(v, f_s, fs);
    let phase_deg = if cq.norm() > 0.0 && cv.norm() > 0.0 {
        wrap_degrees((cq.arg() - cv.arg()).to_degrees())
    } else {
        0.0
    };

    let half = q.len() / 2;
    let (mut sqv, mut sqq, mut svv) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
    for seg in [0..half, half..2 * half] {
        let a = bin_coefficient(&q[seg.clone()], f_s, fs);
        let b = bin_coefficient(&v[seg], f_s, fs);
        sqv += a * b.conj();
        sqq += a.norm_sqr();
        svv += b.norm_sqr();
    }
    let coherence = if sqq > 0.0 && svv > 0.0 {
        (sqv.norm_sqr() / (sqq * svv)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(QvLocation {
        location_id: loc.id,
        phase_deg,
        coherence,
        in_phase: phase_deg.abs() <= opts.threshold_deg && coherence >= MIN_COHERENCE,
    })
}

/// Q–V phase per location at `f_s`.
pub fn qv_phase(ds: &EventDataset, f_s: f64, opts: &QvOptions) -> Result<QvPhaseResult> {
    if !(f_s > 0.0 && f_s < ds.sample_rate / 2.0) {
        return Err(Error::Validation(format!("oscillation frequency {f_s} Hz out of range")));
    }
    if ds.locations.is_empty() {
        return Err(Error::Data("dataset has no locations".into()));
    }
    let kept = crop_range(ds.len(), opts.crop)?.len();
    let cycles = kept as f64 / ds.sample_rate * f_s;
    if cycles < MIN_CYCLES {
        return Err(Error::Length(format!(
            "analysis window holds {cycles:.2} cycles of {f_s} Hz; at least {MIN_CYCLES} needed"
        )));
    }
    let per_location = ds
        .locations
        .par_iter()
        .map(|loc| location_phase(loc, ds, f_s, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(QvPhaseResult {
        f_s,
        threshold_deg: opts.threshold_deg,
        per_location,
    })
}

/// One sub-window of a Q–V sensitivity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QvWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub result: QvPhaseResult,
}

/// Repeats [`qv_phase`] over sliding sub-windows of `length_s` seconds
/// advanced by `step_s`, exposing how the verdict depends on the window.
pub fn qv_phase_sweep(
    ds: &EventDataset,
    f_s: f64,
    opts: &QvOptions,
    length_s: f64,
    step_s: f64,
) -> Result<Vec<QvWindow>> {
    if !(length_s > 0.0 && step_s > 0.0) {
        return Err(Error::Validation("sweep length and step must be positive".into()));
    }
    let fs = ds.sample_rate;
    let len = (length_s * fs).round() as usize;
    let step = ((step_s * fs).round() as usize).max(1);
    if len > ds.len() {
        return Err(Error::Length(format!(
            "sweep window of {len} samples exceeds the {} available",
            ds.len()
        )));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + len <= ds.len() {
        let sub = ds.map_series(|x| Ok(x[start..start + len].to_vec()))?;
        let t_start = ds.t0() + start as f64 / fs;
        let sub = crate::dataset::EventDataset {
            window: (t_start, t_start + len as f64 / fs),
            ..sub
        };
        out.push(QvWindow {
            t_start,
            t_end: sub.window.1,
            result: qv_phase(&sub, f_s, opts)?,
        });
        start += step;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::realize_location;

    fn pair_dataset(q: impl Fn(f64) -> f64, v: impl Fn(f64) -> f64, n: usize) -> EventDataset {
        let fs = 50.0;
        let t: Vec<f64> = (0..n).map(|k| k as f64 / fs).collect();
        let vm: Vec<f64> = t.iter().map(|t| 1.0 + 0.01 * v(*t)).collect();
        let qq: Vec<f64> = t.iter().map(|t| 0.2 + 0.05 * q(*t)).collect();
        let loc = realize_location(1, &vm, &vec![0.0; n], &vec![0.8; n], &qq, fs, 0.0).unwrap();
        EventDataset::new(vec![loc], fs, 0.0, "pu").unwrap()
    }

    const F: f64 = 0.25;

    #[test]
    fn identical_signals_in_phase() {
        let w = 2.0 * PI * F;
        let ds = pair_dataset(|t| (w * t).sin(), |t| (w * t).sin(), 3000);
        let r = qv_phase(&ds, F, &QvOptions::default()).unwrap();
        let l = &r.per_location[0];
        assert!(l.phase_deg.abs() < 1e-6, "{}", l.phase_deg);
        assert!(l.coherence > 0.99);
        assert!(l.in_phase);
    }

    #[test]
    fn antiphase_signals() {
        let w = 2.0 * PI * F;
        let ds = pair_dataset(|t| (w * t).sin(), |t| -(w * t).sin(), 3000);
        let l = qv_phase(&ds, F, &QvOptions::default()).unwrap().per_location[0].clone();
        assert!((l.phase_deg.abs() - 180.0).abs() < 1e-6);
        assert!(!l.in_phase);
    }

    #[test]
    fn lag_recovered_in_degrees() {
        let w = 2.0 * PI * F;
        let tau = 0.4;
        let ds = pair_dataset(|t| (w * t).sin(), |t| (w * (t - tau)).sin(), 3000);
        let l = &qv_phase(&ds, F, &QvOptions::default()).unwrap().per_location[0];
        assert!((l.phase_deg - 360.0 * F * tau).abs() < 2.0, "{}", l.phase_deg);
    }

    #[test]
    fn short_window_rejected() {
        let ds = pair_dataset(|t| t.sin(), |t| t.sin(), 500);
        assert!(matches!(qv_phase(&ds, 0.1, &QvOptions::default()), Err(Error::Length(_))));
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_degrees(180.0), 180.0);
        assert_eq!(wrap_degrees(-180.0), 180.0);
        assert_eq!(wrap_degrees(190.0), -170.0);
        assert_eq!(wrap_degrees(-10.0), -10.0);
        assert_eq!(wrap_degrees(720.0), 0.0);
    }

    #[test]
    fn sweep_covers_record() {
        let w = 2.0 * PI * F;
        let ds = pair_dataset(|t| (w * t).sin(), |t| (w * t).sin(), 3000);
        let s = qv_phase_sweep(&ds, F, &QvOptions::default(), 30.0, 10.0).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|w| w.result.per_location[0].in_phase));
        assert!((s[1].t_start - 10.0).abs() < 1e-12);
    }
}
