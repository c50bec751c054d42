//! Hann-windowed periodograms and dominant-frequency detection.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dataset::EventDataset;
use crate::error::{Error, Result};
use crate::lifting::compute_pq;

/// Default search band in Hz.
pub const DEFAULT_BAND: (f64, f64) = (0.05, 1.0);
/// A peak must exceed this multiple of the in-band median to count as a mode.
pub const PEAK_TO_FLOOR_MIN: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPeak {
    pub f_s: f64,
    /// Sinusoid amplitude implied by the channel-averaged spectrum.
    pub amplitude: f64,
    /// Bin spacing after zero-padding, Hz.
    pub resolution: f64,
    pub band_searched: (f64, f64),
    pub peak_to_floor: f64,
}

/// Which signals feed the channel-averaged spectrum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumSource {
    /// Voltage and current magnitudes.
    #[default]
    Magnitudes,
    /// Active and reactive power per location.
    Pq,
}

/// One-sided power spectrum of a mean-removed, Hann-windowed signal.
///
/// Normalized so that the bins sum to the window-weighted mean square of
/// the signal, i.e. its variance for stationary input.
#[derive(Debug, Clone)]
pub struct Periodogram {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub nfft: usize,
    /// Sum of the window samples, for amplitude conversion.
    window_sum: f64,
    window_sq_sum: f64,
}

pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1) as f64).cos())
        .collect()
}

/// Zero-padded length: at least four times the signal, next power of two.
pub fn padded_len(n: usize) -> usize {
    (4 * n).next_power_of_two()
}

pub fn periodogram(x: &[f64], sample_rate: f64) -> Periodogram {
    periodogram_with(x, sample_rate, &mut FftPlanner::new())
}

fn periodogram_with(x: &[f64], sample_rate: f64, planner: &mut FftPlanner<f64>) -> Periodogram {
    let n = x.len();
    let nfft = padded_len(n);
    let w = hann(n);
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); nfft];
    for k in 0..n {
        buf[k].re = (x[k] - mean) * w[k];
    }
    planner.plan_fft_forward(nfft).process(&mut buf);
    let window_sum: f64 = w.iter().sum();
    let window_sq_sum: f64 = w.iter().map(|v| v * v).sum();
    let scale = 1.0 / (nfft as f64 * window_sq_sum);
    let half = nfft / 2;
    let power = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            if k == 0 || k == half {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    let freqs = (0..=half)
        .map(|k| k as f64 * sample_rate / nfft as f64)
        .collect();
    Periodogram {
        freqs,
        power,
        nfft,
        window_sum,
        window_sq_sum,
    }
}

impl Periodogram {
    /// Amplitude of a sinusoid whose one-sided power peak equals `p`.
    fn amplitude_from_power(&self, p: f64) -> f64 {
        let x_abs = (p.max(0.0) * self.nfft as f64 * self.window_sq_sum / 2.0).sqrt();
        2.0 * x_abs / self.window_sum
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Vertex offset of the parabola through three equally spaced samples,
/// in bins relative to the middle one.
pub fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom == 0.0 {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

/// Locates the dominant spectral peak across several equally sampled signals.
///
/// Each signal's periodogram is normalized by its total power before
/// averaging so that channels in different units weigh equally; the
/// reported amplitude uses the unnormalized average.
pub fn detect_in_signals(signals: &[&[f64]], sample_rate: f64, band: (f64, f64)) -> Result<SpectralPeak> {
    let (lo, hi) = band;
    if !(lo > 0.0 && lo < hi && hi < sample_rate / 2.0) {
        return Err(Error::Validation(format!(
            "search band ({lo}, {hi}) Hz must lie inside (0, {}) Hz",
            sample_rate / 2.0
        )));
    }
    let Some(first) = signals.first() else {
        return Err(Error::Data("no signals for spectral analysis".into()));
    };
    let n = first.len();
    if n < 8 || signals.iter().any(|s| s.len() != n) {
        return Err(Error::Length("signals must share a length of at least 8 samples".into()));
    }
    let mut planner = FftPlanner::new();
    let mut shape = Vec::new();
    let mut raw = Vec::new();
    let mut template = None;
    for s in signals {
        let pg = periodogram_with(s, sample_rate, &mut planner);
        let total: f64 = pg.power.iter().sum();
        if shape.is_empty() {
            shape = vec![0.0; pg.power.len()];
            raw = vec![0.0; pg.power.len()];
        }
        for (k, p) in pg.power.iter().enumerate() {
            raw[k] += p / signals.len() as f64;
            if total > 0.0 {
                shape[k] += p / total;
            }
        }
        template.get_or_insert(pg);
    }
    let pg = template.expect("at least one signal");
    let resolution = sample_rate / pg.nfft as f64;
    let in_band: Vec<usize> = (0..pg.freqs.len())
        .filter(|&k| pg.freqs[k] >= lo && pg.freqs[k] <= hi)
        .collect();
    if in_band.len() < 3 {
        return Err(Error::Validation(format!(
            "search band ({lo}, {hi}) Hz holds fewer than 3 bins at {resolution:.4} Hz resolution"
        )));
    }
    let band_vals: Vec<f64> = in_band.iter().map(|&k| shape[k]).collect();
    let floor = median(&band_vals);
    let k = *in_band
        .iter()
        .max_by(|a, b| shape[**a].total_cmp(&shape[**b]))
        .expect("non-empty band");
    let peak = shape[k];
    let ratio = if floor > 0.0 { peak / floor } else if peak > 0.0 { f64::INFINITY } else { 0.0 };
    if !(ratio > PEAK_TO_FLOOR_MIN) {
        return Err(Error::NoDominantMode(format!(
            "largest peak in ({lo}, {hi}) Hz is {ratio:.2}x the median floor (needs > {PEAK_TO_FLOOR_MIN})"
        )));
    }
    let delta = if k > 0 && k + 1 < shape.len() {
        parabolic_offset(shape[k - 1], shape[k], shape[k + 1])
    } else {
        0.0
    };
    let f_s = (k as f64 + delta) * resolution;
    let raw_peak = if k > 0 && k + 1 < raw.len() {
        let (l, m, r) = (raw[k - 1], raw[k], raw[k + 1]);
        m - 0.25 * (l - r) * delta
    } else {
        raw[k]
    };
    Ok(SpectralPeak {
        f_s,
        amplitude: pg.amplitude_from_power(raw_peak),
        resolution,
        band_searched: band,
        peak_to_floor: ratio,
    })
}

/// Dominant poorly damped frequency of a windowed dataset.
pub fn detect_dominant_frequency(ds: &EventDataset, band: (f64, f64)) -> Result<SpectralPeak> {
    detect_dominant_frequency_from(ds, band, SpectrumSource::Magnitudes)
}

pub fn detect_dominant_frequency_from(
    ds: &EventDataset,
    band: (f64, f64),
    source: SpectrumSource,
) -> Result<SpectralPeak> {
    let owned: Vec<Vec<f64>> = match source {
        SpectrumSource::Magnitudes => ds.channels().map(|c| c.magnitude.clone()).collect(),
        SpectrumSource::Pq => {
            let mut v = Vec::new();
            for loc in &ds.locations {
                let (p, q) = compute_pq(&loc.voltage, &loc.current)?;
                v.push(p);
                v.push(q);
            }
            v
        }
    };
    if let Some((i, _)) = owned
        .iter()
        .enumerate()
        .find(|(_, s)| s.iter().any(|v| !v.is_finite()))
    {
        return Err(Error::Data(format!("signal {i} holds non-finite samples")));
    }
    let refs: Vec<&[f64]> = owned.iter().map(Vec::as_slice).collect();
    detect_in_signals(&refs, ds.sample_rate, band)
}
