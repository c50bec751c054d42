//! Butterworth design in second-order sections and zero-phase application.
//!
//! Design path: analog prototype poles, frequency pre-warping, low-pass or
//! band-pass transformation, bilinear transform, pairing of conjugate poles
//! into biquads. Sections are stored as `[b0, b1, b2, a0, a1, a2]` with
//! `a0 = 1`, ordered by ascending pole magnitude.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterKind {
    LowPass,
    BandPass,
}

/// A designed digital filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Order of the analog low-pass prototype.
    pub order: usize,
    pub edges_hz: Vec<f64>,
    pub sample_rate_hz: f64,
    pub sections: Vec<[f64; 6]>,
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let c = Complex64::new(2.0 * fs, 0.0);
    (c + s) / (c - s)
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

/// Upper-half-plane poles of the unit-cutoff analog Butterworth prototype.
fn prototype_upper_poles(order: usize) -> Vec<Complex64> {
    (0..order / 2)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn section_from_pole(z: Complex64, b: [f64; 3]) -> [f64; 6] {
    [b[0], b[1], b[2], 1.0, -2.0 * z.re, z.norm_sqr()]
}

fn section_response(sec: &[f64; 6], f: f64, fs: f64) -> Complex64 {
    let zinv = Complex64::from_polar(1.0, -2.0 * PI * f / fs);
    let zinv2 = zinv * zinv;
    let num = sec[0] + sec[1] * zinv + sec[2] * zinv2;
    let den = sec[3] + sec[4] * zinv + sec[5] * zinv2;
    num / den
}

/// Designs a digital Butterworth filter.
///
/// `edges` is one cutoff for [`FilterKind::LowPass`] and `(low, high)` for
/// [`FilterKind::BandPass`]. A band-pass built from an order-`n` prototype
/// has `n` biquads.
pub fn design_butterworth(
    kind: FilterKind,
    order: usize,
    edges: &[f64],
    sample_rate: f64,
) -> Result<FilterSpec> {
    if ![2, 4, 6, 8].contains(&order) {
        return Err(Error::Design(format!("order {order} not in {{2, 4, 6, 8}}")));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::Design(format!("sample rate {sample_rate} is not positive")));
    }
    let nyquist = sample_rate / 2.0;
    let expected = match kind {
        FilterKind::LowPass => 1,
        FilterKind::BandPass => 2,
    };
    if edges.len() != expected {
        return Err(Error::Design(format!(
            "{kind:?} needs {expected} edge frequencies, got {}",
            edges.len()
        )));
    }
    if let Some(f) = edges.iter().find(|f| !(**f > 0.0 && **f < nyquist)) {
        return Err(Error::Design(format!(
            "edge {f} Hz outside (0, {nyquist}) Hz"
        )));
    }
    let protos = prototype_upper_poles(order);
    let mut sections = match kind {
        FilterKind::LowPass => {
            let wc = prewarp(edges[0], sample_rate);
            protos
                .iter()
                .map(|p| {
                    let z = bilinear(p * wc, sample_rate);
                    let mut sec = section_from_pole(z, [1.0, 2.0, 1.0]);
                    let g = (1.0 + sec[4] + sec[5]) / 4.0;
                    for b in &mut sec[..3] {
                        *b *= g;
                    }
                    sec
                })
                .collect::<Vec<_>>()
        }
        FilterKind::BandPass => {
            let (lo, hi) = (edges[0], edges[1]);
            if lo >= hi {
                return Err(Error::Design(format!("band edges inverted: {lo} >= {hi}")));
            }
            let (w1, w2) = (prewarp(lo, sample_rate), prewarp(hi, sample_rate));
            let bw = w2 - w1;
            let w0sq = w1 * w2;
            let center = center_frequency_of(lo, hi, sample_rate);
            let mut secs = Vec::with_capacity(order);
            for p in &protos {
                // s^2 - p*bw*s + w0^2 = 0
                let half = p * bw / 2.0;
                let disc = (half * half - w0sq).sqrt();
                for s in [half + disc, half - disc] {
                    let z = bilinear(s, sample_rate);
                    let mut sec = section_from_pole(z, [1.0, 0.0, -1.0]);
                    let g = section_response(&sec, center, sample_rate).norm();
                    for b in &mut sec[..3] {
                        *b /= g;
                    }
                    secs.push(sec);
                }
            }
            secs
        }
    };
    sections.sort_by(|a, b| a[5].total_cmp(&b[5]));
    let mut spec = FilterSpec {
        kind,
        order,
        edges_hz: edges.to_vec(),
        sample_rate_hz: sample_rate,
        sections,
    };
    if kind == FilterKind::BandPass {
        // unit-magnitude sections can leave an overall sign flip; the true
        // response at the warped center is +1
        if spec.response(spec.center_frequency()).re < 0.0 {
            for b in &mut spec.sections[0][..3] {
                *b = -*b;
            }
        }
    }
    Ok(spec)
}

/// Digital frequency whose pre-warped value is the geometric mean of the
/// pre-warped band edges; a Butterworth band-pass has unit gain there.
fn center_frequency_of(lo: f64, hi: f64, fs: f64) -> f64 {
    let t = ((PI * lo / fs).tan() * (PI * hi / fs).tan()).sqrt();
    fs * t.atan() / PI
}

impl FilterSpec {
    /// Complex frequency response at `f_hz`, evaluated from the sections.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        self.sections
            .iter()
            .map(|s| section_response(s, f_hz, self.sample_rate_hz))
            .product()
    }

    pub fn magnitude(&self, f_hz: f64) -> f64 {
        self.response(f_hz).norm()
    }

    /// Unit-gain reference frequency: 0 for low-pass, warped geometric
    /// center for band-pass.
    pub fn center_frequency(&self) -> f64 {
        match self.kind {
            FilterKind::LowPass => 0.0,
            FilterKind::BandPass => {
                center_frequency_of(self.edges_hz[0], self.edges_hz[1], self.sample_rate_hz)
            }
        }
    }

    /// Pole pairs of every section.
    pub fn poles(&self) -> Vec<Complex64> {
        self.sections
            .iter()
            .flat_map(|s| {
                let (a1, a2) = (s[4] / s[3], s[5] / s[3]);
                let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
                [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
            })
            .collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Steady-state section states for a unit constant input.
    fn steady_state(&self) -> Vec<[f64; 2]> {
        let mut level = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let (b0, b1, b2, a1, a2) = (s[0], s[1], s[2], s[4], s[5]);
                let gain = (b0 + b1 + b2) / (1.0 + a1 + a2);
                let u = level;
                let y = gain * u;
                level = y;
                [y - b0 * u, b2 * u - a2 * y]
            })
            .collect()
    }

    /// Causal cascade filtering in transposed direct form II, starting from
    /// the steady state for a constant input equal to `x[0]`.
    fn filter_causal(&self, x: &[f64], zi: &[[f64; 2]]) -> Vec<f64> {
        let x0 = x.first().copied().unwrap_or(0.0);
        let mut state: Vec<[f64; 2]> = zi.iter().map(|z| [z[0] * x0, z[1] * x0]).collect();
        let mut out = x.to_vec();
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            for v in out.iter_mut() {
                let xin = *v;
                let y = s[0] * xin + z[0];
                z[0] = s[1] * xin - s[4] * y + z[1];
                z[1] = s[2] * xin - s[5] * y;
                *v = y;
            }
        }
        out
    }

    fn forward_backward(&self, x: &[f64], zi: &[[f64; 2]]) -> Vec<f64> {
        let mut y = self.filter_causal(x, zi);
        y.reverse();
        let mut y = self.filter_causal(&y, zi);
        y.reverse();
        y
    }
}

/// Zero-phase filtering.
///
/// The input is extended by odd reflection of `3 × order` samples at both
/// ends, filtered forward then backward, and also backward then forward; the
/// two passes are averaged so the operation commutes exactly with time
/// reversal. The effective magnitude response is `|H|²`.
pub fn apply_zero_phase(spec: &FilterSpec, x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n <= 6 * spec.order {
        return Err(Error::Length(format!(
            "signal of {n} samples is too short for an order-{} filter (needs > {})",
            spec.order,
            6 * spec.order
        )));
    }
    let pad = 3 * spec.order;
    let (first, last) = (x[0], x[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| 2.0 * first - x[k]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|k| 2.0 * last - x[n - 1 - k]));

    let zi = spec.steady_state();
    let fb = spec.forward_backward(&ext, &zi);
    ext.reverse();
    let mut bf = spec.forward_backward(&ext, &zi);
    bf.reverse();
    Ok(fb[pad..pad + n]
        .iter()
        .zip(&bf[pad..pad + n])
        .map(|(a, b)| 0.5 * (a + b))
        .collect())
}
