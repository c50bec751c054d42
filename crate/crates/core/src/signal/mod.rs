//! Filtering, spectral peak detection and cropping of phasor-derived signals.

mod filter;
mod spectrum;

use std::ops::Range;

pub use filter::{apply_zero_phase, design_butterworth, FilterKind, FilterSpec};
pub use spectrum::{
    detect_dominant_frequency, detect_dominant_frequency_from, detect_in_signals, hann,
    padded_len, parabolic_offset, periodogram, Periodogram, SpectralPeak, SpectrumSource,
    DEFAULT_BAND, PEAK_TO_FLOOR_MIN,
};

use crate::error::{Error, Result};

/// Default retained fraction of a filtered record.
pub const DEFAULT_CROP: (f64, f64) = (0.2, 0.8);

/// Index range `[⌊keep.0·n⌋, ⌊keep.1·n⌋)`.
pub fn crop_range(n: usize, keep: (f64, f64)) -> Result<Range<usize>> {
    let (a, b) = keep;
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::Validation(format!(
            "crop fractions ({a}, {b}) must satisfy 0 <= start < end <= 1"
        )));
    }
    let start = (a * n as f64).floor() as usize;
    let end = ((b * n as f64).floor() as usize).min(n);
    if end.saturating_sub(start) < 2 {
        return Err(Error::Length(format!(
            "cropping {n} samples to ({a}, {b}) leaves fewer than 2"
        )));
    }
    Ok(start..end)
}

/// Keeps the central part of a filtered signal, away from edge transients.
pub fn crop_central(x: &[f64], keep: (f64, f64)) -> Result<Vec<f64>> {
    Ok(x[crop_range(x.len(), keep)?].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_default_on_1000() {
        let x: Vec<f64> = (0..1000).map(|k| k as f64).collect();
        let c = crop_central(&x, DEFAULT_CROP).unwrap();
        assert_eq!(c.len(), 600);
        assert_eq!(c[0], 200.0);
        assert_eq!(*c.last().unwrap(), 799.0);
    }

    #[test]
    fn crop_identity() {
        let x = vec![1.0, 2.0, 3.0];
        assert_eq!(crop_central(&x, (0.0, 1.0)).unwrap(), x);
    }

    #[test]
    fn crop_50s_window() {
        let x = vec![0.0; 2500];
        assert_eq!(crop_central(&x, DEFAULT_CROP).unwrap().len(), 1500);
    }

    #[test]
    fn crop_errors() {
        assert!(matches!(crop_central(&[0.0; 10], (0.5, 0.55)), Err(Error::Length(_))));
        assert!(matches!(crop_central(&[0.0; 10], (0.6, 0.5)), Err(Error::Validation(_))));
    }
}
