//! Phasor channels and multi-location event datasets.
//!
//! Angles are held in radians in memory. Magnitudes keep whatever unit the
//! source declared (per-unit or engineering units), recorded in `units`.
//! Missing samples are represented as NaN until [`exclude_bad_channels`]
//! either repairs or drops them.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest frequency that must be analyzable in a window, in Hz.
pub const DEFAULT_F_MIN_HZ: f64 = 0.2;
/// Minimum number of cycles of `f_min` a window must span.
pub const MIN_WINDOW_CYCLES: f64 = 10.0;
/// Longest run of missing samples that is repaired by interpolation.
pub const MAX_REPAIRABLE_GAP: usize = 5;
/// Runs of identical consecutive samples at least this long (seconds) count as flat-line.
pub const FLAT_LINE_MIN_RUN_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    Voltage,
    Current,
}

impl Quantity {
    pub fn magnitude_suffix(self) -> &'static str {
        match self {
            Quantity::Voltage => "Vm",
            Quantity::Current => "Im",
        }
    }

    pub fn angle_suffix(self) -> &'static str {
        match self {
            Quantity::Voltage => "Va",
            Quantity::Current => "Ia",
        }
    }
}

/// One location's voltage or current phasor time series on a uniform time base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasorChannel {
    pub location_id: u32,
    pub quantity: Quantity,
    pub magnitude: Vec<f64>,
    /// Radians.
    pub angle: Vec<f64>,
    pub sample_rate: f64,
    pub t0: f64,
    pub units: String,
}

impl PhasorChannel {
    pub fn len(&self) -> usize {
        self.magnitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitude.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.sample_rate
    }

    pub fn name(&self) -> String {
        format!("loc{}_{}", self.location_id, self.quantity.magnitude_suffix())
    }

    /// Checks the channel invariants: equal lengths of at least two samples,
    /// positive sample rate, finite non-negative magnitudes and finite angles.
    pub fn validate(&self) -> Result<()> {
        let name = self.name();
        if self.magnitude.len() != self.angle.len() {
            return Err(Error::Data(format!(
                "{name}: magnitude has {} samples but angle has {}",
                self.magnitude.len(),
                self.angle.len()
            )));
        }
        if self.magnitude.len() < 2 {
            return Err(Error::Data(format!("{name}: fewer than 2 samples")));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Data(format!(
                "{name}: sample rate {} is not positive",
                self.sample_rate
            )));
        }
        if let Some(k) = self
            .magnitude
            .iter()
            .position(|m| !m.is_finite() || *m < 0.0)
        {
            return Err(Error::DataAtRow {
                row: k,
                reason: format!("{name}: magnitude {} is not finite and >= 0", self.magnitude[k]),
            });
        }
        if let Some(k) = self.angle.iter().position(|a| !a.is_finite()) {
            return Err(Error::DataAtRow {
                row: k,
                reason: format!("{name}: angle is not finite"),
            });
        }
        Ok(())
    }

    fn slice(&self, start: usize, end: usize, t0: f64) -> PhasorChannel {
        PhasorChannel {
            magnitude: self.magnitude[start..end].to_vec(),
            angle: self.angle[start..end].to_vec(),
            t0,
            ..self.clone()
        }
    }
}

/// Voltage and current phasors measured at one location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub id: u32,
    pub voltage: PhasorChannel,
    pub current: PhasorChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub location_id: u32,
    pub reason: String,
}

/// Time-aligned phasor recordings from several locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDataset {
    pub locations: Vec<Location>,
    /// (t_start, t_end) in seconds, end exclusive.
    pub window: (f64, f64),
    pub sample_rate: f64,
    pub units: String,
    pub excluded_locations: Vec<Exclusion>,
    /// Number of samples repaired by interpolation, per location.
    pub interpolated: BTreeMap<u32, usize>,
}

impl EventDataset {
    /// Assembles a dataset from locations sharing one time base.
    pub fn new(locations: Vec<Location>, sample_rate: f64, t0: f64, units: impl Into<String>) -> Result<Self> {
        let n = locations.first().map(|l| l.voltage.len()).unwrap_or(0);
        for loc in &locations {
            for ch in [&loc.voltage, &loc.current] {
                if ch.len() != n || ch.angle.len() != n {
                    return Err(Error::Data(format!(
                        "{}: length {} differs from dataset length {n}",
                        ch.name(),
                        ch.len()
                    )));
                }
                if (ch.sample_rate - sample_rate).abs() > 1e-9 * sample_rate {
                    return Err(Error::Data(format!("{}: sample rate differs", ch.name())));
                }
            }
            if loc.voltage.quantity != Quantity::Voltage || loc.current.quantity != Quantity::Current {
                return Err(Error::Type(format!("location {}: channel quantities swapped", loc.id)));
            }
        }
        Ok(EventDataset {
            locations,
            window: (t0, t0 + n as f64 / sample_rate),
            sample_rate,
            units: units.into(),
            excluded_locations: Vec::new(),
            interpolated: BTreeMap::new(),
        })
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.locations.first().map(|l| l.voltage.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn t0(&self) -> f64 {
        self.window.0
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| self.t0() + k as f64 / self.sample_rate)
            .collect()
    }

    pub fn location_ids(&self) -> Vec<u32> {
        self.locations.iter().map(|l| l.id).collect()
    }

    pub fn location(&self, id: u32) -> Option<&Location> {
        self.locations.iter().find(|l| l.id == id)
    }

    pub fn channels(&self) -> impl Iterator<Item = &PhasorChannel> {
        self.locations
            .iter()
            .flat_map(|l| [&l.voltage, &l.current])
    }

    pub fn validate(&self) -> Result<()> {
        if self.locations.is_empty() {
            return Err(Error::Data("dataset has no locations".into()));
        }
        for ch in self.channels() {
            ch.validate()?;
        }
        Ok(())
    }

    /// Applies `f` to every magnitude and angle series, keeping metadata.
    pub fn map_series<F>(&self, f: F) -> Result<EventDataset>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    {
        use rayon::prelude::*;
        let locations = self
            .locations
            .par_iter()
            .map(|loc| {
                let map_ch = |ch: &PhasorChannel| -> Result<PhasorChannel> {
                    Ok(PhasorChannel {
                        magnitude: f(&ch.magnitude)?,
                        angle: f(&ch.angle)?,
                        ..ch.clone()
                    })
                };
                Ok(Location {
                    id: loc.id,
                    voltage: map_ch(&loc.voltage)?,
                    current: map_ch(&loc.current)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EventDataset {
            locations,
            ..self.clone()
        })
    }

    /// The same recording played backwards on the same time base.
    pub fn time_reversed(&self) -> EventDataset {
        let rev = |v: &[f64]| v.iter().rev().copied().collect::<Vec<_>>();
        let locations = self
            .locations
            .iter()
            .map(|loc| {
                let flip = |ch: &PhasorChannel| PhasorChannel {
                    magnitude: rev(&ch.magnitude),
                    angle: rev(&ch.angle),
                    ..ch.clone()
                };
                Location {
                    id: loc.id,
                    voltage: flip(&loc.voltage),
                    current: flip(&loc.current),
                }
            })
            .collect();
        EventDataset {
            locations,
            ..self.clone()
        }
    }
}

/// Removes ±2π jumps between consecutive samples. Every output sample
/// differs from its input by an integer multiple of 2π. NaNs pass through.
pub fn unwrap_angle(angle: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angle.len());
    let mut offset = 0.0;
    let mut prev: Option<f64> = None;
    for &a in angle {
        if !a.is_finite() {
            out.push(a);
            continue;
        }
        if let Some(p) = prev {
            let d = a - p;
            if d.abs() > PI {
                offset -= (2.0 * PI) * (d / (2.0 * PI)).round();
            }
        }
        prev = Some(a);
        out.push(a + offset);
    }
    out
}

fn sample_index(t: f64, t0: f64, sample_rate: f64) -> i64 {
    // ceil with a tolerance so that exact sample times are not pushed forward
    ((t - t0) * sample_rate - 1e-6).ceil() as i64
}

/// Truncates every channel to `[t_start, t_end)` and unwraps angles, using
/// the default lowest analyzable frequency.
pub fn align_and_window(ds: &EventDataset, t_start: f64, t_end: f64) -> Result<EventDataset> {
    align_and_window_with(ds, t_start, t_end, DEFAULT_F_MIN_HZ)
}

/// As [`align_and_window`], requiring the window to span at least
/// [`MIN_WINDOW_CYCLES`] cycles of `f_min`.
pub fn align_and_window_with(
    ds: &EventDataset,
    t_start: f64,
    t_end: f64,
    f_min: f64,
) -> Result<EventDataset> {
    let n = ds.len() as i64;
    let span_end = ds.t0() + n as f64 / ds.sample_rate;
    if !(t_start < t_end) {
        return Err(Error::Range(format!("window start {t_start} is not before end {t_end}")));
    }
    let k0 = sample_index(t_start, ds.t0(), ds.sample_rate);
    let k1 = sample_index(t_end, ds.t0(), ds.sample_rate);
    if k0 < 0 || k1 > n {
        return Err(Error::Range(format!(
            "window [{t_start}, {t_end}) outside recorded span [{}, {span_end})",
            ds.t0()
        )));
    }
    let min_len = MIN_WINDOW_CYCLES / f_min;
    if t_end - t_start < min_len * (1.0 - 1e-9) {
        return Err(Error::Validation(format!(
            "window of {:.3} s is shorter than {MIN_WINDOW_CYCLES} cycles of f_min = {f_min} Hz ({min_len:.3} s)",
            t_end - t_start
        )));
    }
    let (k0, k1) = (k0 as usize, k1 as usize);
    if k1 - k0 < 2 {
        return Err(Error::Length("window holds fewer than 2 samples".into()));
    }
    let t0 = ds.t0() + k0 as f64 / ds.sample_rate;
    let cut = |ch: &PhasorChannel| {
        let mut c = ch.slice(k0, k1, t0);
        c.angle = unwrap_angle(&c.angle);
        c
    };
    let locations = ds
        .locations
        .iter()
        .map(|loc| Location {
            id: loc.id,
            voltage: cut(&loc.voltage),
            current: cut(&loc.current),
        })
        .collect();
    Ok(EventDataset {
        locations,
        window: (t0, t0 + (k1 - k0) as f64 / ds.sample_rate),
        ..ds.clone()
    })
}

/// Count of samples that are NaN or part of a flat-line run.
fn bad_sample_count(x: &[f64], flat_run: usize) -> usize {
    let nan = x.iter().filter(|v| !v.is_finite()).count();
    let mut flat = 0;
    let mut run = 1;
    for k in 1..=x.len() {
        if k < x.len() && x[k].is_finite() && x[k] == x[k - 1] {
            run += 1;
        } else {
            if run >= flat_run {
                flat += run;
            }
            run = 1;
        }
    }
    nan + flat
}

fn longest_gap(x: &[f64]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for v in x {
        if v.is_finite() {
            run = 0;
        } else {
            run += 1;
            best = best.max(run);
        }
    }
    best
}

/// Linear interpolation over interior NaN runs; edge runs take the nearest
/// valid value. Returns the number of samples filled.
fn fill_gaps(x: &mut [f64]) -> usize {
    let n = x.len();
    let mut filled = 0;
    let mut k = 0;
    while k < n {
        if x[k].is_finite() {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && !x[k].is_finite() {
            k += 1;
        }
        let end = k;
        filled += end - start;
        match (start.checked_sub(1), (end < n).then_some(end)) {
            (Some(a), Some(b)) => {
                let (ya, yb) = (x[a], x[b]);
                for j in start..end {
                    let w = (j - a) as f64 / (b - a) as f64;
                    x[j] = ya + w * (yb - ya);
                }
            }
            (Some(a), None) => { let v = x[a]; x[start..end].fill(v) },
            (None, Some(b)) => { let v = x[b]; x[start..end].fill(v) },
            (None, None) => {}
        }
    }
    filled
}

/// Drops locations whose missing or flat-lined fraction exceeds
/// `max_gap_fraction` (or which contain a gap longer than
/// [`MAX_REPAIRABLE_GAP`] samples) and interpolates the remaining short gaps.
pub fn exclude_bad_channels(ds: &EventDataset, max_gap_fraction: f64) -> Result<EventDataset> {
    if !(0.0..=1.0).contains(&max_gap_fraction) {
        return Err(Error::Validation(format!(
            "max_gap_fraction {max_gap_fraction} not in [0, 1]"
        )));
    }
    let n = ds.len();
    let flat_run = ((FLAT_LINE_MIN_RUN_S * ds.sample_rate).round() as usize).max(2);
    let mut out = ds.clone();
    out.locations.clear();
    for loc in &ds.locations {
        let series = [
            &loc.voltage.magnitude,
            &loc.voltage.angle,
            &loc.current.magnitude,
            &loc.current.angle,
        ];
        let worst_fraction = series
            .iter()
            .map(|s| bad_sample_count(s, flat_run) as f64 / n.max(1) as f64)
            .fold(0.0, f64::max);
        let worst_gap = series.iter().map(|s| longest_gap(s)).max().unwrap_or(0);
        if worst_fraction > max_gap_fraction {
            out.excluded_locations.push(Exclusion {
                location_id: loc.id,
                reason: format!(
                    "{:.1}% missing or flat-line samples exceeds {:.1}%",
                    100.0 * worst_fraction,
                    100.0 * max_gap_fraction
                ),
            });
            continue;
        }
        if worst_gap > MAX_REPAIRABLE_GAP {
            out.excluded_locations.push(Exclusion {
                location_id: loc.id,
                reason: format!(
                    "gap of {worst_gap} consecutive samples exceeds {MAX_REPAIRABLE_GAP}"
                ),
            });
            continue;
        }
        let mut repaired = loc.clone();
        let mut count = 0;
        for ch in [&mut repaired.voltage, &mut repaired.current] {
            count = count.max(fill_gaps(&mut ch.magnitude));
            count = count.max(fill_gaps(&mut ch.angle));
        }
        if count > 0 {
            *out.interpolated.entry(loc.id).or_insert(0) += count;
        }
        out.locations.push(repaired);
    }
    if out.locations.is_empty() {
        return Err(Error::Data("all locations excluded for bad data quality".into()));
    }
    Ok(out)
}
