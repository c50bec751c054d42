//! Dissipating energy flow.
//!
//! Per location, with band-passed deviations of active and reactive power,
//! unwrapped voltage angle and log voltage magnitude,
//! `W = ∫ ΔP dΔθ + ΔQ dΔln V` is accumulated with trapezoidal increments
//! and its trend is taken from a least-squares line over the cropped
//! window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{unwrap_angle, EventDataset, Location};
use crate::error::{Error, Result};
use crate::lifting::compute_pq;
use crate::signal::{apply_zero_phase, crop_range, FilterSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefLocation {
    pub location_id: u32,
    /// Slope of the energy trend, energy units per second.
    pub energy_rate: f64,
    /// Energy accumulated over the cropped window.
    pub total_energy: f64,
    /// Goodness of the linear trend fit; 0 when W is constant.
    pub trend_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefResult {
    pub per_location: Vec<DefLocation>,
    /// Locations with positive rate, largest first.
    pub ranking_injecting: Vec<u32>,
    /// Locations with negative rate, most negative first.
    pub ranking_absorbing: Vec<u32>,
}

impl DefResult {
    pub fn get(&self, location_id: u32) -> Option<&DefLocation> {
        self.per_location.iter().find(|l| l.location_id == location_id)
    }
}

/// Energy trajectory of one location over the cropped window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefSeries {
    pub location_id: u32,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
}

fn location_series(ds: &EventDataset, loc: &Location, band: &FilterSpec, crop: (f64, f64)) -> Result<DefSeries> {
    let v = &loc.voltage.magnitude;
    if let Some(k) = v.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::Data(format!(
            "location {}: voltage magnitude {} at sample {k} is not positive",
            loc.id, v[k]
        )));
    }
    let (p, q) = compute_pq(&loc.voltage, &loc.current)?;
    let theta = unwrap_angle(&loc.voltage.angle);
    let ln_v: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let dp = apply_zero_phase(band, &p)?;
    let dq = apply_zero_phase(band, &q)?;
    let dth = apply_zero_phase(band, &theta)?;
    let dlv = apply_zero_phase(band, &ln_v)?;

    let r = crop_range(ds.len(), crop)?;
    let times: Vec<f64> = r
        .clone()
        .map(|k| ds.t0() + k as f64 / ds.sample_rate)
        .collect();
    let mut energy = Vec::with_capacity(r.len());
    let mut w = 0.0;
    energy.push(w);
    for k in r.start..r.end - 1 {
        w += 0.5 * (dp[k] + dp[k + 1]) * (dth[k + 1] - dth[k])
            + 0.5 * (dq[k] + dq[k + 1]) * (dlv[k + 1] - dlv[k]);
        energy.push(w);
    }
    Ok(DefSeries {
        location_id: loc.id,
        times,
        energy,
    })
}

/// Energy trajectories for every location.
pub fn def_energy_series(ds: &EventDataset, band: &FilterSpec, crop: (f64, f64)) -> Result<Vec<DefSeries>> {
    if ds.locations.is_empty() {
        return Err(Error::Data("dataset has no locations".into()));
    }
    ds.locations
        .par_iter()
        .map(|loc| location_series(ds, loc, band, crop))
        .collect()
}

/// Least-squares slope and coefficient of determination.
fn linear_trend(t: &[f64], w: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let wm = w.iter().sum::<f64>() / n;
    let (mut stt, mut stw, mut sww) = (0.0, 0.0, 0.0);
    for (a, b) in t.iter().zip(w) {
        stt += (a - tm) * (a - tm);
        stw += (a - tm) * (b - wm);
        sww += (b - wm) * (b - wm);
    }
    let slope = if stt > 0.0 { stw / stt } else { 0.0 };
    let r2 = if sww > 0.0 && stt > 0.0 {
        (stw * stw / (stt * sww)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (slope, r2)
}

/// Dissipating energy flow per location with source/sink rankings.
pub fn def_energy(ds: &EventDataset, band: &FilterSpec, crop: (f64, f64)) -> Result<DefResult> {
    let series = def_energy_series(ds, band, crop)?;
    let per_location: Vec<DefLocation> = series
        .iter()
        .map(|s| {
            let (energy_rate, trend_r2) = linear_trend(&s.times, &s.energy);
            DefLocation {
                location_id: s.location_id,
                energy_rate,
                total_energy: *s.energy.last().expect("non-empty"),
                trend_r2,
            }
        })
        .collect();
    let mut inj: Vec<&DefLocation> = per_location.iter().filter(|l| l.energy_rate > 0.0).collect();
    inj.sort_by(|a, b| b.energy_rate.total_cmp(&a.energy_rate));
    let mut abs: Vec<&DefLocation> = per_location.iter().filter(|l| l.energy_rate < 0.0).collect();
    abs.sort_by(|a, b| a.energy_rate.total_cmp(&b.energy_rate));
    Ok(DefResult {
        ranking_injecting: inj.iter().map(|l| l.location_id).collect(),
        ranking_absorbing: abs.iter().map(|l| l.location_id).collect(),
        per_location,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{design_butterworth, FilterKind};
    use crate::synth::{lossless_chain_event, realize_location};

    fn band(f: f64) -> FilterSpec {
        design_butterworth(FilterKind::BandPass, 4, &[0.9 * f, 1.1 * f], 50.0).unwrap()
    }

    #[test]
    fn linear_trend_of_line() {
        let t: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let w: Vec<f64> = t.iter().map(|x| 3.0 * x - 1.0).collect();
        let (s, r2) = linear_trend(&t, &w);
        assert!((s - 3.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert_eq!(linear_trend(&t, &[2.0; 10]), (0.0, 0.0));
    }

    #[test]
    fn constant_channels_have_zero_rate() {
        let n = 2500;
        let loc = |id| realize_location(id, &vec![1.0; n], &vec![0.2; n], &vec![0.8; n], &vec![0.1; n], 50.0, 0.0).unwrap();
        let ds = EventDataset::new(vec![loc(1), loc(2)], 50.0, 0.0, "pu").unwrap();
        let r = def_energy(&ds, &band(0.2), (0.2, 0.8)).unwrap();
        for l in &r.per_location {
            assert!(l.energy_rate.abs() < 1e-12, "{}", l.energy_rate);
        }
    }

    #[test]
    fn lossless_chain_source_and_sink() {
        let (ds, truth) = lossless_chain_event(0.2, 50.0, 60.0);
        let r = def_energy(&ds, &band(0.2), (0.2, 0.8)).unwrap();
        let src = r.get(truth.source_location).unwrap().energy_rate;
        let sink = r.get(3).unwrap().energy_rate;
        assert!(src > 0.0 && sink < 0.0, "{src} {sink}");
        assert!((src + sink).abs() < 1e-3 * src, "chain is lossless");
        assert_eq!(r.ranking_injecting[0], 1);
        assert_eq!(r.ranking_absorbing[0], 3);
    }

    #[test]
    fn reversal_negates_rates() {
        let (ds, _) = lossless_chain_event(0.2, 50.0, 60.0);
        let f = def_energy(&ds, &band(0.2), (0.2, 0.8)).unwrap();
        let b = def_energy(&ds.time_reversed(), &band(0.2), (0.2, 0.8)).unwrap();
        for (x, y) in f.per_location.iter().zip(&b.per_location) {
            assert!((x.energy_rate + y.energy_rate).abs() < 1e-9);
        }
    }

    #[test]
    fn non_positive_voltage_rejected() {
        let (mut ds, _) = lossless_chain_event(0.2, 50.0, 60.0);
        ds.locations[1].voltage.magnitude[10] = 0.0;
        assert!(matches!(def_energy(&ds, &band(0.2), (0.2, 0.8)), Err(Error::Data(_))));
    }
}
