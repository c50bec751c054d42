//! Synthetic multi-location phasor events with a planted oscillation
//! source.
//!
//! The source carries `x(t) = A·e^(−ζωt)·sin(ωt)` (constant amplitude when
//! forced) in its active and reactive power. Every other location receives
//! a copy attenuated by the strongest propagation path through the coupling
//! matrix and lagged in proportion to that path's hop count, plus
//! independent ambient noise. Powers are realized as phasors by placing the
//! voltage near 1 pu, moving its magnitude with reactive power and its
//! angle with active power, and solving the current phasor that reproduces
//! P and Q exactly.
//!
//! Energy polarity: at the source the voltage angle lags active power, so
//! the location exports oscillating energy; elsewhere it leads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{EventDataset, Location, PhasorChannel, Quantity};
use crate::error::{Error, Result};

/// Noise reference amplitude used when the planted amplitude is zero.
pub const DEFAULT_AMPLITUDE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthScenario {
    pub n_locations: usize,
    /// 1-based location id of the planted source.
    pub source_location: u32,
    pub mode_freq_hz: f64,
    /// ζ; zero or negative values give sustained or growing oscillations.
    pub mode_damping: f64,
    /// Constant-amplitude drive regardless of `mode_damping`.
    pub forced: bool,
    /// Row-stochastic propagation weights; `coupling[i][j]` carries from
    /// location i+1 to location j+1. Defaults to a chain with weight 1/2
    /// to each neighbour.
    pub coupling: Option<Vec<Vec<f64>>>,
    /// Ambient noise level relative to the planted oscillation.
    pub noise_snr_db: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
    /// Peak active-power oscillation at the source, pu.
    pub amplitude: f64,
    /// Amplitude the noise level refers to; defaults to `amplitude`, or
    /// [`DEFAULT_AMPLITUDE`] when that is zero.
    pub noise_reference: Option<f64>,
    /// Phase delay per propagation hop at the mode frequency.
    pub lag_per_hop_deg: f64,
    /// Ratio of reactive to active power oscillation amplitude.
    pub q_ratio: f64,
    /// Phase of the reactive oscillation relative to the active one.
    pub q_phase_deg: f64,
    /// Voltage magnitude change per pu of reactive power.
    pub voltage_sensitivity: f64,
    /// Voltage angle change (rad) per pu of active power.
    pub angle_sensitivity: f64,
    /// Lag of the voltage angle behind active power at the source.
    pub energy_phase_deg: f64,
    pub base_p: f64,
    pub base_q: f64,
    pub t0: f64,
}

impl Default for SynthScenario {
    fn default() -> Self {
        SynthScenario {
            n_locations: 5,
            source_location: 1,
            mode_freq_hz: 0.158,
            mode_damping: 0.01,
            forced: false,
            coupling: None,
            noise_snr_db: 30.0,
            duration_s: 120.0,
            sample_rate_hz: 50.0,
            seed: 42,
            amplitude: DEFAULT_AMPLITUDE,
            noise_reference: None,
            lag_per_hop_deg: 20.0,
            q_ratio: 0.5,
            q_phase_deg: 30.0,
            voltage_sensitivity: 0.1,
            angle_sensitivity: 0.2,
            energy_phase_deg: 60.0,
            base_p: 0.6,
            base_q: 0.1,
            t0: 0.0,
        }
    }
}

/// What was planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub source_location: u32,
    pub mode_freq_hz: f64,
    pub mode_damping: f64,
    /// Per location id: path attenuation (1 at the source).
    pub attenuation: Vec<(u32, f64)>,
    /// Per location id: hops from the source (`None` if unreachable).
    pub hops: Vec<(u32, Option<usize>)>,
}

fn chain_coupling(n: usize) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; n]; n];
    if n == 1 {
        c[0][0] = 1.0;
        return c;
    }
    for i in 0..n {
        let neighbours: Vec<usize> = [i.checked_sub(1), (i + 1 < n).then_some(i + 1)]
            .into_iter()
            .flatten()
            .collect();
        for &j in &neighbours {
            c[i][j] = 0.5;
        }
        if neighbours.len() == 1 {
            c[i][i] = 0.5;
        }
    }
    c
}

impl SynthScenario {
    pub fn coupling_matrix(&self) -> Vec<Vec<f64>> {
        self.coupling
            .clone()
            .unwrap_or_else(|| chain_coupling(self.n_locations))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        let n = self.n_locations;
        if n == 0 {
            return bad("n_locations must be at least 1".into());
        }
        if self.source_location < 1 || self.source_location as usize > n {
            return bad(format!("source_location {} not in [1, {n}]", self.source_location));
        }
        if !(self.sample_rate_hz > 0.0) {
            return bad("sample_rate_hz must be positive".into());
        }
        if !(self.mode_freq_hz > 0.0 && self.mode_freq_hz < self.sample_rate_hz / 2.0) {
            return bad(format!(
                "mode_freq_hz {} must lie in (0, {})",
                self.mode_freq_hz,
                self.sample_rate_hz / 2.0
            ));
        }
        if !(self.duration_s * self.mode_freq_hz >= 10.0 - 1e-9) {
            return bad(format!(
                "duration {} s holds fewer than 10 cycles of {} Hz",
                self.duration_s, self.mode_freq_hz
            ));
        }
        if !(self.amplitude >= 0.0) || !self.noise_snr_db.is_finite() || !self.mode_damping.is_finite() {
            return bad("amplitude must be non-negative; noise and damping finite".into());
        }
        let c = self.coupling_matrix();
        if c.len() != n || c.iter().any(|r| r.len() != n) {
            return bad(format!("coupling must be {n} x {n}"));
        }
        for (i, row) in c.iter().enumerate() {
            if row.iter().any(|w| !(*w >= 0.0)) {
                return bad(format!("coupling row {} has negative or non-finite weights", i + 1));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return bad(format!("coupling row {} sums to {s}, not 1", i + 1));
            }
        }
        Ok(())
    }

    /// Strongest-path attenuation and hop count from the source.
    fn propagation(&self) -> Vec<(f64, Option<usize>)> {
        let c = self.coupling_matrix();
        let n = self.n_locations;
        let src = self.source_location as usize - 1;
        let mut best = vec![(0.0f64, None::<usize>); n];
        best[src] = (1.0, Some(0));
        let mut done = vec![false; n];
        for _ in 0..n {
            let next = (0..n)
                .filter(|&i| !done[i] && best[i].1.is_some())
                .max_by(|&a, &b| {
                    best[a]
                        .0
                        .total_cmp(&best[b].0)
                        .then(best[b].1.cmp(&best[a].1))
                });
            let Some(u) = next else { break };
            done[u] = true;
            let (g, h) = (best[u].0, best[u].1.expect("reached"));
            for v in 0..n {
                if v == u || done[v] || c[u][v] <= 0.0 {
                    continue;
                }
                let cand = g * c[u][v];
                let better = cand > best[v].0
                    || (cand == best[v].0 && best[v].1.is_some_and(|hv| h + 1 < hv));
                if better {
                    best[v] = (cand, Some(h + 1));
                }
            }
        }
        best
    }
}

/// Builds the voltage and current phasors of one location from its voltage
/// phasor and its power: `I = |P + jQ| / V`, `θI = θV − atan2(Q, P)`.
pub fn realize_location(
    id: u32,
    v: &[f64],
    theta_v: &[f64],
    p: &[f64],
    q: &[f64],
    sample_rate: f64,
    t0: f64,
) -> Result<Location> {
    let n = v.len();
    if theta_v.len() != n || p.len() != n || q.len() != n {
        return Err(Error::Data(format!("location {id}: series lengths differ")));
    }
    if let Some(k) = v.iter().position(|x| !(*x > 0.0)) {
        return Err(Error::Scenario(format!(
            "location {id}: voltage magnitude {} at sample {k} is not positive; reduce the amplitude",
            v[k]
        )));
    }
    let i_mag: Vec<f64> = (0..n).map(|k| p[k].hypot(q[k]) / v[k]).collect();
    let i_ang: Vec<f64> = (0..n).map(|k| theta_v[k] - q[k].atan2(p[k])).collect();
    let ch = |quantity, magnitude, angle| PhasorChannel {
        location_id: id,
        quantity,
        magnitude,
        angle,
        sample_rate,
        t0,
        units: "pu".into(),
    };
    Ok(Location {
        id,
        voltage: ch(Quantity::Voltage, v.to_vec(), theta_v.to_vec()),
        current: ch(Quantity::Current, i_mag, i_ang),
    })
}

/// Generates the event and its ground truth. Deterministic for a fixed
/// seed; each location draws from its own stream of the seeded generator.
pub fn generate_event(s: &SynthScenario) -> Result<(EventDataset, GroundTruth)> {
    s.validate()?;
    let fs = s.sample_rate_hz;
    let n = (s.duration_s * fs).round() as usize;
    let w = 2.0 * PI * s.mode_freq_hz;
    let decay = if s.forced { 0.0 } else { s.mode_damping * w };
    let reference = s
        .noise_reference
        .unwrap_or(if s.amplitude > 0.0 { s.amplitude } else { DEFAULT_AMPLITUDE });
    let sigma = reference / 2f64.sqrt() * 10f64.powf(-s.noise_snr_db / 20.0);
    let prop = s.propagation();
    let lag_hop = s.lag_per_hop_deg.to_radians();
    let q_phase = s.q_phase_deg.to_radians();
    let e_phase = s.energy_phase_deg.to_radians();

    let locations = (0..s.n_locations)
        .into_par_iter()
        .map(|idx| {
            let id = idx as u32 + 1;
            let is_source = id == s.source_location;
            let (atten, hops) = prop[idx];
            let phi = hops.unwrap_or(0) as f64 * lag_hop;
            let amp = s.amplitude * atten;
            let osc = |t: f64, ph: f64| amp * (-decay * t).exp() * (w * t - ph).sin();
            let (v_sign, th_shift) = if is_source { (1.0, e_phase) } else { (-1.0, -e_phase) };
            let v0 = 1.0 + 0.005 * ((idx % 5) as f64 - 2.0);
            let th0 = -0.05 * hops.unwrap_or(s.n_locations) as f64;

            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            rng.set_stream(id as u64);
            let mut gauss = || -> f64 { rng.sample::<f64, _>(StandardNormal) * sigma };

            let (mut v, mut th, mut p, mut q) =
                (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
            for k in 0..n {
                let t = k as f64 / fs;
                let dp = osc(t, phi);
                let dq = s.q_ratio * osc(t, phi + q_phase);
                let (np, nq, nv, nt) = (gauss(), gauss(), gauss(), gauss());
                p.push(s.base_p + dp + np);
                q.push(s.base_q + dq + nq);
                v.push(v0 + v_sign * s.voltage_sensitivity * dq + s.voltage_sensitivity * nv);
                th.push(th0 + s.angle_sensitivity * osc(t, phi + th_shift) + s.angle_sensitivity * nt);
            }
            realize_location(id, &v, &th, &p, &q, fs, s.t0)
        })
        .collect::<Result<Vec<_>>>()?;
    let ds = EventDataset::new(locations, fs, s.t0, "pu")?;
    let truth = GroundTruth {
        source_location: s.source_location,
        mode_freq_hz: s.mode_freq_hz,
        mode_damping: if s.forced { 0.0 } else { s.mode_damping },
        attenuation: prop
            .iter()
            .enumerate()
            .map(|(i, (a, _))| (i as u32 + 1, *a))
            .collect(),
        hops: prop
            .iter()
            .enumerate()
            .map(|(i, (_, h))| (i as u32 + 1, *h))
            .collect(),
    };
    Ok((ds, truth))
}

/// Noise-free three-bus lossless chain: bus 1 drives an active-power
/// oscillation that bus 2 passes through and the damping load at bus 3
/// absorbs. All buses share one voltage angle swing lagging the source
/// power, so the energy bus 1 exports equals what bus 3 absorbs.
pub fn lossless_chain_event(f_hz: f64, sample_rate: f64, duration_s: f64) -> (EventDataset, GroundTruth) {
    let n = (duration_s * sample_rate).round() as usize;
    let w = 2.0 * PI * f_hz;
    let (a, b, delta) = (0.05, 0.02, 60f64.to_radians());
    let t: Vec<f64> = (0..n).map(|k| k as f64 / sample_rate).collect();
    let theta: Vec<f64> = t.iter().map(|t| -0.1 + b * (w * t - delta).sin()).collect();
    let v = vec![1.0; n];
    let q = vec![0.05; n];
    let p1: Vec<f64> = t.iter().map(|t| 0.8 + a * (w * t).sin()).collect();
    let p2 = vec![0.3; n];
    let p3: Vec<f64> = t.iter().map(|t| -0.8 - a * (w * t).sin()).collect();
    let locations = [p1, p2, p3]
        .iter()
        .enumerate()
        .map(|(i, p)| realize_location(i as u32 + 1, &v, &theta, p, &q, sample_rate, 0.0).expect("positive voltage"))
        .collect();
    let ds = EventDataset::new(locations, sample_rate, 0.0, "pu").expect("consistent lengths");
    let truth = GroundTruth {
        source_location: 1,
        mode_freq_hz: f_hz,
        mode_damping: 0.0,
        attenuation: vec![(1, 1.0), (2, 0.0), (3, 1.0)],
        hops: vec![(1, Some(0)), (2, Some(1)), (3, Some(2))],
    };
    (ds, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::def_energy;
    use crate::lifting::compute_pq;
    use crate::signal::{
        apply_zero_phase, design_butterworth, detect_dominant_frequency, FilterKind, DEFAULT_BAND,
    };

    fn scenario() -> SynthScenario {
        SynthScenario {
            source_location: 3,
            ..SynthScenario::default()
        }
    }

    #[test]
    fn planted_peak_is_detected() {
        let (ds, truth) = generate_event(&scenario()).unwrap();
        assert_eq!(truth.source_location, 3);
        let peak = detect_dominant_frequency(&ds, DEFAULT_BAND).unwrap();
        assert!((peak.f_s - 0.158).abs() <= peak.resolution, "{peak:?}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (a, _) = generate_event(&scenario()).unwrap();
        let (b, _) = generate_event(&scenario()).unwrap();
        assert_eq!(a, b);
        let (c, _) = generate_event(&SynthScenario { seed: 43, ..scenario() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_amplitude_has_no_dominant_mode() {
        let s = SynthScenario {
            amplitude: 0.0,
            ..scenario()
        };
        let (ds, _) = generate_event(&s).unwrap();
        assert!(matches!(
            detect_dominant_frequency(&ds, DEFAULT_BAND),
            Err(Error::NoDominantMode(_))
        ));
    }

    #[test]
    fn realization_reproduces_power() {
        let (ds, _) = generate_event(&scenario()).unwrap();
        let loc = &ds.locations[2];
        let (p, q) = compute_pq(&loc.voltage, &loc.current).unwrap();
        let mean_p = p.iter().sum::<f64>() / p.len() as f64;
        let mean_q = q.iter().sum::<f64>() / q.len() as f64;
        assert!((mean_p - 0.6).abs() < 0.01 && (mean_q - 0.1).abs() < 0.01);
    }

    #[test]
    fn source_has_largest_band_amplitude() {
        let (ds, truth) = generate_event(&scenario()).unwrap();
        let band = design_butterworth(FilterKind::BandPass, 4, &[0.142, 0.174], 50.0).unwrap();
        let amp: Vec<(u32, f64)> = ds
            .locations
            .iter()
            .map(|l| {
                let (p, _) = compute_pq(&l.voltage, &l.current).unwrap();
                let f = apply_zero_phase(&band, &p).unwrap();
                (l.id, f.iter().map(|x| x * x).sum::<f64>())
            })
            .collect();
        let top = amp.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        assert_eq!(top, truth.source_location);
    }

    #[test]
    fn source_exports_energy() {
        let (ds, truth) = generate_event(&scenario()).unwrap();
        let band = design_butterworth(FilterKind::BandPass, 4, &[0.142, 0.174], 50.0).unwrap();
        let r = def_energy(&ds, &band, (0.2, 0.8)).unwrap();
        assert!(r.get(truth.source_location).unwrap().energy_rate > 0.0);
        assert_eq!(r.ranking_injecting, vec![truth.source_location]);
    }

    #[test]
    fn propagation_follows_chain() {
        let (_, truth) = generate_event(&scenario()).unwrap();
        let att: Vec<f64> = truth.attenuation.iter().map(|a| a.1).collect();
        assert_eq!(att, vec![0.25, 0.5, 1.0, 0.5, 0.25]);
        assert_eq!(truth.hops[0].1, Some(2));
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let cases = [
            SynthScenario { source_location: 9, ..scenario() },
            SynthScenario { mode_freq_hz: 30.0, ..scenario() },
            SynthScenario { duration_s: 10.0, ..scenario() },
            SynthScenario { coupling: Some(vec![vec![1.0; 5]; 5]), ..scenario() },
        ];
        for s in cases {
            assert!(matches!(generate_event(&s), Err(Error::Scenario(_))));
        }
        let s = SynthScenario { amplitude: 50.0, voltage_sensitivity: 1.0, ..scenario() };
        assert!(matches!(generate_event(&s), Err(Error::Scenario(_))));
    }

    #[test]
    fn scenario_json_defaults() {
        let s: SynthScenario = serde_json::from_str(r#"{"n_locations": 7, "seed": 1}"#).unwrap();
        assert_eq!(s.n_locations, 7);
        assert_eq!(s.mode_freq_hz, 0.158);
        assert!(serde_json::from_str::<SynthScenario>(r#"{"bogus": 1}"#).is_err());
    }
}
