//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::f64::consts::PI;

use faer::Mat;
use oscl_core::dataset::EventDataset;
use oscl_core::lifting::SnapshotMatrices;
use oscl_core::synth::{realize_location, SynthScenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// Independent Gaussian states `X` and their images `Y = A·X`.
pub fn linear_pairs(a: &[Vec<f64>], m: usize, r: &mut ChaCha8Rng) -> SnapshotMatrices {
    let n = a.len();
    let x = Mat::from_fn(n, m, |_, _| gauss(r));
    let y = Mat::from_fn(n, m, |i, j| (0..n).map(|k| a[i][k] * x[(k, j)]).sum());
    let names = (0..n).map(|i| format!("x{i}")).collect();
    SnapshotMatrices::from_pairs(x, y, 0.02, names).unwrap()
}

/// Random real matrix rescaled to spectral radius `radius`.
pub fn random_stable(n: usize, radius: f64, r: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let a = nalgebra::DMatrix::from_fn(n, n, |_, _| gauss(r));
    let rho = a
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0, f64::max);
    (0..n).map(|i| (0..n).map(|j| a[(i, j)] * radius / rho).collect()).collect()
}

/// Row-stochastic coupling: a self weight, a ring neighbour (so every
/// location is reachable) and up to two random extra links.
pub fn random_coupling(n: usize, r: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        c[i][i] = r.random_range(0.2..0.5);
        c[i][(i + 1) % n] += r.random_range(0.3..1.0);
        c[i][(i + n - 1) % n] += r.random_range(0.3..1.0);
        for _ in 0..r.random_range(0..3usize) {
            let j = r.random_range(0..n);
            if j != i {
                c[i][j] += r.random_range(0.1..0.5);
            }
        }
        let s: f64 = c[i].iter().sum();
        c[i].iter_mut().for_each(|w| *w /= s);
    }
    c
}

/// A randomized scenario in the blind-localization envelope.
pub fn random_scenario(seed: u64) -> SynthScenario {
    let mut r = rng(seed ^ 0x5eed);
    let n = r.random_range(5..=19usize);
    let f = r.random_range(0.1..0.5);
    SynthScenario {
        n_locations: n,
        source_location: r.random_range(1..=n as u32),
        mode_freq_hz: f,
        mode_damping: r.random_range(0.005..0.05),
        noise_snr_db: r.random_range(20.0..40.0),
        duration_s: (15.0 / f).max(60.0).ceil(),
        coupling: Some(random_coupling(n, &mut r)),
        seed,
        ..SynthScenario::default()
    }
}

/// One location whose reactive power and voltage magnitude follow the
/// given oscillations around a fixed operating point.
pub fn qv_pair_dataset(q: impl Fn(f64) -> f64, v: impl Fn(f64) -> f64, n: usize, fs: f64) -> EventDataset {
    let t: Vec<f64> = (0..n).map(|k| k as f64 / fs).collect();
    let vm: Vec<f64> = t.iter().map(|t| 1.0 + 0.01 * v(*t)).collect();
    let qq: Vec<f64> = t.iter().map(|t| 0.2 + 0.05 * q(*t)).collect();
    let loc = realize_location(1, &vm, &vec![0.0; n], &vec![0.8; n], &qq, fs, 0.0).unwrap();
    EventDataset::new(vec![loc], fs, 0.0, "pu").unwrap()
}

pub fn tone(f: f64, n: usize, fs: f64, phase: f64) -> Vec<f64> {
    (0..n).map(|k| (2.0 * PI * f * k as f64 / fs + phase).sin()).collect()
}
