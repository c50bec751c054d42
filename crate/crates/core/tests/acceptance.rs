//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. The real-event tier runs only when `OSCL_EVENT_CSV`
//! points at a compatible export and is reported as SKIP otherwise.

mod common;

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use faer::Mat;
use nalgebra::{Complex, Matrix4};
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use oscl_core::baselines::{def_energy, qv_phase, QvOptions};
use oscl_core::csvio::load_event;
use oscl_core::edmd::{assemble_gram, choose_rank, reduce_and_decompose, singular_values};
use oscl_core::lifting::SnapshotMatrices;
use oscl_core::pipeline::{run_analysis, AnalysisConfig};
use oscl_core::signal::{apply_zero_phase, design_butterworth, detect_in_signals, FilterKind, DEFAULT_BAND};
use oscl_core::synth::{generate_event, lossless_chain_event};

use common::*;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn nearest(z: Complex64, set: &[Complex64]) -> (usize, f64) {
    set.iter()
        .enumerate()
        .map(|(i, w)| (i, (z - w).norm()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

fn c1_linear_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let mut r = rng(1000 + seed);
        let a = random_stable(4, r_range(&mut r, 0.5, 0.98), &mut r);
        let snap = linear_pairs(&a, 500, &mut r);
        let gram = assemble_gram(&snap).unwrap();
        let model = reduce_and_decompose(&gram, &snap, 4).unwrap();
        let oracle: Vec<Complex64> = nalgebra::DMatrix::from_fn(4, 4, |i, j| a[i][j])
            .complex_eigenvalues()
            .iter()
            .copied()
            .collect();
        for mu in &model.mu {
            worst = worst.max(nearest(*mu, &oracle).1);
        }
        for o in &oracle {
            worst = worst.max(nearest(*o, &model.mu).1);
        }
    }
    let t = start.elapsed();
    check(
        worst < 1e-8 && t < Duration::from_secs(10),
        format!("50 random stable 4x4 systems, max |mu - eig(A)| = {worst:.2e} (tol 1e-8), {:.2} s (limit 10 s)", t.as_secs_f64()),
    )
}

fn r_range(r: &mut rand_chacha::ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    use rand::Rng;
    r.random_range(lo..hi)
}

/// Real 4x4 matrix with prescribed eigenvalues (two conjugate pairs, or
/// one pair and two reals) and random eigenvectors.
fn planted_system(seed: u64) -> (Vec<Vec<f64>>, Vec<Complex64>, Matrix4<Complex<f64>>) {
    let mut r = rng(2000 + seed);
    let mut eig = Vec::new();
    let mut cols: Vec<[Complex64; 4]> = Vec::new();
    let pairs = if seed % 2 == 0 { 2 } else { 1 };
    for _ in 0..pairs {
        let mu = Complex64::from_polar(r_range(&mut r, 0.5, 0.97), r_range(&mut r, 0.05, 2.5));
        let v: [Complex64; 4] = std::array::from_fn(|_| Complex64::new(gauss(&mut r), gauss(&mut r)));
        eig.push(mu);
        cols.push(v);
        eig.push(mu.conj());
        cols.push(v.map(|z| z.conj()));
    }
    while eig.len() < 4 {
        eig.push(Complex64::new(r_range(&mut r, -0.9, 0.9), 0.0));
        cols.push(std::array::from_fn(|_| Complex64::new(gauss(&mut r), 0.0)));
    }
    let v = Matrix4::from_fn(|i, j| cols[j][i]);
    let w = v.try_inverse().expect("random eigenvectors are independent");
    let d = Matrix4::from_diagonal(&nalgebra::Vector4::from_fn(|i, _| eig[i]));
    let a_c = v * d * w;
    let a = (0..4).map(|i| (0..4).map(|j| a_c[(i, j)].re).collect()).collect();
    // classical participation p[s, i] = v[s, i] · w[i, s]
    let p = Matrix4::from_fn(|s, i| v[(s, i)] * w[(i, s)]);
    (a, eig, p)
}

fn c2_participation_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (a, eig, p_true) = planted_system(seed);
        let mut r = rng(3000 + seed);
        let snap = linear_pairs(&a, 200, &mut r);
        let gram = assemble_gram(&snap).unwrap();
        let model = reduce_and_decompose(&gram, &snap, 4).unwrap();
        let p = model.participation_matrix();
        for (i, mu) in model.mu.iter().enumerate() {
            let (j, _) = nearest(*mu, &eig);
            for s in 0..4 {
                worst = worst.max((p[(s, i)] - p_true[(s, j)]).norm());
            }
        }
    }
    check(
        worst < 1e-6,
        format!("20 random diagonalizable systems, max |p_EDMD - p_model| = {worst:.2e} (tol 1e-6)"),
    )
}

fn c3_trace_identity() -> Outcome {
    let cases = 256;
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let worst = std::cell::Cell::new(0.0f64);
    let modes = std::cell::Cell::new(0usize);
    let strategy = (2usize..9, 20usize..150, any::<u64>(), any::<bool>());
    let result = runner.run(&strategy, |(n, m, seed, linear)| {
        let mut r = rng(seed);
        let snap = if linear {
            let a = random_stable(n, 0.95, &mut r);
            let mut s = linear_pairs(&a, m, &mut r);
            s.y = Mat::from_fn(n, m, |i, j| s.y[(i, j)] + 1e-3 * gauss(&mut r));
            s
        } else {
            let names = (0..n).map(|i| format!("x{i}")).collect();
            let x = Mat::from_fn(n, m, |_, _| gauss(&mut r));
            let y = Mat::from_fn(n, m, |_, _| gauss(&mut r));
            SnapshotMatrices::from_pairs(x, y, 0.02, names).unwrap()
        };
        let gram = assemble_gram(&snap).unwrap();
        let rank = choose_rank(&singular_values(&gram).unwrap(), None).unwrap().rank;
        let model = reduce_and_decompose(&gram, &snap, rank).unwrap();
        let p = model.participation_matrix();
        for i in 0..model.rank {
            let sum: Complex64 = (0..n).map(|s| p[(s, i)]).sum();
            let dev = (sum - Complex64::new(1.0, 0.0)).norm();
            worst.set(worst.get().max(dev));
            modes.set(modes.get() + 1);
            prop_assert!(dev < 1e-8, "mode {} sums to {}", i, sum);
        }
        Ok(())
    });
    let detail = format!(
        "{cases} randomized cases, {} modes, max |sum_s p_si - 1| = {:.2e} (tol 1e-8)",
        modes.get(),
        worst.get()
    );
    match result {
        Ok(()) => Outcome::Pass(detail),
        Err(e) => Outcome::Fail(format!("{detail}; {e}")),
    }
}

fn c4_filter() -> Outcome {
    let start = Instant::now();
    let (fs, f) = (50.0, 0.158);
    let band = design_butterworth(FilterKind::BandPass, 4, &[0.9 * f, 1.1 * f], fs).unwrap();
    let (h0, hl, hh) = (band.magnitude(f), band.magnitude(0.5 * f), band.magnitude(2.0 * f));
    let x = tone(f, 5000, fs, 0.4);
    let y = apply_zero_phase(&band, &x).unwrap();
    let half_period = (fs / f / 2.0) as i64;
    let xcorr = |lag: i64| -> f64 {
        (0..x.len() as i64)
            .filter_map(|k| {
                let j = k + lag;
                (0..x.len() as i64).contains(&j).then(|| x[k as usize] * y[j as usize])
            })
            .sum::<f64>()
    };
    let best = (-half_period..=half_period)
        .max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b)))
        .unwrap();
    let t = start.elapsed();
    check(
        (0.99..=1.01).contains(&h0) && hl < 0.05 && hh < 0.05 && best == 0 && t < Duration::from_secs(1),
        format!(
            "|H(fs)| = {h0:.6}, |H(fs/2)| = {hl:.2e}, |H(2fs)| = {hh:.2e}, xcorr peak lag {best}, {:.3} s",
            t.as_secs_f64()
        ),
    )
}

fn c5_fft_peak() -> Outcome {
    let (fs, f, n) = (50.0, 0.158, 2500);
    let sigma = 1.0 / 2f64.sqrt() * 10f64.powf(-30.0 / 20.0);
    let mut hits = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut r = rng(5000 + seed);
        let phase = r_range(&mut r, 0.0, 2.0 * PI);
        let x: Vec<f64> = tone(f, n, fs, phase)
            .into_iter()
            .map(|v| v + sigma * gauss(&mut r))
            .collect();
        if let Ok(p) = detect_in_signals(&[&x], fs, DEFAULT_BAND) {
            let err = (p.f_s - f).abs();
            worst = worst.max(err);
            if err <= 0.005 {
                hits += 1;
            }
        } else {
            worst = f64::INFINITY;
        }
    }
    check(
        hits == 100,
        format!("{hits}/100 seeds within 0.005 Hz, max error {worst:.2e} Hz"),
    )
}

fn c6_blind_localization() -> Outcome {
    let start = Instant::now();
    let (mut first, mut top2) = (0, 0);
    let mut misses = Vec::new();
    for seed in 0..20u64 {
        let s = random_scenario(600 + seed);
        let (ds, truth) = generate_event(&s).unwrap();
        match run_analysis(&ds, &AnalysisConfig::default()) {
            Ok(r) => {
                let pos = r.participation.ranking.iter().position(|l| *l == truth.source_location);
                if pos == Some(0) {
                    first += 1;
                } else {
                    misses.push(format!("seed {seed}: source {} at {:?}", truth.source_location, pos));
                }
                if pos.is_some_and(|p| p < 2) {
                    top2 += 1;
                }
            }
            Err(e) => misses.push(format!("seed {seed}: {e}")),
        }
    }
    let t = start.elapsed();
    let mut detail = format!(
        "rank-1 {first}/20 (need 18), top-2 {top2}/20 (need 20), {:.1} s (limit 60 s)",
        t.as_secs_f64()
    );
    if !misses.is_empty() {
        detail.push_str(&format!("; {}", misses.join(", ")));
    }
    check(first >= 18 && top2 == 20 && t < Duration::from_secs(60), detail)
}

fn c7_def_oracle() -> Outcome {
    let (ds, _) = lossless_chain_event(0.2, 50.0, 60.0);
    let band = design_butterworth(FilterKind::BandPass, 4, &[0.18, 0.22], 50.0).unwrap();
    let fwd = def_energy(&ds, &band, (0.2, 0.8)).unwrap();
    let rev = def_energy(&ds.time_reversed(), &band, (0.2, 0.8)).unwrap();
    let src = fwd.get(1).unwrap().energy_rate;
    let sink = fwd.get(3).unwrap().energy_rate;
    let asym = fwd
        .per_location
        .iter()
        .zip(&rev.per_location)
        .map(|(a, b)| (a.energy_rate + b.energy_rate).abs())
        .fold(0.0, f64::max);
    check(
        src > 0.0 && sink < 0.0 && asym < 1e-9,
        format!("source rate {src:.3e} > 0, sink rate {sink:.3e} < 0, max |rate + reversed rate| = {asym:.1e} (tol 1e-9)"),
    )
}

fn c8_qv_lag() -> Outcome {
    let (fs, f) = (50.0, 0.25);
    let w = 2.0 * PI * f;
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let tau = -1.8 + 0.4 * k as f64;
        let ds = qv_pair_dataset(|t| (w * t).sin(), |t| (w * (t - tau)).sin(), 3000, fs);
        let got = qv_phase(&ds, f, &QvOptions::default()).unwrap().per_location[0].phase_deg;
        worst = worst.max((got - 360.0 * f * tau).abs());
    }
    check(worst < 2.0, format!("10 lags, max phase error {worst:.3} deg (tol 2 deg)"))
}

fn c9_event_replication() -> Outcome {
    let Ok(path) = std::env::var("OSCL_EVENT_CSV") else {
        return Outcome::Skip("set OSCL_EVENT_CSV to a compatible event export to run this tier".into());
    };
    let ds = match load_event(std::path::Path::new(&path)) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("cannot load {path}: {e}")),
    };
    let cfg = AnalysisConfig {
        window: Some((60.0, 110.0)),
        def: true,
        qv: true,
        ..AnalysisConfig::default()
    };
    let r = match run_analysis(&ds, &cfg) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("analysis failed: {e}")),
    };
    let b = r.baselines.as_ref().unwrap();
    let def = b.def.as_ref().unwrap();
    let inj: BTreeSet<u32> = def.ranking_injecting.iter().take(2).copied().collect();
    let in_phase: BTreeSet<u32> = b.qv.as_ref().unwrap().in_phase_locations().into_iter().collect();
    let ok_f = (r.f_s - 0.158).abs() <= 0.005;
    let ok_rank = (6..=8).contains(&r.rank_r);
    let ok_top = r.participation.ranking.first() == Some(&19);
    let ok_def = inj == BTreeSet::from([14, 15]);
    let ok_qv = [7, 11, 19].iter().all(|l| in_phase.contains(l));
    check(
        ok_f && ok_rank && ok_top && ok_def && ok_qv,
        format!(
            "f_s {:.4} Hz, rank {}, EDMD top {:?}, DEF top injectors {inj:?}, Q-V in-phase {in_phase:?}",
            r.f_s,
            r.rank_r,
            r.participation.ranking.first()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 EDMD exactness on linear systems", c1_linear_exactness),
        ("2 participation-factor oracle equivalence", c2_participation_oracle),
        ("3 trace identity", c3_trace_identity),
        ("4 band-pass filter correctness", c4_filter),
        ("5 FFT peak detection", c5_fft_peak),
        ("6 end-to-end blind localization", c6_blind_localization),
        ("7 DEF lossless-chain oracle", c7_def_oracle),
        ("8 Q-V phase lag recovery", c8_qv_lag),
        ("9 recorded-event replication", c9_event_replication),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Outcome::Pass(d) => println!("PASS  criterion {name}: {d}"),
            Outcome::Skip(d) => println!("SKIP  criterion {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL  criterion {name}: {d}");
            }
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion/criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all evaluated criteria passed");
}
