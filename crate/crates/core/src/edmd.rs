//! Extended dynamic mode decomposition and data-driven participation factors.
//!
//! Convention: with lifted snapshots as columns of `X` and `Y`, the Gram
//! pair is `G = X·Xᵀ/M`, `H = X·Yᵀ/M`. The least-squares operator
//! `K = G†H` satisfies `Yᵀ ≈ Xᵀ·K`, so the forward operator acting on
//! observable vectors is `M_K = Kᵀ = Hᵀ·G†`. Its right eigenvectors live in
//! observable space, which is what the participation product needs: on a
//! linear system with the identity dictionary `M_K` is the system matrix.
//!
//! The reduced operator projects `M_K` onto the leading left singular
//! vectors of `G = U·Σ·Rᵀ`:
//! `M̃ = U_rᵀ·M_K·U_r = U_rᵀ·Hᵀ·R_r·Σ_r⁻¹`.
//! Full-space eigenvectors are `Φ̂ = U_r·Φ̃`, left eigenvectors `Ξ̂ = Φ̂†`,
//! and the participation of observable `s` in mode `i` is `Φ̂[s,i]·Ξ̂[i,s]`.

use std::cmp::Ordering;
use std::f64::consts::PI;

use faer::{c64, Mat, MatRef};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lifting::{ObservableDef, SnapshotMatrices};

/// Singular values below this fraction of the largest are treated as zero.
pub const RELATIVE_CUTOFF: f64 = 1e-12;
/// Allowed deviation of `Σ_s p_si` from 1 before ranking is refused.
pub const TRACE_TOLERANCE: f64 = 1e-6;
/// `Ξ̂·Φ̂` deviation from identity that triggers a conditioning warning.
pub const BIORTHOGONALITY_WARN: f64 = 1e-6;
/// Band around the detected frequency searched for the target mode.
pub const TARGET_BAND_REL: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Clone)]
pub struct GramPair {
    pub g: Mat<f64>,
    pub h: Mat<f64>,
    pub m: usize,
}

/// `G = X·Xᵀ/M` (symmetrized) and `H = X·Yᵀ/M`.
pub fn assemble_gram(snap: &SnapshotMatrices) -> Result<GramPair> {
    let m = snap.n_snapshots();
    if m == 0 {
        return Err(Error::Numeric("no snapshots".into()));
    }
    let finite = |a: MatRef<'_, f64>| {
        (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| a[(i, j)].is_finite()))
    };
    if !finite(snap.x.as_ref()) || !finite(snap.y.as_ref()) {
        return Err(Error::Numeric("snapshot matrices hold non-finite entries".into()));
    }
    let scale = 1.0 / m as f64;
    let xxt = &snap.x * snap.x.transpose();
    let xyt = &snap.x * snap.y.transpose();
    let n = snap.n_observables();
    let g = Mat::from_fn(n, n, |i, j| 0.5 * (xxt[(i, j)] + xxt[(j, i)]) * scale);
    let h = Mat::from_fn(n, n, |i, j| xyt[(i, j)] * scale);
    Ok(GramPair { g, h, m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMethod {
    Elbow,
    Override,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankChoice {
    pub rank: usize,
    pub method: RankMethod,
    pub warnings: Vec<String>,
}

/// Truncation order from the elbow of the singular value curve.
///
/// Values below [`RELATIVE_CUTOFF`]·σ₁ are discarded; the rank is the index
/// of the largest second difference of `log10 σ` plus one, at least 2.
pub fn choose_rank(sigma: &[f64], override_rank: Option<usize>) -> Result<RankChoice> {
    if sigma.is_empty() {
        return Err(Error::Validation("empty singular value list".into()));
    }
    let n_d = sigma.len();
    if let Some(r) = override_rank {
        let rank = r.clamp(1, n_d);
        let mut warnings = Vec::new();
        if rank != r {
            warnings.push(format!("rank override {r} clamped to {rank}"));
        }
        return Ok(RankChoice {
            rank,
            method: RankMethod::Override,
            warnings,
        });
    }
    let s1 = sigma[0];
    if !(s1 > 0.0) {
        return Err(Error::Numeric("all singular values are zero".into()));
    }
    let kept = sigma
        .iter()
        .take_while(|s| **s >= RELATIVE_CUTOFF * s1)
        .count();
    if kept < 3 {
        let rank = kept.min(2);
        let mut warnings = Vec::new();
        if rank < 2 {
            warnings.push(format!(
                "only {kept} singular value(s) above the noise floor; rank {rank} cannot hold an oscillatory pair"
            ));
        }
        return Ok(RankChoice {
            rank,
            method: RankMethod::Degenerate,
            warnings,
        });
    }
    let logs: Vec<f64> = sigma[..kept].iter().map(|s| s.log10()).collect();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for k in 0..kept - 2 {
        let d2 = logs[k + 2] - 2.0 * logs[k + 1] + logs[k];
        if d2 > best_val {
            best_val = d2;
            best = k;
        }
    }
    Ok(RankChoice {
        rank: (best + 1).max(2).min(kept),
        method: RankMethod::Elbow,
        warnings: Vec::new(),
    })
}

/// Singular values of `G`, descending.
pub fn singular_values(gram: &GramPair) -> Result<Vec<f64>> {
    let svd = gram
        .g
        .svd()
        .map_err(|e| Error::Numeric(format!("SVD of G failed: {e:?}")))?;
    let s = svd.S().column_vector();
    Ok((0..s.nrows()).map(|i| s[i]).collect())
}

/// Reduced Koopman model.
#[derive(Debug, Clone)]
pub struct KoopmanModel {
    pub rank: usize,
    /// All singular values of `G`.
    pub singular_values: Vec<f64>,
    pub u_r: Mat<f64>,
    pub sigma_r: Vec<f64>,
    pub r_r: Mat<f64>,
    pub reduced_operator: Mat<f64>,
    /// Discrete-time eigenvalues.
    pub mu: Vec<Complex64>,
    pub phi_tilde: Mat<c64>,
    /// Right eigenvectors in observable space, one column per mode.
    pub phi_hat: Mat<c64>,
    /// Left eigenvectors, one row per mode.
    pub xi_hat: Mat<c64>,
    pub dt: f64,
    pub observable_names: Vec<String>,
    /// max |Ξ̂·Φ̂ − I|.
    pub biorthogonality_error: f64,
    /// max over modes of ‖M̃φ − μφ‖ / ‖φ‖.
    pub max_eigen_residual: f64,
    pub warnings: Vec<String>,
}

fn to_complex(a: MatRef<'_, f64>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

/// Pseudoinverse through the SVD, zeroing singular values below
/// [`RELATIVE_CUTOFF`]·σ_max.
pub fn complex_pinv(a: MatRef<'_, c64>) -> Result<Mat<c64>> {
    let svd = a
        .svd()
        .map_err(|e| Error::Numeric(format!("SVD for pseudoinverse failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = s.nrows();
    let smax = (0..k).map(|i| s[i].re).fold(0.0, f64::max);
    let u = svd.U();
    let v = svd.V();
    // A† = V Σ⁻¹ Uᴴ
    let mut vs = Mat::<c64>::zeros(v.nrows(), k);
    for j in 0..k {
        let sj = s[j].re;
        if sj > RELATIVE_CUTOFF * smax && sj > 0.0 {
            for i in 0..v.nrows() {
                vs[(i, j)] = v[(i, j)] / sj;
            }
        }
    }
    Ok(&vs * u.subcols(0, k).adjoint())
}

fn column_norm(a: MatRef<'_, c64>, j: usize) -> f64 {
    (0..a.nrows()).map(|i| a[(i, j)].norm_sqr()).sum::<f64>().sqrt()
}

/// Truncated SVD of `G`, reduced operator, eigendecomposition and
/// reconstruction of the right and left eigenvectors.
pub fn reduce_and_decompose(gram: &GramPair, snap: &SnapshotMatrices, rank: usize) -> Result<KoopmanModel> {
    let n = gram.g.nrows();
    if gram.h.nrows() != n || gram.h.ncols() != n || snap.n_observables() != n {
        return Err(Error::Data("Gram pair and snapshots disagree in dimension".into()));
    }
    let svd = gram
        .g
        .svd()
        .map_err(|e| Error::Numeric(format!("SVD of G failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let sigma: Vec<f64> = (0..s.nrows()).map(|i| s[i]).collect();
    let smax = sigma.first().copied().unwrap_or(0.0);
    let usable = sigma.iter().filter(|v| **v > RELATIVE_CUTOFF * smax && **v > 0.0).count();
    if rank == 0 || rank > usable {
        return Err(Error::Numeric(format!(
            "rank {rank} requested but only {usable} singular values exceed the cutoff"
        )));
    }
    let u_r = svd.U().subcols(0, rank).to_owned();
    let r_r = svd.V().subcols(0, rank).to_owned();
    let sigma_r = sigma[..rank].to_vec();

    // M̃ = U_rᵀ Hᵀ R_r Σ_r⁻¹
    let core = u_r.transpose() * gram.h.transpose() * &r_r;
    let reduced = Mat::from_fn(rank, rank, |i, j| core[(i, j)] / sigma_r[j]);

    let evd = reduced
        .eigen()
        .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))?;
    let phi_tilde = evd.U().to_owned();
    let eig = evd.S().column_vector();
    let mu: Vec<Complex64> = (0..rank).map(|i| eig[i]).collect();

    let reduced_c = to_complex(reduced.as_ref());
    let applied = &reduced_c * &phi_tilde;
    let max_eigen_residual = (0..rank)
        .map(|i| {
            let norm = column_norm(phi_tilde.as_ref(), i);
            let res = (0..rank)
                .map(|k| (applied[(k, i)] - mu[i] * phi_tilde[(k, i)]).norm_sqr())
                .sum::<f64>()
                .sqrt();
            res / norm
        })
        .fold(0.0, f64::max);

    let phi_hat = to_complex(u_r.as_ref()) * &phi_tilde;
    let xi_hat = complex_pinv(phi_hat.as_ref())?;
    let prod = &xi_hat * &phi_hat;
    let mut biorthogonality_error: f64 = 0.0;
    for i in 0..rank {
        for j in 0..rank {
            let target = if i == j { 1.0 } else { 0.0 };
            biorthogonality_error =
                biorthogonality_error.max((prod[(i, j)] - c64::new(target, 0.0)).norm());
        }
    }

    let mut warnings = Vec::new();
    if biorthogonality_error > BIORTHOGONALITY_WARN {
        warnings.push(format!(
            "left/right eigenvectors deviate from biorthogonality by {biorthogonality_error:.2e}; modes may be nearly defective"
        ));
    }
    let op_scale = (0..rank)
        .flat_map(|i| (0..rank).map(move |j| (i, j)))
        .map(|(i, j)| reduced[(i, j)].abs())
        .fold(1.0, f64::max);
    if max_eigen_residual > 1e-10 * op_scale {
        warnings.push(format!("eigenpair residual {max_eigen_residual:.2e} exceeds 1e-10"));
    }

    Ok(KoopmanModel {
        rank,
        singular_values: sigma,
        u_r,
        sigma_r,
        r_r,
        reduced_operator: reduced,
        mu,
        phi_tilde,
        phi_hat,
        xi_hat,
        dt: snap.dt,
        observable_names: snap.observable_names.clone(),
        biorthogonality_error,
        max_eigen_residual,
        warnings,
    })
}

/// Serializable digest of a [`KoopmanModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KoopmanSummary {
    pub rank_r: usize,
    pub dt: f64,
    pub singular_values: Vec<f64>,
    pub reduced_operator: Vec<Vec<f64>>,
    /// Discrete eigenvalues as `[re, im]`.
    pub eigenvalues: Vec<Complex64>,
    pub biorthogonality_error: f64,
    pub max_eigen_residual: f64,
    pub warnings: Vec<String>,
}

impl KoopmanModel {
    pub fn summary(&self) -> KoopmanSummary {
        KoopmanSummary {
            rank_r: self.rank,
            dt: self.dt,
            singular_values: self.singular_values.clone(),
            reduced_operator: (0..self.rank)
                .map(|i| (0..self.rank).map(|j| self.reduced_operator[(i, j)]).collect())
                .collect(),
            eigenvalues: self.mu.clone(),
            biorthogonality_error: self.biorthogonality_error,
            max_eigen_residual: self.max_eigen_residual,
            warnings: self.warnings.clone(),
        }
    }

    /// `P[s, i] = Φ̂[s,i]·Ξ̂[i,s]` for every observable and mode.
    pub fn participation_matrix(&self) -> Mat<c64> {
        Mat::from_fn(self.phi_hat.nrows(), self.rank, |s, i| {
            self.phi_hat[(s, i)] * self.xi_hat[(i, s)]
        })
    }
}

/// Continuous-time description of one Koopman eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEstimate {
    /// Column of Φ̂ this mode came from.
    pub mode_index: usize,
    pub mu: Complex64,
    /// `ln(μ)/Δt`, 1/s.
    pub lambda: Complex64,
    pub frequency_hz: f64,
    /// `−Re λ/|λ|`; `None` for a rigid (λ = 0) mode.
    pub damping_ratio: Option<f64>,
    /// Set for modes on the Nyquist frequency (negative real μ).
    pub out_of_band: bool,
    /// Koopman mode over observables (column of Φ̂).
    pub mode_shape: Vec<Complex64>,
}

/// Converts one discrete eigenvalue; `None` when `μ = 0`.
pub fn continuous_mode(mu: Complex64, dt: f64, mode_index: usize, mode_shape: Vec<Complex64>) -> Option<ModeEstimate> {
    if mu.norm() == 0.0 || !mu.norm().is_finite() {
        return None;
    }
    let lambda = mu.ln() / dt;
    let frequency_hz = lambda.im.abs() / (2.0 * PI);
    let damping_ratio = if lambda.norm() * dt > 1e-14 {
        Some(-lambda.re / lambda.norm())
    } else {
        None
    };
    let out_of_band = lambda.im.abs() * dt >= PI * (1.0 - 1e-12);
    Some(ModeEstimate {
        mode_index,
        mu,
        lambda,
        frequency_hz,
        damping_ratio,
        out_of_band,
        mode_shape,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousModes {
    /// Sorted by damping ratio ascending, rigid modes last.
    pub modes: Vec<ModeEstimate>,
    pub warnings: Vec<String>,
}

fn damping_key(m: &ModeEstimate) -> f64 {
    m.damping_ratio.unwrap_or(f64::INFINITY)
}

/// `λ_i = ln(μ_i)/Δt` for every retained mode.
pub fn to_continuous(model: &KoopmanModel) -> Result<ContinuousModes> {
    if !(model.dt > 0.0) {
        return Err(Error::Validation(format!("time step {} is not positive", model.dt)));
    }
    let mut modes = Vec::with_capacity(model.rank);
    let mut warnings = Vec::new();
    for (i, mu) in model.mu.iter().enumerate() {
        let shape = (0..model.phi_hat.nrows()).map(|s| model.phi_hat[(s, i)]).collect();
        match continuous_mode(*mu, model.dt, i, shape) {
            Some(m) => {
                if m.out_of_band {
                    warnings.push(format!("mode {i} sits on the Nyquist frequency"));
                }
                modes.push(m)
            }
            None => warnings.push(format!("mode {i} has zero eigenvalue and was dropped")),
        }
    }
    modes.sort_by(|a, b| damping_key(a).total_cmp(&damping_key(b)));
    Ok(ContinuousModes { modes, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSelection {
    pub mode: ModeEstimate,
    pub in_band: bool,
    pub warning: Option<String>,
}

fn target_order(a: &ModeEstimate, b: &ModeEstimate, f_s: f64) -> Ordering {
    let tol = 1e-9 * f_s.abs().max(1e-6);
    let (da, db) = ((a.frequency_hz - f_s).abs(), (b.frequency_hz - f_s).abs());
    if (da - db).abs() > tol {
        return da.total_cmp(&db);
    }
    let (za, zb) = (damping_key(a), damping_key(b));
    if (za - zb).abs() > 1e-12 {
        return za.total_cmp(&zb);
    }
    // conjugate pair: take the member with positive imaginary part
    b.lambda.im.total_cmp(&a.lambda.im)
}

/// The mode closest to `f_s` inside `[0.8, 1.2]·f_s`, ties going to the
/// lower damping ratio; falls back to the global closest with a warning.
pub fn select_target_mode(modes: &[ModeEstimate], f_s: f64) -> Result<TargetSelection> {
    if modes.is_empty() {
        return Err(Error::Validation("no modes to select from".into()));
    }
    let (lo, hi) = (TARGET_BAND_REL.0 * f_s, TARGET_BAND_REL.1 * f_s);
    let in_band = modes
        .iter()
        .filter(|m| m.frequency_hz >= lo && m.frequency_hz <= hi)
        .min_by(|a, b| target_order(a, b, f_s));
    if let Some(m) = in_band {
        return Ok(TargetSelection {
            mode: m.clone(),
            in_band: true,
            warning: None,
        });
    }
    let m = modes
        .iter()
        .min_by(|a, b| target_order(a, b, f_s))
        .expect("non-empty");
    Ok(TargetSelection {
        mode: m.clone(),
        in_band: false,
        warning: Some(format!(
            "no mode within [{lo:.4}, {hi:.4}] Hz; using closest mode at {:.4} Hz",
            m.frequency_hz
        )),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationScore {
    pub location_id: u32,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationReport {
    pub target_mode: ModeEstimate,
    pub observable_names: Vec<String>,
    /// Complex `p_si` of the target mode per observable.
    pub p_complex: Vec<Complex64>,
    /// `|p_si|` per observable.
    pub p_observable: Vec<f64>,
    /// Per-location sums of `|p_si|`, normalized so the maximum is 1.
    pub p_location: Vec<LocationScore>,
    /// Location ids by descending score.
    pub ranking: Vec<u32>,
    /// `Σ_s p_si`, ideally exactly 1.
    pub trace_sum: Complex64,
}

impl ParticipationReport {
    pub fn score(&self, location_id: u32) -> Option<f64> {
        self.p_location
            .iter()
            .find(|l| l.location_id == location_id)
            .map(|l| l.score)
    }
}

/// Participation of every observable in `mode`, aggregated per location.
pub fn participation(model: &KoopmanModel, mode: &ModeEstimate, dict: &[ObservableDef]) -> Result<ParticipationReport> {
    let i = mode.mode_index;
    if i >= model.rank || (model.mu[i] - mode.mu).norm() > 1e-12 * model.mu[i].norm().max(1.0) {
        return Err(Error::Validation(format!(
            "mode {i} (mu = {}) does not belong to this model",
            mode.mu
        )));
    }
    let n = model.phi_hat.nrows();
    if dict.len() != n {
        return Err(Error::Data(format!(
            "dictionary has {} observables, model has {n}",
            dict.len()
        )));
    }
    let p_complex: Vec<Complex64> = (0..n)
        .map(|s| model.phi_hat[(s, i)] * model.xi_hat[(i, s)])
        .collect();
    let trace_sum: Complex64 = p_complex.iter().sum();
    let dev = (trace_sum - Complex64::new(1.0, 0.0)).norm();
    if !(dev <= TRACE_TOLERANCE) {
        return Err(Error::Conditioning(format!(
            "participation factors of mode {i} sum to {trace_sum} (|dev| = {dev:.2e} > {TRACE_TOLERANCE}); refusing to rank"
        )));
    }
    let p_observable: Vec<f64> = p_complex.iter().map(|p| p.norm()).collect();

    let mut p_location: Vec<LocationScore> = Vec::new();
    for (def, p) in dict.iter().zip(&p_observable) {
        match p_location.iter_mut().find(|l| l.location_id == def.location_id) {
            Some(l) => l.score += p,
            None => p_location.push(LocationScore {
                location_id: def.location_id,
                score: *p,
            }),
        }
    }
    let max = p_location.iter().map(|l| l.score).fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::Conditioning("all participation factors vanish".into()));
    }
    for l in &mut p_location {
        l.score /= max;
    }
    let mut order = p_location.clone();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.location_id.cmp(&b.location_id))
    });
    Ok(ParticipationReport {
        target_mode: mode.clone(),
        observable_names: dict.iter().map(|d| d.name.clone()).collect(),
        p_complex,
        p_observable,
        p_location,
        ranking: order.iter().map(|l| l.location_id).collect(),
        trace_sum,
    })
}
