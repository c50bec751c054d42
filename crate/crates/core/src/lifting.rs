//! Observable dictionaries and snapshot matrices.
//!
//! The default dictionary is active and reactive power per location. Rows
//! of every downstream matrix follow the order of the dictionary.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dataset::{EventDataset, Location, PhasorChannel, Quantity};
use crate::error::{Error, Result};

/// Active and reactive power from a voltage and a current phasor:
/// `P = V·I·cos(θV − θI)`, `Q = V·I·sin(θV − θI)`.
pub fn compute_pq(v: &PhasorChannel, i: &PhasorChannel) -> Result<(Vec<f64>, Vec<f64>)> {
    if v.quantity != Quantity::Voltage || i.quantity != Quantity::Current {
        return Err(Error::Type(format!(
            "compute_pq needs (Voltage, Current), got ({:?}, {:?})",
            v.quantity, i.quantity
        )));
    }
    if v.location_id != i.location_id {
        return Err(Error::Type(format!(
            "voltage from location {} paired with current from location {}",
            v.location_id, i.location_id
        )));
    }
    if v.len() != i.len() || v.angle.len() != i.angle.len() || v.len() != v.angle.len() {
        return Err(Error::Data(format!(
            "location {}: voltage has {} samples, current {}",
            v.location_id,
            v.len(),
            i.len()
        )));
    }
    let n = v.len();
    let mut p = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for k in 0..n {
        let s = v.magnitude[k] * i.magnitude[k];
        let (sin, cos) = (v.angle[k] - i.angle[k]).sin_cos();
        p.push(s * cos);
        q.push(s * sin);
    }
    Ok((p, q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerComponent {
    Active,
    Reactive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrigFunction {
    /// cos(θV − θI)
    CosAngleDiff,
    /// sin(θV − θI)
    SinAngleDiff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservableKind {
    RawMagnitude(Quantity),
    /// Unwrapped angle, radians.
    RawAngle(Quantity),
    ActivePower,
    ReactivePower,
    /// `P^degree` or `Q^degree`, degree >= 2.
    Polynomial { base: PowerComponent, degree: u32 },
    Trig(TrigFunction),
    /// A state supplied directly rather than computed from phasors.
    State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableDef {
    pub name: String,
    pub kind: ObservableKind,
    pub location_id: u32,
    /// Raw channels feeding this observable.
    pub provenance: Vec<String>,
}

impl ObservableDef {
    /// An observable standing for an externally supplied state variable.
    pub fn state(name: impl Into<String>, location_id: u32) -> Self {
        ObservableDef {
            name: name.into(),
            kind: ObservableKind::State,
            location_id,
            provenance: Vec::new(),
        }
    }
}

/// Which observables to build per location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryConfig {
    pub active_power: bool,
    pub reactive_power: bool,
    /// Adds `P^2 .. P^d`; values below 2 add nothing.
    pub p_max_degree: u32,
    pub q_max_degree: u32,
    pub raw_magnitudes: bool,
    pub raw_angles: bool,
    pub trig: bool,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            active_power: true,
            reactive_power: true,
            p_max_degree: 1,
            q_max_degree: 1,
            raw_magnitudes: false,
            raw_angles: false,
            trig: false,
        }
    }
}

fn channel_names(id: u32, suffixes: &[&str]) -> Vec<String> {
    suffixes.iter().map(|s| format!("loc{id}_{s}")).collect()
}

/// Builds the observable list, grouped by location in dataset order.
pub fn build_dictionary(ds: &EventDataset, config: &DictionaryConfig) -> Result<Vec<ObservableDef>> {
    if ds.locations.is_empty() {
        return Err(Error::Data("cannot build a dictionary for an empty dataset".into()));
    }
    let all = ["Vm", "Va", "Im", "Ia"];
    let mut out = Vec::new();
    for loc in &ds.locations {
        let id = loc.id;
        let mut push = |name: String, kind, prov: &[&str]| {
            out.push(ObservableDef {
                name,
                kind,
                location_id: id,
                provenance: channel_names(id, prov),
            })
        };
        if config.active_power {
            push(format!("P@loc{id}"), ObservableKind::ActivePower, &all);
        }
        if config.reactive_power {
            push(format!("Q@loc{id}"), ObservableKind::ReactivePower, &all);
        }
        for degree in 2..=config.p_max_degree {
            push(
                format!("P^{degree}@loc{id}"),
                ObservableKind::Polynomial { base: PowerComponent::Active, degree },
                &all,
            );
        }
        for degree in 2..=config.q_max_degree {
            push(
                format!("Q^{degree}@loc{id}"),
                ObservableKind::Polynomial { base: PowerComponent::Reactive, degree },
                &all,
            );
        }
        if config.raw_magnitudes {
            push(format!("Vm@loc{id}"), ObservableKind::RawMagnitude(Quantity::Voltage), &["Vm"]);
            push(format!("Im@loc{id}"), ObservableKind::RawMagnitude(Quantity::Current), &["Im"]);
        }
        if config.raw_angles {
            push(format!("Va@loc{id}"), ObservableKind::RawAngle(Quantity::Voltage), &["Va"]);
            push(format!("Ia@loc{id}"), ObservableKind::RawAngle(Quantity::Current), &["Ia"]);
        }
        if config.trig {
            push(
                format!("cos(Va-Ia)@loc{id}"),
                ObservableKind::Trig(TrigFunction::CosAngleDiff),
                &["Va", "Ia"],
            );
            push(
                format!("sin(Va-Ia)@loc{id}"),
                ObservableKind::Trig(TrigFunction::SinAngleDiff),
                &["Va", "Ia"],
            );
        }
    }
    if out.is_empty() {
        return Err(Error::Validation("dictionary configuration selects no observables".into()));
    }
    Ok(out)
}

fn evaluate_one(def: &ObservableDef, loc: &Location) -> Result<Vec<f64>> {
    let (v, i) = (&loc.voltage, &loc.current);
    let pq = || compute_pq(v, i);
    let angle_diff = |f: fn(f64) -> f64| -> Vec<f64> {
        v.angle.iter().zip(&i.angle).map(|(a, b)| f(a - b)).collect()
    };
    Ok(match def.kind {
        ObservableKind::ActivePower => pq()?.0,
        ObservableKind::ReactivePower => pq()?.1,
        ObservableKind::Polynomial { base, degree } => {
            let (p, q) = pq()?;
            let src = match base {
                PowerComponent::Active => p,
                PowerComponent::Reactive => q,
            };
            src.into_iter().map(|x| x.powi(degree as i32)).collect()
        }
        ObservableKind::RawMagnitude(Quantity::Voltage) => v.magnitude.clone(),
        ObservableKind::RawMagnitude(Quantity::Current) => i.magnitude.clone(),
        ObservableKind::RawAngle(Quantity::Voltage) => v.angle.clone(),
        ObservableKind::RawAngle(Quantity::Current) => i.angle.clone(),
        ObservableKind::Trig(TrigFunction::CosAngleDiff) => angle_diff(f64::cos),
        ObservableKind::Trig(TrigFunction::SinAngleDiff) => angle_diff(f64::sin),
        ObservableKind::State => {
            return Err(Error::Validation(format!(
                "observable {} has no phasor definition",
                def.name
            )))
        }
    })
}

/// Observables evaluated over time, one row per observable.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSeries {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub sample_rate: f64,
}

impl LiftedSeries {
    pub fn len(&self) -> usize {
        self.rows.first().map(Vec::len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies the same transformation to every row (filtering, cropping).
    pub fn map_rows<F>(&self, f: F) -> Result<LiftedSeries>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    {
        use rayon::prelude::*;
        let rows = self
            .rows
            .par_iter()
            .map(|r| f(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(LiftedSeries {
            names: self.names.clone(),
            rows,
            sample_rate: self.sample_rate,
        })
    }
}

/// Evaluates every observable of `dict` on the dataset.
pub fn evaluate_observables(ds: &EventDataset, dict: &[ObservableDef]) -> Result<LiftedSeries> {
    let rows = dict
        .iter()
        .map(|def| {
            let loc = ds.location(def.location_id).ok_or_else(|| {
                Error::Data(format!(
                    "observable {} refers to missing location {}",
                    def.name, def.location_id
                ))
            })?;
            evaluate_one(def, loc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LiftedSeries {
        names: dict.iter().map(|d| d.name.clone()).collect(),
        rows,
        sample_rate: ds.sample_rate,
    })
}

/// Lifted snapshot pairs: column `j` of `y` is the successor of column `j` of `x`.
#[derive(Debug, Clone)]
pub struct SnapshotMatrices {
    pub x: Mat<f64>,
    pub y: Mat<f64>,
    pub dt: f64,
    pub observable_names: Vec<String>,
    pub warnings: Vec<String>,
}

impl SnapshotMatrices {
    pub fn n_observables(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_snapshots(&self) -> usize {
        self.x.ncols()
    }

    /// Wraps explicit snapshot pairs `y_j = F(x_j)` without further processing.
    pub fn from_pairs(x: Mat<f64>, y: Mat<f64>, dt: f64, observable_names: Vec<String>) -> Result<Self> {
        if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
            return Err(Error::Data(format!(
                "X is {}x{} but Y is {}x{}",
                x.nrows(),
                x.ncols(),
                y.nrows(),
                y.ncols()
            )));
        }
        if observable_names.len() != x.nrows() {
            return Err(Error::Data(format!(
                "{} observable names for {} rows",
                observable_names.len(),
                x.nrows()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::Validation(format!("time step {dt} is not positive")));
        }
        let mut warnings = Vec::new();
        if x.ncols() < x.nrows() {
            warnings.push(format!(
                "only {} snapshots for {} observables",
                x.ncols(),
                x.nrows()
            ));
        }
        Ok(SnapshotMatrices {
            x,
            y,
            dt,
            observable_names,
            warnings,
        })
    }

    /// Removes each row's mean and forms one-step shift pairs from a
    /// contiguous record.
    pub fn from_series(series: &LiftedSeries) -> Result<Self> {
        let n_d = series.rows.len();
        let n = series.len();
        if n_d == 0 {
            return Err(Error::Data("no observables".into()));
        }
        if n < 2 {
            return Err(Error::Length("need at least 2 samples to form snapshot pairs".into()));
        }
        let mut centered = Vec::with_capacity(n_d);
        for (name, row) in series.names.iter().zip(&series.rows) {
            if row.len() != n {
                return Err(Error::Data(format!("observable {name} has {} samples, expected {n}", row.len())));
            }
            if let Some(k) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::DataAtRow {
                    row: k,
                    reason: format!("observable {name} is not finite"),
                });
            }
            let mean = row.iter().sum::<f64>() / n as f64;
            centered.push(row.iter().map(|v| v - mean).collect::<Vec<_>>());
        }
        let m = n - 1;
        let x = Mat::from_fn(n_d, m, |i, j| centered[i][j]);
        let y = Mat::from_fn(n_d, m, |i, j| centered[i][j + 1]);
        Self::from_pairs(x, y, 1.0 / series.sample_rate, series.names.clone())
    }
}

/// Evaluates the dictionary on an already filtered and cropped dataset and
/// forms the mean-removed shift pairs.
pub fn lift_snapshots(ds: &EventDataset, dict: &[ObservableDef]) -> Result<SnapshotMatrices> {
    SnapshotMatrices::from_series(&evaluate_observables(ds, dict)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::toy_dataset;

    fn phasor(q: Quantity, mag: &[f64], ang: &[f64]) -> PhasorChannel {
        PhasorChannel {
            location_id: 1,
            quantity: q,
            magnitude: mag.to_vec(),
            angle: ang.to_vec(),
            sample_rate: 50.0,
            t0: 0.0,
            units: "pu".into(),
        }
    }

    #[test]
    fn pq_scalar_cases() {
        let v = phasor(Quantity::Voltage, &[1.0, 1.0, 1.02], &[0.4, 0.0, 0.5]);
        let i = phasor(
            Quantity::Current,
            &[1.0, 2.0, 0.5],
            &[0.4, -std::f64::consts::FRAC_PI_2, 0.2],
        );
        let (p, q) = compute_pq(&v, &i).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && q[0].abs() < 1e-15);
        assert!(p[1].abs() < 1e-15 && (q[1] - 2.0).abs() < 1e-15);
        // direct scalar evaluation
        let (p_ref, q_ref) = (1.02 * 0.5 * 0.3f64.cos(), 1.02 * 0.5 * 0.3f64.sin());
        assert!((p[2] - p_ref).abs() < 1e-15 && (q[2] - q_ref).abs() < 1e-15);
        assert!((p[2] - 0.487222).abs() < 1e-6 && (q[2] - 0.150715).abs() < 1e-6);
    }

    #[test]
    fn pq_errors() {
        let v = phasor(Quantity::Voltage, &[1.0, 1.0], &[0.0, 0.0]);
        let short = phasor(Quantity::Current, &[1.0], &[0.0]);
        assert!(matches!(compute_pq(&v, &v), Err(Error::Type(_))));
        assert!(matches!(compute_pq(&v, &short), Err(Error::Data(_))));
    }

    #[test]
    fn default_dictionary_is_pq_per_location() {
        let ds = toy_dataset(18, 100, 50.0);
        let dict = build_dictionary(&ds, &DictionaryConfig::default()).unwrap();
        assert_eq!(dict.len(), 36);
        assert_eq!(dict[0].name, "P@loc1");
        assert_eq!(dict[1].name, "Q@loc1");

        let cfg = DictionaryConfig {
            p_max_degree: 2,
            ..DictionaryConfig::default()
        };
        assert_eq!(build_dictionary(&ds, &cfg).unwrap().len(), 54);

        let one = toy_dataset(1, 100, 50.0);
        let names: Vec<String> = build_dictionary(&one, &DictionaryConfig::default())
            .unwrap()
            .into_iter()
            .map(|d| d.name)
            .collect();
        assert_eq!(names, ["P@loc1", "Q@loc1"]);
    }

    #[test]
    fn names_unique() {
        let ds = toy_dataset(3, 100, 50.0);
        let cfg = DictionaryConfig {
            p_max_degree: 3,
            q_max_degree: 2,
            raw_magnitudes: true,
            raw_angles: true,
            trig: true,
            ..DictionaryConfig::default()
        };
        let dict = build_dictionary(&ds, &cfg).unwrap();
        let mut names: Vec<_> = dict.iter().map(|d| d.name.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), dict.len());
        let s = evaluate_observables(&ds, &dict).unwrap();
        assert_eq!(s.rows.len(), dict.len());
    }

    #[test]
    fn shift_pair_shape_and_consistency() {
        let ds = toy_dataset(18, 1500, 50.0);
        let dict = build_dictionary(&ds, &DictionaryConfig::default()).unwrap();
        let snap = lift_snapshots(&ds, &dict).unwrap();
        assert_eq!((snap.x.nrows(), snap.x.ncols()), (36, 1499));
        assert_eq!((snap.y.nrows(), snap.y.ncols()), (36, 1499));
        for j in 0..snap.n_snapshots() - 1 {
            for i in 0..36 {
                assert_eq!(snap.y[(i, j)], snap.x[(i, j + 1)]);
            }
        }
        assert!((snap.dt - 0.02).abs() < 1e-15);
    }

    #[test]
    fn constant_signals_lift_to_zero() {
        let series = LiftedSeries {
            names: vec!["a".into(), "b".into()],
            rows: vec![vec![2.5; 50], vec![-1.0; 50]],
            sample_rate: 50.0,
        };
        let snap = SnapshotMatrices::from_series(&series).unwrap();
        for j in 0..49 {
            for i in 0..2 {
                assert_eq!(snap.x[(i, j)], 0.0);
                assert_eq!(snap.y[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn nan_names_observable() {
        let series = LiftedSeries {
            names: vec!["P@loc7".into()],
            rows: vec![vec![1.0, f64::NAN, 2.0]],
            sample_rate: 50.0,
        };
        let err = SnapshotMatrices::from_series(&series).unwrap_err();
        assert!(err.to_string().contains("P@loc7"));
    }
}
