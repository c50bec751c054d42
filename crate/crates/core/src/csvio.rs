//! Wide-CSV event files with a JSON metadata sidecar.
//!
//! Layout: header `time,loc<ID>_Vm,loc<ID>_Va,loc<ID>_Im,loc<ID>_Ia,...`,
//! one row per timestamp, time in seconds, angles in degrees on disk,
//! missing values as empty cells. The sidecar `<name>.meta.json` carries
//! `units`, `sample_rate_hz` and `angle_unit`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{EventDataset, Exclusion, Location, PhasorChannel, Quantity};
use crate::error::{Error, Result};

/// Relative deviation of a time step from nominal tolerated on load.
pub const MAX_STEP_JITTER: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    Degrees,
    Radians,
}

/// Contents of the `.meta.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSchema {
    pub units: String,
    pub sample_rate_hz: Option<f64>,
    pub angle_unit: AngleUnit,
}

impl Default for ChannelSchema {
    fn default() -> Self {
        ChannelSchema {
            units: "pu".into(),
            sample_rate_hz: None,
            angle_unit: AngleUnit::Degrees,
        }
    }
}

/// `event.csv` -> `event.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn read_schema(path: &Path) -> Result<ChannelSchema> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a CSV, reading its sidecar when present and defaulting otherwise.
pub fn load_event(path: &Path) -> Result<EventDataset> {
    let meta = meta_path(path);
    let schema = if meta.exists() {
        read_schema(&meta)?
    } else {
        ChannelSchema::default()
    };
    load_event_csv(path, &schema)
}

fn parse_header(headers: &csv::StringRecord) -> Result<Vec<u32>> {
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    match cols.first() {
        Some(&"time") => {}
        Some(other) => {
            return Err(Error::Schema {
                column: other.to_string(),
                reason: "first column must be `time`".into(),
            })
        }
        None => {
            return Err(Error::Schema {
                column: String::new(),
                reason: "empty header".into(),
            })
        }
    }
    let rest = &cols[1..];
    if rest.is_empty() || rest.len() % 4 != 0 {
        return Err(Error::Schema {
            column: rest.last().copied().unwrap_or("time").to_string(),
            reason: format!("expected groups of 4 columns per location, found {}", rest.len()),
        });
    }
    let suffixes = ["Vm", "Va", "Im", "Ia"];
    let mut ids = Vec::new();
    for group in rest.chunks(4) {
        let mut id = None;
        for (col, suffix) in group.iter().zip(suffixes) {
            let parsed = col
                .strip_prefix("loc")
                .and_then(|r| r.rsplit_once('_'))
                .filter(|(_, s)| *s == suffix)
                .and_then(|(num, _)| num.parse::<u32>().ok());
            let this = parsed.ok_or_else(|| Error::Schema {
                column: col.to_string(),
                reason: format!("expected `loc<ID>_{suffix}`"),
            })?;
            match id {
                None => id = Some(this),
                Some(prev) if prev != this => {
                    return Err(Error::Schema {
                        column: col.to_string(),
                        reason: format!("location {this} inside column group of location {prev}"),
                    })
                }
                _ => {}
            }
        }
        let id = id.expect("group is non-empty");
        if ids.contains(&id) {
            return Err(Error::Schema {
                column: group[0].to_string(),
                reason: format!("location {id} appears twice"),
            });
        }
        ids.push(id);
    }
    Ok(ids)
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(f64::NAN);
    }
    cell.parse::<f64>().map_err(|_| Error::DataAtRow {
        row,
        reason: format!("column `{column}`: cannot parse `{cell}`"),
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Parses a wide-CSV event file under the given schema.
///
/// Rows are numbered from 0 (first data row). Locations with no valid
/// sample in some channel are listed in `excluded_locations`.
pub fn load_event_csv(path: &Path, schema: &ChannelSchema) -> Result<EventDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let ids = parse_header(&headers)?;
    let ncol = headers.len();

    let mut time = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); ncol - 1];
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let t = parse_cell(&rec[0], row, "time")?;
        if !t.is_finite() {
            return Err(Error::DataAtRow {
                row,
                reason: "missing timestamp".into(),
            });
        }
        time.push(t);
        for (c, col) in cols.iter_mut().enumerate() {
            col.push(parse_cell(&rec[c + 1], row, &headers[c + 1])?);
        }
    }
    if time.len() < 2 {
        return Err(Error::Data("fewer than 2 data rows".into()));
    }
    if let Some(k) = (1..time.len()).find(|&k| time[k] <= time[k - 1]) {
        return Err(Error::DataAtRow {
            row: k,
            reason: format!("timestamp {} does not increase", time[k]),
        });
    }
    let steps: Vec<f64> = time.windows(2).map(|w| w[1] - w[0]).collect();
    let nominal = match schema.sample_rate_hz {
        Some(fs) => {
            let observed = median(&mut steps.clone());
            if ((observed * fs) - 1.0).abs() > MAX_STEP_JITTER {
                return Err(Error::Data(format!(
                    "declared sample rate {fs} Hz disagrees with median step {observed} s"
                )));
            }
            1.0 / fs
        }
        None => median(&mut steps.clone()),
    };
    if let Some(k) = steps
        .iter()
        .position(|s| (s / nominal - 1.0).abs() > MAX_STEP_JITTER)
    {
        return Err(Error::DataAtRow {
            row: k + 1,
            reason: format!(
                "time step {} s deviates more than {}% from {nominal} s",
                steps[k],
                100.0 * MAX_STEP_JITTER
            ),
        });
    }
    let sample_rate = 1.0 / nominal;
    let t0 = time[0];

    let to_rad = |v: Vec<f64>| match schema.angle_unit {
        AngleUnit::Degrees => v.into_iter().map(f64::to_radians).collect(),
        AngleUnit::Radians => v,
    };
    let mut locations = Vec::new();
    let mut excluded = Vec::new();
    let mut cols = cols.into_iter();
    for id in ids {
        let mut next = || cols.next().expect("four columns per location");
        let (vm, va, im, ia) = (next(), next(), next(), next());
        if [&vm, &va, &im, &ia]
            .iter()
            .any(|c| c.iter().all(|v| !v.is_finite()))
        {
            excluded.push(Exclusion {
                location_id: id,
                reason: "channel without any valid sample".into(),
            });
            continue;
        }
        let mk = |quantity, magnitude, angle| PhasorChannel {
            location_id: id,
            quantity,
            magnitude,
            angle,
            sample_rate,
            t0,
            units: schema.units.clone(),
        };
        locations.push(Location {
            id,
            voltage: mk(Quantity::Voltage, vm, to_rad(va)),
            current: mk(Quantity::Current, im, to_rad(ia)),
        });
    }
    let mut ds = EventDataset::new(locations, sample_rate, t0, schema.units.clone())?;
    ds.excluded_locations = excluded;
    Ok(ds)
}

fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Writes the dataset and its `.meta.json` sidecar. Angles go to disk in
/// degrees; values are written with round-trip precision.
pub fn write_event_csv(ds: &EventDataset, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header = String::from("time");
    for id in ds.location_ids() {
        for s in ["Vm", "Va", "Im", "Ia"] {
            header.push_str(&format!(",loc{id}_{s}"));
        }
    }
    writeln!(w, "{header}").map_err(io)?;
    let mut line = String::new();
    for k in 0..ds.len() {
        line.clear();
        line.push_str(&format!("{:.9}", ds.t0() + k as f64 / ds.sample_rate));
        for loc in &ds.locations {
            for ch in [&loc.voltage, &loc.current] {
                line.push(',');
                line.push_str(&fmt_value(ch.magnitude[k]));
                line.push(',');
                line.push_str(&fmt_value(ch.angle[k].to_degrees()));
            }
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)?;

    let schema = ChannelSchema {
        units: ds.units.clone(),
        sample_rate_hz: Some(ds.sample_rate),
        angle_unit: AngleUnit::Degrees,
    };
    let meta = meta_path(path);
    fs::write(&meta, serde_json::to_string_pretty(&schema)? + "\n").map_err(|e| Error::io(&meta, e))?;
    Ok(())
}
