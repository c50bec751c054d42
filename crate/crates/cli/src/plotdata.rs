//! Tidy CSV files reproducing the content of the standard figures:
//! windowed phasors, power signals, participation bars, DEF bars and Q–V
//! phase verdicts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};

use oscl_core::csvio::load_event;
use oscl_core::lifting::compute_pq;
use oscl_core::pipeline::{dataset_fingerprint, prepare_event, AnalysisReport};
use oscl_core::signal::apply_zero_phase;
use oscl_core::{Error, Result};

#[derive(Args, Debug)]
pub struct PlotdataArgs {
    /// Report written by `analyze`.
    #[arg(long)]
    report: PathBuf,
    /// The event file the report was computed from.
    #[arg(long)]
    input: PathBuf,
    /// Directory receiving the CSV files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Files to write; defaults to every file the report supports.
    #[arg(long, value_delimiter = ',')]
    plots: Vec<Plot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Plot {
    Timeseries,
    Pq,
    Participation,
    Def,
    Qv,
}

const README: &str = "\
# Plot data

All files are comma-separated with a header row.

- `timeseries_<loc>.csv`: `time_s, v_mag, v_angle_deg, i_mag, i_angle_deg`;
  windowed phasors of one location, angles unwrapped.
- `pq_<loc>.csv`: `time_s, p, q, p_band, q_band`; active and reactive power
  after the low-pass stage, and their band-passed oscillatory parts.
- `participation.csv`: `location, score`; per-location participation in the
  target mode, normalized so the largest score is 1.
- `def.csv`: `location, energy_rate`; dissipating-energy trend, positive for
  locations exporting oscillating energy.
- `qv.csv`: `location, phase_deg, coherence, in_phase`; phase of reactive
  power relative to voltage magnitude at the oscillation frequency.
";

fn create(dir: &Path, name: &str) -> Result<(PathBuf, fs::File)> {
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok((path, file))
}

fn write_rows(dir: &Path, name: &str, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let (path, file) = create(dir, name)?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::Io {
        path: path.clone(),
        source: e,
    };
    writeln!(w, "{header}").map_err(io)?;
    for r in rows {
        writeln!(w, "{r}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn run(a: &PlotdataArgs) -> Result<()> {
    let text = fs::read_to_string(&a.report).map_err(|e| Error::Io {
        path: a.report.clone(),
        source: e,
    })?;
    let report = AnalysisReport::from_json(&text)?;
    let baselines = report.baselines.clone().unwrap_or_default();
    let plots = if a.plots.is_empty() {
        let mut p = vec![Plot::Timeseries, Plot::Pq, Plot::Participation];
        if baselines.def.is_some() {
            p.push(Plot::Def);
        }
        if baselines.qv.is_some() {
            p.push(Plot::Qv);
        }
        p
    } else {
        a.plots.clone()
    };
    if plots.contains(&Plot::Def) && baselines.def.is_none() {
        return Err(Error::Validation("report has no DEF section; rerun analyze with --baselines def".into()));
    }
    if plots.contains(&Plot::Qv) && baselines.qv.is_none() {
        return Err(Error::Validation("report has no Q-V section; rerun analyze with --baselines qv".into()));
    }

    let ds = load_event(&a.input)?;
    if dataset_fingerprint(&ds) != report.dataset_fingerprint {
        return Err(Error::Data(format!(
            "{} does not match the dataset fingerprint recorded in the report",
            a.input.display()
        )));
    }
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io {
        path: a.out_dir.clone(),
        source: e,
    })?;
    let dir = a.out_dir.as_path();
    let prep = prepare_event(&ds, &report.parameters)?;

    if plots.contains(&Plot::Timeseries) {
        let w = &prep.windowed;
        let t = w.times();
        for loc in &w.locations {
            let (v, i) = (&loc.voltage, &loc.current);
            write_rows(
                dir,
                &format!("timeseries_{}.csv", loc.id),
                "time_s,v_mag,v_angle_deg,i_mag,i_angle_deg",
                (0..t.len()).map(|k| {
                    format!(
                        "{:.6},{},{},{},{}",
                        t[k],
                        v.magnitude[k],
                        v.angle[k].to_degrees(),
                        i.magnitude[k],
                        i.angle[k].to_degrees()
                    )
                }),
            )?;
        }
    }
    if plots.contains(&Plot::Pq) {
        let f = &prep.filtered;
        let t = f.times();
        for loc in &f.locations {
            let (p, q) = compute_pq(&loc.voltage, &loc.current)?;
            let pb = apply_zero_phase(&prep.band, &p)?;
            let qb = apply_zero_phase(&prep.band, &q)?;
            write_rows(
                dir,
                &format!("pq_{}.csv", loc.id),
                "time_s,p,q,p_band,q_band",
                (0..t.len()).map(|k| format!("{:.6},{},{},{},{}", t[k], p[k], q[k], pb[k], qb[k])),
            )?;
        }
    }
    if plots.contains(&Plot::Participation) {
        write_rows(
            dir,
            "participation.csv",
            "location,score",
            report
                .participation
                .p_location
                .iter()
                .map(|l| format!("{},{}", l.location_id, l.score)),
        )?;
    }
    if let (true, Some(def)) = (plots.contains(&Plot::Def), &baselines.def) {
        write_rows(
            dir,
            "def.csv",
            "location,energy_rate",
            def.per_location
                .iter()
                .map(|l| format!("{},{}", l.location_id, l.energy_rate)),
        )?;
    }
    if let (true, Some(qv)) = (plots.contains(&Plot::Qv), &baselines.qv) {
        write_rows(
            dir,
            "qv.csv",
            "location,phase_deg,coherence,in_phase",
            qv.per_location
                .iter()
                .map(|l| format!("{},{},{},{}", l.location_id, l.phase_deg, l.coherence, l.in_phase)),
        )?;
    }
    let readme = dir.join("README.md");
    fs::write(&readme, README).map_err(|e| Error::Io {
        path: readme.clone(),
        source: e,
    })
}
