//! `oscl`: locate the sources of poorly damped grid oscillations from
//! multi-location phasor recordings.
//!
//! Exit codes: 0 success, 2 no dominant mode, 3 numerical or conditioning
//! refusal, 4 data or I/O problem, 5 usage or invalid parameters. Every
//! failure writes one JSON line to stderr.

mod plotdata;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use oscl_core::baselines::{def_energy, qv_phase, qv_phase_sweep, DefResult, QvOptions, QvPhaseResult, QvWindow};
use oscl_core::csvio::{load_event, write_event_csv};
use oscl_core::pipeline::{dataset_fingerprint, prepare_event, run_analysis, AnalysisConfig, TOOL_VERSION};
use oscl_core::signal::{FilterSpec, SpectrumSource};
use oscl_core::synth::{generate_event, SynthScenario};
use oscl_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "oscl", version, about = "Oscillation source location from synchrophasor data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full pipeline: spectral peak, EDMD participation ranking, optional baselines.
    Analyze(AnalyzeArgs),
    /// Dissipating energy flow per location.
    Def(BaselineArgs),
    /// Reactive power / voltage phase alignment per location.
    Qv(QvArgs),
    /// Generate a synthetic event with a planted source.
    Synth(SynthArgs),
    /// Write tidy CSV files for plotting a report.
    Plotdata(plotdata::PlotdataArgs),
}

#[derive(Args, Debug, Clone)]
struct PipelineArgs {
    /// Wide CSV event file (a `<name>.meta.json` sidecar is read if present).
    #[arg(long)]
    input: PathBuf,
    /// JSON file with analysis parameters, or a previous report to replay.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Analysis window `START:END` in seconds.
    #[arg(long, value_parser = parse_pair)]
    window: Option<(f64, f64)>,
    /// Lowest analyzable frequency (Hz) for the window-length rule.
    #[arg(long)]
    f_min: Option<f64>,
    /// Largest missing or flat-lined fraction before a location is dropped.
    #[arg(long)]
    max_gap: Option<f64>,
    /// Low-pass corner in Hz, or `none`.
    #[arg(long)]
    lowpass: Option<String>,
    /// Band searched for the dominant peak, `LO:HI` Hz.
    #[arg(long, value_parser = parse_pair)]
    search_band: Option<(f64, f64)>,
    /// Signals feeding the peak search.
    #[arg(long, value_enum)]
    spectrum: Option<SpectrumArg>,
    /// Band-pass edges as multiples of the detected frequency, `LO:HI`.
    #[arg(long, value_parser = parse_pair)]
    band_rel: Option<(f64, f64)>,
    /// Fixed band-pass edges in Hz, `LO:HI`; overrides --band-rel.
    #[arg(long, value_parser = parse_pair)]
    band_abs: Option<(f64, f64)>,
    /// Butterworth prototype order for both filters (2, 4, 6 or 8).
    #[arg(long)]
    order: Option<usize>,
    /// Retained fraction of the filtered record, `START:END`.
    #[arg(long, value_parser = parse_pair)]
    crop: Option<(f64, f64)>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: PipelineArgs,
    /// Truncation rank: `auto` (elbow) or a positive integer.
    #[arg(long)]
    rank: Option<String>,
    /// Comma-separated baselines to add: `def`, `qv`.
    #[arg(long, value_delimiter = ',')]
    baselines: Vec<BaselineName>,
    /// Q–V in-phase threshold in degrees.
    #[arg(long)]
    qv_threshold: Option<f64>,
    /// Highest power of P in the dictionary.
    #[arg(long)]
    p_degree: Option<u32>,
    /// Highest power of Q in the dictionary.
    #[arg(long)]
    q_degree: Option<u32>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    common: PipelineArgs,
}

#[derive(Args, Debug)]
struct QvArgs {
    #[command(flatten)]
    common: PipelineArgs,
    /// In-phase threshold in degrees.
    #[arg(long)]
    threshold: Option<f64>,
    /// Window-sensitivity sweep `LENGTH:STEP` in seconds.
    #[arg(long, value_parser = parse_pair)]
    sweep: Option<(f64, f64)>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scenario JSON; flags below override its fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Number of measured locations.
    #[arg(long)]
    locations: Option<usize>,
    /// Location id of the planted source.
    #[arg(long)]
    source: Option<u32>,
    /// Mode frequency in Hz.
    #[arg(long)]
    freq: Option<f64>,
    /// Mode damping ratio.
    #[arg(long)]
    damping: Option<f64>,
    /// Sustained forced oscillation instead of a damped mode.
    #[arg(long)]
    forced: bool,
    /// Signal-to-noise ratio of the added measurement noise, in dB.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Record length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Reporting rate in samples per second.
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Oscillation amplitude at the source, per unit.
    #[arg(long)]
    amplitude: Option<f64>,
    /// Seed for the noise generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; the metadata sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Also write the ground truth as JSON.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineName {
    Def,
    Qv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SpectrumArg {
    Magnitudes,
    Pq,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected `A:B`, got `{s}`"))?;
    let p = |x: &str| {
        x.trim()
            .parse::<f64>()
            .map_err(|e| format!("`{x}` is not a number: {e}"))
    };
    Ok((p(a)?, p(b)?))
}

/// Loads `--params`: either bare parameters or a report carrying them.
fn load_params(path: &Path) -> Result<AnalysisConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let params = match value.get("parameters") {
        Some(p) => p.clone(),
        None => value,
    };
    Ok(serde_json::from_value(params)?)
}

impl PipelineArgs {
    fn config(&self) -> Result<AnalysisConfig> {
        let mut cfg = match &self.params {
            Some(p) => load_params(p)?,
            None => AnalysisConfig::default(),
        };
        if let Some(w) = self.window {
            cfg.window = Some(w);
        }
        if let Some(f) = self.f_min {
            cfg.f_min_hz = f;
        }
        if let Some(g) = self.max_gap {
            cfg.max_gap_fraction = g;
        }
        if let Some(lp) = &self.lowpass {
            cfg.lowpass_hz = if lp.eq_ignore_ascii_case("none") {
                None
            } else {
                Some(lp.parse().map_err(|_| {
                    Error::Validation(format!("--lowpass expects a frequency or `none`, got `{lp}`"))
                })?)
            };
        }
        if let Some(b) = self.search_band {
            cfg.search_band = b;
        }
        if let Some(s) = self.spectrum {
            cfg.spectrum_source = match s {
                SpectrumArg::Magnitudes => SpectrumSource::Magnitudes,
                SpectrumArg::Pq => SpectrumSource::Pq,
            };
        }
        if let Some(b) = self.band_rel {
            cfg.band_rel = b;
            cfg.band_abs = None;
        }
        if let Some(b) = self.band_abs {
            cfg.band_abs = Some(b);
        }
        if let Some(o) = self.order {
            cfg.lowpass_order = o;
            cfg.bandpass_order = o;
        }
        if let Some(c) = self.crop {
            cfg.crop = c;
        }
        Ok(cfg)
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n")).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Common header of the single-baseline reports.
#[derive(Serialize)]
struct BaselineReport<T: Serialize> {
    tool_version: &'static str,
    dataset_fingerprint: String,
    parameters: AnalysisConfig,
    window: (f64, f64),
    f_s: f64,
    filter_specs: Vec<FilterSpec>,
    warnings: Vec<String>,
    #[serde(flatten)]
    result: T,
}

#[derive(Serialize)]
struct DefBody {
    def: DefResult,
}

#[derive(Serialize)]
struct QvBody {
    qv: QvPhaseResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<Vec<QvWindow>>,
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let mut cfg = a.common.config()?;
    if let Some(r) = &a.rank {
        cfg.rank = if r.eq_ignore_ascii_case("auto") {
            None
        } else {
            match r.parse::<usize>() {
                Ok(n) if n > 0 => Some(n),
                _ => return Err(Error::Validation(format!("--rank expects `auto` or a positive integer, got `{r}`"))),
            }
        };
    }
    if !a.baselines.is_empty() {
        cfg.def = a.baselines.contains(&BaselineName::Def);
        cfg.qv = a.baselines.contains(&BaselineName::Qv);
    }
    if let Some(t) = a.qv_threshold {
        cfg.qv_threshold_deg = t;
    }
    if let Some(d) = a.p_degree {
        cfg.dictionary.p_max_degree = d;
    }
    if let Some(d) = a.q_degree {
        cfg.dictionary.q_max_degree = d;
    }
    let ds = load_event(&a.common.input)?;
    let report = run_analysis(&ds, &cfg)?;
    write_output(a.common.out.as_deref(), &report.to_json()?)
}

fn cmd_def(a: &BaselineArgs) -> Result<()> {
    let mut cfg = a.common.config()?;
    cfg.def = true;
    let ds = load_event(&a.common.input)?;
    let prep = prepare_event(&ds, &cfg)?;
    let def = def_energy(&prep.filtered, &prep.band, cfg.crop)?;
    let report = BaselineReport {
        tool_version: TOOL_VERSION,
        dataset_fingerprint: dataset_fingerprint(&ds),
        window: prep.windowed.window,
        f_s: prep.f_s(),
        filter_specs: prep.filter_specs(),
        warnings: prep.warnings.clone(),
        parameters: cfg,
        result: DefBody { def },
    };
    write_output(a.common.out.as_deref(), &serde_json::to_string_pretty(&report)?)
}

fn cmd_qv(a: &QvArgs) -> Result<()> {
    let mut cfg = a.common.config()?;
    cfg.qv = true;
    if let Some(t) = a.threshold {
        cfg.qv_threshold_deg = t;
    }
    let ds = load_event(&a.common.input)?;
    let prep = prepare_event(&ds, &cfg)?;
    let opts = QvOptions {
        threshold_deg: cfg.qv_threshold_deg,
        crop: cfg.crop,
        band: Some(prep.band.clone()),
    };
    let qv = qv_phase(&prep.filtered, prep.f_s(), &opts)?;
    let sweep = a
        .sweep
        .map(|(len, step)| qv_phase_sweep(&prep.filtered, prep.f_s(), &opts, len, step))
        .transpose()?;
    let report = BaselineReport {
        tool_version: TOOL_VERSION,
        dataset_fingerprint: dataset_fingerprint(&ds),
        window: prep.windowed.window,
        f_s: prep.f_s(),
        filter_specs: prep.filter_specs(),
        warnings: prep.warnings.clone(),
        parameters: cfg,
        result: QvBody { qv, sweep },
    };
    write_output(a.common.out.as_deref(), &serde_json::to_string_pretty(&report)?)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut s = match &a.scenario {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str::<SynthScenario>(&text)?
        }
        None => SynthScenario::default(),
    };
    if let Some(v) = a.locations {
        s.n_locations = v;
    }
    if let Some(v) = a.source {
        s.source_location = v;
    }
    if let Some(v) = a.freq {
        s.mode_freq_hz = v;
    }
    if let Some(v) = a.damping {
        s.mode_damping = v;
    }
    if a.forced {
        s.forced = true;
    }
    if let Some(v) = a.snr_db {
        s.noise_snr_db = v;
    }
    if let Some(v) = a.duration {
        s.duration_s = v;
    }
    if let Some(v) = a.sample_rate {
        s.sample_rate_hz = v;
    }
    if let Some(v) = a.amplitude {
        s.amplitude = v;
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    let (ds, truth) = generate_event(&s)?;
    write_event_csv(&ds, &a.out)?;
    if let Some(p) = &a.truth {
        #[derive(Serialize)]
        struct Truth<'a> {
            scenario: &'a SynthScenario,
            ground_truth: &'a oscl_core::synth::GroundTruth,
        }
        let text = serde_json::to_string_pretty(&Truth {
            scenario: &s,
            ground_truth: &truth,
        })?;
        write_output(Some(p), &text)?;
    }
    Ok(())
}

fn configure_threads() {
    faer::set_global_parallelism(faer::Par::Seq);
    if let Some(n) = std::env::var("OSCL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
    {
        // fails only if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let record = serde_json::json!({
        "error": kind,
        "message": message,
        "exit_code": code,
    });
    eprintln!("{record}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            return fail("usage", first, 5);
        }
    };
    configure_threads();
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Def(a) => cmd_def(a),
        Command::Qv(a) => cmd_qv(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Plotdata(a) => plotdata::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string(), e.exit_code() as u8),
    }
}
