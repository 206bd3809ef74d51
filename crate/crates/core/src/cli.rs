//! Command-line surface: config ingestion, experiment execution and CSV
//! reports.
//!
//! Exit codes: 0 success, 1 I/O or internal failure, 2 configuration error,
//! 3 unattainable SLA, 4 validation gate failed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::error::QnError;
use crate::planner::{SlaThresholds, DEFAULT_ITERATION_CAP};
use crate::qn::{predict_response, ArrivalRates, BaselineSnapshot, Configuration, DemandMatrix};
use crate::seed::sub_seed;
use crate::sim::des::{des_validate, DesSettings, Discipline, DEFAULT_BATCHES, DEFAULT_WARMUP_FRACTION, MIN_COMPLETIONS};
use crate::sim::harness::{
    run_scenario, DemandSpec, RunError, RunRecord, RunSummary, ScenarioSpec, SlaSpec, WorkloadSpec,
    DEFAULT_HORIZON, DEFAULT_THRESHOLD_MULTIPLIER,
};
use crate::telemetry::NoiseSpec;
use crate::workload::ClassLaw;

pub const OUT_ENV: &str = "QNAS_OUT";

/// Relative error allowed between simulated and analytic residence times.
pub const VALIDATION_GATE: f64 = 0.05;

#[derive(Debug, Parser)]
#[command(name = "qnas", version, about = "QoS-aware autoscaling planner and experiment harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario; writes timeseries.csv and summary.csv.
    Run(CommonArgs),
    /// Run a grid of scenarios; writes sweep.csv.
    Sweep(CommonArgs),
    /// Compare the analytic model with discrete-event simulation; writes validation.csv.
    Validate(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides master_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to output_dir from the config, then $QNAS_OUT, then ".".
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("unattainable SLA: {0}")]
    Unattainable(String),
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("{0}")]
    Run(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Unattainable(_) => 3,
            CliError::ValidationFailed(_) => 4,
            CliError::Run(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e))
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e.qn_error() {
            QnError::UnattainableSla { .. } => CliError::Unattainable(e.to_string()),
            _ => match e {
                RunError::Setup(inner) => CliError::Config(inner.to_string()),
                other => CliError::Run(other.to_string()),
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Config file

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub quiet: bool,
    pub scenario: Option<ScenarioSection>,
    pub sweep: Option<SweepSection>,
    pub validate: Option<ValidateSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub classes: Option<usize>,
    pub stations: Option<usize>,
    pub horizon: Option<usize>,
    pub window: Option<f64>,
    pub workload: Option<WorkloadEntry>,
    pub demands: Option<DemandEntry>,
    pub sla: Option<SlaEntry>,
    pub noise: Option<NoiseSpec>,
    pub sample_arrivals: Option<bool>,
    pub initial_config: Option<Configuration>,
    pub iteration_cap: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadEntry {
    Default,
    Law(Vec<ClassLaw>),
    /// Constant per-class rates.
    Constant(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandEntry {
    Random,
    Matrix(DemandMatrix),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SlaEntry {
    Multiplier(f64),
    Thresholds(SlaThresholds),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub classes: Vec<usize>,
    pub stations: Vec<usize>,
    pub seeds_per_cell: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineEntry {
    pub ref_config: Configuration,
    pub rates: ArrivalRates,
    pub demands: DemandMatrix,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub baseline: BaselineEntry,
    pub configs: Vec<Configuration>,
    pub disciplines: Option<Vec<Discipline>>,
    /// Target post-warmup completions of the rarest class.
    pub completions: Option<f64>,
    /// Explicit simulated time; overrides `completions`.
    pub run_length: Option<f64>,
    pub warmup_fraction: Option<f64>,
    pub batches: Option<usize>,
}

fn notice(what: &str, value: impl std::fmt::Display) {
    info!("{what} not set; using default {value}");
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    fn master_seed(&self, override_seed: Option<u64>) -> Result<u64, CliError> {
        override_seed
            .or(self.master_seed)
            .ok_or_else(|| CliError::Config("missing required key `master_seed`".into()))
    }
}

impl ScenarioSection {
    /// Resolves the section into a scenario, taking C and K from the
    /// arguments when given.
    pub fn resolve(
        &self,
        classes: Option<usize>,
        stations: Option<usize>,
        master_seed: u64,
    ) -> Result<ScenarioSpec, CliError> {
        let missing = |key: &str| CliError::Config(format!("missing required key `scenario.{key}`"));
        let classes = classes.or(self.classes).ok_or_else(|| missing("classes"))?;
        let stations = stations.or(self.stations).ok_or_else(|| missing("stations"))?;
        let horizon = self.horizon.unwrap_or_else(|| {
            notice("scenario.horizon", DEFAULT_HORIZON);
            DEFAULT_HORIZON
        });
        let window = self.window.unwrap_or_else(|| {
            notice("scenario.window", 1.0);
            1.0
        });
        let workload = match &self.workload {
            None => {
                notice("scenario.workload", "\"default\"");
                WorkloadSpec::Default
            }
            Some(WorkloadEntry::Default) => WorkloadSpec::Default,
            Some(WorkloadEntry::Law(classes)) => WorkloadSpec::Law(
                crate::workload::WorkloadLaw::new(classes.clone())
                    .map_err(|e| CliError::Config(e.to_string()))?,
            ),
            Some(WorkloadEntry::Constant(rates)) => WorkloadSpec::Law(
                crate::workload::WorkloadLaw::constant(rates)
                    .map_err(|e| CliError::Config(e.to_string()))?,
            ),
        };
        let demands = match &self.demands {
            None => {
                notice("scenario.demands", "\"random\"");
                DemandSpec::Random
            }
            Some(DemandEntry::Random) => DemandSpec::Random,
            Some(DemandEntry::Matrix(m)) => DemandSpec::Matrix(m.clone()),
        };
        let sla = match &self.sla {
            None => {
                notice("scenario.sla", format!("multiplier {DEFAULT_THRESHOLD_MULTIPLIER}"));
                SlaSpec::Multiplier(DEFAULT_THRESHOLD_MULTIPLIER)
            }
            Some(SlaEntry::Multiplier(m)) => SlaSpec::Multiplier(*m),
            Some(SlaEntry::Thresholds(t)) => SlaSpec::Thresholds(t.clone()),
        };
        let spec = ScenarioSpec {
            classes,
            stations,
            horizon,
            window,
            workload,
            demands,
            sla,
            noise: self.noise.unwrap_or_default(),
            sample_arrivals: self.sample_arrivals.unwrap_or(false),
            initial_config: self.initial_config.clone(),
            master_seed,
            iteration_cap: self.iteration_cap.unwrap_or(DEFAULT_ITERATION_CAP),
        };
        spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

// ---------------------------------------------------------------------------
// CSV output

/// Formats with 9 significant digits, without exponent for ordinary magnitudes.
pub fn fmt_value(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("round-trips");
    format!("{rounded}")
}

/// Writes `# meta` and the CSV body to `path` through a temporary file in the
/// same directory.
fn write_csv_atomic(path: &Path, meta: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    writeln!(tmp, "# {meta}")?;
    {
        let mut w = csv::Writer::from_writer(&mut tmp);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "C", "K", "acq_max", "acq_avg", "rel_max", "rel_avg", "inst_min", "inst_max", "inst_total",
    "static_total", "ratio",
];

pub fn summary_row(s: &RunSummary) -> Vec<String> {
    vec![
        s.classes.to_string(),
        s.stations.to_string(),
        s.acquire_max.to_string(),
        fmt_value(s.acquire_avg),
        s.release_max.to_string(),
        fmt_value(s.release_avg),
        s.instances_min.to_string(),
        s.instances_max.to_string(),
        s.instances_total.to_string(),
        s.static_total.to_string(),
        fmt_value(s.dynamic_static_ratio),
    ]
}

pub fn timeseries_header(classes: usize, stations: usize) -> Vec<String> {
    let mut h = vec!["step".to_string()];
    h.extend((1..=classes).map(|c| format!("lambda_{c}")));
    h.extend((1..=classes).map(|c| format!("R_{c}")));
    h.extend((1..=classes).map(|c| format!("Rmax_{c}")));
    h.extend((1..=stations).map(|k| format!("N_{k}")));
    h.extend(["total_instances", "acquire_iters", "release_iters"].map(String::from));
    h
}

pub fn timeseries_rows(run: &RunRecord) -> Vec<Vec<String>> {
    run.steps
        .iter()
        .map(|s| {
            let mut row = vec![s.step.to_string()];
            row.extend(s.rates.as_slice().iter().map(|&x| fmt_value(x)));
            row.extend(s.predicted.iter().map(|&x| fmt_value(x)));
            row.extend(s.thresholds.iter().map(|&x| fmt_value(x)));
            row.extend(s.config_after.counts().iter().map(u32::to_string));
            row.push(s.total_instances.to_string());
            row.push(s.acquire_iterations.to_string());
            row.push(s.release_iterations.to_string());
            row
        })
        .collect()
}

fn strings(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

// ---------------------------------------------------------------------------
// Commands

fn output_dir(args: &CommonArgs, config: &ConfigFile) -> PathBuf {
    args.out
        .clone()
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub warnings: usize,
}

pub fn cmd_run(args: &CommonArgs) -> Result<Report, CliError> {
    let config = ConfigFile::load(&args.config)?;
    let seed = config.master_seed(args.seed)?;
    let section = config
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Config("missing required key `scenario`".into()))?;
    let spec = section.resolve(None, None, seed)?;
    let out = output_dir(args, &config);

    let run = run_scenario(&spec)?;
    let meta = format!(
        "command=run C={} K={} T={} seed={}",
        spec.classes, spec.stations, spec.horizon, seed
    );
    let ts = out.join("timeseries.csv");
    write_csv_atomic(&ts, &meta, &timeseries_header(spec.classes, spec.stations), &timeseries_rows(&run))?;
    let summary = out.join("summary.csv");
    write_csv_atomic(&summary, &meta, &strings(&SUMMARY_COLUMNS), &[summary_row(&run.summary)])?;
    info!(
        "run finished: {} steps, ratio {}",
        spec.horizon,
        fmt_value(run.summary.dynamic_static_ratio)
    );
    Ok(Report {
        files: vec![ts, summary],
        warnings: 0,
    })
}

/// Seed of replicate `r` in a sweep cell; replicate 0 uses the master seed.
pub fn replicate_seed(master: u64, replicate: u32) -> u64 {
    master.wrapping_add(u64::from(replicate))
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub classes: usize,
    pub stations: usize,
    pub seed: u64,
    pub outcome: Result<RunSummary, String>,
}

/// Runs every (C, K, replicate) cell, in parallel, returning them in grid order.
pub fn run_sweep(
    section: &ScenarioSection,
    sweep: &SweepSection,
    master_seed: u64,
) -> Result<Vec<SweepCell>, CliError> {
    if sweep.classes.is_empty() || sweep.stations.is_empty() {
        return Err(CliError::Config("sweep grid is empty".into()));
    }
    let replicates = sweep.seeds_per_cell.unwrap_or_else(|| {
        notice("sweep.seeds_per_cell", 1);
        1
    });
    if replicates == 0 {
        return Err(CliError::Config("sweep.seeds_per_cell must be >= 1".into()));
    }
    let mut jobs = Vec::new();
    for &c in &sweep.classes {
        for &k in &sweep.stations {
            for r in 0..replicates {
                jobs.push((c, k, replicate_seed(master_seed, r)));
            }
        }
    }
    Ok(jobs
        .into_par_iter()
        .map(|(classes, stations, seed)| {
            let outcome = section
                .resolve(Some(classes), Some(stations), seed)
                .map_err(|e| e.to_string())
                .and_then(|spec| run_scenario(&spec).map_err(|e| e.to_string()))
                .map(|run| run.summary);
            SweepCell {
                classes,
                stations,
                seed,
                outcome,
            }
        })
        .collect())
}

pub fn cmd_sweep(args: &CommonArgs) -> Result<Report, CliError> {
    let config = ConfigFile::load(&args.config)?;
    let seed = config.master_seed(args.seed)?;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("missing required key `sweep`".into()))?;
    let section = config.scenario.clone().unwrap_or_else(|| {
        notice("scenario", "default randomized scenario");
        ScenarioSection::default()
    });
    let out = output_dir(args, &config);

    let cells = run_sweep(&section, sweep, seed)?;
    let mut header = strings(&SUMMARY_COLUMNS);
    header.extend(strings(&["seed", "status"]));
    let mut warnings = 0;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|cell| match &cell.outcome {
            Ok(summary) => {
                let mut row = summary_row(summary);
                row.push(cell.seed.to_string());
                row.push("OK".into());
                row
            }
            Err(msg) => {
                warnings += 1;
                warn!("cell C={} K={} seed={} failed: {msg}", cell.classes, cell.stations, cell.seed);
                let mut row = vec![cell.classes.to_string(), cell.stations.to_string()];
                row.extend(std::iter::repeat_n(String::new(), SUMMARY_COLUMNS.len() - 2));
                row.push(cell.seed.to_string());
                row.push("ERROR".into());
                row
            }
        })
        .collect();
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
    let meta = format!(
        "command=sweep C={} K={} seed={} cells={}",
        join(&sweep.classes),
        join(&sweep.stations),
        seed,
        rows.len()
    );
    let path = out.join("sweep.csv");
    write_csv_atomic(&path, &meta, &header, &rows)?;
    if warnings > 0 {
        warn!("{warnings} sweep cell(s) failed");
    }
    Ok(Report {
        files: vec![path],
        warnings,
    })
}

pub const VALIDATION_COLUMNS: [&str; 9] = [
    "config",
    "discipline",
    "station",
    "class",
    "analytic_R",
    "simulated_R",
    "rel_error",
    "ci_halfwidth",
    "utilization",
];

/// One compared quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub config: usize,
    pub discipline: Discipline,
    /// `None` for the end-to-end row of a class.
    pub station: Option<usize>,
    pub class: usize,
    pub analytic: f64,
    pub simulated: f64,
    pub half_width: f64,
    pub utilization: Option<f64>,
}

impl ValidationRow {
    pub fn rel_error(&self) -> f64 {
        (self.simulated - self.analytic).abs() / self.analytic
    }
}

pub fn run_validation(section: &ValidateSection, master_seed: u64) -> Result<Vec<ValidationRow>, CliError> {
    let cfg_err = |e: QnError| CliError::Config(e.to_string());
    let b = &section.baseline;
    let base = BaselineSnapshot::new(b.ref_config.clone(), b.rates.clone(), b.demands.clone()).map_err(cfg_err)?;
    let disciplines = section.disciplines.clone().unwrap_or_else(|| {
        notice("validate.disciplines", "[\"processor-sharing\"]");
        vec![Discipline::ProcessorSharing]
    });
    let warmup = section.warmup_fraction.unwrap_or(DEFAULT_WARMUP_FRACTION);
    let batches = section.batches.unwrap_or(DEFAULT_BATCHES);
    let run_length = match section.run_length {
        Some(l) => l,
        None => {
            let target = section.completions.unwrap_or_else(|| {
                notice("validate.completions", 100_000);
                100_000.0
            });
            DesSettings::run_length_for(&base, warmup, target / MIN_COMPLETIONS)
        }
    };
    let des_seed = sub_seed(master_seed, "des");

    // Check every target first so a bad entry fails before any simulation.
    let predictions = section
        .configs
        .iter()
        .map(|config| predict_response(&base, config).map_err(cfg_err))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows = Vec::new();
    for (i, (config, predicted)) in section.configs.iter().zip(&predictions).enumerate() {
        for &discipline in &disciplines {
            let settings = DesSettings {
                discipline,
                run_length,
                warmup_fraction: warmup,
                batches,
                seed: sub_seed(des_seed, &format!("{i}/{}", discipline.name())),
            };
            let report = des_validate(&base, config, &settings).map_err(cfg_err)?;
            for c in 0..base.classes() {
                for k in 0..base.stations() {
                    if let Some(est) = report.residence[c][k] {
                        rows.push(ValidationRow {
                            config: i,
                            discipline,
                            station: Some(k),
                            class: c,
                            analytic: predicted.per_class_station[c][k],
                            simulated: est.mean,
                            half_width: est.half_width,
                            utilization: Some(report.utilization[k].mean),
                        });
                    }
                }
                if let Some(est) = report.response[c] {
                    rows.push(ValidationRow {
                        config: i,
                        discipline,
                        station: None,
                        class: c,
                        analytic: predicted.per_class[c],
                        simulated: est.mean,
                        half_width: est.half_width,
                        utilization: None,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn cmd_validate(args: &CommonArgs) -> Result<Report, CliError> {
    let config = ConfigFile::load(&args.config)?;
    let seed = config.master_seed(args.seed)?;
    let section = config
        .validate
        .as_ref()
        .ok_or_else(|| CliError::Config("missing required key `validate`".into()))?;
    let out = output_dir(args, &config);

    let rows = run_validation(section, seed)?;
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.config.to_string(),
                r.discipline.name().to_string(),
                r.station.map_or("all".to_string(), |k| (k + 1).to_string()),
                (r.class + 1).to_string(),
                fmt_value(r.analytic),
                fmt_value(r.simulated),
                fmt_value(r.rel_error()),
                fmt_value(r.half_width),
                r.utilization.map_or(String::new(), fmt_value),
            ]
        })
        .collect();
    let b = &section.baseline;
    let meta = format!(
        "command=validate C={} K={} configs={} seed={}",
        b.demands.classes(),
        b.demands.stations(),
        section.configs.len(),
        seed
    );
    let path = out.join("validation.csv");
    write_csv_atomic(&path, &meta, &strings(&VALIDATION_COLUMNS), &body)?;

    let failing = rows
        .iter()
        .filter(|r| r.discipline == Discipline::ProcessorSharing && r.rel_error() > VALIDATION_GATE)
        .count();
    if failing > 0 {
        return Err(CliError::ValidationFailed(format!(
            "{failing} processor-sharing row(s) exceed {VALIDATION_GATE} relative error; see {}",
            path.display()
        )));
    }
    Ok(Report {
        files: vec![path],
        warnings: 0,
    })
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (Command::Run(args) | Command::Sweep(args) | Command::Validate(args)) = &cli.command;
    let quiet = args.quiet || ConfigFile::load(&args.config).is_ok_and(|c| c.quiet);
    init_logging(quiet);
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(report) => {
            if report.warnings > 0 && !quiet {
                eprintln!("completed with {} warning(s)", report.warnings);
            }
            0
        }
        Err(e) => {
            eprintln!("qnas: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { "error" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}
