//! The `geflab` command-line front end. `run` is the whole program; `main`
//! only wires it to the process streams.

// Negated comparisons are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use geflab_core::experiments::{
    estimate_event_probability, fit_decay_exponent, jensen_sweep, omega_verification, probe_sweep, EventSpec,
    McEstimate, PlacementKind,
};
use geflab_core::{find_zeros, sample_gef, GefError, TruncationPolicy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Environment variable that overrides `--workers`.
pub const WORKERS_ENV: &str = "GEFLAB_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "geflab", version, about = "Hole probability and zero statistics of the Gaussian entire function")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the hole probability p(r) and fit its decay exponent.
    Holes(Common),
    /// Estimate P(|n(r)/r^2 - 1| >= delta).
    Counts(Common),
    /// Estimate P(|log M(r)/r^2 - 1/2| >= delta).
    Logm(Common),
    /// Estimate the circle-mean events (low signed mean, large absolute mean).
    Circlemean(Common),
    /// Jensen formula residuals over random samples.
    Jensen(Common),
    /// Exact omega-event probability and checks on conditional samples.
    Omega(Common),
    /// Poisson-kernel probe deviation over a list of delta values.
    Probe {
        #[command(flatten)]
        common: Common,
        /// Probe point placement: centers, uniform or adversarial.
        #[arg(long, default_value = "uniform", value_parser = parse_placement)]
        placement: PlacementKind,
    },
    /// Fit -log p = A r^b to the estimates in a CSV produced by another command.
    Fit {
        #[command(flatten)]
        common: Common,
        /// CSV file to read.
        #[arg(long)]
        input: PathBuf,
    },
    /// Dump one sampled function as JSON.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Trial index within the seed.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Also locate and dump the zeros in the certified disc.
        #[arg(long)]
        dump_zeros: bool,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Holes(c)
            | Command::Counts(c)
            | Command::Logm(c)
            | Command::Circlemean(c)
            | Command::Jensen(c)
            | Command::Omega(c) => c,
            Command::Probe { common, .. } | Command::Fit { common, .. } | Command::Sample { common, .. } => common,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Comma-separated radii.
    #[arg(long = "r", value_delimiter = ',', num_args = 1..)]
    r: Vec<f64>,
    /// Deviation parameter; a comma-separated list for `probe`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    delta: Vec<f64>,
    /// Monte Carlo trials per point.
    #[arg(long)]
    trials: Option<u64>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write records here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn parse_placement(s: &str) -> Result<PlacementKind, String> {
    s.parse().map_err(|e: GefError| e.to_string())
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<GefError> for CliError {
    fn from(e: GefError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Serialize)]
struct EstimateRow {
    event: String,
    r: f64,
    delta: Option<f64>,
    trials: u64,
    successes: u64,
    uncertain: u64,
    p_hat: f64,
    p_low: f64,
    p_high: f64,
    ci_low: f64,
    ci_high: f64,
    log_p_hat: Option<f64>,
    seed: u64,
}

impl From<&McEstimate> for EstimateRow {
    fn from(e: &McEstimate) -> Self {
        EstimateRow {
            event: e.event_name.clone(),
            r: e.r,
            delta: e.delta,
            trials: e.trials,
            successes: e.successes,
            uncertain: e.uncertain,
            p_hat: e.p_hat,
            p_low: e.p_low_bound,
            p_high: e.p_high_bound,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            log_p_hat: e.log_p_hat(),
            seed: e.master_seed,
        }
    }
}

#[derive(Debug, Serialize)]
struct FitRow {
    event: String,
    window_min_r: f64,
    window_max_r: f64,
    amplitude: f64,
    exponent: f64,
    residual_rms: f64,
}

/// Serialized output: one or two homogeneous CSV blocks, or a single JSON array.
#[derive(Default)]
struct Records {
    csv: Vec<u8>,
    json: Vec<serde_json::Value>,
}

impl Records {
    fn block<T: Serialize>(&mut self, rows: &[T]) -> CliResult<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row)?;
            self.json.push(serde_json::to_value(row)?);
        }
        self.csv.extend(w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?);
        Ok(())
    }

    fn render(self, format: Format) -> CliResult<Vec<u8>> {
        Ok(match format {
            Format::Csv => self.csv,
            Format::Json => {
                let mut v = serde_json::to_vec_pretty(&self.json)?;
                v.push(b'\n');
                v
            }
        })
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl Common {
    fn radii(&self, default: &[f64]) -> CliResult<Vec<f64>> {
        let r = if self.r.is_empty() { default.to_vec() } else { self.r.clone() };
        if let Some(bad) = r.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
            return Err(usage(format!("radii must be positive, got {bad}")));
        }
        Ok(r)
    }

    fn trials(&self, default: u64) -> CliResult<u64> {
        match self.trials {
            Some(0) => Err(usage("--trials must be at least 1")),
            Some(t) => Ok(t),
            None => Ok(default),
        }
    }

    fn deltas(&self, default: &[f64]) -> CliResult<Vec<f64>> {
        let d = if self.delta.is_empty() { default.to_vec() } else { self.delta.clone() };
        if let Some(bad) = d.iter().find(|&&x| !(x > 0.0 && x <= 0.25)) {
            return Err(usage(format!("delta must lie in (0, 1/4], got {bad}")));
        }
        Ok(d)
    }

    fn single_delta(&self, default: f64) -> CliResult<f64> {
        let d = self.deltas(&[default])?;
        if d.len() != 1 {
            return Err(usage("this command takes a single --delta"));
        }
        Ok(d[0])
    }
}

fn estimate_rows(events: &[(EventSpec, Option<f64>)], radii: &[f64], trials: u64, seed: u64) -> CliResult<Vec<EstimateRow>> {
    let mut rows = Vec::new();
    for &r in radii {
        for &(event, delta) in events {
            let est = estimate_event_probability(event, r, delta, trials, seed)?;
            rows.push(EstimateRow::from(&est));
        }
    }
    Ok(rows)
}

/// Fits `-log p_hat` for each event with at least three usable points
/// (`0 < p_hat < 1`), in order of first appearance.
fn fit_rows(points: &[(String, f64, f64)], err: &mut Vec<u8>) -> CliResult<Vec<FitRow>> {
    let mut events: Vec<&str> = Vec::new();
    for (e, _, _) in points {
        if !events.contains(&e.as_str()) {
            events.push(e);
        }
    }
    let mut rows = Vec::new();
    for event in events {
        let mut window: Vec<(f64, f64)> = points
            .iter()
            .filter(|(e, _, p)| e == event && *p > 0.0 && *p < 1.0)
            .map(|&(_, r, p)| (r, -p.ln()))
            .collect();
        window.sort_by(|a, b| a.0.total_cmp(&b.0));
        window.dedup_by(|a, b| a.0 == b.0);
        if window.len() < 3 {
            writeln!(err, "note: {event}: only {} radii with 0 < p_hat < 1, no fit", window.len())?;
            continue;
        }
        let fit = fit_decay_exponent(&window)?;
        rows.push(FitRow {
            event: "fit".to_string(),
            window_min_r: window[0].0,
            window_max_r: window[window.len() - 1].0,
            amplitude: fit.amplitude,
            exponent: fit.exponent,
            residual_rms: fit.residual_rms,
        });
    }
    Ok(rows)
}

/// Reads `(event, r, p_hat)` from the estimate rows of a CSV written by this tool.
fn read_estimates(path: &PathBuf) -> CliResult<Vec<(String, f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut header: Option<csv::StringRecord> = None;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.get(0) == Some("event") {
            header = Some(rec);
            continue;
        }
        let Some(h) = &header else {
            return Err(CliError::Runtime(format!("{}: missing header row", path.display())));
        };
        let col = |name: &str| h.iter().position(|c| c == name).and_then(|i| rec.get(i));
        let (Some(event), Some(r), Some(p)) = (col("event"), col("r"), col("p_hat")) else {
            continue;
        };
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| CliError::Runtime(format!("{}: bad number {s:?}", path.display())))
        };
        out.push((event.to_string(), parse(r)?, parse(p)?));
    }
    Ok(out)
}

fn execute(command: &Command, err: &mut Vec<u8>) -> CliResult<(Vec<u8>, Option<PathBuf>)> {
    let mut records = Records::default();
    let common = command.common();
    match command {
        Command::Holes(c) => {
            let radii = c.radii(&[0.6, 0.8, 1.0, 1.2, 1.4])?;
            let rows = estimate_rows(&[(EventSpec::Hole, None)], &radii, c.trials(10_000)?, c.seed)?;
            let points: Vec<_> = rows.iter().map(|e| (e.event.clone(), e.r, e.p_hat)).collect();
            records.block(&rows)?;
            if radii.len() >= 3 {
                records.block(&fit_rows(&points, err)?)?;
            }
        }
        Command::Counts(c) => {
            let d = c.single_delta(0.25)?;
            let radii = c.radii(&[1.0, 1.5, 2.0, 2.5])?;
            records.block(&estimate_rows(&[(EventSpec::CountDeviation, Some(d))], &radii, c.trials(10_000)?, c.seed)?)?;
        }
        Command::Logm(c) => {
            let d = c.single_delta(0.25)?;
            let radii = c.radii(&[3.0])?;
            records.block(&estimate_rows(&[(EventSpec::LogMDeviation, Some(d))], &radii, c.trials(10_000)?, c.seed)?)?;
        }
        Command::Circlemean(c) => {
            let d = c.single_delta(0.25)?;
            let radii = c.radii(&[3.0])?;
            let events = [(EventSpec::CircleMeanLow, Some(d)), (EventSpec::Claim34Failure, None)];
            records.block(&estimate_rows(&events, &radii, c.trials(10_000)?, c.seed)?)?;
        }
        Command::Jensen(c) => {
            let trials = c.trials(100)?;
            let rows = c
                .radii(&[2.0])?
                .into_iter()
                .map(|r| jensen_sweep(r, trials, c.seed))
                .collect::<Result<Vec<_>, _>>()?;
            records.block(&rows)?;
        }
        Command::Omega(c) => {
            let trials = c.trials(100)?;
            let radii = c.radii(&[1.0, 2.0])?;
            if let Some(bad) = radii.iter().find(|&&r| r < 1.0) {
                return Err(usage(format!("omega needs r >= 1, got {bad}")));
            }
            let rows = radii
                .into_iter()
                .map(|r| omega_verification(r, trials, c.seed))
                .collect::<Result<Vec<_>, _>>()?;
            records.block(&rows)?;
        }
        Command::Probe { common: c, placement } => {
            let trials = c.trials(100)?;
            let radii = c.radii(&[1.0])?;
            let deltas = c.deltas(&[0.25, 0.09, 0.04, 0.01, 0.0025])?;
            let mut rows = Vec::new();
            for &r in &radii {
                for &d in &deltas {
                    rows.push(probe_sweep(d, r, *placement, trials, c.seed)?);
                }
            }
            records.block(&rows)?;
        }
        Command::Fit { common: c, input } => {
            let mut points = read_estimates(input)?;
            if !c.r.is_empty() {
                points.retain(|p| c.r.contains(&p.1));
            }
            let rows = fit_rows(&points, err)?;
            if rows.is_empty() {
                return Err(CliError::Runtime("no event has three usable radii".into()));
            }
            records.block(&rows)?;
        }
        Command::Sample { common: c, trial, dump_zeros } => {
            let radii = c.radii(&[1.0])?;
            if radii.len() != 1 {
                return Err(usage("sample takes a single --r"));
            }
            let mut state = geflab_core::derive_trial_rng(c.seed, 0, *trial);
            let gef = sample_gef(radii[0], &mut state, TruncationPolicy::default())?;
            let value = if *dump_zeros {
                let zeros = find_zeros(&gef, radii[0])?;
                serde_json::json!({ "gef": gef, "zeros": zeros })
            } else {
                serde_json::to_value(&gef)?
            };
            let mut bytes = serde_json::to_vec_pretty(&value)?;
            bytes.push(b'\n');
            return Ok((bytes, common.output.clone()));
        }
    }
    Ok((records.render(common.format)?, common.output.clone()))
}

fn worker_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
        Err(_) => match flag {
            Some(0) => Err(usage("--workers must be positive")),
            other => Ok(other),
        },
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code: 0 on success, 1 on runtime errors, 2 on usage errors.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    match run_command(&cli.command, out, err) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(CliError::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_RUNTIME
        }
    }
}

fn run_command(command: &Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let workers = command.common().workers;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_count(workers)? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut notes = Vec::new();
    let result = pool.install(|| execute(command, &mut notes));
    err.write_all(&notes)?;
    let (bytes, path) = result?;
    match path {
        Some(p) => fs::write(&p, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?,
        None => out.write_all(&bytes)?,
    }
    Ok(())
}
