//! Command-line front end for `swapsim`.
//!
//! Exit codes: 0 success, 1 check or data failure, 2 usage error.

pub mod commands;
pub mod config;
pub mod io;
pub mod render;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use swapsim_core::protocol::PartitionKey;
use swapsim_core::stats::ChshSettings;
use thiserror::Error;

use crate::config::{load_config_file, parse_angle_list, Format, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn check(msg: impl Into<String>) -> Self {
        CliError::Check(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "swapsim", version, about = "Delayed-choice entanglement swapping simulator")]
pub struct Cli {
    /// `key = value` config file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check expansions, orthonormality and partial traces.
    VerifyAlgebra,
    /// Run quantum trials and write a trial log.
    SimulateQuantum(QuantumArgs),
    /// Generate classical rows (or the 30-row fixture) with per-view labels.
    SimulateClassical(ClassicalArgs),
    /// CHSH estimate on a trial log, optionally post-selected on Eve's outcome.
    Chsh(ChshArgs),
    /// Render a classical row file as a fixed-width table.
    RenderTable(RenderArgs),
}

#[derive(Debug, Args, Default)]
pub struct OutputArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// csv or json
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<u64>,
}

#[derive(Debug, Args)]
pub struct QuantumArgs {
    #[command(flatten)]
    pub common: OutputArgs,
    /// EVE_FIRST or EVE_LAST
    #[arg(long)]
    pub ordering: Option<String>,
    /// fixed:BELL, fixed:PRODUCT, alternating or bernoulli:Q
    #[arg(long)]
    pub eve_policy: Option<String>,
    /// comma-separated, e.g. `0,pi/2`
    #[arg(long, allow_hyphen_values = true)]
    pub alice_angles: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub bob_angles: Option<String>,
}

#[derive(Debug, Args)]
pub struct ClassicalArgs {
    #[command(flatten)]
    pub common: OutputArgs,
    #[arg(long)]
    pub views: Option<usize>,
    /// Probability that a view reads a row as a coincidence.
    #[arg(long)]
    pub coincidence_q: Option<f64>,
    /// Emit the tabulated 30-run data set with its three printed views.
    #[arg(long)]
    pub fixture: bool,
}

#[derive(Debug, Args)]
pub struct ChshArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// Eve outcome to condition on (`psi-`, `BELL:phi+`, `10`, ...) or `none`.
    #[arg(long)]
    pub key: Option<String>,
    /// a,a',b,b' in radians
    #[arg(long, allow_hyphen_values = true)]
    pub settings: Option<String>,
    /// Standard errors |S| must exceed 2 by to count as a violation.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// 1-based view numbers, e.g. `1,3`
    #[arg(long)]
    pub views: Option<String>,
}

fn run_config(file: &BTreeMap<String, String>, common: &OutputArgs) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::default();
    config.apply(file)?;
    let mut flags = BTreeMap::new();
    if let Some(v) = common.trials {
        flags.insert("trials".to_string(), v.to_string());
    }
    if let Some(v) = common.seed {
        flags.insert("seed".to_string(), v.to_string());
    }
    if let Some(v) = &common.format {
        flags.insert("format".to_string(), v.clone());
    }
    config.apply(&flags)?;
    if let Some(p) = &common.output {
        config.output_path = Some(p.clone());
    }
    if common.format.is_none() && !file.contains_key("format") {
        if let Some(p) = &config.output_path {
            config.format = Format::from_path(p);
        }
    }
    Ok(config)
}

fn pick(flag: &Option<String>, file: &BTreeMap<String, String>, key: &str) -> Option<String> {
    flag.clone().or_else(|| file.get(key).cloned())
}

fn parse_key(text: &str) -> Result<Option<PartitionKey>, CliError> {
    if text.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    text.parse()
        .map(Some)
        .map_err(|e: swapsim_core::contexts::ContextError| CliError::usage(e.to_string()))
}

fn parse_format(text: Option<String>) -> Result<Option<Format>, CliError> {
    text.map(|f| f.parse()).transpose()
}

/// Executes a parsed command, writing reports to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => load_config_file(path)?,
        None => BTreeMap::new(),
    };
    match cli.command {
        Command::VerifyAlgebra => {
            let report = commands::verify_algebra(out)?;
            if !report.all_passed() {
                let failed: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| !c.passed())
                    .map(|c| c.name.as_str())
                    .collect();
                return Err(CliError::check(failed.join(", ")));
            }
        }
        Command::SimulateQuantum(args) => {
            let mut config = run_config(&file, &args.common)?;
            let mut flags = BTreeMap::new();
            for (k, v) in [
                ("ordering", &args.ordering),
                ("eve_policy", &args.eve_policy),
                ("alice_angles", &args.alice_angles),
                ("bob_angles", &args.bob_angles),
            ] {
                if let Some(v) = v {
                    flags.insert(k.to_string(), v.clone());
                }
            }
            config.apply(&flags)?;
            commands::simulate_quantum(&config, out)?;
        }
        Command::SimulateClassical(args) => {
            let mut config = run_config(&file, &args.common)?;
            if let Some(v) = args.views {
                config.views = v;
            }
            if let Some(q) = args.coincidence_q {
                config.coincidence_q = q;
            }
            let fixture = args.fixture
                || file
                    .get("fixture")
                    .map_or(false, |v| matches!(v.as_str(), "true" | "1" | "yes"));
            commands::simulate_classical(&config, fixture, out)?;
        }
        Command::Chsh(args) => {
            let input = args
                .input
                .or_else(|| file.get("input").map(PathBuf::from))
                .ok_or_else(|| CliError::usage("chsh needs --input"))?;
            let key = match pick(&args.key, &file, "key") {
                Some(k) => parse_key(&k)?,
                None => None,
            };
            let settings = match pick(&args.settings, &file, "settings") {
                Some(s) => {
                    let v = parse_angle_list(&s)?;
                    if v.len() != 4 {
                        return Err(CliError::usage("--settings takes exactly four angles a,a',b,b'"));
                    }
                    ChshSettings::new(v[0], v[1], v[2], v[3])
                }
                None => {
                    use std::f64::consts::PI;
                    ChshSettings::new(0.0, PI / 2.0, PI / 4.0, -PI / 4.0)
                }
            };
            let sigma = match args.sigma {
                Some(s) => s,
                None => file
                    .get("sigma")
                    .map(|s| s.parse().map_err(|_| CliError::usage(format!("invalid sigma `{s}`"))))
                    .transpose()?
                    .unwrap_or(3.0),
            };
            let format = parse_format(pick(&args.format, &file, "format"))?;
            let records = commands::load_trials(&input, format)?;
            commands::chsh_report(&records, key, settings, sigma, out)?;
        }
        Command::RenderTable(args) => {
            let input = args
                .input
                .or_else(|| file.get("input").map(PathBuf::from))
                .ok_or_else(|| CliError::usage("render-table needs --input"))?;
            let views = pick(&args.views, &file, "views")
                .map(|s| {
                    s.split(',')
                        .map(|v| v.trim().parse::<usize>().map_err(|_| CliError::usage(format!("invalid view `{v}`"))))
                        .collect::<Result<Vec<_>, _>>()
                })
                .transpose()?;
            let format = parse_format(pick(&args.format, &file, "format"))?;
            let text = commands::render_file(&input, format, views.as_deref())?;
            out.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "swapsim: {e}");
            e.exit_code()
        }
    }
}
