//! Command-line definitions and `--config` expansion.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bundle::{parse_key_values, read_text, SeriesFormat};
use crate::error::{CliError, Result};

#[derive(Debug, Parser, Serialize)]
#[command(name = "glmar", version, about = "Spatial GLM-AR models for fMRI: simulation, HMC and VB fitting, evaluation")]
#[command(args_override_self = true)]
pub struct Cli {
    /// File of `flag=value` lines used as defaults; flags given on the
    /// command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Simulate replicate datasets from a preset or custom scenario.
    Simulate(SimulateArgs),
    /// Fit a bundle, or every replicate of a scenario directory.
    Fit(FitArgs),
    /// Tables, maps, PPMs and method comparisons for fitted replicates.
    Report(ReportArgs),
    /// Run the oracle and invariant self-test suite.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Study1,
    Study2,
    Study3,
}

impl PresetName {
    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Study1 => "study1",
            PresetName::Study2 => "study2",
            PresetName::Study3 => "study3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleArg {
    Desk,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseStart {
    Stationary,
    Burnin,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["preset", "scenario"])))]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: Option<PresetName>,
    /// Custom scenario file (keys: name, alpha, beta, lambda).
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    pub scale: ScaleArg,
    /// Replicate count (default: 20 at desk scale, 100 at full scale).
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Design matrix CSV (default: the bundled design for K = 5 or 13).
    #[arg(long, value_name = "FILE")]
    pub design: Option<PathBuf>,
    /// Mask file replacing the scale's mask.
    #[arg(long, value_name = "FILE")]
    pub mask: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "stationary")]
    pub initial_noise: NoiseStart,
    #[arg(long, value_enum, default_value = "f64")]
    pub series_format: SeriesFormat,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Hmc,
    Vb,
    Ols,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Hmc => "hmc",
            Backend::Vb => "vb",
            Backend::Ols => "ols",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Ols,
    Vb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepArg {
    Scan,
    Colored,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Dataset bundle or scenario directory.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub backend: Backend,
    /// Output directory (default: DATA/fits/BACKEND).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
    /// Base seed; replicate r uses seed + r.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replicates fitted concurrently (default: available cores).
    #[arg(long, env = "GLMAR_WORKERS")]
    #[serde(skip)]
    pub workers: Option<usize>,

    #[arg(long, default_value_t = 3000, help_heading = "HMC")]
    pub iters: usize,
    #[arg(long, default_value_t = 2000, help_heading = "HMC")]
    pub burn: usize,
    #[arg(long, default_value_t = 250, help_heading = "HMC")]
    pub leapfrog: usize,
    #[arg(long, default_value_t = 2e-5, help_heading = "HMC")]
    pub step_size: f64,
    #[arg(long, default_value_t = 0.65, help_heading = "HMC")]
    pub target_accept: f64,
    #[arg(long, default_value_t = 50, help_heading = "HMC")]
    pub adapt_window: usize,
    #[arg(long, default_value_t = 1.0, help_heading = "HMC")]
    pub adapt_gain: f64,
    /// Mass-matrix tuning rounds inside burn-in.
    #[arg(long, default_value_t = 0, help_heading = "HMC")]
    pub tune_rounds: usize,
    #[arg(long, default_value_t = 1, help_heading = "HMC")]
    pub thin: usize,
    /// Write the retained draws to draws.bin (needed for HMC PPMs).
    #[arg(long, help_heading = "HMC")]
    pub keep_draws: bool,
    /// Sample precisions on the log scale.
    #[arg(long, help_heading = "HMC")]
    pub log_precision: bool,
    /// Starting state.
    #[arg(long, value_enum, default_value = "ols", help_heading = "HMC")]
    pub init: InitArg,
    /// Coordinates to trace (default: 5 random W, 2 random A, all α and β).
    #[arg(long, value_delimiter = ',', help_heading = "HMC")]
    pub monitor: Option<Vec<usize>>,

    #[arg(long, default_value_t = 1e-6, help_heading = "VB")]
    pub tol: f64,
    #[arg(long, default_value_t = 200, help_heading = "VB")]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value = "scan", help_heading = "VB")]
    pub sweep: SweepArg,

    #[arg(long, default_value_t = 0.01, help_heading = "Hyperpriors")]
    pub q1: f64,
    #[arg(long, default_value_t = 100.0, help_heading = "Hyperpriors")]
    pub q2: f64,
    #[arg(long, default_value_t = 0.01, help_heading = "Hyperpriors")]
    pub r1: f64,
    #[arg(long, default_value_t = 100.0, help_heading = "Hyperpriors")]
    pub r2: f64,
    #[arg(long, default_value_t = 0.01, help_heading = "Hyperpriors")]
    pub u1: f64,
    #[arg(long, default_value_t = 100.0, help_heading = "Hyperpriors")]
    pub u2: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Scenario directory (or a single bundle) with fits under `fits/`.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Methods to include (default: every directory under fits/).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Two methods to compare, A/B ratios (for example `--compare vb hmc`).
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub compare: Option<Vec<String>>,
    /// Posterior probability maps and sensitivity curves.
    #[arg(long)]
    pub ppm: bool,
    /// `fame`, `face`, or comma-separated weights.
    #[arg(long, default_value = "fame")]
    pub contrast: String,
    #[arg(long, default_value_t = 0.9)]
    pub gamma_p: f64,
    /// `topQpct`, `Xpct-above-mean`, or a number.
    #[arg(long, default_value = "top10pct")]
    pub gamma_e: String,
    /// Replicate whose maps are written.
    #[arg(long, default_value_t = 0)]
    pub map_replicate: usize,
    /// Output directory (default: DATA/report).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct CheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Inserts the flags from `--config FILE` right after the subcommand, so
/// that later command-line occurrences override them.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config: Option<PathBuf> = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            let v = it.next().ok_or_else(|| CliError::Usage("--config needs a file".into()))?;
            config = Some(PathBuf::from(v));
        } else if let Some(v) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let cmd = Cli::command();
    let sub_pos = rest
        .iter()
        .position(|a| cmd.find_subcommand(a.to_string_lossy().as_ref()).is_some())
        .ok_or_else(|| CliError::Usage("--config requires a subcommand".into()))?;
    let sub_name = rest[sub_pos].to_string_lossy().into_owned();
    let sub = cmd.find_subcommand(&sub_name).unwrap();
    let inserted = config_flags(&path, sub)?;
    let mut out = rest[..=sub_pos].to_vec();
    out.extend(inserted);
    out.extend_from_slice(&rest[sub_pos + 1..]);
    Ok(out)
}

fn config_flags(path: &Path, sub: &clap::Command) -> Result<Vec<OsString>> {
    let kv = parse_key_values(path, &read_text(path)?)?;
    let mut out = Vec::new();
    for (key, value) in kv {
        let flag = key.replace('_', "-");
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(flag.as_str()))
            .ok_or_else(|| CliError::Usage(format!("{}: unknown option {key:?}", path.display())))?;
        if arg.get_action().takes_values() {
            out.push(OsString::from(format!("--{flag}")));
            if arg.get_num_args().is_some_and(|n| n.max_values() > 1) {
                out.extend(value.split_whitespace().map(OsString::from));
            } else {
                out.push(OsString::from(value));
            }
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => out.push(OsString::from(format!("--{flag}"))),
                "false" | "0" | "no" => {}
                other => {
                    return Err(CliError::Usage(format!(
                        "{}: {key} is a switch; expected true or false, found {other:?}",
                        path.display()
                    )))
                }
            }
        }
    }
    Ok(out)
}
