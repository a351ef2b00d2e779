use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tripleiv_core::panel::{LoadOptions, Mode, Schema};
use tripleiv_core::staggered::ControlPolicy;

use crate::failure::CliError;

/// Triple DID-IV estimation, inference and simulation.
///
/// Exit status: 0 on success, 1 when the data or the design fails a check,
/// 2 on I/O or usage errors.
#[derive(Debug, Parser)]
#[command(name = "tripleiv", version, about, long_about = None)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the instrument against the design; one `RULE unit=<id> t=<period>` line per violation.
    Validate(ValidateArgs),
    /// Triple Wald-DID estimates with standard errors and confidence intervals.
    Estimate(EstimateArgs),
    /// Draw a dataset from a simulation spec and run a Monte Carlo study against exact oracles.
    Simulate(SimulateArgs),
    /// Plain (single-group) Wald-DID next to the triple Wald-DID.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    /// Periods 0 and 1; the cohort column is the exposed-group flag (0/1).
    TwoPeriod,
    /// Periods 1..=T; cohorts are adoption dates or `inf`.
    Staggered,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::TwoPeriod => Mode::TwoPeriod,
            ModeArg::Staggered => Mode::Staggered,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlArg {
    /// Never-exposed cohort.
    Never,
    /// Last-exposed cohort, before its own exposure.
    Last,
}

impl From<ControlArg> for ControlPolicy {
    fn from(c: ControlArg) -> ControlPolicy {
        match c {
            ControlArg::Never => ControlPolicy::NeverExposed,
            ControlArg::Last => ControlPolicy::LastExposed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Ratio of cell-mean contrasts.
    Cells,
    /// Saturated two-stage least squares.
    Iv,
    /// Both, with the gap between them.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variance {
    /// Influence-function standard error.
    If,
    /// Whole-unit nonparametric bootstrap.
    Bootstrap,
}

/// Input file and column mapping.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Long-format panel (one row per unit and period) with a header row.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::TwoPeriod)]
    pub mode: ModeArg,
    /// Highest treatment level (1 for binary treatment).
    #[arg(long, default_value_t = 1)]
    pub max_treatment: u32,
    /// Field delimiter: a single character, or `tab`.
    #[arg(long, default_value = ",")]
    pub delimiter: String,
    #[arg(long, default_value = "unit")]
    pub col_unit: String,
    #[arg(long, default_value = "time")]
    pub col_time: String,
    /// Outcome column.
    #[arg(long, default_value = "y")]
    pub col_y: String,
    /// Treatment column (non-negative integers up to --max-treatment).
    #[arg(long, default_value = "d")]
    pub col_d: String,
    /// Instrument column; derived from cohort, group and period when omitted.
    #[arg(long)]
    pub col_z: Option<String>,
    /// Group column (0/1).
    #[arg(long, default_value = "a")]
    pub col_a: String,
    /// Cohort column; `inf` or an empty field marks the never-exposed cohort.
    #[arg(long, default_value = "cohort")]
    pub col_cohort: String,
}

impl DataArgs {
    pub fn load_options(&self) -> Result<LoadOptions, CliError> {
        let delimiter = match self.delimiter.as_str() {
            "tab" | "\\t" | "\t" => b'\t',
            s if s.len() == 1 && s.is_ascii() => s.as_bytes()[0],
            s => return Err(CliError::Usage(format!("--delimiter must be one ASCII character or `tab`, got {s:?}"))),
        };
        Ok(LoadOptions {
            schema: Schema {
                unit: self.col_unit.clone(),
                time: self.col_time.clone(),
                outcome: self.col_y.clone(),
                treatment: self.col_d.clone(),
                instrument: self.col_z.clone(),
                group_a: self.col_a.clone(),
                cohort: self.col_cohort.clone(),
            },
            mode: self.mode.into(),
            max_treatment: self.max_treatment,
            delimiter,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory for the report and a run manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Control cohort for staggered designs [default: never].
    #[arg(long, value_enum)]
    pub control: Option<ControlArg>,
    #[arg(long, value_enum, default_value_t = Engine::Cells)]
    pub engine: Engine,
    #[arg(long, value_enum, default_value_t = Variance::If)]
    pub variance: Variance,
    /// Bootstrap replicates (with --variance bootstrap; at least 100) [default: 500].
    #[arg(long)]
    pub boot_reps: Option<usize>,
    /// Bootstrap seed (with --variance bootstrap) [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Estimate even if the instrument violates the design.
    #[arg(long)]
    pub skip_validate: bool,
    /// Directory for reports, the summary table and a run manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Also emit a JSON document (to the output directory, or to standard output without --out).
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Simulation spec (TOML).
    #[arg(long)]
    pub spec: PathBuf,
    /// Units per simulated dataset.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Monte Carlo replications (at least 2).
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    /// Master seed; overrides the spec's `seed` [default: spec seed, else 0].
    /// The written dataset is replicate 0 of the study.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Output directory: dataset.csv, oracle.txt, monte_carlo.txt, manifest.json.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Control cohort for staggered designs [default: never].
    #[arg(long, value_enum)]
    pub control: Option<ControlArg>,
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    #[arg(long)]
    pub skip_validate: bool,
    /// Directory for the comparison table and a run manifest.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}
