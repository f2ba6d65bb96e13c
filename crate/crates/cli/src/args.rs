use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use konp::PValueRule;

#[derive(Debug, Parser)]
#[command(name = "konp", version, about = "K-sample omnibus tests for right-censored survival data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test for equal survival across the groups of a CSV file.
    Test(TestArgs),
    /// Estimate size or power on a simulation scenario.
    Simulate(SimulateArgs),
    /// Time the permutation tests on simulated null datasets.
    Benchmark(BenchmarkArgs),
    /// List the built-in simulation scenarios.
    Scenarios(ScenariosArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    /// count / (M·B)
    Proportion,
    /// (count + 1) / (M·B + 1)
    AddOne,
}

impl From<RuleArg> for PValueRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Proportion => PValueRule::Proportion,
            RuleArg::AddOne => PValueRule::AddOne,
        }
    }
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master random seed; echoed in every output.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RuleArg::Proportion)]
    pub pvalue_rule: RuleArg,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// CSV file with time, status and group columns.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    /// Column holding 1 for an observed event, 0 for censoring.
    #[arg(long, default_value = "status")]
    pub status_col: String,
    #[arg(long, default_value = "group")]
    pub group_col: String,
    /// `all` or a comma-separated list of konp_p, konp_lr, cau, logrank,
    /// peto_peto, pepe_fleming, lee, maxcombo.
    #[arg(long, default_value = "konp_p,konp_lr")]
    pub tests: String,
    /// Imputations M.
    #[arg(long, default_value_t = 10)]
    pub imputations: u32,
    /// Permutations B per imputation.
    #[arg(long, default_value_t = 10_000)]
    pub permutations: u32,
    /// Add a wall-clock column (makes output differ between runs).
    #[arg(long)]
    pub timings: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in scenario name (see `konp scenarios`).
    #[arg(long, required_unless_present = "scenario_file", conflicts_with = "scenario_file")]
    pub scenario: Option<String>,
    /// TOML scenario definition.
    #[arg(long)]
    pub scenario_file: Option<PathBuf>,
    /// Censoring variant(s): equal_25, equal_50, unequal_mild, unequal_severe or all.
    #[arg(long, default_value = "equal_25")]
    pub variant: String,
    /// Total sample size(s), comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    pub replications: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "konp_p,konp_lr,logrank")]
    pub tests: String,
    #[arg(long, default_value_t = 1)]
    pub imputations: u32,
    #[arg(long, default_value_t = 1000)]
    pub permutations: u32,
    /// Run every permutation test to completion instead of stopping once its
    /// decision is fixed (decisions are the same either way).
    #[arg(long)]
    pub no_early_exit: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Total sample sizes, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "100,200,300,400,1000")]
    pub n: Vec<usize>,
    /// Censoring settings of the two-group null scenario, or `all`.
    #[arg(long, default_value = "all")]
    pub variant: String,
    #[arg(long, default_value = "konp_p,konp_lr")]
    pub tests: String,
    #[arg(long, default_value_t = 1)]
    pub imputations: u32,
    #[arg(long, default_value_t = 1000)]
    pub permutations: u32,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ScenariosArgs {
    /// Print this scenario as TOML (a template for `--scenario-file`).
    #[arg(long)]
    pub show: Option<String>,
}
