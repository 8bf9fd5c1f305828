use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tvmix", version, about = "Time-varying Gaussian-Cauchy mixture models for return series")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Random seed for simulation and MCEM.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with `em` and `mcem` settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation design (JSON) and summarize the replicates.
    Simulate {
        #[arg(long)]
        design: PathBuf,
    },
    /// Fit a mixture model to price or grouped-return data.
    Fit(FitArgs),
    /// Predict weights of a Model 3/4 fit from predictor rows.
    PredictWeights {
        /// `fit.json` written by `fit`.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long = "macro")]
        macro_panel: PathBuf,
        /// First month to predict (`YYYY-MM`).
        #[arg(long)]
        from: Option<String>,
        /// Last month to predict (`YYYY-MM`).
        #[arg(long)]
        to: Option<String>,
    },
    /// Value at risk per interval from a converged fit.
    Var {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.05])]
        levels: Vec<f64>,
        /// Request expected shortfall (always refused for Cauchy mixtures).
        #[arg(long)]
        expected_shortfall: bool,
    },
    /// Compute log returns and optionally group them.
    Returns {
        #[command(flatten)]
        prices: PriceArgs,
        #[arg(long, value_enum)]
        group: Option<GroupArg>,
    },
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    /// Price CSV (header row, ISO dates).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "Date")]
    pub date_column: String,
    #[arg(long, default_value = "Adj Close")]
    pub price_column: String,
    /// Assign weekly bars to the month of their last trading day.
    #[arg(long)]
    pub week_end: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GroupArg {
    Year,
    Month,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    M1,
    M2,
    M3,
    M4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    /// Prices, converted to log returns and grouped.
    Prices,
    /// Long-format `interval,value` CSV as written by `returns --group`.
    Grouped,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[command(flatten)]
    pub prices: PriceArgs,
    #[arg(long, value_enum, default_value_t = InputKind::Prices)]
    pub kind: InputKind,
    #[arg(long, value_enum, default_value_t = GroupArg::Year)]
    pub group: GroupArg,
    /// Monthly predictor panel (Models 3 and 4).
    #[arg(long = "macro")]
    pub macro_panel: Option<PathBuf>,
    /// Panel columns to use, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    /// Panel columns to first-difference, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub diff: Vec<String>,
    /// Report Fisher-information standard errors (Model 3).
    #[arg(long)]
    pub std_errors: bool,
    /// Allow Model 4; Monte Carlo EM can take a long time.
    #[arg(long)]
    pub mcem: bool,
}
