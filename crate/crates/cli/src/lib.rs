//! Command-line front end: scenario simulation, dataset imputation,
//! analyze-and-pool, standalone pooling, and elicitation.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

mod commands;
mod error;
mod formats;

use clap::{Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "mmmi", version, about = "Multiple-model multiple imputation")]
pub struct Cli {
    /// Master seed for all random streams. Required by `simulate` and
    /// `impute`; there is no silent default.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores). Results are independent of
    /// this setting.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: std::path::PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run Monte Carlo scenarios and write a metrics table.
    Simulate {
        /// Comma-separated scenario names, e.g. `mar-none,strong-ample`.
        /// Ignorability: mar, weak, strong, misspec; uncertainty: none,
        /// mild, moderate, ample.
        #[arg(long, value_delimiter = ',', conflicts_with = "grid")]
        scenarios: Vec<String>,
        /// Named scenario grid: `table1` is the full 4x4
        /// ignorability-by-uncertainty grid.
        #[arg(long)]
        grid: Option<String>,
        /// Replications per scenario.
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Imputation models per replication.
        #[arg(long, default_value_t = 100)]
        m: usize,
        /// Imputations per model.
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Confidence level for interval coverage.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Impute a CSV dataset, writing one completed CSV per (model,
    /// imputation) cell plus a manifest.
    Impute {
        /// Input dataset CSV (wide; missing cells empty).
        #[arg(long)]
        data: std::path::PathBuf,
        /// Dataset/plan configuration JSON.
        #[arg(long)]
        config: std::path::PathBuf,
    },
    /// Fit the analysis model on every imputed dataset of a run and pool.
    AnalyzePool {
        /// Manifest written by `impute`.
        #[arg(long)]
        manifest: std::path::PathBuf,
        /// Named estimand: `treatment-slope` or `treatment-effect`.
        #[arg(long, conflicts_with = "weights")]
        estimand: Option<String>,
        /// Explicit fixed-effect weight vector, e.g. `0,1,0,1`.
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Pool an estimates CSV with columns `model,rep,q_hat,u`.
    Pool {
        #[arg(long)]
        estimates: std::path::PathBuf,
        /// Single-level (non-nested) pooling of all rows.
        #[arg(long)]
        flat: bool,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Turn expert lower/upper multiplier bounds into a distribution.
    Elicit {
        lower: f64,
        upper: f64,
        /// `normal` or `uniform`.
        family: String,
    },
}

pub fn run(cli: Cli) -> i32 {
    if let Some(threads) = cli.threads {
        // Ignore failure: the global pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let outcome = match &cli.command {
        Command::Simulate {
            scenarios,
            grid,
            reps,
            m,
            n,
            level,
        } => commands::simulate::run(&cli, scenarios, grid.as_deref(), *reps, *m, *n, *level),
        Command::Impute { data, config } => commands::impute::run(&cli, data, config),
        Command::AnalyzePool {
            manifest,
            estimand,
            weights,
            level,
        } => commands::analyze_pool::run(&cli, manifest, estimand.as_deref(), weights, *level),
        Command::Pool {
            estimates,
            flat,
            level,
        } => commands::pool::run(&cli, estimates, *flat, *level),
        Command::Elicit {
            lower,
            upper,
            family,
        } => commands::elicit::run(*lower, *upper, family),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
