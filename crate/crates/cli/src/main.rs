//! `maxabc`: command-line driver for simulation, marginal fitting, composite
//! likelihood fits, regression summaries, SMC ABC and reporting.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand};
use maxstable_abc::models::ModelId;
use maxstable_abc::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "maxabc", version, about = "ABC model choice for spatial extremes")]
pub struct Cli {
    /// JSON analysis configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Site table `id,x,y`.
    #[arg(long)]
    pub sites: Option<PathBuf>,
    /// Unit-Fréchet maxima table `year,<ids>`.
    #[arg(long)]
    pub maxima: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate annual maxima from one model.
    Simulate {
        #[arg(long, value_parser = parse_model)]
        model: ModelId,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        kappa: f64,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        ratio: f64,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        sites: PathBuf,
        #[arg(long)]
        reps: usize,
        #[arg(long, default_value = "maxima.csv")]
        output: String,
    },
    /// Fit GEV margins and transform to unit Fréchet.
    FitMargins {
        /// Raw maxima table.
        #[arg(long)]
        maxima: PathBuf,
        /// Input is already unit Fréchet; pass it through unchanged.
        #[arg(long)]
        identity: bool,
    },
    /// Maximum composite-likelihood fits of every configured model.
    Mcle {
        #[command(flatten)]
        data: DataArgs,
        /// Also compute CLIC.
        #[arg(long)]
        clic: bool,
    },
    /// Train the regression summaries.
    FpTrain {
        #[command(flatten)]
        data: DataArgs,
        /// Size of a held-out set for the overfitting check.
        #[arg(long)]
        holdout: Option<usize>,
    },
    /// Rejection initialisation followed by the SMC ABC sampler.
    AbcRun {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "fp_fit.json")]
        fit: PathBuf,
    },
    /// Posterior model probabilities and parameter tables.
    Report {
        #[arg(long, default_value = "particles.json")]
        particles: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Number of predictive datasets (with --sites and --maxima).
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Posterior (or prior) predictive bands of pairwise indicators.
    CheckPredictive {
        #[arg(long, default_value = "particles.json")]
        particles: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        draws: Option<usize>,
        /// Sample models and parameters from the prior instead.
        #[arg(long)]
        prior: bool,
    },
}

fn parse_model(s: &str) -> Result<ModelId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit status of a failed command.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 4,
        Error::InvalidInput(_) | Error::Domain(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            eprintln!("error: cannot configure {w} workers: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
