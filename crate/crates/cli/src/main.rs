//! Command-line frontend for the targeting toolkit.
//!
//! Every subcommand reads an optional flat key=value config file and
//! exits 0 on success, 2 on configuration errors, and 3 on data, model,
//! or I/O errors.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use uptarget_core::experiment::{
    cmd_decide, cmd_evaluate, cmd_experiment, cmd_fit, cmd_simulate, load_config, Architecture,
    ExperimentConfig,
};
use uptarget_core::policy::{CostSpec, IncentiveCost};
use uptarget_core::{Error, Result};

#[derive(Parser)]
#[command(name = "uptarget", version, about = "Profit-optimal customer targeting under response-dependent costs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw synthetic campaigns and write customer and truth tables.
    Simulate {
        /// Flat key=value config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run a single seed instead of the config seed list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run the full three-stage targeting experiment.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the per-contact cost.
        #[arg(long)]
        kappa: Option<f64>,
        /// Override with a fixed incentive cost.
        #[arg(long)]
        delta: Option<f64>,
        /// Override with a percentage-of-value incentive cost.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Tune and fit one architecture on a dataset and save the model.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Architecture name, for example hurdle-two or onestage-dr.
        #[arg(long)]
        arch: String,
        /// Training data (customers CSV).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Truth table; only consulted when building the oracle.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Seed for hyperparameter tuning folds.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Model file to write.
        #[arg(long, default_value = "model.txt")]
        out: PathBuf,
    },
    /// Score a dataset with a saved model and write targeting decisions.
    Decide {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value = "decisions.csv")]
        out: PathBuf,
    },
    /// Evaluate a saved model against a truth table.
    Evaluate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        /// Also write the one-row report as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match config {
        Some(path) => load_config(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_cost_overrides(
    cost: &mut CostSpec,
    kappa: Option<f64>,
    delta: Option<f64>,
    eta: Option<f64>,
) -> Result<()> {
    if delta.is_some() && eta.is_some() {
        return Err(Error::Config("--delta and --eta are mutually exclusive".into()));
    }
    if let Some(d) = delta {
        cost.incentive = IncentiveCost::Fixed(d);
    }
    if let Some(h) = eta {
        cost.incentive = IncentiveCost::Percentage(h);
    }
    if let Some(k) = kappa {
        cost.kappa = k;
    }
    cost.validate()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let mut cfg = load(config.as_ref())?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            cmd_simulate(&cfg, &out)?;
            println!(
                "wrote {} campaign(s) of {} customers to {}",
                cfg.seeds.len(),
                cfg.sim.n,
                out.display()
            );
            Ok(())
        }
        Command::Experiment { config, seed, out, kappa, delta, eta } => {
            let mut cfg = load(config.as_ref())?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            apply_cost_overrides(&mut cfg.cost, kappa, delta, eta)?;
            cmd_experiment(&cfg, &out)?;
            println!(
                "experiment complete: {} seed(s), reports under {}",
                cfg.seeds.len(),
                out.display()
            );
            Ok(())
        }
        Command::Fit { config, arch, data, truth, seed, out } => {
            let cfg = load(config.as_ref())?;
            let arch = Architecture::parse(&arch)?;
            cmd_fit(&cfg, arch, data.as_deref(), truth.as_deref(), seed, &out)?;
            println!("saved {} model to {}", arch.label(), out.display());
            Ok(())
        }
        Command::Decide { config, model, data, kappa, delta, eta, out } => {
            let cfg = load(config.as_ref())?;
            let mut cost = cfg.cost;
            apply_cost_overrides(&mut cost, kappa, delta, eta)?;
            let targeted = cmd_decide(&model, &data, &cost, &out)?;
            println!("targeted {} customer(s); decisions in {}", targeted, out.display());
            Ok(())
        }
        Command::Evaluate { config, model, data, truth, kappa, delta, eta, out } => {
            let cfg = load(config.as_ref())?;
            let mut cost = cfg.cost;
            apply_cost_overrides(&mut cost, kappa, delta, eta)?;
            let rendered =
                cmd_evaluate(&model, &data, &truth, &cost, cfg.sim.e, out.as_deref())?;
            println!("{}", rendered);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
