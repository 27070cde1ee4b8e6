use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use gkae_cli::commands::{self, VaryOptions};
use gkae_cli::{IndexList, ScenarioConfig, Session, EXIT_ERROR, EXIT_GATE_FAILURE};

#[derive(Parser)]
#[command(name = "gkae", version, about = "Swarm trajectory prediction and covert transmit-power planning")]
struct Cli {
    /// Scenario JSON; built-in reference scenario when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the swarm, the training run and the ground layout.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Simulated time steps (overrides `steps`).
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Training epochs (overrides `train.epochs`).
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the swarm and build the graph dataset.
    Simulate,
    /// Train the model on the leading part of the dataset.
    Train {
        /// Train one model per Koopman dimension, e.g. `2,5,10,20`.
        #[arg(long, value_delimiter = ',')]
        sweep_b: Vec<usize>,
        /// Seeds per sweep value (consecutive from the base seed).
        #[arg(long, default_value_t = 1)]
        sweep_seeds: usize,
    },
    /// Roll the model out over the held-out data.
    Predict {
        /// Horizon p; defaults to the largest configured horizon.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Plan transmit power against the predicted positions.
    Plan {
        /// Node counts to sweep, e.g. `10,25,50`.
        #[arg(long)]
        vary_n: Option<IndexList>,
        /// Link requirements to sweep, e.g. `1..8`.
        #[arg(long)]
        vary_c: Option<IndexList>,
        /// SNR thresholds in dB to sweep, e.g. `5,10,15`.
        #[arg(long, value_delimiter = ',')]
        vary_gamma: Vec<f64>,
        /// Random ground layouts per sweep value.
        #[arg(long, default_value_t = 20)]
        layouts: usize,
    },
    /// Consolidate metrics and check the acceptance gates.
    Evaluate,
    /// Run every stage in order.
    Run,
    /// Print the effective configuration.
    Config,
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    if let Some(dir) = &cli.output {
        config.output_dir = dir.clone();
    }
    if let Some(steps) = cli.steps {
        config.steps = steps;
    }
    if let Some(epochs) = cli.epochs {
        config.train.epochs = epochs;
    }
    Ok(config)
}

fn gate_status(metrics: &commands::Metrics) -> ExitCode {
    if metrics.passed {
        ExitCode::SUCCESS
    } else {
        eprintln!("failed gates: {}", metrics.failed_gates().join(", "));
        ExitCode::from(EXIT_GATE_FAILURE)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let config = load_config(&cli)?;
    if let Command::Config = cli.command {
        commands::cmd_config(&config, std::io::stdout().lock())?;
        return Ok(ExitCode::SUCCESS);
    }
    let session = Session::new(config, cli.quiet)?;
    match cli.command {
        Command::Simulate => {
            commands::cmd_simulate(&session)?;
        }
        Command::Train { sweep_b, sweep_seeds } => {
            commands::cmd_train(&session, &sweep_b, sweep_seeds)?;
        }
        Command::Predict { horizon } => {
            commands::cmd_predict(&session, horizon)?;
        }
        Command::Plan { vary_n, vary_c, vary_gamma, layouts } => {
            let vary = VaryOptions {
                n: vary_n.map(|l| l.0).unwrap_or_default(),
                c_tilde: vary_c.map(|l| l.0).unwrap_or_default(),
                gamma_db: vary_gamma,
                layouts,
            };
            commands::cmd_plan(&session, &vary)?;
        }
        Command::Evaluate => return Ok(gate_status(&commands::cmd_evaluate(&session)?)),
        Command::Run => return Ok(gate_status(&commands::cmd_run(&session)?)),
        Command::Config => unreachable!("handled above"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
