use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use eloran_td_cli::commands::{self, SweepKind};
use eloran_td_cli::config::RunConfig;
use eloran_td_cli::CliError;

#[derive(Parser)]
#[command(name = "eloran-td", version, about = "eLoran/GPS timing-difference estimation from weather and terrain")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for scenario generation and model initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Corpus directory.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus directory.
    Synth,
    /// Average timing data per hour and align it with the weather.
    Ingest,
    /// Interpolate grid maps for one epoch and write the path elevation profile.
    Gridmap,
    /// Correlate each factor with the timing difference and select factors.
    Correlate,
    /// Train one model on the training ranges.
    Train {
        /// lasso_mpr, wlr_agrnn, grnn, bpnn, moe or mean.
        #[arg(long)]
        model: String,
    },
    /// Predict hourly timing differences with a trained artifact.
    Predict {
        #[arg(long)]
        artifact: PathBuf,
        /// First date (inclusive).
        #[arg(long)]
        from: Option<NaiveDate>,
        /// Last date (inclusive).
        #[arg(long)]
        to: Option<NaiveDate>,
    },
    /// Score artifacts on the test ranges.
    Evaluate {
        #[arg(long = "artifact", required = true)]
        artifacts: Vec<PathBuf>,
    },
    /// LASSO-MPR test RMSE over a grid of alphas or degrees.
    Sweep {
        #[arg(value_enum)]
        kind: Kind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Alpha,
    Degree,
}

fn run(cli: Cli) -> Result<String, CliError> {
    let cfg = RunConfig::load(cli.config.as_deref())?.with_overrides(cli.seed, cli.out, cli.corpus);
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg),
        Command::Ingest => commands::cmd_ingest(&cfg),
        Command::Gridmap => commands::cmd_gridmap(&cfg),
        Command::Correlate => commands::cmd_correlate(&cfg),
        Command::Train { model } => commands::cmd_train(&cfg, &model).map(|(_, s)| s),
        Command::Predict { artifact, from, to } => commands::cmd_predict(&cfg, &artifact, from, to),
        Command::Evaluate { artifacts } => commands::cmd_evaluate(&cfg, &artifacts),
        Command::Sweep { kind } => commands::cmd_sweep(
            &cfg,
            match kind {
                Kind::Alpha => SweepKind::Alpha,
                Kind::Degree => SweepKind::Degree,
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
