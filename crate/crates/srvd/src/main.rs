use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use srvd::commands::{cmd_anchors, cmd_eval, cmd_sr, cmd_synth, cmd_train};
use srvd::config::RunConfig;
use srvd::Error;
use srvd_core::trainer::Phase;

#[derive(Parser)]
#[command(
    name = "srvd",
    version,
    about = "Joint super-resolution and vehicle detection"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Checkpoint to resume (train) or to evaluate and run (eval, sr)
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Dataset root with images/ and labels/
    #[arg(long, global = true)]
    data: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Sr,
    Det,
    Joint,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic aerial dataset
    Synth,
    /// Cluster dataset boxes into nine anchors
    Anchors,
    /// Run one training phase
    Train {
        #[arg(long, value_enum)]
        phase: PhaseArg,
        #[arg(long)]
        init_sr: Option<PathBuf>,
        #[arg(long)]
        init_det: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset
    Eval,
    /// Super-resolve one PNG
    Sr { input: Option<PathBuf> },
}

fn set_path(cfg: &mut RunConfig, key: &str, p: &Option<PathBuf>) -> Result<(), Error> {
    if let Some(p) = p {
        cfg.set(key, p.display().to_string())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, Error> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.set("seed", s.to_string())?;
    }
    set_path(&mut cfg, "out", &c.out)?;
    set_path(&mut cfg, "checkpoint", &c.checkpoint)?;
    set_path(&mut cfg, "data", &c.data)?;
    match cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Anchors => cmd_anchors(&cfg),
        Command::Train {
            phase,
            init_sr,
            init_det,
        } => {
            set_path(&mut cfg, "init_sr", &init_sr)?;
            set_path(&mut cfg, "init_det", &init_det)?;
            let phase = match phase {
                PhaseArg::Sr => Phase::PretrainSr,
                PhaseArg::Det => Phase::PretrainDet,
                PhaseArg::Joint => Phase::Joint,
            };
            cmd_train(&cfg, phase)
        }
        Command::Eval => cmd_eval(&cfg),
        Command::Sr { input } => {
            set_path(&mut cfg, "input", &input)?;
            cmd_sr(&cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e @ Error::Usage(_)) => {
            eprintln!("error: {e}");
            eprintln!("run `srvd --help` for usage");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
