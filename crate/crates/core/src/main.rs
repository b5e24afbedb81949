use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

use mtof::baselines::FreqModality;
use mtof::cli::{cmd_eval, cmd_gen, cmd_predict, cmd_spectrum, cmd_train, Suite};
use mtof::config::RunConfig;
use mtof::detector::ModelKind;
use mtof::evaluation::ProtocolMode;

#[derive(Parser)]
#[command(name = "mtof", version, about = "Display-recapture detection from RGB + ToF pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; every field has a default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sets both the data and the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one config field, e.g. `training.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "K=V")]
    sets: Vec<String>,
    /// Artifact root; defaults to `paths.out_dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train a detector and write its checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "mtofnet", value_parser = parse_model)]
        model: ModelKind,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ProtocolMode>,
    },
    /// Evaluate a detector under a protocol or run an evaluation suite.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "mtofnet", value_parser = parse_model)]
        model: ModelKind,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<ProtocolMode>,
        /// protocol, ablation, scaling, confusion or features.
        #[arg(long, default_value = "protocol", value_parser = parse_suite)]
        suite: Suite,
        /// Score this checkpoint instead of training.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Radially averaged power spectra per sample and per class.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// `tof` or `image`.
        #[arg(long, default_value = "tof", value_parser = parse_modality)]
        modality: FreqModality,
    },
    /// Print `{label, p_display}` for one RGB + ToF pair.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        rgb: PathBuf,
        #[arg(long)]
        tof: PathBuf,
    },
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: mtof::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<ProtocolMode, String> {
    s.parse().map_err(|e: mtof::Error| e.to_string())
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: mtof::Error| e.to_string())
}

fn parse_modality(s: &str) -> Result<FreqModality, String> {
    match s {
        "tof" => Ok(FreqModality::Tof),
        "image" => Ok(FreqModality::Image),
        _ => Err(format!("unknown modality {s:?}; expected tof or image")),
    }
}

fn load(common: &Common, mode: Option<ProtocolMode>) -> anyhow::Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(common.config.as_deref(), &common.sets)?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(mode) = mode {
        cfg.protocol.mode = mode;
    }
    cfg.validate()?;
    let out = common
        .out
        .clone()
        .or_else(|| cfg.paths.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((cfg, out))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen { common } => {
            let (cfg, out) = load(&common, None)?;
            println!("{}", cmd_gen(&cfg, &out)?.display());
        }
        Command::Train { common, model, mode } => {
            let (cfg, out) = load(&common, mode)?;
            println!("{}", cmd_train(&cfg, model, &out)?.display());
        }
        Command::Eval {
            common,
            model,
            mode,
            suite,
            checkpoint,
        } => {
            let (cfg, out) = load(&common, mode)?;
            println!("{}", cmd_eval(&cfg, model, suite, checkpoint.as_deref(), &out)?.display());
        }
        Command::Spectrum { common, modality } => {
            let (cfg, out) = load(&common, None)?;
            println!("{}", cmd_spectrum(&cfg, modality, &out)?.display());
        }
        Command::Predict { checkpoint, rgb, tof } => {
            let p = cmd_predict(&checkpoint, &rgb, &tof)
                .with_context(|| format!("predicting {} + {}", rgb.display(), tof.display()))?;
            println!("{}", serde_json::to_string(&p)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
