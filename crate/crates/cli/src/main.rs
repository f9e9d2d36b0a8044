use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use photoloss::eval::{Alignment, ScaleAlignment};
use photoloss::losses::Regime;
use photoloss::optimizer::GradientMode;
use photoloss_cli::commands;
use photoloss_cli::config::{ExperimentConfig, Overrides};
use photoloss_cli::io::{self, json};
use photoloss_cli::{CliError, Result};

/// Synthetic depth and pose recovery under photometric, direct and
/// generalized losses.
#[derive(Parser)]
#[command(name = "photoloss", version)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Frames per aligned segment for eval-pose.
    #[arg(long, global = true, default_value_t = 150)]
    segment_len: usize,
    /// Regime to run (repeatable): self-supervised, direct, generalized.
    #[arg(long, global = true)]
    regime: Vec<Regime>,
    /// Gradient computation: analytic or fd.
    #[arg(long, global = true)]
    gradient_mode: Option<GradientMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render scenes to PNG frames, PFM depth and a trajectory file.
    Generate,
    /// Recover depth and poses from perturbed ground truth.
    Optimize,
    /// Compare two directories of PFM depth maps.
    EvalDepth {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Fit one scale per frame instead of one global scale.
        #[arg(long, conflicts_with = "scale")]
        per_frame: bool,
        /// Use this scale instead of fitting one.
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Absolute pose error between two trajectory files.
    EvalPose {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// similarity, rigid or none.
        #[arg(long, default_value = "similarity", value_parser = parse_alignment)]
        alignment: Alignment,
    },
    /// Run all regimes from the same initialization and tabulate the results.
    CompareLosses,
}

fn parse_alignment(s: &str) -> std::result::Result<Alignment, String> {
    match s {
        "similarity" => Ok(Alignment::Similarity),
        "rigid" => Ok(Alignment::Rigid),
        "none" => Ok(Alignment::None),
        _ => Err(format!("unknown alignment {s:?}; expected similarity, rigid or none")),
    }
}

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var("PHOTOLOSS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("PHOTOLOSS_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn emit_eval(value: &serde_json::Value, table: &str, out: Option<&PathBuf>, name: &str) -> Result<()> {
    eprint!("{table}");
    if let Some(dir) = out {
        io::write_atomic(&dir.join(name), &json::to_pretty(value))?;
    }
    print!("{}", String::from_utf8_lossy(&json::to_pretty(value)));
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_threads()?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        regimes: cli.regime.clone(),
        gradient_mode: cli.gradient_mode,
    };
    let config = || ExperimentConfig::resolve(cli.config.as_deref(), &overrides);
    match &cli.command {
        Command::Generate => print!("{}", commands::cmd_generate(&config()?)?),
        Command::Optimize => {
            let (table, diverged) = commands::cmd_optimize(&config()?)?;
            print!("{table}");
            if diverged {
                eprintln!("error: at least one run diverged");
                return Ok(ExitCode::from(2));
            }
        }
        Command::CompareLosses => print!("{}", commands::cmd_compare_losses(&config()?)?),
        Command::EvalDepth {
            pred,
            reference,
            per_frame,
            scale,
        } => {
            let align = match (per_frame, scale) {
                (_, Some(s)) => ScaleAlignment::Fixed(*s),
                (true, None) => ScaleAlignment::PerFrame,
                (false, None) => ScaleAlignment::Global,
            };
            let (value, table) = commands::cmd_eval_depth(pred, reference, align)?;
            emit_eval(&value, &table, cli.out.as_ref(), "eval_depth.json")?;
        }
        Command::EvalPose {
            pred,
            reference,
            alignment,
        } => {
            if cli.segment_len == 0 {
                return Err(CliError::Usage("--segment-len must be positive".into()));
            }
            let (value, table) = commands::cmd_eval_pose(pred, reference, cli.segment_len, *alignment)?;
            emit_eval(&value, &table, cli.out.as_ref(), "eval_pose.json")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
