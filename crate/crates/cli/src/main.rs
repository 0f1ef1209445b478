use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use progspace_cli::config::{PipelineConfig, PlotKind};
use progspace_cli::pipeline::{self, Stage};

#[derive(Parser)]
#[command(name = "progspace", version, about = "Clinical progression-space pipeline: simulate, fit, predict, plot, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (`key = value` lines, one section per module).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prediction horizon in months.
    #[arg(long, value_parser = ["24", "48"])]
    horizon: Option<String>,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; per-module seeds derive from it unless set explicitly.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with a ground-truth sidecar.
    Simulate(CommonArgs),
    /// Run preprocess, factorization, clustering, training, and evaluation.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Resume from this stage using persisted upstream artifacts.
        #[arg(long, value_parser = ["space", "clusters", "model", "report"])]
        from: Option<String>,
    },
    /// Project a new cohort through a trained run and predict zones.
    Predict(CommonArgs),
    /// Render figures from persisted artifacts.
    Plot {
        #[command(flatten)]
        common: CommonArgs,
        /// One figure kind; all configured kinds when omitted.
        #[arg(long, value_parser = ["space", "zones", "roc", "apoe4", "reversion", "control_age"])]
        kind: Option<String>,
    },
    /// Re-run the evaluation stage and print the report.
    Evaluate(CommonArgs),
}

fn load_config(args: &CommonArgs) -> progspace_cli::Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(h) = &args.horizon {
        cfg.horizon = h.parse().expect("clap validated the horizon");
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> progspace_cli::Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load_config(&args)?;
            pipeline::cmd_simulate(&cfg)?;
            println!("cohort written to {}", cfg.out_dir.join("cohort").display());
            Ok(())
        }
        Command::Fit { common, from } => {
            let cfg = load_config(&common)?;
            let stage = match from.as_deref() {
                Some(tok) => Stage::from_token(tok).expect("clap validated the stage"),
                None => Stage::Space,
            };
            pipeline::cmd_fit(&cfg, stage)?;
            println!("artifacts written to {}", cfg.out_dir.display());
            Ok(())
        }
        Command::Predict(args) => {
            let cfg = load_config(&args)?;
            pipeline::cmd_predict(&cfg)?;
            Ok(())
        }
        Command::Plot { common, kind } => {
            let cfg = load_config(&common)?;
            let kinds: Vec<PlotKind> = match kind.as_deref() {
                Some(tok) => vec![PlotKind::from_token(tok).expect("clap validated the kind")],
                None => cfg.plot_kinds.clone(),
            };
            pipeline::cmd_plot(&cfg, &kinds)?;
            println!("plots written to {}", cfg.out_dir.join("plots").display());
            Ok(())
        }
        Command::Evaluate(args) => {
            let cfg = load_config(&args)?;
            pipeline::cmd_evaluate(&cfg)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
