use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmfuse::commands;
use mmfuse::config::{Overrides, RunConfig};
use mmfuse_core::data::TaskKind;

/// Multimodal popularity prediction with a variational information bottleneck.
#[derive(Parser)]
#[command(name = "mmfuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its metadata sidecar.
    Synth(Common),
    /// Train a model and write it with its per-epoch history.
    Train(Common),
    /// Score a saved model on a dataset.
    Eval(Common),
    /// Write per-sample predictions of a saved model.
    Predict(Common),
    /// Train one model per (sweep value, seed) and tabulate test metrics.
    Sweep(Common),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    Cls,
    Reg,
    Tmp,
}

#[derive(Args)]
struct Common {
    /// Flat TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    decoder: Option<DecoderArg>,
    /// Comma-separated modality names to drop at evaluation.
    #[arg(long, value_delimiter = ',')]
    drop_modalities: Option<Vec<String>>,
    /// Use the fused mean as the latent code and drop the KL term.
    #[arg(long)]
    deterministic_baseline: bool,
    #[arg(long)]
    include_prior: Option<bool>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Model file (eval, predict).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset file.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            lambda: self.lambda,
            decoder: self.decoder.map(|d| match d {
                DecoderArg::Cls => TaskKind::Classification,
                DecoderArg::Reg => TaskKind::Regression,
                DecoderArg::Tmp => TaskKind::Temporal,
            }),
            drop_modalities: self.drop_modalities.clone(),
            deterministic_baseline: self.deterministic_baseline,
            include_prior: self.include_prior,
            out: self.out.clone(),
            model: self.model.clone(),
            data: self.data.clone(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, common): (
        fn(&RunConfig, &mut dyn std::io::Write) -> mmfuse::Result<()>,
        &Common,
    ) = match &cli.command {
        Command::Synth(c) => (commands::synth, c),
        Command::Train(c) => (commands::train, c),
        Command::Eval(c) => (commands::eval, c),
        Command::Predict(c) => (commands::predict, c),
        Command::Sweep(c) => (commands::sweep, c),
        Command::Gradcheck(c) => (|cfg, log| commands::gradcheck(cfg.train.seed, log), c),
    };
    let result = RunConfig::load(common.config.as_deref(), &common.overrides())
        .and_then(|cfg| run(&cfg, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
