//! `whaledet`: batch front end for the whale sound-unit detector.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use whaledet_core::pipeline::FeatureKind;
use whaledet_core::Experiment;

use crate::config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "whaledet", version, about = "Detect whale sound units in background noise")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Flat TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Target SNR in dB; repeat for sweeps.
    #[arg(long, global = true, allow_hyphen_values = true)]
    snr: Vec<f64>,
    /// E1..E6; repeat for sweeps.
    #[arg(long, global = true)]
    experiment: Vec<Experiment>,
    /// cnn or spectrogram; `compare` accepts it repeated.
    #[arg(long, global = true)]
    features: Vec<FeatureKind>,
    /// CNN weight file.
    #[arg(long, global = true)]
    network: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize one experiment cell: WAV samples, manifest.csv, run.toml.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Noise bank root with one sub-directory per noise type.
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Directory of unit recordings.
        #[arg(long)]
        units: Option<PathBuf>,
    },
    /// Turn a synthesized dataset into a feature file.
    Featurize {
        /// Dataset directory written by `synth`.
        #[arg(long)]
        input: PathBuf,
        /// Feature file; labels go to `<stem>.labels.csv` beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a linear SVM on a feature file.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify a feature file with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo evaluation of a feature file.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Experiment × SNR grid: results.csv and confusion_<E>.csv.
    Sweep {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        units: Option<PathBuf>,
    },
    /// Paired sweep of several representations on identical datasets.
    Compare {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        units: Option<PathBuf>,
    },
    /// Write the seeded tiny-vgg reference network as a weight file
    /// (`--seed`, else the config's `network_seed`).
    InitNetwork {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        channels: usize,
    },
}

/// A failed command and its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<whaledet_core::Error> for Failure {
    fn from(e: whaledet_core::Error) -> Self {
        Self {
            code: if e.is_numeric() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

macro_rules! from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                whaledet_core::Error::from(e).into()
            }
        }
    )*};
}
from_core!(
    whaledet_core::svm::SvmError,
    whaledet_core::synth::SynthError,
    whaledet_core::eval::EvalError,
    whaledet_core::audio::AudioError,
    whaledet_core::cnn::CnnError,
    whaledet_core::spectrogram::SpectrogramError
);

fn resolve_config(global: &GlobalArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &global.config {
        Some(path) => PipelineConfig::load(path).map_err(Failure::usage)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if !global.snr.is_empty() {
        cfg.snr_values = global.snr.clone();
    }
    if !global.experiment.is_empty() {
        cfg.experiments = global.experiment.clone();
    }
    if let Some(&kind) = global.features.first() {
        cfg.features = kind;
    }
    if let Some(network) = &global.network {
        cfg.network = Some(network.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = resolve_config(&cli.global)?;
    let set_sources = |cfg: &mut PipelineConfig, bank: Option<PathBuf>, units: Option<PathBuf>| {
        if bank.is_some() {
            cfg.bank = bank;
        }
        if units.is_some() {
            cfg.units = units;
        }
    };
    match cli.command {
        Command::Synth { out, bank, units } => {
            set_sources(&mut cfg, bank, units);
            commands::synth(&cfg, &out)
        }
        Command::Featurize { input, out } => commands::featurize(&cfg, &input, &out),
        Command::Train { input, out } => commands::train(&cfg, &input, &out),
        Command::Predict { model, input, out } => commands::predict(&model, &input, &out),
        Command::Evaluate { input, out } => commands::evaluate(&cfg, &input, &out),
        Command::Sweep { out, bank, units } => {
            set_sources(&mut cfg, bank, units);
            commands::sweep(&cfg, &out)
        }
        Command::Compare { out, bank, units } => {
            set_sources(&mut cfg, bank, units);
            let kinds = if cli.global.features.is_empty() {
                vec![FeatureKind::Cnn, FeatureKind::Spectrogram]
            } else {
                cli.global.features.clone()
            };
            commands::compare(&cfg, &kinds, &out)
        }
        Command::InitNetwork { out, channels } => commands::init_network(&cfg, cli.global.seed, channels, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.global.jobs {
        Some(0) => Err(Failure::usage("--jobs must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(Failure::usage(e.to_string())),
        },
        None => run(cli),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
