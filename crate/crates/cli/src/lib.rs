//! Command-line surface: `gen-data`, `train`, `eval` and `report`.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use bosc::data::{Preset, ProcessingOp};
use bosc::inference::ScoreKind;
use bosc::Mode;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Relative output paths are resolved against this directory (default: cwd).
pub const OUTPUT_ROOT_ENV: &str = "BOSC_OUTPUT_ROOT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] bosc::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bosc", version, about = "Backdoor-based open-set classification")]
pub struct Cli {
    /// Output root for relative paths.
    #[arg(long, global = true, env = OUTPUT_ROOT_ENV)]
    pub output_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the step being run.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    #[value(name = "s1-analog")]
    S1,
    #[value(name = "s2-analog")]
    S2,
    #[value(name = "s3-analog")]
    S3,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::S1 => Preset::S1Analog,
            PresetArg::S2 => Preset::S2Analog,
            PresetArg::S3 => Preset::S3Analog,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Bosc,
    Baseline,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Bosc => Mode::Bosc,
            ModeArg::Baseline => Mode::Baseline,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScoresArg {
    Msp,
    Mls,
    #[value(name = "mls-m")]
    MlsM,
    #[value(name = "tls-m")]
    TlsM,
    #[value(name = "cls-m")]
    ClsM,
    All,
}

impl ScoresArg {
    pub fn kinds(self) -> Vec<ScoreKind> {
        match self {
            ScoresArg::Msp => vec![ScoreKind::Msp],
            ScoresArg::Mls => vec![ScoreKind::Mls],
            ScoresArg::MlsM => vec![ScoreKind::MlsM],
            ScoresArg::TlsM => vec![ScoreKind::TlsM],
            ScoresArg::ClsM => vec![ScoreKind::ClsM],
            ScoresArg::All => ScoreKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and print its manifest path.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        /// Dataset directory, relative to the output root (default: the config's dataset root).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a classifier and write a run directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Run directory name (default: `<mode>-seed<seed>`).
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate a trained run on the test split.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum)]
        scores: Option<ScoresArg>,
        /// Target FPR for the calibrated threshold.
        #[arg(long)]
        fpr: Option<f64>,
        /// Processing applied to test images before inference, e.g. `blur=1.0`.
        #[arg(long, value_parser = parse_op)]
        robustness: Option<ProcessingOp>,
    },
    /// Merge run summaries into comparison tables.
    Report {
        /// Run directories (each evaluated at least once).
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Output file stem (default: `<output root>/report`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_op(s: &str) -> Result<ProcessingOp, String> {
    s.parse().map_err(|e: bosc::Error| e.to_string())
}

/// Parses `args` and runs the command. Help and version requests return
/// `Ok` after printing.
pub fn run_args<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.render().to_string()));
        }
    };
    commands::run(cli)
}
