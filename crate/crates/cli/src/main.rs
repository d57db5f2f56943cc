//! `breastsos` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.

mod commands;
mod config;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BuildArgs, EstimateArgs, GenPhantomArgs, ProcessArgs, RenderArgs, SimulateArgs};
use config::ConfigFile;

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "BREASTSOS_OUT_ROOT";

#[derive(Parser)]
#[command(name = "breastsos", version, about = "Breast phantom simulation and IQ dataset pipeline")]
struct Cli {
    /// JSON file with flag values keyed by flag name; command-line flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root for outputs whose `--out` is not given.
    #[arg(long, global = true, env = OUT_ROOT_ENV, default_value = ".", hide = true)]
    out_root: PathBuf,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compose one phantom and write it to a directory.
    GenPhantom(GenPhantomArgs),
    /// Simulate plane-wave transmissions through a phantom.
    Simulate(SimulateArgs),
    /// Process channel data into beamformed IQ images.
    Process(ProcessArgs),
    /// Generate a corpus with a train/validation manifest.
    BuildDataset(BuildArgs),
    /// Speckle-brightness sweep on channel data, or error report on a corpus.
    Estimate(EstimateArgs),
    /// Render B-modes and sound-speed maps of a sample as PNG.
    Render(RenderArgs),
}

#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn usage(msg: impl std::fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        use breastsos::Error as E;
        for cause in e.chain() {
            if let Some(err) = cause.downcast_ref::<E>() {
                return match err {
                    E::Parameter { .. } | E::Format { .. } | E::Json { .. } => Failure::Usage(e),
                    E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => Failure::Usage(e),
                    _ => Failure::Runtime(e),
                };
            }
        }
        Failure::Runtime(e)
    }
}

impl From<breastsos::Error> for Failure {
    fn from(e: breastsos::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let root = cli.out_root;
    match cli.command {
        Command::GenPhantom(a) => commands::gen_phantom(&file.merge(&a)?, &file, &root),
        Command::Simulate(a) => commands::simulate(&file.merge(&a)?, &file, &root),
        Command::Process(a) => commands::process(&file.merge(&a)?, &file, &root),
        Command::BuildDataset(a) => commands::build_dataset(&file.merge(&a)?, &file, &root),
        Command::Estimate(a) => commands::estimate(&file.merge(&a)?, &file, &root),
        Command::Render(a) => commands::render(&file.merge(&a)?, &file, &root),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
