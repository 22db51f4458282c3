use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod svg;

use commands::{Ctx, FeatureSource};
use config::{CommonArgs, RunConfig};

#[derive(Parser)]
#[command(name = "featboot", version, about = "Bootstrap confidence regions for projections of learned features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureKind {
    Rcf,
    File,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a low-rank dataset: X.csv, y.csv, truth_coords.csv.
    SimulateLowrank {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Draw point-process images as raw tensors plus a manifest.
    SimulateImages {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of images (overrides `images.count`).
        #[arg(long)]
        count: Option<usize>,
        /// Also write PNG previews.
        #[arg(long)]
        png: bool,
    },
    /// Produce one feature CSV per extractor.
    Extract {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        features: FeatureKind,
        /// Image dataset directory (rcf).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Learning/inference split JSON (rcf); drawn from the seed if absent.
        #[arg(long)]
        split: Option<PathBuf>,
        /// Number of extractors to train (rcf; overrides `extract.replicates`).
        #[arg(long = "replicates")]
        extractor_count: Option<usize>,
        /// Feature CSVs to ingest (file).
        #[arg(long, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
    /// Bootstrap, align and summarize feature CSVs as confidence ellipses.
    Bootstrap {
        #[command(flatten)]
        common: CommonArgs,
        /// Feature CSVs, or directories holding features_*.csv.
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// True coordinates; enables coverage.json.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Render ellipses as SVG and summarize areas and eccentricities.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        ellipses: PathBuf,
        /// Single-column CSV used to shade samples.
        #[arg(long)]
        shade: Option<PathBuf>,
    },
    /// Full low-rank coverage experiment.
    ExperimentLowrank {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("FEATBOOT_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("FEATBOOT_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("FEATBOOT_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn context(common: &CommonArgs) -> anyhow::Result<Ctx> {
    let (cfg, text) = RunConfig::resolve(common)?;
    Ok(Ctx { cfg, text })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_threads()?;
    match cli.command {
        Command::SimulateLowrank { common } => commands::simulate_lowrank(&context(&common)?),
        Command::SimulateImages { common, count, png } => {
            let mut ctx = context(&common)?;
            if let Some(c) = count {
                ctx.cfg.images.count = c;
            }
            ctx.cfg.images.png |= png;
            commands::simulate_images(&ctx)
        }
        Command::Extract { common, features, data, split, extractor_count, inputs } => {
            let mut ctx = context(&common)?;
            if let Some(r) = extractor_count {
                ctx.cfg.extract.replicates = r;
            }
            let source = match features {
                FeatureKind::Rcf => FeatureSource::Rcf {
                    data: data.ok_or_else(|| anyhow::anyhow!("--features rcf needs --data <dir>"))?,
                    split,
                },
                FeatureKind::File => FeatureSource::Files(inputs),
            };
            commands::extract(&ctx, &source)
        }
        Command::Bootstrap { common, inputs, truth } => {
            commands::bootstrap(&context(&common)?, &inputs, truth.as_deref())
        }
        Command::Report { common, ellipses, shade } => {
            commands::report(&context(&common)?, &ellipses, shade.as_deref())
        }
        Command::ExperimentLowrank { common } => commands::experiment_lowrank(&context(&common)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
