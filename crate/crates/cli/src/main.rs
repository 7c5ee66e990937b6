use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfd_core::harness::experiment::aggregate_table;
use cfd_core::harness::{cmd_evaluate, cmd_generate_dataset, cmd_sweep, cmd_train, ExperimentConfig, SweepAxis};
use cfd_core::Error;
use clap::{Args, Parser, Subcommand};

/// Counterfactual diffusion editing experiments on brain phantoms.
#[derive(Parser)]
#[command(name = "cfd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key-value configuration file; defaults to the desk-200 preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the configured seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/test/healthy phantom splits as PGM files with manifests.
    GenerateDataset(Common),
    /// Train the tiny denoiser on the train split.
    Train(Common),
    /// Run every configured method and write metrics, gallery and manifest.
    Evaluate(Common),
    /// Re-run the evaluation over a grid on one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// k, U or encoding_ratio; defaults to `sweep.axis` from the config.
        #[arg(long)]
        axis: Option<String>,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    if let Ok(v) = std::env::var("CFD_THREADS") {
        config.threads = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("CFD_THREADS must be a non-negative integer, got `{v}`")))?;
    }
    Ok(config)
}

fn report(out: &Path, fingerprint: &str) {
    println!("wrote {} (fingerprint {fingerprint})", out.display());
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenerateDataset(c) => {
            let config = load_config(&c)?;
            let m = cmd_generate_dataset(&config, &c.out)?;
            report(&c.out, &m.fingerprint);
        }
        Command::Train(c) => {
            let config = load_config(&c)?;
            let r = cmd_train(&config, &c.out)?;
            if let (Some(first), Some(last)) = (r.losses.first(), r.losses.last()) {
                println!("loss {first:.6} -> {last:.6} over {} epochs", r.losses.len());
            }
            report(&c.out, &r.manifest.fingerprint);
        }
        Command::Evaluate(c) => {
            let config = load_config(&c)?;
            let r = cmd_evaluate(&config, &c.out)?;
            print!("{}", aggregate_table(&r.evaluation, &config.methods));
            report(&c.out, &r.manifest.fingerprint);
        }
        Command::Sweep { common, axis } => {
            let config = load_config(&common)?;
            let axis: SweepAxis = match axis {
                Some(a) => a.parse()?,
                None => config.sweep_axis,
            };
            let r = cmd_sweep(&config, axis, &common.out)?;
            for (value, eval) in &r.points {
                for m in &eval.metrics {
                    println!(
                        "{}={value} {} seed={} dice={:.4} frechet={:.4} indirect_error={:.3}",
                        axis.as_str(),
                        m.method,
                        m.seed,
                        m.dice,
                        m.frechet,
                        m.indirect_error
                    );
                }
            }
            report(&common.out, &r.manifest.fingerprint);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
