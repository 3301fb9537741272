use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use radar_pcd::cli::{self, Mode};
use radar_pcd::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "radar-pcd", version, about = "mmWave radar pointcloud reconstruction")]
struct Args {
    /// JSON configuration for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a sequence into a dataset directory, or a labelled corpus.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Write this many synthetic labelled scenes instead of a sequence.
        #[arg(long)]
        corpus: Option<usize>,
    },
    /// Build clouds from a dataset directory.
    Reconstruct {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "nca")]
        mode: Mode,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output directory; defaults to the dataset directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the denoising classifier on labelled scene directories.
    Train {
        #[arg(long, num_args = 1.., required = true)]
        data: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        val: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch metrics CSV; defaults to the checkpoint path with `.csv`.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long, default_value_t = 0.15)]
        label_radius: f64,
    },
    /// Remove noise and ghost points from an NCA and an SAA cloud.
    Denoise {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        nca: PathBuf,
        #[arg(long)]
        saa: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a cloud with a reference and print a JSON report.
    Evaluate {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = 0.15)]
        tr: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(args: Args) -> Result<()> {
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(Error::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Resource(e.to_string()))?;
    }
    let config = args.config.as_deref();
    let seed = args.seed.unwrap_or(0);
    match args.command {
        Command::Simulate { out, corpus: Some(n) } => {
            eprintln!("seed: {seed}");
            let dirs = cli::cmd_simulate_corpus(&cli::load_config(config)?, n, &out, seed)?;
            eprintln!("wrote {} scenes to {}", dirs.len(), out.display());
        }
        Command::Simulate { out, corpus: None } => {
            eprintln!("seed: {seed}");
            let ds = cli::cmd_simulate(&cli::load_config(config)?, &out, seed)?;
            eprintln!("wrote {} frames to {}", ds.manifest.frames, out.display());
        }
        Command::Reconstruct { data, mode, model, out } => {
            let out = out.unwrap_or_else(|| data.clone());
            let r = cli::cmd_reconstruct(&data, mode, model.as_deref(), &cli::load_config(config)?, &out)?;
            print_json(&r.timing);
        }
        Command::Train {
            data,
            val,
            out,
            metrics,
            label_radius,
        } => {
            let mut cfg: radar_pcd::rdm::TrainConfig = cli::load_config(config)?;
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            eprintln!("seed: {}", cfg.seed);
            let metrics = metrics.unwrap_or_else(|| out.with_extension("csv"));
            let summary = cli::cmd_train(&data, &val, &cfg, label_radius, &out, &metrics)?;
            print_json(&summary);
        }
        Command::Denoise { model, nca, saa, out } => {
            let cloud = cli::cmd_denoise(&model, &nca, &saa, &cli::load_config(config)?, &out)?;
            eprintln!("kept {} points", cloud.len());
        }
        Command::Evaluate {
            cloud,
            reference,
            tr,
            out,
        } => {
            eprintln!("seed: {seed}");
            let report = cli::cmd_evaluate(&cloud, &reference, tr, seed)?;
            if let Some(path) = out {
                radar_pcd::dataset::save_json(&report, Path::new(&path))?;
            }
            print_json(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
