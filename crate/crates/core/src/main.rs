use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use popdebias::cli::{cmd_diagnose, cmd_evaluate, cmd_prepare, cmd_train, DiagnoseArgs, PrepareArgs};
use popdebias::data::Format;

#[derive(Parser)]
#[command(name = "popdebias", version, about = "Popularity-debiased graph collaborative filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter raw interactions and write the train/val/test split.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        /// tsv or csv; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<String>,
        #[arg(long, default_value_t = 10)]
        k_core: usize,
        #[arg(long, conflicts_with = "target_fraction")]
        test_per_item: Option<usize>,
        #[arg(long)]
        target_fraction: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        val_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Train one model per configured seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Score a trained run on the test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "20")]
        ks: Vec<usize>,
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
    /// Per-layer entropy proxy and cosine similarity of item pairs.
    Diagnose {
        #[arg(long, required_unless_present = "random_init", conflicts_with = "random_init")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        random_init: bool,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        layers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long)]
        outdir: Option<PathBuf>,
    },
}

fn threads_from_env() -> usize {
    std::env::var("GSDA_THREADS").ok().and_then(|v| v.parse().ok()).filter(|&n| n > 0).unwrap_or(1)
}

fn run(cli: Cli) -> popdebias::Result<()> {
    match cli.command {
        Command::Prepare { input, format, k_core, test_per_item, target_fraction, val_fraction, seed, outdir } => {
            let format = match format.as_deref() {
                None => None,
                Some("tsv") => Some(Format::Tsv),
                Some("csv") => Some(Format::Csv),
                Some(other) => return Err(popdebias::Error::Format(format!("unknown format {other:?}"))),
            };
            let stats = cmd_prepare(&PrepareArgs { input, format, k_core, test_per_item, target_fraction, val_fraction, seed, outdir })?;
            println!("{stats}");
        }
        Command::Train { config, data_dir, outdir } => {
            for dir in cmd_train(&config, &data_dir, &outdir)? {
                println!("{}", dir.display());
            }
        }
        Command::Evaluate { checkpoint, data_dir, ks, outdir } => {
            let report = cmd_evaluate(&checkpoint, &data_dir, &ks, outdir.as_deref())?;
            for (k, m) in &report.overall {
                println!("recall@{k} {:.4}  hr@{k} {:.4}  ndcg@{k} {:.4}", m.recall, m.hr, m.ndcg);
            }
        }
        Command::Diagnose { checkpoint, random_init: _, data_dir, layers, seed, dim, pairs, outdir } => {
            let outdir = outdir.or_else(|| checkpoint.clone()).unwrap_or_else(|| data_dir.clone());
            let diag = cmd_diagnose(&DiagnoseArgs { checkpoint, data_dir, layers, seed, dim, pairs, outdir })?;
            print!("{}", diag.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads_from_env()).build_global() {
        log::warn!("could not size thread pool: {e}");
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
