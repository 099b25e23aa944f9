//! The four pipeline commands (prepare, train, evaluate, diagnose) as library
//! functions, plus the run manifest they share. The binary is a thin clap
//! wrapper over these.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    k_core_filter, parse_interactions, test_per_item_for_fraction, unbiased_split, Format, SplitDataset,
    SIDECAR_FILE, TEST_FILE, TRAIN_FILE, VAL_FILE,
};
use crate::diagnostics::{run_diagnostics, LayerDiagnostics, DEFAULT_PAIR_COUNT};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, Target, DEFAULT_GROUPS};
use crate::graph::build_adjacency_from_pairs;
use crate::model::{init_embeddings, propagate, read_embeddings_csv, write_embeddings_csv, FinalEmbeddings};
use crate::trainer::{train_seed, EpochRecord, TrainConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const HISTORY_FILE: &str = "history.jsonl";
pub const BASE_EMBEDDINGS_FILE: &str = "x0.csv";
pub const FINAL_EMBEDDINGS_FILE: &str = "final.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EVAL_FILE: &str = "eval.json";
pub const EVAL_GROUPS_FILE: &str = "eval_groups.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const DIVERGENCE_FILE: &str = "divergence.json";

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    /// File name to SHA-256 hex digest.
    pub files: BTreeMap<String, String>,
    pub m_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
}

impl DatasetFingerprint {
    fn of_files(dir: &Path, names: &[&str], m_users: usize, n_items: usize, n_interactions: usize) -> Result<Self> {
        let files = names
            .iter()
            .map(|name| Ok((name.to_string(), sha256_file(&dir.join(name))?)))
            .collect::<Result<_>>()?;
        Ok(Self { files, m_users, n_items, n_interactions })
    }
}

/// Reproducibility record written into every output directory before any
/// other artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub config_hash: Option<String>,
    /// Directory the fingerprinted files live in.
    pub data_dir: PathBuf,
    pub dataset: DatasetFingerprint,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<String>,
    pub created_unix: u64,
    pub version: String,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value, config_hash: Option<String>, data_dir: &Path, dataset: DatasetFingerprint, seeds: Vec<u64>, artifacts: &[&str]) -> Self {
        Self {
            command: command.to_string(),
            config,
            config_hash,
            data_dir: data_dir.to_path_buf(),
            dataset,
            seeds,
            artifacts: artifacts.iter().map(|s| s.to_string()).collect(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    fn save(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    /// Recomputes every fingerprinted file hash and reports the first
    /// mismatch.
    pub fn verify(&self) -> Result<()> {
        for (name, want) in &self.dataset.files {
            let got = sha256_file(&self.data_dir.join(name))?;
            if &got != want {
                return Err(Error::Format(format!("{name}: hash {got} does not match manifest {want}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareArgs {
    pub input: PathBuf,
    pub format: Option<Format>,
    pub k_core: usize,
    pub test_per_item: Option<usize>,
    pub target_fraction: Option<f64>,
    pub val_fraction: f64,
    pub seed: u64,
    pub outdir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub test_per_item: usize,
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<14}{:>12}", "users", self.users)?;
        writeln!(f, "{:<14}{:>12}", "items", self.items)?;
        writeln!(f, "{:<14}{:>12}", "interactions", self.interactions)?;
        writeln!(f, "{:<14}{:>11.3}%", "density", self.density * 100.0)?;
        write!(f, "split         {} train / {} val / {} test ({} per item)", self.train, self.validation, self.test, self.test_per_item)
    }
}

/// Reads raw interactions, applies k-core filtering and the per-item test
/// split, and writes the split files plus a manifest into `outdir`.
pub fn cmd_prepare(args: &PrepareArgs) -> Result<DatasetStats> {
    if !args.input.exists() {
        return Err(Error::io(&args.input, std::io::Error::new(std::io::ErrorKind::NotFound, "input not found")));
    }
    let format = args.format.unwrap_or_else(|| Format::from_path(&args.input));
    let raw = parse_interactions(&args.input, format)?;
    let ds = k_core_filter(&raw, args.k_core)?;
    let test_per_item = match (args.test_per_item, args.target_fraction) {
        (Some(_), Some(_)) => {
            return Err(Error::param("test_per_item", "give either test_per_item or target_fraction"))
        }
        (Some(q), None) => q,
        (None, Some(f)) => test_per_item_for_fraction(&ds, f),
        (None, None) => test_per_item_for_fraction(&ds, 0.1),
    };
    let split = unbiased_split(&ds, test_per_item, args.val_fraction, args.seed)?;
    create_dir(&args.outdir)?;
    let sidecar = split.sidecar(&ds, args.k_core);
    split.save(&args.outdir, &sidecar)?;

    let config = serde_json::json!({
        "input": args.input,
        "input_sha256": sha256_file(&args.input)?,
        "format": format,
        "k_core": args.k_core,
        "test_per_item": test_per_item,
        "val_fraction": args.val_fraction,
    });
    let files = [TRAIN_FILE, VAL_FILE, TEST_FILE, SIDECAR_FILE];
    let dataset = DatasetFingerprint::of_files(&args.outdir, &files, ds.m_users(), ds.n_items(), ds.len())?;
    let manifest = RunManifest::new("prepare", config, None, &args.outdir, dataset, vec![args.seed], &files);
    manifest.save(&args.outdir)?;

    Ok(DatasetStats {
        users: ds.m_users(),
        items: ds.n_items(),
        interactions: ds.len(),
        density: ds.density(),
        train: split.train.len(),
        validation: split.validation.len(),
        test: split.test.len(),
        test_per_item,
    })
}

fn load_split(data_dir: &Path) -> Result<(SplitDataset, DatasetFingerprint)> {
    let (split, _) = SplitDataset::load(data_dir)?;
    let n = split.train.len() + split.validation.len() + split.test.len();
    let fp = DatasetFingerprint::of_files(data_dir, &[TRAIN_FILE, VAL_FILE, TEST_FILE, SIDECAR_FILE], split.m_users, split.n_items, n)?;
    Ok((split, fp))
}

/// Metadata stored next to the embedding dumps of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: TrainConfig,
    pub config_hash: String,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_recall: f64,
    pub epochs_run: usize,
    pub layer_weights: Vec<f64>,
}

pub fn run_dir_name(config: &TrainConfig, seed: u64) -> String {
    format!("run-{}-seed{seed}", config.hash())
}

/// Trains once per configured seed. Each seed gets its own run directory
/// under `outdir`; the directories are returned in seed order.
pub fn cmd_train(config_path: &Path, data_dir: &Path, outdir: &Path) -> Result<Vec<PathBuf>> {
    let text = fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let config = TrainConfig::from_json(&text)?;
    let (split, fingerprint) = load_split(data_dir)?;
    let adj = build_adjacency_from_pairs(split.m_users, split.n_items, &split.train)?;
    let config_value = serde_json::to_value(&config).map_err(|e| Error::json("config", e))?;

    let mut dirs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let dir = outdir.join(run_dir_name(&config, seed));
        create_dir(&dir)?;
        RunManifest::new(
            "train",
            config_value.clone(),
            Some(config.hash()),
            data_dir,
            fingerprint.clone(),
            config.seeds.clone(),
            &[HISTORY_FILE, BASE_EMBEDDINGS_FILE, FINAL_EMBEDDINGS_FILE, CHECKPOINT_FILE],
        )
        .save(&dir)?;

        let mut history = String::new();
        let mut on_epoch = |r: &EpochRecord| {
            history.push_str(&serde_json::to_string(r).expect("record serializes"));
            history.push('\n');
        };
        let result = train_seed(&config, &split, &adj, seed, &mut on_epoch);
        let history_path = dir.join(HISTORY_FILE);
        fs::write(&history_path, &history).map_err(|e| Error::io(&history_path, e))?;
        let outcome = match result {
            Ok(o) => o,
            Err(e @ Error::Divergence(_)) => {
                write_json(&dir.join(DIVERGENCE_FILE), &serde_json::json!({ "seed": seed, "error": e.to_string() }))?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        let m = split.m_users;
        write_embeddings_csv(
            &dir.join(BASE_EMBEDDINGS_FILE),
            &outcome.x0.row_block(0, m),
            &outcome.x0.row_block(m, m + split.n_items),
        )?;
        let fin = &outcome.final_embeddings;
        write_embeddings_csv(&dir.join(FINAL_EMBEDDINGS_FILE), &fin.users, &fin.items)?;
        write_json(
            &dir.join(CHECKPOINT_FILE),
            &CheckpointMeta {
                config: config.clone(),
                config_hash: config.hash(),
                seed,
                best_epoch: outcome.best_epoch,
                best_val_recall: outcome.best_val_recall,
                epochs_run: outcome.history.len(),
                layer_weights: outcome.layer_weights.weights.clone(),
            },
        )?;
        log::info!("seed {seed}: best val recall {:.4} at epoch {}", outcome.best_val_recall, outcome.best_epoch);
        dirs.push(dir);
    }
    Ok(dirs)
}

fn load_final(checkpoint: &Path, split: &SplitDataset) -> Result<FinalEmbeddings> {
    let (users, items) = read_embeddings_csv(&checkpoint.join(FINAL_EMBEDDINGS_FILE))?;
    if users.rows() != split.m_users || items.rows() != split.n_items {
        return Err(Error::Dimension(format!(
            "checkpoint has {}x{} nodes, data has {}x{}",
            users.rows(),
            items.rows(),
            split.m_users,
            split.n_items
        )));
    }
    Ok(FinalEmbeddings { users, items })
}

/// Evaluates a run directory's final embeddings on the test split and
/// writes `eval.json` and `eval_groups.csv` into `outdir` (the run
/// directory when `None`).
pub fn cmd_evaluate(checkpoint: &Path, data_dir: &Path, ks: &[usize], outdir: Option<&Path>) -> Result<EvalReport> {
    if !checkpoint.is_dir() {
        return Err(Error::io(checkpoint, std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint directory not found")));
    }
    let (split, _) = SplitDataset::load(data_dir)?;
    let fin = load_final(checkpoint, &split)?;
    let report = evaluate(&fin, &split, Target::Test, ks, DEFAULT_GROUPS)?;
    let out = outdir.unwrap_or(checkpoint);
    create_dir(out)?;
    report.write(&out.join(EVAL_FILE), &out.join(EVAL_GROUPS_FILE))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseArgs {
    /// Run directory; `None` means random initialization.
    pub checkpoint: Option<PathBuf>,
    pub data_dir: PathBuf,
    pub layers: usize,
    pub seed: u64,
    /// Embedding width for random initialization.
    pub dim: usize,
    pub pairs: usize,
    pub outdir: PathBuf,
}

impl DiagnoseArgs {
    pub fn random_init(data_dir: impl Into<PathBuf>, layers: usize, seed: u64, outdir: impl Into<PathBuf>) -> Self {
        Self { checkpoint: None, data_dir: data_dir.into(), layers, seed, dim: 64, pairs: DEFAULT_PAIR_COUNT, outdir: outdir.into() }
    }
}

/// Propagates either checkpointed or freshly initialized base embeddings
/// through `layers` layers of the training graph and writes the per-layer
/// diagnostics CSV.
pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<LayerDiagnostics> {
    let (split, _) = SplitDataset::load(&args.data_dir)?;
    let (m, n) = (split.m_users, split.n_items);
    let x0 = match &args.checkpoint {
        Some(dir) => {
            let (users, items) = read_embeddings_csv(&dir.join(BASE_EMBEDDINGS_FILE))?;
            if users.rows() != m || items.rows() != n {
                return Err(Error::Dimension("checkpoint does not match data".into()));
            }
            users.vstack(&items)?
        }
        None => init_embeddings(m, n, args.dim, args.seed)?.into_x0(),
    };
    let adj = build_adjacency_from_pairs(m, n, &split.train)?;
    let state = propagate(&x0, &adj, args.layers)?;
    let diag = run_diagnostics(&state, &split.train_item_degrees(), m, args.pairs, args.seed)?;
    create_dir(&args.outdir)?;
    let path = args.outdir.join(DIAGNOSTICS_FILE);
    fs::write(&path, diag.to_csv()).map_err(|e| Error::io(&path, e))?;
    if !diag.tail_entropy_non_increasing {
        log::warn!("entropy proxy is not monotone over layers 2..={}", args.layers);
    }
    Ok(diag)
}
