//! End-to-end runs of the `popdebias` binary on small synthetic data.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use popdebias::cli::{
    RunManifest, CHECKPOINT_FILE, DIAGNOSTICS_FILE, EVAL_FILE, EVAL_GROUPS_FILE, FINAL_EMBEDDINGS_FILE, HISTORY_FILE,
    MANIFEST_FILE,
};
use popdebias::data::synthetic::{generate, SyntheticConfig};
use popdebias::data::{items_by_user, SplitDataset, InteractionDataset, TEST_FILE, TRAIN_FILE, VAL_FILE};
use popdebias::dense::Matrix;
use popdebias::model::write_embeddings_csv;
use tempfile::TempDir;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_popdebias"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_raw(dir: &Path) -> PathBuf {
    let ds = generate(&SyntheticConfig { n_users: 150, n_items: 80, interactions_per_user: 20, seed: 9, ..Default::default() })
        .unwrap();
    let path = dir.join("raw.tsv");
    let text: String = ds.interactions().iter().map(|(u, i)| format!("user{u}\tplace{i}\n")).collect();
    fs::write(&path, text).unwrap();
    path
}

fn prepare(tmp: &Path, name: &str) -> PathBuf {
    let raw = write_raw(tmp);
    let out = tmp.join(name);
    ok(&["prepare", "--input", s(&raw), "--k-core", "5", "--test-per-item", "2", "--seed", "3", "--outdir", s(&out)]);
    out
}

const BASELINE: &str = r#"{"dim": 16, "layers": 2, "lr": 0.01, "batch_size": 512, "lambda1": 0, "lambda2": 0,
    "max_epochs": 5, "patience": 3, "seeds": [0]}"#;

fn train(tmp: &Path, data: &Path, config: &str, name: &str) -> PathBuf {
    let cfg = tmp.join(format!("{name}.json"));
    fs::write(&cfg, config).unwrap();
    let runs = tmp.join(name);
    let stdout = ok(&["train", "--config", s(&cfg), "--data-dir", s(data), "--outdir", s(&runs)]);
    PathBuf::from(stdout.lines().next().expect("run dir printed"))
}

#[test]
fn prepare_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let a = prepare(tmp.path(), "a");
    let b = prepare(tmp.path(), "b");
    for f in [TRAIN_FILE, VAL_FILE, TEST_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let (split, _) = SplitDataset::load(&a).unwrap();
    assert!(!split.validation.is_empty() && !split.test.is_empty());
    let manifest = RunManifest::load(&a).unwrap();
    assert_eq!(manifest.command, "prepare");
    manifest.verify().unwrap();
}

#[test]
fn missing_input_fails() {
    let tmp = TempDir::new().unwrap();
    let out = bin(&["prepare", "--input", s(&tmp.path().join("nope.tsv")), "--outdir", s(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn baseline_train_evaluate_diagnose() {
    let tmp = TempDir::new().unwrap();
    let data = prepare(tmp.path(), "data");
    let start = Instant::now();
    let run = train(tmp.path(), &data, BASELINE, "runs");
    assert!(start.elapsed().as_secs() < 60);
    for f in [MANIFEST_FILE, HISTORY_FILE, FINAL_EMBEDDINGS_FILE, CHECKPOINT_FILE] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let manifest = RunManifest::load(&run).unwrap();
    assert_eq!(manifest.command, "train");
    manifest.verify().unwrap();
    assert!(fs::read_to_string(run.join(HISTORY_FILE)).unwrap().lines().count() >= 1);

    ok(&["evaluate", "--checkpoint", s(&run), "--data-dir", s(&data), "--ks", "10,20"]);
    let csv = fs::read_to_string(run.join(EVAL_GROUPS_FILE)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "group,K,recall,hr,ndcg");
    assert_eq!(lines.len() - 1, 5 * 2);
    let first = fs::read(run.join(EVAL_FILE)).unwrap();
    ok(&["evaluate", "--checkpoint", s(&run), "--data-dir", s(&data), "--ks", "10,20"]);
    assert_eq!(first, fs::read(run.join(EVAL_FILE)).unwrap());
    assert_eq!(csv, fs::read_to_string(run.join(EVAL_GROUPS_FILE)).unwrap());

    let diag = ok(&["diagnose", "--checkpoint", s(&run), "--data-dir", s(&data), "--layers", "4"]);
    assert_eq!(diag.lines().count(), 1 + 5);
    assert_eq!(diag, fs::read_to_string(run.join(DIAGNOSTICS_FILE)).unwrap());
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let tmp = TempDir::new().unwrap();
    let data = prepare(tmp.path(), "data");
    let config = r#"{"dim": 8, "layers": 2, "lr": 0.01, "batch_size": 512, "max_epochs": 2, "seeds": [5]}"#;
    let a = train(tmp.path(), &data, config, "a");
    let b = train(tmp.path(), &data, config, "b");
    for f in [HISTORY_FILE, FINAL_EMBEDDINGS_FILE, CHECKPOINT_FILE] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let da = ok(&["diagnose", "--random-init", "--data-dir", s(&data), "--seed", "2", "--outdir", s(&tmp.path().join("da"))]);
    let db = ok(&["diagnose", "--random-init", "--data-dir", s(&data), "--seed", "2", "--outdir", s(&tmp.path().join("db"))]);
    assert_eq!(da, db);
}

#[test]
fn invalid_configs_exit_nonzero() {
    let tmp = TempDir::new().unwrap();
    let data = prepare(tmp.path(), "data");
    for (name, cfg) in [("neg", r#"{"lambda1": -1}"#), ("nosa", r#"{"no_sa": true, "lambda1": 0.5}"#)] {
        let path = tmp.path().join(format!("{name}.json"));
        fs::write(&path, cfg).unwrap();
        let out = bin(&["train", "--config", s(&path), "--data-dir", s(&data), "--outdir", s(&tmp.path().join(name))]);
        assert!(!out.status.success(), "{name}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("invalid config"), "{name}");
    }
}

#[test]
fn memorized_test_set_scores_perfectly() {
    let tmp = TempDir::new().unwrap();
    let data = prepare(tmp.path(), "data");
    let (split, _) = SplitDataset::load(&data).unwrap();
    let test = items_by_user(split.m_users, &split.test);
    let max_per_user = test.iter().map(Vec::len).max().unwrap();
    assert!(max_per_user <= 20);
    // one dimension per item: a user scores 1 on its test items and 0 elsewhere
    let n = split.n_items;
    let users = Matrix::from_fn(split.m_users, n, |u, i| if test[u].contains(&(i as u32)) { 1.0 } else { 0.0 });
    let items = Matrix::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 });
    let ckpt = tmp.path().join("oracle");
    fs::create_dir_all(&ckpt).unwrap();
    write_embeddings_csv(&ckpt.join(FINAL_EMBEDDINGS_FILE), &users, &items).unwrap();
    ok(&["evaluate", "--checkpoint", s(&ckpt), "--data-dir", s(&data), "--ks", "20"]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(ckpt.join(EVAL_FILE)).unwrap()).unwrap();
    for metric in ["recall", "hr", "ndcg"] {
        assert_eq!(report["overall"]["20"][metric], 1.0, "{metric}");
    }
}

#[test]
fn bad_checkpoint_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let data = prepare(tmp.path(), "data");
    let out = bin(&["evaluate", "--checkpoint", s(&tmp.path().join("missing")), "--data-dir", s(&data)]);
    assert!(!out.status.success());
    let ckpt = tmp.path().join("wrong");
    fs::create_dir_all(&ckpt).unwrap();
    write_embeddings_csv(&ckpt.join(FINAL_EMBEDDINGS_FILE), &Matrix::zeros(3, 2), &Matrix::zeros(4, 2)).unwrap();
    let out = bin(&["evaluate", "--checkpoint", s(&ckpt), "--data-dir", s(&data)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint has 3x4 nodes"));
}

#[test]
fn random_init_diagnostics_have_one_row_per_layer() {
    let tmp = TempDir::new().unwrap();
    let data = prepare(tmp.path(), "data");
    let out = ok(&["diagnose", "--random-init", "--data-dir", s(&data), "--layers", "6", "--dim", "16"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "layer,entropy_proxy,mean_cosine,n_pairs");
    assert_eq!(lines.len(), 1 + 7);
    assert!(data.join(DIAGNOSTICS_FILE).is_file());
}

#[test]
fn density_is_interactions_over_grid() {
    let ds = InteractionDataset::from_pairs(4, 5, &[(0, 0), (1, 2), (3, 4)]).unwrap();
    assert_eq!(ds.density(), 3.0 / 20.0);
    // Gowalla after 10-core filtering
    let gowalla: f64 = 1_027_370.0 / (29_858.0 * 40_981.0);
    assert_eq!(format!("{:.3}%", gowalla * 100.0), "0.084%");
}
