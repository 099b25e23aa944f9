//! The prepare, train, evaluate and diagnose commands driven from code on a
//! throwaway directory, the same steps the `popdebias` binary runs.
//!
//!     cargo run --release --example cli_pipeline

use std::fs;

use popdebias::cli::{cmd_diagnose, cmd_evaluate, cmd_prepare, cmd_train, DiagnoseArgs, PrepareArgs, RunManifest};
use popdebias::data::synthetic::{generate, SyntheticConfig};

fn main() -> popdebias::Result<()> {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let root = tmp.path();

    let raw = root.join("interactions.tsv");
    let ds = generate(&SyntheticConfig { n_users: 400, n_items: 200, interactions_per_user: 25, ..Default::default() })?;
    let lines: String = ds.interactions().iter().map(|(u, i)| format!("user{u}\titem{i}\n")).collect();
    fs::write(&raw, lines).expect("write interactions");

    let data = root.join("data");
    let stats = cmd_prepare(&PrepareArgs {
        input: raw,
        format: None,
        k_core: 10,
        test_per_item: None,
        target_fraction: Some(0.1),
        val_fraction: 0.1,
        seed: 0,
        outdir: data.clone(),
    })?;
    println!("{stats}\n");

    let config = root.join("config.json");
    fs::write(&config, r#"{"dim": 32, "lr": 0.01, "max_epochs": 15, "patience": 4, "seeds": [0, 1]}"#)
        .expect("write config");
    for run in cmd_train(&config, &data, &root.join("runs"))? {
        RunManifest::load(&run)?.verify()?;
        let report = cmd_evaluate(&run, &data, &[10, 20], None)?;
        let diag = cmd_diagnose(&DiagnoseArgs { checkpoint: Some(run.clone()), ..DiagnoseArgs::random_init(&data, 6, 0, &run) })?;
        let name = run.file_name().unwrap().to_string_lossy();
        println!(
            "{name}: Recall@20 {:.4}, entropy proxy layer 0 -> 6: {:.4} -> {:.4}",
            report.overall[&20].recall,
            diag.rows[0].entropy_proxy,
            diag.rows[6].entropy_proxy
        );
        print!("{}", report.group_csv());
    }
    Ok(())
}
