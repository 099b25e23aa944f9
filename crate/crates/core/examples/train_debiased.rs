//! Train the plain BPR baseline and the debiased objective on the same
//! long-tail split, then compare Recall@20 per popularity quintile.
//!
//!     cargo run --release --example train_debiased [seed]

use popdebias::data::synthetic::{generate, SyntheticConfig};
use popdebias::data::unbiased_split;
use popdebias::eval::{evaluate, Target};
use popdebias::graph::build_adjacency_from_pairs;
use popdebias::trainer::{train_seed, TrainConfig};

fn main() -> popdebias::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let seed: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let ds = generate(&SyntheticConfig::default())?;
    let split = unbiased_split(&ds, 5, 0.1, 7)?;
    let adj = build_adjacency_from_pairs(split.m_users, split.n_items, &split.train)?;

    let base = TrainConfig { dim: 32, lr: 0.01, max_epochs: 40, patience: 6, ..TrainConfig::default() };
    let runs = [
        ("baseline", TrainConfig { lambda1: 0.0, lambda2: 0.0, ..base.clone() }),
        ("debiased", base),
    ];
    for (name, config) in runs {
        let out = train_seed(&config, &split, &adj, seed, &mut |r| {
            eprint!("\r{name} epoch {:>2} loss {:.4} val recall {:.4}", r.epoch, r.total, r.val_recall);
        })?;
        eprintln!();
        let report = evaluate(&out.final_embeddings, &split, Target::Test, &[20], 5)?;
        let groups: Vec<String> = report.groups.iter().map(|g| format!("{} {:.3}", g.name, g.metrics[&20].recall)).collect();
        println!(
            "{name:<9} best epoch {:>2}  Recall@20 {:.4}  NDCG@20 {:.4}  [{}]",
            out.best_epoch,
            report.overall[&20].recall,
            report.overall[&20].ndcg,
            groups.join(", ")
        );
    }
    Ok(())
}
