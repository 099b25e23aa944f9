//! Small lambda grid on one seed, then the component ablations over
//! several seeds. Takes around ten minutes on one core.
//!
//!     cargo run --release --example ablations [n_seeds]

use popdebias::data::synthetic::{generate, SyntheticConfig};
use popdebias::data::unbiased_split;
use popdebias::eval::{evaluate, low_popularity_metrics, Target};
use popdebias::graph::build_adjacency_from_pairs;
use popdebias::trainer::{train_seed, TrainConfig};

fn main() -> popdebias::Result<()> {
    let n_seeds: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let ds = generate(&SyntheticConfig::default())?;
    let split = unbiased_split(&ds, 5, 0.1, 7)?;
    let adj = build_adjacency_from_pairs(split.m_users, split.n_items, &split.train)?;
    let base = TrainConfig { dim: 32, lr: 0.01, max_epochs: 40, patience: 6, ..TrainConfig::default() };

    // (test recall, test G1+G2 recall, validation G1+G2 recall)
    let run = |config: &TrainConfig, seed: u64| -> popdebias::Result<(f64, f64, f64)> {
        let out = train_seed(config, &split, &adj, seed, &mut |_| {})?;
        let fin = &out.final_embeddings;
        Ok((
            evaluate(fin, &split, Target::Test, &[20], 5)?.overall[&20].recall,
            low_popularity_metrics(fin, &split, Target::Test, 20, 5, 2)?.recall,
            low_popularity_metrics(fin, &split, Target::Validation, 20, 5, 2)?.recall,
        ))
    };

    println!("lambda1  lambda2  val G1+G2  test  test G1+G2");
    let mut best = (f64::NEG_INFINITY, base.clone());
    for lambda1 in [0.03, 0.1, 0.3] {
        for lambda2 in [0.003, 0.01, 0.03] {
            let c = TrainConfig { lambda1, lambda2, ..base.clone() };
            let (test, low, val_low) = run(&c, 0)?;
            println!("{lambda1:<7}  {lambda2:<7}  {val_low:.4}     {test:.4}  {low:.4}");
            if val_low > best.0 {
                best = (val_low, c);
            }
        }
    }
    let full = best.1;
    println!("selected lambda1 {} lambda2 {} on validation\n", full.lambda1, full.lambda2);

    let variants = [
        ("full", full.clone()),
        ("baseline", TrainConfig { lambda1: 0.0, lambda2: 0.0, ..full.clone() }),
        ("no_sa", TrainConfig { lambda1: 0.0, no_sa: true, ..full.clone() }),
        ("no_cl", TrainConfig { lambda2: 0.0, no_cl: true, ..full.clone() }),
        ("fixed_w", TrainConfig { fixed_w: Some(0.5), ..full.clone() }),
        ("sa0", TrainConfig { sa0: true, ..full.clone() }),
        ("saf", TrainConfig { saf: true, ..full.clone() }),
    ];
    println!("variant   mean Recall@20  mean G1+G2 Recall@20");
    for (name, config) in variants {
        let (mut all, mut low) = (0.0, 0.0);
        for seed in 0..n_seeds {
            let (t, l, _) = run(&config, seed)?;
            all += t;
            low += l;
        }
        println!("{name:<9} {:.4}          {:.4}", all / n_seeds as f64, low / n_seeds as f64);
    }
    Ok(())
}
