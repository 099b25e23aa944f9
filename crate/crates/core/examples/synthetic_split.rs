//! Generate a long-tail interaction log, k-core filter it, and cut the
//! popularity-neutral test split.
//!
//!     cargo run --example synthetic_split

use popdebias::data::synthetic::{generate, SyntheticConfig};
use popdebias::data::{k_core_filter, test_per_item_for_fraction, unbiased_split};

fn main() -> popdebias::Result<()> {
    let raw = generate(&SyntheticConfig::default())?;
    let ds = k_core_filter(&raw, 10)?;
    println!(
        "{} users, {} items, {} interactions ({} dropped by 10-core), density {:.2}%",
        ds.m_users(),
        ds.n_items(),
        ds.len(),
        raw.len() - ds.len(),
        100.0 * ds.density()
    );

    let mut degrees = ds.item_degree().to_vec();
    degrees.sort_unstable_by(|a, b| b.cmp(a));
    let head: usize = degrees[..degrees.len() / 5].iter().sum();
    println!("top 20% of items hold {:.1}% of interactions", 100.0 * head as f64 / ds.len() as f64);

    let quota = test_per_item_for_fraction(&ds, 0.1);
    let split = unbiased_split(&ds, quota, 0.1, 7)?;
    println!(
        "test quota {quota} per item: {} train / {} validation / {} test, {} items capped",
        split.train.len(),
        split.validation.len(),
        split.test.len(),
        split.capped_items
    );

    // every item contributes the same number of test interactions, so the
    // test set is flat in popularity while training stays long-tailed
    let mut per_item = vec![0usize; split.n_items];
    for &(_, i) in &split.test {
        per_item[i as usize] += 1;
    }
    let (lo, hi) = (per_item.iter().min().unwrap(), per_item.iter().max().unwrap());
    println!("test interactions per item range {lo}..={hi}");
    Ok(())
}
