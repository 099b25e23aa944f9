//! Homogenization with depth: popular/unpopular item pairs drift together
//! as random embeddings are propagated through more layers.
//!
//!     cargo run --release --example oversmoothing [layers]

use popdebias::data::synthetic::{generate, SyntheticConfig};
use popdebias::diagnostics::{run_diagnostics, DEFAULT_PAIR_COUNT};
use popdebias::graph::build_adjacency;
use popdebias::model::{init_embeddings, propagate};

fn main() -> popdebias::Result<()> {
    let layers: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(8);
    let ds = generate(&SyntheticConfig { n_users: 300, n_items: 200, interactions_per_user: 20, ..Default::default() })?;
    let adj = build_adjacency(&ds)?;
    let x0 = init_embeddings(ds.m_users(), ds.n_items(), 64, 1)?.into_x0();
    let state = propagate(&x0, &adj, layers)?;
    let diag = run_diagnostics(&state, ds.item_degree(), ds.m_users(), DEFAULT_PAIR_COUNT, 1)?;
    print!("{}", diag.to_csv());
    println!(
        "entropy proxy non-increasing from layer 2: {}, cosine non-decreasing: {}",
        diag.tail_entropy_non_increasing, diag.tail_cosine_non_decreasing
    );
    Ok(())
}
