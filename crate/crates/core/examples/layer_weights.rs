//! Per-layer alignment weights from Frobenius norms of adjacency powers,
//! exact against the Hutchinson estimate, plus how flat the powers get.
//!
//!     cargo run --release --example layer_weights

use popdebias::data::synthetic::{generate, SyntheticConfig};
use popdebias::graph::{build_adjacency, entry_spread_series, layer_weights, FrobeniusEstimator};

fn main() -> popdebias::Result<()> {
    let ds = generate(&SyntheticConfig { n_users: 400, n_items: 250, interactions_per_user: 20, ..Default::default() })?;
    let adj = build_adjacency(&ds)?;
    println!("{} nodes, connected: {}", adj.n_nodes(), adj.is_connected());

    let layers = 6;
    let exact = layer_weights(&adj, layers, FrobeniusEstimator::Exact)?;
    let est = layer_weights(&adj, layers, FrobeniusEstimator::Hutchinson { probes: 256, seed: 0 })?;
    println!("layer  ||A^l||_F exact  hutchinson  weight");
    for l in 0..=layers {
        println!("{l:>5}  {:>15.4}  {:>10.4}  {:.4}", exact.norms[l], est.norms[l], exact.weights[l]);
    }

    println!("\nlayer  max entry - min entry");
    for s in entry_spread_series(&adj, 16, 1000)?.iter().step_by(3) {
        println!("{:>5}  {:.5}", s.layer, s.spread);
    }
    Ok(())
}
