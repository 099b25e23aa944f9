//! Degree-weighted item popularity and the Gini weight that balances the
//! popular and unpopular contrastive terms.
//!
//!     cargo run --example popularity_gini

use popdebias::data::synthetic::{generate, SyntheticConfig};
use popdebias::graph::build_adjacency;
use popdebias::popularity::{contrast_weight, gini, PopularityStats, DEFAULT_EPSILON};

fn main() -> popdebias::Result<()> {
    for exponent in [0.0, 0.6, 1.2, 1.8] {
        let ds = generate(&SyntheticConfig { zipf_exponent: exponent, ..Default::default() })?;
        let adj = build_adjacency(&ds)?;
        let stats = PopularityStats::compute(&adj, ds.user_degree(), DEFAULT_EPSILON)?;
        let raw: Vec<f64> = ds.item_degree().iter().map(|&d| d as f64).collect();
        println!(
            "zipf {exponent:.1}: gini of raw degree {:.3}, of weighted popularity {:.3}, contrast weight {:.3}",
            gini(&raw)?,
            stats.gini,
            contrast_weight(&stats)
        );
    }
    Ok(())
}
