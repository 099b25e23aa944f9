//! Central finite differences against the analytic gradient of the full
//! objective on a tiny graph.
//!
//!     cargo run --example gradient_check

use popdebias::data::synthetic::{generate, SyntheticConfig};
use popdebias::data::{make_batches, unbiased_split};
use popdebias::dense::Matrix;
use popdebias::graph::{build_adjacency_from_pairs, layer_weights, FrobeniusEstimator};
use popdebias::losses::{total_loss, AlignmentTerms, LossSettings};
use popdebias::model::{init_embeddings, perturbed_views, propagate, propagate_with_noise};

fn main() -> popdebias::Result<()> {
    let ds = generate(&SyntheticConfig { n_users: 12, n_items: 16, interactions_per_user: 6, n_communities: 2, ..Default::default() })?;
    let split = unbiased_split(&ds, 1, 0.1, 0)?;
    let adj = build_adjacency_from_pairs(split.m_users, split.n_items, &split.train)?;
    let layers = 2;
    let batch = make_batches(&split, 32, 0, 0.5)?.epoch(0).next().expect("one batch");
    let x0 = init_embeddings(split.m_users, split.n_items, 4, 3)?.into_x0();
    let (v1, v2) = perturbed_views(&propagate(&x0, &adj, layers)?, &adj, 0.1, 3)?;
    let settings = LossSettings {
        lambda1: 0.5,
        lambda2: 0.5,
        lambda3: 0.1,
        temperature: 0.2,
        alignment: Some(AlignmentTerms::hierarchical(&layer_weights(&adj, layers, FrobeniusEstimator::Exact)?)),
        contrast_w: 0.4,
    };

    // the noise is held fixed so the objective is a smooth function of x0
    let objective = |x: &Matrix| -> popdebias::Result<_> {
        let clean = propagate(x, &adj, layers)?;
        let a = propagate_with_noise(x, &adj, &v1.noise)?;
        let b = propagate_with_noise(x, &adj, &v2.noise)?;
        total_loss(&adj, &clean, Some((&a, &b)), &batch, &settings)
    };
    let (loss, grad) = objective(&x0)?;
    println!("loss {:.6}: rec {:.4} sa {:.4} cl {:.4} reg {:.4}", loss.total, loss.rec, loss.sa, loss.cl, loss.reg);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for r in 0..x0.rows() {
        for c in 0..x0.cols() {
            let mut plus = x0.clone();
            plus.set(r, c, x0.get(r, c) + h);
            let mut minus = x0.clone();
            minus.set(r, c, x0.get(r, c) - h);
            let numeric = (objective(&plus)?.0.total - objective(&minus)?.0.total) / (2.0 * h);
            let analytic = grad.grad_x0.get(r, c);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
    }
    println!("{} touched rows, max relative error {worst:.2e}", grad.touched_rows.len());
    Ok(())
}
