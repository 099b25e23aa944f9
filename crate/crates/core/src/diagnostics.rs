//! Layer-wise homogenization measurements on popular/unpopular item pairs:
//! the squared-distance entropy proxy and mean cosine similarity.

use std::fmt::Write as _;

use rand::seq::index;

use crate::dense::{dot, norm, squared_distance};
use crate::error::{Error, Result};
use crate::model::EmbeddingState;
use crate::seed;

pub const DEFAULT_PAIR_COUNT: usize = 1000;

/// `(popular, unpopular)` item pairs. Popular items come from the top half
/// of training popularity, unpopular ones from the bottom half.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub pairs: Vec<(u32, u32)>,
    pub seed: u64,
    pub count: usize,
}

/// Draws `count` distinct pairs. If fewer exist, all are used with a warning.
pub fn sample_pairs(item_popularity: &[usize], count: usize, seed: u64) -> Result<PairSample> {
    let n = item_popularity.len();
    if n < 2 {
        return Err(Error::param("items", "need at least two items to form pairs"));
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by(|&a, &b| item_popularity[b as usize].cmp(&item_popularity[a as usize]).then(a.cmp(&b)));
    let (top, bottom) = order.split_at(n / 2);
    let total = top.len() * bottom.len();
    let picks: Vec<usize> = if count >= total {
        if count > total {
            log::warn!("only {total} popular/unpopular pairs available, {count} requested");
        }
        (0..total).collect()
    } else {
        let mut rng = seed::rng(seed, 0xD1A6);
        let mut idx = index::sample(&mut rng, total, count).into_vec();
        idx.sort_unstable();
        idx
    };
    let pairs = picks.into_iter().map(|k| (top[k / bottom.len()], bottom[k % bottom.len()])).collect();
    Ok(PairSample { pairs, seed, count })
}

fn check(state: &EmbeddingState, pairs: &PairSample, layer: usize) -> Result<()> {
    if pairs.pairs.is_empty() {
        return Err(Error::param("pairs", "must be non-empty"));
    }
    if layer > state.num_layers() {
        return Err(Error::param("layer", format!("{layer} > L = {}", state.num_layers())));
    }
    Ok(())
}

/// Mean `||x_up - x_p||^2` at `layer`.
pub fn entropy_proxy(state: &EmbeddingState, pairs: &PairSample, layer: usize, m_users: usize) -> Result<f64> {
    check(state, pairs, layer)?;
    let x = state.layer(layer);
    let total: f64 = pairs
        .pairs
        .iter()
        .map(|&(p, up)| squared_distance(x.row(m_users + up as usize), x.row(m_users + p as usize)))
        .sum();
    Ok(total / pairs.pairs.len() as f64)
}

/// Mean cosine similarity at `layer` and the number of pairs used. Pairs
/// with a zero vector are skipped.
pub fn layer_similarity(state: &EmbeddingState, pairs: &PairSample, layer: usize, m_users: usize) -> Result<(f64, usize)> {
    check(state, pairs, layer)?;
    let x = state.layer(layer);
    let mut total = 0.0;
    let mut used = 0;
    for &(p, up) in &pairs.pairs {
        let (a, b) = (x.row(m_users + p as usize), x.row(m_users + up as usize));
        let denom = norm(a) * norm(b);
        if denom == 0.0 {
            continue;
        }
        total += (dot(a, b) / denom).clamp(-1.0, 1.0);
        used += 1;
    }
    if used < pairs.pairs.len() {
        log::warn!("skipped {} pairs with a zero vector at layer {layer}", pairs.pairs.len() - used);
    }
    if used == 0 {
        return Err(Error::param("pairs", "every pair has a zero vector"));
    }
    Ok((total / used as f64, used))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerRow {
    pub layer: usize,
    pub entropy_proxy: f64,
    pub mean_cosine: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerDiagnostics {
    pub rows: Vec<LayerRow>,
    /// Entropy proxy non-increasing over layers `2..=L`.
    pub tail_entropy_non_increasing: bool,
    /// Mean cosine non-decreasing over layers `2..=L`.
    pub tail_cosine_non_decreasing: bool,
}

impl LayerDiagnostics {
    pub fn num_layers(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,entropy_proxy,mean_cosine,n_pairs\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{:?},{:?},{}", r.layer, r.entropy_proxy, r.mean_cosine, r.n_pairs);
        }
        out
    }
}

pub fn run_diagnostics(
    state: &EmbeddingState,
    item_popularity: &[usize],
    m_users: usize,
    count: usize,
    seed: u64,
) -> Result<LayerDiagnostics> {
    let pairs = sample_pairs(item_popularity, count, seed)?;
    let rows = (0..=state.num_layers())
        .map(|l| {
            let (mean_cosine, n_pairs) = layer_similarity(state, &pairs, l, m_users)?;
            Ok(LayerRow { layer: l, entropy_proxy: entropy_proxy(state, &pairs, l, m_users)?, mean_cosine, n_pairs })
        })
        .collect::<Result<Vec<_>>>()?;
    let tail = rows.get(2..).unwrap_or(&[]);
    Ok(LayerDiagnostics {
        tail_entropy_non_increasing: tail.windows(2).all(|w| w[1].entropy_proxy <= w[0].entropy_proxy),
        tail_cosine_non_decreasing: tail.windows(2).all(|w| w[1].mean_cosine >= w[0].mean_cosine),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::Matrix;
    use crate::graph::AdjacencySet;
    use crate::model::propagate;
    use crate::sparse::SparseMatrix;
    use proptest::prelude::*;

    fn pairs(p: Vec<(u32, u32)>) -> PairSample {
        PairSample { count: p.len(), pairs: p, seed: 0 }
    }

    fn base_state(rows: Vec<f64>, d: usize) -> EmbeddingState {
        let n = rows.len() / d;
        EmbeddingState::new(Matrix::from_vec(n, d, rows).unwrap(), vec![]).unwrap()
    }

    #[test]
    fn sampled_pairs_respect_halves() {
        let pop: Vec<usize> = (0..40).map(|i| (i * 13) % 17).collect();
        let s = sample_pairs(&pop, 100, 3).unwrap();
        assert_eq!(s.pairs.len(), 100);
        let mut sorted = pop.clone();
        sorted.sort_unstable();
        let median = sorted[20];
        for &(p, up) in &s.pairs {
            assert_ne!(p, up);
            assert!(pop[p as usize] >= median && pop[up as usize] <= median);
        }
        assert_eq!(s, sample_pairs(&pop, 100, 3).unwrap());
        assert_eq!(sample_pairs(&pop, 1000, 3).unwrap().pairs.len(), 400);
    }

    #[test]
    fn proxy_by_hand() {
        // one user row, then items (1,2), (4,6), (0,0)
        let st = base_state(vec![9.0, 9.0, 1.0, 2.0, 4.0, 6.0, 0.0, 0.0], 2);
        let p = pairs(vec![(0, 1), (0, 2)]);
        // |(3,4)|^2 = 25, |(1,2)|^2 = 5
        assert_eq!(entropy_proxy(&st, &p, 0, 1).unwrap(), 15.0);
        let (cos, used) = layer_similarity(&st, &p, 0, 1).unwrap();
        assert_eq!(used, 1);
        assert!((cos - 16.0 / (5f64.sqrt() * 52f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn cosine_cases() {
        let st = base_state(vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0], 2);
        let (same, _) = layer_similarity(&st, &pairs(vec![(0, 1)]), 0, 1).unwrap();
        assert!((same - 1.0).abs() < 1e-12);
        assert_eq!(entropy_proxy(&st, &pairs(vec![(0, 1)]), 0, 1).unwrap(), 0.0);
        let (anti, _) = layer_similarity(&st, &pairs(vec![(0, 2)]), 0, 1).unwrap();
        assert!((anti + 1.0).abs() < 1e-12);
        let (orth, _) = layer_similarity(&st, &pairs(vec![(0, 3)]), 0, 1).unwrap();
        assert!(orth.abs() < 1e-12);
    }

    #[test]
    fn identity_propagation_is_flat_and_seeded() {
        let adj = AdjacencySet::from_normalized(SparseMatrix::identity(12), 2, 10).unwrap();
        let x0 = Matrix::from_fn(12, 3, |r, c| ((r * 7 + c * 3) % 5) as f64 - 1.5);
        let st = propagate(&x0, &adj, 4).unwrap();
        let pop: Vec<usize> = (0..10).collect();
        let d = run_diagnostics(&st, &pop, 2, 20, 9).unwrap();
        assert_eq!(d.rows.len(), 5);
        for r in &d.rows {
            assert_eq!(r.entropy_proxy, d.rows[0].entropy_proxy);
            assert_eq!(r.mean_cosine, d.rows[0].mean_cosine);
        }
        assert!(d.tail_entropy_non_increasing && d.tail_cosine_non_decreasing);
        assert_eq!(d.to_csv(), run_diagnostics(&st, &pop, 2, 20, 9).unwrap().to_csv());
        assert!(d.to_csv().starts_with("layer,entropy_proxy,mean_cosine,n_pairs\n"));
    }

    #[test]
    fn empty_pairs_rejected() {
        let st = base_state(vec![1.0, 1.0], 1);
        assert!(entropy_proxy(&st, &pairs(vec![]), 0, 1).is_err());
    }

    proptest! {
        #[test]
        fn proxy_rotation_invariant(
            rows in prop::collection::vec(-2.0f64..2.0, 22),
            theta in 0.0f64..6.3,
        ) {
            let st = base_state(rows.clone(), 2);
            let (s, c) = theta.sin_cos();
            let rotated: Vec<f64> = rows.chunks(2).flat_map(|v| [c * v[0] - s * v[1], s * v[0] + c * v[1]]).collect();
            let rt = base_state(rotated, 2);
            let p = pairs(vec![(0, 5), (1, 7), (2, 9), (3, 6)]);
            let a = entropy_proxy(&st, &p, 0, 1).unwrap();
            let b = entropy_proxy(&rt, &p, 0, 1).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
