//! Degree-discounted item popularity and the Gini coefficient that sets the
//! contrastive mixing weight.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::AdjacencySet;

pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const GINI_MAX: f64 = 1.0 - 1e-12;
pub const CONTRAST_WEIGHT_MIN: f64 = 0.01;
pub const CONTRAST_WEIGHT_MAX: f64 = 0.99;

/// `w_u = 1 / (ln(1 + d_u) + epsilon)`.
pub fn user_weights(degrees: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    if degrees.iter().any(|&d| !(d >= 0.0)) {
        return Err(Error::param("degrees", "must be non-negative"));
    }
    Ok(degrees.iter().map(|&d| 1.0 / ((1.0 + d).ln() + epsilon)).collect())
}

/// `p*_i = sum_u w_u Â[u, M + i]`.
pub fn item_popularity(adj: &AdjacencySet, user_weights: &[f64]) -> Result<Vec<f64>> {
    let m = adj.m_users();
    if user_weights.len() != m {
        return Err(Error::Dimension(format!(
            "{} user weights for {m} users",
            user_weights.len()
        )));
    }
    let mut pop = vec![0.0; adj.n_items()];
    for (u, &w) in user_weights.iter().enumerate() {
        let (cols, vals) = adj.a_hat().row(u);
        for (&c, &v) in cols.iter().zip(vals) {
            if c >= m {
                pop[c - m] += w * v;
            }
        }
    }
    Ok(pop)
}

/// Gini coefficient `sum_i sum_j |x_i - x_j| / (2 n^2 mean)`, evaluated via
/// the sorted form `sum_k (2k - n + 1) x_(k) / (n^2 mean)` and clamped to
/// `[0, GINI_MAX]`. An all-zero input yields 0.
pub fn gini(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::param("values", "gini of an empty list"));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::param("values", "must be finite and non-negative"));
    }
    let n = values.len() as f64;
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        log::warn!("gini of all-zero popularity; returning 0");
        return Ok(0.0);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| (2.0 * k as f64 - n + 1.0) * x)
        .sum();
    // mean = total / n, so n^2 * mean = n * total.
    Ok((weighted / (n * total)).clamp(0.0, GINI_MAX))
}

/// Popularity statistics recomputed once per epoch from the training graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopularityStats {
    pub user_weight: Vec<f64>,
    pub item_pop: Vec<f64>,
    pub gini: f64,
    pub epsilon: f64,
}

impl PopularityStats {
    pub fn compute(adj: &AdjacencySet, user_degrees: &[usize], epsilon: f64) -> Result<Self> {
        let degrees: Vec<f64> = user_degrees.iter().map(|&d| d as f64).collect();
        let user_weight = user_weights(&degrees, epsilon)?;
        let item_pop = item_popularity(adj, &user_weight)?;
        let gini = gini(&item_pop)?;
        Ok(Self { user_weight, item_pop, gini, epsilon })
    }

    /// JSON summary: Gini, epsilon and popularity percentiles.
    pub fn dump(&self) -> serde_json::Value {
        let mut sorted = self.item_pop.clone();
        sorted.sort_by(f64::total_cmp);
        let pct = |p: f64| {
            let k = ((p / 100.0) * (sorted.len() - 1) as f64).round() as usize;
            sorted[k]
        };
        let percentiles: serde_json::Map<String, serde_json::Value> = [0.0, 10.0, 25.0, 50.0, 75.0, 90.0, 100.0]
            .iter()
            .map(|&p| (format!("p{p}"), serde_json::json!(pct(p))))
            .collect();
        serde_json::json!({
            "gini": self.gini,
            "epsilon": self.epsilon,
            "item_pop_percentiles": percentiles,
        })
    }
}

/// Contrastive mixing weight `w = gini(p*)`, kept inside
/// `[CONTRAST_WEIGHT_MIN, CONTRAST_WEIGHT_MAX]` so both branches train.
pub fn contrast_weight(stats: &PopularityStats) -> f64 {
    stats.gini.clamp(CONTRAST_WEIGHT_MIN, CONTRAST_WEIGHT_MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_adjacency_from_pairs;
    use proptest::prelude::*;

    fn naive_gini(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let mut s = 0.0;
        for a in v {
            for b in v {
                s += (a - b).abs();
            }
        }
        s / (2.0 * n * n * mean)
    }

    #[test]
    fn user_weight_cases() {
        let w = user_weights(&[0.0, std::f64::consts::E - 1.0], 1e-8).unwrap();
        assert!((w[0] - 1e8).abs() < 1e-6);
        assert!((w[1] - 1.0 / (1.0 + 1e-8)).abs() < 1e-12);
        let w = user_weights(&[10.0, 100.0], 1e-8).unwrap();
        assert!(w[1] < w[0]);
        let ratio = (1.0 / (11f64.ln() + 1e-8)) / (1.0 / (101f64.ln() + 1e-8));
        assert!((w[0] / w[1] - ratio).abs() < 1e-12);
        assert!(user_weights(&[1.0], 0.0).is_err());
    }

    #[test]
    fn two_node_popularity_is_half_weight() {
        let adj = build_adjacency_from_pairs(1, 1, &[(0, 0)]).unwrap();
        let p = item_popularity(&adj, &[0.7]).unwrap();
        assert!((p[0] - 0.35).abs() < 1e-15);
    }

    #[test]
    fn unlinked_item_has_zero_popularity() {
        let adj = build_adjacency_from_pairs(1, 2, &[(0, 0)]).unwrap();
        assert_eq!(item_popularity(&adj, &[1.0]).unwrap()[1], 0.0);
    }

    #[test]
    fn popularity_matches_dense_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pairs: Vec<(u32, u32)> =
            (0..60).map(|_| (rng.random_range(0..12), rng.random_range(0..18))).collect();
        let mut uniq = pairs.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let adj = build_adjacency_from_pairs(12, 18, &uniq).unwrap();
        let w: Vec<f64> = (0..12).map(|_| rng.random_range(0.1..2.0)).collect();
        let dense = adj.a_hat().to_dense();
        let got = item_popularity(&adj, &w).unwrap();
        for (i, g) in got.iter().enumerate() {
            let want: f64 = (0..12).map(|u| w[u] * dense.get(u, 12 + i)).sum();
            assert!((g - want).abs() < 1e-12);
        }
    }

    #[test]
    fn gini_cases() {
        assert_eq!(gini(&[2.0; 7]).unwrap(), 0.0);
        // Normalized form: sum |x_i - x_j| = 2, 2 n^2 mean = 4.
        assert!((gini(&[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(gini(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(gini(&[]).is_err());
        let mut spike = vec![0.0; 200];
        spike[17] = 1.0;
        let g = gini(&spike).unwrap();
        assert!((g - naive_gini(&spike)).abs() < 1e-12);
        assert!((g - 199.0 / 200.0).abs() < 1e-12);
    }

    #[test]
    fn gini_sorted_matches_double_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        assert!((gini(&v).unwrap() - naive_gini(&v)).abs() < 1e-12);
    }

    fn stats_with(gini: f64) -> PopularityStats {
        PopularityStats { user_weight: vec![], item_pop: vec![], gini, epsilon: 1e-8 }
    }

    #[test]
    fn contrast_weight_clamps() {
        assert_eq!(contrast_weight(&stats_with(0.0)), 0.01);
        assert_eq!(contrast_weight(&stats_with(GINI_MAX)), 0.99);
        assert_eq!(contrast_weight(&stats_with(0.4)), 0.4);
        let mut spike = vec![0.0; 1000];
        spike[0] = 3.0;
        assert_eq!(contrast_weight(&stats_with(gini(&spike).unwrap())), 0.99);
    }

    #[test]
    fn stats_dump_and_idempotence() {
        let adj = build_adjacency_from_pairs(3, 3, &[(0, 0), (1, 0), (2, 0), (0, 1), (1, 2)]).unwrap();
        let a = PopularityStats::compute(&adj, &[2, 2, 1], DEFAULT_EPSILON).unwrap();
        let b = PopularityStats::compute(&adj, &[2, 2, 1], DEFAULT_EPSILON).unwrap();
        assert_eq!(a, b);
        assert_eq!(contrast_weight(&a), contrast_weight(&b));
        let dump = a.dump();
        assert_eq!(dump["gini"], serde_json::json!(a.gini));
        assert!(dump["item_pop_percentiles"]["p50"].is_number());
    }

    proptest! {
        #[test]
        fn gini_invariants(v in prop::collection::vec(0.0f64..100.0, 1..60), c in 0.01f64..1e3, rot in 0usize..60) {
            let g = gini(&v).unwrap();
            prop_assert!((0.0..1.0).contains(&g));
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            prop_assert!((gini(&scaled).unwrap() - g).abs() < 1e-12);
            let mut perm = v.clone();
            let k = rot % perm.len();
            perm.rotate_left(k);
            perm.reverse();
            prop_assert!((gini(&perm).unwrap() - g).abs() < 1e-12);
        }

        #[test]
        fn popularity_monotone_in_user_weight(u in 0usize..4, bump in 0.0f64..5.0) {
            let adj = build_adjacency_from_pairs(4, 3, &[(0, 0), (1, 0), (1, 1), (2, 2), (3, 1), (3, 2)]).unwrap();
            let w = vec![1.0, 0.5, 2.0, 0.3];
            let base = item_popularity(&adj, &w).unwrap();
            let mut w2 = w.clone();
            w2[u] += bump;
            let after = item_popularity(&adj, &w2).unwrap();
            for (a, b) in base.iter().zip(&after) {
                prop_assert!(b >= a);
            }
        }
    }
}
