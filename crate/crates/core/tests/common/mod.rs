//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use popdebias::data::synthetic::{generate, SyntheticConfig};
use popdebias::data::{unbiased_split, SplitDataset, TrainBatch};
use popdebias::dense::Matrix;
use popdebias::graph::{build_adjacency, build_adjacency_from_pairs, layer_weights, AdjacencySet, FrobeniusEstimator};
use popdebias::losses::{total_loss, AlignmentTerms, GradientBuffer, LossSettings};
use popdebias::model::{init_embeddings, perturbed_views, propagate, propagate_with_noise, FinalEmbeddings};
use rand::{Rng, SeedableRng};

/// The long-tail desk dataset: 1000 users, 500 items, Zipf exponent 1.2,
/// about 50k interactions, 5 test interactions per item.
pub fn desk_split() -> SplitDataset {
    let ds = generate(&SyntheticConfig::default()).unwrap();
    unbiased_split(&ds, 5, 0.1, 7).unwrap()
}

pub fn train_adjacency(split: &SplitDataset) -> AdjacencySet {
    build_adjacency_from_pairs(split.m_users, split.n_items, &split.train).unwrap()
}

const STEP: f64 = 1e-5;

pub struct Fixture {
    pub adj: AdjacencySet,
    pub batch: TrainBatch,
    pub x0: Matrix,
    pub noise: (Vec<Matrix>, Vec<Matrix>),
    pub layers: usize,
}

pub fn fd_fixture(seed: u64) -> Fixture {
    let ds = generate(&SyntheticConfig {
        n_users: 10,
        n_items: 15,
        interactions_per_user: 5,
        zipf_exponent: 1.2,
        n_communities: 2,
        affinity: 0.5,
        seed,
    })
    .unwrap();
    let adj = build_adjacency(&ds).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut owned = vec![vec![false; 15]; 10];
    for &(u, i) in ds.interactions() {
        owned[u as usize][i as usize] = true;
    }
    let triples: Vec<(u32, u32, u32)> = ds
        .interactions()
        .iter()
        .step_by(2)
        .map(|&(u, i)| loop {
            let j = rng.random_range(0..15u32);
            if !owned[u as usize][j as usize] {
                break (u, i, j);
            }
        })
        .collect();
    let batch = TrainBatch::from_triples(triples, ds.item_degree(), 0.5);
    let layers = 2;
    let x0 = init_embeddings(10, 15, 4, seed).unwrap().into_x0();
    let state = propagate(&x0, &adj, layers).unwrap();
    let (a, b) = perturbed_views(&state, &adj, 0.1, seed).unwrap();
    Fixture { adj, batch, x0, noise: (a.noise, b.noise), layers }
}

pub fn settings(lambda1: f64, lambda2: f64, lambda3: f64, alignment: Option<AlignmentTerms>) -> LossSettings {
    LossSettings { lambda1, lambda2, lambda3, temperature: 0.2, alignment, contrast_w: 0.3 }
}

pub fn hierarchical(f: &Fixture) -> AlignmentTerms {
    AlignmentTerms::hierarchical(&layer_weights(&f.adj, f.layers, FrobeniusEstimator::Exact).unwrap())
}

pub fn objective(f: &Fixture, x0: &Matrix, settings: &LossSettings) -> (f64, GradientBuffer) {
    let clean = propagate(x0, &f.adj, f.layers).unwrap();
    let v1 = propagate_with_noise(x0, &f.adj, &f.noise.0).unwrap();
    let v2 = propagate_with_noise(x0, &f.adj, &f.noise.1).unwrap();
    let (lb, g) = total_loss(&f.adj, &clean, Some((&v1, &v2)), &f.batch, settings).unwrap();
    (lb.total, g)
}

/// Largest relative error `|a - n| / max(|a|, |n|, 1e-6)` over touched rows,
/// plus a check that untouched rows are exactly zero.
pub fn max_relative_error(f: &Fixture, settings: &LossSettings) -> f64 {
    let (_, g) = objective(f, &f.x0, settings);
    let mut worst: f64 = 0.0;
    for r in 0..f.x0.rows() {
        if !g.touched_rows.contains(&r) {
            assert!(g.grad_x0.row(r).iter().all(|&v| v == 0.0));
        }
        for c in 0..f.x0.cols() {
            let mut plus = f.x0.clone();
            plus.set(r, c, plus.get(r, c) + STEP);
            let mut minus = f.x0.clone();
            minus.set(r, c, minus.get(r, c) - STEP);
            let numeric = (objective(f, &plus, settings).0 - objective(f, &minus, settings).0) / (2.0 * STEP);
            let analytic = g.grad_x0.get(r, c);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}


/// Straightforward per-user evaluator: full sort of all items with masked
/// ones removed, counted hits, explicit DCG.
pub fn naive_recall_hr_ndcg(fin: &FinalEmbeddings, relevant: &[Vec<u32>], masked: &[Vec<u32>], k: usize) -> (f64, f64, f64, usize) {
    let (mut r, mut h, mut n, mut users) = (0.0, 0.0, 0.0, 0);
    for u in 0..fin.users.rows() {
        if relevant[u].is_empty() {
            continue;
        }
        users += 1;
        let mut scored: Vec<(f64, u32)> = (0..fin.items.rows() as u32)
            .filter(|i| !masked[u].contains(i))
            .map(|i| {
                let s: f64 = fin.users.row(u).iter().zip(fin.items.row(i as usize)).map(|(a, b)| a * b).sum();
                (s, i)
            })
            .collect();
        scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let top: Vec<u32> = scored.iter().take(k).map(|x| x.1).collect();
        let hits = top.iter().filter(|i| relevant[u].contains(i)).count();
        r += hits as f64 / relevant[u].len() as f64;
        h += if hits > 0 { 1.0 } else { 0.0 };
        let dcg: f64 = top
            .iter()
            .enumerate()
            .filter(|(_, i)| relevant[u].contains(i))
            .map(|(p, _)| 1.0 / ((p as f64) + 2.0).log2())
            .sum();
        let idcg: f64 = (0..relevant[u].len().min(k)).map(|p| 1.0 / ((p as f64) + 2.0).log2()).sum();
        n += dcg / idcg;
    }
    let c = users as f64;
    (r / c, h / c, n / c, users)
}

/// `Â^l` by repeated dense multiplication.
pub fn dense_power(a: &Matrix, l: usize) -> Matrix {
    let n = a.rows();
    let mut p = Matrix::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 });
    for _ in 0..l {
        p = Matrix::from_fn(n, n, |r, c| (0..n).map(|k| p.get(r, k) * a.get(k, c)).sum());
    }
    p
}
