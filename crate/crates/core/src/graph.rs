//! Symmetric-normalized bipartite adjacency with self-loops, Frobenius norms
//! of its powers, and the entry-uniformization measure used to study
//! over-smoothing.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::InteractionDataset;
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::seed;
use crate::sparse::SparseMatrix;

/// Graphs at or above this many nodes use Hutchinson estimation under
/// [`FrobeniusEstimator::Auto`].
pub const EXACT_NODE_LIMIT: usize = 5_000;
pub const DEFAULT_PROBES: usize = 256;
pub const DEFAULT_SPREAD_CAP: usize = 2_000;

/// `D^{-1/2} (A + I) D^{-1/2}` over users `0..M` and items `M..M+N`.
#[derive(Debug, Clone)]
pub struct AdjacencySet {
    a_hat: SparseMatrix,
    /// Row sums of `A + I`.
    degrees: Vec<f64>,
    m_users: usize,
    n_items: usize,
}

impl AdjacencySet {
    pub fn a_hat(&self) -> &SparseMatrix {
        &self.a_hat
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn m_users(&self) -> usize {
        self.m_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_nodes(&self) -> usize {
        self.m_users + self.n_items
    }

    /// Wraps an already-normalized matrix, e.g. the identity for tests that
    /// disable propagation.
    pub fn from_normalized(a_hat: SparseMatrix, m_users: usize, n_items: usize) -> Result<Self> {
        let n = m_users + n_items;
        if a_hat.n_rows() != n || a_hat.n_cols() != n {
            return Err(Error::Dimension(format!(
                "adjacency is {}x{}, expected {n}x{n}",
                a_hat.n_rows(),
                a_hat.n_cols()
            )));
        }
        let degrees = a_hat.row_sums();
        Ok(Self { a_hat, degrees, m_users, n_items })
    }

    /// Whether the bipartite interaction graph (ignoring self-loops) is
    /// connected.
    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in self.a_hat.row(v).0 {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == n
    }
}

pub fn build_adjacency(dataset: &InteractionDataset) -> Result<AdjacencySet> {
    build_adjacency_from_pairs(dataset.m_users(), dataset.n_items(), dataset.interactions())
}

/// Assembles `A` from deduplicated `(user, item)` pairs, adds self-loops and
/// normalizes symmetrically by the degrees of `A + I`.
pub fn build_adjacency_from_pairs(
    m_users: usize,
    n_items: usize,
    pairs: &[(u32, u32)],
) -> Result<AdjacencySet> {
    if pairs.is_empty() {
        return Err(Error::NoInteractions);
    }
    let n = m_users + n_items;
    let mut degrees = vec![1.0; n];
    let mut triplets = Vec::with_capacity(2 * pairs.len() + n);
    for &(u, i) in pairs {
        let (u, i) = (u as usize, i as usize);
        if u >= m_users {
            return Err(Error::OutOfRange { what: "user", id: u, size: m_users });
        }
        if i >= n_items {
            return Err(Error::OutOfRange { what: "item", id: i, size: n_items });
        }
        degrees[u] += 1.0;
        degrees[m_users + i] += 1.0;
        triplets.push((u, m_users + i));
        triplets.push((m_users + i, u));
    }
    triplets.extend((0..n).map(|v| (v, v)));
    if let Some(v) = degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedNode(v));
    }
    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d: &f64| 1.0 / d.sqrt()).collect();
    let a_hat = SparseMatrix::from_triplets(
        n,
        n,
        triplets.into_iter().map(|(r, c)| (r, c, inv_sqrt[r] * inv_sqrt[c])),
    )?;
    Ok(AdjacencySet { a_hat, degrees, m_users, n_items })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum FrobeniusEstimator {
    /// Exact below [`EXACT_NODE_LIMIT`] nodes, Hutchinson with
    /// [`DEFAULT_PROBES`] probes above.
    Auto { seed: u64 },
    Exact,
    Hutchinson { probes: usize, seed: u64 },
}

impl Default for FrobeniusEstimator {
    fn default() -> Self {
        FrobeniusEstimator::Auto { seed: 0 }
    }
}

/// Per-layer alignment weights `w_l = ||Â^l||_F / sum_k ||Â^k||_F` for
/// `l = 0..=L`, with `Â^0 = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub norms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LayerWeights {
    pub fn from_norms(norms: Vec<f64>) -> Result<Self> {
        if norms.is_empty() || norms.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::param("norms", "must be non-empty, positive and finite"));
        }
        let total: f64 = norms.iter().sum();
        let weights = norms.iter().map(|x| x / total).collect();
        Ok(Self { norms, weights })
    }

    pub fn num_layers(&self) -> usize {
        self.norms.len() - 1
    }
}

pub fn layer_weights(
    adj: &AdjacencySet,
    layers: usize,
    estimator: FrobeniusEstimator,
) -> Result<LayerWeights> {
    if layers < 1 {
        return Err(Error::param("layers", "must be at least 1"));
    }
    let n = adj.n_nodes();
    let estimator = match estimator {
        FrobeniusEstimator::Auto { .. } if n < EXACT_NODE_LIMIT => FrobeniusEstimator::Exact,
        FrobeniusEstimator::Auto { seed } => {
            FrobeniusEstimator::Hutchinson { probes: DEFAULT_PROBES, seed }
        }
        other => other,
    };
    let mut norms = Vec::with_capacity(layers + 1);
    norms.push((n as f64).sqrt());
    match estimator {
        FrobeniusEstimator::Exact => {
            let mut power = adj.a_hat.clone();
            norms.push(power.frobenius_norm());
            for _ in 1..layers {
                power = power.matmul(&adj.a_hat)?;
                norms.push(power.frobenius_norm());
            }
        }
        FrobeniusEstimator::Hutchinson { probes, seed } => {
            if probes < 1 {
                return Err(Error::param("probes", "must be at least 1"));
            }
            // ||B||_F^2 = E ||B z||^2 for Rademacher z.
            let mut rng = seed::rng(seed, 0x4875_7463);
            let mut z = Matrix::from_fn(n, probes, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
            for _ in 0..layers {
                z = adj.a_hat.spmm(&z)?;
                let sq: f64 = z.as_slice().iter().map(|v| v * v).sum();
                norms.push((sq / probes as f64).sqrt());
            }
        }
        FrobeniusEstimator::Auto { .. } => unreachable!("resolved above"),
    }
    LayerWeights::from_norms(norms)
}

/// Largest absolute difference between any two entries of `Â^l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub layer: usize,
    pub spread: f64,
    /// The uniformization trend only applies to connected graphs.
    pub connected: bool,
}

/// `max |Â^l_{u,j} - Â^l_{p,k}|` for `l = 1..=max_layer`, computed on dense
/// powers. Refuses graphs with more than `node_cap` nodes.
pub fn entry_spread_series(
    adj: &AdjacencySet,
    max_layer: usize,
    node_cap: usize,
) -> Result<Vec<Spread>> {
    if max_layer < 1 {
        return Err(Error::param("layer", "must be at least 1"));
    }
    let n = adj.n_nodes();
    if n > node_cap {
        return Err(Error::GraphTooLarge { nodes: n, cap: node_cap });
    }
    let connected = adj.is_connected();
    if !connected {
        log::warn!("entry spread on a disconnected graph: uniformization is not expected");
    }
    let mut power = adj.a_hat.to_dense();
    let mut out = Vec::with_capacity(max_layer);
    for layer in 1..=max_layer {
        if layer > 1 {
            power = adj.a_hat.spmm(&power)?;
        }
        let (lo, hi) = power
            .as_slice()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        out.push(Spread { layer, spread: hi - lo, connected });
    }
    Ok(out)
}

pub fn entry_spread(adj: &AdjacencySet, layer: usize) -> Result<Spread> {
    Ok(*entry_spread_series(adj, layer, DEFAULT_SPREAD_CAP)?.last().unwrap())
}
