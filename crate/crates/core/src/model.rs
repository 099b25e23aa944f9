//! Base embeddings, linear propagation `X^(l) = Â X^(l-1)`, mean-pooled
//! final representations, and noise-perturbed views for the contrastive
//! objective.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::dense::{dot, Matrix};
use crate::error::{Error, Result};
use crate::graph::AdjacencySet;
use crate::seed;

/// Base embeddings plus the propagated layers `1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    x0: Matrix,
    layers: Vec<Matrix>,
}

impl EmbeddingState {
    pub fn new(x0: Matrix, layers: Vec<Matrix>) -> Result<Self> {
        if layers.iter().any(|l| l.shape() != x0.shape()) {
            return Err(Error::Dimension("layer shapes differ from x0".into()));
        }
        Ok(Self { x0, layers })
    }

    pub fn x0(&self) -> &Matrix {
        &self.x0
    }

    pub fn into_x0(self) -> Matrix {
        self.x0
    }

    /// Layer `l`, where layer 0 is the base embedding.
    pub fn layer(&self, l: usize) -> &Matrix {
        if l == 0 {
            &self.x0
        } else {
            &self.layers[l - 1]
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn dim(&self) -> usize {
        self.x0.cols()
    }

    pub fn n_nodes(&self) -> usize {
        self.x0.rows()
    }
}

/// Mean-pooled user rows `z` and item rows `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalEmbeddings {
    pub users: Matrix,
    pub items: Matrix,
}

impl FinalEmbeddings {
    pub fn m_users(&self) -> usize {
        self.users.rows()
    }

    pub fn n_items(&self) -> usize {
        self.items.rows()
    }

    pub fn dim(&self) -> usize {
        self.users.cols()
    }
}

/// Xavier-uniform bound for a `dim x dim` layer: `sqrt(6 / (2 dim))`.
pub fn xavier_bound(dim: usize) -> f64 {
    (6.0 / (2 * dim) as f64).sqrt()
}

pub fn init_embeddings(m_users: usize, n_items: usize, dim: usize, seed: u64) -> Result<EmbeddingState> {
    if dim == 0 {
        return Err(Error::param("dim", "must be at least 1"));
    }
    let a = xavier_bound(dim);
    let mut rng = seed::rng(seed, 0x1A17);
    let x0 = Matrix::from_fn(m_users + n_items, dim, |_, _| rng.random_range(-a..=a));
    EmbeddingState::new(x0, Vec::new())
}

pub fn propagate(x0: &Matrix, adj: &AdjacencySet, layers: usize) -> Result<EmbeddingState> {
    let mut out = Vec::with_capacity(layers);
    for l in 0..layers {
        let prev = if l == 0 { x0 } else { &out[l - 1] };
        let next = adj.a_hat().spmm(prev)?;
        out.push(next);
    }
    EmbeddingState::new(x0.clone(), out)
}

/// Uniform mean over layers `0..=L`, split into users `[0, M)` and items
/// `[M, M+N)`.
pub fn finalize(state: &EmbeddingState, m_users: usize) -> FinalEmbeddings {
    let mut mean = state.x0.clone();
    for layer in &state.layers {
        mean.add_scaled(1.0, layer);
    }
    mean.scale(1.0 / (state.layers.len() + 1) as f64);
    FinalEmbeddings {
        users: mean.row_block(0, m_users),
        items: mean.row_block(m_users, mean.rows()),
    }
}

/// `s(u, i) = z_u · e_i`.
pub fn score(fin: &FinalEmbeddings, user: usize, item: usize) -> Result<f64> {
    if user >= fin.m_users() {
        return Err(Error::OutOfRange { what: "user", id: user, size: fin.m_users() });
    }
    if item >= fin.n_items() {
        return Err(Error::OutOfRange { what: "item", id: item, size: fin.n_items() });
    }
    Ok(dot(fin.users.row(user), fin.items.row(item)))
}

/// A propagated view together with the noise added after each layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedView {
    pub state: EmbeddingState,
    /// `noise[l-1]` was added to layer `l`.
    pub noise: Vec<Matrix>,
}

/// Two independently perturbed propagation passes. After each layer every
/// node receives `epsilon * sign(x) ⊙ δ / ||δ||` with `δ ~ U[0,1)^D`.
pub fn perturbed_views(
    state: &EmbeddingState,
    adj: &AdjacencySet,
    epsilon: f64,
    seed: u64,
) -> Result<(PerturbedView, PerturbedView)> {
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    let one = perturbed_view(state.x0(), adj, state.num_layers(), epsilon, seed::derive_seed(seed, 1))?;
    let two = perturbed_view(state.x0(), adj, state.num_layers(), epsilon, seed::derive_seed(seed, 2))?;
    Ok((one, two))
}

fn perturbed_view(
    x0: &Matrix,
    adj: &AdjacencySet,
    layers: usize,
    epsilon: f64,
    seed: u64,
) -> Result<PerturbedView> {
    let mut rng = seed::rng(seed, 0x0015E);
    let d = x0.cols();
    let mut out: Vec<Matrix> = Vec::with_capacity(layers);
    let mut noise = Vec::with_capacity(layers);
    let mut delta = vec![0.0; d];
    for l in 0..layers {
        let prev = if l == 0 { x0 } else { &out[l - 1] };
        let mut next = adj.a_hat().spmm(prev)?;
        let mut layer_noise = Matrix::zeros(next.rows(), d);
        for r in 0..next.rows() {
            delta.iter_mut().for_each(|v| *v = rng.random::<f64>());
            let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let row = next.row_mut(r);
            let noise_row = layer_noise.row_mut(r);
            for k in 0..d {
                let sign = if row[k] > 0.0 {
                    1.0
                } else if row[k] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                noise_row[k] = epsilon * sign * delta[k] / norm;
                row[k] += noise_row[k];
            }
        }
        out.push(next);
        noise.push(layer_noise);
    }
    Ok(PerturbedView { state: EmbeddingState::new(x0.clone(), out)?, noise })
}

/// Re-runs a view's propagation with fixed noise. The noise does not depend
/// on `x0` for gradient purposes, so each view layer is `Â^l x0` plus a
/// constant.
pub fn propagate_with_noise(x0: &Matrix, adj: &AdjacencySet, noise: &[Matrix]) -> Result<EmbeddingState> {
    let mut out: Vec<Matrix> = Vec::with_capacity(noise.len());
    for (l, n) in noise.iter().enumerate() {
        let prev = if l == 0 { x0 } else { &out[l - 1] };
        let mut next = adj.a_hat().spmm(prev)?;
        next.add_scaled(1.0, n);
        out.push(next);
    }
    EmbeddingState::new(x0.clone(), out)
}

/// Writes `node_id,role,dim_0..dim_{D-1}`; `node_id` is the global node
/// index (items offset by the user count).
pub fn write_embeddings_csv(path: &Path, users: &Matrix, items: &Matrix) -> Result<()> {
    if users.cols() != items.cols() {
        return Err(Error::Dimension("user and item dims differ".into()));
    }
    let d = users.cols();
    let mut out = String::from("node_id,role");
    for k in 0..d {
        let _ = write!(out, ",dim_{k}");
    }
    out.push('\n');
    let m = users.rows();
    for (role, mat, offset) in [("user", users, 0), ("item", items, m)] {
        for r in 0..mat.rows() {
            let _ = write!(out, "{},{role}", offset + r);
            for v in mat.row(r) {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`write_embeddings_csv`] back into
/// `(users, items)`.
pub fn read_embeddings_csv(path: &Path) -> Result<(Matrix, Matrix)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Format(format!("{}: empty", path.display())))?;
    let d = header.split(',').count().saturating_sub(2);
    if !header.starts_with("node_id,role") || d == 0 {
        return Err(Error::Format(format!("{}: bad header {header:?}", path.display())));
    }
    let mut users = Vec::new();
    let mut items = Vec::new();
    let (mut n_users, mut n_items) = (0, 0);
    for (k, line) in lines.enumerate() {
        let bad = || Error::MalformedLine { line: k + 2, reason: path.display().to_string() };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(bad());
        }
        let values = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        match fields[1] {
            "user" => {
                users.extend(values);
                n_users += 1;
            }
            "item" => {
                items.extend(values);
                n_items += 1;
            }
            _ => return Err(bad()),
        }
    }
    Ok((Matrix::from_vec(n_users, d, users)?, Matrix::from_vec(n_items, d, items)?))
}
