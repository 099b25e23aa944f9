//! The training objective `rec + λ1·sa + λ2·cl + λ3·reg` and its exact
//! gradient with respect to the base embeddings.
//!
//! Every embedding the losses see is a linear function of `x0`: layer `l`
//! of the clean propagation is `Â^l x0`, and layer `l` of a perturbed view
//! is `Â^l x0` plus noise that is held constant for differentiation. Each
//! loss therefore only produces per-layer upstream gradients, and a single
//! pass of [`backprop_through_propagation`] maps their sum back to `x0`.

use serde::Serialize;

use crate::data::TrainBatch;
use crate::dense::{dot, norm, squared_distance, Matrix};
use crate::error::{Error, Result};
use crate::graph::{AdjacencySet, LayerWeights};
use crate::model::{finalize, EmbeddingState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub sa: f64,
    pub cl_p: f64,
    pub cl_up: f64,
    pub cl: f64,
    pub reg: f64,
    pub total: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub contrast_w: f64,
}

/// Gradient of a loss with respect to `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    pub grad_x0: Matrix,
    /// Rows with at least one non-zero entry, ascending.
    pub touched_rows: Vec<usize>,
}

impl GradientBuffer {
    pub fn from_matrix(grad_x0: Matrix) -> Self {
        let touched_rows = (0..grad_x0.rows())
            .filter(|&r| grad_x0.row(r).iter().any(|&v| v != 0.0))
            .collect();
        Self { grad_x0, touched_rows }
    }

    pub fn is_finite(&self) -> bool {
        self.grad_x0.is_finite()
    }
}

/// Upstream gradients `∂L/∂X^(l)` for `l = 0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients(pub Vec<Matrix>);

impl LayerGradients {
    pub fn zeros(layers: usize, rows: usize, dim: usize) -> Self {
        Self((0..=layers).map(|_| Matrix::zeros(rows, dim)).collect())
    }

    pub fn num_layers(&self) -> usize {
        self.0.len() - 1
    }

    /// Adds a gradient taken with respect to the mean-pooled embedding,
    /// which reaches every layer scaled by `1 / (L + 1)`.
    pub fn add_mean_pooled(&mut self, alpha: f64, grad: &Matrix) {
        let share = alpha / self.0.len() as f64;
        for g in &mut self.0 {
            g.add_scaled(share, grad);
        }
    }

    pub fn add(&mut self, alpha: f64, other: &LayerGradients) {
        for (g, o) in self.0.iter_mut().zip(&other.0) {
            g.add_scaled(alpha, o);
        }
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean BPR loss `-ln σ(s(u,i) - s(u,j))` over the triples, evaluated on the
/// stacked final embeddings `final_nodes` (users then items). The gradient
/// is with respect to `final_nodes`.
pub fn bpr_loss(final_nodes: &Matrix, m_users: usize, triples: &[(u32, u32, u32)]) -> (f64, Matrix) {
    let mut grad = Matrix::zeros(final_nodes.rows(), final_nodes.cols());
    if triples.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / triples.len() as f64;
    let mut loss = 0.0;
    let d = final_nodes.cols();
    let mut diff = vec![0.0; d];
    for &(u, i, j) in triples {
        let (u, i, j) = (u as usize, m_users + i as usize, m_users + j as usize);
        let zu = final_nodes.row(u);
        let (ei, ej) = (final_nodes.row(i), final_nodes.row(j));
        let x = dot(zu, ei) - dot(zu, ej);
        loss += softplus(-x);
        // d/dx softplus(-x) = -σ(-x)
        let coef = -sigmoid(-x) * scale;
        for k in 0..d {
            diff[k] = ei[k] - ej[k];
        }
        let zu = zu.to_vec();
        for (g, dv) in grad.row_mut(u).iter_mut().zip(&diff) {
            *g += coef * dv;
        }
        for (g, z) in grad.row_mut(i).iter_mut().zip(&zu) {
            *g += coef * z;
        }
        for (g, z) in grad.row_mut(j).iter_mut().zip(&zu) {
            *g -= coef * z;
        }
    }
    (loss * scale, grad)
}

/// Which embeddings the supervised alignment acts on.
#[derive(Debug, Clone, PartialEq)]
pub enum AlignmentTerms {
    /// `scale * sum_l weight_l * align(X^(l))` over the listed layers.
    Layers { weights: Vec<(usize, f64)>, scale: f64 },
    /// Alignment on the mean-pooled final embeddings with weight 1.
    Fused,
}

impl AlignmentTerms {
    /// Frobenius-weighted alignment over every layer, averaged by `L + 1`.
    pub fn hierarchical(lw: &LayerWeights) -> Self {
        Self::masked(lw, &vec![true; lw.weights.len()])
    }

    /// Same as [`AlignmentTerms::hierarchical`] but only over layers whose
    /// mask entry is set. Used for per-depth sweeps.
    pub fn masked(lw: &LayerWeights, mask: &[bool]) -> Self {
        let weights = lw
            .weights
            .iter()
            .enumerate()
            .filter(|(l, _)| mask.get(*l).copied().unwrap_or(false))
            .map(|(l, &w)| (l, w))
            .collect();
        AlignmentTerms::Layers { weights, scale: 1.0 / lw.weights.len() as f64 }
    }

    /// Single-level alignment on the base embeddings only.
    pub fn base_only() -> Self {
        AlignmentTerms::Layers { weights: vec![(0, 1.0)], scale: 1.0 }
    }
}

/// `(1/|U_b|) sum_u (1/|pairs_u|) sum_{i in up(u), j in p(u)} ||x_i - x_j||^2`
/// on one embedding matrix, accumulating `alpha * gradient` into `grad`.
fn align_one(x: &Matrix, m_users: usize, batch: &TrainBatch, alpha: f64, grad: &mut Matrix) -> f64 {
    if batch.users.is_empty() {
        return 0.0;
    }
    let user_scale = 1.0 / batch.users.len() as f64;
    let d = x.cols();
    let mut total = 0.0;
    for g in &batch.users {
        if g.popular.is_empty() || g.unpopular.is_empty() {
            continue;
        }
        let pair_scale = user_scale / (g.popular.len() * g.unpopular.len()) as f64;
        for &i in &g.unpopular {
            let ri = m_users + i as usize;
            for &j in &g.popular {
                let rj = m_users + j as usize;
                total += pair_scale * squared_distance(x.row(ri), x.row(rj));
                let c = 2.0 * alpha * pair_scale;
                for k in 0..d {
                    let diff = x.get(ri, k) - x.get(rj, k);
                    grad.as_mut_slice()[ri * d + k] += c * diff;
                    grad.as_mut_slice()[rj * d + k] -= c * diff;
                }
            }
        }
    }
    total
}

/// Hierarchical supervised alignment between each user's unpopular and
/// popular batch positives. Users with an empty side contribute zero.
pub fn alignment_loss(
    state: &EmbeddingState,
    terms: &AlignmentTerms,
    batch: &TrainBatch,
    m_users: usize,
) -> Result<(f64, LayerGradients)> {
    let layers = state.num_layers();
    let (n, d) = (state.n_nodes(), state.dim());
    let mut grads = LayerGradients::zeros(layers, n, d);
    match terms {
        AlignmentTerms::Layers { weights, scale } => {
            let mut loss = 0.0;
            for &(l, w) in weights {
                if l > layers {
                    return Err(Error::param("alignment layer", format!("{l} > L = {layers}")));
                }
                loss += scale * w * align_one(state.layer(l), m_users, batch, scale * w, &mut grads.0[l]);
            }
            Ok((loss, grads))
        }
        AlignmentTerms::Fused => {
            let fin = finalize(state, m_users);
            let pooled = fin.users.vstack(&fin.items)?;
            let mut g = Matrix::zeros(n, d);
            let loss = align_one(&pooled, m_users, batch, 1.0, &mut g);
            grads.add_mean_pooled(1.0, &g);
            Ok((loss, grads))
        }
    }
}

/// Output of [`contrastive_loss`]. Gradients are for the combined
/// `(1 - w) cl_p + w cl_up` and are taken with respect to each view's layers.
#[derive(Debug, Clone)]
pub struct ContrastiveOutput {
    pub cl_p: f64,
    pub cl_up: f64,
    pub cl: f64,
    pub grad_view1: LayerGradients,
    pub grad_view2: LayerGradients,
}

/// InfoNCE between two views over the batch's positive items. Anchor `a` in
/// view 1 is scored against every batch item in view 2 by cosine similarity
/// over `temperature`; the matching item is the positive. `cl_p` and `cl_up`
/// average over popular and unpopular anchors.
pub fn contrastive_loss(
    view1: &EmbeddingState,
    view2: &EmbeddingState,
    batch: &TrainBatch,
    temperature: f64,
    contrast_w: f64,
    m_users: usize,
) -> Result<ContrastiveOutput> {
    if !(temperature > 0.0) {
        return Err(Error::param("temperature", "must be positive"));
    }
    let layers = view1.num_layers();
    let (n, d) = (view1.n_nodes(), view1.dim());
    let mut grad_view1 = LayerGradients::zeros(layers, n, d);
    let mut grad_view2 = LayerGradients::zeros(layers, n, d);
    let items = &batch.items;
    let b = items.len();
    if b < 2 {
        if b == 1 {
            log::warn!("contrastive batch has a single item; loss is 0");
        }
        return Ok(ContrastiveOutput { cl_p: 0.0, cl_up: 0.0, cl: 0.0, grad_view1, grad_view2 });
    }

    // Row-major B x D blocks of mean-pooled, then unit-normalized, views.
    let pooled = |view: &EmbeddingState| -> Vec<f64> {
        let mut out = vec![0.0; b * d];
        for (row, &i) in out.chunks_exact_mut(d).zip(items) {
            let r = m_users + i as usize;
            for l in 0..=layers {
                for (a, v) in row.iter_mut().zip(view.layer(l).row(r)) {
                    *a += v;
                }
            }
            row.iter_mut().for_each(|a| *a /= (layers + 1) as f64);
        }
        out
    };
    let normalize = |mut rows: Vec<f64>| -> Result<(Vec<f64>, Vec<f64>)> {
        let mut norms = Vec::with_capacity(b);
        for row in rows.chunks_exact_mut(d) {
            let nrm = norm(row);
            if nrm == 0.0 {
                return Err(Error::Divergence("zero-norm embedding in contrastive view".into()));
            }
            row.iter_mut().for_each(|v| *v /= nrm);
            norms.push(nrm);
        }
        Ok((rows, norms))
    };
    let (h, h_norm) = normalize(pooled(view1))?;
    let (g, g_norm) = normalize(pooled(view2))?;

    let is_popular: Vec<bool> = items.iter().map(|i| batch.popular.binary_search(i).is_ok()).collect();
    let n_pop = is_popular.iter().filter(|&&p| p).count();
    let n_unpop = b - n_pop;

    let mut sum_p = 0.0;
    let mut sum_up = 0.0;
    let mut dh = vec![0.0; b * d];
    let mut dg = vec![0.0; b * d];
    let mut logits = vec![0.0; b];
    for a in 0..b {
        let ha = &h[a * d..(a + 1) * d];
        for (s, gc) in logits.iter_mut().zip(g.chunks_exact(d)) {
            *s = dot(ha, gc) / temperature;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let anchor_logit = logits[a];
        let mut denom = 0.0;
        for s in logits.iter_mut() {
            *s = (*s - max).exp();
            denom += *s;
        }
        let lse = max + denom.ln();
        let anchor_loss = lse - anchor_logit;
        let weight = if is_popular[a] {
            sum_p += anchor_loss;
            (1.0 - contrast_w) / n_pop as f64
        } else {
            sum_up += anchor_loss;
            contrast_w / n_unpop as f64
        };
        let dha = &mut dh[a * d..(a + 1) * d];
        for (c, (gc, dgc)) in g.chunks_exact(d).zip(dg.chunks_exact_mut(d)).enumerate() {
            let p = logits[c] / denom;
            let ds = weight * (p - if c == a { 1.0 } else { 0.0 }) / temperature;
            for ((x, y), (dx, dy)) in ha.iter().zip(gc).zip(dha.iter_mut().zip(dgc.iter_mut())) {
                *dx += ds * y;
                *dy += ds * x;
            }
        }
    }
    let cl_p = if n_pop > 0 { sum_p / n_pop as f64 } else { 0.0 };
    let cl_up = if n_unpop > 0 { sum_up / n_unpop as f64 } else { 0.0 };
    let cl = (1.0 - contrast_w) * cl_p + contrast_w * cl_up;

    // Through v / ||v||, then the mean over layers.
    let share = 1.0 / (layers + 1) as f64;
    let mut step = vec![0.0; d];
    for (idx, &item) in items.iter().enumerate() {
        let r = m_users + item as usize;
        let span = idx * d..(idx + 1) * d;
        for (unit, norm, upstream, grads) in [
            (&h[span.clone()], h_norm[idx], &dh[span.clone()], &mut grad_view1),
            (&g[span.clone()], g_norm[idx], &dg[span.clone()], &mut grad_view2),
        ] {
            let proj = dot(upstream, unit);
            for k in 0..d {
                step[k] = share * (upstream[k] - proj * unit[k]) / norm;
            }
            for layer in grads.0.iter_mut() {
                for (x, s) in layer.row_mut(r).iter_mut().zip(&step) {
                    *x += s;
                }
            }
        }
    }
    Ok(ContrastiveOutput { cl_p, cl_up, cl, grad_view1, grad_view2 })
}

/// `(1/2) sum ||x0_r||^2` over `rows`; the gradient is the rows themselves.
pub fn l2_reg(x0: &Matrix, rows: &[usize]) -> (f64, GradientBuffer) {
    let mut grad = Matrix::zeros(x0.rows(), x0.cols());
    let mut loss = 0.0;
    for &r in rows {
        let row = x0.row(r);
        loss += 0.5 * dot(row, row);
        grad.row_mut(r).copy_from_slice(row);
    }
    (loss, GradientBuffer::from_matrix(grad))
}

/// `∂L/∂x0 = sum_l (Â^T)^l ∂L/∂X^(l)`, evaluated Horner-style as
/// `U_0 + Â(U_1 + Â(U_2 + ...))`. `Â` is symmetric so no transpose is formed.
pub fn backprop_through_propagation(adj: &AdjacencySet, upstream: &LayerGradients) -> Result<GradientBuffer> {
    let mut layers = upstream.0.iter().rev();
    let mut acc = layers.next().expect("at least layer 0").clone();
    for u in layers {
        acc = adj.a_hat().spmm(&acc)?;
        acc.add_scaled(1.0, u);
    }
    Ok(GradientBuffer::from_matrix(acc))
}

/// Loss weights and switches for one evaluation of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSettings {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub temperature: f64,
    /// `None` disables alignment regardless of `lambda1`.
    pub alignment: Option<AlignmentTerms>,
    pub contrast_w: f64,
}

/// Full objective and its gradient with respect to `x0`. `views` may be
/// `None` when the contrastive term is disabled or `lambda2` is zero.
pub fn total_loss(
    adj: &AdjacencySet,
    state: &EmbeddingState,
    views: Option<(&EmbeddingState, &EmbeddingState)>,
    batch: &TrainBatch,
    settings: &LossSettings,
) -> Result<(LossBreakdown, GradientBuffer)> {
    let m = adj.m_users();
    let (n, d, layers) = (state.n_nodes(), state.dim(), state.num_layers());
    let fin = finalize(state, m);
    let pooled = fin.users.vstack(&fin.items)?;

    let (rec, rec_grad) = bpr_loss(&pooled, m, &batch.triples);
    let mut upstream = LayerGradients::zeros(layers, n, d);
    upstream.add_mean_pooled(1.0, &rec_grad);

    let mut out = LossBreakdown {
        rec,
        lambda1: settings.lambda1,
        lambda2: settings.lambda2,
        lambda3: settings.lambda3,
        contrast_w: settings.contrast_w,
        ..Default::default()
    };

    if let Some(terms) = settings.alignment.as_ref().filter(|_| settings.lambda1 != 0.0) {
        let (sa, g) = alignment_loss(state, terms, batch, m)?;
        out.sa = sa;
        upstream.add(settings.lambda1, &g);
    }
    if let Some((v1, v2)) = views.filter(|_| settings.lambda2 != 0.0) {
        let c = contrastive_loss(v1, v2, batch, settings.temperature, settings.contrast_w, m)?;
        out.cl_p = c.cl_p;
        out.cl_up = c.cl_up;
        out.cl = c.cl;
        upstream.add(settings.lambda2, &c.grad_view1);
        upstream.add(settings.lambda2, &c.grad_view2);
    }

    let mut grad = backprop_through_propagation(adj, &upstream)?.grad_x0;
    if settings.lambda3 != 0.0 {
        let (reg, g) = l2_reg(state.x0(), &batch.touched_rows(m));
        out.reg = reg;
        grad.add_scaled(settings.lambda3, &g.grad_x0);
    }
    out.total = out.rec + out.lambda1 * out.sa + out.lambda2 * out.cl + out.lambda3 * out.reg;
    Ok((out, GradientBuffer::from_matrix(grad)))
}
