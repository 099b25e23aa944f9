//! Mini-batch training with sparse Adam, validation-driven early stopping
//! and best-epoch checkpointing.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{make_batches, SplitDataset};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::eval::{evaluate_lists, target_lists, Target};
use crate::graph::{layer_weights, AdjacencySet, FrobeniusEstimator, LayerWeights};
use crate::losses::{total_loss, AlignmentTerms, GradientBuffer, LossBreakdown, LossSettings};
use crate::model::{finalize, init_embeddings, perturbed_views, propagate, FinalEmbeddings};
use crate::popularity::{contrast_weight, PopularityStats, DEFAULT_EPSILON};
use crate::seed::derive_seed;

fn default_dim() -> usize {
    64
}
fn default_layers() -> usize {
    3
}
fn default_lr() -> f64 {
    0.001
}
fn default_batch_size() -> usize {
    2048
}
// Both terms are batch means on the same scale as the BPR mean, so these are
// much smaller than weights quoted for sum-reduced losses. Tuned on the
// synthetic long-tail data in examples/ablations.rs.
fn default_lambda1() -> f64 {
    0.1
}
fn default_lambda2() -> f64 {
    0.01
}
fn default_lambda3() -> f64 {
    1e-4
}
fn default_epsilon_noise() -> f64 {
    0.1
}
fn default_temperature() -> f64 {
    0.2
}
fn default_group_ratio() -> f64 {
    0.5
}
fn default_patience() -> usize {
    10
}
fn default_max_epochs() -> usize {
    200
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_eval_k() -> usize {
    20
}
fn default_pop_epsilon() -> f64 {
    DEFAULT_EPSILON
}

/// Training hyperparameters. Unknown JSON keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_layers", alias = "L")]
    pub layers: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    #[serde(default = "default_lambda2")]
    pub lambda2: f64,
    #[serde(default = "default_lambda3")]
    pub lambda3: f64,
    #[serde(default = "default_epsilon_noise")]
    pub epsilon_noise: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_group_ratio")]
    pub group_ratio: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Validation Recall@K used for early stopping.
    #[serde(default = "default_eval_k")]
    pub eval_k: usize,
    #[serde(default = "default_pop_epsilon")]
    pub pop_epsilon: f64,
    #[serde(default)]
    pub frobenius: FrobeniusEstimator,
    #[serde(default)]
    pub no_sa: bool,
    #[serde(default)]
    pub no_cl: bool,
    /// Align base embeddings only.
    #[serde(default)]
    pub sa0: bool,
    /// Align the mean-pooled final embeddings.
    #[serde(default)]
    pub saf: bool,
    /// Replace the Gini contrastive weight with a constant.
    #[serde(default)]
    pub fixed_w: Option<f64>,
    /// Restrict hierarchical alignment to layers with a `true` entry.
    #[serde(default)]
    pub layer_mask: Option<Vec<bool>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::InvalidConfig(format!("{field}: {why}")));
        if self.dim == 0 {
            return bad("dim", "must be positive");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be finite and non-negative");
            }
        }
        if !(self.epsilon_noise > 0.0) {
            return bad("epsilon_noise", "must be positive");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature", "must be positive");
        }
        if !(self.group_ratio > 0.0 && self.group_ratio < 1.0) {
            return bad("group_ratio", "must lie in (0, 1)");
        }
        if !(self.pop_epsilon > 0.0) {
            return bad("pop_epsilon", "must be positive");
        }
        if self.patience == 0 || self.max_epochs == 0 || self.eval_k == 0 {
            return bad("patience/max_epochs/eval_k", "must be positive");
        }
        if self.seeds.is_empty() {
            return bad("seeds", "need at least one seed");
        }
        if self.sa0 && self.saf {
            return bad("sa0", "sa0 and saf are mutually exclusive");
        }
        if self.no_sa && self.lambda1 > 0.0 {
            return bad("no_sa", "contradicts lambda1 > 0");
        }
        if self.no_cl && self.lambda2 > 0.0 {
            return bad("no_cl", "contradicts lambda2 > 0");
        }
        if let Some(w) = self.fixed_w {
            if !(0.0..=1.0).contains(&w) {
                return bad("fixed_w", "must lie in [0, 1]");
            }
        }
        if let Some(mask) = &self.layer_mask {
            if mask.len() != self.layers + 1 {
                return bad("layer_mask", "needs one entry per layer 0..=L");
            }
            if self.sa0 || self.saf {
                return bad("layer_mask", "only applies to hierarchical alignment");
            }
        }
        Ok(())
    }

    /// Short stable digest of the canonical JSON form, used to name runs.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..6])
    }

    fn alignment(&self, lw: &LayerWeights) -> Option<AlignmentTerms> {
        if self.no_sa || self.lambda1 == 0.0 {
            None
        } else if self.sa0 {
            Some(AlignmentTerms::base_only())
        } else if self.saf {
            Some(AlignmentTerms::Fused)
        } else if let Some(mask) = &self.layer_mask {
            Some(AlignmentTerms::masked(lw, mask))
        } else {
            Some(AlignmentTerms::hierarchical(lw))
        }
    }

    fn uses_views(&self) -> bool {
        !self.no_cl && self.lambda2 > 0.0
    }
}

/// Adam restricted to the rows a gradient touches, with one step counter
/// per row so every row sees the same bias correction as dense Adam would
/// after that many updates of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub steps: Vec<u64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            steps: vec![0; rows],
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut Matrix, grad: &GradientBuffer, lr: f64) -> Result<()> {
        if params.shape() != grad.grad_x0.shape() || params.shape() != self.m.shape() {
            return Err(Error::Dimension("adam: parameter, moment and gradient shapes differ".into()));
        }
        if !grad.is_finite() {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        let d = params.cols();
        for &r in &grad.touched_rows {
            self.steps[r] += 1;
            let t = self.steps[r] as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let g = grad.grad_x0.row(r);
            let m = &mut self.m.as_mut_slice()[r * d..(r + 1) * d];
            let v = &mut self.v.as_mut_slice()[r * d..(r + 1) * d];
            let p = params.row_mut(r);
            for k in 0..d {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Mutable training state.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub x0: Matrix,
    pub adam: AdamState,
    pub epoch: usize,
    pub best_val_metric: f64,
    pub epochs_since_best: usize,
}

/// One line of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub rec: f64,
    pub sa: f64,
    pub cl_p: f64,
    pub cl_up: f64,
    pub cl: f64,
    pub reg: f64,
    pub total: f64,
    /// Contrastive mixing weight in effect (Gini or fixed).
    pub gini_w: f64,
    pub gini: f64,
    pub val_recall: f64,
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    /// Base embeddings of the best validation epoch.
    pub x0: Matrix,
    pub final_embeddings: FinalEmbeddings,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_recall: f64,
    pub layer_weights: LayerWeights,
}

impl TrainOutcome {
    pub fn history_jsonl(&self) -> String {
        self.history
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

/// Trains with the first configured seed.
pub fn train(config: &TrainConfig, split: &SplitDataset, adj: &AdjacencySet) -> Result<TrainOutcome> {
    train_seed(config, split, adj, config.seeds[0], &mut |_| {})
}

/// Trains with `seed`, calling `on_epoch` after every validation pass.
pub fn train_seed(
    config: &TrainConfig,
    split: &SplitDataset,
    adj: &AdjacencySet,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    config.validate()?;
    let (m, n) = (split.m_users, split.n_items);
    if adj.m_users() != m || adj.n_items() != n {
        return Err(Error::Dimension("adjacency does not match split".into()));
    }
    let lw = if config.layers == 0 {
        LayerWeights::from_norms(vec![(adj.n_nodes() as f64).sqrt()])?
    } else {
        layer_weights(adj, config.layers, config.frobenius)?
    };
    let user_degrees = split.train_user_degrees();
    let (val_relevant, val_masked) = target_lists(split, Target::Validation)?;
    let batches = make_batches(split, config.batch_size, derive_seed(seed, 0xBA7C), config.group_ratio)?;
    let view_seed = derive_seed(seed, 0x7E35);

    let mut state = TrainState {
        x0: init_embeddings(m, n, config.dim, seed)?.into_x0(),
        adam: AdamState::new(m + n, config.dim),
        epoch: 0,
        best_val_metric: f64::NEG_INFINITY,
        epochs_since_best: 0,
    };
    let mut best_x0 = state.x0.clone();
    let mut best_epoch = 0;
    let mut history = Vec::new();

    while state.epoch < config.max_epochs {
        let epoch = state.epoch;
        let stats = PopularityStats::compute(adj, &user_degrees, config.pop_epsilon)?;
        let w = config.fixed_w.unwrap_or_else(|| contrast_weight(&stats));
        let settings = LossSettings {
            lambda1: if config.no_sa { 0.0 } else { config.lambda1 },
            lambda2: if config.no_cl { 0.0 } else { config.lambda2 },
            lambda3: config.lambda3,
            temperature: config.temperature,
            alignment: config.alignment(&lw),
            contrast_w: w,
        };

        let mut sums = LossBreakdown::default();
        let mut n_batches = 0usize;
        for (b, batch) in batches.epoch(epoch).enumerate() {
            let clean = propagate(&state.x0, adj, config.layers)?;
            let views = if config.uses_views() {
                let s = derive_seed(view_seed, ((epoch as u64) << 32) | b as u64);
                Some(perturbed_views(&clean, adj, config.epsilon_noise, s)?)
            } else {
                None
            };
            let (lb, grad) = total_loss(
                adj,
                &clean,
                views.as_ref().map(|(a, b)| (&a.state, &b.state)),
                &batch,
                &settings,
            )?;
            if !lb.total.is_finite() {
                return Err(Error::Divergence(format!(
                    "epoch {epoch} batch {b}: {}",
                    serde_json::to_string(&lb).unwrap_or_default()
                )));
            }
            state.adam.step(&mut state.x0, &grad, config.lr).map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch} batch {b}: {msg}")),
                other => other,
            })?;
            sums.rec += lb.rec;
            sums.sa += lb.sa;
            sums.cl_p += lb.cl_p;
            sums.cl_up += lb.cl_up;
            sums.cl += lb.cl;
            sums.reg += lb.reg;
            sums.total += lb.total;
            n_batches += 1;
        }

        let fin = finalize(&propagate(&state.x0, adj, config.layers)?, m);
        let (overall, _, _) = evaluate_lists(&fin, &val_relevant, &val_masked, &[config.eval_k], &[])?;
        let val_recall = overall[&config.eval_k].recall;
        let improved = val_recall > state.best_val_metric;
        if improved {
            state.best_val_metric = val_recall;
            state.epochs_since_best = 0;
            best_x0 = state.x0.clone();
            best_epoch = epoch;
        } else {
            state.epochs_since_best += 1;
        }
        let k = n_batches.max(1) as f64;
        let record = EpochRecord {
            epoch,
            rec: sums.rec / k,
            sa: sums.sa / k,
            cl_p: sums.cl_p / k,
            cl_up: sums.cl_up / k,
            cl: sums.cl / k,
            reg: sums.reg / k,
            total: sums.total / k,
            gini_w: w,
            gini: stats.gini,
            val_recall,
            improved,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} rec {:.5} sa {:.5} cl {:.5} val recall@{} {:.5}",
            record.total,
            record.rec,
            record.sa,
            record.cl,
            config.eval_k,
            val_recall
        );
        on_epoch(&record);
        history.push(record);
        state.epoch += 1;
        if state.epochs_since_best >= config.patience {
            log::info!("early stop after epoch {epoch}; best epoch {best_epoch}");
            break;
        }
    }

    let final_embeddings = finalize(&propagate(&best_x0, adj, config.layers)?, m);
    Ok(TrainOutcome {
        seed,
        x0: best_x0,
        final_embeddings,
        history,
        best_epoch,
        best_val_recall: state.best_val_metric,
        layer_weights: lw,
    })
}
