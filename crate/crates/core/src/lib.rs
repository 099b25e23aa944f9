//! Graph collaborative filtering with popularity debiasing.
//!
//! A LightGCN-style model propagates user and item embeddings over the
//! symmetric-normalized interaction graph. Training adds two terms to the
//! BPR ranking loss: a supervised alignment that pulls each user's
//! unpopular items toward their popular ones at every layer, weighted by
//! the Frobenius norm of the adjacency power, and an InfoNCE contrastive
//! term whose popular/unpopular mix is set by the Gini coefficient of
//! degree-discounted item popularity.
//!
//! ```no_run
//! use popdebias::data::synthetic::{generate, SyntheticConfig};
//! use popdebias::data::unbiased_split;
//! use popdebias::eval::{evaluate, Target};
//! use popdebias::graph::build_adjacency_from_pairs;
//! use popdebias::trainer::{train, TrainConfig};
//!
//! let ds = generate(&SyntheticConfig::default())?;
//! let split = unbiased_split(&ds, 5, 0.1, 0)?;
//! let adj = build_adjacency_from_pairs(split.m_users, split.n_items, &split.train)?;
//! let out = train(&TrainConfig { dim: 32, lr: 0.01, ..Default::default() }, &split, &adj)?;
//! let report = evaluate(&out.final_embeddings, &split, Target::Test, &[20], 5)?;
//! println!("recall@20 {:.4}", report.recall(20).unwrap());
//! # Ok::<(), popdebias::Error>(())
//! ```

// `!(x > 0.0)` is the NaN-rejecting form used in parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod eval;
pub mod graph;
pub mod losses;
pub mod model;
pub mod popularity;
pub mod seed;
pub mod sparse;
pub mod trainer;

pub use error::{Error, Result};
