//! Interaction ingestion, k-core filtering, the uniform-per-item test split,
//! and mini-batch generation.

mod batch;
mod kcore;
mod split;
pub mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{make_batches, BatchStream, TrainBatch, UserGroups};
pub use kcore::k_core_filter;
pub use split::{
    items_by_user, test_per_item_for_fraction, unbiased_split, SplitConfig, SplitDataset,
    SplitSidecar, SIDECAR_FILE, TEST_FILE, TRAIN_FILE, VAL_FILE,
};

/// Field separator of an interaction file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Csv,
}

impl Format {
    pub fn separator(self) -> char {
        match self {
            Format::Tsv => '\t',
            Format::Csv => ',',
        }
    }

    /// Guesses from the file extension, defaulting to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Tsv,
        }
    }
}

/// Deduplicated implicit-feedback interactions with contiguous ids.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    m_users: usize,
    n_items: usize,
    interactions: Vec<(u32, u32)>,
    user_degree: Vec<usize>,
    item_degree: Vec<usize>,
    /// Raw token of each contiguous user id.
    user_tokens: Vec<String>,
    /// Raw token of each contiguous item id.
    item_tokens: Vec<String>,
    duplicates_dropped: usize,
}

impl InteractionDataset {
    /// Builds a dataset from contiguous-id pairs, dropping duplicates.
    /// Tokens default to the decimal ids.
    pub fn from_pairs(m_users: usize, n_items: usize, pairs: &[(u32, u32)]) -> Result<Self> {
        let user_tokens = (0..m_users).map(|u| u.to_string()).collect();
        let item_tokens = (0..n_items).map(|i| i.to_string()).collect();
        Self::with_tokens(user_tokens, item_tokens, pairs)
    }

    pub fn with_tokens(
        user_tokens: Vec<String>,
        item_tokens: Vec<String>,
        pairs: &[(u32, u32)],
    ) -> Result<Self> {
        let (m_users, n_items) = (user_tokens.len(), item_tokens.len());
        let mut seen = HashSet::with_capacity(pairs.len());
        let mut interactions = Vec::with_capacity(pairs.len());
        let mut duplicates = 0;
        for &(u, i) in pairs {
            if u as usize >= m_users {
                return Err(Error::OutOfRange { what: "user", id: u as usize, size: m_users });
            }
            if i as usize >= n_items {
                return Err(Error::OutOfRange { what: "item", id: i as usize, size: n_items });
            }
            if seen.insert((u, i)) {
                interactions.push((u, i));
            } else {
                duplicates += 1;
            }
        }
        let (user_degree, item_degree) = degrees(m_users, n_items, &interactions);
        Ok(Self {
            m_users,
            n_items,
            interactions,
            user_degree,
            item_degree,
            user_tokens,
            item_tokens,
            duplicates_dropped: duplicates,
        })
    }

    pub fn m_users(&self) -> usize {
        self.m_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn interactions(&self) -> &[(u32, u32)] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn user_degree(&self) -> &[usize] {
        &self.user_degree
    }

    pub fn item_degree(&self) -> &[usize] {
        &self.item_degree
    }

    pub fn user_tokens(&self) -> &[String] {
        &self.user_tokens
    }

    pub fn item_tokens(&self) -> &[String] {
        &self.item_tokens
    }

    pub fn duplicates_dropped(&self) -> usize {
        self.duplicates_dropped
    }

    /// `|R| / (M * N)`.
    pub fn density(&self) -> f64 {
        self.len() as f64 / (self.m_users as f64 * self.n_items as f64)
    }

    pub fn user_index(&self) -> HashMap<&str, u32> {
        index_of(&self.user_tokens)
    }

    pub fn item_index(&self) -> HashMap<&str, u32> {
        index_of(&self.item_tokens)
    }
}

fn index_of(tokens: &[String]) -> HashMap<&str, u32> {
    tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i as u32)).collect()
}

pub(crate) fn degrees(m: usize, n: usize, pairs: &[(u32, u32)]) -> (Vec<usize>, Vec<usize>) {
    let mut du = vec![0; m];
    let mut di = vec![0; n];
    for &(u, i) in pairs {
        du[u as usize] += 1;
        di[i as usize] += 1;
    }
    (du, di)
}

/// Parses `user<sep>item[<sep>extra...]` lines. Tokens get contiguous ids in
/// first-seen order; blank lines are skipped.
pub fn parse_interactions_str(text: &str, format: Format) -> Result<InteractionDataset> {
    let sep = format.separator();
    let mut users: HashMap<String, u32> = HashMap::new();
    let mut items: HashMap<String, u32> = HashMap::new();
    let mut user_tokens = Vec::new();
    let mut item_tokens = Vec::new();
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(sep).map(str::trim);
        let (user, item) = match (fields.next(), fields.next()) {
            (Some(u), Some(i)) if !u.is_empty() && !i.is_empty() => (u, i),
            _ => {
                return Err(Error::MalformedLine {
                    line: lineno + 1,
                    reason: format!("expected `user{sep}item`, got {line:?}"),
                })
            }
        };
        let u = *users.entry(user.to_string()).or_insert_with(|| {
            user_tokens.push(user.to_string());
            (user_tokens.len() - 1) as u32
        });
        let i = *items.entry(item.to_string()).or_insert_with(|| {
            item_tokens.push(item.to_string());
            (item_tokens.len() - 1) as u32
        });
        pairs.push((u, i));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    InteractionDataset::with_tokens(user_tokens, item_tokens, &pairs)
}

pub fn parse_interactions(path: &Path, format: Format) -> Result<InteractionDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions_str(&text, format)
}

/// Writes `user_id\titem_id` lines.
pub fn write_pairs(path: &Path, pairs: &[(u32, u32)]) -> Result<()> {
    let mut out = String::with_capacity(pairs.len() * 12);
    for &(u, i) in pairs {
        out.push_str(&u.to_string());
        out.push('\t');
        out.push_str(&i.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `user_id\titem_id` lines written by [`write_pairs`].
pub fn read_pairs(path: &Path) -> Result<Vec<(u32, u32)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let parse = |s: Option<&str>| s.and_then(|s| s.trim().parse::<u32>().ok());
        match (parse(it.next()), parse(it.next())) {
            (Some(u), Some(i)) => pairs.push((u, i)),
            _ => {
                return Err(Error::MalformedLine {
                    line: lineno + 1,
                    reason: format!("{}: expected two integer ids", path.display()),
                })
            }
        }
    }
    Ok(pairs)
}
