use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seed;

use super::split::items_by_user;
use super::SplitDataset;

const NEGATIVE_RETRIES: usize = 100;

/// Popular and unpopular positives of one user within a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserGroups {
    pub user: u32,
    pub popular: Vec<u32>,
    pub unpopular: Vec<u32>,
}

/// One mini-batch of BPR triples plus the in-batch popularity grouping of
/// its positive items.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub triples: Vec<(u32, u32, u32)>,
    /// Distinct positive items, ascending.
    pub items: Vec<u32>,
    pub popular: Vec<u32>,
    pub unpopular: Vec<u32>,
    /// One entry per distinct user, ascending by user id.
    pub users: Vec<UserGroups>,
    /// In-batch interaction count per positive item.
    pub batch_popularity: BTreeMap<u32, usize>,
}

impl TrainBatch {
    /// Groups the positive items of `triples`: items are ranked by
    /// `global_popularity` (descending, ties by ascending id) and the top
    /// `round(group_ratio * n)` are popular.
    pub fn from_triples(
        triples: Vec<(u32, u32, u32)>,
        global_popularity: &[usize],
        group_ratio: f64,
    ) -> Self {
        let mut batch_popularity: BTreeMap<u32, usize> = BTreeMap::new();
        for &(_, i, _) in &triples {
            *batch_popularity.entry(i).or_default() += 1;
        }
        let items: Vec<u32> = batch_popularity.keys().copied().collect();
        let mut ranked = items.clone();
        ranked.sort_by(|&a, &b| {
            global_popularity[b as usize].cmp(&global_popularity[a as usize]).then(a.cmp(&b))
        });
        let n_popular = ((group_ratio * ranked.len() as f64).round() as usize).min(ranked.len());
        let mut is_popular: BTreeMap<u32, bool> = BTreeMap::new();
        for (rank, &i) in ranked.iter().enumerate() {
            is_popular.insert(i, rank < n_popular);
        }
        let mut popular: Vec<u32> = ranked[..n_popular].to_vec();
        let mut unpopular: Vec<u32> = ranked[n_popular..].to_vec();
        popular.sort_unstable();
        unpopular.sort_unstable();

        let mut per_user: BTreeMap<u32, (Vec<u32>, Vec<u32>)> = BTreeMap::new();
        for &(u, i, _) in &triples {
            let entry = per_user.entry(u).or_default();
            if is_popular[&i] {
                entry.0.push(i);
            } else {
                entry.1.push(i);
            }
        }
        let users = per_user
            .into_iter()
            .map(|(user, (mut p, mut up))| {
                p.sort_unstable();
                p.dedup();
                up.sort_unstable();
                up.dedup();
                UserGroups { user, popular: p, unpopular: up }
            })
            .collect();
        Self { triples, items, popular, unpopular, users, batch_popularity }
    }

    /// Base-embedding rows referenced by the batch (users, positives,
    /// negatives), ascending, with items offset by `m_users`.
    pub fn touched_rows(&self, m_users: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .triples
            .iter()
            .flat_map(|&(u, i, j)| [u as usize, m_users + i as usize, m_users + j as usize])
            .collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }
}

/// Seeded source of per-epoch mini-batches over the training split.
#[derive(Debug, Clone)]
pub struct BatchStream {
    pairs: Vec<(u32, u32)>,
    user_items: Vec<Vec<u32>>,
    item_popularity: Vec<usize>,
    n_items: usize,
    batch_size: usize,
    group_ratio: f64,
    seed: u64,
}

/// Validates parameters and prepares the batch source. Fails up front if
/// some training user has interacted with every item.
pub fn make_batches(
    split: &SplitDataset,
    batch_size: usize,
    seed: u64,
    group_ratio: f64,
) -> Result<BatchStream> {
    if batch_size == 0 {
        return Err(Error::param("batch_size", "must be at least 1"));
    }
    if !(group_ratio > 0.0 && group_ratio < 1.0) {
        return Err(Error::param("group_ratio", format!("{group_ratio} not in (0, 1)")));
    }
    let user_items = items_by_user(split.m_users, &split.train);
    if let Some(u) = user_items.iter().position(|items| items.len() >= split.n_items) {
        return Err(Error::CannotSampleNegative(u as u32));
    }
    Ok(BatchStream {
        pairs: split.train.clone(),
        user_items,
        item_popularity: split.train_item_degrees(),
        n_items: split.n_items,
        batch_size,
        group_ratio,
        seed,
    })
}

impl BatchStream {
    pub fn batches_per_epoch(&self) -> usize {
        self.pairs.len().div_ceil(self.batch_size)
    }

    pub fn item_popularity(&self) -> &[usize] {
        &self.item_popularity
    }

    pub fn user_items(&self) -> &[Vec<u32>] {
        &self.user_items
    }

    /// Iterates the batches of `epoch`. The shuffle and negatives depend
    /// only on `(seed, epoch)`.
    pub fn epoch(&self, epoch: usize) -> EpochBatches<'_> {
        let mut rng = seed::rng(self.seed, 0xBA7C_0000 + epoch as u64);
        let mut order: Vec<usize> = (0..self.pairs.len()).collect();
        order.shuffle(&mut rng);
        EpochBatches { stream: self, order, cursor: 0, rng }
    }

    fn sample_negative(&self, user: u32, rng: &mut ChaCha8Rng) -> u32 {
        let owned = &self.user_items[user as usize];
        for _ in 0..NEGATIVE_RETRIES {
            let j = rng.random_range(0..self.n_items as u32);
            if owned.binary_search(&j).is_err() {
                return j;
            }
        }
        // Dense users: draw uniformly from the explicit complement instead.
        let k = rng.random_range(0..self.n_items - owned.len());
        let mut seen = 0;
        (0..self.n_items as u32)
            .filter(|j| owned.binary_search(j).is_err())
            .find(|_| {
                seen += 1;
                seen > k
            })
            .expect("complement is non-empty")
    }
}

pub struct EpochBatches<'a> {
    stream: &'a BatchStream,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl Iterator for EpochBatches<'_> {
    type Item = TrainBatch;

    fn next(&mut self) -> Option<TrainBatch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.stream.batch_size).min(self.order.len());
        let triples = self.order[self.cursor..end]
            .iter()
            .map(|&k| {
                let (u, i) = self.stream.pairs[k];
                let j = self.stream.sample_negative(u, &mut self.rng);
                (u, i, j)
            })
            .collect();
        self.cursor = end;
        Some(TrainBatch::from_triples(
            triples,
            &self.stream.item_popularity,
            self.stream.group_ratio,
        ))
    }
}
