//! Synthetic long-tail interaction data: Zipf item popularity mixed with
//! latent user/item communities so there is personal signal to learn.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

use super::InteractionDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// Mean interactions per user; individual users draw uniformly from
    /// `[mean/2, 3*mean/2)`.
    pub interactions_per_user: usize,
    /// Item `r`-th in popularity order has weight `(r + 1)^-exponent`.
    pub zipf_exponent: f64,
    pub n_communities: usize,
    /// Probability a draw is restricted to the user's own community.
    pub affinity: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_users: 1000,
            n_items: 500,
            interactions_per_user: 50,
            zipf_exponent: 1.2,
            n_communities: 10,
            affinity: 0.8,
            seed: 0,
        }
    }
}

struct Sampler {
    items: Vec<u32>,
    cumulative: Vec<f64>,
}

impl Sampler {
    fn new(items: Vec<u32>, weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = items
            .iter()
            .map(|&i| {
                acc += weights[i as usize];
                acc
            })
            .collect();
        Self { items, cumulative }
    }

    fn draw(&self, rng: &mut impl Rng) -> u32 {
        let total = *self.cumulative.last().unwrap();
        let x = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= x).min(self.items.len() - 1);
        self.items[k]
    }
}

pub fn generate(config: &SyntheticConfig) -> Result<InteractionDataset> {
    let SyntheticConfig { n_users, n_items, interactions_per_user, .. } = *config;
    if n_users == 0 || n_items == 0 || interactions_per_user == 0 {
        return Err(Error::param("synthetic", "sizes must be positive"));
    }
    if config.n_communities == 0 || !(0.0..=1.0).contains(&config.affinity) {
        return Err(Error::param("synthetic", "need >= 1 community and affinity in [0, 1]"));
    }
    let mut rng = seed::rng(config.seed, 0x5EED_DA7A);

    let mut rank: Vec<usize> = (0..n_items).collect();
    rank.shuffle(&mut rng);
    let weights: Vec<f64> =
        rank.iter().map(|&r| ((r + 1) as f64).powf(-config.zipf_exponent)).collect();

    let item_comm: Vec<usize> =
        (0..n_items).map(|_| rng.random_range(0..config.n_communities)).collect();
    let global = Sampler::new((0..n_items as u32).collect(), &weights);
    let per_comm: Vec<Option<Sampler>> = (0..config.n_communities)
        .map(|c| {
            let members: Vec<u32> =
                (0..n_items as u32).filter(|&i| item_comm[i as usize] == c).collect();
            (!members.is_empty()).then(|| Sampler::new(members, &weights))
        })
        .collect();

    let lo = (interactions_per_user / 2).max(1);
    let hi = (interactions_per_user * 3 / 2).max(lo + 1);
    let mut pairs = Vec::with_capacity(n_users * interactions_per_user);
    let mut owned = vec![false; n_items];
    for u in 0..n_users as u32 {
        let comm = rng.random_range(0..config.n_communities);
        let target = rng.random_range(lo..hi).min(n_items);
        let mut mine = Vec::with_capacity(target);
        let mut attempts = 0;
        while mine.len() < target && attempts < target * 50 {
            attempts += 1;
            let sampler = match &per_comm[comm] {
                Some(s) if rng.random_bool(config.affinity) => s,
                _ => &global,
            };
            let i = sampler.draw(&mut rng);
            if !owned[i as usize] {
                owned[i as usize] = true;
                mine.push(i);
            }
        }
        for &i in &mine {
            owned[i as usize] = false;
            pairs.push((u, i));
        }
    }
    let users = (0..n_users).map(|u| format!("u{u}")).collect();
    let items = (0..n_items).map(|i| format!("i{i}")).collect();
    InteractionDataset::with_tokens(users, items, &pairs)
}
