//! Full-ranking top-K evaluation, overall and per popularity group.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{items_by_user, SplitDataset};
use crate::dense::dot;
use crate::error::{Error, Result};
use crate::model::FinalEmbeddings;

pub const DEFAULT_GROUPS: usize = 5;

/// One sorted item list per user.
pub type ItemLists = Vec<Vec<u32>>;
pub type MetricsByK = BTreeMap<usize, Metrics>;
/// Evaluated user count and metrics, one entry per item group.
pub type GroupMetrics = Vec<(usize, MetricsByK)>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub hr: f64,
    pub ndcg: f64,
}

impl Metrics {
    fn accumulate(&mut self, other: Metrics) {
        self.recall += other.recall;
        self.hr += other.hr;
        self.ndcg += other.ndcg;
    }

    fn divided(self, n: usize) -> Metrics {
        if n == 0 {
            return Metrics::default();
        }
        let n = n as f64;
        Metrics { recall: self.recall / n, hr: self.hr / n, ndcg: self.ndcg / n }
    }
}

/// Descending score, then ascending item id.
fn rank_order(scores: &[f64], a: u32, b: u32) -> Ordering {
    scores[b as usize]
        .total_cmp(&scores[a as usize])
        .then(a.cmp(&b))
}

fn user_scores(fin: &FinalEmbeddings, user: usize, masked: &[u32]) -> Vec<f64> {
    let zu = fin.users.row(user);
    let mut scores: Vec<f64> = (0..fin.n_items()).map(|i| dot(zu, fin.items.row(i))).collect();
    for &i in masked {
        scores[i as usize] = f64::NEG_INFINITY;
    }
    scores
}

/// Every item ranked for `user`, masked items scored `-inf`. Ties are broken
/// by item id ascending.
pub fn rank_all(fin: &FinalEmbeddings, user: usize, masked: &[u32]) -> Result<Vec<u32>> {
    check_user(fin, user)?;
    let scores = user_scores(fin, user, masked);
    let mut order: Vec<u32> = (0..fin.n_items() as u32).collect();
    order.sort_unstable_by(|&a, &b| rank_order(&scores, a, b));
    Ok(order)
}

/// The first `k` entries of [`rank_all`] without sorting the whole list.
pub fn top_k(fin: &FinalEmbeddings, user: usize, masked: &[u32], k: usize) -> Result<Vec<u32>> {
    check_user(fin, user)?;
    let scores = user_scores(fin, user, masked);
    let mut order: Vec<u32> = (0..fin.n_items() as u32).collect();
    let k = k.min(order.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, |&a, &b| rank_order(&scores, a, b));
        order.truncate(k);
    }
    order.sort_unstable_by(|&a, &b| rank_order(&scores, a, b));
    Ok(order)
}

fn check_user(fin: &FinalEmbeddings, user: usize) -> Result<()> {
    if user >= fin.m_users() {
        return Err(Error::OutOfRange { what: "user", id: user, size: fin.m_users() });
    }
    Ok(())
}

/// Recall, hit and NDCG of the top `k` of `ranked` against `relevant`
/// (sorted ascending, no duplicates).
pub fn metrics_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> Result<Metrics> {
    if k < 1 {
        return Err(Error::param("K", "must be at least 1"));
    }
    if relevant.is_empty() {
        return Err(Error::param("relevant", "must be non-empty"));
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if relevant.binary_search(item).is_ok() {
            hits += 1;
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let idcg: f64 = (0..relevant.len().min(k)).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    Ok(Metrics {
        recall: hits as f64 / relevant.len() as f64,
        hr: if hits > 0 { 1.0 } else { 0.0 },
        ndcg: dcg / idcg,
    })
}

/// Items bucketed by training popularity into `groups` equal-count buckets,
/// least popular first. Ties are ordered by item id.
pub fn popularity_groups(item_popularity: &[usize], groups: usize) -> Result<Vec<Vec<u32>>> {
    let n = item_popularity.len();
    if groups == 0 || groups > n {
        return Err(Error::param("groups", format!("{groups} groups for {n} items")));
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by_key(|&i| (item_popularity[i as usize], i));
    let (base, extra) = (n / groups, n % groups);
    let mut out = Vec::with_capacity(groups);
    let mut start = 0;
    for g in 0..groups {
        let len = base + usize::from(g < extra);
        let mut bucket = order[start..start + len].to_vec();
        bucket.sort_unstable();
        out.push(bucket);
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub n_items: usize,
    pub n_users: usize,
    pub metrics: BTreeMap<usize, Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ks: Vec<usize>,
    pub overall: BTreeMap<usize, Metrics>,
    pub groups: Vec<GroupReport>,
    pub n_users_evaluated: usize,
    pub masked_train_items: bool,
    pub masked_validation_items: bool,
}

impl EvalReport {
    pub fn recall(&self, k: usize) -> Option<f64> {
        self.overall.get(&k).map(|m| m.recall)
    }

    /// CSV with header `group,K,recall,hr,ndcg`, one row per group and K.
    pub fn group_csv(&self) -> String {
        let mut out = String::from("group,K,recall,hr,ndcg\n");
        for g in &self.groups {
            for (k, m) in &g.metrics {
                let _ = writeln!(out, "{},{},{:?},{:?},{:?}", g.name, k, m.recall, m.hr, m.ndcg);
            }
        }
        out
    }

    pub fn write(&self, json_path: &Path, csv_path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::json("eval report", e))?;
        std::fs::write(json_path, json + "\n").map_err(|e| Error::io(json_path, e))?;
        std::fs::write(csv_path, self.group_csv()).map_err(|e| Error::io(csv_path, e))
    }
}

/// Which held-out set to score and which items to hide from the ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Validation interactions; training items masked.
    Validation,
    /// Test interactions; training and validation items masked.
    Test,
}

/// Lower-level evaluation: `relevant[u]` and `masked[u]` are per-user sorted
/// item lists, `groups` are item subsets whose metrics are reported with
/// relevance restricted to the subset. Users with no relevant items are
/// skipped; inside a group, users with no relevant items in it are skipped.
pub fn evaluate_lists(
    fin: &FinalEmbeddings,
    relevant: &[Vec<u32>],
    masked: &[Vec<u32>],
    ks: &[usize],
    groups: &[Vec<u32>],
) -> Result<(MetricsByK, GroupMetrics, usize)> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::param("Ks", "need at least one K >= 1"));
    }
    if relevant.len() != fin.m_users() || masked.len() != fin.m_users() {
        return Err(Error::Dimension("per-user lists do not match user count".into()));
    }
    let max_k = *ks.iter().max().unwrap();
    let mut in_group = vec![usize::MAX; fin.n_items()];
    for (g, items) in groups.iter().enumerate() {
        for &i in items {
            in_group[i as usize] = g;
        }
    }

    type UserResult = (Vec<Metrics>, Vec<Option<Vec<Metrics>>>);
    let per_user: Vec<Option<UserResult>> = (0..fin.m_users())
        .into_par_iter()
        .map(|u| -> Result<Option<UserResult>> {
            if relevant[u].is_empty() {
                return Ok(None);
            }
            let ranked = top_k(fin, u, &masked[u], max_k)?;
            let overall = ks.iter().map(|&k| metrics_at_k(&ranked, &relevant[u], k)).collect::<Result<_>>()?;
            let mut per_group = Vec::with_capacity(groups.len());
            for g in 0..groups.len() {
                let rel: Vec<u32> = relevant[u].iter().copied().filter(|&i| in_group[i as usize] == g).collect();
                per_group.push(if rel.is_empty() {
                    None
                } else {
                    Some(ks.iter().map(|&k| metrics_at_k(&ranked, &rel, k)).collect::<Result<_>>()?)
                });
            }
            Ok(Some((overall, per_group)))
        })
        .collect::<Result<_>>()?;

    let mut overall = vec![Metrics::default(); ks.len()];
    let mut group_sums = vec![(0usize, vec![Metrics::default(); ks.len()]); groups.len()];
    let mut n_users = 0;
    for (ov, gr) in per_user.into_iter().flatten() {
        n_users += 1;
        for (acc, m) in overall.iter_mut().zip(ov) {
            acc.accumulate(m);
        }
        for (g, maybe) in gr.into_iter().enumerate() {
            if let Some(ms) = maybe {
                group_sums[g].0 += 1;
                for (acc, m) in group_sums[g].1.iter_mut().zip(ms) {
                    acc.accumulate(m);
                }
            }
        }
    }
    let to_map = |sums: Vec<Metrics>, n: usize| ks.iter().copied().zip(sums.into_iter().map(|m| m.divided(n))).collect();
    let overall = to_map(overall, n_users);
    let groups = group_sums.into_iter().map(|(n, sums)| (n, to_map(sums, n))).collect();
    Ok((overall, groups, n_users))
}

/// Per-user relevant and masked item lists for `target`.
pub fn target_lists(split: &SplitDataset, target: Target) -> Result<(ItemLists, ItemLists)> {
    let (held_out, mut mask_pairs) = match target {
        Target::Validation => (&split.validation, split.train.clone()),
        Target::Test => (&split.test, [split.train.as_slice(), &split.validation].concat()),
    };
    if held_out.is_empty() {
        return Err(Error::param("evaluation set", "is empty"));
    }
    mask_pairs.sort_unstable();
    Ok((items_by_user(split.m_users, held_out), items_by_user(split.m_users, &mask_pairs)))
}

/// Full evaluation of `fin` on the split's validation or test set.
pub fn evaluate(fin: &FinalEmbeddings, split: &SplitDataset, target: Target, ks: &[usize], n_groups: usize) -> Result<EvalReport> {
    let (relevant, masked) = target_lists(split, target)?;
    let groups = popularity_groups(&split.train_item_degrees(), n_groups)?;
    let (overall, group_metrics, n_users) = evaluate_lists(fin, &relevant, &masked, ks, &groups)?;
    Ok(EvalReport {
        ks: ks.to_vec(),
        overall,
        groups: group_metrics
            .into_iter()
            .zip(&groups)
            .enumerate()
            .map(|(g, ((n_users, metrics), items))| GroupReport {
                name: format!("G{}", g + 1),
                n_items: items.len(),
                n_users,
                metrics,
            })
            .collect(),
        n_users_evaluated: n_users,
        masked_train_items: true,
        masked_validation_items: target == Target::Test,
    })
}

/// Metrics at `k` restricted to the union of the first `n_low` popularity
/// groups, e.g. `n_low = 2` for the bottom two quintiles.
pub fn low_popularity_metrics(
    fin: &FinalEmbeddings,
    split: &SplitDataset,
    target: Target,
    k: usize,
    n_groups: usize,
    n_low: usize,
) -> Result<Metrics> {
    let groups = popularity_groups(&split.train_item_degrees(), n_groups)?;
    let mut low: Vec<u32> = groups.into_iter().take(n_low).flatten().collect();
    low.sort_unstable();
    let (relevant, masked) = target_lists(split, target)?;
    let (_, mut per_group, _) = evaluate_lists(fin, &relevant, &masked, &[k], &[low])?;
    Ok(per_group.remove(0).1[&k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::Matrix;

    fn fin(users: Vec<f64>, items: Vec<f64>, d: usize) -> FinalEmbeddings {
        let m = users.len() / d;
        let n = items.len() / d;
        FinalEmbeddings { users: Matrix::from_vec(m, d, users).unwrap(), items: Matrix::from_vec(n, d, items).unwrap() }
    }

    #[test]
    fn equal_scores_rank_by_id() {
        let f = fin(vec![0.0, 0.0], vec![1.0; 10], 2);
        assert_eq!(rank_all(&f, 0, &[]).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(top_k(&f, 0, &[1], 3).unwrap(), vec![0, 2, 3]);
        assert_eq!(rank_all(&f, 0, &[1]).unwrap(), vec![0, 2, 3, 4, 1]);
    }

    #[test]
    fn huge_score_ranks_first() {
        let f = fin(vec![1.0], vec![0.1, 0.3, 1e300, 0.2], 1);
        assert_eq!(rank_all(&f, 0, &[]).unwrap()[0], 2);
    }

    #[test]
    fn metrics_cases() {
        let m = metrics_at_k(&[4, 1, 2], &[4], 20).unwrap();
        assert_eq!((m.recall, m.hr, m.ndcg), (1.0, 1.0, 1.0));
        let m = metrics_at_k(&[1, 4, 2], &[4], 20).unwrap();
        assert_eq!((m.recall, m.hr), (1.0, 1.0));
        assert!((m.ndcg - 1.0 / 3f64.log2()).abs() < 1e-12);
        let m = metrics_at_k(&[1, 2, 4], &[4], 2).unwrap();
        assert_eq!(m, Metrics::default());
        assert!(metrics_at_k(&[1], &[1], 0).is_err());
        assert!(metrics_at_k(&[1], &[], 1).is_err());
    }

    #[test]
    fn groups_have_balanced_counts() {
        let pop: Vec<usize> = (0..23).map(|i| (i * 7) % 5).collect();
        let g = popularity_groups(&pop, 5).unwrap();
        let sizes: Vec<usize> = g.iter().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let max_low = g[0].iter().map(|&i| pop[i as usize]).max().unwrap();
        let min_high = g[4].iter().map(|&i| pop[i as usize]).min().unwrap();
        assert!(max_low <= min_high);
    }

    #[test]
    fn perfect_single_user() {
        let f = fin(vec![1.0, 0.0], vec![0.0, 1.0, 1.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0], 2);
        let split = SplitDataset {
            m_users: 1,
            n_items: 5,
            train: vec![(0, 2), (0, 3)],
            validation: vec![(0, 4)],
            test: vec![(0, 1)],
            config: crate::data::SplitConfig { test_per_item: 1, val_fraction: 0.1, seed: 0 },
            capped_items: 0,
        };
        let r = evaluate(&f, &split, Target::Test, &[1, 20], 5).unwrap();
        for m in r.overall.values() {
            assert_eq!((m.recall, m.hr, m.ndcg), (1.0, 1.0, 1.0));
        }
        assert_eq!(r.n_users_evaluated, 1);
        assert_eq!(r.group_csv().lines().count(), 1 + 5 * 2);
    }
}
