use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{degrees, read_pairs, write_pairs, InteractionDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_per_item: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

/// Train/validation/test partition with a uniform per-item test quota.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub m_users: usize,
    pub n_items: usize,
    pub train: Vec<(u32, u32)>,
    pub validation: Vec<(u32, u32)>,
    pub test: Vec<(u32, u32)>,
    pub config: SplitConfig,
    /// Items whose degree was too small to fill the test quota.
    pub capped_items: usize,
}

/// Per-item test quota that makes the test set roughly `fraction` of all
/// interactions: `round(fraction * |R| / N)`, at least 1.
pub fn test_per_item_for_fraction(ds: &InteractionDataset, fraction: f64) -> usize {
    let q = (fraction * ds.len() as f64 / ds.n_items() as f64).round();
    (q as usize).max(1)
}

/// Samples `min(test_per_item, degree - 1)` interactions of every item into
/// the test set, then `round(val_fraction * |R|)` of the remainder into
/// validation. Everything else is training data. Every item keeps at least
/// one interaction outside the test set.
pub fn unbiased_split(
    ds: &InteractionDataset,
    test_per_item: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if test_per_item == 0 {
        return Err(Error::param("test_per_item", "must be at least 1"));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::param("val_fraction", format!("{val_fraction} not in (0, 1)")));
    }
    if ds.is_empty() {
        return Err(Error::NoInteractions);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_item: Vec<Vec<usize>> = vec![Vec::new(); ds.n_items()];
    for (e, &(_, i)) in ds.interactions().iter().enumerate() {
        by_item[i as usize].push(e);
    }

    let mut in_test = vec![false; ds.len()];
    let mut capped_items = 0;
    for edges in &by_item {
        let available = edges.len().saturating_sub(1);
        if available < test_per_item {
            capped_items += 1;
        }
        let quota = test_per_item.min(available);
        for k in index::sample(&mut rng, edges.len(), quota) {
            in_test[edges[k]] = true;
        }
    }

    let remainder: Vec<usize> = (0..ds.len()).filter(|&e| !in_test[e]).collect();
    let n_val = ((val_fraction * ds.len() as f64).round() as usize).min(remainder.len());
    let mut in_val = vec![false; ds.len()];
    for k in index::sample(&mut rng, remainder.len(), n_val) {
        in_val[remainder[k]] = true;
    }

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for (e, &pair) in ds.interactions().iter().enumerate() {
        if in_test[e] {
            test.push(pair);
        } else if in_val[e] {
            validation.push(pair);
        } else {
            train.push(pair);
        }
    }
    if train.is_empty() {
        return Err(Error::param(
            "val_fraction",
            "split leaves no training interactions",
        ));
    }
    Ok(SplitDataset {
        m_users: ds.m_users(),
        n_items: ds.n_items(),
        train,
        validation,
        test,
        config: SplitConfig { test_per_item, val_fraction, seed },
        capped_items,
    })
}

/// JSON sidecar written next to the three split files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSidecar {
    pub seed: u64,
    pub k_core: usize,
    pub test_per_item: usize,
    pub val_fraction: f64,
    pub capped_items: usize,
    pub duplicates_dropped: usize,
    pub m_users: usize,
    pub n_items: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    /// Raw token per contiguous user id.
    pub user_ids: Vec<String>,
    /// Raw token per contiguous item id.
    pub item_ids: Vec<String>,
}

pub const TRAIN_FILE: &str = "train.tsv";
pub const VAL_FILE: &str = "val.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const SIDECAR_FILE: &str = "split.json";

impl SplitDataset {
    pub fn train_user_degrees(&self) -> Vec<usize> {
        degrees(self.m_users, self.n_items, &self.train).0
    }

    pub fn train_item_degrees(&self) -> Vec<usize> {
        degrees(self.m_users, self.n_items, &self.train).1
    }

    /// Per-user sorted item lists of the training set.
    pub fn train_items_by_user(&self) -> Vec<Vec<u32>> {
        items_by_user(self.m_users, &self.train)
    }

    pub fn sidecar(&self, source: &InteractionDataset, k_core: usize) -> SplitSidecar {
        SplitSidecar {
            seed: self.config.seed,
            k_core,
            test_per_item: self.config.test_per_item,
            val_fraction: self.config.val_fraction,
            capped_items: self.capped_items,
            duplicates_dropped: source.duplicates_dropped(),
            m_users: self.m_users,
            n_items: self.n_items,
            n_train: self.train.len(),
            n_validation: self.validation.len(),
            n_test: self.test.len(),
            user_ids: source.user_tokens().to_vec(),
            item_ids: source.item_tokens().to_vec(),
        }
    }

    /// Writes `train.tsv`, `val.tsv`, `test.tsv` and `split.json` into `dir`.
    pub fn save(&self, dir: &Path, sidecar: &SplitSidecar) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_pairs(&dir.join(TRAIN_FILE), &self.train)?;
        write_pairs(&dir.join(VAL_FILE), &self.validation)?;
        write_pairs(&dir.join(TEST_FILE), &self.test)?;
        let json = serde_json::to_string_pretty(sidecar)
            .map_err(|e| Error::json("split sidecar", e))?;
        let path = dir.join(SIDECAR_FILE);
        fs::write(&path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<(Self, SplitSidecar)> {
        let path = dir.join(SIDECAR_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let sidecar: SplitSidecar =
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        let split = SplitDataset {
            m_users: sidecar.m_users,
            n_items: sidecar.n_items,
            train: read_pairs(&dir.join(TRAIN_FILE))?,
            validation: read_pairs(&dir.join(VAL_FILE))?,
            test: read_pairs(&dir.join(TEST_FILE))?,
            config: SplitConfig {
                test_per_item: sidecar.test_per_item,
                val_fraction: sidecar.val_fraction,
                seed: sidecar.seed,
            },
            capped_items: sidecar.capped_items,
        };
        for &(u, i) in split.train.iter().chain(&split.validation).chain(&split.test) {
            if u as usize >= split.m_users || i as usize >= split.n_items {
                return Err(Error::Format(format!(
                    "{}: pair ({u}, {i}) outside {}x{}",
                    dir.display(),
                    split.m_users,
                    split.n_items
                )));
            }
        }
        Ok((split, sidecar))
    }
}

pub fn items_by_user(m: usize, pairs: &[(u32, u32)]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new(); m];
    for &(u, i) in pairs {
        out[u as usize].push(i);
    }
    for items in &mut out {
        items.sort_unstable();
        items.dedup();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashMap, HashSet};

    fn uniform_dataset(m: u32, n: u32, per_item: u32) -> InteractionDataset {
        // Item i is consumed by users i, i+1, ..., i+per_item-1 (mod m).
        let pairs: Vec<_> =
            (0..n).flat_map(|i| (0..per_item).map(move |k| ((i + k) % m, i))).collect();
        InteractionDataset::from_pairs(m as usize, n as usize, &pairs).unwrap()
    }

    #[test]
    fn fixed_degree_gives_exact_test_size() {
        let ds = uniform_dataset(40, 30, 20);
        let s = unbiased_split(&ds, 2, 0.1, 7).unwrap();
        assert_eq!(s.test.len(), 2 * 30);
        assert_eq!(s.capped_items, 0);
    }

    #[test]
    fn same_seed_same_split() {
        let ds = uniform_dataset(40, 30, 20);
        assert_eq!(unbiased_split(&ds, 3, 0.1, 11).unwrap(), unbiased_split(&ds, 3, 0.1, 11).unwrap());
        assert_ne!(
            unbiased_split(&ds, 3, 0.1, 11).unwrap().test,
            unbiased_split(&ds, 3, 0.1, 12).unwrap().test
        );
    }

    #[test]
    fn low_degree_items_are_capped() {
        let pairs = vec![(0, 0), (1, 0), (0, 1), (1, 1), (2, 1), (3, 1)];
        let ds = InteractionDataset::from_pairs(4, 2, &pairs).unwrap();
        let s = unbiased_split(&ds, 3, 0.2, 0).unwrap();
        let per_item = s.test.iter().fold([0; 2], |mut acc, &(_, i)| {
            acc[i as usize] += 1;
            acc
        });
        assert_eq!(per_item, [1, 3]);
        assert_eq!(s.capped_items, 1);
    }

    #[test]
    fn bad_parameters_rejected() {
        let ds = uniform_dataset(10, 5, 4);
        assert!(unbiased_split(&ds, 0, 0.1, 0).is_err());
        assert!(unbiased_split(&ds, 1, 0.0, 0).is_err());
        assert!(unbiased_split(&ds, 1, 1.0, 0).is_err());
    }

    #[test]
    fn histogram_matches_recount_of_written_files() {
        let ds = uniform_dataset(60, 25, 12);
        let s = unbiased_split(&ds, 4, 0.1, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path(), &s.sidecar(&ds, 1)).unwrap();
        let (loaded, side) = SplitDataset::load(dir.path()).unwrap();
        assert_eq!(loaded, s);
        assert_eq!(side.n_test, s.test.len());

        let mut recount: HashMap<u32, usize> = HashMap::new();
        for (u, i) in read_pairs(&dir.path().join(TEST_FILE)).unwrap() {
            assert!(u < 60);
            *recount.entry(i).or_default() += 1;
        }
        for i in 0..25u32 {
            assert_eq!(recount.get(&i).copied().unwrap_or(0), 4.min(ds.item_degree()[i as usize] - 1));
        }
    }

    #[test]
    fn validation_fraction_of_total() {
        let ds = uniform_dataset(100, 80, 25);
        let s = unbiased_split(&ds, 2, 0.1, 5).unwrap();
        let target = 0.1 * ds.len() as f64;
        assert!((s.validation.len() as f64 - target).abs() <= 0.01 * ds.len() as f64);
        let all: HashSet<_> = s.train.iter().chain(&s.validation).chain(&s.test).collect();
        assert_eq!(all.len(), ds.len());
    }

    #[test]
    fn fraction_helper_targets_ten_percent() {
        let ds = uniform_dataset(100, 80, 25);
        assert_eq!(test_per_item_for_fraction(&ds, 0.1), 3); // 0.1 * 2000 / 80 = 2.5
    }
}
