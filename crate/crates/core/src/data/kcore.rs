use crate::error::{Error, Result};

use super::{degrees, InteractionDataset};

/// Repeatedly drops users and items with fewer than `k` interactions until
/// every survivor has at least `k`. Surviving ids are renumbered
/// contiguously in their original order and keep their raw tokens.
pub fn k_core_filter(ds: &InteractionDataset, k: usize) -> Result<InteractionDataset> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let (m, n) = (ds.m_users(), ds.n_items());
    let mut alive = vec![true; ds.len()];
    let (mut du, mut di) = degrees(m, n, ds.interactions());

    // Adjacency lists over interaction indices so each removal touches only
    // its own edges.
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut by_item: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (e, &(u, i)) in ds.interactions().iter().enumerate() {
        by_user[u as usize].push(e);
        by_item[i as usize].push(e);
    }

    // Nodes are tagged users `0..m` and items `m..m+n`.
    let mut removed = vec![false; m + n];
    let mut queue: Vec<usize> = (0..m)
        .filter(|&u| du[u] < k)
        .chain((0..n).filter(|&i| di[i] < k).map(|i| m + i))
        .collect();
    while let Some(node) = queue.pop() {
        if removed[node] {
            continue;
        }
        removed[node] = true;
        let edges = if node < m { &by_user[node] } else { &by_item[node - m] };
        for &e in edges {
            if !alive[e] {
                continue;
            }
            alive[e] = false;
            let (u, i) = ds.interactions()[e];
            let (u, i) = (u as usize, i as usize);
            du[u] -= 1;
            di[i] -= 1;
            if !removed[u] && du[u] < k {
                queue.push(u);
            }
            if !removed[m + i] && di[i] < k {
                queue.push(m + i);
            }
        }
    }

    let mut user_map = vec![u32::MAX; m];
    let mut item_map = vec![u32::MAX; n];
    let mut user_tokens = Vec::new();
    let mut item_tokens = Vec::new();
    for u in (0..m).filter(|&u| !removed[u] && du[u] > 0) {
        user_map[u] = user_tokens.len() as u32;
        user_tokens.push(ds.user_tokens()[u].clone());
    }
    for i in (0..n).filter(|&i| !removed[m + i] && di[i] > 0) {
        item_map[i] = item_tokens.len() as u32;
        item_tokens.push(ds.item_tokens()[i].clone());
    }
    let pairs: Vec<(u32, u32)> = ds
        .interactions()
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(&(u, i), _)| (user_map[u as usize], item_map[i as usize]))
        .collect();
    if pairs.is_empty() {
        return Err(Error::KCoreEmpty);
    }
    InteractionDataset::with_tokens(user_tokens, item_tokens, &pairs)
}
