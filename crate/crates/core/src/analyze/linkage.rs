use serde::{Deserialize, Serialize};

use super::DistanceMatrix;

/// One agglomeration step. Cluster ids follow the usual convention: leaves
/// are `0..K`, and the cluster formed at step `s` gets id `K + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Child whose smallest leaf index is lower.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Number of leaves in the merged cluster.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Leaf indices under cluster `id`, ascending.
    pub fn members(&self, id: usize) -> Vec<usize> {
        let k = self.leaves.len();
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(c) = stack.pop() {
            if c < k {
                out.push(c);
            } else {
                let m = &self.merges[c - k];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort_unstable();
        out
    }
}

/// Complete-linkage agglomerative clustering.
///
/// Each step joins the two closest active clusters, where cluster distance is
/// the largest member-to-member distance. Equal distances are resolved by the
/// pair of smallest leaf indices `(min(a), min(b))`, compared lexicographically.
pub fn complete_linkage(d: &DistanceMatrix) -> Dendrogram {
    let k = d.len();
    let total = (2 * k).saturating_sub(1);
    // dist[a][b] between active cluster ids; kept up to date by the max rule.
    let mut dist = vec![vec![0.0f64; total]; total];
    for i in 0..k {
        for j in 0..k {
            dist[i][j] = d.get(i, j);
        }
    }
    let mut min_leaf: Vec<usize> = (0..k).collect();
    let mut size = vec![1usize; k];
    let mut active: Vec<usize> = (0..k).collect();
    let mut merges = Vec::with_capacity(k.saturating_sub(1));

    while active.len() > 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let (lo, hi) = if min_leaf[a] < min_leaf[b] {
                    (a, b)
                } else {
                    (b, a)
                };
                let key = (min_leaf[lo], min_leaf[hi]);
                let h = dist[a][b];
                let better = match best {
                    None => true,
                    Some((bh, bkey, _, _)) => h < bh || (h == bh && key < bkey),
                };
                if better {
                    best = Some((h, key, lo, hi));
                }
            }
        }
        let (height, _, left, right) = best.expect("at least two active clusters");
        let new = k + merges.len();
        for &c in &active {
            if c != left && c != right {
                let v = dist[left][c].max(dist[right][c]);
                dist[new][c] = v;
                dist[c][new] = v;
            }
        }
        min_leaf.push(min_leaf[left]);
        size.push(size[left] + size[right]);
        active.retain(|&c| c != left && c != right);
        active.push(new);
        merges.push(Merge {
            left,
            right,
            height,
            size: size[new],
        });
    }
    Dendrogram {
        leaves: d.ids.clone(),
        merges,
    }
}

/// Dendrogram leaf sequence, left child before right child at every merge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeafOrder {
    pub indices: Vec<usize>,
    pub ids: Vec<String>,
}

pub fn leaf_order(dend: &Dendrogram) -> LeafOrder {
    let k = dend.leaves.len();
    let mut indices = Vec::with_capacity(k);
    if k > 0 {
        let root = if dend.merges.is_empty() {
            0
        } else {
            k + dend.merges.len() - 1
        };
        let mut stack = vec![root];
        while let Some(c) = stack.pop() {
            if c < k {
                indices.push(c);
            } else {
                let m = &dend.merges[c - k];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
    }
    let ids = indices.iter().map(|&i| dend.leaves[i].clone()).collect();
    LeafOrder { indices, ids }
}
