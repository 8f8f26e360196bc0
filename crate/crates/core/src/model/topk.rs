use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use super::{ModelState, ScoreMode};
use crate::embedding::dot64;
use crate::error::{Error, Result};

/// Heap entry ordered so that "better" compares greater: higher score, then
/// lower id.
#[derive(Debug, Clone, Copy)]
struct Ranked {
    score: f64,
    item: u32,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score.total_cmp(&other.score).then_with(|| other.item.cmp(&self.item))
    }
}

/// The `k` best `(item, score)` pairs, descending by score with ties broken
/// by ascending id. Keeps a heap of at most `k` entries.
pub fn top_k_by(scored: impl IntoIterator<Item = (u32, f64)>, k: usize) -> Vec<(u32, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Reverse<Ranked>> = BinaryHeap::with_capacity(k + 1);
    for (item, score) in scored {
        let r = Ranked { score, item };
        if heap.len() < k {
            heap.push(Reverse(r));
        } else if let Some(Reverse(worst)) = heap.peek() {
            if r > *worst {
                heap.pop();
                heap.push(Reverse(r));
            }
        }
    }
    let mut out: Vec<Ranked> = heap.into_iter().map(|Reverse(r)| r).collect();
    out.sort_unstable_by(|a, b| b.cmp(a));
    out.into_iter().map(|r| (r.item, r.score)).collect()
}

/// Ranks items for `user_vector`.
///
/// `pool` restricts the candidates (all items when `None`); `exclude` is
/// removed from them. In cosine mode an all-zero vector scores 0.
pub fn recommend_top_k(
    state: &ModelState,
    user_vector: &[f32],
    k: usize,
    exclude: &HashSet<u32>,
    pool: Option<&[u32]>,
) -> Result<Vec<(u32, f64)>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if user_vector.len() != state.dim() {
        return Err(Error::Integrity(format!(
            "user vector of dimension {} for a model of dimension {}",
            user_vector.len(),
            state.dim()
        )));
    }
    let cosine = state.config.score == ScoreMode::Cosine;
    let nu = dot64(user_vector, user_vector).sqrt();
    let score = |item: u32| -> f64 {
        let v = state.items.row(item as usize);
        let d = dot64(user_vector, v);
        if !cosine {
            return d;
        }
        let nv = dot64(v, v).sqrt();
        if nu < 1e-12 || nv < 1e-12 {
            0.0
        } else {
            d / (nu * nv)
        }
    };
    let n = state.items.rows() as u32;
    let all: Vec<u32>;
    let candidates = match pool {
        Some(p) => {
            if let Some(&bad) = p.iter().find(|&&i| i >= n) {
                return Err(Error::Integrity(format!("candidate item {bad} out of range")));
            }
            p
        }
        None => {
            all = (0..n).collect();
            &all
        }
    };
    Ok(top_k_by(candidates.iter().copied().filter(|i| !exclude.contains(i)).map(|i| (i, score(i))), k))
}
