//! Slow, obviously-correct reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

/// Recount-every-round BPE: returns the merge list as byte-string pairs.
pub fn bpe_oracle(corpus: &[String], target_size: usize) -> Vec<(Vec<u8>, Vec<u8>)> {
    let mut words: Vec<Vec<Vec<u8>>> = Vec::new();
    for text in corpus {
        let norm = coldrec_core::tokenizer::normalize_text(text);
        for w in norm.split(' ').filter(|w| !w.is_empty()) {
            words.push(w.bytes().map(|b| vec![b]).collect());
        }
    }
    let mut merges = Vec::new();
    while 256 + merges.len() < target_size {
        let mut counts: BTreeMap<(Vec<u8>, Vec<u8>), usize> = BTreeMap::new();
        for w in &words {
            for pair in w.windows(2) {
                *counts.entry((pair[0].clone(), pair[1].clone())).or_default() += 1;
            }
        }
        // BTreeMap iterates in ascending key order, so the first maximum is
        // the lexicographically smallest pair.
        let mut best: Option<(&(Vec<u8>, Vec<u8>), usize)> = None;
        for (pair, &c) in &counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((pair, c));
            }
        }
        let Some((pair, c)) = best else { break };
        if c < 2 {
            break;
        }
        let (l, r) = pair.clone();
        for w in words.iter_mut() {
            let mut out = Vec::with_capacity(w.len());
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == l && w[i + 1] == r {
                    out.push([l.as_slice(), r.as_slice()].concat());
                    i += 2;
                } else {
                    out.push(w[i].clone());
                    i += 1;
                }
            }
            *w = out;
        }
        merges.push((l, r));
    }
    merges
}

pub fn recall_ref(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> f64 {
    let top: HashSet<u32> = ranked.iter().take(k).copied().collect();
    let inter = top.intersection(relevant).count();
    inter as f64 / relevant.len().min(k) as f64
}

pub fn ndcg_ref(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> f64 {
    let mut dcg = 0.0;
    for p in 1..=k.min(ranked.len()) {
        if relevant.contains(&ranked[p - 1]) {
            dcg += 1.0 / ((p + 1) as f64).ln() * std::f64::consts::LN_2;
        }
    }
    let mut idcg = 0.0;
    for p in 1..=relevant.len().min(k) {
        idcg += 1.0 / ((p + 1) as f64).ln() * std::f64::consts::LN_2;
    }
    dcg / idcg
}

pub fn hit_ref(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> f64 {
    if ranked.iter().take(k).any(|i| relevant.contains(i)) {
        1.0
    } else {
        0.0
    }
}

/// Central finite difference of `f` at `x` along coordinate `i`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, eps: f64) -> f64 {
    let mut hi = x.to_vec();
    let mut lo = x.to_vec();
    hi[i] += eps;
    lo[i] -= eps;
    (f(&hi) - f(&lo)) / (2.0 * eps)
}
