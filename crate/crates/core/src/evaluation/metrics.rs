use std::collections::HashSet;

use crate::error::{Error, Result};

fn check(relevant: &HashSet<u32>, k: usize) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::UndefinedMetric);
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    Ok(())
}

fn hits(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> usize {
    ranked.iter().take(k).filter(|i| relevant.contains(i)).count()
}

/// Fraction of the attainable hits found in the top `k`; the denominator is
/// `min(|relevant|, k)`.
pub fn recall_at_k(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    Ok(hits(ranked, relevant, k) as f64 / relevant.len().min(k) as f64)
}

/// Binary-relevance NDCG with a `log2(p + 1)` discount.
pub fn ndcg_at_k(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    let discount = |p: usize| 1.0 / ((p + 1) as f64).log2();
    let dcg: f64 =
        ranked.iter().take(k).enumerate().filter(|(_, i)| relevant.contains(i)).map(|(p, _)| discount(p + 1)).sum();
    let idcg: f64 = (1..=relevant.len().min(k)).map(discount).sum();
    Ok(dcg / idcg)
}

pub fn hit_rate_at_k(ranked: &[u32], relevant: &HashSet<u32>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    Ok(if hits(ranked, relevant, k) > 0 { 1.0 } else { 0.0 })
}

/// Gini coefficient of per-item exposure counts over the whole catalog.
/// Items that are never recommended count as zero exposure.
pub fn exposure_gini(lists: &[Vec<u32>], catalog_size: usize) -> f64 {
    let mut counts = vec![0u64; catalog_size];
    for &item in lists.iter().flatten() {
        if let Some(c) = counts.get_mut(item as usize) {
            *c += 1;
        }
    }
    gini(&counts)
}

fn gini(counts: &[u64]) -> f64 {
    let n = counts.len();
    let total: u64 = counts.iter().sum();
    if n == 0 || total == 0 {
        return 0.0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let weighted: f64 =
        sorted.iter().enumerate().map(|(i, &x)| (2.0 * (i + 1) as f64 - n as f64 - 1.0) * x as f64).sum();
    (weighted / (n as f64 * total as f64)).clamp(0.0, 1.0)
}
