use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{exposure_gini, hit_rate_at_k, ndcg_at_k, recall_at_k};
use super::projection::project_2d;
use super::split::ColdStartSplit;
use crate::data::{Dataset, Interaction};
use crate::embedding::{EmbeddingTable, EntityVector};
use crate::error::{Error, Result};
use crate::model::{cold_vector, recommend_top_k, Matrix, ModelState};
use crate::seed::{derive_seed, FALLBACK};
use crate::tokenizer::BpeVocab;

/// Metrics of one evaluation run, averaged over evaluated users.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialMetrics {
    pub recall_at_k: f64,
    pub ndcg_at_k: f64,
    pub hit_rate_at_k: f64,
    pub exposure_gini: f64,
    pub evaluated_users: usize,
    pub skipped_users: usize,
}

/// Produces a ranked candidate list for a user.
pub trait Ranker: Sync {
    fn rank(&self, user: u32, k: usize) -> Result<Vec<u32>>;
}

impl<F: Fn(u32, usize) -> Result<Vec<u32>> + Sync> Ranker for F {
    fn rank(&self, user: u32, k: usize) -> Result<Vec<u32>> {
        self(user, k)
    }
}

/// Relevant (cold) test items per test user, in user order.
pub fn test_relevance(test: &[Interaction], cold_items: &BTreeSet<u32>) -> BTreeMap<u32, HashSet<u32>> {
    let mut out: BTreeMap<u32, HashSet<u32>> = BTreeMap::new();
    for i in test {
        let rel = out.entry(i.user).or_default();
        if cold_items.contains(&i.item) {
            rel.insert(i.item);
        }
    }
    out
}

/// Scores every test user with `ranker` and averages the metrics.
///
/// Users whose relevant set is empty are skipped and counted. Exposure
/// disparity is measured over `catalog`, the candidate items.
pub fn evaluate_ranker(
    ranker: &dyn Ranker,
    relevance: &BTreeMap<u32, HashSet<u32>>,
    catalog: &[u32],
    k: usize,
) -> Result<TrialMetrics> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let users: Vec<(&u32, &HashSet<u32>)> = relevance.iter().filter(|(_, r)| !r.is_empty()).collect();
    let skipped = relevance.len() - users.len();
    if users.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let rows: Vec<([f64; 3], Vec<u32>)> = users
        .par_iter()
        .map(|(&u, rel)| {
            let ranked = ranker.rank(u, k)?;
            Ok((
                [recall_at_k(&ranked, rel, k)?, ndcg_at_k(&ranked, rel, k)?, hit_rate_at_k(&ranked, rel, k)?],
                ranked.into_iter().take(k).collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let mut sums = [0f64; 3];
    for (m, _) in &rows {
        for (s, x) in sums.iter_mut().zip(m) {
            *s += x;
        }
    }
    let slot: BTreeMap<u32, u32> = catalog.iter().enumerate().map(|(s, &i)| (i, s as u32)).collect();
    let lists: Vec<Vec<u32>> =
        rows.into_iter().map(|(_, l)| l.iter().filter_map(|i| slot.get(i).copied()).collect()).collect();
    Ok(TrialMetrics {
        recall_at_k: sums[0] / n,
        ndcg_at_k: sums[1] / n,
        hit_rate_at_k: sums[2] / n,
        exposure_gini: exposure_gini(&lists, catalog.len()),
        evaluated_users: lists.len(),
        skipped_users: skipped,
    })
}

/// Item rows used at serving time: cold items get their cold-start
/// representation, warm items keep their trained rows.
pub fn serving_items(
    state: &ModelState,
    dataset: &Dataset,
    split: &ColdStartSplit,
    vocab: &BpeVocab,
    table: &EmbeddingTable,
) -> Result<Matrix> {
    let mut items = state.items.clone();
    for &i in &split.cold_items {
        let text = dataset.item_text.get(i as usize).map_or("", String::as_str);
        let v = cold_vector(state, vocab, table, text, derive_seed(state.rng_seed(), FALLBACK, i as u64))?;
        items.row_mut(i as usize).copy_from_slice(&v.values);
    }
    Ok(items)
}

/// 2-D projection of the cold items' serving vectors, labelled by
/// `dataset.item_labels` when present.
pub fn project_cold_items(
    state: &ModelState,
    dataset: &Dataset,
    split: &ColdStartSplit,
    vocab: &BpeVocab,
    table: &EmbeddingTable,
) -> Result<Vec<(f64, f64, String)>> {
    let items = serving_items(state, dataset, split, vocab, table)?;
    let vectors: Vec<EntityVector> = split
        .cold_items
        .iter()
        .map(|&i| EntityVector { values: items.row(i as usize).to_vec(), normalized: false })
        .collect();
    let labels: Vec<String> = split
        .cold_items
        .iter()
        .map(|&i| match &dataset.item_labels {
            Some(l) => l[i as usize].clone(),
            None => dataset.item_ids.external(i).to_string(),
        })
        .collect();
    project_2d(&vectors, &labels)
}

/// Single-trial cold-start evaluation of a trained model.
///
/// Candidates are the cold items, or the whole catalog minus each user's
/// training items when `full_catalog` is set.
pub fn evaluate(
    state: &ModelState,
    dataset: &Dataset,
    split: &ColdStartSplit,
    vocab: &BpeVocab,
    table: &EmbeddingTable,
    k: usize,
    full_catalog: bool,
) -> Result<TrialMetrics> {
    split.validate(dataset)?;
    if state.items.rows() != dataset.n_items() || state.users.rows() != dataset.n_users() {
        return Err(Error::Integrity("model and dataset disagree on entity counts".into()));
    }
    let mut serving = state.clone();
    serving.items = serving_items(state, dataset, split, vocab, table)?;

    let relevance = test_relevance(&split.test, &split.cold_items);
    let mut user_vectors: BTreeMap<u32, Vec<f32>> = BTreeMap::new();
    for &u in relevance.keys() {
        let v = if split.cold_users.contains(&u) {
            let text = dataset.user_text.get(u as usize).and_then(|t| t.as_deref()).unwrap_or("");
            cold_vector(state, vocab, table, text, derive_seed(state.rng_seed(), FALLBACK, u64::MAX - u as u64))?.values
        } else {
            state.users.row(u as usize).to_vec()
        };
        user_vectors.insert(u, v);
    }
    let mut seen: BTreeMap<u32, HashSet<u32>> = BTreeMap::new();
    if full_catalog {
        for i in &split.train {
            seen.entry(i.user).or_default().insert(i.item);
        }
    }
    let catalog: Vec<u32> =
        if full_catalog { (0..dataset.n_items() as u32).collect() } else { split.cold_items.iter().copied().collect() };
    let pool = (!full_catalog).then_some(catalog.as_slice());
    let empty = HashSet::new();
    let ranker = |u: u32, k: usize| -> Result<Vec<u32>> {
        let exclude = seen.get(&u).unwrap_or(&empty);
        Ok(recommend_top_k(&serving, &user_vectors[&u], k, exclude, pool)?.into_iter().map(|(i, _)| i).collect())
    };
    evaluate_ranker(&ranker, &relevance, &catalog, k)
}
