use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::grad::{triple_gradient, ItemInput, PoolerParams, TripleInput};
use super::sampler::NegativeSampler;
use super::{ContentMode, ModelState};
use crate::data::Interaction;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, TRAIN};

/// Lower bound kept on the attention temperature during training.
pub const MIN_TEMPERATURE: f32 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub negatives_per_positive: usize,
    /// Positives per Adam step; gradients within a batch are summed per row.
    pub batch_size: usize,
    pub l2_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            negatives_per_positive: 1,
            batch_size: 64,
            l2_weight: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return fail("epochs must be at least 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate {} must be finite and non-negative", self.learning_rate));
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("adam {name} {b} must lie in [0, 1)"));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return fail("adam epsilon must be positive".into());
        }
        if self.negatives_per_positive < 1 || self.batch_size < 1 {
            return fail("negatives per positive and batch size must be at least 1".into());
        }
        if !(self.l2_weight >= 0.0 && self.l2_weight.is_finite()) {
            return fail(format!("l2 weight {} must be finite and non-negative", self.l2_weight));
        }
        Ok(())
    }
}

/// Adam moments with a step counter per row, so rows that are not touched
/// by a batch are not decayed (lazy Adam).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    dim: usize,
    user_m: Vec<f64>,
    user_v: Vec<f64>,
    user_t: Vec<u32>,
    item_m: Vec<f64>,
    item_v: Vec<f64>,
    item_t: Vec<u32>,
    query_m: Vec<f64>,
    query_v: Vec<f64>,
    tau_m: f64,
    tau_v: f64,
    pooler_t: u32,
}

impl AdamState {
    pub fn new(n_users: usize, n_items: usize, dim: usize) -> Self {
        AdamState {
            dim,
            user_m: vec![0.0; n_users * dim],
            user_v: vec![0.0; n_users * dim],
            user_t: vec![0; n_users],
            item_m: vec![0.0; n_items * dim],
            item_v: vec![0.0; n_items * dim],
            item_t: vec![0; n_items],
            query_m: vec![0.0; dim],
            query_v: vec![0.0; dim],
            tau_m: 0.0,
            tau_v: 0.0,
            pooler_t: 0,
        }
    }

    fn fits(&self, n_users: usize, n_items: usize, dim: usize) -> bool {
        self.dim == dim && self.user_t.len() == n_users && self.item_t.len() == n_items
    }
}

struct Adam {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
}

impl Adam {
    /// One Adam step on `params` with step counter `t` (already incremented).
    fn step(&self, t: u32, params: &mut [f32], grad: &[f64], m: &mut [f64], v: &mut [f64]) {
        let c1 = 1.0 - self.b1.powi(t as i32);
        let c2 = 1.0 - self.b2.powi(t as i32);
        for d in 0..params.len() {
            m[d] = self.b1 * m[d] + (1.0 - self.b1) * grad[d];
            v[d] = self.b2 * v[d] + (1.0 - self.b2) * grad[d] * grad[d];
            let update = self.lr * (m[d] / c1) / ((v[d] / c2).sqrt() + self.eps);
            params[d] = (params[d] as f64 - update) as f32;
        }
    }
}

/// Per-epoch mean loss over all sampled triples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    pub epoch_loss: Vec<f64>,
}

fn item_input<'a>(token_rows: &'a [Vec<&'a [f32]>], tied: bool, item: u32, row: &'a [f64]) -> ItemInput<'a> {
    if tied {
        ItemInput::Tied(&token_rows[item as usize])
    } else {
        ItemInput::Free(row)
    }
}

fn widen(xs: &[f32]) -> Vec<f64> {
    xs.iter().map(|&x| x as f64).collect()
}

fn add_into(acc: &mut Vec<f64>, g: &[f64]) {
    if acc.is_empty() {
        acc.extend_from_slice(g);
    } else {
        for (a, x) in acc.iter_mut().zip(g) {
            *a += x;
        }
    }
}

/// Trains `state` in place with BPR and Adam.
///
/// Each epoch shuffles the distinct training pairs, draws negatives
/// uniformly from the warm items the user has not interacted with, and
/// applies one Adam step per batch. Free rows not touched by
/// `interactions` are never modified. In tied mode, gradients of
/// metadata-bearing items go to the attention pooler and tied rows are
/// recomputed after every step.
pub fn train(
    state: &mut ModelState,
    interactions: &[Interaction],
    config: &TrainConfig,
    table: &EmbeddingTable,
) -> Result<TrainTrace> {
    config.validate()?;
    let (n_users, n_items, dim) = (state.users.rows(), state.items.rows(), state.dim());
    if let Some(i) = interactions.iter().find(|i| i.user as usize >= n_users || i.item as usize >= n_items) {
        return Err(Error::Integrity(format!(
            "training interaction references unknown entity (user {}, item {})",
            i.user, i.item
        )));
    }
    let tied = state.config.content == ContentMode::Tied;
    if tied && (table.dim() != dim || table.vocab_hash() != state.vocab_hash) {
        return Err(Error::Integrity("embedding table does not match the model".into()));
    }
    if !state.adam.fits(n_users, n_items, dim) {
        state.adam = AdamState::new(n_users, n_items, dim);
    }

    let pairs: Vec<(u32, u32)> =
        interactions.iter().map(|i| (i.user, i.item)).collect::<BTreeSet<_>>().into_iter().collect();
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut positives: HashMap<u32, HashSet<u32>> = HashMap::new();
    for &(u, i) in &pairs {
        positives.entry(u).or_default().insert(i);
    }
    let warm: Vec<u32> = pairs.iter().map(|p| p.1).collect::<BTreeSet<_>>().into_iter().collect();

    let token_rows: Vec<Vec<&[f32]>> = if tied {
        state.item_tokens.iter().map(|ids| ids.iter().map(|&t| table.row(t)).collect()).collect()
    } else {
        Vec::new()
    };
    let is_tied = |item: u32| tied && token_rows.get(item as usize).is_some_and(|r| !r.is_empty());
    let trainable_pooler = tied && state.pooler.is_some();

    let adam =
        Adam { lr: config.learning_rate, b1: config.adam_beta1, b2: config.adam_beta2, eps: config.adam_epsilon };
    let diverged = |epoch: usize| Error::Divergence { epoch, learning_rate: config.learning_rate };

    let mut trace = TrainTrace { epoch_loss: Vec::with_capacity(config.epochs) };
    let mut order = pairs;
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, TRAIN, epoch as u64));
        order.shuffle(&mut rng);
        let mut sampler = NegativeSampler::new(config.seed, epoch as u64, warm.clone());
        let mut loss_sum = 0f64;
        let mut triples = 0usize;

        for batch in order.chunks(config.batch_size) {
            let mut user_grads: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            let mut item_grads: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            let mut query_grad = vec![0f64; dim];
            let mut tau_grad = 0f64;
            let mut pooler_touched = false;
            {
                let query: Vec<f64> = state.pooler.as_ref().map_or_else(Vec::new, |p| widen(&p.query));
                let pooler = state
                    .pooler
                    .as_ref()
                    .filter(|_| tied)
                    .map(|p| PoolerParams { query: &query, temperature: p.temperature as f64 });
                for &(u, i) in batch {
                    let user = widen(state.users.row(u as usize));
                    for _ in 0..config.negatives_per_positive {
                        let j = sampler.sample(u, &positives[&u])?;
                        let (pos_row, neg_row) =
                            (widen(state.items.row(i as usize)), widen(state.items.row(j as usize)));
                        let g = triple_gradient(&TripleInput {
                            user: &user,
                            pos: item_input(&token_rows, is_tied(i), i, &pos_row),
                            neg: item_input(&token_rows, is_tied(j), j, &neg_row),
                            pooler,
                            score: state.config.score,
                            l2: config.l2_weight,
                        })?;
                        if !g.loss.is_finite() {
                            return Err(diverged(epoch));
                        }
                        loss_sum += g.loss;
                        triples += 1;
                        add_into(user_grads.entry(u).or_default(), &g.user);
                        for (item, grad) in [(i, &g.pos), (j, &g.neg)] {
                            if let Some(grad) = grad {
                                add_into(item_grads.entry(item).or_default(), grad);
                            }
                        }
                        if let (Some(q), Some(t)) = (&g.query, g.temperature) {
                            add_into(&mut query_grad, q);
                            tau_grad += t;
                            pooler_touched = true;
                        }
                    }
                }
            }

            let a = &mut state.adam;
            for (u, g) in &user_grads {
                let r = *u as usize;
                a.user_t[r] += 1;
                let span = r * dim..(r + 1) * dim;
                adam.step(a.user_t[r], state.users.row_mut(r), g, &mut a.user_m[span.clone()], &mut a.user_v[span]);
                if state.users.row(r).iter().any(|x| !x.is_finite()) {
                    return Err(diverged(epoch));
                }
            }
            for (i, g) in &item_grads {
                let r = *i as usize;
                a.item_t[r] += 1;
                let span = r * dim..(r + 1) * dim;
                adam.step(a.item_t[r], state.items.row_mut(r), g, &mut a.item_m[span.clone()], &mut a.item_v[span]);
                if state.items.row(r).iter().any(|x| !x.is_finite()) {
                    return Err(diverged(epoch));
                }
            }
            if trainable_pooler && pooler_touched {
                let p = state.pooler.as_mut().expect("trainable pooler");
                a.pooler_t += 1;
                adam.step(a.pooler_t, &mut p.query, &query_grad, &mut a.query_m, &mut a.query_v);
                let mut tau = [p.temperature];
                adam.step(
                    a.pooler_t,
                    &mut tau,
                    &[tau_grad],
                    std::slice::from_mut(&mut a.tau_m),
                    std::slice::from_mut(&mut a.tau_v),
                );
                if !tau[0].is_finite() || p.query.iter().any(|x| !x.is_finite()) {
                    return Err(diverged(epoch));
                }
                p.temperature = tau[0].max(MIN_TEMPERATURE);
                state.refresh_tied_items(table)?;
            }
        }
        let mean = loss_sum / triples as f64;
        if !mean.is_finite() {
            return Err(diverged(epoch));
        }
        trace.epoch_loss.push(mean);
    }
    Ok(trace)
}
