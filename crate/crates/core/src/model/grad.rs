//! Loss and analytic gradients for one (user, positive, negative) triple.
//!
//! Parameters are passed as f64 so the same code serves training and
//! finite-difference checks; frozen token rows stay f32.

use super::ScoreMode;
use crate::error::{Error, Result};

/// `-log sigmoid(r_pos - r_neg)` in the stable softplus form.
pub fn bpr_loss(r_pos: f64, r_neg: f64) -> f64 {
    softplus(r_neg - r_pos)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Where an item's vector comes from.
#[derive(Debug, Clone, Copy)]
pub enum ItemInput<'a> {
    /// A free parameter row.
    Free(&'a [f64]),
    /// Pooled from these token rows; the parameters live in the pooler.
    Tied(&'a [&'a [f32]]),
}

/// Attention parameters; `None` in [`TripleInput`] means mean pooling.
#[derive(Debug, Clone, Copy)]
pub struct PoolerParams<'a> {
    pub query: &'a [f64],
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TripleInput<'a> {
    pub user: &'a [f64],
    pub pos: ItemInput<'a>,
    pub neg: ItemInput<'a>,
    pub pooler: Option<PoolerParams<'a>>,
    pub score: ScoreMode,
    /// Weight of the squared-norm penalty on every free vector in the triple
    /// (and on the attention query when a tied item is present).
    pub l2: f64,
}

/// Loss and gradients of one triple. Item gradients are `None` for tied
/// items; pooler gradients are `None` unless attention is in play.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleGrad {
    pub loss: f64,
    pub user: Vec<f64>,
    pub pos: Option<Vec<f64>>,
    pub neg: Option<Vec<f64>>,
    pub query: Option<Vec<f64>>,
    pub temperature: Option<f64>,
}

struct Pooled {
    vector: Vec<f64>,
    /// Attention weights, when pooled with attention.
    weights: Option<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y as f64).sum()
}

fn pool(rows: &[&[f32]], pooler: Option<PoolerParams<'_>>, dim: usize) -> Result<Pooled> {
    if rows.is_empty() {
        return Err(Error::EmptyMetadata);
    }
    let weights = match pooler {
        None => vec![1.0 / rows.len() as f64; rows.len()],
        Some(p) => {
            let logits: Vec<f64> = rows.iter().map(|e| dot(p.query, e) / p.temperature).collect();
            crate::embedding::softmax(&logits)
        }
    };
    let mut vector = vec![0f64; dim];
    for (w, e) in weights.iter().zip(rows) {
        for (a, &x) in vector.iter_mut().zip(e.iter()) {
            *a += w * x as f64;
        }
    }
    Ok(Pooled { vector, weights: pooler.map(|_| weights) })
}

fn item_vector(input: ItemInput<'_>, pooler: Option<PoolerParams<'_>>, dim: usize) -> Result<Pooled> {
    match input {
        ItemInput::Free(row) => Ok(Pooled { vector: row.to_vec(), weights: None }),
        ItemInput::Tied(rows) => pool(rows, pooler, dim),
    }
}

/// Score and its gradients with respect to both vectors.
fn score_grad(mode: ScoreMode, u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let uv: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    match mode {
        ScoreMode::Dot => Ok((uv, v.to_vec(), u.to_vec())),
        ScoreMode::Cosine => {
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nu < 1e-12 || nv < 1e-12 {
                return Err(Error::DegenerateVector(nu.min(nv)));
            }
            let s = uv / (nu * nv);
            let du = u.iter().zip(v).map(|(a, b)| b / (nu * nv) - s * a / (nu * nu)).collect();
            let dv = u.iter().zip(v).map(|(a, b)| a / (nu * nv) - s * b / (nv * nv)).collect();
            Ok((s, du, dv))
        }
    }
}

/// Backpropagates `g = dL/dv` through attention pooling into (dq, dtau).
fn pooler_backprop(g: &[f64], pooled: &Pooled, rows: &[&[f32]], p: PoolerParams<'_>, dq: &mut [f64], dtau: &mut f64) {
    let Some(weights) = &pooled.weights else { return };
    let gv: f64 = g.iter().zip(&pooled.vector).map(|(a, b)| a * b).sum();
    for (w, e) in weights.iter().zip(rows) {
        let dz = w * (dot(g, e) - gv);
        let qe = dot(p.query, e);
        for (d, &x) in dq.iter_mut().zip(e.iter()) {
            *d += dz * x as f64 / p.temperature;
        }
        *dtau -= dz * qe / (p.temperature * p.temperature);
    }
}

/// Loss of a triple, without gradients.
pub fn triple_loss(input: &TripleInput<'_>) -> Result<f64> {
    triple_gradient(input).map(|g| g.loss)
}

/// BPR loss plus L2 penalty and the gradient with respect to every
/// parameter the triple touches.
pub fn triple_gradient(input: &TripleInput<'_>) -> Result<TripleGrad> {
    let dim = input.user.len();
    let u = input.user;
    let pos = item_vector(input.pos, input.pooler, dim)?;
    let neg = item_vector(input.neg, input.pooler, dim)?;
    let (s_pos, du_pos, dv_pos) = score_grad(input.score, u, &pos.vector)?;
    let (s_neg, du_neg, dv_neg) = score_grad(input.score, u, &neg.vector)?;

    let mut loss = bpr_loss(s_pos, s_neg);
    // dL/ds_pos = -sigmoid(s_neg - s_pos); dL/ds_neg is its negation.
    let c = sigmoid(s_neg - s_pos);
    let l2 = input.l2;
    let sq = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>();

    loss += l2 * sq(u);
    let user = (0..dim).map(|d| -c * du_pos[d] + c * du_neg[d] + 2.0 * l2 * u[d]).collect();

    let mut dq = vec![0f64; dim];
    let mut dtau = 0f64;
    let mut any_tied = false;
    let mut item_grads = [None, None];
    for (slot, (input_item, pooled, dv, sign)) in
        [(input.pos, &pos, &dv_pos, -c), (input.neg, &neg, &dv_neg, c)].into_iter().enumerate()
    {
        let g: Vec<f64> = dv.iter().map(|x| sign * x).collect();
        match input_item {
            ItemInput::Free(_) => {
                loss += l2 * sq(&pooled.vector);
                item_grads[slot] = Some(g.iter().zip(&pooled.vector).map(|(a, b)| a + 2.0 * l2 * b).collect());
            }
            ItemInput::Tied(rows) => {
                any_tied = true;
                if let Some(p) = input.pooler {
                    pooler_backprop(&g, pooled, rows, p, &mut dq, &mut dtau);
                }
            }
        }
    }

    let (query, temperature) = match input.pooler {
        Some(p) if any_tied => {
            loss += l2 * sq(p.query);
            for (d, x) in dq.iter_mut().zip(p.query) {
                *d += 2.0 * l2 * x;
            }
            (Some(dq), Some(dtau))
        }
        _ => (None, None),
    };
    let [pos_grad, neg_grad] = item_grads;
    Ok(TripleGrad { loss, user, pos: pos_grad, neg: neg_grad, query, temperature })
}
