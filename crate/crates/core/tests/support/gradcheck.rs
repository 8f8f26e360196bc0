//! Finite-difference check of the triple gradients, shared by the gradient
//! tests and the acceptance suite.
#![allow(dead_code)]

#[path = "oracles.rs"]
pub mod oracles;

use coldrec_core::model::{triple_gradient, triple_loss, ItemInput, PoolerParams, ScoreMode, TripleInput};
use oracles::central_difference;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const EPS: f64 = 1e-4;
pub const TOL: f64 = 1e-4;

struct Case {
    h: usize,
    tied: bool,
    score: ScoreMode,
    tokens: [Vec<Vec<f32>>; 2],
    l2: f64,
}

fn gauss(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng)).collect()
}

/// Layout: user | pos | neg (init mode) or user | query | tau (tied mode).
fn loss_at(case: &Case, x: &[f64]) -> f64 {
    let h = case.h;
    let rows: Vec<Vec<&[f32]>> = case.tokens.iter().map(|t| t.iter().map(|r| r.as_slice()).collect()).collect();
    let input = if case.tied {
        TripleInput {
            user: &x[..h],
            pos: ItemInput::Tied(&rows[0]),
            neg: ItemInput::Tied(&rows[1]),
            pooler: Some(PoolerParams { query: &x[h..2 * h], temperature: x[2 * h] }),
            score: case.score,
            l2: case.l2,
        }
    } else {
        TripleInput {
            user: &x[..h],
            pos: ItemInput::Free(&x[h..2 * h]),
            neg: ItemInput::Free(&x[2 * h..3 * h]),
            pooler: None,
            score: case.score,
            l2: case.l2,
        }
    };
    triple_loss(&input).unwrap()
}

fn analytic(case: &Case, x: &[f64]) -> Vec<f64> {
    let h = case.h;
    let rows: Vec<Vec<&[f32]>> = case.tokens.iter().map(|t| t.iter().map(|r| r.as_slice()).collect()).collect();
    if case.tied {
        let g = triple_gradient(&TripleInput {
            user: &x[..h],
            pos: ItemInput::Tied(&rows[0]),
            neg: ItemInput::Tied(&rows[1]),
            pooler: Some(PoolerParams { query: &x[h..2 * h], temperature: x[2 * h] }),
            score: case.score,
            l2: case.l2,
        })
        .unwrap();
        assert!(g.pos.is_none() && g.neg.is_none());
        [g.user, g.query.unwrap(), vec![g.temperature.unwrap()]].concat()
    } else {
        let g = triple_gradient(&TripleInput {
            user: &x[..h],
            pos: ItemInput::Free(&x[h..2 * h]),
            neg: ItemInput::Free(&x[2 * h..3 * h]),
            pooler: None,
            score: case.score,
            l2: case.l2,
        })
        .unwrap();
        assert!(g.query.is_none());
        [g.user, g.pos.unwrap(), g.neg.unwrap()].concat()
    }
}

/// Relative error of one parameter block: ||a - n|| / max(||a||, ||n||).
fn block_error(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(n));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Compares analytic and central-difference gradients on `configs` random
/// triples; returns the first block whose relative error reaches the
/// tolerance.
pub fn check_configs(tied: bool, score: ScoreMode, seed: u64, configs: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..configs {
        let h = rng.random_range(2..=16);
        let mut tokens = || -> Vec<Vec<f32>> {
            let n = rng.random_range(1..=5);
            (0..n).map(|_| gauss(&mut rng, h, 0.6).into_iter().map(|v| v as f32).collect()).collect()
        };
        let tokens = [tokens(), tokens()];
        let case = Case { h, tied, score, tokens, l2: rng.random_range(0.0..0.05) };
        let x = if tied {
            [gauss(&mut rng, h, 0.7), gauss(&mut rng, h, 1.0), vec![rng.random_range(0.3..2.0)]].concat()
        } else {
            gauss(&mut rng, 3 * h, 0.7)
        };
        let a = analytic(&case, &x);
        let f = |p: &[f64]| loss_at(&case, p);
        let n: Vec<f64> = (0..x.len()).map(|i| central_difference(&f, &x, i, EPS)).collect();
        let blocks: &[(&str, std::ops::Range<usize>)] = if tied {
            &[("user", 0..h), ("query", h..2 * h), ("temperature", 2 * h..2 * h + 1)]
        } else {
            &[("user", 0..h), ("positive", h..2 * h), ("negative", 2 * h..3 * h)]
        };
        for (name, r) in blocks {
            let err = block_error(&a[r.clone()], &n[r.clone()]);
            if !(err < TOL) {
                return Err(format!("config {trial} (h={h}, {score:?}, tied={tied}): {name} error {err:e}"));
            }
        }
    }
    Ok(())
}
