use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::evaluate::{evaluate, TrialMetrics};
use super::split::{make_cold_split, ColdStartSplit};
use crate::data::Dataset;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::model::{init_model, train, ContentMode, InitMode, ModelConfig, ModelState, TrainConfig, TrainTrace};
use crate::tokenizer::BpeVocab;

/// Mean or standard deviation of each metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub recall_at_k: f64,
    pub ndcg_at_k: f64,
    pub hit_rate_at_k: f64,
    pub exposure_gini: f64,
}

impl MetricSummary {
    fn from_fn(f: impl Fn(fn(&TrialMetrics) -> f64) -> f64) -> Self {
        MetricSummary {
            recall_at_k: f(|m| m.recall_at_k),
            ndcg_at_k: f(|m| m.ndcg_at_k),
            hit_rate_at_k: f(|m| m.hit_rate_at_k),
            exposure_gini: f(|m| m.exposure_gini),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub k: usize,
    pub trials: usize,
    pub per_trial: Vec<TrialMetrics>,
    pub mean: MetricSummary,
    /// Sample standard deviation; zero for a single trial.
    pub std: MetricSummary,
}

impl EvalReport {
    pub fn from_trials(k: usize, per_trial: Vec<TrialMetrics>) -> Self {
        let n = per_trial.len() as f64;
        let mean = MetricSummary::from_fn(|get| per_trial.iter().map(get).sum::<f64>() / n);
        let std = MetricSummary::from_fn(|get| {
            if per_trial.len() < 2 {
                return 0.0;
            }
            let m = per_trial.iter().map(get).sum::<f64>() / n;
            (per_trial.iter().map(|t| (get(t) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        });
        EvalReport { k, trials: per_trial.len(), per_trial, mean, std }
    }
}

/// Everything a trial needs besides the dataset and its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub cold_ratio: f64,
    pub k: usize,
    pub full_catalog: bool,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            cold_ratio: 0.1,
            k: 10,
            full_catalog: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeReport {
    pub mode: String,
    pub report: EvalReport,
    /// Final-epoch training loss per trial.
    pub final_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    /// Split digest per trial, shared by every mode.
    pub split_hashes: Vec<String>,
    pub modes: Vec<ModeReport>,
}

impl Comparison {
    pub fn mode(&self, mode: InitMode) -> Option<&EvalReport> {
        self.modes.iter().find(|m| m.mode == mode.as_str()).map(|m| &m.report)
    }
}

/// Model configuration a mode runs with: only the BPE mode can tie item
/// vectors to metadata, so the baselines always use init mode.
pub fn mode_config(base: &ModelConfig, mode: InitMode, seed: u64) -> ModelConfig {
    let mut cfg = base.clone();
    cfg.init = mode;
    cfg.seed = seed;
    if mode != InitMode::Bpe {
        cfg.content = ContentMode::Init;
    }
    cfg
}

/// Splits with `seed`, then initializes and trains one mode on the warm
/// interactions. The building block of every trial.
pub fn fit_trial(
    dataset: &Dataset,
    vocab: &BpeVocab,
    table: &EmbeddingTable,
    config: &TrialConfig,
    mode: InitMode,
    seed: u64,
) -> Result<(ColdStartSplit, ModelState, TrainTrace)> {
    let split = make_cold_split(dataset, config.cold_ratio, seed)?;
    let mut state = init_model(dataset, Some(&split), vocab, table, &mode_config(&config.model, mode, seed))?;
    let train_cfg = TrainConfig { seed, ..config.train.clone() };
    let trace = train(&mut state, &split.train, &train_cfg, table)?;
    Ok((split, state, trace))
}

struct TrialOutcome {
    split_hash: u64,
    per_mode: Vec<(TrialMetrics, f64)>,
}

fn run_trial(
    dataset: &Dataset,
    vocab: &BpeVocab,
    table: &EmbeddingTable,
    config: &TrialConfig,
    modes: &[InitMode],
    seed: u64,
) -> Result<TrialOutcome> {
    let mut split_hash = 0;
    let per_mode = modes
        .iter()
        .map(|&mode| {
            let (split, state, trace) = fit_trial(dataset, vocab, table, config, mode, seed)?;
            split_hash = split.content_hash();
            let m = evaluate(&state, dataset, &split, vocab, table, config.k, config.full_catalog)?;
            Ok((m, *trace.epoch_loss.last().expect("at least one epoch")))
        })
        .collect::<Result<_>>()?;
    Ok(TrialOutcome { split_hash, per_mode })
}

/// Paired multi-trial comparison: trial `t` uses seed `base_seed + t` for
/// its split, initialization and sampling, and every mode sees that split.
pub fn run_trials(
    dataset: &Dataset,
    vocab: &BpeVocab,
    table: &EmbeddingTable,
    config: &TrialConfig,
    modes: &[InitMode],
    trials: usize,
    base_seed: u64,
) -> Result<Comparison> {
    if trials < 1 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if modes.is_empty() {
        return Err(Error::Config("at least one mode is required".into()));
    }
    let seeds: Vec<u64> = (0..trials as u64).map(|t| base_seed.wrapping_add(t)).collect();
    let outcomes: Vec<TrialOutcome> = seeds
        .par_iter()
        .enumerate()
        .map(|(t, &seed)| {
            run_trial(dataset, vocab, table, config, modes, seed)
                .map_err(|e| Error::Trial { trial: t, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let modes = modes
        .iter()
        .enumerate()
        .map(|(mi, mode)| ModeReport {
            mode: mode.as_str().to_string(),
            report: EvalReport::from_trials(config.k, outcomes.iter().map(|o| o.per_mode[mi].0.clone()).collect()),
            final_loss: outcomes.iter().map(|o| o.per_mode[mi].1).collect(),
        })
        .collect();
    Ok(Comparison {
        base_seed,
        seeds,
        split_hashes: outcomes.iter().map(|o| format!("{:016x}", o.split_hash)).collect(),
        modes,
    })
}

/// Fixed-width text table of mean ± std per mode.
pub fn comparison_table(cmp: &Comparison) -> String {
    let k = cmp.modes.first().map_or(10, |m| m.report.k);
    let mut out = format!(
        "{:<10} {:>17} {:>17} {:>17} {:>17}\n",
        "method",
        format!("recall@{k}"),
        format!("ndcg@{k}"),
        format!("hit_rate@{k}"),
        "exposure_gini"
    );
    for m in &cmp.modes {
        let (mean, std) = (&m.report.mean, &m.report.std);
        let cell = |a: f64, b: f64| format!("{a:.4} ± {b:.4}");
        let _ = writeln!(
            out,
            "{:<10} {:>17} {:>17} {:>17} {:>17}",
            m.mode,
            cell(mean.recall_at_k, std.recall_at_k),
            cell(mean.ndcg_at_k, std.ndcg_at_k),
            cell(mean.hit_rate_at_k, std.hit_rate_at_k),
            cell(mean.exposure_gini, std.exposure_gini),
        );
    }
    out
}
