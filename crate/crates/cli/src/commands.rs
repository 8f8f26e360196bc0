use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use coldrec_core::data::{dataset_stats, export_dataset, load_dataset_dir, synth_benchmark, Dataset, DatasetStats};
use coldrec_core::embedding::{load_table, save_table, synth_table, EmbeddingTable};
use coldrec_core::evaluation::{
    comparison_table, evaluate, fit_trial, make_cold_split, project_cold_items, run_trials, ColdStartSplit, Comparison,
    EvalReport,
};
use coldrec_core::model::{init_model, load_model, save_model, train, InitMode, ModelState};
use coldrec_core::tokenizer::{load_vocab, save_vocab, train_bpe, BpeVocab};
use coldrec_core::{Error, Result};
use log::info;
use serde::Serialize;

use crate::config::{RunConfig, SYNTH_VOCAB_SIZE};
use crate::Failure;

/// Attaches the pipeline stage to an error.
trait AtStage<T> {
    fn at(self, stage: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

type Outcome = std::result::Result<(), Failure>;

#[derive(Serialize)]
struct VocabInfo {
    merges: usize,
    target_size: usize,
    content_hash: String,
}

impl VocabInfo {
    fn of(v: &BpeVocab) -> Self {
        VocabInfo {
            merges: v.merges().len(),
            target_size: v.target_size(),
            content_hash: format!("{:016x}", v.content_hash()),
        }
    }
}

#[derive(Serialize)]
struct TableInfo {
    rows: usize,
    dim: usize,
    vocab_hash: String,
}

impl TableInfo {
    fn of(t: &EmbeddingTable) -> Self {
        TableInfo { rows: t.len(), dim: t.dim(), vocab_hash: format!("{:016x}", t.vocab_hash()) }
    }
}

#[derive(Serialize)]
struct SplitInfo {
    seed: u64,
    cold_ratio: f64,
    content_hash: String,
    cold_items: usize,
    cold_users: usize,
    train_interactions: usize,
    test_interactions: usize,
}

impl SplitInfo {
    fn of(s: &ColdStartSplit) -> Self {
        SplitInfo {
            seed: s.seed,
            cold_ratio: s.ratio,
            content_hash: format!("{:016x}", s.content_hash()),
            cold_items: s.cold_items.len(),
            cold_users: s.cold_users.len(),
            train_interactions: s.train.len(),
            test_interactions: s.test.len(),
        }
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    config: std::collections::BTreeMap<&'static str, String>,
    #[serde(flatten)]
    body: &'a T,
}

fn report_json<T: Serialize>(command: &'static str, cfg: &RunConfig, body: &T) -> String {
    let report = Report { tool: "coldrec", version: env!("CARGO_PKG_VERSION"), command, config: cfg.echo(), body };
    let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes to `path`, or to stdout when the report knob is unset.
fn emit_report(cfg: &RunConfig, json: &str) -> Result<()> {
    if cfg.report.is_empty() {
        print!("{json}");
        Ok(())
    } else {
        write_file(Path::new(&cfg.report), json)
    }
}

fn projection_tsv(rows: &[(f64, f64, String)]) -> String {
    let mut out = String::from("x\ty\tlabel\n");
    for (x, y, label) in rows {
        let _ = writeln!(out, "{x}\t{y}\t{label}");
    }
    out
}

fn load_inputs(
    cfg: &RunConfig,
    stage: &'static str,
) -> std::result::Result<(Dataset, BpeVocab, EmbeddingTable), Failure> {
    let data = cfg.input("data").at(stage)?;
    let vocab_path = cfg.input("vocab").at(stage)?;
    let table_path = cfg.input("embeddings").at(stage)?;
    let dataset = load_dataset_dir(&data, cfg.min_weight()).at(stage)?;
    let vocab = load_vocab(&vocab_path).at(stage)?;
    let table = load_table(&table_path, &vocab).at(stage)?;
    Ok((dataset, vocab, table))
}

/// Rebuilds the split a checkpoint was trained on.
fn model_split(state: &ModelState, dataset: &Dataset) -> Result<ColdStartSplit> {
    make_cold_split(dataset, state.cold_ratio, state.config.seed)
}

pub fn train_bpe_cmd(cfg: &RunConfig) -> Outcome {
    const STAGE: &str = "train-bpe";
    let corpus = cfg.input("corpus").at(STAGE)?;
    let out = cfg.output("out", None).at(STAGE)?;
    let docs: Vec<String> = if corpus.is_dir() {
        let d = load_dataset_dir(&corpus, None).at(STAGE)?;
        d.item_text.into_iter().chain(d.user_text.into_iter().flatten()).collect()
    } else {
        let text = fs::read_to_string(&corpus).map_err(|e| Error::io(&corpus, e)).at(STAGE)?;
        text.lines().map(str::to_string).collect()
    };
    let vocab = train_bpe(&docs, cfg.vocab_size).at(STAGE)?;
    save_vocab(&vocab, &out).at(STAGE)?;
    info!("{} merges, vocabulary size {}, written to {}", vocab.merges().len(), vocab.len(), out.display());
    Ok(())
}

pub fn synth_embeddings_cmd(cfg: &RunConfig) -> Outcome {
    const STAGE: &str = "synth-embeddings";
    let vocab = load_vocab(cfg.input("vocab").at(STAGE)?).at(STAGE)?;
    let out = cfg.output("out", None).at(STAGE)?;
    let table = synth_table(&vocab, cfg.dim, cfg.seed).at(STAGE)?;
    save_table(&table, &out).at(STAGE)?;
    info!("{} x {} table written to {}", table.len(), table.dim(), out.display());
    Ok(())
}

pub fn synth_data_cmd(cfg: &RunConfig) -> Outcome {
    const STAGE: &str = "synth-data";
    let out = cfg.output("out", None).at(STAGE)?;
    let bench = synth_benchmark(&cfg.synth_config()).at(STAGE)?;
    export_dataset(&bench.dataset, &out).at(STAGE)?;
    let s = dataset_stats(&bench.dataset);
    info!("{} users, {} items, {} interactions written to {}", s.n_users, s.n_items, s.n_interactions, out.display());
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig) -> Outcome {
    const STAGE: &str = "train";
    let (dataset, vocab, table) = load_inputs(cfg, STAGE)?;
    let out = cfg.output("out", None).at(STAGE)?;
    let split = make_cold_split(&dataset, cfg.cold_ratio, cfg.seed).at(STAGE)?;
    let mut state = init_model(&dataset, Some(&split), &vocab, &table, &cfg.model_config()).at(STAGE)?;
    let trace = train(&mut state, &split.train, &cfg.train_config(), &table).at(STAGE)?;
    save_model(&state, &out).at(STAGE)?;
    info!(
        "trained {} epochs, final loss {:.6}, model written to {}",
        trace.epoch_loss.len(),
        trace.epoch_loss.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ModelEval<'a> {
    model: ModelInfo,
    split: SplitInfo,
    report: &'a EvalReport,
}

#[derive(Serialize)]
struct ModelInfo {
    init: String,
    content_mode: String,
    score_mode: String,
    pooling: String,
    normalize: bool,
    seed: u64,
}

#[derive(Serialize)]
struct TrialsEval<'a> {
    dataset: DatasetStats,
    vocab: VocabInfo,
    embeddings: TableInfo,
    comparison: &'a Comparison,
    table: String,
}

pub fn evaluate_cmd(cfg: &RunConfig) -> Outcome {
    const STAGE: &str = "evaluate";
    let (dataset, vocab, table) = load_inputs(cfg, STAGE)?;
    if cfg.model.is_empty() {
        let cmp =
            run_trials(&dataset, &vocab, &table, &cfg.trial_config(), &cfg.modes.0, cfg.trials, cfg.seed).at(STAGE)?;
        let text = comparison_table(&cmp);
        info!("\n{text}");
        let body = TrialsEval {
            dataset: dataset_stats(&dataset),
            vocab: VocabInfo::of(&vocab),
            embeddings: TableInfo::of(&table),
            comparison: &cmp,
            table: text,
        };
        return emit_report(cfg, &report_json("evaluate", cfg, &body)).at(STAGE);
    }
    let state = load_model(cfg.input("model").at(STAGE)?).at(STAGE)?;
    let split = model_split(&state, &dataset).at(STAGE)?;
    let metrics = evaluate(&state, &dataset, &split, &vocab, &table, cfg.k, cfg.full_catalog).at(STAGE)?;
    let report = EvalReport::from_trials(cfg.k, vec![metrics]);
    info!(
        "recall@{k} {:.4}  ndcg@{k} {:.4}  hit_rate@{k} {:.4}",
        report.mean.recall_at_k,
        report.mean.ndcg_at_k,
        report.mean.hit_rate_at_k,
        k = cfg.k
    );
    let c = &state.config;
    let body = ModelEval {
        model: ModelInfo {
            init: c.init.to_string(),
            content_mode: c.content.to_string(),
            score_mode: c.score.to_string(),
            pooling: c.pooling.to_string(),
            normalize: c.normalize,
            seed: c.seed,
        },
        split: SplitInfo::of(&split),
        report: &report,
    };
    emit_report(cfg, &report_json("evaluate", cfg, &body)).at(STAGE)
}

pub fn project_cmd(cfg: &RunConfig) -> Outcome {
    const STAGE: &str = "project";
    let (dataset, vocab, table) = load_inputs(cfg, STAGE)?;
    let state = load_model(cfg.input("model").at(STAGE)?).at(STAGE)?;
    let out = cfg.output("out", None).at(STAGE)?;
    let split = model_split(&state, &dataset).at(STAGE)?;
    let rows = project_cold_items(&state, &dataset, &split, &vocab, &table).at(STAGE)?;
    write_file(&out, &projection_tsv(&rows)).at(STAGE)?;
    info!("{} cold items projected to {}", rows.len(), out.display());
    Ok(())
}

pub fn stats_cmd(cfg: &RunConfig) -> Outcome {
    const STAGE: &str = "stats";
    let dataset = load_dataset_dir(cfg.input("data").at(STAGE)?, cfg.min_weight()).at(STAGE)?;
    let mut s = serde_json::to_string_pretty(&dataset_stats(&dataset)).expect("stats serialize");
    s.push('\n');
    print!("{s}");
    Ok(())
}

#[derive(Serialize)]
struct BenchReport<'a> {
    synth: coldrec_core::data::SynthConfig,
    dataset: DatasetStats,
    vocab: VocabInfo,
    embeddings: TableInfo,
    comparison: &'a Comparison,
    projection: ProjectionInfo,
    table: String,
}

#[derive(Serialize)]
struct ProjectionInfo {
    mode: &'static str,
    seed: u64,
    rows: usize,
}

/// File names written by `coldrec bench` into its output directory.
pub const BENCH_REPORT: &str = "report.json";
pub const BENCH_TABLE: &str = "table.txt";
pub const BENCH_PROJECTION: &str = "projection.tsv";

/// The full synthetic comparison: generate, tokenize, embed, run paired
/// trials, and export the projection of the first trial's BPE model.
pub fn bench_cmd(cfg: &RunConfig) -> Outcome {
    let mut cfg = cfg.clone();
    if !cfg.is_explicit("vocab_size") {
        cfg.vocab_size = SYNTH_VOCAB_SIZE;
    }
    let cfg = &cfg;
    let out = cfg.output("out", Some("bench-out")).at("bench")?;
    let synth = cfg.synth_config();
    let bench = synth_benchmark(&synth).at("synth-data")?;
    let dataset = bench.dataset;
    let vocab = train_bpe(&dataset.item_text, cfg.vocab_size).at("train-bpe")?;
    let table = synth_table(&vocab, cfg.dim, cfg.seed).at("synth-embeddings")?;
    info!("benchmark: {} users, {} items, vocabulary {}", dataset.n_users(), dataset.n_items(), vocab.len());

    let trial_cfg = cfg.trial_config();
    let cmp = run_trials(&dataset, &vocab, &table, &trial_cfg, &cfg.modes.0, cfg.trials, cfg.seed).at("evaluate")?;
    let text = comparison_table(&cmp);

    let (split, state, _) = fit_trial(&dataset, &vocab, &table, &trial_cfg, InitMode::Bpe, cfg.seed).at("project")?;
    let rows = project_cold_items(&state, &dataset, &split, &vocab, &table).at("project")?;

    let body = BenchReport {
        synth,
        dataset: dataset_stats(&dataset),
        vocab: VocabInfo::of(&vocab),
        embeddings: TableInfo::of(&table),
        comparison: &cmp,
        projection: ProjectionInfo { mode: InitMode::Bpe.as_str(), seed: cfg.seed, rows: rows.len() },
        table: text.clone(),
    };
    let report_path = cfg.output("report", None).unwrap_or_else(|_| out.join(BENCH_REPORT));
    write_file(&report_path, &report_json("bench", cfg, &body)).at("report")?;
    write_file(&out.join(BENCH_TABLE), &text).at("report")?;
    write_file(&out.join(BENCH_PROJECTION), &projection_tsv(&rows)).at("report")?;
    if !cfg.quiet {
        print!("{text}");
    }
    info!("report written to {}", report_path.display());
    Ok(())
}
