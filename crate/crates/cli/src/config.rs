//! Run configuration: one flat namespace shared by the `key = value` config
//! file and the command-line flags. Flags override the file, the file
//! overrides the defaults.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use coldrec_core::data::SynthConfig;
use coldrec_core::evaluation::TrialConfig;
use coldrec_core::model::{ContentMode, InitMode, ModelConfig, PoolingKind, ScoreMode, TrainConfig};
use coldrec_core::{Error, Result};

/// Vocabulary size used on the synthetic benchmark unless set explicitly.
pub const SYNTH_VOCAB_SIZE: usize = 600;

/// Comma-separated list of initialization modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeList(pub Vec<InitMode>);

impl FromStr for ModeList {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let modes = s.split(',').map(|m| m.trim().parse()).collect::<Result<Vec<InitMode>>>()?;
        if modes.is_empty() {
            return Err(Error::Config("modes must not be empty".into()));
        }
        Ok(ModeList(modes))
    }
}

impl fmt::Display for ModeList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|m| m.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

macro_rules! knobs {
    ($(
        $(#[$attr:meta])*
        $field:ident : $ty:ty = $default:expr, $flag:literal, $help:literal;
    )*) => {
        /// Resolved configuration of one run.
        #[derive(Debug, Clone, PartialEq)]
        pub struct RunConfig {
            $(pub $field: $ty,)*
            /// Keys set by the config file or a flag rather than defaulted.
            explicit: BTreeSet<&'static str>,
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $($field: $default,)* explicit: BTreeSet::new() }
            }
        }

        /// Every knob as an optional flag.
        #[derive(Debug, Clone, Default, Args)]
        pub struct Knobs {
            $(
                #[arg(long = $flag, global = true, help = $help)]
                $(#[$attr])*
                pub $field: Option<$ty>,
            )*
        }

        impl RunConfig {
            /// (flag, key) for every knob.
            const FLAGS: &'static [(&'static str, &'static str)] = &[$(($flag, stringify!($field))),*];

            /// Sets one knob from its textual form. `key` may be the knob
            /// name or its flag spelling.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let key = key.trim();
                let as_flag = key.replace('_', "-");
                let key = match Self::FLAGS.iter().find(|(f, _)| *f == as_flag) {
                    Some((_, k)) => k.to_string(),
                    None => key.replace('-', "_"),
                };
                match key.as_str() {
                    $(stringify!($field) => {
                        self.$field = parse_value(&key, value)?;
                        self.explicit.insert(stringify!($field));
                    })*
                    _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
                }
                Ok(())
            }

            fn apply_flags(&mut self, knobs: &Knobs) {
                $(if let Some(v) = &knobs.$field {
                    self.$field = v.clone();
                    self.explicit.insert(stringify!($field));
                })*
            }

            /// Every knob in textual form, keyed by name.
            pub fn to_pairs(&self) -> BTreeMap<&'static str, String> {
                let mut out = BTreeMap::new();
                $(out.insert(stringify!($field), self.$field.to_string());)*
                out
            }
        }
    };
}

knobs! {
    data: String = String::new(), "data", "dataset directory";
    vocab: String = String::new(), "vocab", "BPE vocabulary file";
    embeddings: String = String::new(), "embeddings", "token embedding table";
    model: String = String::new(), "model", "model checkpoint";
    corpus: String = String::new(), "corpus", "text corpus (one document per line) or dataset directory";
    out: String = String::new(), "out", "output path";
    report: String = String::new(), "report", "JSON report path";

    vocab_size: usize = 30_000, "vocab-size", "BPE target vocabulary size (600 on the synthetic benchmark)";
    dim: usize = 64, "dim", "embedding dimension";
    k: usize = 10, "k", "cutoff for ranking metrics";
    trials: usize = 5, "trials", "paired trials";
    epochs: usize = 50, "epochs", "training epochs";
    modes: ModeList = ModeList(vec![InitMode::Random, InitMode::WordAvg, InitMode::Bpe]),
        "modes", "initialization modes to compare";
    init: InitMode = InitMode::Bpe, "init", "initialization: random, wordavg or bpe";
    content_mode: ContentMode = ContentMode::Init, "mode", "content mode: init or tied";
    pooling: PoolingKind = PoolingKind::Mean, "pooling", "token pooling: mean or attention";
    score_mode: ScoreMode = ScoreMode::Dot, "score", "scoring: dot or cosine";
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    normalize: bool = true, "normalize", "L2-normalize pooled content vectors";
    seed: u64 = 42, "seed", "base seed";
    learning_rate: f64 = 0.01, "lr", "Adam learning rate";
    batch_size: usize = 64, "batch-size", "positives per Adam step";
    l2_weight: f64 = 1e-5, "l2", "squared-norm penalty weight";
    negatives: usize = 1, "negatives", "negatives per positive";
    cold_ratio: f64 = 0.1, "cold-ratio", "fraction of items held out as cold";
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    full_catalog: bool = false, "full-catalog", "rank the whole catalog instead of the cold items";
    min_weight: f64 = 0.0, "min-weight", "drop interactions below this weight";

    n_topics: usize = SynthConfig::default().n_topics, "topics", "synthetic topics";
    items_per_topic: usize = SynthConfig::default().items_per_topic, "items-per-topic", "synthetic items per topic";
    users: usize = SynthConfig::default().users, "users", "synthetic users";
    interactions_per_user: usize = SynthConfig::default().interactions_per_user,
        "interactions-per-user", "synthetic interactions per user";
    stems_per_topic: usize = SynthConfig::default().stems_per_topic, "stems-per-topic", "synthetic stems per topic";
    words_per_stem: usize = SynthConfig::default().words_per_stem, "words-per-stem", "synthetic words per stem";
    holdout_fraction: f64 = SynthConfig::default().cold_word_holdout_fraction,
        "holdout-fraction", "share of held-out words on cold-eligible items";
    cold_eligible_fraction: f64 = SynthConfig::default().cold_eligible_fraction,
        "cold-eligible-fraction", "share of items carrying held-out words";
    topic_focus: f64 = SynthConfig::default().topic_focus, "topic-focus", "probability of an on-topic interaction";
    sparsity: f64 = SynthConfig::default().sparsity, "sparsity", "fraction of generated interactions kept";

    threads: usize = 0, "threads", "worker threads (0 = all cores)";
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    deterministic: bool = false, "deterministic", "run single-threaded";
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    quiet: bool = false, "quiet", "suppress progress output";
}

/// Keys that do not affect results and are left out of report echoes.
const OPERATIONAL: &[&str] = &["out", "report", "threads", "quiet", "deterministic"];

impl RunConfig {
    /// Defaults, then `file` (if any), then `flags`.
    pub fn resolve(file: Option<&Path>, flags: &Knobs) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
            cfg.apply_file(&text, &path.display().to_string())?;
        }
        cfg.apply_flags(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{origin}:{}: expected key = value", n + 1)))?;
            self.set(key, value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{origin}:{}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("dim", self.dim),
            ("k", self.k),
            ("trials", self.trials),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("negatives", self.negatives),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.cold_ratio > 0.0 && self.cold_ratio < 1.0) {
            return Err(Error::Config(format!("cold_ratio {} must lie in (0, 1)", self.cold_ratio)));
        }
        if !(self.min_weight >= 0.0 && self.min_weight.is_finite()) {
            return Err(Error::Config("min_weight must be finite and non-negative".into()));
        }
        if self.content_mode == ContentMode::Tied && self.init != InitMode::Bpe {
            return Err(Error::Config("tied content mode requires bpe initialization".into()));
        }
        self.train_config().validate()?;
        self.synth_config().validate()
    }

    /// Resolved knobs that determine results, as written in reports.
    pub fn echo(&self) -> BTreeMap<&'static str, String> {
        let mut pairs = self.to_pairs();
        pairs.retain(|k, _| !OPERATIONAL.contains(k));
        pairs
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            init: self.init,
            content: self.content_mode,
            score: self.score_mode,
            pooling: self.pooling,
            normalize: self.normalize,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            negatives_per_positive: self.negatives,
            batch_size: self.batch_size,
            l2_weight: self.l2_weight,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn trial_config(&self) -> TrialConfig {
        TrialConfig {
            model: self.model_config(),
            train: self.train_config(),
            cold_ratio: self.cold_ratio,
            k: self.k,
            full_catalog: self.full_catalog,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            n_topics: self.n_topics,
            items_per_topic: self.items_per_topic,
            users: self.users,
            interactions_per_user: self.interactions_per_user,
            stems_per_topic: self.stems_per_topic,
            words_per_stem: self.words_per_stem,
            cold_word_holdout_fraction: self.holdout_fraction,
            cold_eligible_fraction: self.cold_eligible_fraction,
            topic_focus: self.topic_focus,
            sparsity: self.sparsity,
            seed: self.seed,
        }
    }

    pub fn min_weight(&self) -> Option<f64> {
        (self.min_weight > 0.0).then_some(self.min_weight)
    }

    /// An input path knob that must be set and must exist.
    pub fn input(&self, key: &str) -> Result<PathBuf> {
        let value = self.path_knob(key);
        if value.is_empty() {
            return Err(Error::Config(format!("missing required path --{key}")));
        }
        let path = PathBuf::from(value);
        if !path.exists() {
            return Err(Error::Config(format!("{key} path {} does not exist", path.display())));
        }
        Ok(path)
    }

    /// An output path knob, or `fallback` when unset.
    pub fn output(&self, key: &str, fallback: Option<&str>) -> Result<PathBuf> {
        match (self.path_knob(key), fallback) {
            ("", Some(f)) => Ok(PathBuf::from(f)),
            ("", None) => Err(Error::Config(format!("missing required path --{key}"))),
            (v, _) => Ok(PathBuf::from(v)),
        }
    }

    fn path_knob(&self, key: &str) -> &str {
        match key {
            "data" => &self.data,
            "vocab" => &self.vocab,
            "embeddings" => &self.embeddings,
            "model" => &self.model,
            "corpus" => &self.corpus,
            "out" => &self.out,
            "report" => &self.report,
            other => unreachable!("{other} is not a path knob"),
        }
    }
}
