//! Collaborative-filtering backbone: entity matrices, content initialization,
//! BPR training with Adam, and top-K serving.

mod checkpoint;
mod grad;
mod matrix;
mod sampler;
mod topk;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub use checkpoint::{load_model, model_to_bytes, parse_model, save_model};
pub use grad::{bpr_loss, triple_gradient, triple_loss, ItemInput, PoolerParams, TripleGrad, TripleInput};
pub use matrix::Matrix;
pub use sampler::{sample_negative, NegativeSampler};
pub use topk::{recommend_top_k, top_k_by};
pub use train::{train, AdamState, TrainConfig, TrainTrace};

use crate::data::Dataset;
use crate::embedding::{
    embed_entity, l2_normalize, pool_tokens, tokenize_entity, AttentionPooler, EmbeddingTable, EntityVector, Pooling,
};
use crate::error::{Error, Result};
use crate::evaluation::ColdStartSplit;
use crate::seed::{derive_seed, FALLBACK, ITEM_INIT, USER_INIT};
use crate::tokenizer::{normalize_text, BpeVocab, TokenId};

/// How entity vectors are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitMode {
    /// Seeded Gaussian vectors, no metadata.
    Random,
    /// Mean of whole-word vectors: a word only has a vector when the entire
    /// word is one vocabulary token; otherwise it contributes zeros.
    WordAvg,
    /// Pooled BPE token embeddings.
    Bpe,
}

/// Whether content vectors only seed free item rows or stay tied to metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContentMode {
    Init,
    Tied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    Dot,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingKind {
    Mean,
    Attention,
}

macro_rules! text_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

text_enum!(InitMode { Random => "random", WordAvg => "wordavg", Bpe => "bpe" });
text_enum!(ContentMode { Init => "init", Tied => "tied" });
text_enum!(ScoreMode { Dot => "dot", Cosine => "cosine" });
text_enum!(PoolingKind { Mean => "mean", Attention => "attention" });

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub init: InitMode,
    pub content: ContentMode,
    pub score: ScoreMode,
    pub pooling: PoolingKind,
    /// L2-normalize content priors in init mode.
    pub normalize: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            init: InitMode::Bpe,
            content: ContentMode::Init,
            score: ScoreMode::Dot,
            pooling: PoolingKind::Mean,
            normalize: true,
            seed: 0,
        }
    }
}

/// Trained or freshly initialized model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub users: Matrix,
    pub items: Matrix,
    pub pooler: Option<AttentionPooler>,
    pub adam: AdamState,
    pub config: ModelConfig,
    /// Hold-out ratio of the split the model was trained against.
    pub cold_ratio: f64,
    pub vocab_hash: u64,
    /// Token ids per item; filled in tied mode so item rows can be recomputed.
    pub item_tokens: Vec<Vec<TokenId>>,
}

impl ModelState {
    pub fn dim(&self) -> usize {
        self.users.dim()
    }

    pub fn rng_seed(&self) -> u64 {
        self.config.seed
    }

    pub fn pooling(&self) -> Pooling {
        match &self.pooler {
            Some(p) => Pooling::Attention(p.clone()),
            None => Pooling::Mean,
        }
    }

    /// True if the item's row is computed from its metadata.
    pub fn is_tied(&self, item: u32) -> bool {
        self.config.content == ContentMode::Tied && self.item_tokens.get(item as usize).is_some_and(|t| !t.is_empty())
    }

    /// Recomputes every tied item row from the current pooler.
    pub fn refresh_tied_items(&mut self, table: &EmbeddingTable) -> Result<()> {
        if self.config.content != ContentMode::Tied {
            return Ok(());
        }
        let pooling = self.pooling();
        for (item, tokens) in self.item_tokens.iter().enumerate() {
            if !tokens.is_empty() {
                let v = pool_tokens(table, &pooling, tokens)?;
                self.items.row_mut(item).copy_from_slice(&v.values);
            }
        }
        Ok(())
    }
}

/// Seeded N(0, (0.1/sqrt(h))^2) vector, a pure function of its arguments.
pub fn random_vector(seed: u64, tag: u64, index: u64, dim: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index));
    let normal = Normal::new(0.0, 0.1 / (dim as f64).sqrt()).expect("positive scale");
    (0..dim).map(|_| normal.sample(&mut rng) as f32).collect()
}

/// Whole-word average: the sentence-level baseline analogue. Words that
/// are not a single vocabulary token contribute a zero vector.
pub fn wordavg_vector(vocab: &BpeVocab, table: &EmbeddingTable, raw_text: &str) -> Result<EntityVector> {
    let norm = normalize_text(raw_text);
    let words: Vec<&str> = norm.split(' ').filter(|w| !w.is_empty()).collect();
    if words.is_empty() {
        return Err(Error::EmptyMetadata);
    }
    let mut acc = vec![0f64; table.dim()];
    for w in &words {
        if let Some(id) = vocab.id_of(w.as_bytes()) {
            for (a, &v) in acc.iter_mut().zip(table.row(id)) {
                *a += v as f64;
            }
        }
    }
    let n = words.len() as f64;
    Ok(EntityVector { values: acc.into_iter().map(|a| (a / n) as f32).collect(), normalized: false })
}

fn maybe_normalize(v: EntityVector, normalize: bool) -> EntityVector {
    if normalize {
        l2_normalize(&v.values).unwrap_or(v)
    } else {
        v
    }
}

/// The representation `config.init` assigns to an entity with `text`, or
/// `None` when the text carries nothing to pool. Under cosine scoring a zero
/// prior has no direction, so it also counts as nothing.
fn content_prior(
    config: &ModelConfig,
    vocab: &BpeVocab,
    table: &EmbeddingTable,
    pooling: &Pooling,
    text: &str,
) -> Result<Option<EntityVector>> {
    let v = match config.init {
        InitMode::Random => return Ok(None),
        InitMode::WordAvg => wordavg_vector(vocab, table, text),
        InitMode::Bpe => embed_entity(vocab, table, pooling, text, false),
    };
    let v = match v {
        Ok(v) => v,
        Err(Error::EmptyMetadata) => return Ok(None),
        Err(e) => return Err(e),
    };
    if config.score == ScoreMode::Cosine && crate::embedding::dot64(&v.values, &v.values).sqrt() < 1e-12 {
        return Ok(None);
    }
    Ok(Some(maybe_normalize(v, config.normalize)))
}

/// Builds the initial model for `dataset`.
///
/// Users and items start from their content prior under `config.init`, or
/// from a seeded random vector when that mode or their metadata provides
/// none. In tied mode, metadata-bearing items are pooled from their tokens
/// and stay tied to the pooler during training.
pub fn init_model(
    dataset: &Dataset,
    split: Option<&ColdStartSplit>,
    vocab: &BpeVocab,
    table: &EmbeddingTable,
    config: &ModelConfig,
) -> Result<ModelState> {
    table.check_vocab(vocab)?;
    if let Some(split) = split {
        split.validate(dataset)?;
    }
    if config.content == ContentMode::Tied && config.init != InitMode::Bpe {
        return Err(Error::Config(format!("tied content mode requires bpe initialization, not {}", config.init)));
    }
    let dim = table.dim();
    let pooler = match config.pooling {
        PoolingKind::Mean => None,
        PoolingKind::Attention => Some(AttentionPooler::uniform(dim)),
    };
    let pooling = match &pooler {
        Some(p) => Pooling::Attention(p.clone()),
        None => Pooling::Mean,
    };

    let mut users = Matrix::zeros(dataset.n_users(), dim);
    for (u, text) in dataset.user_text.iter().enumerate() {
        let prior = match text {
            Some(t) => content_prior(config, vocab, table, &pooling, t)?,
            None => None,
        };
        let v = prior.map_or_else(|| random_vector(config.seed, USER_INIT, u as u64, dim), |p| p.values);
        users.row_mut(u).copy_from_slice(&v);
    }

    let tied = config.content == ContentMode::Tied;
    let mut items = Matrix::zeros(dataset.n_items(), dim);
    let mut item_tokens = Vec::new();
    for (i, text) in dataset.item_text.iter().enumerate() {
        let v = if tied {
            let tokens = tokenize_entity(vocab, text);
            let v = if tokens.is_empty() { None } else { Some(pool_tokens(table, &pooling, &tokens)?.values) };
            item_tokens.push(tokens);
            v
        } else {
            content_prior(config, vocab, table, &pooling, text)?.map(|p| p.values)
        };
        let v = v.unwrap_or_else(|| random_vector(config.seed, ITEM_INIT, i as u64, dim));
        items.row_mut(i).copy_from_slice(&v);
    }

    Ok(ModelState {
        adam: AdamState::new(dataset.n_users(), dataset.n_items(), dim),
        users,
        items,
        pooler,
        config: config.clone(),
        cold_ratio: split.map_or(0.0, |s| s.ratio),
        vocab_hash: vocab.content_hash(),
        item_tokens,
    })
}

fn vector_score(mode: ScoreMode, u: &[f32], v: &[f32]) -> Result<f64> {
    let dot = crate::embedding::dot64(u, v);
    match mode {
        ScoreMode::Dot => Ok(dot),
        ScoreMode::Cosine => {
            let nu = crate::embedding::dot64(u, u).sqrt();
            let nv = crate::embedding::dot64(v, v).sqrt();
            if nu < 1e-12 || nv < 1e-12 {
                return Err(Error::DegenerateVector(nu.min(nv)));
            }
            Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
        }
    }
}

/// Predicted preference of `user` for `item`.
pub fn score(state: &ModelState, user: u32, item: u32) -> Result<f64> {
    if user as usize >= state.users.rows() || item as usize >= state.items.rows() {
        return Err(Error::Integrity(format!("unknown pair (user {user}, item {item})")));
    }
    vector_score(state.config.score, state.users.row(user as usize), state.items.row(item as usize))
}

/// Representation for an entity with no interactions.
///
/// Uses the model's trained pooler in tied mode and its initialization
/// scheme otherwise; text that yields no vector falls back to a random
/// vector seeded by `fallback_seed`. Normalized in cosine score mode.
pub fn cold_vector(
    state: &ModelState,
    vocab: &BpeVocab,
    table: &EmbeddingTable,
    entity_text: &str,
    fallback_seed: u64,
) -> Result<EntityVector> {
    table.check_vocab(vocab)?;
    let pooling = state.pooling();
    let prior = match state.config.content {
        ContentMode::Tied => match embed_entity(vocab, table, &pooling, entity_text, false) {
            Ok(v) => Some(v),
            Err(Error::EmptyMetadata) => None,
            Err(e) => return Err(e),
        },
        ContentMode::Init => content_prior(&state.config, vocab, table, &pooling, entity_text)?,
    };
    let v = prior.unwrap_or_else(|| EntityVector {
        values: random_vector(fallback_seed, FALLBACK, 0, table.dim()),
        normalized: false,
    });
    Ok(match state.config.score {
        ScoreMode::Cosine => maybe_normalize(v, true),
        ScoreMode::Dot => v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_dataset, parse_interactions, parse_metadata};
    use crate::embedding::synth_table;
    use crate::tokenizer::train_bpe;

    pub(crate) fn fixture() -> (Dataset, BpeVocab, EmbeddingTable) {
        let recs = parse_interactions("a\tx\t1\na\ty\t1\nb\ty\t1\nb\tz\t1\n", "t").unwrap();
        let meta = parse_metadata("x\tlower lowest\ny\tlow\nz\tqqzz vvkk\nw\t\n", "t").unwrap();
        let d = build_dataset(&recs, &meta, None).unwrap();
        let v = train_bpe(&["low low low lower lowest"], 260).unwrap();
        let t = synth_table(&v, 8, 5).unwrap();
        (d, v, t)
    }

    #[test]
    fn deterministic_init() {
        let (d, v, t) = fixture();
        for init in [InitMode::Random, InitMode::WordAvg, InitMode::Bpe] {
            let cfg = ModelConfig { init, seed: 4, ..Default::default() };
            assert_eq!(init_model(&d, None, &v, &t, &cfg).unwrap(), init_model(&d, None, &v, &t, &cfg).unwrap());
        }
    }

    #[test]
    fn bpe_single_token_item_is_its_row() {
        let (d, v, t) = fixture();
        let cfg = ModelConfig { normalize: false, ..Default::default() };
        let m = init_model(&d, None, &v, &t, &cfg).unwrap();
        let y = d.item_ids.dense("y").unwrap() as usize;
        assert_eq!(m.items.row(y), t.row(v.id_of(b"low").unwrap()));
    }

    #[test]
    fn wordavg_oov_text_is_zero() {
        let (d, v, t) = fixture();
        let cfg = ModelConfig { init: InitMode::WordAvg, ..Default::default() };
        let m = init_model(&d, None, &v, &t, &cfg).unwrap();
        let z = d.item_ids.dense("z").unwrap() as usize;
        assert!(m.items.row(z).iter().all(|&x| x == 0.0));
        // Empty text falls back to a random vector.
        let w = d.item_ids.dense("w").unwrap() as usize;
        assert_eq!(m.items.row(w), random_vector(0, ITEM_INIT, w as u64, 8).as_slice());
    }

    #[test]
    fn tied_requires_bpe() {
        let (d, v, t) = fixture();
        let cfg = ModelConfig { init: InitMode::Random, content: ContentMode::Tied, ..Default::default() };
        assert!(matches!(init_model(&d, None, &v, &t, &cfg), Err(Error::Config(_))));
    }

    fn two_vector_state(u: &[f32], i: &[f32], mode: ScoreMode) -> ModelState {
        let (d, v, t) = fixture();
        let mut m = init_model(&d, None, &v, &t, &ModelConfig { score: mode, ..Default::default() }).unwrap();
        let mut users = Matrix::zeros(1, u.len());
        users.row_mut(0).copy_from_slice(u);
        let mut items = Matrix::zeros(1, i.len());
        items.row_mut(0).copy_from_slice(i);
        m.users = users;
        m.items = items;
        m
    }

    #[test]
    fn score_examples() {
        let m = two_vector_state(&[1.0, 0.0], &[0.0, 3.0], ScoreMode::Dot);
        assert_eq!(score(&m, 0, 0).unwrap(), 0.0);
        let m = two_vector_state(&[0.3, -2.0], &[0.3, -2.0], ScoreMode::Cosine);
        assert!((score(&m, 0, 0).unwrap() - 1.0).abs() < 1e-12);
        let m = two_vector_state(&[1.0, 2.0], &[3.0, -1.0], ScoreMode::Dot);
        assert_eq!(score(&m, 0, 0).unwrap(), 1.0);
        let m = two_vector_state(&[1.0, 2.0], &[0.0, 0.0], ScoreMode::Cosine);
        assert!(matches!(score(&m, 0, 0), Err(Error::DegenerateVector(_))));
        assert!(score(&m, 1, 0).is_err());
    }

    #[test]
    fn cold_vector_fallback_is_deterministic() {
        let (d, v, t) = fixture();
        let m = init_model(&d, None, &v, &t, &ModelConfig::default()).unwrap();
        let a = cold_vector(&m, &v, &t, "", 77).unwrap();
        let b = cold_vector(&m, &v, &t, "  !! ", 77).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, cold_vector(&m, &v, &t, "", 78).unwrap());
    }

    #[test]
    fn cold_vector_matches_tied_item() {
        let (d, v, t) = fixture();
        let cfg = ModelConfig { content: ContentMode::Tied, pooling: PoolingKind::Attention, ..Default::default() };
        let mut m = init_model(&d, None, &v, &t, &cfg).unwrap();
        m.pooler = Some(AttentionPooler::new(vec![0.5, -1.0, 0.2, 0.0, 0.3, 1.0, -0.7, 0.1], 0.7).unwrap());
        m.refresh_tied_items(&t).unwrap();
        let x = d.item_ids.dense("x").unwrap() as usize;
        let c = cold_vector(&m, &v, &t, "Lower, lowest", 1).unwrap();
        assert_eq!(c.values.as_slice(), m.items.row(x));
    }
}
