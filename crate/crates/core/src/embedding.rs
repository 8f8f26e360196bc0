//! Token embedding tables and pooling of token vectors into entity vectors.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, LoadError, Result};
use crate::tokenizer::{normalize_text, BpeVocab, TokenId};

const MAGIC: &[u8; 4] = b"BPEV";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 8;

/// One dense `f32` vector per vocabulary token, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: Vec<f32>,
    vocab_hash: u64,
}

impl EmbeddingTable {
    pub fn new(dim: usize, rows: Vec<f32>, vocab_hash: u64) -> Result<Self> {
        if dim == 0 || rows.len() % dim != 0 {
            return Err(Error::Integrity(format!("{} values do not form rows of dimension {dim}", rows.len())));
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            return Err(LoadError::NonFinite { row: pos / dim, col: pos % dim }.into());
        }
        Ok(EmbeddingTable { dim, rows, vocab_hash })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn vocab_hash(&self) -> u64 {
        self.vocab_hash
    }

    pub fn row(&self, id: TokenId) -> &[f32] {
        let start = id as usize * self.dim;
        &self.rows[start..start + self.dim]
    }

    pub fn check_vocab(&self, vocab: &BpeVocab) -> Result<()> {
        if self.vocab_hash != vocab.content_hash() {
            return Err(LoadError::HashMismatch { file: self.vocab_hash, vocab: vocab.content_hash() }.into());
        }
        if self.len() != vocab.len() {
            return Err(LoadError::RowCount { file: self.len(), vocab: vocab.len() }.into());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.rows.len() * 4);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.vocab_hash.to_le_bytes());
        for v in &self.rows {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes the binary layout without checking it against a vocabulary.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 5 || &bytes[..4] != MAGIC {
            return Err(LoadError::BadMagic.into());
        }
        if bytes[4] != VERSION {
            return Err(LoadError::BadVersion(bytes[4]).into());
        }
        if bytes.len() < HEADER_LEN {
            return Err(LoadError::Truncated { expected: 0, found: 0 }.into());
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
        let n_rows = u32_at(5);
        let dim = u32_at(9);
        let vocab_hash = u64::from_le_bytes(bytes[13..21].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        let row_bytes = dim.max(1) * 4;
        if body.len() != n_rows * dim * 4 {
            return Err(LoadError::Truncated { expected: n_rows, found: body.len() / row_bytes }.into());
        }
        let rows = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        EmbeddingTable::new(dim, rows, vocab_hash)
    }
}

pub fn save_table(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, table.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads an embedding file and checks it was built for `vocab`.
pub fn load_table(path: impl AsRef<Path>, vocab: &BpeVocab) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let table = EmbeddingTable::from_bytes(&bytes)?;
    table.check_vocab(vocab)?;
    Ok(table)
}

fn gram_seed(seed: u64, gram: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(gram);
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

/// Deterministic stand-in for encoder token embeddings.
///
/// Each token vector is the L2-normalized sum of one seeded standard
/// Gaussian vector per byte trigram of the token (tokens shorter than three
/// bytes form a single gram). Tokens sharing trigrams are therefore
/// positively correlated, and equal byte strings map to equal vectors.
pub fn synth_table(vocab: &BpeVocab, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if dim < 2 {
        return Err(Error::Config(format!("embedding dimension {dim} must be at least 2")));
    }
    let mut rows = Vec::with_capacity(vocab.len() * dim);
    let mut acc = vec![0f64; dim];
    for id in 0..vocab.len() as TokenId {
        let token = vocab.token(id).expect("contiguous ids");
        acc.iter_mut().for_each(|a| *a = 0.0);
        let grams: Vec<&[u8]> = if token.len() < 3 { vec![token] } else { token.windows(3).collect() };
        for gram in grams {
            let mut rng = ChaCha8Rng::seed_from_u64(gram_seed(seed, gram));
            for a in acc.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *a += z;
            }
        }
        let norm = acc.iter().map(|a| a * a).sum::<f64>().sqrt();
        rows.extend(acc.iter().map(|a| (a / norm) as f32));
    }
    EmbeddingTable::new(dim, rows, vocab.content_hash())
}

/// A pooled entity representation.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityVector {
    pub values: Vec<f32>,
    /// True when `values` has unit Euclidean norm.
    pub normalized: bool,
}

impl EntityVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Single-query attention over a token sequence:
/// `w = softmax(q . e_i / temperature)`, output `sum w_i e_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionPooler {
    pub query: Vec<f32>,
    pub temperature: f32,
}

impl AttentionPooler {
    pub fn new(query: Vec<f32>, temperature: f32) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!("temperature {temperature} must be positive")));
        }
        if query.iter().any(|q| !q.is_finite()) {
            return Err(Error::Config("attention query must be finite".into()));
        }
        Ok(AttentionPooler { query, temperature })
    }

    /// Zero query, unit temperature: uniform weights.
    pub fn uniform(dim: usize) -> Self {
        AttentionPooler { query: vec![0.0; dim], temperature: 1.0 }
    }

    /// Softmax attention weights over `embeddings`.
    pub fn weights(&self, embeddings: &[&[f32]]) -> Vec<f64> {
        let tau = self.temperature as f64;
        let logits: Vec<f64> = embeddings.iter().map(|e| dot64(&self.query, e) / tau).collect();
        softmax(&logits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pooling {
    Mean,
    Attention(AttentionPooler),
}

pub(crate) fn dot64(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

fn check_dims(embeddings: &[&[f32]], dim: usize) -> Result<()> {
    if embeddings.is_empty() {
        return Err(Error::EmptyMetadata);
    }
    if let Some(e) = embeddings.iter().find(|e| e.len() != dim) {
        return Err(Error::Integrity(format!("embedding of dimension {} where {dim} was expected", e.len())));
    }
    Ok(())
}

/// Coordinate-wise arithmetic mean.
pub fn mean_pool(embeddings: &[&[f32]]) -> Result<EntityVector> {
    let dim = embeddings.first().map_or(0, |e| e.len());
    check_dims(embeddings, dim)?;
    let mut acc = vec![0f64; dim];
    for e in embeddings {
        for (a, &v) in acc.iter_mut().zip(e.iter()) {
            *a += v as f64;
        }
    }
    let n = embeddings.len() as f64;
    Ok(EntityVector { values: acc.into_iter().map(|a| (a / n) as f32).collect(), normalized: false })
}

pub fn attention_pool(pooler: &AttentionPooler, embeddings: &[&[f32]]) -> Result<EntityVector> {
    check_dims(embeddings, pooler.query.len())?;
    let weights = pooler.weights(embeddings);
    let mut acc = vec![0f64; pooler.query.len()];
    for (w, e) in weights.iter().zip(embeddings) {
        for (a, &v) in acc.iter_mut().zip(e.iter()) {
            *a += w * v as f64;
        }
    }
    Ok(EntityVector { values: acc.into_iter().map(|a| a as f32).collect(), normalized: false })
}

pub fn l2_normalize(v: &[f32]) -> Result<EntityVector> {
    let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
    if !(norm >= 1e-12) {
        return Err(Error::DegenerateVector(norm));
    }
    Ok(EntityVector { values: v.iter().map(|&x| (x as f64 / norm) as f32).collect(), normalized: true })
}

/// Normalizes and encodes `raw_text`, returning its token ids.
pub fn tokenize_entity(vocab: &BpeVocab, raw_text: &str) -> Vec<TokenId> {
    vocab.encode(&normalize_text(raw_text)).ids
}

pub fn pool_tokens(table: &EmbeddingTable, pooling: &Pooling, ids: &[TokenId]) -> Result<EntityVector> {
    let rows: Vec<&[f32]> = ids.iter().map(|&id| table.row(id)).collect();
    match pooling {
        Pooling::Mean => mean_pool(&rows),
        Pooling::Attention(p) => attention_pool(p, &rows),
    }
}

/// Text to cold-start vector: normalize, encode, look up rows, pool and
/// optionally L2-normalize.
pub fn embed_entity(
    vocab: &BpeVocab,
    table: &EmbeddingTable,
    pooling: &Pooling,
    raw_text: &str,
    normalize: bool,
) -> Result<EntityVector> {
    table.check_vocab(vocab)?;
    let ids = tokenize_entity(vocab, raw_text);
    let pooled = pool_tokens(table, pooling, &ids)?;
    if normalize {
        l2_normalize(&pooled.values)
    } else {
        Ok(pooled)
    }
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let na = dot64(a, a).sqrt();
    let nb = dot64(b, b).sqrt();
    dot64(a, b) / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::train_bpe;

    fn vocab() -> BpeVocab {
        train_bpe(&["low low low lower lowest"], 260).unwrap()
    }

    #[test]
    fn mean_pool_examples() {
        let e = [1.0f32, -2.0, 0.5];
        assert_eq!(mean_pool(&[&e]).unwrap().values, e.to_vec());
        assert_eq!(mean_pool(&[&e, &e, &e]).unwrap().values, e.to_vec());
        let v = mean_pool(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert_eq!(v.values, vec![0.5, 0.5]);
        assert!(!v.normalized);
        assert!(matches!(mean_pool(&[]), Err(Error::EmptyMetadata)));
    }

    #[test]
    fn attention_zero_query_is_mean() {
        let rows: Vec<&[f32]> = vec![&[1.0, 2.0], &[3.0, -1.0], &[0.0, 0.5]];
        let a = attention_pool(&AttentionPooler::uniform(2), &rows).unwrap();
        let m = mean_pool(&rows).unwrap();
        for (x, y) in a.values.iter().zip(&m.values) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn attention_single_token() {
        let p = AttentionPooler::new(vec![3.0, -7.0], 0.2).unwrap();
        let a = attention_pool(&p, &[&[0.25, 4.0]]).unwrap();
        assert_eq!(a.values, vec![0.25, 4.0]);
    }

    #[test]
    fn attention_sharp_query() {
        // softmax(100, 0): weight on the first input is 1 / (1 + e^-100).
        let p = AttentionPooler::new(vec![10.0, 0.0], 0.1).unwrap();
        let w_first = 1.0 / (1.0 + (-100f64).exp());
        let a = attention_pool(&p, &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        assert!((a.values[0] as f64 - w_first).abs() < 1e-6);
        assert!((a.values[1] as f64 - (1.0 - w_first)).abs() < 1e-6);
        assert!((a.values[0] - 1.0).abs() < 1e-6 && a.values[1].abs() < 1e-6);
    }

    #[test]
    fn pooler_rejects_bad_temperature() {
        assert!(AttentionPooler::new(vec![0.0], 0.0).is_err());
        assert!(AttentionPooler::new(vec![0.0], -1.0).is_err());
        assert!(AttentionPooler::new(vec![f32::NAN], 1.0).is_err());
    }

    #[test]
    fn l2_examples() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert_eq!(v.values, vec![0.6, 0.8]);
        assert!(v.normalized);
        assert_eq!(l2_normalize(&[0.0, 1.0]).unwrap().values, vec![0.0, 1.0]);
        assert!(matches!(l2_normalize(&[0.0, 0.0]), Err(Error::DegenerateVector(_))));
    }

    #[test]
    fn synth_table_is_deterministic_and_content_addressed() {
        let v = vocab();
        let a = synth_table(&v, 8, 7).unwrap();
        let b = synth_table(&v, 8, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_table(&v, 8, 8).unwrap());
        // Same bytes in two different vocabularies and slots.
        let other = train_bpe(&["ab ab ab lo lo"], 260).unwrap();
        let c = synth_table(&other, 8, 7).unwrap();
        let lo_a = v.id_of(b"lo").unwrap();
        let lo_c = other.id_of(b"lo").unwrap();
        assert_ne!(lo_a, lo_c);
        assert_eq!(a.row(lo_a), c.row(lo_c));
        assert!(synth_table(&v, 1, 0).is_err());
    }

    #[test]
    fn synth_rows_are_unit_norm() {
        let t = synth_table(&vocab(), 16, 1).unwrap();
        for id in 0..t.len() as u32 {
            let n = dot64(t.row(id), t.row(id)).sqrt();
            assert!((n - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn embed_single_token_text_is_its_row() {
        let v = vocab();
        let t = synth_table(&v, 8, 3).unwrap();
        let id = v.id_of(b"low").unwrap();
        let e = embed_entity(&v, &t, &Pooling::Mean, "LOW!", false).unwrap();
        assert_eq!(e.values, t.row(id).to_vec());
        let again = embed_entity(&v, &t, &Pooling::Mean, "LOW!", false).unwrap();
        assert_eq!(e, again);
        assert!(matches!(embed_entity(&v, &t, &Pooling::Mean, " ?? ", false), Err(Error::EmptyMetadata)));
    }

    #[test]
    fn table_file_roundtrip_and_errors() {
        let v = train_bpe(&["aaaa"], 258).unwrap();
        assert_eq!(v.len(), 257);
        let t = synth_table(&v, 8, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        save_table(&t, &path).unwrap();
        let back = load_table(&path, &v).unwrap();
        assert_eq!(
            back.rows.iter().map(|f| f.to_bits()).collect::<Vec<_>>(),
            t.rows.iter().map(|f| f.to_bits()).collect::<Vec<_>>()
        );

        let other = train_bpe(&["bbbb"], 258).unwrap();
        assert!(matches!(load_table(&path, &other), Err(Error::EmbeddingLoad(LoadError::HashMismatch { .. }))));

        let mut bytes = t.to_bytes();
        bytes.truncate(bytes.len() - 8 * 4);
        assert!(matches!(
            EmbeddingTable::from_bytes(&bytes),
            Err(Error::EmbeddingLoad(LoadError::Truncated { expected: 257, found: 256 }))
        ));

        let mut bad = t.to_bytes();
        bad[0] = b'X';
        assert!(matches!(EmbeddingTable::from_bytes(&bad), Err(Error::EmbeddingLoad(LoadError::BadMagic))));
        let mut bad = t.to_bytes();
        bad[4] = 9;
        assert!(matches!(EmbeddingTable::from_bytes(&bad), Err(Error::EmbeddingLoad(LoadError::BadVersion(9)))));
        let mut bad = t.to_bytes();
        let off = HEADER_LEN + 4 * 5;
        bad[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            EmbeddingTable::from_bytes(&bad),
            Err(Error::EmbeddingLoad(LoadError::NonFinite { row: 0, col: 5 }))
        ));
    }

    #[test]
    fn truncated_300_row_table() {
        let t = EmbeddingTable::new(4, vec![0.5; 300 * 4], 1).unwrap();
        let mut bytes = t.to_bytes();
        bytes.truncate(bytes.len() - 16);
        assert!(matches!(
            EmbeddingTable::from_bytes(&bytes),
            Err(Error::EmbeddingLoad(LoadError::Truncated { expected: 300, found: 299 }))
        ));
    }

    #[test]
    fn row_count_mismatch() {
        let v = vocab();
        let t = EmbeddingTable::new(4, vec![0.5; 256 * 4], v.content_hash()).unwrap();
        assert!(matches!(t.check_vocab(&v), Err(Error::EmbeddingLoad(LoadError::RowCount { file: 256, vocab: 259 }))));
    }

    proptest::proptest! {
        #[test]
        fn mean_pool_permutation_invariant(
            rows in proptest::collection::vec(proptest::collection::vec(-4.0f32..4.0, 3), 1..8),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
            let mut shuffled = refs.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = mean_pool(&refs).unwrap();
            let b = mean_pool(&shuffled).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                proptest::prop_assert!((x - y).abs() <= 1e-6);
            }
        }

        #[test]
        fn attention_stays_in_hull(
            rows in proptest::collection::vec(proptest::collection::vec(-4.0f32..4.0, 3), 1..8),
            query in proptest::collection::vec(-5.0f32..5.0, 3),
            tau in 0.05f32..10.0,
        ) {
            let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
            let out = attention_pool(&AttentionPooler::new(query, tau).unwrap(), &refs).unwrap();
            for c in 0..3 {
                let lo = rows.iter().map(|r| r[c]).fold(f32::INFINITY, f32::min);
                let hi = rows.iter().map(|r| r[c]).fold(f32::NEG_INFINITY, f32::max);
                proptest::prop_assert!(out.values[c] >= lo - 1e-5 && out.values[c] <= hi + 1e-5);
            }
        }

        // The gap to the mean is of order |q| |e|^2 / tau, so inputs are drawn
        // at the unit scale synth_table produces.
        #[test]
        fn attention_high_temperature_is_mean(
            rows in proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, 3), 1..8),
            query in proptest::collection::vec(-1.0f32..1.0, 3),
        ) {
            let refs: Vec<&[f32]> = rows.iter().map(Vec::as_slice).collect();
            let a = attention_pool(&AttentionPooler::new(query, 1e6).unwrap(), &refs).unwrap();
            let m = mean_pool(&refs).unwrap();
            for (x, y) in a.values.iter().zip(&m.values) {
                proptest::prop_assert!((x - y).abs() <= 1e-4);
            }
        }

        #[test]
        fn l2_normalize_unit_and_idempotent(v in proptest::collection::vec(-100.0f32..100.0, 2..16)) {
            proptest::prop_assume!(v.iter().any(|x| x.abs() > 1e-3));
            let once = l2_normalize(&v).unwrap();
            let norm = dot64(&once.values, &once.values).sqrt();
            proptest::prop_assert!((norm - 1.0).abs() <= 1e-6);
            let twice = l2_normalize(&once.values).unwrap();
            for (x, y) in once.values.iter().zip(&twice.values) {
                proptest::prop_assert!((x - y).abs() <= 1e-6);
            }
        }
    }
}
