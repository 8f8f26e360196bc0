//! Binary checkpoint, little-endian throughout:
//!
//! ```text
//! "CRMS" u8 version=1
//! u32 n_users  u32 n_items  u32 dim
//! u8 init  u8 content  u8 score  u8 pooling  u8 normalize
//! u64 seed  f64 cold_ratio  u64 vocab_hash
//! f32 users[n_users*dim]  f32 items[n_items*dim]
//! u8 has_pooler [f32 query[dim]  f32 temperature]
//! per item: u32 n_tokens, u32 token ids   (empty unless tied)
//! ```
//!
//! Optimizer moments are not stored; a loaded model resumes with fresh Adam
//! state.

use std::fs;
use std::path::Path;

use super::{AdamState, ContentMode, InitMode, Matrix, ModelConfig, ModelState, PoolingKind, ScoreMode};
use crate::embedding::AttentionPooler;
use crate::error::{Error, LoadError, Result};

const MAGIC: &[u8; 4] = b"CRMS";
const VERSION: u8 = 1;

fn code<T: PartialEq + Copy>(all: &[T], v: T) -> u8 {
    all.iter().position(|&x| x == v).expect("listed variant") as u8
}

const INITS: [InitMode; 3] = [InitMode::Random, InitMode::WordAvg, InitMode::Bpe];
const CONTENTS: [ContentMode; 2] = [ContentMode::Init, ContentMode::Tied];
const SCORES: [ScoreMode; 2] = [ScoreMode::Dot, ScoreMode::Cosine];
const POOLINGS: [PoolingKind; 2] = [PoolingKind::Mean, PoolingKind::Attention];

pub fn model_to_bytes(state: &ModelState) -> Vec<u8> {
    let c = &state.config;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for n in [state.users.rows(), state.items.rows(), state.dim()] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    out.push(code(&INITS, c.init));
    out.push(code(&CONTENTS, c.content));
    out.push(code(&SCORES, c.score));
    out.push(code(&POOLINGS, c.pooling));
    out.push(c.normalize as u8);
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&state.cold_ratio.to_le_bytes());
    out.extend_from_slice(&state.vocab_hash.to_le_bytes());
    for x in state.users.as_slice().iter().chain(state.items.as_slice()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    match &state.pooler {
        Some(p) => {
            out.push(1);
            for x in p.query.iter().chain(std::iter::once(&p.temperature)) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        None => out.push(0),
    }
    for i in 0..state.items.rows() {
        let tokens = state.item_tokens.get(i).map_or(&[][..], |t| t.as_slice());
        out.extend_from_slice(&(tokens.len() as u32).to_le_bytes());
        for t in tokens {
            out.extend_from_slice(&t.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(LoadError::Truncated { expected: self.pos.saturating_add(n), found: self.bytes.len() })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes =
            self.take(n.checked_mul(4).ok_or(LoadError::Truncated { expected: usize::MAX, found: self.bytes.len() })?)?;
        let v: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if let Some(k) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Integrity(format!("non-finite parameter at offset {k}")));
        }
        Ok(v)
    }
}

fn variant<T: Copy>(all: &[T], code: u8, what: &str) -> Result<T> {
    all.get(code as usize).copied().ok_or_else(|| Error::Integrity(format!("unknown {what} code {code}")))
}

pub fn parse_model(bytes: &[u8]) -> Result<ModelState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| LoadError::BadMagic)? != MAGIC {
        return Err(LoadError::BadMagic.into());
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(LoadError::BadVersion(version).into());
    }
    let n_users = r.u32()? as usize;
    let n_items = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let config = ModelConfig {
        init: variant(&INITS, r.u8()?, "init mode")?,
        content: variant(&CONTENTS, r.u8()?, "content mode")?,
        score: variant(&SCORES, r.u8()?, "score mode")?,
        pooling: variant(&POOLINGS, r.u8()?, "pooling")?,
        normalize: r.u8()? != 0,
        seed: r.u64()?,
    };
    let cold_ratio = f64::from_bits(r.u64()?);
    let vocab_hash = r.u64()?;
    let users = Matrix::from_vec(n_users, dim, r.f32s(n_users * dim)?);
    let items = Matrix::from_vec(n_items, dim, r.f32s(n_items * dim)?);
    let pooler = match r.u8()? {
        0 => None,
        1 => {
            let query = r.f32s(dim)?;
            let tau = r.f32s(1)?[0];
            Some(AttentionPooler::new(query, tau).map_err(|e| Error::Integrity(e.to_string()))?)
        }
        other => return Err(Error::Integrity(format!("bad pooler flag {other}"))),
    };
    let mut item_tokens = Vec::new();
    let mut any_tokens = false;
    for _ in 0..n_items {
        let n = r.u32()? as usize;
        let bytes = r.take(n.saturating_mul(4))?;
        any_tokens |= n > 0;
        item_tokens.push(bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect());
    }
    if !any_tokens {
        item_tokens.clear();
    }
    if r.pos != bytes.len() {
        return Err(Error::Integrity(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(ModelState {
        adam: AdamState::new(n_users, n_items, dim),
        users,
        items,
        pooler,
        config,
        cold_ratio,
        vocab_hash,
        item_tokens,
    })
}

pub fn save_model(state: &ModelState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_bytes(state)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelState> {
    let path = path.as_ref();
    parse_model(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
