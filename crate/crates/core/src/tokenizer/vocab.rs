use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::normalize::words;
use super::train::merge_pair;
use crate::error::{Error, Result};

pub type TokenId = u32;

/// Size of the byte-level base alphabet. Ids `0..256` are single bytes.
pub const BASE_ALPHABET: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeRule {
    pub left: Vec<u8>,
    pub right: Vec<u8>,
    /// 0 for the first merge learned.
    pub rank: u32,
}

/// Learned merge rules plus the token/id bijection they induce.
///
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct BpeVocab {
    merges: Vec<MergeRule>,
    tokens: Vec<Vec<u8>>,
    token_to_id: HashMap<Vec<u8>, TokenId>,
    pair_rank: HashMap<(TokenId, TokenId), u32>,
    target_size: usize,
    content_hash: u64,
}

/// An encoded text: token ids plus the position where each word starts.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    /// Index into `ids` of the first token of every word.
    pub word_starts: Vec<usize>,
    pub source_len_bytes: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl BpeVocab {
    /// Builds a vocabulary from merge pairs listed in rank order.
    pub fn from_merges(target_size: usize, pairs: Vec<(Vec<u8>, Vec<u8>)>) -> Result<Self> {
        if target_size <= BASE_ALPHABET {
            return Err(Error::Config(format!(
                "target vocabulary size {target_size} must be at least {}",
                BASE_ALPHABET + 1
            )));
        }
        if BASE_ALPHABET + pairs.len() > target_size {
            return Err(Error::Integrity(format!("{} merges exceed target size {target_size}", pairs.len())));
        }
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let mut token_to_id: HashMap<Vec<u8>, TokenId> =
            tokens.iter().enumerate().map(|(id, t)| (t.clone(), id as TokenId)).collect();
        let mut pair_rank = HashMap::with_capacity(pairs.len());
        let mut merges = Vec::with_capacity(pairs.len());

        for (rank, (left, right)) in pairs.into_iter().enumerate() {
            let lookup = |t: &[u8]| {
                token_to_id.get(t).copied().ok_or_else(|| {
                    Error::Integrity(format!("merge {rank} references unknown token {}", hex::encode(t)))
                })
            };
            let l = lookup(&left)?;
            let r = lookup(&right)?;
            let merged = [left.as_slice(), right.as_slice()].concat();
            if token_to_id.contains_key(&merged) {
                return Err(Error::Integrity(format!(
                    "merge {rank} duplicates existing token {}",
                    hex::encode(&merged)
                )));
            }
            let id = tokens.len() as TokenId;
            token_to_id.insert(merged.clone(), id);
            tokens.push(merged);
            pair_rank.insert((l, r), rank as u32);
            merges.push(MergeRule { left, right, rank: rank as u32 });
        }

        let content_hash = digest(&tokens, &merges);
        Ok(BpeVocab { merges, tokens, token_to_id, pair_rank, target_size, content_hash })
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn target_size(&self) -> usize {
        self.target_size
    }

    pub fn content_hash(&self) -> u64 {
        self.content_hash
    }

    pub fn token(&self, id: TokenId) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn id_of(&self, token: &[u8]) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    /// Encodes one word (no spaces) by repeatedly applying the
    /// lowest-ranked merge present, all occurrences left to right.
    pub fn encode_word(&self, word: &[u8], out: &mut Vec<TokenId>) {
        let mut parts: Vec<TokenId> = word.iter().map(|&b| b as TokenId).collect();
        while parts.len() > 1 {
            let best =
                parts.windows(2).filter_map(|w| self.pair_rank.get(&(w[0], w[1])).map(|&r| (r, w[0], w[1]))).min();
            let Some((rank, l, r)) = best else { break };
            parts = merge_pair(&parts, l, r, (BASE_ALPHABET as u32) + rank);
        }
        out.extend(parts);
    }

    /// Encodes normalized text. Every byte is covered by exactly one token;
    /// unseen byte patterns fall back to single-byte tokens.
    pub fn encode(&self, text: &str) -> TokenSequence {
        let mut seq = TokenSequence { source_len_bytes: text.len(), ..Default::default() };
        for word in words(text) {
            seq.word_starts.push(seq.ids.len());
            self.encode_word(word.as_bytes(), &mut seq.ids);
        }
        seq
    }

    /// Exact inverse of [`encode`](Self::encode): words are joined with
    /// single spaces.
    pub fn decode(&self, seq: &TokenSequence) -> Result<String> {
        let mut bytes = Vec::with_capacity(seq.source_len_bytes);
        let mut starts = seq.word_starts.iter().peekable();
        if !seq.ids.is_empty() && starts.peek() != Some(&&0) {
            return Err(Error::Integrity("first word does not start at 0".into()));
        }
        for (pos, &id) in seq.ids.iter().enumerate() {
            let token = self.token(id).ok_or(Error::UnknownToken(id))?;
            if starts.peek() == Some(&&pos) {
                starts.next();
                if pos > 0 {
                    bytes.push(b' ');
                }
            }
            bytes.extend_from_slice(token);
        }
        if starts.next().is_some() {
            return Err(Error::Integrity("word boundary past end of sequence".into()));
        }
        String::from_utf8(bytes).map_err(|e| Error::Integrity(format!("decoded bytes are not UTF-8: {e}")))
    }
}

fn digest(tokens: &[Vec<u8>], merges: &[MergeRule]) -> u64 {
    let mut h = Sha256::new();
    h.update((tokens.len() as u64).to_le_bytes());
    for t in tokens {
        h.update((t.len() as u32).to_le_bytes());
        h.update(t);
    }
    for m in merges {
        h.update(m.rank.to_le_bytes());
        h.update((m.left.len() as u32).to_le_bytes());
        h.update(&m.left);
        h.update((m.right.len() as u32).to_le_bytes());
        h.update(&m.right);
    }
    let out = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&out[..8]);
    u64::from_be_bytes(first)
}
