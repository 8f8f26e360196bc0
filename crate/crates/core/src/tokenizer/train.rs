use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use super::normalize::{normalize_text, words};
use super::vocab::{BpeVocab, TokenId, BASE_ALPHABET};
use crate::error::{Error, Result};

type Pair = (TokenId, TokenId);

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    count: u64,
    // Among equal counts the lexicographically smallest (left, right) wins.
    bytes: Reverse<(Vec<u8>, Vec<u8>)>,
    pair: Pair,
}

struct Word {
    parts: Vec<TokenId>,
    freq: u64,
}

/// Learns a byte-level BPE vocabulary from `corpus`.
///
/// Greedy: each round merges the adjacent pair with the highest corpus
/// frequency (overlapping occurrences counted), ties going to the smallest
/// `(left, right)` byte strings. Stops at `target_size` tokens or when no
/// pair occurs at least twice. Merges never cross spaces.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<BpeVocab> {
    if target_size <= BASE_ALPHABET {
        return Err(Error::Config(format!(
            "target vocabulary size {target_size} must be at least {}",
            BASE_ALPHABET + 1
        )));
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for text in corpus {
        let norm = normalize_text(text.as_ref());
        for w in words(&norm) {
            *counts.entry(w.to_string()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Config("training corpus is empty after normalization".into()));
    }

    let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut words: Vec<Word> =
        counts.into_iter().map(|(w, freq)| Word { parts: w.bytes().map(TokenId::from).collect(), freq }).collect();

    let mut pair_count: HashMap<Pair, u64> = HashMap::new();
    let mut pair_words: HashMap<Pair, HashSet<usize>> = HashMap::new();
    for (idx, word) in words.iter().enumerate() {
        for w in word.parts.windows(2) {
            let p = (w[0], w[1]);
            *pair_count.entry(p).or_default() += word.freq;
            pair_words.entry(p).or_default().insert(idx);
        }
    }

    let candidate = |tokens: &[Vec<u8>], pair: Pair, count: u64| Candidate {
        count,
        bytes: Reverse((tokens[pair.0 as usize].clone(), tokens[pair.1 as usize].clone())),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = pair_count.iter().map(|(&p, &c)| candidate(&tokens, p, c)).collect();

    let mut merges = Vec::new();
    while tokens.len() < target_size {
        // Entries are pushed on every count change; stale ones are skipped.
        let best = loop {
            match heap.pop() {
                None => break None,
                Some(c) if pair_count.get(&c.pair) == Some(&c.count) => break Some(c),
                Some(_) => {}
            }
        };
        let Some(best) = best else { break };
        if best.count < 2 {
            break;
        }
        let (left, right) = best.pair;
        let new_id = tokens.len() as TokenId;
        let Reverse((lb, rb)) = best.bytes;
        tokens.push([lb.as_slice(), rb.as_slice()].concat());
        merges.push((lb, rb));

        let mut affected: Vec<usize> = pair_words.remove(&best.pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        let mut touched: HashSet<Pair> = HashSet::new();
        for idx in affected {
            let word = &mut words[idx];
            for w in word.parts.windows(2) {
                let p = (w[0], w[1]);
                if let Some(c) = pair_count.get_mut(&p) {
                    *c -= word.freq;
                }
                if let Some(set) = pair_words.get_mut(&p) {
                    set.remove(&idx);
                }
                touched.insert(p);
            }
            word.parts = merge_pair(&word.parts, left, right, new_id);
            for w in word.parts.windows(2) {
                let p = (w[0], w[1]);
                *pair_count.entry(p).or_default() += word.freq;
                pair_words.entry(p).or_default().insert(idx);
                touched.insert(p);
            }
        }
        for p in touched {
            match pair_count.get(&p).copied() {
                Some(0) => {
                    pair_count.remove(&p);
                    pair_words.remove(&p);
                }
                Some(c) => heap.push(candidate(&tokens, p, c)),
                None => {}
            }
        }
    }

    BpeVocab::from_merges(target_size, merges)
}

/// Replaces non-overlapping `(left, right)` occurrences, scanning left to right.
pub(crate) fn merge_pair(parts: &[TokenId], left: TokenId, right: TokenId, id: TokenId) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(parts.len());
    let mut i = 0;
    while i < parts.len() {
        if i + 1 < parts.len() && parts[i] == left && parts[i + 1] == right {
            out.push(id);
            i += 2;
        } else {
            out.push(parts[i]);
            i += 1;
        }
    }
    out
}
