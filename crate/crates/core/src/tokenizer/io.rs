//! Line-oriented vocabulary file.
//!
//! ```text
//! bpevocab 1 <target_size> <content_hash_hex>
//! <rank> <left-hex> <right-hex>
//! ...
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::vocab::BpeVocab;
use crate::error::{Error, Result};

const MAGIC: &str = "bpevocab";
const VERSION: u32 = 1;

pub fn vocab_to_string(vocab: &BpeVocab) -> String {
    let mut out = format!("{MAGIC} {VERSION} {} {:016x}\n", vocab.target_size(), vocab.content_hash());
    for m in vocab.merges() {
        let _ = writeln!(out, "{} {} {}", m.rank, hex::encode(&m.left), hex::encode(&m.right));
    }
    out
}

pub fn save_vocab(vocab: &BpeVocab, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, vocab_to_string(vocab)).map_err(|e| Error::io(path, e))
}

pub fn load_vocab(path: impl AsRef<Path>) -> Result<BpeVocab> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vocab(&text, &path.display().to_string())
}

/// Parses the vocabulary file format; `origin` labels error messages.
pub fn parse_vocab(text: &str, origin: &str) -> Result<BpeVocab> {
    let err = |line: usize, msg: String| Error::parse(origin, line, msg);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != MAGIC {
        return Err(err(1, format!("expected '{MAGIC} <version> <size> <hash>'")));
    }
    let version: u32 = fields[1].parse().map_err(|_| err(1, format!("bad version '{}'", fields[1])))?;
    if version != VERSION {
        return Err(err(1, format!("unsupported version {version}")));
    }
    let target_size: usize = fields[2].parse().map_err(|_| err(1, format!("bad target size '{}'", fields[2])))?;
    if fields[3].len() != 16 {
        return Err(err(1, "content hash must be 16 hex digits".into()));
    }
    let expected_hash =
        u64::from_str_radix(fields[3], 16).map_err(|_| err(1, format!("bad content hash '{}'", fields[3])))?;

    let mut pairs = Vec::new();
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 3 {
            return Err(err(lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let rank: usize = fields[0].parse().map_err(|_| err(lineno, format!("bad rank '{}'", fields[0])))?;
        let token = |s: &str| -> Result<Vec<u8>> {
            match hex::decode(s) {
                Ok(b) if !b.is_empty() => Ok(b),
                _ => Err(err(lineno, format!("bad token hex '{s}'"))),
            }
        };
        let left = token(fields[1])?;
        let right = token(fields[2])?;
        if rank != pairs.len() {
            return Err(Error::Integrity(format!(
                "line {lineno}: rank {rank} out of sequence (expected {})",
                pairs.len()
            )));
        }
        pairs.push((left, right));
    }

    let vocab = BpeVocab::from_merges(target_size, pairs)?;
    if vocab.content_hash() != expected_hash {
        return Err(Error::Integrity(format!(
            "content hash {:016x} does not match header {expected_hash:016x}",
            vocab.content_hash()
        )));
    }
    Ok(vocab)
}
