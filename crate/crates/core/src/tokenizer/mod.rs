//! Byte-level BPE over normalized metadata text.

mod io;
mod normalize;
mod train;
mod vocab;

pub use io::{load_vocab, parse_vocab, save_vocab, vocab_to_string};
pub use normalize::normalize_text;
pub use train::train_bpe;
pub use vocab::{BpeVocab, MergeRule, TokenId, TokenSequence, BASE_ALPHABET};
