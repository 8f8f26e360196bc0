//! Fixtures shared by the criterion benches.

use coldrec_core::data::{synth_benchmark, Dataset, SynthConfig};
use coldrec_core::embedding::{synth_table, EmbeddingTable};
use coldrec_core::evaluation::{make_cold_split, ColdStartSplit};
use coldrec_core::tokenizer::{train_bpe, BpeVocab};

/// The default synthetic benchmark with its vocabulary, table and split.
pub struct Fixture {
    pub dataset: Dataset,
    pub vocab: BpeVocab,
    pub table: EmbeddingTable,
    pub split: ColdStartSplit,
}

pub fn fixture(dim: usize) -> Fixture {
    let dataset = synth_benchmark(&SynthConfig::default()).expect("default benchmark").dataset;
    let vocab = train_bpe(&dataset.item_text, 600).expect("vocabulary");
    let table = synth_table(&vocab, dim, 42).expect("table");
    let split = make_cold_split(&dataset, 0.1, 42).expect("split");
    Fixture { dataset, vocab, table, split }
}
