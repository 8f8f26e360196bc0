use coldrec_core::embedding::{cosine, embed_entity, synth_table, Pooling};
use coldrec_core::tokenizer::{train_bpe, BpeVocab};

fn vocab_for(words: &[&str]) -> BpeVocab {
    let corpus: Vec<String> = words.iter().map(|w| format!("{w} {w} {w}")).collect();
    train_bpe(&corpus, 400).unwrap()
}

fn row<'a>(t: &'a coldrec_core::embedding::EmbeddingTable, v: &BpeVocab, w: &str) -> &'a [f32] {
    t.row(v.id_of(w.as_bytes()).unwrap_or_else(|| panic!("{w} is not a single token")))
}

#[test]
fn shared_trigrams_beat_disjoint_tokens() {
    let v = vocab_for(&["wireless", "wire", "zq"]);
    let (mut near, mut far) = (0.0, 0.0);
    for seed in 0..100 {
        let t = synth_table(&v, 32, seed).unwrap();
        near += cosine(row(&t, &v, "wireless"), row(&t, &v, "wire"));
        far += cosine(row(&t, &v, "wireless"), row(&t, &v, "zq"));
    }
    assert!(near / 100.0 > far / 100.0, "{near} vs {far}");
}

#[test]
fn lower_is_closer_to_lowest_than_to_unrelated() {
    let v = train_bpe(&["low low low lower lowest"], 260).unwrap();
    let wins = (0..100)
        .filter(|&seed| {
            let t = synth_table(&v, 32, seed).unwrap();
            let e = |s: &str| embed_entity(&v, &t, &Pooling::Mean, s, false).unwrap().values;
            cosine(&e("lower"), &e("lowest")) > cosine(&e("lower"), &e("zzqk"))
        })
        .count();
    assert!(wins >= 95, "{wins} of 100 seeds");
}

/// Entity pairs sharing a BPE token are more similar on average than
/// token-disjoint pairs.
#[test]
fn shared_subword_correlation() {
    let texts = [
        "wireless headset",
        "wireless mouse",
        "gaming headset",
        "gaming chair",
        "kitchen knife",
        "garden hose",
        "office lamp",
        "travel mug",
    ];
    let v = train_bpe(&texts.iter().map(|t| t.repeat(2)).collect::<Vec<_>>(), 400).unwrap();
    let ids: Vec<std::collections::HashSet<u32>> =
        texts.iter().map(|t| coldrec_core::embedding::tokenize_entity(&v, t).into_iter().collect()).collect();
    let (mut shared, mut disjoint) = ((0.0, 0usize), (0.0, 0usize));
    for seed in 0..100 {
        let t = synth_table(&v, 32, seed).unwrap();
        let e: Vec<Vec<f32>> =
            texts.iter().map(|s| embed_entity(&v, &t, &Pooling::Mean, s, false).unwrap().values).collect();
        for a in 0..texts.len() {
            for b in a + 1..texts.len() {
                let c = cosine(&e[a], &e[b]);
                let acc = if ids[a].is_disjoint(&ids[b]) { &mut disjoint } else { &mut shared };
                acc.0 += c;
                acc.1 += 1;
            }
        }
    }
    assert!(shared.1 > 0 && disjoint.1 > 0);
    assert!(shared.0 / shared.1 as f64 > disjoint.0 / disjoint.1 as f64);
}
