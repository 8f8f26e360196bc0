//! Interaction logs, entity metadata and the synthetic cold-start benchmark.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub const INTERACTIONS_FILE: &str = "interactions.tsv";
pub const ITEMS_FILE: &str = "items.tsv";
pub const USERS_FILE: &str = "users.tsv";
pub const LABELS_FILE: &str = "item_labels.tsv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub weight: f32,
    pub timestamp: Option<i64>,
}

/// A parsed interaction line with external ids.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub user: String,
    pub item: String,
    pub weight: f64,
    pub timestamp: Option<i64>,
}

/// External-id to dense-id mapping, dense ids in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    external: Vec<String>,
    dense: HashMap<String, u32>,
}

impl IdMap {
    pub fn intern(&mut self, id: &str) -> u32 {
        if let Some(&d) = self.dense.get(id) {
            return d;
        }
        let d = self.external.len() as u32;
        self.external.push(id.to_string());
        self.dense.insert(id.to_string(), d);
        d
    }

    pub fn dense(&self, id: &str) -> Option<u32> {
        self.dense.get(id).copied()
    }

    pub fn external(&self, dense: u32) -> &str {
        &self.external[dense as usize]
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub interactions: Vec<Interaction>,
    pub item_text: Vec<String>,
    /// `None` when the user has no (or empty) metadata.
    pub user_text: Vec<Option<String>>,
    pub user_ids: IdMap,
    pub item_ids: IdMap,
    /// Optional per-item class label (topic or category), used for projections.
    pub item_labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }
}

/// Ordered `id -> text` entries from a metadata file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
    /// Lines that overwrote an earlier entry for the same id.
    pub duplicates: usize,
}

impl Metadata {
    pub fn get(&self, id: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == id).map(|(_, v)| v.as_str())
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses `user_id<TAB>item_id<TAB>weight[<TAB>timestamp]` lines. An optional
/// header line (first field `user_id`) may appear once, before any data.
pub fn parse_interactions(text: &str, origin: &str) -> Result<Vec<InteractionRecord>> {
    let mut out = Vec::new();
    let mut first = true;
    for (lineno, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields[0] == "user_id" {
            if !first {
                return Err(Error::parse(origin, lineno, "unexpected header line"));
            }
            first = false;
            continue;
        }
        first = false;
        if !(3..=4).contains(&fields.len()) {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::parse(origin, lineno, "empty id"));
        }
        let weight: f64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("non-numeric weight '{}'", fields[2])))?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::parse(origin, lineno, format!("weight {weight} must be positive")));
        }
        let timestamp = match fields.get(3) {
            None | Some(&"") => None,
            Some(t) => Some(t.parse().map_err(|_| Error::parse(origin, lineno, format!("bad timestamp '{t}'")))?),
        };
        out.push(InteractionRecord { user: fields[0].to_string(), item: fields[1].to_string(), weight, timestamp });
    }
    Ok(out)
}

pub fn load_interactions(path: impl AsRef<Path>) -> Result<Vec<InteractionRecord>> {
    let path = path.as_ref();
    parse_interactions(&read(path)?, &path.display().to_string())
}

/// Converts explicit ratings to implicit feedback: records below
/// `min_weight` are dropped and the rest get weight 1.0.
pub fn binarize(records: Vec<InteractionRecord>, min_weight: Option<f64>) -> Vec<InteractionRecord> {
    records
        .into_iter()
        .filter(|r| min_weight.is_none_or(|t| r.weight >= t))
        .map(|r| InteractionRecord { weight: 1.0, ..r })
        .collect()
}

/// Parses `id<TAB>text` lines; extra tab-separated fields are joined to the
/// text with single spaces. Later duplicates overwrite earlier ones.
pub fn parse_metadata(text: &str, origin: &str) -> Result<Metadata> {
    let mut meta = Metadata::default();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in data_lines(text) {
        let Some((id, rest)) = line.split_once('\t') else {
            return Err(Error::parse(origin, lineno, "missing text column"));
        };
        if id.is_empty() {
            return Err(Error::parse(origin, lineno, "empty id"));
        }
        let text = rest.split('\t').filter(|f| !f.is_empty()).collect::<Vec<_>>().join(" ");
        match index.get(id) {
            Some(&i) => {
                meta.entries[i].1 = text;
                meta.duplicates += 1;
            }
            None => {
                index.insert(id.to_string(), meta.entries.len());
                meta.entries.push((id.to_string(), text));
            }
        }
    }
    Ok(meta)
}

pub fn load_metadata(path: impl AsRef<Path>) -> Result<Metadata> {
    let path = path.as_ref();
    parse_metadata(&read(path)?, &path.display().to_string())
}

/// Assigns dense ids (metadata order first, then first appearance in the
/// interaction log) and attaches text. Items known only from metadata are kept.
pub fn build_dataset(
    records: &[InteractionRecord],
    item_meta: &Metadata,
    user_meta: Option<&Metadata>,
) -> Result<Dataset> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut item_ids = IdMap::default();
    let mut user_ids = IdMap::default();
    let mut item_text = Vec::new();
    let mut user_text = Vec::new();
    for (id, text) in &item_meta.entries {
        item_ids.intern(id);
        item_text.push(text.clone());
    }
    if let Some(meta) = user_meta {
        for (id, text) in &meta.entries {
            user_ids.intern(id);
            user_text.push(Some(text.clone()).filter(|t| !t.trim().is_empty()));
        }
    }
    let mut interactions = Vec::with_capacity(records.len());
    for r in records {
        let user = user_ids.intern(&r.user);
        if user as usize == user_text.len() {
            user_text.push(None);
        }
        let item = item_ids.intern(&r.item);
        if item as usize == item_text.len() {
            item_text.push(String::new());
        }
        interactions.push(Interaction { user, item, weight: r.weight as f32, timestamp: r.timestamp });
    }
    Ok(Dataset { interactions, item_text, user_text, user_ids, item_ids, item_labels: None })
}

fn clean_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Writes the dataset as TSV files that [`load_dataset_dir`] reads back into
/// the same dense structure.
pub fn export_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };

    let mut body = String::from("user_id\titem_id\tweight\ttimestamp\n");
    for i in &dataset.interactions {
        let _ =
            write!(body, "{}\t{}\t{}", dataset.user_ids.external(i.user), dataset.item_ids.external(i.item), i.weight);
        if let Some(t) = i.timestamp {
            let _ = write!(body, "\t{t}");
        }
        body.push('\n');
    }
    write(INTERACTIONS_FILE, body)?;

    let mut body = String::new();
    for (d, text) in dataset.item_text.iter().enumerate() {
        let _ = writeln!(body, "{}\t{}", dataset.item_ids.external(d as u32), clean_field(text));
    }
    write(ITEMS_FILE, body)?;

    let mut body = String::new();
    for (d, text) in dataset.user_text.iter().enumerate() {
        let text = text.as_deref().map(clean_field).unwrap_or_default();
        let _ = writeln!(body, "{}\t{}", dataset.user_ids.external(d as u32), text);
    }
    write(USERS_FILE, body)?;

    if let Some(labels) = &dataset.item_labels {
        let mut body = String::new();
        for (d, label) in labels.iter().enumerate() {
            let _ = writeln!(body, "{}\t{}", dataset.item_ids.external(d as u32), clean_field(label));
        }
        write(LABELS_FILE, body)?;
    }
    Ok(())
}

/// Loads `interactions.tsv` plus optional `items.tsv`, `users.tsv` and
/// `item_labels.tsv` from `dir`.
pub fn load_dataset_dir(dir: impl AsRef<Path>, min_weight: Option<f64>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let records = binarize(load_interactions(dir.join(INTERACTIONS_FILE))?, min_weight);
    let optional = |name: &str| -> Result<Option<Metadata>> {
        let p = dir.join(name);
        if p.exists() {
            load_metadata(p).map(Some)
        } else {
            Ok(None)
        }
    };
    let items = optional(ITEMS_FILE)?.unwrap_or_default();
    let users = optional(USERS_FILE)?;
    let mut dataset = build_dataset(&records, &items, users.as_ref())?;
    if let Some(labels) = optional(LABELS_FILE)? {
        let mut out = vec![String::new(); dataset.n_items()];
        for (id, label) in labels.entries {
            if let Some(d) = dataset.item_ids.dense(&id) {
                out[d as usize] = label;
            }
        }
        dataset.item_labels = Some(out);
    }
    Ok(dataset)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    /// Fraction of the user-item matrix that is observed.
    pub sparsity: f64,
    pub empty_item_metadata: usize,
    pub users_with_text: usize,
    pub item_words_min: usize,
    pub item_words_median: usize,
    pub item_words_mean: f64,
    pub item_words_max: usize,
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let mut lens: Vec<usize> = dataset.item_text.iter().map(|t| t.split_whitespace().count()).collect();
    lens.sort_unstable();
    let cells = dataset.n_users() as f64 * dataset.n_items() as f64;
    DatasetStats {
        n_users: dataset.n_users(),
        n_items: dataset.n_items(),
        n_interactions: dataset.interactions.len(),
        sparsity: if cells > 0.0 { dataset.interactions.len() as f64 / cells } else { 0.0 },
        empty_item_metadata: dataset.item_text.iter().filter(|t| t.trim().is_empty()).count(),
        users_with_text: dataset.user_text.iter().filter(|t| t.is_some()).count(),
        item_words_min: lens.first().copied().unwrap_or(0),
        item_words_median: lens.get(lens.len() / 2).copied().unwrap_or(0),
        item_words_mean: if lens.is_empty() { 0.0 } else { lens.iter().sum::<usize>() as f64 / lens.len() as f64 },
        item_words_max: lens.last().copied().unwrap_or(0),
    }
}

/// Knobs of the synthetic topic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub n_topics: usize,
    pub items_per_topic: usize,
    pub users: usize,
    pub interactions_per_user: usize,
    pub stems_per_topic: usize,
    /// Distinct shared words generated from each stem.
    pub words_per_stem: usize,
    /// Fraction of a cold-eligible item's words that are held-out words.
    pub cold_word_holdout_fraction: f64,
    /// Fraction of each topic's items that carry held-out words.
    pub cold_eligible_fraction: f64,
    /// Probability that an interaction comes from the user's primary topic.
    pub topic_focus: f64,
    /// Fraction of generated interactions retained.
    pub sparsity: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_topics: 8,
            items_per_topic: 40,
            users: 500,
            interactions_per_user: 30,
            stems_per_topic: 4,
            words_per_stem: 4,
            cold_word_holdout_fraction: 0.7,
            cold_eligible_fraction: 1.0,
            topic_focus: 0.8,
            sparsity: 1.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_topics", self.n_topics),
            ("items_per_topic", self.items_per_topic),
            ("users", self.users),
            ("interactions_per_user", self.interactions_per_user),
            ("stems_per_topic", self.stems_per_topic),
            ("words_per_stem", self.words_per_stem),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let fractions = [
            ("cold_word_holdout_fraction", self.cold_word_holdout_fraction),
            ("cold_eligible_fraction", self.cold_eligible_fraction),
            ("topic_focus", self.topic_focus),
            ("sparsity", self.sparsity),
        ];
        for (name, v) in fractions {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} = {v} must lie in (0, 1]")));
            }
        }
        if self.interactions_per_user > self.n_topics * self.items_per_topic {
            return Err(Error::Config("interactions_per_user exceeds the number of items".into()));
        }
        if self.eligible_per_topic() == 0 {
            return Err(Error::Config("configuration yields no cold-eligible items".into()));
        }
        Ok(())
    }

    fn eligible_per_topic(&self) -> usize {
        (self.cold_eligible_fraction * self.items_per_topic as f64).round() as usize
    }
}

/// A generated benchmark plus the ground truth the generator used.
#[derive(Debug, Clone)]
pub struct SynthBenchmark {
    pub dataset: Dataset,
    pub item_topic: Vec<usize>,
    pub cold_eligible: Vec<bool>,
    pub stems: Vec<Vec<String>>,
    /// Words that appear only on cold-eligible items, each exactly once.
    pub holdout_words: BTreeSet<String>,
}

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

fn random_string(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| *LETTERS.choose(rng).expect("non-empty") as char).collect()
}

/// Generates the topic benchmark.
///
/// Every topic owns character stems; shared words are a stem plus a short
/// suffix. Cold-eligible items additionally carry held-out words: a topic
/// stem plus a fresh suffix, each used exactly once in the whole corpus and
/// never a substring of another word. Held-out words are therefore unseen as
/// whole words while their stems recur across the topic.
pub fn synth_benchmark(config: &SynthConfig) -> Result<SynthBenchmark> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut used: HashSet<String> = HashSet::new();
    let mut stems: Vec<Vec<String>> = Vec::with_capacity(config.n_topics);
    for _ in 0..config.n_topics {
        let mut topic = Vec::with_capacity(config.stems_per_topic);
        while topic.len() < config.stems_per_topic {
            let s = random_string(&mut rng, 4, 6);
            if used.insert(s.clone()) {
                topic.push(s);
            }
        }
        stems.push(topic);
    }

    let mut shared: Vec<Vec<String>> = Vec::with_capacity(config.n_topics);
    let mut all_words: Vec<String> = Vec::new();
    for topic in &stems {
        let mut words = Vec::new();
        for stem in topic {
            let mut made = 0;
            while made < config.words_per_stem {
                let w = format!("{stem}{}", random_string(&mut rng, 2, 3));
                if used.insert(w.clone()) {
                    words.push(w.clone());
                    all_words.push(w);
                    made += 1;
                }
            }
        }
        shared.push(words);
    }

    let n_items = config.n_topics * config.items_per_topic;
    let mut item_topic: Vec<usize> = (0..n_items).map(|i| i / config.items_per_topic).collect();
    item_topic.shuffle(&mut rng);

    let eligible_per_topic = config.eligible_per_topic();
    let mut cold_eligible = vec![false; n_items];
    for t in 0..config.n_topics {
        let members: Vec<usize> = (0..n_items).filter(|&i| item_topic[i] == t).collect();
        for &i in members.choose_multiple(&mut rng, eligible_per_topic) {
            cold_eligible[i] = true;
        }
    }

    let mut holdout_words = BTreeSet::new();
    let mut item_text = Vec::with_capacity(n_items);
    for i in 0..n_items {
        let t = item_topic[i];
        let len = rng.random_range(5..=10usize);
        let n_holdout = if cold_eligible[i] {
            ((config.cold_word_holdout_fraction * len as f64).ceil() as usize).min(len)
        } else {
            0
        };
        let mut words: Vec<String> = Vec::with_capacity(len);
        for _ in 0..n_holdout {
            loop {
                let stem = stems[t].choose(&mut rng).expect("non-empty");
                let w = format!("{stem}{}", random_string(&mut rng, 2, 3));
                let clashes = used.contains(&w) || all_words.iter().any(|o| o.contains(&w) || w.contains(o.as_str()));
                if !clashes {
                    used.insert(w.clone());
                    all_words.push(w.clone());
                    holdout_words.insert(w.clone());
                    words.push(w);
                    break;
                }
            }
        }
        for _ in n_holdout..len {
            words.push(shared[t].choose(&mut rng).expect("non-empty").clone());
        }
        words.shuffle(&mut rng);
        item_text.push(words.join(" "));
    }

    let mut interactions = Vec::with_capacity(config.users * config.interactions_per_user);
    let by_topic: Vec<Vec<u32>> =
        (0..config.n_topics).map(|t| (0..n_items as u32).filter(|&i| item_topic[i as usize] == t).collect()).collect();
    for u in 0..config.users as u32 {
        let primary = rng.random_range(0..config.n_topics);
        let mut seen = HashSet::new();
        while seen.len() < config.interactions_per_user {
            let topic =
                if rng.random_bool(config.topic_focus) { primary } else { rng.random_range(0..config.n_topics) };
            let item = *by_topic[topic].choose(&mut rng).expect("non-empty topic");
            if seen.insert(item) {
                interactions.push(Interaction { user: u, item, weight: 1.0, timestamp: None });
            }
        }
    }
    let keep = (config.sparsity * interactions.len() as f64).round() as usize;
    if keep < interactions.len() {
        let mut idx: Vec<usize> = (0..interactions.len()).collect();
        idx.shuffle(&mut rng);
        let mut kept: Vec<usize> = idx[..keep].to_vec();
        kept.sort_unstable();
        interactions = kept.into_iter().map(|i| interactions[i]).collect();
    }

    let mut user_ids = IdMap::default();
    for u in 0..config.users {
        user_ids.intern(&format!("u{u}"));
    }
    let mut item_ids = IdMap::default();
    for i in 0..n_items {
        item_ids.intern(&format!("i{i}"));
    }
    let dataset = Dataset {
        interactions,
        item_text,
        user_text: vec![None; config.users],
        user_ids,
        item_ids,
        item_labels: Some(item_topic.iter().map(|t| format!("topic{t}")).collect()),
    };
    Ok(SynthBenchmark { dataset, item_topic, cold_eligible, stems, holdout_words })
}
