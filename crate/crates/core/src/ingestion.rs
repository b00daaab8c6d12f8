//! Labelled corpora, the binary bag-of-words featurizer and a synthetic
//! corpus generator with planted class keywords.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::distributions::ClassLabels;
use crate::error::{Error, Result};
use crate::perturbation::{RawInstance, SegmentBundle};
use crate::seed;

/// Splits on whitespace and punctuation. A token is a maximal run of
/// alphanumeric characters, `_` or `'`. Case is preserved.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_' || c == '\''))
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Csv,
    Jsonl,
    SegmentManifestDir,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            "segment-manifest-dir" | "segments" => Ok(Self::SegmentManifestDir),
            other => Err(Error::invalid(format!("unknown dataset format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub instance: RawInstance,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<LabeledRecord>,
    /// Sorted distinct labels.
    pub labels: ClassLabels,
    pub splits: Vec<Split>,
    pub split_seed: u64,
}

#[derive(Deserialize)]
struct TextRow {
    text: String,
    label: String,
}

impl LabeledDataset {
    /// Builds a dataset with every record in the train split.
    pub fn from_records(records: Vec<LabeledRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidDataset("no records".into()));
        }
        let labels: BTreeSet<&str> = records.iter().map(|r| r.label.as_str()).collect();
        let labels = ClassLabels::new(labels);
        let splits = vec![Split::Train; records.len()];
        Ok(LabeledDataset {
            records,
            labels,
            splits,
            split_seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Assigns `round(train_ratio · n)` records to the train split, chosen
    /// by a seeded shuffle. Record order is untouched.
    pub fn split(mut self, train_ratio: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_ratio) {
            return Err(Error::invalid("train ratio must lie in [0, 1]"));
        }
        let n = self.records.len();
        let n_train = (train_ratio * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(seed));
        self.splits = vec![Split::Eval; n];
        for &i in &order[..n_train] {
            self.splits[i] = Split::Train;
        }
        self.split_seed = seed;
        let train_labels: BTreeSet<&str> = self
            .indices(Split::Train)
            .map(|i| self.records[i].label.as_str())
            .collect();
        if train_labels.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "train split has {} distinct label(s), need at least 2",
                train_labels.len()
            )));
        }
        Ok(self)
    }

    pub fn indices(&self, split: Split) -> impl Iterator<Item = usize> + '_ {
        self.splits
            .iter()
            .enumerate()
            .filter(move |(_, s)| **s == split)
            .map(|(i, _)| i)
    }

    pub fn label_index(&self, record: usize) -> usize {
        self.labels
            .index_of(&self.records[record].label)
            .expect("record label is in the label set")
    }

    pub fn texts(&self, split: Split) -> Vec<&str> {
        self.indices(split)
            .filter_map(|i| match &self.records[i].instance {
                RawInstance::Text(t) => Some(t.as_str()),
                RawInstance::Segments(_) => None,
            })
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["text", "label"])?;
        for r in &self.records {
            match &r.instance {
                RawInstance::Text(t) => w.write_record([t.as_str(), r.label.as_str()])?,
                RawInstance::Segments(_) => {
                    return Err(Error::Unsupported(
                        "segment records cannot be written as CSV".into(),
                    ))
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<LabeledDataset> {
    let records = match format {
        DatasetFormat::Csv => load_csv(path)?,
        DatasetFormat::Jsonl => load_jsonl(path)?,
        DatasetFormat::SegmentManifestDir => load_segment_dir(path)?,
    };
    if records.is_empty() {
        return Err(Error::InvalidDataset(format!(
            "{} holds no records",
            path.display()
        )));
    }
    LabeledDataset::from_records(records)
}

fn load_csv(path: &Path) -> Result<Vec<LabeledRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    for col in ["text", "label"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::InvalidDataset(format!(
                "{}: missing `{col}` column",
                path.display()
            )));
        }
    }
    let mut out = Vec::new();
    for (row, rec) in reader.deserialize::<TextRow>().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            // header is line 1
            line: e.position().map_or(row + 2, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        out.push(LabeledRecord {
            instance: RawInstance::Text(rec.text),
            label: rec.label,
        });
    }
    Ok(out)
}

fn load_jsonl(path: &Path) -> Result<Vec<LabeledRecord>> {
    let body = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TextRow = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(LabeledRecord {
            instance: RawInstance::Text(row.text),
            label: row.label,
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
struct LabeledBundle {
    label: String,
    #[serde(flatten)]
    bundle: SegmentBundle,
}

fn load_segment_dir(dir: &Path) -> Result<Vec<LabeledRecord>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let body = fs::read_to_string(&p)?;
        let lb: LabeledBundle = serde_json::from_str(&body).map_err(|e| Error::Parse {
            path: p.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        lb.bundle.validate()?;
        out.push(LabeledRecord {
            instance: RawInstance::Segments(lb.bundle),
            label: lb.label,
        });
    }
    Ok(out)
}

/// Binary bag-of-words over a fixed vocabulary. Out-of-vocabulary tokens
/// are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "FeaturizerRepr", into = "FeaturizerRepr")]
pub struct Featurizer {
    vocabulary: Vec<String>,
    columns: HashMap<String, usize>,
    fingerprint: u64,
}

#[derive(Serialize, Deserialize)]
struct FeaturizerRepr {
    vocabulary: Vec<String>,
    fingerprint: u64,
}

impl From<FeaturizerRepr> for Featurizer {
    fn from(r: FeaturizerRepr) -> Self {
        Featurizer::with_vocabulary(r.vocabulary, r.fingerprint)
    }
}

impl From<Featurizer> for FeaturizerRepr {
    fn from(f: Featurizer) -> Self {
        FeaturizerRepr {
            vocabulary: f.vocabulary,
            fingerprint: f.fingerprint,
        }
    }
}

fn fnv1a(bytes: impl Iterator<Item = u8>, mut h: u64) -> u64 {
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Featurizer {
    /// Vocabulary is the sorted set of tokens seen in `texts`.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut vocab = BTreeSet::new();
        let mut fp = 0xcbf2_9ce4_8422_2325;
        let mut n = 0usize;
        for t in texts {
            n += 1;
            fp = fnv1a(t.bytes().chain(std::iter::once(0)), fp);
            vocab.extend(tokenize(t).into_iter().map(str::to_owned));
        }
        if n == 0 {
            return Err(Error::InvalidDataset(
                "cannot build a featurizer from an empty split".into(),
            ));
        }
        Ok(Self::with_vocabulary(vocab.into_iter().collect(), fp))
    }

    pub fn with_vocabulary(vocabulary: Vec<String>, fingerprint: u64) -> Self {
        let columns = vocabulary
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Featurizer {
            vocabulary,
            columns,
            fingerprint,
        }
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.columns.get(token).copied()
    }

    pub fn featurize(&self, text: &str) -> Vec<f64> {
        self.featurize_tokens(tokenize(text))
    }

    pub fn featurize_tokens<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for t in tokens {
            if let Some(&c) = self.columns.get(t) {
                v[c] = 1.0;
            }
        }
        v
    }

    /// True when no token of `text` is in the vocabulary.
    pub fn is_out_of_vocabulary(&self, text: &str) -> bool {
        tokenize(text)
            .iter()
            .all(|t| !self.columns.contains_key(*t))
    }
}

/// Knobs for [`synthetic_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub docs_per_class: usize,
    pub keywords_per_class: usize,
    pub neutral_words: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that a token is drawn from the document's own keywords.
    pub keyword_rate: f64,
    /// Probability that a token is drawn from another class's keywords.
    pub confuser_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 4,
            docs_per_class: 100,
            keywords_per_class: 12,
            neutral_words: 240,
            min_len: 40,
            max_len: 70,
            keyword_rate: 0.12,
            confuser_rate: 0.04,
            seed: 20_231_024,
        }
    }
}

const CLASS_NAMES: [&str; 8] = [
    "joy", "sadness", "anger", "fear", "love", "surprise", "trust", "disgust",
];
const ONSETS: [&str; 16] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st",
];
const NUCLEI: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];

fn pseudo_words(n: usize, rng: &mut seed::Rng, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(NUCLEI.choose(rng).unwrap());
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Keyword lists generated alongside a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub dataset: LabeledDataset,
    pub keywords: Vec<Vec<String>>,
    pub neutral: Vec<String>,
}

/// A corpus whose classes are distinguished by planted keyword sets.
pub fn synthetic_corpus(cfg: &SynthConfig) -> Result<SyntheticCorpus> {
    if cfg.classes < 2 {
        return Err(Error::InvalidDataset(
            "synthetic corpus needs at least 2 classes".into(),
        ));
    }
    if cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::invalid("synthetic document length range is empty"));
    }
    let mut rng = seed::rng(cfg.seed);
    let mut taken = BTreeSet::new();
    let keywords: Vec<Vec<String>> = (0..cfg.classes)
        .map(|_| pseudo_words(cfg.keywords_per_class, &mut rng, &mut taken))
        .collect();
    let neutral = pseudo_words(cfg.neutral_words, &mut rng, &mut taken);
    let names: Vec<String> = (0..cfg.classes)
        .map(|c| match CLASS_NAMES.get(c) {
            Some(n) => (*n).to_string(),
            None => format!("class{c}"),
        })
        .collect();

    let mut records = Vec::with_capacity(cfg.classes * cfg.docs_per_class);
    for _ in 0..cfg.docs_per_class {
        for c in 0..cfg.classes {
            let len = rng.random_range(cfg.min_len..=cfg.max_len);
            let mut words = Vec::with_capacity(len);
            for _ in 0..len {
                let u: f64 = rng.random();
                let w = if u < cfg.keyword_rate {
                    keywords[c].choose(&mut rng)
                } else if u < cfg.keyword_rate + cfg.confuser_rate {
                    let other = (c + rng.random_range(1..cfg.classes)) % cfg.classes;
                    keywords[other].choose(&mut rng)
                } else {
                    neutral.choose(&mut rng)
                };
                words.push(w.expect("non-empty word list").as_str());
            }
            records.push(LabeledRecord {
                instance: RawInstance::Text(words.join(" ")),
                label: names[c].clone(),
            });
        }
    }
    Ok(SyntheticCorpus {
        dataset: LabeledDataset::from_records(records)?,
        keywords,
        neutral,
    })
}
