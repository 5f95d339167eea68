//! Tokenized, timestamped documents turned into sparse bag-of-words corpora
//! with timestamps mapped into the open unit interval.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::log_time_pair;

pub const DEFAULT_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct RawDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub raw_timestamp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    df: Vec<usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from words already in id order.
    pub fn from_words(words: Vec<String>, df: Vec<usize>) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::VocabularyEmpty);
        }
        if df.len() != words.len() {
            return Err(Error::config("document-frequency table does not match vocabulary size"));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::config(format!("duplicate vocabulary word '{w}'")));
            }
        }
        Ok(Self { words, index, df })
    }

    /// `w00000, w00001, ...`; ids coincide with lexicographic order.
    pub fn synthetic(v: usize) -> Self {
        let width = (v.max(2) - 1).to_string().len().max(5);
        let words = (0..v).map(|i| format!("w{i:0width$}")).collect();
        Self::from_words(words, vec![0; v]).expect("nonempty synthetic vocabulary")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn df(&self, id: usize) -> usize {
        self.df[id]
    }

    pub fn df_table(&self) -> &[usize] {
        &self.df
    }

    /// One word per line.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        for w in &self.words {
            writeln!(out, "{w}")?;
        }
        Ok(())
    }

    /// Reads a vocabulary file; document frequencies are left at zero.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut words = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let w = line.trim_end_matches('\r');
            if w.is_empty() {
                return Err(Error::Parse { line: i + 1, msg: "empty vocabulary entry".into() });
            }
            words.push(w.to_string());
        }
        let n = words.len();
        Self::from_words(words, vec![0; n])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    /// Distinct word ids, ascending.
    pub words: Vec<usize>,
    /// `n_dw`, aligned with `words`.
    pub counts: Vec<u32>,
    /// `N_d`
    pub total: u32,
    pub t: f64,
}

impl Document {
    pub fn new(id: impl Into<String>, counts: &BTreeMap<usize, u32>, t: f64) -> Option<Self> {
        let (words, counts): (Vec<usize>, Vec<u32>) = counts.iter().filter(|(_, &c)| c > 0).map(|(&w, &c)| (w, c)).unzip();
        if words.is_empty() {
            return None;
        }
        let total = counts.iter().sum();
        Some(Self { id: id.into(), words, counts, total, t })
    }

    /// `(log t, log(1 - t))`
    pub fn log_time(&self) -> [f64; 2] {
        log_time_pair(self.t)
    }

    pub fn unique_words(&self) -> usize {
        self.words.len()
    }
}

/// Affine map from raw timestamps onto `[margin, 1 - margin]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    pub raw_min: f64,
    pub raw_max: f64,
    pub margin: f64,
}

impl TimeScale {
    /// Raw timestamps already in (0, 1), used unchanged.
    pub fn identity() -> Self {
        Self { raw_min: 0.0, raw_max: 1.0, margin: 0.0 }
    }

    pub fn is_degenerate(&self) -> bool {
        self.raw_max <= self.raw_min
    }

    pub fn forward(&self, raw: f64) -> f64 {
        if self.is_degenerate() {
            return 0.5;
        }
        self.margin + (1.0 - 2.0 * self.margin) * (raw - self.raw_min) / (self.raw_max - self.raw_min)
    }

    pub fn inverse(&self, t: f64) -> f64 {
        if self.is_degenerate() {
            return self.raw_min;
        }
        self.raw_min + (t - self.margin) / (1.0 - 2.0 * self.margin) * (self.raw_max - self.raw_min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Document>,
    pub vocab: Arc<Vocabulary>,
    pub time_scale: TimeScale,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, vocab: Arc<Vocabulary>, time_scale: TimeScale) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::config("corpus has no documents"));
        }
        let v = vocab.len();
        for d in &documents {
            if !(d.t > 0.0 && d.t < 1.0) {
                return Err(Error::InvalidTimestamp(d.t));
            }
            if d.words.iter().any(|&w| w >= v) {
                return Err(Error::config(format!("document '{}' references a word id outside the vocabulary", d.id)));
            }
        }
        Ok(Self { documents, vocab, time_scale })
    }

    pub fn num_docs(&self) -> usize {
        self.documents.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// `N_tok`
    pub fn num_tokens(&self) -> u64 {
        self.documents.iter().map(|d| d.total as u64).sum()
    }

    /// Document frequency of every word in this corpus.
    pub fn document_frequencies(&self) -> Vec<usize> {
        let mut df = vec![0; self.vocab_size()];
        for d in &self.documents {
            for &w in &d.words {
                df[w] += 1;
            }
        }
        df
    }

    pub fn raw_time(&self, d: usize) -> f64 {
        self.time_scale.inverse(self.documents[d].t)
    }

    /// Corpus restricted to the given documents, sharing the vocabulary.
    pub fn subset(&self, idx: &[usize]) -> Corpus {
        Corpus {
            documents: idx.iter().map(|&i| self.documents[i].clone()).collect(),
            vocab: Arc::clone(&self.vocab),
            time_scale: self.time_scale,
        }
    }

    /// Writes one `{id, counts, timestamp}` record per line, with raw
    /// timestamps.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for d in &self.documents {
            let counts: BTreeMap<&str, u32> =
                d.words.iter().zip(&d.counts).map(|(&w, &c)| (self.vocab.word(w), c)).collect();
            let rec = serde_json::json!({
                "id": d.id,
                "counts": counts,
                "timestamp": self.time_scale.inverse(d.t),
            });
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads records against a fixed vocabulary and time scale. Documents
    /// left without in-vocabulary words are dropped.
    pub fn read_jsonl<R: BufRead>(input: R, vocab: Arc<Vocabulary>, time_scale: TimeScale) -> Result<Corpus> {
        let raws = read_raw_documents(input)?;
        let mut docs = Vec::with_capacity(raws.len());
        for r in &raws {
            let t = time_scale.forward(r.raw_timestamp);
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidTimestamp(r.raw_timestamp));
            }
            if let Some(d) = to_bow(r, &vocab, t) {
                docs.push(d);
            }
        }
        Corpus::new(docs, vocab, time_scale)
    }
}

/// Keeps words with `df >= min_df` and `df / D <= max_df_frac`; ids follow
/// lexicographic word order.
pub fn build_vocabulary(docs: &[RawDocument], min_df: usize, max_df_frac: f64) -> Result<Vocabulary> {
    if min_df < 1 {
        return Err(Error::config("min_df must be at least 1"));
    }
    if !(max_df_frac > 0.0 && max_df_frac <= 1.0) {
        return Err(Error::config(format!("max_df_frac must lie in (0, 1], got {max_df_frac}")));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for d in docs {
        let mut seen: Vec<&str> = d.tokens.iter().map(String::as_str).collect();
        seen.sort_unstable();
        seen.dedup();
        for w in seen {
            *df.entry(w).or_insert(0) += 1;
        }
    }
    let n_docs = docs.len() as f64;
    let (words, counts): (Vec<String>, Vec<usize>) = df
        .into_iter()
        .filter(|&(_, c)| c >= min_df && c as f64 / n_docs <= max_df_frac)
        .map(|(w, c)| (w.to_string(), c))
        .unzip();
    if words.is_empty() {
        return Err(Error::VocabularyEmpty);
    }
    Vocabulary::from_words(words, counts)
}

/// Affine map of raw timestamps onto `[margin, 1 - margin]`.
pub fn normalize_timestamps(raw: &[f64], margin: f64) -> Result<(TimeScale, Vec<f64>)> {
    if !(margin > 0.0 && margin < 0.5) {
        return Err(Error::config(format!("timestamp margin must lie in (0, 0.5), got {margin}")));
    }
    if raw.is_empty() {
        return Err(Error::config("no timestamps to normalize"));
    }
    if let Some(&bad) = raw.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidTimestamp(bad));
    }
    let raw_min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let raw_max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = TimeScale { raw_min, raw_max, margin };
    if scale.is_degenerate() {
        log::warn!("all timestamps are equal ({raw_min}); the time modality carries no information");
    }
    let t = raw.iter().map(|&x| scale.forward(x)).collect();
    Ok((scale, t))
}

/// Counts in-vocabulary tokens; `None` when nothing survives.
pub fn to_bow(doc: &RawDocument, vocab: &Vocabulary, t: f64) -> Option<Document> {
    let mut counts = BTreeMap::new();
    for tok in &doc.tokens {
        if let Some(id) = vocab.id(tok) {
            *counts.entry(id).or_insert(0u32) += 1;
        }
    }
    Document::new(doc.id.clone(), &counts, t)
}

/// Vocabulary, timestamps and bag-of-words in one pass. The time scale is
/// fitted on all raw documents.
pub fn build_corpus(docs: &[RawDocument], min_df: usize, max_df_frac: f64, margin: f64) -> Result<Corpus> {
    let vocab = Arc::new(build_vocabulary(docs, min_df, max_df_frac)?);
    let raw: Vec<f64> = docs.iter().map(|d| d.raw_timestamp).collect();
    let (scale, ts) = normalize_timestamps(&raw, margin)?;
    let documents: Vec<Document> = docs.iter().zip(ts).filter_map(|(d, t)| to_bow(d, &vocab, t)).collect();
    if documents.is_empty() {
        return Err(Error::VocabularyEmpty);
    }
    Corpus::new(documents, vocab, scale)
}

/// Seeded random partition into `(train, test)`.
pub fn split(corpus: &Corpus, test_frac: f64, seed: u64) -> Result<(Corpus, Corpus)> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::config(format!("test fraction must lie in (0, 1), got {test_frac}")));
    }
    let d = corpus.num_docs();
    let n_test = (d as f64 * test_frac).round() as usize;
    if n_test == 0 || n_test >= d {
        return Err(Error::SplitTooSmall { docs: d, test_frac });
    }
    let mut idx: Vec<usize> = (0..d).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test: Vec<usize> = idx[..n_test].to_vec();
    let mut train: Vec<usize> = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((corpus.subset(&train), corpus.subset(&test)))
}

#[derive(Deserialize)]
struct Record {
    id: String,
    tokens: Option<Vec<String>>,
    counts: Option<BTreeMap<String, u64>>,
    timestamp: f64,
}

/// Parses line-delimited `{id, tokens | counts, timestamp}` records.
/// Blank lines are skipped.
pub fn read_raw_documents<R: BufRead>(input: R) -> Result<Vec<RawDocument>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        let tokens = match (rec.tokens, rec.counts) {
            (Some(t), None) => t,
            (None, Some(c)) => {
                let mut t = Vec::new();
                for (w, n) in c {
                    t.extend(std::iter::repeat_n(w, n as usize));
                }
                t
            }
            _ => {
                return Err(Error::Parse { line: i + 1, msg: "exactly one of `tokens` or `counts` is required".into() })
            }
        };
        if !rec.timestamp.is_finite() {
            return Err(Error::Parse { line: i + 1, msg: format!("non-finite timestamp {}", rec.timestamp) });
        }
        out.push(RawDocument { id: rec.id, tokens, raw_timestamp: rec.timestamp });
    }
    Ok(out)
}

pub fn read_raw_documents_file(path: &Path) -> Result<Vec<RawDocument>> {
    let f = std::fs::File::open(path)?;
    read_raw_documents(std::io::BufReader::new(f))
}
