//! Perplexity, topic-time histograms and dispersion, topic distances,
//! top-word rankings, C_V coherence, and CSV export.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::LdaState;
use crate::corpus::{Corpus, RawDocument, Vocabulary};
use crate::error::{Error, Result};

/// `exp(−elbo / n_tok)`
pub fn perplexity(elbo: f64, n_tok: u64) -> f64 {
    (-elbo / n_tok.max(1) as f64).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTimeHistogram {
    pub topic: usize,
    /// `mass.len() + 1` edges in raw time units.
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl TopicTimeHistogram {
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }
}

/// `N_kt = Σ_d θ_dk N_d [t_d ∈ bin t]` with `θ_d = γ_d / Σγ_d` and bins of
/// `bin_width` raw time units.
pub fn topic_time_histogram(corpus: &Corpus, gammas: &[Vec<f64>], bin_width: f64) -> Result<Vec<TopicTimeHistogram>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::config(format!("bin width must be positive, got {bin_width}")));
    }
    if gammas.len() != corpus.num_docs() {
        return Err(Error::config(format!(
            "{} posteriors for {} documents",
            gammas.len(),
            corpus.num_docs()
        )));
    }
    let k = gammas.first().map_or(0, |g| g.len());
    let raw: Vec<f64> = (0..corpus.num_docs()).map(|d| corpus.raw_time(d)).collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (start, nbins) = if raw.is_empty() {
        (0.0, 1)
    } else {
        let start = (lo / bin_width).floor() * bin_width;
        (start, ((hi - start) / bin_width).floor() as usize + 1)
    };
    let edges: Vec<f64> = (0..=nbins).map(|i| start + i as f64 * bin_width).collect();
    let mut mass = vec![vec![0.0; nbins]; k];
    for (d, g) in gammas.iter().enumerate() {
        let b = (((raw[d] - start) / bin_width).floor().max(0.0) as usize).min(nbins - 1);
        let s: f64 = g.iter().sum();
        let n = corpus.documents[d].total as f64;
        for t in 0..k {
            mass[t][b] += g[t] / s * n;
        }
    }
    Ok(mass
        .into_iter()
        .enumerate()
        .map(|(topic, mass)| TopicTimeHistogram { topic, edges: edges.clone(), mass })
        .collect())
}

const RANK_EPS: f64 = 1e-12;

/// Nearest-rank weighted quantile: the smallest value whose cumulative
/// weight reaches `q` of the total. `pairs` must be sorted by value.
fn weighted_quantile(pairs: &[(f64, f64)], q: f64) -> f64 {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let target = q * total * (1.0 - RANK_EPS);
    let mut cum = 0.0;
    for &(x, w) in pairs {
        cum += w;
        if w > 0.0 && cum >= target {
            return x;
        }
    }
    pairs.last().map_or(f64::NAN, |p| p.0)
}

fn sorted_pairs(values: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).filter(|p| p.1 > 0.0).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Weighted MAD and IQR of `values` under `weights`, nearest-rank.
pub fn weighted_mad_iqr(values: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    let pairs = sorted_pairs(values, weights);
    if pairs.is_empty() {
        return Err(Error::domain("no positive weight"));
    }
    let med = weighted_quantile(&pairs, 0.5);
    let dev: Vec<f64> = pairs.iter().map(|p| (p.0 - med).abs()).collect();
    let w: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mad = weighted_quantile(&sorted_pairs(&dev, &w), 0.5);
    let iqr = weighted_quantile(&pairs, 0.75) - weighted_quantile(&pairs, 0.25);
    Ok((mad, iqr))
}

/// MAD and IQR of the topic's time distribution, with bin masses as
/// weights over bin centres (raw time units).
pub fn weighted_dispersion(hist: &TopicTimeHistogram) -> Result<(f64, f64)> {
    if !(hist.total() > 0.0) {
        return Err(Error::EmptyTopic(hist.topic));
    }
    weighted_mad_iqr(&hist.centers(), &hist.mass)
}

/// MAD and IQR of the series of bin masses themselves (count units).
pub fn literal_dispersion(hist: &TopicTimeHistogram) -> Result<(f64, f64)> {
    if !(hist.total() > 0.0) {
        return Err(Error::EmptyTopic(hist.topic));
    }
    let ones = vec![1.0; hist.mass.len()];
    weighted_mad_iqr(&hist.mass, &ones)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispersionMode {
    #[default]
    Weighted,
    Literal,
}

/// `D(p‖q) + D(q‖p)`
pub fn sym_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::domain("distributions must have the same nonzero length"));
    }
    for (name, d) in [("p", p), ("q", q)] {
        if d.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::domain(format!("{name} has a non-positive entry")));
        }
        let s: f64 = d.iter().sum();
        if (s - 1.0).abs() > 1e-8 {
            return Err(Error::domain(format!("{name} sums to {s}, not 1")));
        }
    }
    Ok(p.iter().zip(q).map(|(&a, &b)| (a - b) * (a.ln() - b.ln())).sum())
}

/// Pairwise symmetric KL between the topic-word means of `state`.
pub fn sym_kl_matrix(state: &LdaState) -> Result<Vec<Vec<f64>>> {
    let beta = state.beta();
    let rows: Vec<Vec<f64>> = beta.rows().into_iter().map(|r| r.to_vec()).collect();
    let k = rows.len();
    let mut m = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = sym_kl(&rows[i], &rows[j])?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ranking {
    #[serde(rename = "beta")]
    Beta,
    #[serde(rename = "r_log")]
    RLog,
}

impl std::str::FromStr for Ranking {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(Self::Beta),
            "r_log" => Ok(Self::RLog),
            other => Err(Error::config(format!("unknown ranking '{other}' (expected beta or r_log)"))),
        }
    }
}

impl std::fmt::Display for Ranking {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Beta => "beta",
            Self::RLog => "r_log",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopWordList {
    pub topic: usize,
    pub ranking: Ranking,
    /// `(word id, score)`, best first.
    pub entries: Vec<(usize, f64)>,
}

impl TopWordList {
    pub fn ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }
}

/// Scores of every word in every topic under `ranking` (K×V row-major).
pub fn word_scores(beta: &ndarray::Array2<f64>, ranking: Ranking) -> ndarray::Array2<f64> {
    match ranking {
        Ranking::Beta => beta.clone(),
        Ranking::RLog => {
            let k = beta.nrows() as f64;
            let mut out = beta.clone();
            for w in 0..beta.ncols() {
                let col = beta.column(w);
                let mean_log = col.iter().map(|b| b.ln()).sum::<f64>() / k;
                for t in 0..beta.nrows() {
                    let b = beta[[t, w]];
                    out[[t, w]] = b * (b.ln() - mean_log);
                }
            }
            out
        }
    }
}

fn top_from_scores(scores: &ndarray::Array2<f64>, topic: usize, n: usize, ranking: Ranking) -> TopWordList {
    let row = scores.row(topic);
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(n);
    TopWordList { topic, ranking, entries: idx.into_iter().map(|w| (w, row[w])).collect() }
}

/// The `n` best words of `topic`; ties go to the smaller word id.
pub fn top_words(state: &LdaState, topic: usize, n: usize, ranking: Ranking) -> Result<TopWordList> {
    if n < 1 {
        return Err(Error::config("top-word count must be at least 1"));
    }
    if topic >= state.k() {
        return Err(Error::config(format!("topic {topic} out of range for K={}", state.k())));
    }
    let scores = word_scores(&state.beta(), ranking);
    Ok(top_from_scores(&scores, topic, n, ranking))
}

/// [`top_words`] for every topic.
pub fn all_top_words(state: &LdaState, n: usize, ranking: Ranking) -> Result<Vec<TopWordList>> {
    if n < 1 {
        return Err(Error::config("top-word count must be at least 1"));
    }
    let scores = word_scores(&state.beta(), ranking);
    Ok((0..state.k()).map(|t| top_from_scores(&scores, t, n, ranking)).collect())
}

pub const DEFAULT_CV_WINDOW: usize = 110;
pub const DEFAULT_NPMI_EPS: f64 = 1e-12;
pub const DEFAULT_TOP_N: usize = 10;

/// Token sequences (word ids) for coherence; out-of-vocabulary tokens are
/// dropped.
pub fn sequences_from_raw(docs: &[RawDocument], vocab: &Vocabulary) -> Vec<Vec<usize>> {
    docs.iter().map(|d| d.tokens.iter().filter_map(|t| vocab.id(t)).collect()).collect()
}

/// Expands bag-of-words documents into id-sorted sequences. Word order is
/// lost, so windows only match the original text when they span whole
/// documents.
pub fn sequences_from_corpus(corpus: &Corpus) -> Vec<Vec<usize>> {
    corpus
        .documents
        .iter()
        .map(|d| {
            d.words
                .iter()
                .zip(&d.counts)
                .flat_map(|(&w, &c)| std::iter::repeat_n(w, c as usize))
                .collect()
        })
        .collect()
}

/// Boolean sliding-window occurrence counts for a word set.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowCounts {
    pub windows: u64,
    /// `single[i]`: windows containing word `i` of the set.
    pub single: Vec<u64>,
    /// `joint[i][j]`: windows containing both.
    pub joint: Vec<Vec<u64>>,
}

/// Every run of `window` consecutive tokens is one window; a shorter
/// document is a single window.
pub fn window_counts(words: &[usize], sequences: &[Vec<usize>], window: usize) -> WindowCounts {
    let n = words.len();
    let pos: HashMap<usize, usize> = words.iter().enumerate().map(|(i, &w)| (w, i)).collect();
    let mut total = WindowCounts { windows: 0, single: vec![0; n], joint: vec![vec![0; n]; n] };
    let mut in_win = vec![0u32; n];
    let mut present: Vec<usize> = Vec::with_capacity(n);
    for seq in sequences {
        if seq.is_empty() {
            continue;
        }
        let ids: Vec<Option<usize>> = seq.iter().map(|w| pos.get(w).copied()).collect();
        let wlen = window.min(ids.len());
        in_win.iter_mut().for_each(|c| *c = 0);
        for id in ids[..wlen].iter().flatten() {
            in_win[*id] += 1;
        }
        let n_windows = ids.len() - wlen + 1;
        for s in 0..n_windows {
            if s > 0 {
                if let Some(i) = ids[s - 1] {
                    in_win[i] -= 1;
                }
                if let Some(i) = ids[s + wlen - 1] {
                    in_win[i] += 1;
                }
            }
            total.windows += 1;
            present.clear();
            present.extend((0..n).filter(|&i| in_win[i] > 0));
            for &i in &present {
                total.single[i] += 1;
                for &j in &present {
                    total.joint[i][j] += 1;
                }
            }
        }
    }
    total
}

fn npmi(p_ij: f64, p_i: f64, p_j: f64, eps: f64) -> f64 {
    if p_i == 0.0 || p_j == 0.0 {
        return 0.0;
    }
    if p_ij >= 1.0 {
        return 1.0;
    }
    ((p_ij + eps) / (p_i * p_j)).ln() / -(p_ij + eps).ln()
}

/// Coherence of one topic and the top words absent from the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub topic: usize,
    pub cv: f64,
    pub missing: Vec<usize>,
}

/// C_V of a word set from precomputed window counts: NPMI context
/// vectors, one-set segmentation, cosine, mean.
pub fn cv_from_counts(counts: &WindowCounts, eps: f64) -> f64 {
    let n = counts.single.len();
    if n == 0 || counts.windows == 0 {
        return 0.0;
    }
    let nw = counts.windows as f64;
    let p: Vec<f64> = counts.single.iter().map(|&c| c as f64 / nw).collect();
    let vecs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| npmi(counts.joint[i][j] as f64 / nw, p[i], p[j], eps)).collect())
        .collect();
    let mut sum = vec![0.0; n];
    for v in &vecs {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let norm_sum = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut total = 0.0;
    for v in &vecs {
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 0.0 && norm_sum > 0.0 {
            total += v.iter().zip(&sum).map(|(a, b)| a * b).sum::<f64>() / (nv * norm_sum);
        }
    }
    total / n as f64
}

/// C_V per topic over token `sequences`.
pub fn coherence_cv(top: &[Vec<usize>], sequences: &[Vec<usize>], window: usize, eps: f64) -> Result<Vec<Coherence>> {
    if window < 1 {
        return Err(Error::config("coherence window must be at least 1"));
    }
    if sequences.iter().all(|s| s.is_empty()) {
        return Err(Error::config("coherence reference corpus is empty"));
    }
    Ok(top
        .par_iter()
        .enumerate()
        .map(|(topic, words)| {
            let counts = window_counts(words, sequences, window);
            let missing = words.iter().zip(&counts.single).filter(|(_, &c)| c == 0).map(|(&w, _)| w).collect();
            Coherence { topic, cv: cv_from_counts(&counts, eps), missing }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub model: String,
    pub topic: usize,
    pub mad: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionSummary {
    pub model: String,
    pub mean_mad: f64,
    pub mean_iqr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionReport {
    pub rows: Vec<DispersionRow>,
    pub summary: Vec<DispersionSummary>,
}

impl DispersionReport {
    pub fn mean_mad(&self, model: &str) -> Option<f64> {
        self.summary.iter().find(|s| s.model == model).map(|s| s.mean_mad)
    }
}

/// Per-topic MAD/IQR for each named model, plus per-model means.
pub fn dispersion_report(models: &[(String, Vec<TopicTimeHistogram>)], mode: DispersionMode) -> Result<DispersionReport> {
    if models.is_empty() {
        return Err(Error::config("dispersion report needs at least one model"));
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (name, hists) in models {
        let mut sm = 0.0;
        let mut si = 0.0;
        for h in hists {
            let (mad, iqr) = match mode {
                DispersionMode::Weighted => weighted_dispersion(h)?,
                DispersionMode::Literal => literal_dispersion(h)?,
            };
            sm += mad;
            si += iqr;
            rows.push(DispersionRow { model: name.clone(), topic: h.topic, mad, iqr });
        }
        let n = hists.len().max(1) as f64;
        summary.push(DispersionSummary { model: name.clone(), mean_mad: sm / n, mean_iqr: si / n });
    }
    Ok(DispersionReport { rows, summary })
}

pub const HISTOGRAM_HEADER: &str = "topic,bin_start,bin_end,mass";
pub const DISPERSION_HEADER: &str = "model,topic,mad,iqr";
pub const DISPERSION_SUMMARY_HEADER: &str = "model,mean_mad,mean_iqr";
pub const TOP_WORDS_HEADER: &str = "topic,rank,word,score,ranking";
pub const COHERENCE_HEADER: &str = "topic,cv,missing";
pub const SYM_KL_HEADER: &str = "topic_a,topic_b,sym_kl";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_histograms_csv<W: Write>(mut out: W, hists: &[TopicTimeHistogram]) -> Result<()> {
    writeln!(out, "{HISTOGRAM_HEADER}")?;
    for h in hists {
        for (i, m) in h.mass.iter().enumerate() {
            writeln!(out, "{},{},{},{}", h.topic, h.edges[i], h.edges[i + 1], m)?;
        }
    }
    Ok(())
}

pub fn write_dispersion_csv<W: Write>(mut out: W, report: &DispersionReport) -> Result<()> {
    writeln!(out, "{DISPERSION_HEADER}")?;
    for r in &report.rows {
        writeln!(out, "{},{},{},{}", csv_field(&r.model), r.topic, r.mad, r.iqr)?;
    }
    writeln!(out)?;
    writeln!(out, "{DISPERSION_SUMMARY_HEADER}")?;
    for s in &report.summary {
        writeln!(out, "{},{},{}", csv_field(&s.model), s.mean_mad, s.mean_iqr)?;
    }
    Ok(())
}

pub fn write_top_words_csv<W: Write>(mut out: W, lists: &[TopWordList], vocab: &Vocabulary) -> Result<()> {
    writeln!(out, "{TOP_WORDS_HEADER}")?;
    for l in lists {
        for (rank, (w, score)) in l.entries.iter().enumerate() {
            writeln!(out, "{},{},{},{},{}", l.topic, rank + 1, csv_field(vocab.word(*w)), score, l.ranking)?;
        }
    }
    Ok(())
}

/// `missing` lists absent words separated by `;`.
pub fn write_coherence_csv<W: Write>(mut out: W, rows: &[Coherence], vocab: &Vocabulary) -> Result<()> {
    writeln!(out, "{COHERENCE_HEADER}")?;
    for c in rows {
        let missing: Vec<&str> = c.missing.iter().map(|&w| vocab.word(w)).collect();
        writeln!(out, "{},{},{}", c.topic, c.cv, csv_field(&missing.join(";")))?;
    }
    Ok(())
}

pub fn write_sym_kl_csv<W: Write>(mut out: W, m: &[Vec<f64>]) -> Result<()> {
    writeln!(out, "{SYM_KL_HEADER}")?;
    for (i, row) in m.iter().enumerate() {
        for (j, d) in row.iter().enumerate() {
            writeln!(out, "{i},{j},{d}")?;
        }
    }
    Ok(())
}
