//! Synthetic corpora drawn from the generative processes, with ground truth.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::bayes_tot::{ny_weight, NyScheme};
use crate::corpus::{Corpus, Document, TimeScale, Vocabulary};
use crate::error::{Error, Result};
use crate::numerics::BetaParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum GenKind {
    /// Timestamps uniform on (0, 1), unrelated to topics.
    Lda,
    /// One timestamp per document from the Beta of a θ-sampled topic.
    TotBtot,
    Wbtot(NyScheme),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum DocLength {
    /// Poisson with this mean, redrawn until ≥ 1.
    Poisson(f64),
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// K×V, rows normalized.
    pub beta: Array2<f64>,
    pub rho: Vec<BetaParams>,
    pub alpha: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub timestamps: Vec<f64>,
    /// `n^{(y)}` per document (WBToT generation only).
    pub ny: Option<Vec<f64>>,
}

impl GroundTruth {
    pub fn k(&self) -> usize {
        self.beta.nrows()
    }

    pub fn v(&self) -> usize {
        self.beta.ncols()
    }
}

/// Topic-level truth before any documents are drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicTruth {
    pub beta: Array2<f64>,
    pub rho: Vec<BetaParams>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub k: usize,
    pub v: usize,
    pub d: usize,
    pub doc_len: DocLength,
    pub kind: GenKind,
    /// Symmetric document-topic concentration.
    pub alpha: f64,
    /// Symmetric topic-word concentration.
    pub eta: f64,
    /// Concentration `ρ¹ + ρ²` of the drawn time Betas.
    pub time_concentration: f64,
}

impl SynthConfig {
    pub fn new(k: usize, v: usize, d: usize) -> Self {
        Self {
            k,
            v,
            d,
            doc_len: DocLength::Poisson(50.0),
            kind: GenKind::TotBtot,
            alpha: 0.1,
            eta: 0.05,
            time_concentration: 60.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.v < 1 || self.d < 1 {
            return Err(Error::config("k, v and d must all be at least 1"));
        }
        for (name, x) in [("alpha", self.alpha), ("eta", self.eta), ("time concentration", self.time_concentration)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {x}")));
            }
        }
        match self.doc_len {
            DocLength::Poisson(m) if !(m > 0.0 && m.is_finite()) => {
                return Err(Error::config(format!("mean document length must be positive, got {m}")))
            }
            DocLength::Fixed(0) => return Err(Error::config("fixed document length must be at least 1")),
            _ => {}
        }
        if let GenKind::Wbtot(s) = self.kind {
            s.validate()?;
        }
        Ok(())
    }
}

const TRUTH_STREAM: u64 = u64::MAX;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Symmetric Dirichlet draw via normalized Gammas.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, conc: &[f64]) -> Vec<f64> {
    loop {
        let g: Vec<f64> = conc.iter().map(|&a| Gamma::new(a, 1.0).expect("shape > 0").sample(rng)).collect();
        let s: f64 = g.iter().sum();
        if s > 0.0 && s.is_finite() {
            return g.into_iter().map(|x| x / s).collect();
        }
    }
}

/// `β_k ~ Dir(η)`; `ρ_k` with means spread evenly over (0, 1) at the given
/// concentration.
pub fn draw_topic_truth(cfg: &SynthConfig, seed: u64) -> Result<TopicTruth> {
    cfg.validate()?;
    let mut rng = rng_for(seed, TRUTH_STREAM);
    let mut beta = Array2::zeros((cfg.k, cfg.v));
    for k in 0..cfg.k {
        let row = dirichlet(&mut rng, &vec![cfg.eta; cfg.v]);
        for (w, b) in row.into_iter().enumerate() {
            beta[[k, w]] = b;
        }
    }
    let rho = (0..cfg.k)
        .map(|k| {
            let m = (k as f64 + 0.5) / cfg.k as f64;
            BetaParams { rho: [cfg.time_concentration * m, cfg.time_concentration * (1.0 - m)] }
        })
        .collect();
    Ok(TopicTruth { beta, rho, alpha: vec![cfg.alpha; cfg.k] })
}

fn draw_len<R: Rng + ?Sized>(rng: &mut R, dl: DocLength) -> u32 {
    match dl {
        DocLength::Fixed(n) => n,
        DocLength::Poisson(m) => {
            let p = Poisson::new(m).expect("positive mean");
            loop {
                let n: f64 = p.sample(rng);
                if n >= 1.0 {
                    return n as u32;
                }
            }
        }
    }
}

/// A Beta draw strictly inside (0, 1).
pub fn draw_time<R: Rng + ?Sized>(rng: &mut R, rho: &BetaParams) -> f64 {
    let b = Beta::new(rho.rho[0], rho.rho[1]).expect("valid Beta");
    for _ in 0..64 {
        let t: f64 = b.sample(rng);
        if t > 0.0 && t < 1.0 {
            return t;
        }
    }
    0.5
}

fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let t: f64 = rng.random();
        if t > 0.0 {
            return t;
        }
    }
}

/// Draws `cfg.d` documents. Topic-level truth comes from `truth` when
/// given, otherwise from `seed`. Document `d` uses its own random stream,
/// so the output does not depend on scheduling.
pub fn generate_corpus(cfg: &SynthConfig, truth: Option<TopicTruth>, seed: u64) -> Result<(Corpus, GroundTruth)> {
    cfg.validate()?;
    let truth = match truth {
        Some(t) => {
            if t.beta.nrows() != cfg.k || t.beta.ncols() != cfg.v || t.rho.len() != cfg.k || t.alpha.len() != cfg.k {
                return Err(Error::config("ground truth shape does not match k and v"));
            }
            t
        }
        None => draw_topic_truth(cfg, seed)?,
    };
    let word_dists: Vec<WeightedIndex<f64>> = truth
        .beta
        .rows()
        .into_iter()
        .map(|r| WeightedIndex::new(r.iter().copied()).map_err(|e| Error::config(format!("β row: {e}"))))
        .collect::<Result<_>>()?;

    let mut documents = Vec::with_capacity(cfg.d);
    let mut thetas = Vec::with_capacity(cfg.d);
    let mut times = Vec::with_capacity(cfg.d);
    let mut nys = Vec::new();
    for d in 0..cfg.d {
        let mut rng = rng_for(seed, d as u64);
        let theta = dirichlet(&mut rng, &truth.alpha);
        let zdist = WeightedIndex::new(theta.iter().copied()).map_err(|e| Error::config(format!("θ: {e}")))?;
        let n = draw_len(&mut rng, cfg.doc_len);
        let mut counts = BTreeMap::new();
        for _ in 0..n {
            let z = zdist.sample(&mut rng);
            *counts.entry(word_dists[z].sample(&mut rng)).or_insert(0u32) += 1;
        }
        let t = match cfg.kind {
            GenKind::Lda => uniform_open(&mut rng),
            GenKind::TotBtot | GenKind::Wbtot(_) => {
                let y = zdist.sample(&mut rng);
                draw_time(&mut rng, &truth.rho[y])
            }
        };
        if let GenKind::Wbtot(s) = cfg.kind {
            nys.push(ny_weight(n, s)?);
        }
        documents.push(Document::new(format!("doc{d:06}"), &counts, t).expect("nonempty document"));
        thetas.push(theta);
        times.push(t);
    }
    let corpus = Corpus::new(documents, Arc::new(Vocabulary::synthetic(cfg.v)), TimeScale::identity())?;
    let gt = GroundTruth {
        beta: truth.beta,
        rho: truth.rho,
        alpha: truth.alpha,
        theta: thetas,
        timestamps: times,
        ny: if matches!(cfg.kind, GenKind::Wbtot(_)) { Some(nys) } else { None },
    };
    Ok((corpus, gt))
}

/// Words whose largest true topic weight belongs to `topic`.
pub fn topic_owned_words(beta: &Array2<f64>, topic: usize) -> Vec<usize> {
    (0..beta.ncols())
        .filter(|&w| {
            let col = beta.column(w);
            let best = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b]).then(b.cmp(&a))).unwrap_or(0);
            best == topic
        })
        .collect()
}

/// A mini-batch in which every document carries timestamp `t_common` and
/// `topic_starved` contributes neither mass nor its own vocabulary.
pub fn adversarial_minibatch(
    truth: &TopicTruth,
    topic_starved: usize,
    t_common: f64,
    size: usize,
    doc_len: DocLength,
    seed: u64,
) -> Result<Corpus> {
    let k = truth.beta.nrows();
    let v = truth.beta.ncols();
    if !(t_common > 0.0 && t_common < 1.0) {
        return Err(Error::config(format!("common timestamp must lie in (0, 1), got {t_common}")));
    }
    if k < 2 || topic_starved >= k {
        return Err(Error::config("need K ≥ 2 and a starved topic id below K"));
    }
    if size < 1 {
        return Err(Error::config("mini-batch size must be at least 1"));
    }
    let banned = topic_owned_words(&truth.beta, topic_starved);
    let mut keep = vec![true; v];
    for w in banned {
        keep[w] = false;
    }
    let others: Vec<usize> = (0..k).filter(|&t| t != topic_starved).collect();
    let mut dists = Vec::with_capacity(others.len());
    for &t in &others {
        let row: Vec<f64> = (0..v).map(|w| if keep[w] { truth.beta[[t, w]] } else { 0.0 }).collect();
        dists.push(WeightedIndex::new(row).map_err(|e| Error::config(format!("β row {t}: {e}")))?);
    }
    let alpha: Vec<f64> = others.iter().map(|&t| truth.alpha[t]).collect();
    let mut documents = Vec::with_capacity(size);
    for d in 0..size {
        let mut rng = rng_for(seed, d as u64);
        let theta = dirichlet(&mut rng, &alpha);
        let zdist = WeightedIndex::new(theta.iter().copied()).map_err(|e| Error::config(format!("θ: {e}")))?;
        let n = draw_len(&mut rng, doc_len);
        let mut counts = BTreeMap::new();
        for _ in 0..n {
            let z = zdist.sample(&mut rng);
            *counts.entry(dists[z].sample(&mut rng)).or_insert(0u32) += 1;
        }
        documents.push(Document::new(format!("adv{d:06}"), &counts, t_common).expect("nonempty document"));
    }
    Corpus::new(documents, Arc::new(Vocabulary::synthetic(v)), TimeScale::identity())
}
