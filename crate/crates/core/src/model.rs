//! One state type over the four models, with corpus-level E-step sweeps
//! and M-steps.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    lda_m_step_batch, lda_m_step_online, tot_m_step, tot_online_m_step_naive, update_dirichlet_hyperparams,
    doc_elbo_explicit, DirichletHyper, LdaState, NaiveFailure, NaiveOutcome, OnlineConfig, TotState,
};
use crate::bayes_tot::{
    btot_delta_variant, btot_m_step_batch, btot_m_step_online, ny_weight, wbtot_m_step_batch, wbtot_m_step_online,
    BtotState, NyScheme, WbtotState,
};
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::estep::{
    e_step_engine, expected_log_theta, time_log_density, time_log_density_point, DocPosterior, ExpectedLogBeta,
    TimeTerm, DEFAULT_E_MAX_ITER, DEFAULT_E_TOL,
};
use crate::numerics::{BetaParams, BetaPriorParams, MomentMethod, TimeSuffStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lda,
    Tot,
    Btot,
    Wbtot,
}

impl ModelKind {
    pub fn has_time(&self) -> bool {
        !matches!(self, ModelKind::Lda)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lda" => Ok(Self::Lda),
            "tot" => Ok(Self::Tot),
            "btot" => Ok(Self::Btot),
            "wbtot" => Ok(Self::Wbtot),
            other => Err(Error::config(format!("unknown model '{other}' (expected lda, tot, btot or wbtot)"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Lda => "lda",
            Self::Tot => "tot",
            Self::Btot => "btot",
            Self::Wbtot => "wbtot",
        })
    }
}

/// Everything needed to build a fresh model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub k: usize,
    pub prior: BetaPriorParams,
    pub ny: NyScheme,
    pub delta: f64,
    pub method: MomentMethod,
    /// Initial α_k and η; `None` means 1/K.
    pub alpha0: Option<f64>,
    pub eta0: Option<f64>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, k: usize) -> Self {
        Self {
            kind,
            k,
            prior: BetaPriorParams::default_for_k(k),
            ny: NyScheme::Sqrt,
            delta: 1.0,
            method: MomentMethod::Laplace,
            alpha0: None,
            eta0: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::config("K must be at least 1"));
        }
        BetaPriorParams::new(self.prior.nu, self.prior.chi)?;
        self.ny.validate()?;
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::config(format!("δ must lie in (0, 1], got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelState {
    Lda(LdaState),
    Tot(TotState),
    Btot(BtotState),
    Wbtot(WbtotState),
}

impl ModelState {
    /// Random `λ`, α = η = 1/K unless overridden, time parameters at their
    /// uninformative starting point.
    pub fn init(spec: &ModelSpec, v: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        let inv_k = 1.0 / spec.k as f64;
        let hyper = DirichletHyper::symmetric(spec.k, spec.alpha0.unwrap_or(inv_k), spec.eta0.unwrap_or(inv_k));
        hyper.validate()?;
        let lda = LdaState::random(spec.k, v, hyper, seed);
        Ok(match spec.kind {
            ModelKind::Lda => ModelState::Lda(lda),
            ModelKind::Tot => ModelState::Tot(TotState { lda, rho: vec![BetaParams::uniform(); spec.k] }),
            ModelKind::Btot => ModelState::Btot(BtotState::new(lda, spec.prior, spec.method, spec.delta)?),
            ModelKind::Wbtot => ModelState::Wbtot(WbtotState::new(lda, spec.prior, spec.method, spec.ny)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelState::Lda(_) => ModelKind::Lda,
            ModelState::Tot(_) => ModelKind::Tot,
            ModelState::Btot(_) => ModelKind::Btot,
            ModelState::Wbtot(_) => ModelKind::Wbtot,
        }
    }

    pub fn lda(&self) -> &LdaState {
        match self {
            ModelState::Lda(s) => s,
            ModelState::Tot(s) => &s.lda,
            ModelState::Btot(s) => &s.lda,
            ModelState::Wbtot(s) => &s.btot.lda,
        }
    }

    pub fn lda_mut(&mut self) -> &mut LdaState {
        match self {
            ModelState::Lda(s) => s,
            ModelState::Tot(s) => &mut s.lda,
            ModelState::Btot(s) => &mut s.lda,
            ModelState::Wbtot(s) => &mut s.btot.lda,
        }
    }

    pub fn k(&self) -> usize {
        self.lda().k()
    }

    pub fn v(&self) -> usize {
        self.lda().v()
    }

    pub fn btot(&self) -> Option<&BtotState> {
        match self {
            ModelState::Btot(s) => Some(s),
            ModelState::Wbtot(s) => Some(&s.btot),
            _ => None,
        }
    }

    /// Per-topic Beta parameters used for time densities: ρ for ToT, the
    /// posterior mean `⟨ρ⟩` for BToT/WBToT.
    pub fn topic_time_params(&self) -> Option<Vec<BetaParams>> {
        match self {
            ModelState::Lda(_) => None,
            ModelState::Tot(s) => Some(s.rho.clone()),
            ModelState::Btot(_) | ModelState::Wbtot(_) => {
                Some(self.btot().unwrap().moments.iter().map(|m| BetaParams { rho: m.mean_rho }).collect())
            }
        }
    }

    /// Topic-level bound terms (topic-word Dirichlets and, for the Bayesian
    /// models, the Beta-prior terms).
    pub fn global_elbo(&self, elb: &ExpectedLogBeta) -> Result<f64> {
        let mut g = self.lda().global_elbo(elb);
        if let Some(b) = self.btot() {
            g += b.time_global_elbo()?;
        }
        Ok(g)
    }
}

/// Options for a pass of document updates over a set of documents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub e_tol: f64,
    pub e_max_iter: usize,
    /// Include the timestamp in document updates and bound.
    pub use_time: bool,
    /// Accumulate topic-word and time statistics.
    pub accumulate: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { e_tol: DEFAULT_E_TOL, e_max_iter: DEFAULT_E_MAX_ITER, use_time: true, accumulate: true }
    }
}

/// Aggregated output of a sweep; reductions run in document order.
#[derive(Debug, Clone)]
pub struct Sweep {
    /// K×V `Σ_d n_dw φ_dwk`
    pub sstats: Array2<f64>,
    /// Time statistics per topic, weighted by `N_dk` (ToT, BToT) or
    /// `n^{(y)} ε_dk` (WBToT).
    pub time_stats: Vec<TimeSuffStats>,
    pub gammas: Vec<Vec<f64>>,
    pub epsilons: Option<Vec<Vec<f64>>>,
    pub elog_theta_sum: Vec<f64>,
    pub local_elbo: f64,
    pub inner_iterations: usize,
    pub num_tokens: u64,
}

const CHUNK: usize = 64;

struct Partial {
    sstats: Vec<f64>,
    time_stats: Vec<TimeSuffStats>,
    gammas: Vec<Vec<f64>>,
    epsilons: Vec<Vec<f64>>,
    elog_theta_sum: Vec<f64>,
    local_elbo: f64,
    inner_iterations: usize,
}

/// Document-level time input for one model.
enum DocTime {
    None,
    Bias(Vec<f64>),
    Tokens(f64, Vec<f64>),
}

fn doc_time(state: &ModelState, doc: &Document, use_time: bool) -> Result<DocTime> {
    if !use_time {
        return Ok(DocTime::None);
    }
    Ok(match state {
        ModelState::Lda(_) => DocTime::None,
        ModelState::Tot(s) => DocTime::Bias(time_log_density_point(&s.rho, doc.log_time())),
        ModelState::Btot(s) => DocTime::Bias(time_log_density(&s.moments, doc.log_time(), s.delta)),
        ModelState::Wbtot(s) => DocTime::Tokens(
            ny_weight(doc.total, s.ny)?,
            time_log_density(&s.btot.moments, doc.log_time(), 1.0),
        ),
    })
}

/// Runs the document updates for `docs` under a frozen `state`.
///
/// `warm` optionally supplies starting `γ` per document.
pub fn sweep(state: &ModelState, docs: &[Document], warm: Option<&[Vec<f64>]>, opts: &SweepOptions) -> Result<Sweep> {
    let elb = state.lda().expected_log_beta();
    sweep_with(state, &elb, docs, warm, opts)
}

pub fn sweep_with(
    state: &ModelState,
    elb: &ExpectedLogBeta,
    docs: &[Document],
    warm: Option<&[Vec<f64>]>,
    opts: &SweepOptions,
) -> Result<Sweep> {
    let k = state.k();
    let v = state.v();
    let alpha = &state.lda().hyper.alpha;
    let is_wbtot = matches!(state, ModelState::Wbtot(_)) && opts.use_time;

    let partials: Vec<Result<Partial>> = docs
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut p = Partial {
                sstats: if opts.accumulate { vec![0.0; k * v] } else { Vec::new() },
                time_stats: vec![TimeSuffStats::default(); k],
                gammas: Vec::with_capacity(chunk.len()),
                epsilons: Vec::new(),
                elog_theta_sum: vec![0.0; k],
                local_elbo: 0.0,
                inner_iterations: 0,
            };
            for (j, doc) in chunk.iter().enumerate() {
                let init = warm.map(|w| w[ci * CHUNK + j].as_slice());
                let dt = doc_time(state, doc, opts.use_time)?;
                let term = match &dt {
                    DocTime::None => TimeTerm::None,
                    DocTime::Bias(b) => TimeTerm::WordBias(b),
                    DocTime::Tokens(ny, tb) => TimeTerm::Tokens { ny: *ny, tb },
                };
                let ss = if opts.accumulate { Some(p.sstats.as_mut_slice()) } else { None };
                let out = e_step_engine(doc, elb, alpha, term, opts.e_tol, opts.e_max_iter, init, false, ss);
                p.local_elbo += out.local_elbo;
                p.inner_iterations += out.iterations;
                for (acc, e) in p.elog_theta_sum.iter_mut().zip(expected_log_theta(&out.gamma)) {
                    *acc += e;
                }
                let lt = doc.log_time();
                match (&dt, &out.epsilon) {
                    (DocTime::Tokens(ny, _), Some(eps)) => {
                        for t in 0..k {
                            p.time_stats[t].add(ny * eps[t], lt);
                        }
                    }
                    (DocTime::Bias(_), _) => {
                        for t in 0..k {
                            p.time_stats[t].add(out.n_dk[t], lt);
                        }
                    }
                    _ => {}
                }
                if let Some(eps) = out.epsilon {
                    p.epsilons.push(eps);
                }
                p.gammas.push(out.gamma);
            }
            Ok(p)
        })
        .collect();

    let mut sstats = vec![0.0; if opts.accumulate { k * v } else { 0 }];
    let mut time_stats = vec![TimeSuffStats::default(); k];
    let mut gammas = Vec::with_capacity(docs.len());
    let mut epsilons = Vec::new();
    let mut elog_theta_sum = vec![0.0; k];
    let mut local_elbo = 0.0;
    let mut inner_iterations = 0;
    for p in partials {
        let p = p?;
        for (a, b) in sstats.iter_mut().zip(&p.sstats) {
            *a += b;
        }
        for (a, b) in time_stats.iter_mut().zip(&p.time_stats) {
            a.merge(b);
        }
        for (a, b) in elog_theta_sum.iter_mut().zip(&p.elog_theta_sum) {
            *a += b;
        }
        local_elbo += p.local_elbo;
        inner_iterations += p.inner_iterations;
        gammas.extend(p.gammas);
        epsilons.extend(p.epsilons);
    }
    let sstats = if opts.accumulate {
        Array2::from_shape_vec((k, v), sstats).expect("shape")
    } else {
        Array2::zeros((k, 0))
    };
    Ok(Sweep {
        sstats,
        time_stats,
        gammas,
        epsilons: if is_wbtot { Some(epsilons) } else { None },
        elog_theta_sum,
        local_elbo,
        inner_iterations,
        num_tokens: docs.iter().map(|d| d.total as u64).sum(),
    })
}

impl ModelState {
    /// Batch M-step from a full-corpus sweep.
    pub fn m_step_batch(&mut self, sw: &Sweep) -> Result<()> {
        let eta = self.lda().hyper.eta;
        self.lda_mut().lambda = lda_m_step_batch(&sw.sstats, eta);
        match self {
            ModelState::Lda(_) => {}
            ModelState::Tot(s) => s.rho = tot_m_step(&sw.time_stats)?,
            ModelState::Btot(s) => {
                let stats = btot_delta_variant(&sw.time_stats, s.delta)?;
                let post = btot_m_step_batch(&stats, &s.prior);
                s.set_posteriors(post)?;
            }
            ModelState::Wbtot(s) => {
                let post = wbtot_m_step_batch(&sw.time_stats, &s.btot.prior);
                s.btot.set_posteriors(post)?;
            }
        }
        Ok(())
    }

    /// Online M-step from a mini-batch sweep with mixing weight `rho_t`.
    /// ToT uses the prior-free update and reports its failures as errors.
    pub fn m_step_online(&mut self, sw: &Sweep, rho_t: f64, cfg: &OnlineConfig) -> Result<()> {
        let eta = self.lda().hyper.eta;
        let lambda = lda_m_step_online(&self.lda().lambda, &sw.sstats, eta, rho_t, cfg);
        self.lda_mut().lambda = lambda;
        match self {
            ModelState::Lda(_) => {}
            ModelState::Tot(s) => match tot_online_m_step_naive(&s.rho, &sw.time_stats, rho_t) {
                NaiveOutcome::Updated(r) => s.rho = r,
                NaiveOutcome::Failed(NaiveFailure::InfeasibleStats { topic, exp_sum }) => {
                    return Err(Error::InfeasibleStats { topic: Some(topic), exp_sum })
                }
                NaiveOutcome::Failed(NaiveFailure::RhoCapExceeded { topic, rho }) => {
                    return Err(Error::domain(format!("topic {topic}: Beta parameters diverged to {rho:?}")))
                }
            },
            ModelState::Btot(s) => {
                let stats = btot_delta_variant(&sw.time_stats, s.delta)?;
                let post = btot_m_step_online(&s.posteriors, &stats, &s.prior, rho_t, cfg);
                s.set_posteriors(post)?;
            }
            ModelState::Wbtot(s) => {
                let post = wbtot_m_step_online(&s.btot.posteriors, &sw.time_stats, &s.btot.prior, rho_t, cfg);
                s.btot.set_posteriors(post)?;
            }
        }
        Ok(())
    }

    /// Fixed-point re-estimation of α and η from the last sweep.
    pub fn update_hyperparams(&mut self, sw: &Sweep) {
        let elb = self.lda().expected_log_beta();
        let n = sw.gammas.len();
        let hyper = update_dirichlet_hyperparams(&self.lda().hyper, &sw.elog_theta_sum, n, &elb);
        self.lda_mut().hyper = hyper;
    }
}

/// Explicit bound from stored document posteriors. `epsilons` is required
/// for WBToT.
pub fn model_elbo(
    corpus: &Corpus,
    state: &ModelState,
    posteriors: &[DocPosterior],
    epsilons: Option<&[Vec<f64>]>,
) -> Result<f64> {
    let elb = state.lda().expected_log_beta();
    let alpha = &state.lda().hyper.alpha;
    let mut total = state.global_elbo(&elb)?;
    for (d, (doc, post)) in corpus.documents.iter().zip(posteriors).enumerate() {
        match doc_time(state, doc, true)? {
            DocTime::None => total += doc_elbo_explicit(doc, &elb, alpha, post, None),
            DocTime::Bias(b) => total += doc_elbo_explicit(doc, &elb, alpha, post, Some(&b)),
            DocTime::Tokens(ny, tb) => {
                total += doc_elbo_explicit(doc, &elb, alpha, post, None);
                let eps = epsilons
                    .and_then(|e| e.get(d))
                    .ok_or_else(|| Error::config("WBToT bound needs ε for every document"))?;
                let elog = expected_log_theta(&post.gamma);
                for t in 0..eps.len() {
                    if eps[t] > 0.0 {
                        total += ny * eps[t] * (elog[t] + tb[t] - eps[t].ln());
                    }
                }
            }
        }
    }
    Ok(total)
}

/// Full per-document posteriors (with `φ`, and `ε` for WBToT).
pub fn doc_posteriors(
    state: &ModelState,
    corpus: &Corpus,
    opts: &SweepOptions,
) -> Result<(Vec<DocPosterior>, Option<Vec<Vec<f64>>>)> {
    let elb = state.lda().expected_log_beta();
    let alpha = &state.lda().hyper.alpha;
    let results: Vec<Result<(DocPosterior, Option<Vec<f64>>)>> = corpus
        .documents
        .par_iter()
        .map(|doc| {
            let dt = doc_time(state, doc, opts.use_time)?;
            let term = match &dt {
                DocTime::None => TimeTerm::None,
                DocTime::Bias(b) => TimeTerm::WordBias(b),
                DocTime::Tokens(ny, tb) => TimeTerm::Tokens { ny: *ny, tb },
            };
            let out = e_step_engine(doc, &elb, alpha, term, opts.e_tol, opts.e_max_iter, None, true, None);
            Ok((
                DocPosterior { gamma: out.gamma, phi: out.phi.expect("phi"), iterations_used: out.iterations },
                out.epsilon,
            ))
        })
        .collect();
    let mut posts = Vec::with_capacity(results.len());
    let mut eps = Vec::new();
    let mut any_eps = false;
    for r in results {
        let (p, e) = r?;
        posts.push(p);
        if let Some(e) = e {
            any_eps = true;
            eps.push(e);
        }
    }
    Ok((posts, if any_eps { Some(eps) } else { None }))
}
