//! Batch variational EM with restarts and online (stochastic) training.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{mixing_rate, OnlineConfig};
use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::estep::{DEFAULT_E_MAX_ITER, DEFAULT_E_TOL};
use crate::eval::perplexity;
use crate::model::{sweep, ModelSpec, ModelState, Sweep, SweepOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Batch,
    Online,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(Self::Batch),
            "online" => Ok(Self::Online),
            other => Err(Error::config(format!("unknown mode '{other}' (expected batch or online)"))),
        }
    }
}

impl std::fmt::Display for TrainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Batch => "batch",
            Self::Online => "online",
        })
    }
}

/// Which terms enter the held-out bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeldoutMode {
    /// Words and timestamps.
    Full,
    WordsOnly,
}

impl std::str::FromStr for HeldoutMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "words-only" => Ok(Self::WordsOnly),
            other => Err(Error::config(format!("unknown held-out mode '{other}' (expected full or words-only)"))),
        }
    }
}

impl std::fmt::Display for HeldoutMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::WordsOnly => "words-only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub mode: TrainMode,
    pub restarts: usize,
    /// EM iterations (batch) or passes over the corpus (online).
    pub max_iter: usize,
    /// Stop once the perplexity drops by less than this.
    pub tol: f64,
    pub e_tol: f64,
    pub e_max_iter: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub kappa: f64,
    /// Re-estimate α and η after each batch M-step.
    pub optimize_hyper: bool,
    pub heldout: HeldoutMode,
    /// Keep the `log f(μ_k, ψ_k)` terms in reported perplexities.
    pub include_time_entropy: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            model,
            mode: TrainMode::Batch,
            restarts: 10,
            max_iter: 400,
            tol: 1e-5,
            e_tol: DEFAULT_E_TOL,
            e_max_iter: DEFAULT_E_MAX_ITER,
            batch_size: 256,
            tau: 1.0,
            kappa: 0.7,
            optimize_hyper: true,
            heldout: HeldoutMode::Full,
            include_time_entropy: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.restarts < 1 {
            return Err(Error::config("restarts must be at least 1"));
        }
        if self.max_iter < 1 {
            return Err(Error::config("max-iter must be at least 1"));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::config(format!("tol must be finite and ≥ 0, got {}", self.tol)));
        }
        if !(self.e_tol > 0.0 && self.e_tol.is_finite()) || self.e_max_iter < 1 {
            return Err(Error::config("document update tolerance must be positive with at least one iteration"));
        }
        if self.mode == TrainMode::Online {
            self.online_config(1).validate()?;
        }
        Ok(())
    }

    pub fn online_config(&self, total_docs: usize) -> OnlineConfig {
        OnlineConfig { batch_size: self.batch_size, tau: self.tau, kappa: self.kappa, total_docs }
    }

    fn sweep_options(&self) -> SweepOptions {
        SweepOptions { e_tol: self.e_tol, e_max_iter: self.e_max_iter, use_time: true, accumulate: true }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    pub elbo: f64,
    pub perplexity: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub heldout_perplexity: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub state: ModelState,
    /// Training-corpus bound under the returned state.
    pub elbo: f64,
    pub perplexity: f64,
    /// Index of the kept restart.
    pub restart: usize,
    pub restart_elbos: Vec<f64>,
    /// Log of the kept restart.
    pub log: Vec<LogRecord>,
}

/// Seed of restart `r`.
pub fn restart_seed(seed: u64, r: usize) -> u64 {
    seed.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Reported bound: the full bound, optionally without the posterior
/// normalizer terms of the time modality.
fn reported_elbo(state: &ModelState, elbo: f64, include_time_entropy: bool) -> f64 {
    match (include_time_entropy, state.btot()) {
        (false, Some(b)) => elbo - b.posterior_log_norm_sum(),
        _ => elbo,
    }
}

/// Local terms of a sweep plus the topic-level terms of `state`.
pub fn total_elbo(state: &ModelState, sw: &Sweep) -> Result<f64> {
    let elb = state.lda().expected_log_beta();
    Ok(sw.local_elbo + state.global_elbo(&elb)?)
}

/// Bound and perplexity of `docs` under `state` (fresh document updates).
pub fn corpus_elbo(state: &ModelState, docs: &[Document], opts: &SweepOptions) -> Result<(f64, f64)> {
    let opts = SweepOptions { accumulate: false, ..*opts };
    let sw = sweep(state, docs, None, &opts)?;
    let elbo = total_elbo(state, &sw)?;
    Ok((elbo, perplexity(elbo, sw.num_tokens.max(1))))
}

/// Held-out perplexity: document updates on `test` with the global
/// parameters frozen, scored by the document terms only.
pub fn heldout_perplexity(
    state: &ModelState,
    test: &Corpus,
    mode: HeldoutMode,
    e_tol: f64,
    e_max_iter: usize,
) -> Result<f64> {
    let opts = SweepOptions { e_tol, e_max_iter, use_time: mode == HeldoutMode::Full, accumulate: false };
    let sw = sweep(state, &test.documents, None, &opts)?;
    Ok(perplexity(sw.local_elbo, sw.num_tokens.max(1)))
}

/// Trains `cfg.restarts` models and keeps the one with the largest bound.
pub fn train(corpus: &Corpus, test: Option<&Corpus>, cfg: &TrainConfig) -> Result<TrainResult> {
    cfg.validate()?;
    if corpus.num_docs() == 0 {
        return Err(Error::config("training corpus has no documents"));
    }
    let mut best: Option<TrainResult> = None;
    let mut elbos = Vec::with_capacity(cfg.restarts);
    for r in 0..cfg.restarts {
        let seed = restart_seed(cfg.seed, r);
        let run = match cfg.mode {
            TrainMode::Batch => train_batch(corpus, cfg, seed)?,
            TrainMode::Online => train_online(corpus, test, cfg, seed)?,
        };
        log::info!("restart {r}: elbo {:.6} perplexity {:.6}", run.elbo, run.perplexity);
        elbos.push(run.elbo);
        if best.as_ref().is_none_or(|b| run.elbo > b.elbo) {
            best = Some(TrainResult { restart: r, ..run });
        }
    }
    let mut best = best.expect("at least one restart");
    best.restart_elbos = elbos;
    Ok(best)
}

/// One batch EM run from the initialization drawn with `seed`.
pub fn train_batch(corpus: &Corpus, cfg: &TrainConfig, seed: u64) -> Result<TrainResult> {
    let mut state = ModelState::init(&cfg.model, corpus.vocab_size(), seed)?;
    let opts = cfg.sweep_options();
    let n_tok = corpus.num_tokens().max(1);
    let start = Instant::now();
    let mut log = Vec::new();
    let mut gammas: Option<Vec<Vec<f64>>> = None;
    let mut prev_p = f64::INFINITY;
    let mut last = (f64::NEG_INFINITY, f64::INFINITY);
    for it in 1..=cfg.max_iter {
        let sw = sweep(&state, &corpus.documents, gammas.as_deref(), &opts)?;
        let elbo = total_elbo(&state, &sw)?;
        let p = perplexity(reported_elbo(&state, elbo, cfg.include_time_entropy), n_tok);
        log.push(LogRecord {
            iteration: it,
            elbo,
            perplexity: p,
            heldout_perplexity: None,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        log::debug!("iteration {it}: elbo {elbo:.6} perplexity {p:.6}");
        last = (elbo, p);
        if it > 1 && prev_p - p < cfg.tol {
            break;
        }
        prev_p = p;
        if it == cfg.max_iter {
            break;
        }
        state.m_step_batch(&sw)?;
        if cfg.optimize_hyper {
            state.update_hyperparams(&sw);
        }
        gammas = Some(sw.gammas);
    }
    Ok(TrainResult { state, elbo: last.0, perplexity: last.1, restart: 0, restart_elbos: Vec::new(), log })
}

/// One online run: `cfg.max_iter` passes over `corpus` in mini-batches of
/// `cfg.batch_size` documents, in corpus order.
pub fn train_online(corpus: &Corpus, test: Option<&Corpus>, cfg: &TrainConfig, seed: u64) -> Result<TrainResult> {
    let mut state = ModelState::init(&cfg.model, corpus.vocab_size(), seed)?;
    let ocfg = cfg.online_config(corpus.num_docs());
    let opts = cfg.sweep_options();
    let start = Instant::now();
    let mut log = Vec::new();
    let mut t = 0;
    for _pass in 0..cfg.max_iter {
        for batch in corpus.documents.chunks(cfg.batch_size) {
            t += 1;
            let rho_t = mixing_rate(t, &ocfg)?;
            let sw = sweep(&state, batch, None, &opts)?;
            let elb = state.lda().expected_log_beta();
            let scale = corpus.num_docs() as f64 / batch.len() as f64;
            let elbo = scale * sw.local_elbo + state.global_elbo(&elb)?;
            let est_tokens = (scale * sw.num_tokens as f64).max(1.0);
            let p = (-reported_elbo(&state, elbo, cfg.include_time_entropy) / est_tokens).exp();
            // The M-step scales by D/S, which must reflect this batch's size.
            let bcfg = OnlineConfig { batch_size: batch.len(), ..ocfg };
            state.m_step_online(&sw, rho_t, &bcfg)?;
            let held = match test {
                Some(tc) if tc.num_docs() > 0 => {
                    Some(heldout_perplexity(&state, tc, cfg.heldout, cfg.e_tol, cfg.e_max_iter)?)
                }
                _ => None,
            };
            log.push(LogRecord {
                iteration: t,
                elbo,
                perplexity: p,
                heldout_perplexity: held,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    let (elbo, p) = corpus_elbo(&state, &corpus.documents, &opts)?;
    let p = if cfg.include_time_entropy { p } else { perplexity(reported_elbo(&state, elbo, false), corpus.num_tokens().max(1)) };
    Ok(TrainResult { state, elbo, perplexity: p, restart: 0, restart_elbos: Vec::new(), log })
}
