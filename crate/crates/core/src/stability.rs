//! Side-by-side online runs of ToT and the Bayesian models on a stream
//! that ends with a peaked, topic-starving mini-batch.

use serde::{Deserialize, Serialize};

use crate::baselines::{lda_m_step_online, mixing_rate, tot_online_m_step_naive, NaiveOutcome, OnlineConfig, RHO_CAP};
use crate::bayes_tot::NyScheme;
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::{sweep, ModelKind, ModelSpec, ModelState, SweepOptions};
use crate::synth::{adversarial_minibatch, draw_topic_truth, generate_corpus, DocLength, GenKind, SynthConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub k: usize,
    pub v: usize,
    pub batch_size: usize,
    pub mean_doc_len: f64,
    pub t_common: f64,
    pub topic_starved: usize,
    /// Ordinary mini-batches before the final one.
    pub warmup_batches: usize,
    pub tau: f64,
    pub kappa: f64,
    pub ny: NyScheme,
    /// Replace the adversarial batch with an ordinary one.
    pub benign: bool,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            k: 5,
            v: 200,
            batch_size: 100,
            mean_doc_len: 30.0,
            t_common: 0.7,
            topic_starved: 0,
            warmup_batches: 3,
            tau: 1.0,
            kappa: 0.7,
            ny: NyScheme::Sqrt,
            benign: false,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Bounded,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutcome {
    pub model: ModelKind,
    pub status: Status,
    pub reason: Option<String>,
    /// Largest Beta parameter seen (ρ for ToT, `⟨ρ⟩` otherwise).
    pub max_rho: Option<f64>,
    /// Every posterior after every step obeyed the Hölder bound (always
    /// true for ToT, which has none).
    pub holder_ok: bool,
    /// Online steps completed.
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub batch: String,
    pub t_common: f64,
    pub topic_starved: usize,
    pub models: Vec<ModelOutcome>,
}

impl StabilityReport {
    pub fn outcome(&self, model: ModelKind) -> Option<&ModelOutcome> {
        self.models.iter().find(|m| m.model == model)
    }
}

/// The warm-up stream and the final mini-batch.
pub fn stability_stream(cfg: &StabilityConfig) -> Result<(Corpus, Corpus)> {
    let mut scfg = SynthConfig::new(cfg.k, cfg.v, (cfg.warmup_batches * cfg.batch_size).max(1));
    scfg.doc_len = DocLength::Poisson(cfg.mean_doc_len);
    scfg.kind = GenKind::TotBtot;
    let truth = draw_topic_truth(&scfg, cfg.seed)?;
    let (warm, _) = generate_corpus(&scfg, Some(truth.clone()), cfg.seed)?;
    let last = if cfg.benign {
        scfg.d = cfg.batch_size;
        generate_corpus(&scfg, Some(truth), cfg.seed.wrapping_add(1))?.0
    } else {
        adversarial_minibatch(
            &truth,
            cfg.topic_starved,
            cfg.t_common,
            cfg.batch_size,
            DocLength::Poisson(cfg.mean_doc_len),
            cfg.seed.wrapping_add(1),
        )?
    };
    Ok((warm, last))
}

fn max_param(state: &ModelState) -> f64 {
    state
        .topic_time_params()
        .unwrap_or_default()
        .iter()
        .flat_map(|p| p.rho)
        .fold(0.0, f64::max)
}

fn run_one(kind: ModelKind, cfg: &StabilityConfig, warm: &Corpus, last: &Corpus) -> Result<ModelOutcome> {
    let mut spec = ModelSpec::new(kind, cfg.k);
    spec.ny = cfg.ny;
    let mut state = ModelState::init(&spec, cfg.v, cfg.seed)?;
    let mut batches: Vec<&[crate::corpus::Document]> = if cfg.warmup_batches > 0 {
        warm.documents.chunks(cfg.batch_size).take(cfg.warmup_batches).collect()
    } else {
        Vec::new()
    };
    batches.push(&last.documents);
    let total_docs = batches.iter().map(|b| b.len()).sum();
    let opts = SweepOptions::default();
    let mut out = ModelOutcome {
        model: kind,
        status: Status::Bounded,
        reason: None,
        max_rho: Some(max_param(&state)),
        holder_ok: true,
        steps: 0,
    };
    for (i, batch) in batches.iter().enumerate() {
        let ocfg = OnlineConfig { batch_size: batch.len(), tau: cfg.tau, kappa: cfg.kappa, total_docs };
        let rho_t = mixing_rate(i + 1, &ocfg)?;
        let sw = sweep(&state, batch, None, &opts)?;
        if let ModelState::Tot(t) = &mut state {
            t.lda.lambda = lda_m_step_online(&t.lda.lambda, &sw.sstats, t.lda.hyper.eta, rho_t, &ocfg);
            match tot_online_m_step_naive(&t.rho, &sw.time_stats, rho_t) {
                NaiveOutcome::Updated(r) => t.rho = r,
                NaiveOutcome::Failed(f) => {
                    out.status = Status::Diverged;
                    out.reason = Some(serde_json::to_string(&f)?);
                    return Ok(out);
                }
            }
        } else {
            match state.m_step_online(&sw, rho_t, &ocfg) {
                Ok(()) => {}
                Err(e) if e.is_numeric() => {
                    out.status = Status::Diverged;
                    out.reason = Some(e.to_string());
                    return Ok(out);
                }
                Err(e) => return Err(e),
            }
        }
        out.steps += 1;
        let m = max_param(&state);
        out.max_rho = Some(out.max_rho.unwrap_or(0.0).max(m));
        if !m.is_finite() || m > RHO_CAP {
            out.status = Status::Diverged;
            out.reason = Some(format!("Beta parameters reached {m:e}"));
            return Ok(out);
        }
        if let Some(b) = state.btot() {
            if !b.posteriors.iter().all(|p| p.satisfies_holder(&b.prior)) {
                out.holder_ok = false;
                out.status = Status::Diverged;
                out.reason = Some("Hölder bound violated".into());
                return Ok(out);
            }
        }
    }
    Ok(out)
}

/// Runs online ToT, BToT and WBToT on the same stream.
pub fn run_stability_demo(cfg: &StabilityConfig) -> Result<StabilityReport> {
    if cfg.batch_size < 1 || cfg.k < 2 || cfg.v < 1 {
        return Err(Error::config("stability demo needs K ≥ 2, V ≥ 1 and a positive batch size"));
    }
    let (warm, last) = stability_stream(cfg)?;
    let models = [ModelKind::Tot, ModelKind::Btot, ModelKind::Wbtot]
        .into_iter()
        .map(|k| run_one(k, cfg, &warm, &last))
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityReport {
        batch: if cfg.benign { "benign" } else { "adversarial" }.to_string(),
        t_common: cfg.t_common,
        topic_starved: cfg.topic_starved,
        models,
    })
}
