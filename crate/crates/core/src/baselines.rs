//! Variational LDA (batch and online) and classic variational ToT.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::estep::{expected_log_theta, theta_terms, time_log_density_point, DocPosterior, ExpectedLogBeta};
use crate::numerics::special::{digamma_unchecked, inv_digamma, ln_gamma_unchecked};
use crate::numerics::{solve_beta_from_logstats, BetaParams, TimeSuffStats};

/// Floor applied to re-estimated Dirichlet hyperparameters.
pub const HYPER_FLOOR: f64 = 1e-6;

/// ρ components above this count as divergence in the online ToT demo.
pub const RHO_CAP: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletHyper {
    pub alpha: Vec<f64>,
    /// Symmetric topic-word concentration.
    pub eta: f64,
}

impl DirichletHyper {
    pub fn symmetric(k: usize, alpha: f64, eta: f64) -> Self {
        Self { alpha: vec![alpha; k], eta }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::config("every α_k must be finite and positive"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config("η must be finite and positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaState {
    /// K×V topic-word variational parameters.
    pub lambda: Array2<f64>,
    pub hyper: DirichletHyper,
}

impl LdaState {
    /// `λ` drawn from Gamma(100, 0.01): mean 1, variance 0.01.
    pub fn random(k: usize, v: usize, hyper: DirichletHyper, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Gamma::new(100.0, 0.01).expect("valid gamma");
        let lambda = Array2::from_shape_simple_fn((k, v), || g.sample(&mut rng));
        Self { lambda, hyper }
    }

    pub fn k(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn v(&self) -> usize {
        self.lambda.ncols()
    }

    pub fn expected_log_beta(&self) -> ExpectedLogBeta {
        ExpectedLogBeta::from_lambda(&self.lambda)
    }

    /// Posterior mean topic-word distributions.
    pub fn beta(&self) -> Array2<f64> {
        let mut b = self.lambda.clone();
        for mut row in b.outer_iter_mut() {
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        b
    }

    /// `E[log p(β|η)] − E[log q(β|λ)]`
    pub fn global_elbo(&self, elb: &ExpectedLogBeta) -> f64 {
        let eta = self.hyper.eta;
        let v = self.v() as f64;
        let mut total = 0.0;
        for (k, row) in self.lambda.outer_iter().enumerate() {
            total += ln_gamma_unchecked(v * eta) - v * ln_gamma_unchecked(eta) - ln_gamma_unchecked(row.sum());
            for (w, &l) in row.iter().enumerate() {
                total += (eta - l) * elb.get(k, w) + ln_gamma_unchecked(l);
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TotState {
    pub lda: LdaState,
    pub rho: Vec<BetaParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    /// Mini-batch size `S`.
    pub batch_size: usize,
    pub tau: f64,
    pub kappa: f64,
    /// Assumed corpus size `D`.
    pub total_docs: usize,
}

impl OnlineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::config("mini-batch size must be at least 1"));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("τ must be finite and ≥ 0, got {}", self.tau)));
        }
        if !(self.kappa > 0.5 && self.kappa <= 1.0) {
            return Err(Error::config(format!("κ must lie in (0.5, 1], got {}", self.kappa)));
        }
        Ok(())
    }

    /// `D / S`
    pub fn scale(&self) -> f64 {
        self.total_docs as f64 / self.batch_size as f64
    }
}

/// `(t + τ)^{−κ}`
pub fn mixing_rate(t: usize, cfg: &OnlineConfig) -> Result<f64> {
    cfg.validate()?;
    if t < 1 {
        return Err(Error::config("online step counter starts at 1"));
    }
    Ok((t as f64 + cfg.tau).powf(-cfg.kappa))
}

/// `λ = η + stats`
pub fn lda_m_step_batch(sstats: &Array2<f64>, eta: f64) -> Array2<f64> {
    sstats.mapv(|s| eta + s)
}

/// `(1−ρ_t) λ + ρ_t (η + (D/S) stats)`
pub fn lda_m_step_online(
    lambda: &Array2<f64>,
    batch_stats: &Array2<f64>,
    eta: f64,
    rho_t: f64,
    cfg: &OnlineConfig,
) -> Array2<f64> {
    let scale = cfg.scale();
    let mut out = lambda.clone();
    ndarray::Zip::from(&mut out).and(batch_stats).for_each(|l, &s| {
        *l = (1.0 - rho_t) * *l + rho_t * (eta + scale * s);
    });
    out
}

/// ToT M-step: one Beta fit per topic.
pub fn tot_m_step(stats: &[TimeSuffStats]) -> Result<Vec<BetaParams>> {
    stats
        .iter()
        .enumerate()
        .map(|(k, s)| {
            solve_beta_from_logstats(s.l()).map_err(|e| match e {
                Error::InfeasibleStats { exp_sum, .. } => Error::InfeasibleStats { topic: Some(k), exp_sum },
                other => other,
            })
        })
        .collect()
}

/// Why the naive online ToT update gave up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum NaiveFailure {
    InfeasibleStats { topic: usize, exp_sum: f64 },
    RhoCapExceeded { topic: usize, rho: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq)]
pub enum NaiveOutcome {
    Updated(Vec<BetaParams>),
    Failed(NaiveFailure),
}

/// Online ToT without any prior: each topic's ρ is refitted from the
/// mini-batch statistics alone and mixed into the running value with
/// weight `rho_mix`.
pub fn tot_online_m_step_naive(rho: &[BetaParams], batch: &[TimeSuffStats], rho_mix: f64) -> NaiveOutcome {
    tot_online_m_step_naive_capped(rho, batch, rho_mix, RHO_CAP)
}

pub fn tot_online_m_step_naive_capped(
    rho: &[BetaParams],
    batch: &[TimeSuffStats],
    rho_mix: f64,
    cap: f64,
) -> NaiveOutcome {
    let mut out = Vec::with_capacity(rho.len());
    for (k, (old, s)) in rho.iter().zip(batch).enumerate() {
        let l = s.l();
        let fit = match solve_beta_from_logstats(l) {
            Ok(p) => p,
            Err(Error::InfeasibleStats { exp_sum, .. }) => {
                return NaiveOutcome::Failed(NaiveFailure::InfeasibleStats { topic: k, exp_sum })
            }
            Err(_) => {
                return NaiveOutcome::Failed(NaiveFailure::InfeasibleStats { topic: k, exp_sum: l[0].exp() + l[1].exp() })
            }
        };
        let mixed = [
            (1.0 - rho_mix) * old.rho[0] + rho_mix * fit.rho[0],
            (1.0 - rho_mix) * old.rho[1] + rho_mix * fit.rho[1],
        ];
        if mixed.iter().any(|&r| !(r <= cap)) {
            return NaiveOutcome::Failed(NaiveFailure::RhoCapExceeded { topic: k, rho: mixed });
        }
        out.push(BetaParams { rho: mixed });
    }
    NaiveOutcome::Updated(out)
}

/// Explicit bound for LDA (and ToT when `rho` is given): document terms
/// summed with the topic-word terms.
pub fn lda_elbo(corpus: &Corpus, state: &LdaState, posteriors: &[DocPosterior], rho: Option<&[BetaParams]>) -> f64 {
    let elb = state.expected_log_beta();
    let mut total = state.global_elbo(&elb);
    for (doc, post) in corpus.documents.iter().zip(posteriors) {
        let bias = rho.map(|r| time_log_density_point(r, doc.log_time()));
        total += doc_elbo_explicit(doc, &elb, &state.hyper.alpha, post, bias.as_deref());
    }
    total
}

/// Document terms of the bound from an explicit `φ`.
pub fn doc_elbo_explicit(
    doc: &crate::corpus::Document,
    elb: &ExpectedLogBeta,
    alpha: &[f64],
    post: &DocPosterior,
    bias: Option<&[f64]>,
) -> f64 {
    let k = alpha.len();
    let elog = expected_log_theta(&post.gamma);
    let mut v = theta_terms(alpha, &post.gamma, &elog);
    for (wi, &w) in doc.words.iter().enumerate() {
        let c = doc.counts[wi] as f64;
        for t in 0..k {
            let p = post.phi[[wi, t]];
            if p > 0.0 {
                let b = bias.map_or(0.0, |b| b[t]);
                v += c * p * (elog[t] + b + elb.get(t, w) - p.ln());
            }
        }
    }
    v
}

/// Fixed-point re-estimation of α (asymmetric) and the symmetric η.
///
/// `elog_theta_sum[k] = Σ_d E[log θ_dk]` over `num_docs` documents.
pub fn update_dirichlet_hyperparams(
    hyper: &DirichletHyper,
    elog_theta_sum: &[f64],
    num_docs: usize,
    elb: &ExpectedLogBeta,
) -> DirichletHyper {
    let alpha = update_alpha(&hyper.alpha, elog_theta_sum, num_docs);
    let mut total = 0.0;
    for k in 0..elb.k() {
        for w in 0..elb.v() {
            total += elb.get(k, w);
        }
    }
    let eta = update_eta(hyper.eta, total, elb.k(), elb.v());
    DirichletHyper { alpha, eta }
}

/// `ψ(α_k) ← ψ(Σα) + mean_d E[log θ_dk]`, iterated to convergence.
pub fn update_alpha(alpha: &[f64], elog_theta_sum: &[f64], num_docs: usize) -> Vec<f64> {
    let n = num_docs.max(1) as f64;
    let mut a = alpha.to_vec();
    for _ in 0..100 {
        let s = digamma_unchecked(a.iter().sum());
        let next: Vec<f64> =
            elog_theta_sum.iter().map(|&e| floor_or(inv_digamma(s + e / n))).collect();
        let diff: f64 = next.iter().zip(&a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        a = next;
        if diff < 1e-12 {
            break;
        }
    }
    a
}

/// Symmetric version over `K·V` components with `total = Σ_kw E[log β_kw]`.
pub fn update_eta(eta: f64, total: f64, k: usize, v: usize) -> f64 {
    let mean = total / (k * v) as f64;
    let mut e = eta;
    for _ in 0..100 {
        let next = floor_or(inv_digamma(digamma_unchecked(v as f64 * e) + mean));
        let diff = (next - e).abs();
        e = next;
        if diff < 1e-12 * e.max(1.0) {
            break;
        }
    }
    e
}

fn floor_or(x: f64) -> f64 {
    if x.is_finite() {
        x.max(HYPER_FLOOR)
    } else {
        HYPER_FLOOR
    }
}
