//! Per-document variational updates shared by every model.
//!
//! All four models alternate `φ`/`γ` (and `ε` for WBToT) with the same
//! inner loop; they differ only in a per-topic additive term on the `φ`
//! logits (ToT, BToT) or in extra timestamp pseudo-tokens (WBToT).
//!
//! `φ_dwk ∝ exp(a_k + Elogβ_kw)` factorizes into a topic part and a word
//! part, so each side is max-shifted separately and the normalizer is a
//! K-term dot product. Words whose shifted normalizer underflows fall back
//! to an explicit log-sum-exp.

use ndarray::Array2;

use crate::corpus::Document;
use crate::numerics::special::{digamma_unchecked, ln_gamma_unchecked};
use crate::numerics::{BetaParams, BetaPriorMoments};

/// Inner-loop defaults: mean |Δγ| below `DEFAULT_E_TOL` or `DEFAULT_E_MAX_ITER` sweeps.
pub const DEFAULT_E_TOL: f64 = 1e-3;
pub const DEFAULT_E_MAX_ITER: usize = 100;

const UNDERFLOW: f64 = 1e-280;

/// `E[log β_kw]` under `Dir(λ_k)`, stored word-major (`w * K + k`).
#[derive(Debug, Clone)]
pub struct ExpectedLogBeta {
    k: usize,
    v: usize,
    elog: Vec<f64>,
    exp_shifted: Vec<f64>,
    word_max: Vec<f64>,
}

impl ExpectedLogBeta {
    pub fn from_lambda(lambda: &Array2<f64>) -> Self {
        let (k, v) = lambda.dim();
        let mut elog = vec![0.0; k * v];
        for (t, row) in lambda.outer_iter().enumerate() {
            let psi_sum = digamma_unchecked(row.sum());
            for (w, &l) in row.iter().enumerate() {
                elog[w * k + t] = digamma_unchecked(l) - psi_sum;
            }
        }
        Self::from_word_major(k, v, elog)
    }

    /// From a K×V matrix of expected log-probabilities.
    pub fn from_matrix(m: &Array2<f64>) -> Self {
        let (k, v) = m.dim();
        let mut elog = vec![0.0; k * v];
        for ((t, w), &x) in m.indexed_iter() {
            elog[w * k + t] = x;
        }
        Self::from_word_major(k, v, elog)
    }

    fn from_word_major(k: usize, v: usize, elog: Vec<f64>) -> Self {
        let mut exp_shifted = vec![0.0; k * v];
        let mut word_max = vec![0.0; v];
        for w in 0..v {
            let col = &elog[w * k..(w + 1) * k];
            let m = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            word_max[w] = m;
            for t in 0..k {
                exp_shifted[w * k + t] = (col[t] - m).exp();
            }
        }
        Self { k, v, elog, exp_shifted, word_max }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn v(&self) -> usize {
        self.v
    }

    #[inline]
    pub fn get(&self, k: usize, w: usize) -> f64 {
        self.elog[w * self.k + k]
    }

    /// K×V matrix form.
    pub fn to_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.k, self.v), |(k, w)| self.get(k, w))
    }
}

/// Variational posterior of one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocPosterior {
    pub gamma: Vec<f64>,
    /// Unique-word × K, rows aligned with `Document::words`.
    pub phi: Array2<f64>,
    pub iterations_used: usize,
}

impl DocPosterior {
    /// `N_dk = Σ_w n_dw φ_dwk`
    pub fn topic_counts(&self, doc: &Document) -> Vec<f64> {
        let k = self.gamma.len();
        let mut n = vec![0.0; k];
        for (row, &c) in self.phi.outer_iter().zip(&doc.counts) {
            for t in 0..k {
                n[t] += c as f64 * row[t];
            }
        }
        n
    }

    /// Posterior mean of θ_d.
    pub fn theta(&self) -> Vec<f64> {
        normalized(&self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WbtotDocPosterior {
    pub doc: DocPosterior,
    pub epsilon: Vec<f64>,
}

pub(crate) fn normalized(x: &[f64]) -> Vec<f64> {
    let s: f64 = x.iter().sum();
    x.iter().map(|v| v / s).collect()
}

/// `E[log θ_k]` under `Dir(γ)`.
pub fn expected_log_theta(gamma: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; gamma.len()];
    expected_log_theta_into(gamma, &mut out);
    out
}

fn expected_log_theta_into(gamma: &[f64], out: &mut [f64]) {
    let s = digamma_unchecked(gamma.iter().sum());
    for (o, &g) in out.iter_mut().zip(gamma) {
        *o = digamma_unchecked(g) - s;
    }
}

/// `(ρ¹−1) log t + (ρ²−1) log(1−t) − log B(ρ)` per topic, with moments in
/// place of point values, scaled by `scale`.
pub fn time_log_density(moments: &[BetaPriorMoments], lt: [f64; 2], scale: f64) -> Vec<f64> {
    moments
        .iter()
        .map(|m| scale * ((m.mean_rho[0] - 1.0) * lt[0] + (m.mean_rho[1] - 1.0) * lt[1] - m.mean_log_b))
        .collect()
}

/// Point-value version of [`time_log_density`] for classic ToT.
pub fn time_log_density_point(rho: &[BetaParams], lt: [f64; 2]) -> Vec<f64> {
    rho.iter().map(|r| (r.rho[0] - 1.0) * lt[0] + (r.rho[1] - 1.0) * lt[1] - r.log_beta()).collect()
}

/// How the timestamp enters a document's updates.
#[derive(Debug, Clone, Copy)]
pub enum TimeTerm<'a> {
    None,
    /// Added to every word's topic logits (ToT, BToT).
    WordBias(&'a [f64]),
    /// `ny` pseudo-tokens with topic log-weights `tb` (WBToT).
    Tokens { ny: f64, tb: &'a [f64] },
}

#[derive(Debug, Clone)]
pub struct EStepOutput {
    pub gamma: Vec<f64>,
    pub phi: Option<Array2<f64>>,
    /// Word part of `γ − α`.
    pub n_dk: Vec<f64>,
    pub epsilon: Option<Vec<f64>>,
    pub iterations: usize,
    /// Document terms of the bound: words (with any time bias), timestamp
    /// pseudo-tokens, and `E[log p(θ|α)] − E[log q(θ|γ)]`.
    pub local_elbo: f64,
}

/// Runs the φ/γ(/ε) alternation for one document.
///
/// When `sstats` is given (K×V, row-major), `n_dw φ_dwk` is added to it.
#[allow(clippy::too_many_arguments)]
pub fn e_step_engine(
    doc: &Document,
    elb: &ExpectedLogBeta,
    alpha: &[f64],
    time: TimeTerm<'_>,
    tol: f64,
    max_iter: usize,
    gamma_init: Option<&[f64]>,
    want_phi: bool,
    sstats: Option<&mut [f64]>,
) -> EStepOutput {
    let k = alpha.len();
    debug_assert_eq!(k, elb.k);
    let nw = doc.words.len();
    // Topic-major copy of the document's columns: `bt[t * nw + wi]`.
    let mut bt = vec![0.0; nw * k];
    for (wi, &w) in doc.words.iter().enumerate() {
        for (t, &x) in elb.exp_shifted[w * k..(w + 1) * k].iter().enumerate() {
            bt[t * nw + wi] = x;
        }
    }
    let cnt: Vec<f64> = doc.counts.iter().map(|&c| c as f64).collect();
    let (bias, tokens): (Option<&[f64]>, Option<(f64, &[f64])>) = match time {
        TimeTerm::None => (None, None),
        TimeTerm::WordBias(bias) => (Some(bias), None),
        TimeTerm::Tokens { ny, tb } => (None, Some((ny, tb))),
    };

    let mut gamma: Vec<f64> = match gamma_init {
        Some(g) => g.to_vec(),
        None => {
            let extra = tokens.map_or(0.0, |(ny, _)| ny);
            let share = (doc.total as f64 + extra) / k as f64;
            alpha.iter().map(|a| a + share).collect()
        }
    };

    let mut elog_prev = vec![0.0; k];
    let mut la = vec![0.0; k];
    let mut a = vec![0.0; k];
    // Per-word normalizer: `z` of the shifted sum, or the log-sum itself
    // (flagged `exact`) when `z` underflows.
    let mut zs = vec![0.0; nw];
    let mut exact = vec![false; nw];
    let mut coef = vec![0.0; nw];
    let mut ca_last = 0.0;
    let mut logits = vec![0.0; k];
    let mut nk = vec![0.0; k];
    let mut eps = vec![0.0; k];
    let mut eps_lse = 0.0;
    let mut new_gamma = vec![0.0; k];
    let mut iterations = 0;

    let max_iter = max_iter.max(1);
    while iterations < max_iter {
        expected_log_theta_into(&gamma, &mut elog_prev);
        for t in 0..k {
            la[t] = elog_prev[t] + bias.map_or(0.0, |b| b[t]);
        }
        let ca = la.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ca_last = ca;
        for t in 0..k {
            a[t] = (la[t] - ca).exp();
        }
        // Word-wise normalizers, coefficients, then `Σ_w coef_w b_wk`; each
        // pass runs along contiguous word rows.
        zs.iter_mut().for_each(|z| *z = 0.0);
        for (t, &at) in a.iter().enumerate() {
            for (z, &y) in zs.iter_mut().zip(&bt[t * nw..(t + 1) * nw]) {
                *z += at * y;
            }
        }
        for ((c, &z), &n) in coef.iter_mut().zip(&zs).zip(&cnt) {
            *c = if z > UNDERFLOW { n / z } else { 0.0 };
        }
        let mut any_exact = false;
        for (e, &z) in exact.iter_mut().zip(&zs) {
            *e = !(z > UNDERFLOW);
            any_exact |= *e;
        }
        for (t, n) in nk.iter_mut().enumerate() {
            *n = dot(&coef, &bt[t * nw..(t + 1) * nw]);
        }
        for (n, &x) in nk.iter_mut().zip(&a) {
            *n *= x;
        }
        if any_exact {
            for wi in (0..nw).filter(|&wi| exact[wi]) {
                let w = doc.words[wi];
                let l = word_lse(&la, elb, w);
                zs[wi] = l;
                for t in 0..k {
                    nk[t] += cnt[wi] * (la[t] + elb.get(t, w) - l).exp();
                }
            }
        }
        if let Some((_, tb)) = tokens {
            for t in 0..k {
                logits[t] = elog_prev[t] + tb[t];
            }
            eps_lse = crate::numerics::log_sum_exp(&logits);
            for t in 0..k {
                eps[t] = (logits[t] - eps_lse).exp();
            }
        }
        let mut change = 0.0;
        for t in 0..k {
            let mut g = alpha[t] + nk[t];
            if let Some((ny, _)) = tokens {
                g += ny * eps[t];
            }
            change += (g - gamma[t]).abs();
            new_gamma[t] = g;
        }
        std::mem::swap(&mut gamma, &mut new_gamma);
        iterations += 1;
        if change / (k as f64) < tol {
            break;
        }
    }

    let elog = expected_log_theta(&gamma);
    let mut local = 0.0;
    let lse: Vec<f64> = (0..nw)
        .map(|wi| if exact[wi] { zs[wi] } else { ca_last + elb.word_max[doc.words[wi]] + zs[wi].ln() })
        .collect();
    for wi in 0..nw {
        local += cnt[wi] * lse[wi];
    }
    for t in 0..k {
        local += nk[t] * (elog[t] - elog_prev[t]);
    }
    if let Some((ny, _)) = tokens {
        let mut s = eps_lse;
        for t in 0..k {
            s += eps[t] * (elog[t] - elog_prev[t]);
        }
        local += ny * s;
    }
    local += theta_terms(alpha, &gamma, &elog);

    let need_phi = want_phi || sstats.is_some();
    let mut phi_out = None;
    if need_phi {
        let mut phi = Array2::zeros((nw, k));
        for wi in 0..nw {
            let w = doc.words[wi];
            if !exact[wi] {
                let z = zs[wi];
                for t in 0..k {
                    phi[[wi, t]] = a[t] * bt[t * nw + wi] / z;
                }
            } else {
                for t in 0..k {
                    phi[[wi, t]] = (la[t] + elb.get(t, w) - lse[wi]).exp();
                }
            }
        }
        if let Some(ss) = sstats {
            let v = elb.v;
            for wi in 0..nw {
                let w = doc.words[wi];
                for t in 0..k {
                    ss[t * v + w] += cnt[wi] * phi[[wi, t]];
                }
            }
        }
        if want_phi {
            phi_out = Some(phi);
        }
    }

    EStepOutput {
        gamma,
        phi: phi_out,
        n_dk: nk,
        epsilon: tokens.map(|_| eps),
        iterations,
        local_elbo: local,
    }
}

/// Dot product with four partial sums.
fn dot(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (xc, yc) = (x.chunks_exact(4), y.chunks_exact(4));
    let tail: f64 = xc.remainder().iter().zip(yc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in xc.zip(yc) {
        for i in 0..4 {
            acc[i] += a[i] * b[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn word_lse(la: &[f64], elb: &ExpectedLogBeta, w: usize) -> f64 {
    let k = la.len();
    let mut m = f64::NEG_INFINITY;
    for t in 0..k {
        m = m.max(la[t] + elb.get(t, w));
    }
    let s: f64 = (0..k).map(|t| (la[t] + elb.get(t, w) - m).exp()).sum();
    m + s.ln()
}

/// `E[log p(θ|α)] − E[log q(θ|γ)]`
pub fn theta_terms(alpha: &[f64], gamma: &[f64], elog_theta: &[f64]) -> f64 {
    let sa: f64 = alpha.iter().sum();
    let sg: f64 = gamma.iter().sum();
    let mut v = ln_gamma_unchecked(sa) - ln_gamma_unchecked(sg);
    for t in 0..alpha.len() {
        v += ln_gamma_unchecked(gamma[t]) - ln_gamma_unchecked(alpha[t]) + (alpha[t] - gamma[t]) * elog_theta[t];
    }
    v
}

fn into_posterior(out: EStepOutput) -> DocPosterior {
    DocPosterior { gamma: out.gamma, phi: out.phi.expect("phi requested"), iterations_used: out.iterations }
}

/// Standard VB LDA document update.
pub fn lda_e_step(doc: &Document, elb: &ExpectedLogBeta, alpha: &[f64], tol: f64, max_iter: usize) -> DocPosterior {
    into_posterior(e_step_engine(doc, elb, alpha, TimeTerm::None, tol, max_iter, None, true, None))
}

/// ToT document update with point-valued Beta parameters.
pub fn tot_e_step(
    doc: &Document,
    elb: &ExpectedLogBeta,
    alpha: &[f64],
    rho: &[BetaParams],
    tol: f64,
    max_iter: usize,
) -> DocPosterior {
    let bias = time_log_density_point(rho, doc.log_time());
    into_posterior(e_step_engine(doc, elb, alpha, TimeTerm::WordBias(&bias), tol, max_iter, None, true, None))
}

/// BToT document update; `delta` scales the time term (1 for plain BToT).
#[allow(clippy::too_many_arguments)]
pub fn btot_e_step(
    doc: &Document,
    elb: &ExpectedLogBeta,
    alpha: &[f64],
    moments: &[BetaPriorMoments],
    delta: f64,
    tol: f64,
    max_iter: usize,
) -> DocPosterior {
    let bias = time_log_density(moments, doc.log_time(), delta);
    into_posterior(e_step_engine(doc, elb, alpha, TimeTerm::WordBias(&bias), tol, max_iter, None, true, None))
}

/// WBToT document update: LDA-form `φ`, timestamp attributions `ε`, and
/// `γ = α + Σ_w n_dw φ_dw + ny ε`.
#[allow(clippy::too_many_arguments)]
pub fn wbtot_e_step(
    doc: &Document,
    elb: &ExpectedLogBeta,
    alpha: &[f64],
    moments: &[BetaPriorMoments],
    ny: f64,
    tol: f64,
    max_iter: usize,
) -> WbtotDocPosterior {
    let tb = time_log_density(moments, doc.log_time(), 1.0);
    let out = e_step_engine(doc, elb, alpha, TimeTerm::Tokens { ny, tb: &tb }, tol, max_iter, None, true, None);
    let epsilon = out.epsilon.clone().expect("epsilon computed");
    WbtotDocPosterior { doc: into_posterior(out), epsilon }
}
