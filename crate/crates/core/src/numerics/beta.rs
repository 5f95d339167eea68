//! Beta distribution in the `(ρ¹, ρ²)` parameterization and the inverse
//! map from expected log-statistics back to parameters.

use serde::{Deserialize, Serialize};

use super::special::{digamma_unchecked, ln_gamma_unchecked, trigamma_unchecked};
use crate::error::{Error, Result};

/// Slack required by [`solve_beta_from_logstats`]: statistics with
/// `exp(l¹) + exp(l²) >= 1 - FEAS_EPS` are rejected.
pub const FEAS_EPS: f64 = 1e-8;

/// Residual (max-norm) at which the digamma system counts as solved.
pub const SOLVE_TOL: f64 = 1e-10;

const MAX_NEWTON_ITERS: usize = 200;

/// Beta distribution parameters `ρ = (ρ¹, ρ²)`, both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub rho: [f64; 2],
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::domain(format!("Beta parameters must be finite and positive, got ({a}, {b})")));
        }
        Ok(Self { rho: [a, b] })
    }

    pub fn uniform() -> Self {
        Self { rho: [1.0, 1.0] }
    }

    pub fn a(&self) -> f64 {
        self.rho[0]
    }

    pub fn b(&self) -> f64 {
        self.rho[1]
    }

    pub fn mean(&self) -> f64 {
        self.rho[0] / (self.rho[0] + self.rho[1])
    }

    /// `(E[log t], E[log(1-t)])` under this Beta.
    pub fn expected_log_stats(&self) -> [f64; 2] {
        let s = digamma_unchecked(self.rho[0] + self.rho[1]);
        [digamma_unchecked(self.rho[0]) - s, digamma_unchecked(self.rho[1]) - s]
    }

    pub fn log_beta(&self) -> f64 {
        log_beta_unchecked(self.rho)
    }
}

#[inline]
pub(crate) fn log_beta_unchecked(rho: [f64; 2]) -> f64 {
    ln_gamma_unchecked(rho[0]) + ln_gamma_unchecked(rho[1]) - ln_gamma_unchecked(rho[0] + rho[1])
}

/// log B(ρ¹, ρ²).
pub fn log_beta_fn(rho: [f64; 2]) -> Result<f64> {
    let p = BetaParams::new(rho[0], rho[1])?;
    Ok(p.log_beta())
}

/// Log density of the Beta distribution at `t ∈ (0, 1)`.
pub fn beta_log_pdf(t: f64, rho: &BetaParams) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::domain(format!("Beta density requires 0 < t < 1, got {t}")));
    }
    Ok((rho.rho[0] - 1.0) * t.ln() + (rho.rho[1] - 1.0) * (1.0 - t).ln() - rho.log_beta())
}

/// `(log t, log(1 - t))`.
#[inline]
pub fn log_time_pair(t: f64) -> [f64; 2] {
    [t.ln(), (-t).ln_1p()]
}

/// Solves `ψ(ρ¹) - ψ(ρ¹+ρ²) = l¹`, `ψ(ρ²) - ψ(ρ¹+ρ²) = l²` for ρ.
///
/// Requires `exp(l¹) + exp(l²) < 1 - FEAS_EPS`; anything closer to the
/// boundary is reported as [`Error::InfeasibleStats`].
pub fn solve_beta_from_logstats(l: [f64; 2]) -> Result<BetaParams> {
    solve_beta_with_slack(l, FEAS_EPS)
}

/// Same as [`solve_beta_from_logstats`] with an explicit feasibility slack.
/// A slack of zero only demands strict feasibility.
pub fn solve_beta_with_slack(l: [f64; 2], slack: f64) -> Result<BetaParams> {
    if !(l[0].is_finite() && l[1].is_finite()) {
        return Err(Error::InfeasibleStats { topic: None, exp_sum: f64::NAN });
    }
    let e1 = l[0].exp();
    let e2 = l[1].exp();
    let exp_sum = e1 + e2;
    let gap = 1.0 - exp_sum;
    if !(gap > slack) || gap <= 0.0 {
        return Err(Error::InfeasibleStats { topic: None, exp_sum });
    }

    // Mean proxy from the exponentiated statistics; the concentration
    // follows from exp-sum ≈ 1 - 1/(2s) for large s.
    let mean = e1 / exp_sum;
    let conc = (0.5 / gap).max(1e-3);
    let mut x = [(mean * conc).max(1e-300).ln(), ((1.0 - mean) * conc).max(1e-300).ln()];

    let residual = |x: &[f64; 2]| -> [f64; 2] {
        let a = x[0].exp();
        let b = x[1].exp();
        let s = digamma_unchecked(a + b);
        [digamma_unchecked(a) - s - l[0], digamma_unchecked(b) - s - l[1]]
    };
    let norm = |r: &[f64; 2]| r[0].abs().max(r[1].abs());

    let mut r = residual(&x);
    let mut rn = norm(&r);
    let mut converged_at = None;
    for iter in 0..MAX_NEWTON_ITERS {
        if rn < SOLVE_TOL && converged_at.is_none() {
            converged_at = Some(iter);
        }
        // A few polishing steps past the tolerance; stop when they no
        // longer help.
        if let Some(it) = converged_at {
            if iter >= it + 3 || rn < 1e-15 {
                break;
            }
        }
        let a = x[0].exp();
        let b = x[1].exp();
        let ts = trigamma_unchecked(a + b);
        // Jacobian w.r.t. log-parameters.
        let j11 = (trigamma_unchecked(a) - ts) * a;
        let j12 = -ts * b;
        let j21 = -ts * a;
        let j22 = (trigamma_unchecked(b) - ts) * b;
        let det = j11 * j22 - j12 * j21;
        if !(det.abs() > 0.0) || !det.is_finite() {
            break;
        }
        let mut dx = [-(j22 * r[0] - j12 * r[1]) / det, -(-j21 * r[0] + j11 * r[1]) / det];
        let big = dx[0].abs().max(dx[1].abs());
        if big > 2.0 {
            dx = [dx[0] * 2.0 / big, dx[1] * 2.0 / big];
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = [x[0] + t * dx[0], x[1] + t * dx[1]];
            let rc = residual(&cand);
            let rcn = norm(&rc);
            if rcn.is_finite() && rcn < rn {
                x = cand;
                r = rc;
                rn = rcn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    if rn < SOLVE_TOL {
        BetaParams::new(x[0].exp(), x[1].exp())
    } else {
        Err(Error::domain(format!(
            "Beta log-statistics solver stalled at residual {rn:e} for l = ({}, {})",
            l[0], l[1]
        )))
    }
}
