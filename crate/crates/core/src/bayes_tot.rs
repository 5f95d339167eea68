//! BToT and WBToT: topics over time with a Beta-prior on each topic's
//! Beta parameters, plus the δ-balanced BToT variant.

use serde::{Deserialize, Serialize};

use crate::baselines::{LdaState, OnlineConfig};
use crate::error::{Error, Result};
use crate::numerics::{
    beta_prior_moments, laplace, BetaPriorMoments, BetaPriorParams, BetaPriorPosterior, MomentMethod, TimeSuffStats,
};

/// How many timestamp pseudo-tokens a document of length `N_d` carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum NyScheme {
    Constant(f64),
    Fraction(f64),
    Sqrt,
}

impl NyScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NyScheme::Constant(c) if !(c > 0.0 && c.is_finite()) => {
                Err(Error::config(format!("constant ny must be positive, got {c}")))
            }
            NyScheme::Fraction(d) if !(d > 0.0 && d.is_finite()) => {
                Err(Error::config(format!("ny fraction must be positive, got {d}")))
            }
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for NyScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parse = |v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::config(format!("invalid ny value '{v}'")))
        };
        let scheme = if s == "sqrt" {
            NyScheme::Sqrt
        } else if let Some(v) = s.strip_prefix("const:") {
            NyScheme::Constant(parse(v)?)
        } else if let Some(v) = s.strip_prefix("frac:") {
            NyScheme::Fraction(parse(v)?)
        } else {
            return Err(Error::config(format!("invalid ny scheme '{s}' (expected const:<c>, frac:<d> or sqrt)")));
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

impl std::fmt::Display for NyScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NyScheme::Constant(c) => write!(f, "const:{c}"),
            NyScheme::Fraction(d) => write!(f, "frac:{d}"),
            NyScheme::Sqrt => f.write_str("sqrt"),
        }
    }
}

/// `n_d^{(y)}` for a document with `n_d` tokens.
pub fn ny_weight(n_d: u32, scheme: NyScheme) -> Result<f64> {
    if n_d < 1 {
        return Err(Error::config("documents must hold at least one token"));
    }
    let w = match scheme {
        NyScheme::Constant(c) => c,
        NyScheme::Fraction(d) => d * n_d as f64,
        NyScheme::Sqrt => (n_d as f64).sqrt(),
    };
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::config(format!("ny weight must be positive, got {w} from {scheme}")));
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtotState {
    pub lda: LdaState,
    pub prior: BetaPriorParams,
    pub posteriors: Vec<BetaPriorPosterior>,
    /// Cached per-topic moments, consistent with `posteriors` under `method`.
    pub moments: Vec<BetaPriorMoments>,
    pub method: MomentMethod,
    /// Time-modality weight; 1 is plain BToT.
    pub delta: f64,
}

impl BtotState {
    /// Starts every topic at the prior.
    pub fn new(lda: LdaState, prior: BetaPriorParams, method: MomentMethod, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        let k = lda.k();
        let mut s = Self {
            lda,
            prior,
            posteriors: vec![prior.as_posterior(); k],
            moments: Vec::new(),
            method,
            delta,
        };
        s.refresh_moments()?;
        Ok(s)
    }

    pub fn set_posteriors(&mut self, posteriors: Vec<BetaPriorPosterior>) -> Result<()> {
        self.posteriors = posteriors;
        self.refresh_moments()
    }

    pub fn refresh_moments(&mut self) -> Result<()> {
        self.moments = self
            .posteriors
            .iter()
            .enumerate()
            .map(|(k, p)| {
                beta_prior_moments(p, self.method).map_err(|e| match e {
                    Error::InfeasibleStats { exp_sum, .. } => Error::InfeasibleStats { topic: Some(k), exp_sum },
                    other => other,
                })
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Topic-level time terms of the bound:
    /// `E[log p(ρ|ν,χ)] − E[log q(ρ|μ,ψ)]` per topic, summed.
    pub fn time_global_elbo(&self) -> Result<f64> {
        time_global_elbo(&self.prior, &self.posteriors, &self.moments)
    }

    /// `Σ_k log f(μ_k, ψ_k)`-type normalizer terms contained in
    /// [`Self::time_global_elbo`].
    pub fn posterior_log_norm_sum(&self) -> f64 {
        self.moments.iter().map(|m| m.log_norm).sum()
    }
}

/// `log f(ν, χ)` is approximated by Laplace, so the constant is the same
/// whichever moment method the posteriors use.
pub fn time_global_elbo(
    prior: &BetaPriorParams,
    posteriors: &[BetaPriorPosterior],
    moments: &[BetaPriorMoments],
) -> Result<f64> {
    let prior_log_norm = laplace(&prior.as_posterior())?.log_norm;
    let mut total = 0.0;
    for (p, m) in posteriors.iter().zip(moments) {
        total += m.mean_rho[0] * (prior.nu * prior.chi[0] - p.mu * p.psi[0])
            + m.mean_rho[1] * (prior.nu * prior.chi[1] - p.mu * p.psi[1])
            - m.mean_log_b * (prior.nu - p.mu)
            - prior_log_norm
            + m.log_norm;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WbtotState {
    pub btot: BtotState,
    pub ny: NyScheme,
}

impl WbtotState {
    pub fn new(lda: LdaState, prior: BetaPriorParams, method: MomentMethod, ny: NyScheme) -> Result<Self> {
        ny.validate()?;
        Ok(Self { btot: BtotState::new(lda, prior, method, 1.0)?, ny })
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::config(format!("δ must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

/// `μ = ν + N`, `ψ = (N l + ν χ) / μ` per topic.
pub fn btot_m_step_batch(stats: &[TimeSuffStats], prior: &BetaPriorParams) -> Vec<BetaPriorPosterior> {
    stats
        .iter()
        .map(|s| {
            let mu = prior.nu + s.n;
            BetaPriorPosterior {
                mu,
                psi: [(s.sum[0] + prior.nu * prior.chi[0]) / mu, (s.sum[1] + prior.nu * prior.chi[1]) / mu],
            }
        })
        .collect()
}

/// Natural-parameter blend with the rescaled mini-batch posterior.
pub fn btot_m_step_online(
    current: &[BetaPriorPosterior],
    batch: &[TimeSuffStats],
    prior: &BetaPriorParams,
    rho_t: f64,
    cfg: &OnlineConfig,
) -> Vec<BetaPriorPosterior> {
    let scale = cfg.scale();
    current
        .iter()
        .zip(batch)
        .map(|(p, s)| {
            let (mu, psi_nat) = p.natural();
            let mu_new = (1.0 - rho_t) * mu + rho_t * (prior.nu + scale * s.n);
            let nat = [
                (1.0 - rho_t) * psi_nat[0] + rho_t * (prior.nu * prior.chi[0] + scale * s.sum[0]),
                (1.0 - rho_t) * psi_nat[1] + rho_t * (prior.nu * prior.chi[1] + scale * s.sum[1]),
            ];
            BetaPriorPosterior::from_natural(mu_new, nat)
        })
        .collect()
}

/// WBToT uses the BToT updates with `n^{(y)} ε_dk` in place of `N_dk`;
/// the statistics passed here are already weighted that way.
pub fn wbtot_m_step_batch(weighted: &[TimeSuffStats], prior: &BetaPriorParams) -> Vec<BetaPriorPosterior> {
    btot_m_step_batch(weighted, prior)
}

pub fn wbtot_m_step_online(
    current: &[BetaPriorPosterior],
    weighted: &[TimeSuffStats],
    prior: &BetaPriorParams,
    rho_t: f64,
    cfg: &OnlineConfig,
) -> Vec<BetaPriorPosterior> {
    btot_m_step_online(current, weighted, prior, rho_t, cfg)
}

/// Scales every `N_dk` entering the time updates by `δ`.
pub fn btot_delta_variant(stats: &[TimeSuffStats], delta: f64) -> Result<Vec<TimeSuffStats>> {
    check_delta(delta)?;
    Ok(stats.iter().map(|s| s.scaled(delta)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior() -> BetaPriorParams {
        let l = 0.45f64.ln();
        BetaPriorParams::new(0.02, [l, 2.0 * l]).unwrap()
    }

    #[test]
    fn ny_examples() {
        assert_eq!(ny_weight(100, NyScheme::Fraction(0.1)).unwrap(), 10.0);
        assert_eq!(ny_weight(81, NyScheme::Sqrt).unwrap(), 9.0);
        assert_eq!(ny_weight(7, NyScheme::Constant(1.0)).unwrap(), 1.0);
        assert!(ny_weight(7, NyScheme::Constant(0.0)).is_err());
        assert!(ny_weight(0, NyScheme::Sqrt).is_err());
    }

    #[test]
    fn ny_parse_round_trip() {
        for s in ["sqrt", "const:1", "frac:0.1"] {
            let n: NyScheme = s.parse().unwrap();
            assert_eq!(n.to_string(), s);
        }
        assert!("frac:-1".parse::<NyScheme>().is_err());
        assert!("log".parse::<NyScheme>().is_err());
    }

    #[test]
    fn batch_m_step_examples() {
        let p = prior();
        let empty = btot_m_step_batch(&[TimeSuffStats::default()], &p);
        assert_eq!(empty[0].mu, p.nu);
        assert_eq!(empty[0].psi, p.chi);

        let same = btot_m_step_batch(&[TimeSuffStats::new(p.nu, p.chi)], &p);
        assert!((same[0].mu - 2.0 * p.nu).abs() < 1e-15);
        assert!((same[0].psi[0] - p.chi[0]).abs() < 1e-15 && (same[0].psi[1] - p.chi[1]).abs() < 1e-15);

        let got = btot_m_step_batch(&[TimeSuffStats::new(100.0, [-1.0, -0.5])], &p);
        // Weighted average of (-1, -0.5) with weight 100 and χ with weight ν.
        let w = 100.0 / 100.02;
        let want = [-w + (1.0 - w) * p.chi[0], w * -0.5 + (1.0 - w) * p.chi[1]];
        assert!((got[0].psi[0] - want[0]).abs() < 1e-14 && (got[0].psi[1] - want[1]).abs() < 1e-14);
        assert!((got[0].mu - 100.02).abs() < 1e-12);
    }

    #[test]
    fn online_m_step_examples() {
        let p = prior();
        let cfg = OnlineConfig { batch_size: 4, tau: 0.0, kappa: 1.0, total_docs: 4 };
        let stats = [TimeSuffStats::new(3.0, [-1.2, -0.4]), TimeSuffStats::default()];
        let start = vec![BetaPriorPosterior { mu: 50.0, psi: [-0.9, -0.6] }; 2];
        let full = btot_m_step_online(&start, &stats, &p, 1.0, &cfg);
        let batch = btot_m_step_batch(&stats, &p);
        for (a, b) in full.iter().zip(&batch) {
            assert!((a.mu - b.mu).abs() < 1e-12);
            assert!((a.psi[0] - b.psi[0]).abs() < 1e-12 && (a.psi[1] - b.psi[1]).abs() < 1e-12);
        }
        // Starved topic collapses to the prior at ρ_t = 1.
        assert!((full[1].mu - p.nu).abs() < 1e-15);

        // ρ_t = 0.5 by hand: μ' = 0.5·50 + 0.5·(ν + 3), ψ'¹ = 0.5·(50·−0.9) + 0.5·(νχ¹ + 3·−1.2)
        let half = btot_m_step_online(&start, &stats, &p, 0.5, &cfg);
        let mu = 25.0 + 0.5 * (p.nu + 3.0);
        let nat1 = -22.5 + 0.5 * (p.nu * p.chi[0] - 3.6);
        assert!((half[0].mu - mu).abs() < 1e-12);
        assert!((half[0].psi[0] - nat1 / mu).abs() < 1e-12);
    }

    #[test]
    fn delta_variant_examples() {
        let stats = [TimeSuffStats::new(10.0, [-1.0, -0.7])];
        assert_eq!(btot_delta_variant(&stats, 1.0).unwrap(), stats.to_vec());
        let half = btot_delta_variant(&stats, 0.5).unwrap();
        assert_eq!(half[0].n, 5.0);
        assert_eq!(half[0].l(), stats[0].l());
        assert!(btot_delta_variant(&stats, 0.0).is_err());
        assert!(btot_delta_variant(&stats, 1.5).is_err());
    }

    #[test]
    fn delta_absorbed_into_prior_strength() {
        // ψ from (δN, l) with prior (ν, χ) equals ψ from (N, l) with prior (ν/δ, χ).
        let p = prior();
        let delta = 0.3;
        let stats = [TimeSuffStats::new(40.0, [-1.1, -0.45])];
        let a = btot_m_step_batch(&btot_delta_variant(&stats, delta).unwrap(), &p);
        let rescaled = BetaPriorParams::new(p.nu / delta, p.chi).unwrap();
        let b = btot_m_step_batch(&stats, &rescaled);
        assert!((a[0].psi[0] - b[0].psi[0]).abs() < 1e-14 && (a[0].psi[1] - b[0].psi[1]).abs() < 1e-14);
        assert!((a[0].mu - delta * b[0].mu).abs() < 1e-12);
    }

    #[test]
    fn wbtot_single_observation_posterior() {
        let p = prior();
        let lt = [0.3f64.ln(), 0.7f64.ln()];
        let mut s = TimeSuffStats::default();
        s.add(1.0, lt);
        let post = wbtot_m_step_batch(&[s], &p);
        assert!((post[0].mu - (p.nu + 1.0)).abs() < 1e-15);
        for i in 0..2 {
            assert!((post[0].psi[i] - (p.nu * p.chi[i] + lt[i]) / (p.nu + 1.0)).abs() < 1e-15);
        }
        assert!(post[0].satisfies_holder(&p));
    }

    #[test]
    fn two_online_steps_compose() {
        // Identical batches: two steps equal one with weight 1 − (1−ρ1)(1−ρ2).
        let p = prior();
        let cfg = OnlineConfig { batch_size: 10, tau: 0.0, kappa: 1.0, total_docs: 100 };
        let stats = [TimeSuffStats::new(7.0, [-0.8, -0.9])];
        let start = vec![BetaPriorPosterior { mu: 3.0, psi: [-1.5, -0.4] }];
        let (r1, r2) = (0.6, 0.25);
        let two = btot_m_step_online(&btot_m_step_online(&start, &stats, &p, r1, &cfg), &stats, &p, r2, &cfg);
        let one = btot_m_step_online(&start, &stats, &p, 1.0 - (1.0 - r1) * (1.0 - r2), &cfg);
        assert!((two[0].mu - one[0].mu).abs() < 1e-12);
        assert!((two[0].psi[0] - one[0].psi[0]).abs() < 1e-12 && (two[0].psi[1] - one[0].psi[1]).abs() < 1e-12);
    }
}
