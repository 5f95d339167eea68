//! The conjugate prior to the Beta distribution,
//! `p(ρ | ν, χ) = f(ν, χ) exp[ν (ρ·χ − log B(ρ))]`, its variational
//! posterior, and approximations to its moments.

use serde::{Deserialize, Serialize};

use super::beta::{log_beta_unchecked, solve_beta_with_slack, BetaParams};
use super::quadrature::integrate_beta_prior;
use super::special::trigamma_unchecked;
use crate::error::{Error, Result};

/// Hyperparameters `(ν, χ)` of the Beta-prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPriorParams {
    pub nu: f64,
    pub chi: [f64; 2],
}

impl BetaPriorParams {
    pub fn new(nu: f64, chi: [f64; 2]) -> Result<Self> {
        if !check_beta_prior_integrable(nu, chi) {
            return Err(Error::config(format!(
                "Beta-prior is not integrable: need ν > 0 and exp(χ1) + exp(χ2) < 1, got ν = {nu}, χ = ({}, {})",
                chi[0], chi[1]
            )));
        }
        Ok(Self { nu, chi })
    }

    /// `ν = 1/K`, `χ = log 0.45 · (1, 2)`.
    pub fn default_for_k(k: usize) -> Self {
        let l = 0.45f64.ln();
        Self { nu: 1.0 / k.max(1) as f64, chi: [l, 2.0 * l] }
    }

    pub fn exp_sum(&self) -> f64 {
        self.chi[0].exp() + self.chi[1].exp()
    }

    /// The prior viewed as a posterior with no observations.
    pub fn as_posterior(&self) -> BetaPriorPosterior {
        BetaPriorPosterior { mu: self.nu, psi: self.chi }
    }
}

/// True iff ν > 0 and exp(χ¹) + exp(χ²) < 1.
pub fn check_beta_prior_integrable(nu: f64, chi: [f64; 2]) -> bool {
    nu > 0.0 && nu.is_finite() && chi[0].is_finite() && chi[1].is_finite() && chi[0].exp() + chi[1].exp() < 1.0
}

/// Per-topic variational posterior `(μ, ψ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPriorPosterior {
    pub mu: f64,
    pub psi: [f64; 2],
}

impl BetaPriorPosterior {
    /// Natural coordinates `(μ′, ψ′) = (μ, μψ)`.
    pub fn natural(&self) -> (f64, [f64; 2]) {
        (self.mu, [self.mu * self.psi[0], self.mu * self.psi[1]])
    }

    pub fn from_natural(mu: f64, psi_nat: [f64; 2]) -> Self {
        Self { mu, psi: [psi_nat[0] / mu, psi_nat[1] / mu] }
    }

    pub fn exp_sum(&self) -> f64 {
        self.psi[0].exp() + self.psi[1].exp()
    }

    /// Checks `exp(ψ¹)+exp(ψ²) ≤ (exp(χ¹)+exp(χ²))^{ν/μ}`. The bound is
    /// attained exactly by a data-free posterior, so equality up to
    /// rounding is accepted.
    pub fn satisfies_holder(&self, prior: &BetaPriorParams) -> bool {
        let bound = prior.exp_sum().powf(prior.nu / self.mu);
        let lhs = self.exp_sum();
        self.mu.is_finite() && self.mu >= prior.nu * (1.0 - 1e-12) && lhs < 1.0 && lhs <= bound * (1.0 + 1e-12)
    }
}

/// Weighted count and average log-timestamps of one topic.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeSuffStats {
    pub n: f64,
    /// `Σ w · (log t, log(1−t))`
    pub sum: [f64; 2],
}

impl TimeSuffStats {
    pub fn new(n: f64, l: [f64; 2]) -> Self {
        Self { n, sum: [n * l[0], n * l[1]] }
    }

    pub fn add(&mut self, weight: f64, lt: [f64; 2]) {
        self.n += weight;
        self.sum[0] += weight * lt[0];
        self.sum[1] += weight * lt[1];
    }

    pub fn merge(&mut self, other: &TimeSuffStats) {
        self.n += other.n;
        self.sum[0] += other.sum[0];
        self.sum[1] += other.sum[1];
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { n: self.n * c, sum: [self.sum[0] * c, self.sum[1] * c] }
    }

    /// Average log-timestamps; zero when the topic has no mass.
    pub fn l(&self) -> [f64; 2] {
        if self.n > 0.0 {
            [self.sum[0] / self.n, self.sum[1] / self.n]
        } else {
            [0.0, 0.0]
        }
    }
}

/// How the expectations under the Beta-prior posterior are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentMethod {
    #[default]
    Laplace,
    Quadrature,
}

impl std::str::FromStr for MomentMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "laplace" => Ok(Self::Laplace),
            "quadrature" => Ok(Self::Quadrature),
            other => Err(Error::config(format!("unknown moment method '{other}' (expected laplace or quadrature)"))),
        }
    }
}

impl std::fmt::Display for MomentMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Laplace => "laplace",
            Self::Quadrature => "quadrature",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceResult {
    pub mode: BetaParams,
    pub log_b_at_mode: f64,
    /// Approximates `log f(μ, ψ)⁻¹`.
    pub log_norm: f64,
    /// `log |det ω_ij|`
    pub hessian_logdet: f64,
    pub hessian: [[f64; 2]; 2],
}

/// Expectations `⟨ρ⟩`, `⟨log B(ρ)⟩` and `log f(μ, ψ)⁻¹`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPriorMoments {
    pub mean_rho: [f64; 2],
    pub mean_log_b: f64,
    pub log_norm: f64,
}

impl BetaPriorMoments {
    /// Point-mass moments at `ρ`, i.e. what classic ToT uses.
    pub fn point(rho: &BetaParams) -> Self {
        Self { mean_rho: rho.rho, mean_log_b: rho.log_beta(), log_norm: 0.0 }
    }

    pub fn uniform() -> Self {
        Self::point(&BetaParams::uniform())
    }
}

fn validate(post: &BetaPriorPosterior) -> Result<()> {
    if !(post.mu > 0.0 && post.mu.is_finite()) {
        return Err(Error::domain(format!("Beta-prior posterior needs μ > 0, got {}", post.mu)));
    }
    Ok(())
}

/// Hessian of `ω(ρ) = ρ·ψ − log B(ρ)`.
pub fn omega_hessian(rho: [f64; 2]) -> [[f64; 2]; 2] {
    let ts = trigamma_unchecked(rho[0] + rho[1]);
    [[ts - trigamma_unchecked(rho[0]), ts], [ts, ts - trigamma_unchecked(rho[1])]]
}

/// Leading-order Laplace expansion of the posterior around its mode.
pub fn laplace(post: &BetaPriorPosterior) -> Result<LaplaceResult> {
    validate(post)?;
    let mode = solve_beta_with_slack(post.psi, 0.0)?;
    let rho = mode.rho;
    let log_b = log_beta_unchecked(rho);
    let omega = rho[0] * post.psi[0] + rho[1] * post.psi[1] - log_b;
    let h = omega_hessian(rho);
    let ts = h[0][1];
    // det ω = (ψ'(ρ¹) - ψ'(s))(ψ'(ρ²) - ψ'(s)) - ψ'(s)²
    let det = (-h[0][0]) * (-h[1][1]) - ts * ts;
    if !(det > 0.0) {
        return Err(Error::domain(format!("Laplace Hessian not negative definite at ρ = {rho:?}")));
    }
    let hessian_logdet = det.ln();
    let log_norm = post.mu * omega + (2.0 * std::f64::consts::PI).ln() - post.mu.ln() - 0.5 * hessian_logdet;
    Ok(LaplaceResult { mode, log_b_at_mode: log_b, log_norm, hessian_logdet, hessian: h })
}

/// Moments of the posterior under the chosen method.
pub fn beta_prior_moments(post: &BetaPriorPosterior, method: MomentMethod) -> Result<BetaPriorMoments> {
    let lap = laplace(post)?;
    match method {
        MomentMethod::Laplace => {
            Ok(BetaPriorMoments { mean_rho: lap.mode.rho, mean_log_b: lap.log_b_at_mode, log_norm: lap.log_norm })
        }
        MomentMethod::Quadrature => {
            let q = integrate_beta_prior(post.mu, post.psi, lap.mode.rho, lap.hessian)?;
            Ok(BetaPriorMoments { mean_rho: q.mean_rho, mean_log_b: q.mean_log_b, log_norm: q.log_norm })
        }
    }
}

/// Beta parameters from the prior-blended statistics `(N l + ν χ)/(N + ν)`.
pub fn rho_regularized(stats: &TimeSuffStats, prior: &BetaPriorParams) -> Result<BetaParams> {
    let denom = stats.n + prior.nu;
    let l = [
        (stats.sum[0] + prior.nu * prior.chi[0]) / denom,
        (stats.sum[1] + prior.nu * prior.chi[1]) / denom,
    ];
    solve_beta_with_slack(l, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chi_paper() -> [f64; 2] {
        let l = 0.45f64.ln();
        [l, 2.0 * l]
    }

    #[test]
    fn integrability_examples() {
        assert!(check_beta_prior_integrable(0.02, chi_paper()));
        assert!(!check_beta_prior_integrable(1.0, [0.0, 0.0]));
        assert!(!check_beta_prior_integrable(-1.0, chi_paper()));
        assert!(!check_beta_prior_integrable(0.0, chi_paper()));
    }

    #[test]
    fn laplace_mode_at_uniform_stats() {
        for mu in [0.5, 10.0, 1e4] {
            let m = beta_prior_moments(&BetaPriorPosterior { mu, psi: [-1.0, -1.0] }, MomentMethod::Laplace).unwrap();
            assert_abs_diff_eq!(m.mean_rho[0], 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(m.mean_rho[1], 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(m.mean_log_b, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn laplace_log_norm_matches_hand_value() {
        // At ρ0 = (1,1): ω = -2, ψ'(1) = π²/6, ψ'(2) = π²/6 - 1, det = (1)(1) - (π²/6 - 1)².
        let mu = 10.0;
        let lap = laplace(&BetaPriorPosterior { mu, psi: [-1.0, -1.0] }).unwrap();
        let c = std::f64::consts::PI.powi(2) / 6.0 - 1.0;
        let det: f64 = 1.0 - c * c;
        let want = -2.0 * mu + (2.0 * std::f64::consts::PI).ln() - mu.ln() - 0.5 * det.ln();
        assert_abs_diff_eq!(lap.log_norm, want, epsilon = 1e-9);
        assert_abs_diff_eq!(lap.hessian_logdet, det.ln(), epsilon = 1e-9);
    }

    #[test]
    fn quadrature_matches_reference_integral_at_large_mu() {
        // Reference from an independent adaptive cubature in ρ-coordinates.
        let post = BetaPriorPosterior { mu: 1000.0, psi: [-5.0 / 6.0, -5.0 / 6.0] };
        let quad = beta_prior_moments(&post, MomentMethod::Quadrature).unwrap();
        assert_abs_diff_eq!(quad.mean_rho[0], 2.005_540_482_276, epsilon = 1e-8);
        assert_abs_diff_eq!(quad.log_norm, -1_545.143_413_872_811, epsilon = 1e-6);
        // The mode sits O(1/μ) below the mean.
        let lap = beta_prior_moments(&post, MomentMethod::Laplace).unwrap();
        let rel = (quad.mean_rho[0] - lap.mean_rho[0]) / quad.mean_rho[0];
        assert!(rel > 0.0 && rel * post.mu > 1.0 && rel * post.mu < 5.0, "relative gap {rel}");
        assert!((lap.log_norm - quad.log_norm).abs() < 1e-2);
    }

    #[test]
    fn quadrature_shift_at_small_mu_is_pinned() {
        let post = BetaPriorPosterior { mu: 10.0, psi: [-1.0, -1.0] };
        let quad = beta_prior_moments(&post, MomentMethod::Quadrature).unwrap();
        assert_abs_diff_eq!(quad.mean_rho[0], quad.mean_rho[1], epsilon = 1e-9);
        // Regression value from the quadrature oracle.
        assert_abs_diff_eq!(quad.mean_rho[0], 1.259_430_596_915, epsilon = 1e-8);
        assert_abs_diff_eq!(quad.log_norm, -20.109_426_394_134, epsilon = 1e-7);
    }

    #[test]
    fn quadrature_normalizes_integrable_priors() {
        for nu in [0.02, 0.2, 1.0] {
            let post = BetaPriorParams::new(nu, chi_paper()).unwrap().as_posterior();
            let q = beta_prior_moments(&post, MomentMethod::Quadrature).unwrap();
            assert!(q.log_norm.is_finite(), "ν = {nu}");
        }
    }

    #[test]
    fn regularized_examples() {
        let prior = BetaPriorParams::new(1e-10, chi_paper()).unwrap();
        let l = [-1.0, -1.0];
        let rho = rho_regularized(&TimeSuffStats::new(50.0, l), &prior).unwrap();
        assert_abs_diff_eq!(rho.a(), 1.0, epsilon = 1e-8);

        let prior = BetaPriorParams::new(1.0, chi_paper()).unwrap();
        let empty = rho_regularized(&TimeSuffStats::default(), &prior).unwrap();
        let direct = solve_beta_with_slack(chi_paper(), 0.0).unwrap();
        assert_eq!(empty, direct);
    }

    #[test]
    fn regularization_rescues_feasible_peaked_stats() {
        // All 1000 observations at t = 0.7: the unregularized statistics sit
        // on the boundary exp-sum = 1.
        let prior = BetaPriorParams::new(1.0, chi_paper()).unwrap();
        let lt = [0.7f64.ln(), 0.3f64.ln()];
        let stats = TimeSuffStats::new(1000.0, lt);
        assert!(crate::numerics::solve_beta_from_logstats(stats.l()).is_err());
        let rho = rho_regularized(&stats, &prior).unwrap();
        assert!(rho.a().is_finite() && rho.b().is_finite());
        assert!((rho.mean() - 0.7).abs() < 0.01);
    }

    #[test]
    fn holder_bound_on_data_free_posterior_is_tight_but_accepted() {
        let prior = BetaPriorParams::new(0.3, chi_paper()).unwrap();
        assert!(prior.as_posterior().satisfies_holder(&prior));
    }

    #[test]
    fn natural_round_trip() {
        let p = BetaPriorPosterior { mu: 3.5, psi: [-0.7, -1.9] };
        let (m, n) = p.natural();
        let back = BetaPriorPosterior::from_natural(m, n);
        assert_abs_diff_eq!(back.psi[0], p.psi[0], epsilon = 1e-15);
        assert_abs_diff_eq!(back.psi[1], p.psi[1], epsilon = 1e-15);
    }
}
