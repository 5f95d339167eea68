//! Two-dimensional numerical integration of the Beta-prior density.
//!
//! The integrand `exp[μ(ρ·ψ − log B(ρ))]` is integrated in log-coordinates
//! `x = log ρ` (Jacobian `ρ¹ρ²`) with tensor-product Gauss-Legendre panels.
//! The window starts at the Laplace mode ± 8σ and is widened until the log
//! integrand on its boundary is negligible; the panel count is doubled until
//! successive estimates agree.

use std::sync::OnceLock;

use super::beta::log_beta_unchecked;
use super::special::ln_gamma_unchecked;
use crate::error::{Error, Result};

const NODES_PER_PANEL: usize = 16;
const START_PANELS: usize = 2;
const MAX_PANELS: usize = 64;
const REL_TOL: f64 = 1e-6;
/// Boundary log-integrand must sit this far below the peak.
const TAIL_DROP: f64 = 40.0;
const MAX_ABS_X: f64 = 700.0;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static CELL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    CELL.get_or_init(|| gauss_legendre(NODES_PER_PANEL))
}

/// Moments computed by quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureMoments {
    pub mean_rho: [f64; 2],
    pub mean_log_b: f64,
    /// log ∫ exp[μ(ρ·ψ − log B(ρ))] dρ
    pub log_norm: f64,
    pub panels: usize,
}

struct Integrand {
    mu: f64,
    psi: [f64; 2],
}

impl Integrand {
    /// Log integrand in x-coordinates, Jacobian included.
    fn log_at(&self, x: [f64; 2]) -> f64 {
        let r = [x[0].exp(), x[1].exp()];
        self.mu * (r[0] * self.psi[0] + r[1] * self.psi[1] - log_beta_unchecked(r)) + x[0] + x[1]
    }
}

struct Axis {
    x: Vec<f64>,
    w: Vec<f64>,
    rho: Vec<f64>,
    lgam: Vec<f64>,
}

fn axis(lo: f64, hi: f64, panels: usize) -> Axis {
    let (nodes, weights) = gl16();
    let width = (hi - lo) / panels as f64;
    let n = panels * NODES_PER_PANEL;
    let mut ax = Axis { x: Vec::with_capacity(n), w: Vec::with_capacity(n), rho: Vec::with_capacity(n), lgam: Vec::with_capacity(n) };
    for p in 0..panels {
        let a = lo + p as f64 * width;
        for (z, wt) in nodes.iter().zip(weights) {
            let x = a + 0.5 * width * (z + 1.0);
            let r = x.exp();
            ax.x.push(x);
            ax.w.push(0.5 * width * wt);
            ax.rho.push(r);
            ax.lgam.push(ln_gamma_unchecked(r));
        }
    }
    ax
}

fn integrate(f: &Integrand, lo: [f64; 2], hi: [f64; 2], panels: usize) -> QuadratureMoments {
    let a0 = axis(lo[0], hi[0], panels);
    let a1 = axis(lo[1], hi[1], panels);
    let n0 = a0.x.len();
    let n1 = a1.x.len();
    let mut logs = vec![0.0; n0 * n1];
    let mut lbs = vec![0.0; n0 * n1];
    let mut peak = f64::NEG_INFINITY;
    for i in 0..n0 {
        for j in 0..n1 {
            let r0 = a0.rho[i];
            let r1 = a1.rho[j];
            let lb = a0.lgam[i] + a1.lgam[j] - ln_gamma_unchecked(r0 + r1);
            let g = f.mu * (r0 * f.psi[0] + r1 * f.psi[1] - lb) + a0.x[i] + a1.x[j];
            logs[i * n1 + j] = g;
            lbs[i * n1 + j] = lb;
            if g > peak {
                peak = g;
            }
        }
    }
    let (mut z, mut m0, mut m1, mut mlb) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n0 {
        for j in 0..n1 {
            let v = a0.w[i] * a1.w[j] * (logs[i * n1 + j] - peak).exp();
            z += v;
            m0 += v * a0.rho[i];
            m1 += v * a1.rho[j];
            mlb += v * lbs[i * n1 + j];
        }
    }
    QuadratureMoments { mean_rho: [m0 / z, m1 / z], mean_log_b: mlb / z, log_norm: peak + z.ln(), panels }
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Integrates the Beta-prior density with parameters `(mu, psi)`.
///
/// `mode` and `hess` are the Laplace mode and the Hessian `ω_ij` of
/// `ρ·ψ − log B(ρ)` there; they only place the integration window.
pub fn integrate_beta_prior(mu: f64, psi: [f64; 2], mode: [f64; 2], hess: [[f64; 2]; 2]) -> Result<QuadratureMoments> {
    let f = Integrand { mu, psi };
    let x0 = [mode[0].ln(), mode[1].ln()];

    // Covariance in x from -μ ρ_i ρ_j ω_ij.
    let p11 = -mu * mode[0] * mode[0] * hess[0][0];
    let p22 = -mu * mode[1] * mode[1] * hess[1][1];
    let p12 = -mu * mode[0] * mode[1] * hess[0][1];
    let det = p11 * p22 - p12 * p12;
    let sigma = if det > 0.0 && det.is_finite() {
        [(p22 / det).sqrt(), (p11 / det).sqrt()]
    } else {
        [1.0, 1.0]
    };
    let half = [(8.0 * sigma[0]).clamp(1e-6, 50.0), (8.0 * sigma[1]).clamp(1e-6, 50.0)];
    let mut lo = [x0[0] - half[0], x0[1] - half[1]];
    let mut hi = [x0[0] + half[0], x0[1] + half[1]];

    let reference = f.log_at(x0);
    let edge_max = |lo: [f64; 2], hi: [f64; 2], axis: usize, at: f64| -> f64 {
        let other = 1 - axis;
        let mut best = f64::NEG_INFINITY;
        for s in 0..=64 {
            let y = lo[other] + (hi[other] - lo[other]) * s as f64 / 64.0;
            let mut x = [0.0; 2];
            x[axis] = at;
            x[other] = y;
            best = best.max(f.log_at(x));
        }
        best
    };

    let mut peak = reference;
    for _ in 0..200 {
        let mut grew = false;
        for ax in 0..2 {
            let width = hi[ax] - lo[ax];
            let e_lo = edge_max(lo, hi, ax, lo[ax]);
            let e_hi = edge_max(lo, hi, ax, hi[ax]);
            peak = peak.max(e_lo).max(e_hi);
            if e_lo > peak - TAIL_DROP {
                lo[ax] -= 0.5 * width;
                grew = true;
            }
            if e_hi > peak - TAIL_DROP {
                hi[ax] += 0.5 * width;
                grew = true;
            }
        }
        if lo.iter().chain(hi.iter()).any(|v| v.abs() > MAX_ABS_X) {
            return Err(Error::QuadratureFailure(format!(
                "integration window escaped |log ρ| ≤ {MAX_ABS_X} (μ = {mu}, ψ = {psi:?})"
            )));
        }
        if !grew {
            break;
        }
    }

    let mut prev = integrate(&f, lo, hi, START_PANELS);
    let mut panels = START_PANELS * 2;
    while panels <= MAX_PANELS {
        let cur = integrate(&f, lo, hi, panels);
        if !(cur.log_norm.is_finite() && cur.mean_rho.iter().all(|v| v.is_finite())) {
            return Err(Error::QuadratureFailure(format!("non-finite estimate (μ = {mu}, ψ = {psi:?})")));
        }
        let converged = (cur.log_norm - prev.log_norm).abs() <= REL_TOL * cur.log_norm.abs().max(1.0)
            && rel_close(cur.mean_rho[0], prev.mean_rho[0])
            && rel_close(cur.mean_rho[1], prev.mean_rho[1])
            && rel_close(cur.mean_log_b, prev.mean_log_b);
        if converged {
            return Ok(cur);
        }
        prev = cur;
        panels *= 2;
    }
    Err(Error::QuadratureFailure(format!(
        "no agreement to {REL_TOL:e} after {MAX_PANELS} panels per axis (μ = {mu}, ψ = {psi:?})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(16);
        let sum_w: f64 = w.iter().sum();
        assert!((sum_w - 2.0).abs() < 1e-14);
        // ∫ x^30 over [-1, 1] = 2/31, degree 30 < 2n
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((v - 2.0 / 31.0).abs() < 1e-14);
        let odd: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(7)).sum();
        assert!(odd.abs() < 1e-15);
    }
}
