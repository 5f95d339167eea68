#![allow(dead_code)]

use std::collections::HashSet;

use btot_core::synth::{dirichlet, TopicTruth};
use btot_core::BetaParams;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Five topics sharing `shared` of their mass on a common 100-word block,
/// each with its own 20-word block and a narrow Beta at 0.1, 0.3, ..., 0.9.
pub fn event_truth(shared: f64, seed: u64) -> TopicTruth {
    let (k, v) = (5, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta = Array2::zeros((k, v));
    let common = dirichlet(&mut rng, &[1.0; 100]);
    for e in 0..k {
        let own = dirichlet(&mut rng, &[1.0; 20]);
        for (i, x) in common.iter().enumerate() {
            beta[[e, i]] += shared * x;
        }
        for (i, x) in own.iter().enumerate() {
            beta[[e, 100 + e * 20 + i]] += (1.0 - shared) * x;
        }
    }
    beta.mapv_inplace(|x| x + 1e-6);
    for mut r in beta.rows_mut() {
        let s = r.sum();
        r /= s;
    }
    let rho = (0..k)
        .map(|e| {
            let m = 0.1 + 0.2 * e as f64;
            BetaParams { rho: [400.0 * m, 400.0 * (1.0 - m)] }
        })
        .collect();
    TopicTruth { beta, rho, alpha: vec![0.1; k] }
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out
}

/// Every window as an explicit word set.
pub fn enumerate_windows(sequences: &[Vec<usize>], window: usize) -> Vec<HashSet<usize>> {
    let mut out = Vec::new();
    for seq in sequences.iter().filter(|s| !s.is_empty()) {
        if seq.len() <= window {
            out.push(seq.iter().copied().collect());
        } else {
            for s in 0..=seq.len() - window {
                out.push(seq[s..s + window].iter().copied().collect());
            }
        }
    }
    out
}

/// C_V straight from the window sets: NPMI context vectors, each word
/// against the sum over the set, cosine, mean.
pub fn brute_force_cv(words: &[usize], sequences: &[Vec<usize>], window: usize, eps: f64) -> f64 {
    let wins = enumerate_windows(sequences, window);
    let n = words.len();
    if n == 0 || wins.is_empty() {
        return 0.0;
    }
    let nw = wins.len() as f64;
    let p1 = |a: usize| wins.iter().filter(|w| w.contains(&a)).count() as f64 / nw;
    let p2 = |a: usize, b: usize| wins.iter().filter(|w| w.contains(&a) && w.contains(&b)).count() as f64 / nw;
    let npmi = |a: usize, b: usize| {
        let (pa, pb, pab) = (p1(a), p1(b), p2(a, b));
        if pa == 0.0 || pb == 0.0 {
            0.0
        } else if pab >= 1.0 {
            1.0
        } else {
            ((pab + eps) / (pa * pb)).ln() / -(pab + eps).ln()
        }
    };
    let vecs: Vec<Vec<f64>> = words.iter().map(|&a| words.iter().map(|&b| npmi(a, b)).collect()).collect();
    let total: Vec<f64> = (0..n).map(|j| vecs.iter().map(|v| v[j]).sum()).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nt = norm(&total);
    let mut acc = 0.0;
    for v in &vecs {
        let nv = norm(v);
        if nv > 0.0 && nt > 0.0 {
            acc += v.iter().zip(&total).map(|(a, b)| a * b).sum::<f64>() / (nv * nt);
        }
    }
    acc / n as f64
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
