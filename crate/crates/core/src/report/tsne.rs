//! Exact t-SNE.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_POINTS: usize = 2000;
const PERPLEXITY_TOL: f64 = 1e-5;
const DUPLICATE_JITTER: f64 = 1e-10;
const P_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub exaggeration: f64,
    /// Iterations run with early exaggeration and the initial momentum.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// KL divergence is recorded every this many iterations.
    pub kl_every: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 500,
            learning_rate: 200.0,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            kl_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub coords: Vec<[f64; 2]>,
    /// `(iteration, KL(P || Q))` pairs, starting with the initial layout and
    /// ending with the final one.
    pub kl_trace: Vec<(usize, f64)>,
}

impl TsneResult {
    pub fn initial_kl(&self) -> f64 {
        self.kl_trace.first().map_or(f64::NAN, |k| k.1)
    }

    pub fn final_kl(&self) -> f64 {
        self.kl_trace.last().map_or(f64::NAN, |k| k.1)
    }
}

fn sq_distances(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row `i` of the conditional affinities for precision `beta`, with its
/// Shannon entropy in nats.
fn row_affinities(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let n = out.len();
    let dmin = (0..n)
        .filter(|&j| j != i)
        .map(|j| dist[j])
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for j in 0..n {
        out[j] = if j == i {
            0.0
        } else {
            (-(dist[j] - dmin) * beta).exp()
        };
        sum += out[j];
    }
    let mut h = 0.0;
    for p in out.iter_mut() {
        *p /= sum;
        if *p > 0.0 {
            h -= *p * p.ln();
        }
    }
    h
}

/// Conditional affinities `p(j|i)` (row-major, zero diagonal) whose per-row
/// perplexity `exp(H)` is within 1e-5 of `perplexity`, found by bisection on
/// each point's Gaussian precision.
pub fn conditional_affinities(x: &[Vec<f64>], perplexity: f64) -> Result<Vec<f64>> {
    let n = x.len();
    check(n, perplexity)?;
    let dist = sq_distances(x);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &dist[i * n..(i + 1) * n];
        let out = &mut p[i * n..(i + 1) * n];
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut beta = 1.0;
        for _ in 0..500 {
            let perp = row_affinities(row, i, beta, out).exp();
            if (perp - perplexity).abs() < PERPLEXITY_TOL {
                break;
            }
            if perp > perplexity {
                lo = beta;
                beta = if hi.is_finite() {
                    0.5 * (beta + hi)
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
    }
    Ok(p)
}

/// Perplexity `exp(H)` of one affinity row.
pub fn row_perplexity(row: &[f64]) -> f64 {
    row.iter()
        .filter(|&&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum::<f64>()
        .exp()
}

fn check(n: usize, perplexity: f64) -> Result<()> {
    if n > MAX_POINTS {
        return Err(Error::Config(format!(
            "exact t-SNE limited to {MAX_POINTS} points, got {n}"
        )));
    }
    if !(perplexity > 0.0) || perplexity * 3.0 >= n as f64 {
        return Err(Error::Config(format!(
            "perplexity {perplexity} must be positive and below n/3 = {:.2}",
            n as f64 / 3.0
        )));
    }
    Ok(())
}

/// Copies `x`, adding seeded jitter of scale 1e-10 to every row that exactly
/// repeats an earlier one.
fn jitter_duplicates(x: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, DUPLICATE_JITTER).expect("valid normal");
    let mut out: Vec<Vec<f64>> = x.to_vec();
    for i in 1..out.len() {
        if x[..i].iter().any(|r| *r == x[i]) {
            for v in out[i].iter_mut() {
                *v += normal.sample(rng);
            }
        }
    }
    out
}

fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
                z += num[i * n + j];
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > 0.0 {
                let q = (num[i * n + j] / z).max(P_FLOOR);
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

/// Exact t-SNE into two dimensions: symmetrized perplexity-calibrated
/// affinities, a Student-t output kernel, and gradient descent with momentum,
/// per-coordinate gains and early exaggeration.
pub fn tsne2d(x: &[Vec<f64>], config: &TsneConfig, seed: u64) -> Result<TsneResult> {
    let n = x.len();
    check(n, config.perplexity)?;
    let d = x.first().map_or(0, |r| r.len());
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("t-SNE rows must share a nonzero width".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE input"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = jitter_duplicates(x, &mut rng);
    let cond = conditional_affinities(&x, config.perplexity)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] =
                    ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }

    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| [init.sample(&mut rng), init.sample(&mut rng)])
        .collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_trace = vec![(0, kl_divergence(&p, &y))];
    let mut num = vec![0.0; n * n];
    for iter in 1..=config.iterations {
        let early = iter <= config.exaggeration_iters;
        let exag = if early { config.exaggeration } else { 1.0 };
        let momentum = if early {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = q;
                num[j * n + i] = q;
                z += 2.0 * q;
            }
        }
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[i * n + j];
                let m = (exag * p[i * n + j] - q / z) * q;
                g[0] += m * (y[i][0] - y[j][0]);
                g[1] += m * (y[i][1] - y[j][1]);
            }
            for k in 0..2 {
                let grad = 4.0 * g[k];
                gains[i][k] = if (grad > 0.0) != (velocity[i][k] > 0.0) {
                    gains[i][k] + 0.2
                } else {
                    (gains[i][k] * 0.8).max(0.01)
                };
                velocity[i][k] =
                    momentum * velocity[i][k] - config.learning_rate * gains[i][k] * grad;
            }
        }
        for i in 0..n {
            y[i][0] += velocity[i][0];
            y[i][1] += velocity[i][1];
        }
        let (mx, my) = y.iter().fold((0.0, 0.0), |a, v| (a.0 + v[0], a.1 + v[1]));
        for v in y.iter_mut() {
            v[0] -= mx / n as f64;
            v[1] -= my / n as f64;
        }
        if iter % config.kl_every.max(1) == 0 || iter == config.iterations {
            kl_trace.push((iter, kl_divergence(&p, &y)));
        }
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE embedding"));
    }
    Ok(TsneResult {
        coords: y,
        kl_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perplexity_bounds_enforced() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64]).collect();
        assert!(tsne2d(&x, &TsneConfig::default(), 0).is_err());
        let cfg = TsneConfig {
            perplexity: 5.0,
            iterations: 50,
            ..TsneConfig::default()
        };
        assert!(tsne2d(&x, &cfg, 0).is_ok());
    }

    #[test]
    fn duplicates_are_separated() {
        let mut x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 0.0]).collect();
        x.push(x[3].clone());
        let cfg = TsneConfig {
            perplexity: 5.0,
            iterations: 100,
            ..TsneConfig::default()
        };
        let r = tsne2d(&x, &cfg, 1).unwrap();
        assert!(r.coords.iter().flatten().all(|v| v.is_finite()));
    }
}
