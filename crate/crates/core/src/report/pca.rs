//! Two-component principal component analysis.

use crate::error::{Error, Result};

const MAX_ITERS: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    /// Projected coordinates, one pair per input row.
    pub coords: Vec<[f64; 2]>,
    /// Unit principal directions, largest variance first.
    pub components: [Vec<f64>; 2],
    /// Sample variances along the two directions (non-increasing).
    pub variances: [f64; 2],
    pub mean: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn mat_vec(c: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    (0..d).map(|i| dot(&c[i * d..(i + 1) * d], v)).collect()
}

/// Removes the `u` component from `v`.
fn reject(v: &mut [f64], u: &[f64]) {
    let p = dot(v, u);
    v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
}

/// Any unit vector orthogonal to `u`.
fn orthogonal_to(u: &[f64]) -> Vec<f64> {
    let k = (0..u.len())
        .min_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs()))
        .unwrap_or(0);
    let mut v = vec![0.0; u.len()];
    v[k] = 1.0;
    reject(&mut v, u);
    normalize(&mut v);
    v
}

/// Eigen-decomposition of the symmetric 2x2 matrix `[[a, b], [b, c]]`;
/// returns eigenvalues (descending) and the rotation `(cos, sin)` taking the
/// basis to the first eigenvector.
fn sym2_eigen(a: f64, b: f64, c: f64) -> ([f64; 2], (f64, f64)) {
    let half_tr = 0.5 * (a + c);
    let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    ([half_tr + r, half_tr - r], (theta.cos(), theta.sin()))
}

/// Projects mean-centered rows onto the top two principal directions of
/// their sample covariance, found by two-vector subspace iteration with a
/// Rayleigh-Ritz rotation at every step. Each direction's sign is chosen so
/// its largest-magnitude entry is positive.
pub fn pca2d(rows: &[Vec<f64>]) -> Result<Pca2d> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::Config(format!(
            "pca needs at least 3 points, got {n}"
        )));
    }
    let d = rows[0].len();
    if d < 2 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape(
            "pca rows must share a width of at least 2".into(),
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pca input"));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for r in &centered {
        for i in 0..d {
            let ri = r[i];
            if ri == 0.0 {
                continue;
            }
            let row = &mut cov[i * d..(i + 1) * d];
            row.iter_mut().zip(r).for_each(|(c, v)| *c += ri * v);
        }
    }
    cov.iter_mut().for_each(|c| *c /= (n - 1) as f64);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if trace <= 0.0 {
        return Err(Error::Undefined(
            "pca of rank-0 data (all points identical)".into(),
        ));
    }

    // Start from the two highest-variance coordinate axes.
    let mut axes: Vec<usize> = (0..d).collect();
    axes.sort_by(|&a, &b| cov[b * d + b].total_cmp(&cov[a * d + a]).then(a.cmp(&b)));
    let mut v1 = vec![0.0; d];
    let mut v2 = vec![0.0; d];
    v1[axes[0]] = 1.0;
    v2[axes[1]] = 1.0;
    let mut eig = [0.0; 2];
    for _ in 0..MAX_ITERS {
        let mut w1 = mat_vec(&cov, d, &v1);
        let mut w2 = mat_vec(&cov, d, &v2);
        if normalize(&mut w1) == 0.0 {
            w1 = v1.clone();
        }
        reject(&mut w2, &w1);
        if normalize(&mut w2) <= 1e-12 * trace {
            w2 = v2.clone();
            reject(&mut w2, &w1);
            if normalize(&mut w2) < 1e-8 {
                w2 = orthogonal_to(&w1);
            }
        }
        let c1 = mat_vec(&cov, d, &w1);
        let c2 = mat_vec(&cov, d, &w2);
        let (vals, (cs, sn)) = sym2_eigen(dot(&w1, &c1), dot(&w1, &c2), dot(&w2, &c2));
        let n1: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| cs * a + sn * b).collect();
        let n2: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| -sn * a + cs * b).collect();
        let change = (1.0 - dot(&n1, &v1).abs()).max(1.0 - dot(&n2, &v2).abs());
        let settled =
            (vals[0] - eig[0]).abs() <= 1e-15 * trace && (vals[1] - eig[1]).abs() <= 1e-15 * trace;
        v1 = n1;
        v2 = n2;
        eig = vals;
        if change < 1e-15 && settled {
            break;
        }
    }
    for v in [&mut v1, &mut v2] {
        let k = (0..d)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .unwrap_or(0);
        if v[k] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let coords = centered
        .iter()
        .map(|r| [dot(r, &v1), dot(r, &v2)])
        .collect();
    Ok(Pca2d {
        coords,
        components: [v1, v2],
        variances: [eig[0].max(0.0), eig[1].max(0.0)],
        mean,
    })
}

impl Pca2d {
    /// Sum of squared distances between rows and their rank-2 reconstructions.
    pub fn reconstruction_error(&self, rows: &[Vec<f64>]) -> f64 {
        rows.iter()
            .zip(&self.coords)
            .map(|(r, c)| {
                r.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let rec = self.mean[j]
                            + c[0] * self.components[0][j]
                            + c[1] * self.components[1][j];
                        (v - rec) * (v - rec)
                    })
                    .sum::<f64>()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_data() {
        let rows: Vec<Vec<f64>> = [(-3.0, -1.0), (-3.0, 1.0), (3.0, -1.0), (3.0, 1.0)]
            .iter()
            .map(|&(a, b)| vec![b, a, 0.0])
            .collect();
        let p = pca2d(&rows).unwrap();
        assert!(p.variances[0] >= p.variances[1]);
        assert!((p.components[0][1] - 1.0).abs() < 1e-9);
        assert!((p.components[1][0] - 1.0).abs() < 1e-9);
        assert!((p.variances[0] / p.variances[1] - 9.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_small_or_constant_input() {
        assert!(pca2d(&[vec![1.0, 2.0], vec![2.0, 3.0]]).is_err());
        assert!(pca2d(&vec![vec![1.0, 1.0]; 4]).is_err());
    }
}
