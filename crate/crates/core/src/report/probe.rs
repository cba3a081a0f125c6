//! Domain probes and paired-embedding distances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub folds: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            iterations: 500,
            learning_rate: 0.5,
            l2: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Held-out accuracy pooled over all folds.
    pub accuracy: f64,
    /// Accuracy of always predicting the most frequent label.
    pub chance: f64,
    pub fold_accuracies: Vec<f64>,
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &[&[f64]]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for r in x {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for r in x {
            for k in 0..d {
                scale[k] += (r[k] - mean[k]).powi(2) / n;
            }
        }
        for s in scale.iter_mut() {
            *s = if *s > 1e-24 { 1.0 / s.sqrt() } else { 0.0 };
        }
        Self { mean, scale }
    }

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

/// Multinomial logistic regression with an L2 penalty on the weights,
/// fit by full-batch gradient descent from zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxProbe {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl SoftmaxProbe {
    pub fn fit(x: &[Vec<f64>], y: &[usize], classes: usize, config: &ProbeConfig) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Shape(format!(
                "{} rows vs {} labels",
                x.len(),
                y.len()
            )));
        }
        if y.iter().any(|&c| c >= classes) {
            return Err(Error::Config(format!(
                "label out of range for {classes} classes"
            )));
        }
        let d = x[0].len();
        let n = x.len() as f64;
        let mut weights = vec![vec![0.0; d]; classes];
        let mut bias = vec![0.0; classes];
        let mut probs = vec![0.0; classes];
        for _ in 0..config.iterations {
            let mut gw = vec![vec![0.0; d]; classes];
            let mut gb = vec![0.0; classes];
            for (row, &label) in x.iter().zip(y) {
                softmax_into(&weights, &bias, row, &mut probs);
                for c in 0..classes {
                    let g = (probs[c] - if c == label { 1.0 } else { 0.0 }) / n;
                    gb[c] += g;
                    for (a, v) in gw[c].iter_mut().zip(row) {
                        *a += g * v;
                    }
                }
            }
            for c in 0..classes {
                bias[c] -= config.learning_rate * gb[c];
                for (w, g) in weights[c].iter_mut().zip(&gw[c]) {
                    *w -= config.learning_rate * (g + config.l2 * *w);
                }
            }
        }
        Ok(Self { weights, bias })
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let mut probs = vec![0.0; self.bias.len()];
        softmax_into(&self.weights, &self.bias, row, &mut probs);
        let mut best = 0;
        for (c, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = c;
            }
        }
        best
    }
}

fn softmax_into(weights: &[Vec<f64>], bias: &[f64], row: &[f64], out: &mut [f64]) {
    for (c, o) in out.iter_mut().enumerate() {
        *o = bias[c] + weights[c].iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
    }
    let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for o in out.iter_mut() {
        *o = (*o - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// Cross-validated accuracy of a softmax probe predicting `labels` from
/// `features`. Rows sharing a group id always fall in the same fold, so
/// paired renditions of one recording never straddle train and test.
/// Features are standardized with training-fold statistics.
pub fn probe_accuracy(
    features: &[Vec<f64>],
    labels: &[usize],
    groups: &[usize],
    classes: usize,
    config: &ProbeConfig,
) -> Result<ProbeReport> {
    let n = features.len();
    if n != labels.len() || n != groups.len() {
        return Err(Error::Shape("probe inputs differ in length".into()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("probe features"));
    }
    let mut distinct: Vec<usize> = groups.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if config.folds < 2 || distinct.len() < config.folds {
        return Err(Error::Config(format!(
            "cannot split {} groups into {} folds",
            distinct.len(),
            config.folds
        )));
    }
    let fold_of = |g: usize| distinct.binary_search(&g).expect("known group") % config.folds;

    let mut correct = 0usize;
    let mut fold_accuracies = Vec::with_capacity(config.folds);
    for f in 0..config.folds {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| fold_of(groups[i]) == f);
        let train_rows: Vec<&[f64]> = train.iter().map(|&i| features[i].as_slice()).collect();
        let scaler = Standardizer::fit(&train_rows);
        let xtr: Vec<Vec<f64>> = train_rows.iter().map(|r| scaler.apply(r)).collect();
        let ytr: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let probe = SoftmaxProbe::fit(&xtr, &ytr, classes, config)?;
        let hits = test
            .iter()
            .filter(|&&i| probe.predict(&scaler.apply(&features[i])) == labels[i])
            .count();
        correct += hits;
        fold_accuracies.push(hits as f64 / test.len() as f64);
    }
    let mut counts = vec![0usize; classes];
    for &l in labels {
        counts[l] += 1;
    }
    Ok(ProbeReport {
        accuracy: correct as f64 / n as f64,
        chance: *counts.iter().max().unwrap_or(&0) as f64 / n as f64,
        fold_accuracies,
    })
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Mean distance between paired points, divided by the mean distance over
/// all point pairs so embeddings of different spread are comparable.
pub fn paired_distance(coords: &[[f64; 2]], pairs: &[(usize, usize)]) -> Result<f64> {
    let n = coords.len();
    if n < 2 || pairs.is_empty() {
        return Err(Error::Config(
            "paired distance needs points and pairs".into(),
        ));
    }
    if pairs.iter().any(|&(a, b)| a >= n || b >= n) {
        return Err(Error::Config("pair index out of range".into()));
    }
    let mut all = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            all += dist(coords[i], coords[j]);
        }
    }
    let all = all / (n * (n - 1) / 2) as f64;
    if all == 0.0 {
        return Err(Error::Undefined("all points coincide".into()));
    }
    let paired = pairs
        .iter()
        .map(|&(a, b)| dist(coords[a], coords[b]))
        .sum::<f64>()
        / pairs.len() as f64;
    Ok(paired / all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_labels_are_probed() {
        let x: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i % 3) as f64 + 0.01 * i as f64, 1.0])
            .collect();
        let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let g: Vec<usize> = (0..60).collect();
        let r = probe_accuracy(&x, &y, &g, 3, &ProbeConfig::default()).unwrap();
        assert!(r.accuracy > 0.9, "{}", r.accuracy);
        assert!((r.chance - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_pairs_have_zero_distance() {
        let c = [[0.0, 0.0], [0.0, 0.0], [3.0, 4.0], [3.0, 4.0]];
        assert_eq!(paired_distance(&c, &[(0, 1), (2, 3)]).unwrap(), 0.0);
        let d = paired_distance(&c, &[(0, 2)]).unwrap();
        assert!((d - 5.0 / (20.0 / 6.0)).abs() < 1e-12);
    }
}
