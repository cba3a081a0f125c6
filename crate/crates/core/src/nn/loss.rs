use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Config(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
    let loss = lse - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Mean cross-entropy over `[N, k]` logits; gradient is already divided by `N`.
pub fn batch_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, k) = match *logits.shape() {
        [n, k] => (n, k),
        ref s => return shape_err(format!("expected [N,k] logits, got {s:?}")),
    };
    if labels.len() != n {
        return shape_err(format!("{} labels for {n} rows", labels.len()));
    }
    let inv = 1.0 / n as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n * k);
    for (r, &y) in labels.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.row(r), y)?;
        total += l;
        grad.extend(g.into_iter().map(|v| v * inv));
    }
    Ok((total * inv, Tensor::new(vec![n, k], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln3() {
        for y in 0..3 {
            let (l, _) = softmax_cross_entropy(&[0.0, 0.0, 0.0], y).unwrap();
            assert!((l - 3f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_logits_are_stable() {
        let (l, g) = softmax_cross_entropy(&[1000.0, 0.0, 0.0], 0).unwrap();
        assert!(l < 1e-6 && l >= 0.0);
        assert!(g.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let z = [0.3, -1.2, 0.8, 2.1];
        let (_, g) = softmax_cross_entropy(&z, 2).unwrap();
        let h = 1e-5;
        for i in 0..4 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let fd = (softmax_cross_entropy(&zp, 2).unwrap().0
                - softmax_cross_entropy(&zm, 2).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() / g[i].abs().max(1e-12) < 1e-6);
        }
    }

    #[test]
    fn out_of_range_label() {
        assert!(softmax_cross_entropy(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[3.0, -7.5, 0.25, 12.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
