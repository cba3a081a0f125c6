//! Label, domain and mean-discrepancy objectives.

use crate::error::{shape_err, Error, Result};
use crate::nn::loss::{batch_cross_entropy, softmax_cross_entropy};
use crate::tensor::Tensor;

/// Mean disease cross-entropy; every example must carry a label.
pub fn label_loss(logits: &Tensor, labels: &[Option<usize>]) -> Result<(f64, Tensor)> {
    let labels: Vec<usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::Config(format!("example {i} has no disease label"))))
        .collect::<Result<_>>()?;
    batch_cross_entropy(logits, &labels)
}

/// Mean domain cross-entropy over `[N, 3]` logits.
pub fn domain_loss(logits: &Tensor, domains: &[usize]) -> Result<(f64, Tensor)> {
    let (sum, grad) = domain_loss_part(logits, domains, domains.len())?;
    Ok((sum / domains.len() as f64, grad))
}

/// Summed cross-entropy of a slice of a larger batch of `batch_len` rows; the
/// gradient is scaled by `1 / batch_len` so the parts add up to the batch mean.
pub fn domain_loss_part(
    logits: &Tensor,
    domains: &[usize],
    batch_len: usize,
) -> Result<(f64, Tensor)> {
    let (n, k) = match *logits.shape() {
        [n, k] => (n, k),
        ref s => return shape_err(format!("expected [N,k] logits, got {s:?}")),
    };
    if domains.len() != n || n == 0 || batch_len < n {
        return shape_err(format!("{} domain labels for {n} rows", domains.len()));
    }
    let inv = 1.0 / batch_len as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n * k);
    for (r, &d) in domains.iter().enumerate() {
        let (l, g) = softmax_cross_entropy(logits.row(r), d)?;
        total += l;
        grad.extend(g.into_iter().map(|v| v * inv));
    }
    Ok((total, Tensor::new(vec![n, k], grad)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmdOutput {
    pub value: f64,
    pub grad_source: Tensor,
    pub grad_target: Tensor,
}

fn column_means(x: &Tensor) -> Result<(usize, Vec<f64>)> {
    let (n, d) = match *x.shape() {
        [n, d] if n > 0 => (n, d),
        ref s => {
            return Err(Error::Shape(format!(
                "mmd needs a nonempty [N,D] feature set, got {s:?}"
            )))
        }
    };
    let mut m = vec![0.0; d];
    for r in 0..n {
        for (a, v) in m.iter_mut().zip(x.row(r)) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= n as f64);
    Ok((n, m))
}

/// Squared distance between the feature means of two `[N, D]` sets.
pub fn mmd_loss(source: &Tensor, target: &Tensor) -> Result<MmdOutput> {
    let (ns, ms) = column_means(source)?;
    let (nt, mt) = column_means(target)?;
    if ms.len() != mt.len() {
        return shape_err("mmd feature widths differ");
    }
    let diff: Vec<f64> = ms.iter().zip(&mt).map(|(a, b)| a - b).collect();
    let value = diff.iter().map(|v| v * v).sum();
    let d = diff.len();
    let gs: Vec<f64> = diff.iter().map(|v| 2.0 * v / ns as f64).collect();
    let gt: Vec<f64> = diff.iter().map(|v| -2.0 * v / nt as f64).collect();
    Ok(MmdOutput {
        value,
        grad_source: Tensor::new(vec![ns, d], gs.repeat(ns))?,
        grad_target: Tensor::new(vec![nt, d], gt.repeat(nt))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_loss_values() {
        let uniform = Tensor::zeros(&[1, 3]);
        assert!((label_loss(&uniform, &[Some(2)]).unwrap().0 - 3f64.ln()).abs() < 1e-12);
        let perfect = Tensor::new(vec![1, 3], vec![800.0, 0.0, 0.0]).unwrap();
        assert!(label_loss(&perfect, &[Some(0)]).unwrap().0 < 1e-12);
        let two = Tensor::new(vec![2, 3], vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.5]).unwrap();
        let (mean, _) = label_loss(&two, &[Some(0), Some(2)]).unwrap();
        let a = softmax_cross_entropy(&[1.0, 0.0, 0.0], 0).unwrap().0;
        let b = softmax_cross_entropy(&[0.0, 2.0, 0.5], 2).unwrap().0;
        assert!((mean - (a + b) / 2.0).abs() < 1e-15);
        assert!(label_loss(&two, &[Some(0), None]).is_err());
    }

    #[test]
    fn domain_parts_add_to_the_batch_mean() {
        let logits = Tensor::new(
            vec![3, 3],
            vec![0.2, -1.0, 0.4, 1.5, 0.0, 0.0, -0.3, 0.8, 0.1],
        )
        .unwrap();
        let (mean, grad) = domain_loss(&logits, &[0, 1, 2]).unwrap();
        let (a, ga) = domain_loss_part(
            &Tensor::new(vec![1, 3], logits.row(0).to_vec()).unwrap(),
            &[0],
            3,
        )
        .unwrap();
        let (b, gb) = domain_loss_part(
            &Tensor::new(vec![2, 3], logits.data()[3..].to_vec()).unwrap(),
            &[1, 2],
            3,
        )
        .unwrap();
        assert!(((a + b) / 3.0 - mean).abs() < 1e-15);
        assert_eq!(&grad.data()[..3], ga.data());
        assert_eq!(&grad.data()[3..], gb.data());
        let clean = Tensor::new(vec![1, 3], vec![900.0, 0.0, 0.0]).unwrap();
        assert!(domain_loss(&clean, &[0]).unwrap().0 < 1e-12);
    }

    #[test]
    fn mmd_values() {
        let a = Tensor::from_fn(&[4, 5], |i| (i as f64).sin());
        assert_eq!(mmd_loss(&a, &a).unwrap().value, 0.0);
        let z = Tensor::zeros(&[2, 4]);
        let t = Tensor::new(vec![1, 4], vec![3.0, 0.0, 4.0, 0.0]).unwrap();
        assert!((mmd_loss(&z, &t).unwrap().value - 25.0).abs() < 1e-12);
        assert!(mmd_loss(&z, &Tensor::zeros(&[1, 3])).is_err());
    }
}
