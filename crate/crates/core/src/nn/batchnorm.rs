use crate::error::{shape_err, Error, Result};
use crate::nn::optim::Param;
use crate::nn::Mode;
use crate::tensor::Tensor;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPSILON: f64 = 1e-5;

/// Per-channel batch normalization over the last axis.
///
/// Running statistics follow `running = momentum * running + (1 - momentum) * batch`
/// and are seeded from the first training batch. The running variance uses the
/// unbiased batch variance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Option<Vec<f64>>,
    pub running_var: Option<Vec<f64>>,
    pub momentum: f64,
    pub epsilon: f64,
    /// Mean and biased variance of the last training batch.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
    /// Per-channel `(sum dy, sum dy * xhat)` from shared-mode backward passes
    /// not yet folded into the training batch's input gradient.
    pub shared_sums: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    mode: Mode,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::filled(&[channels], 1.0)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: None,
            running_var: None,
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
            batch_stats: None,
            shared_sums: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<(Tensor, BnCache)> {
        self.forward_owned(input.clone(), mode)
    }

    /// Like [`BatchNorm::forward`] but reuses the input buffer for the cache.
    pub fn forward_owned(&mut self, input: Tensor, mode: Mode) -> Result<(Tensor, BnCache)> {
        let c = self.channels();
        if input.shape().last() != Some(&c) {
            return shape_err(format!(
                "batchnorm over {c} channels got shape {:?}",
                input.shape()
            ));
        }
        let m = input.len() / c;
        let (mean, var) = match mode {
            Mode::Train => {
                if m < 2 {
                    return Err(Error::Config(
                        "training-mode batchnorm needs at least 2 values per channel".into(),
                    ));
                }
                let (mean, var) = match c {
                    1 => channel_moments::<1>(input.data(), c),
                    16 => channel_moments::<16>(input.data(), c),
                    _ => channel_moments::<0>(input.data(), c),
                };
                self.update_running(&mean, &var, m);
                self.batch_stats = Some((mean.clone(), var.clone()));
                (mean, var)
            }
            Mode::Shared => self.batch_stats.clone().ok_or_else(|| {
                Error::Config("shared-statistics batchnorm before any training batch".into())
            })?,
            Mode::Eval => match (&self.running_mean, &self.running_var) {
                (Some(mu), Some(v)) => (mu.clone(), v.clone()),
                _ => {
                    return Err(Error::Config(
                        "eval-mode batchnorm before any running statistics exist".into(),
                    ))
                }
            },
        };
        let inv_std: Vec<f64> = var
            .iter()
            .map(|v| 1.0 / (v + self.epsilon).sqrt())
            .collect();
        let shape = input.shape().to_vec();
        let mut xhat = input.into_data();
        let mut out = vec![0.0; xhat.len()];
        let (gamma, beta) = (self.gamma.value.data(), self.beta.value.data());
        match c {
            1 => normalize_affine::<1>(&mut xhat, &mut out, &mean, &inv_std, gamma, beta, c),
            16 => normalize_affine::<16>(&mut xhat, &mut out, &mean, &inv_std, gamma, beta, c),
            _ => normalize_affine::<0>(&mut xhat, &mut out, &mean, &inv_std, gamma, beta, c),
        }
        Ok((
            Tensor::new(shape.clone(), out)?,
            BnCache {
                xhat: Tensor::new(shape, xhat)?,
                inv_std,
                mode,
            },
        ))
    }

    fn update_running(&mut self, mean: &[f64], var: &[f64], m: usize) {
        let unbiased = m as f64 / (m as f64 - 1.0);
        let k = self.momentum;
        match (&mut self.running_mean, &mut self.running_var) {
            (Some(rm), Some(rv)) => {
                for i in 0..mean.len() {
                    rm[i] = k * rm[i] + (1.0 - k) * mean[i];
                    rv[i] = k * rv[i] + (1.0 - k) * var[i] * unbiased;
                }
            }
            _ => {
                self.running_mean = Some(mean.to_vec());
                self.running_var = Some(var.iter().map(|v| v * unbiased).collect());
            }
        }
    }

    /// Accumulates gamma/beta gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &BnCache, grad_out: &Tensor) -> Result<Tensor> {
        self.backward_owned(cache, grad_out.clone())
    }

    /// Like [`BatchNorm::backward`] but writes the result over `grad_out`.
    pub fn backward_owned(&mut self, cache: &BnCache, grad_out: Tensor) -> Result<Tensor> {
        let c = self.channels();
        if grad_out.shape() != cache.xhat.shape() {
            return shape_err("batchnorm backward: gradient shape mismatch");
        }
        let m = grad_out.len() / c;
        let shape = grad_out.shape().to_vec();
        let mut dy = grad_out.into_data();
        let xhat = cache.xhat.data();
        let (sum_dy, sum_dy_xhat) = match c {
            1 => grad_sums::<1>(&dy, xhat, c),
            16 => grad_sums::<16>(&dy, xhat, c),
            _ => grad_sums::<0>(&dy, xhat, c),
        };
        {
            let gg = self.gamma.grad.data_mut();
            let gb = self.beta.grad.data_mut();
            for ch in 0..c {
                gg[ch] += sum_dy_xhat[ch];
                gb[ch] += sum_dy[ch];
            }
        }
        let gamma = self.gamma.value.data();
        let scale: Vec<f64> = (0..c).map(|ch| gamma[ch] * cache.inv_std[ch]).collect();
        match cache.mode {
            Mode::Train => {
                let inv_m = 1.0 / m as f64;
                let (mut sum_dy, mut sum_dy_xhat) = (sum_dy, sum_dy_xhat);
                if let Some((sd, sdx)) = self.shared_sums.take() {
                    for ch in 0..c {
                        sum_dy[ch] += sd[ch];
                        sum_dy_xhat[ch] += sdx[ch];
                    }
                }
                let a: Vec<f64> = sum_dy.iter().map(|s| s * inv_m).collect();
                let b: Vec<f64> = sum_dy_xhat.iter().map(|s| s * inv_m).collect();
                match c {
                    1 => train_input_grad::<1>(&mut dy, xhat, &scale, &a, &b, c),
                    16 => train_input_grad::<16>(&mut dy, xhat, &scale, &a, &b, c),
                    _ => train_input_grad::<0>(&mut dy, xhat, &scale, &a, &b, c),
                }
            }
            Mode::Shared => {
                match &mut self.shared_sums {
                    Some((sd, sdx)) => {
                        for ch in 0..c {
                            sd[ch] += sum_dy[ch];
                            sdx[ch] += sum_dy_xhat[ch];
                        }
                    }
                    None => self.shared_sums = Some((sum_dy, sum_dy_xhat)),
                }
                for g in dy.chunks_exact_mut(c) {
                    for ch in 0..c {
                        g[ch] *= scale[ch];
                    }
                }
            }
            Mode::Eval => {
                for g in dy.chunks_exact_mut(c) {
                    for ch in 0..c {
                        g[ch] *= scale[ch];
                    }
                }
            }
        }
        Tensor::new(shape, dy)
    }
}

#[inline(always)]
fn pick(konst: usize, dynamic: usize) -> usize {
    if konst > 0 {
        konst
    } else {
        dynamic
    }
}

/// Per-channel mean and biased variance, accumulated around the first pixel
/// to limit cancellation.
fn channel_moments<const C: usize>(x: &[f64], c: usize) -> (Vec<f64>, Vec<f64>) {
    let c = pick(C, c);
    let m = (x.len() / c) as f64;
    let shift = &x[..c];
    let mut s1 = vec![0.0; c];
    let mut s2 = vec![0.0; c];
    {
        let (s1, s2) = (&mut s1[..c], &mut s2[..c]);
        for px in x.chunks_exact(c) {
            for ch in 0..c {
                let d = px[ch] - shift[ch];
                s1[ch] += d;
                s2[ch] += d * d;
            }
        }
    }
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let d = s1[ch] / m;
        mean[ch] = shift[ch] + d;
        var[ch] = (s2[ch] / m - d * d).max(0.0);
    }
    (mean, var)
}

#[allow(clippy::too_many_arguments)]
fn normalize_affine<const C: usize>(
    xhat: &mut [f64],
    out: &mut [f64],
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    beta: &[f64],
    c: usize,
) {
    let c = pick(C, c);
    let (mean, inv_std, gamma, beta) = (&mean[..c], &inv_std[..c], &gamma[..c], &beta[..c]);
    for (xh, o) in xhat.chunks_exact_mut(c).zip(out.chunks_exact_mut(c)) {
        for ch in 0..c {
            let n = (xh[ch] - mean[ch]) * inv_std[ch];
            xh[ch] = n;
            o[ch] = gamma[ch] * n + beta[ch];
        }
    }
}

fn grad_sums<const C: usize>(dy: &[f64], xhat: &[f64], c: usize) -> (Vec<f64>, Vec<f64>) {
    let c = pick(C, c);
    let mut s = vec![0.0; c];
    let mut sx = vec![0.0; c];
    {
        let (s, sx) = (&mut s[..c], &mut sx[..c]);
        for (g, xh) in dy.chunks_exact(c).zip(xhat.chunks_exact(c)) {
            for ch in 0..c {
                s[ch] += g[ch];
                sx[ch] += g[ch] * xh[ch];
            }
        }
    }
    (s, sx)
}

fn train_input_grad<const C: usize>(
    dy: &mut [f64],
    xhat: &[f64],
    scale: &[f64],
    a: &[f64],
    b: &[f64],
    c: usize,
) {
    let c = pick(C, c);
    let (scale, a, b) = (&scale[..c], &a[..c], &b[..c]);
    for (g, xh) in dy.chunks_exact_mut(c).zip(xhat.chunks_exact(c)) {
        for ch in 0..c {
            g[ch] = scale[ch] * (g[ch] - a[ch] - xh[ch] * b[ch]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::from_fn(&[4, 3, 3, 2], |i| {
            use rand::Rng;
            if i % 2 == 0 {
                rng.gen_range(5.0..9.0)
            } else {
                rng.gen_range(-30.0..0.0)
            }
        });
        let mut bn = BatchNorm::new(2);
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(2).copied().collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn constant_channel_outputs_beta() {
        let mut bn = BatchNorm::new(1);
        bn.beta.value.data_mut()[0] = 0.7;
        let (y, _) = bn
            .forward(&Tensor::filled(&[2, 3, 3, 1], 4.0), Mode::Train)
            .unwrap();
        assert!(y.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn eval_mode_uses_running_statistics() {
        let mut bn = BatchNorm::new(1);
        bn.running_mean = Some(vec![2.0]);
        bn.running_var = Some(vec![4.0]);
        bn.gamma.value.data_mut()[0] = 1.5;
        bn.beta.value.data_mut()[0] = -0.5;
        let x = Tensor::new(vec![3, 1], vec![0.0, 2.0, 5.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Eval).unwrap();
        for (xi, yi) in x.data().iter().zip(y.data()) {
            let want = (xi - 2.0) / (4.0_f64 + 1e-5).sqrt() * 1.5 - 0.5;
            assert!((yi - want).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_before_training_is_config_error() {
        let mut bn = BatchNorm::new(1);
        let err = bn.forward(&Tensor::zeros(&[2, 1]), Mode::Eval).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn single_value_batch_rejected() {
        let mut bn = BatchNorm::new(3);
        assert!(bn.forward(&Tensor::zeros(&[1, 3]), Mode::Train).is_err());
    }

    #[test]
    fn running_variance_stays_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut bn = BatchNorm::new(2);
        for _ in 0..20 {
            let x = Tensor::uniform(&[3, 2, 2, 2], -3.0, 3.0, &mut rng);
            bn.forward(&x, Mode::Train).unwrap();
        }
        assert!(bn.running_var.unwrap().iter().all(|&v| v >= 0.0));
    }
}
