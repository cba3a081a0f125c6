//! Trainable parameters and the Adam optimizer.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let z = Tensor::zeros(value.shape());
        Self {
            grad: z.clone(),
            m: z.clone(),
            v: z,
            value,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn reset_moments(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `param.value` using `grad`; `t` counts from 1.
pub fn adam_step(param: &mut Param, grad: &Tensor, cfg: &AdamConfig, t: u64) {
    assert!(t >= 1, "adam step index starts at 1");
    assert_eq!(param.value.shape(), grad.shape(), "adam gradient shape");
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let p = param.value.data_mut();
    let m = param.m.data_mut();
    let v = param.v.data_mut();
    for (((p, m), v), &g) in p
        .iter_mut()
        .zip(m.iter_mut())
        .zip(v.iter_mut())
        .zip(grad.data())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Adam over a parameter group, stepping on each parameter's accumulated gradient
/// scaled by `grad_scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self { cfg, t: 0 }
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = (&'a mut Param, f64)>) {
        self.t += 1;
        for (p, scale) in params {
            let g = if scale == 1.0 {
                p.grad.clone()
            } else {
                p.grad.scale(scale)
            };
            adam_step(p, &g, &self.cfg, self.t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Param::new(Tensor::scalar(0.5));
        adam_step(&mut p, &Tensor::scalar(1.0), &AdamConfig::default(), 1);
        let moved = 0.5 - p.value.data()[0];
        // m_hat = v_hat = 1 so the step is lr / (1 + eps)
        assert!((moved - 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut p = Param::new(Tensor::scalar(-0.3));
        for t in 1..=50 {
            adam_step(&mut p, &Tensor::scalar(0.0), &AdamConfig::default(), t);
        }
        assert_eq!(p.value.data()[0], -0.3);
    }

    #[test]
    fn two_steps_match_hand_recurrence() {
        let cfg = AdamConfig::default();
        let g = 0.25;
        let mut p = Param::new(Tensor::scalar(1.0));
        adam_step(&mut p, &Tensor::scalar(g), &cfg, 1);
        adam_step(&mut p, &Tensor::scalar(g), &cfg, 2);

        let mut theta = 1.0_f64;
        let (mut m, mut v) = (0.0_f64, 0.0_f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9_f64.powi(t));
            let vh = v / (1.0 - 0.999_f64.powi(t));
            theta -= 0.001 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.value.data()[0] - theta).abs() < 1e-12);
        assert_eq!(p.m.shape(), p.value.shape());
    }
}
