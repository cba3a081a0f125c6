//! Gradient reversal: identity forward, `-lambda` times the gradient backward.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReversal {
    lambda: f64,
}

impl GradientReversal {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "gradient reversal coefficient must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn forward(&self, input: &Tensor) -> Tensor {
        input.clone()
    }

    pub fn backward(&self, grad_out: &Tensor) -> Tensor {
        let k = -self.lambda;
        grad_out.map(|g| k * g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_forward_reversed_backward() {
        let grl = GradientReversal::new(0.5).unwrap();
        let x = Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(grl.forward(&x), x);
        let g = Tensor::new(vec![2], vec![0.5, -1.0]).unwrap();
        assert_eq!(grl.backward(&g).data(), &[-0.25, 0.5]);
    }

    #[test]
    fn zero_lambda_blocks_gradient() {
        let grl = GradientReversal::new(0.0).unwrap();
        let g = grl.backward(&Tensor::new(vec![2], vec![3.0, -4.0]).unwrap());
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(GradientReversal::new(-0.1).is_err());
        assert!(GradientReversal::new(f64::NAN).is_err());
    }
}
