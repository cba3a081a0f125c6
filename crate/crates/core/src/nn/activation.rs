use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu(input: &Tensor, slope: f64) -> Tensor {
    input.map(|x| if x >= 0.0 { x } else { slope * x })
}

/// Gradient of [`leaky_relu`] given the forward input.
pub fn leaky_relu_backward(input: &Tensor, grad_out: &Tensor, slope: f64) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return shape_err("leaky_relu backward: gradient shape mismatch");
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x >= 0.0 { g } else { slope * g })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// In-place variant of [`leaky_relu_backward`].
pub fn leaky_relu_backward_owned(input: &Tensor, grad_out: Tensor, slope: f64) -> Result<Tensor> {
    if input.shape() != grad_out.shape() {
        return shape_err("leaky_relu backward: gradient shape mismatch");
    }
    let mut g = grad_out;
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x < 0.0 {
            *gv *= slope;
        }
    }
    Ok(g)
}
