use rand::Rng;

use crate::error::{shape_err, Result};
use crate::nn::optim::Param;
use crate::tensor::Tensor;

/// Affine map `x W + b` over `[N, in]` rows; weights are `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        match (weight.shape(), bias.shape()) {
            ([_, o], [b]) if o == b => Ok(Self {
                weight: Param::new(weight),
                bias: Param::new(bias),
            }),
            (w, b) => shape_err(format!("linear weight {w:?} incompatible with bias {b:?}")),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let a = (6.0 / (inputs + outputs) as f64).sqrt();
        Self::new(
            Tensor::uniform(&[inputs, outputs], -a, a, rng),
            Tensor::zeros(&[outputs]),
        )
        .expect("shapes agree by construction")
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        fully_connected(input, &self.weight.value, &self.bias.value)
    }

    /// Accumulates weight/bias gradients; returns the input gradient.
    pub fn backward(&mut self, input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (i, o) = (self.inputs(), self.outputs());
        let rows = input.len() / i;
        if grad_out.len() != rows * o {
            return shape_err("linear backward: gradient shape mismatch");
        }
        let x = input.data();
        let g = grad_out.data();
        let w = self.weight.value.data();
        let mut gx = vec![0.0; input.len()];
        let gw = self.weight.grad.data_mut();
        let gb = self.bias.grad.data_mut();
        for r in 0..rows {
            let gr = &g[r * o..(r + 1) * o];
            let xr = &x[r * i..(r + 1) * i];
            for (k, gbk) in gb.iter_mut().enumerate() {
                *gbk += gr[k];
            }
            for a in 0..i {
                let wrow = &w[a * o..(a + 1) * o];
                let gwrow = &mut gw[a * o..(a + 1) * o];
                let mut acc = 0.0;
                for k in 0..o {
                    acc += gr[k] * wrow[k];
                    gwrow[k] += xr[a] * gr[k];
                }
                gx[r * i + a] = acc;
            }
        }
        Tensor::new(input.shape().to_vec(), gx)
    }
}

/// `[in]` or `[N, in]` input, `[in, k]` weights, `[k]` bias.
pub fn fully_connected(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (i, o) = match *weights.shape() {
        [i, o] => (i, o),
        ref s => return shape_err(format!("expected weights [in,out], got {s:?}")),
    };
    if bias.shape() != [o] {
        return shape_err(format!(
            "bias {:?} does not match {o} outputs",
            bias.shape()
        ));
    }
    let rows = match *input.shape() {
        [n] if n == i => 1,
        [r, n] if n == i => r,
        ref s => return shape_err(format!("input {s:?} does not match {i} inputs")),
    };
    let x = input.data();
    let w = weights.data();
    let mut out = Vec::with_capacity(rows * o);
    for r in 0..rows {
        let mut y = bias.data().to_vec();
        for (a, &xv) in x[r * i..(r + 1) * i].iter().enumerate() {
            for (yk, wk) in y.iter_mut().zip(&w[a * o..(a + 1) * o]) {
                *yk += xv * wk;
            }
        }
        out.extend(y);
    }
    let shape = if input.rank() == 1 {
        vec![o]
    } else {
        vec![rows, o]
    };
    Tensor::new(shape, out)
}
