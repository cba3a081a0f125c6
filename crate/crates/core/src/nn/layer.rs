//! Layer stack with an explicit gradient tape.
//!
//! `forward` returns the output plus a [`GradTape`] holding whatever each layer
//! needs for its backward rule, so one stack can be run on several batches
//! before any of them is back-propagated.

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::nn::activation::{leaky_relu, leaky_relu_backward_owned};
use crate::nn::batchnorm::{BatchNorm, BnCache};
use crate::nn::conv::{
    conv2d_depthwise, conv2d_depthwise_backward, conv2d_pointwise, conv2d_pointwise_backward,
    conv2d_standard, conv2d_standard_backward, Padding,
};
use crate::nn::optim::Param;
use crate::nn::pool::{avgpool, avgpool_backward, PoolDims};
use crate::nn::Mode;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Adds a trailing channel axis: `[N, H, W]` -> `[N, H, W, 1]`.
    AddChannel,
    AvgPool(PoolDims),
    Depthwise {
        kernel: Param,
        padding: Padding,
    },
    Pointwise {
        kernel: Param,
    },
    Conv {
        kernel: Param,
        padding: Padding,
    },
    BatchNorm(BatchNorm),
    LeakyRelu(f64),
    Flatten,
}

#[derive(Debug, Clone)]
pub enum Cache {
    Shape(Vec<usize>),
    Input(Tensor),
    Norm(BnCache),
}

/// Per-layer forward caches for one batch.
#[derive(Debug, Clone, Default)]
pub struct GradTape {
    caches: Vec<Cache>,
}

impl GradTape {
    pub fn len(&self) -> usize {
        self.caches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }
}

fn glorot<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Param {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Param::new(Tensor::uniform(shape, -a, a, rng))
}

impl Layer {
    pub fn depthwise<R: Rng + ?Sized>(k: usize, channels: usize, rng: &mut R) -> Self {
        Layer::Depthwise {
            kernel: glorot(&[k, k, channels], k * k, k * k, rng),
            padding: Padding::Same,
        }
    }

    pub fn pointwise<R: Rng + ?Sized>(ci: usize, co: usize, rng: &mut R) -> Self {
        Layer::Pointwise {
            kernel: glorot(&[1, 1, ci, co], ci, co, rng),
        }
    }

    pub fn conv<R: Rng + ?Sized>(k: usize, ci: usize, co: usize, rng: &mut R) -> Self {
        Layer::Conv {
            kernel: glorot(&[k, k, ci, co], k * k * ci, k * k * co, rng),
            padding: Padding::Same,
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Depthwise { kernel, .. }
            | Layer::Pointwise { kernel }
            | Layer::Conv { kernel, .. } => vec![kernel],
            Layer::BatchNorm(bn) => vec![&mut bn.gamma, &mut bn.beta],
            _ => vec![],
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Depthwise { kernel, .. }
            | Layer::Pointwise { kernel }
            | Layer::Conv { kernel, .. } => vec![kernel],
            Layer::BatchNorm(bn) => vec![&bn.gamma, &bn.beta],
            _ => vec![],
        }
    }

    pub fn forward(&mut self, x: Tensor, mode: Mode) -> Result<(Tensor, Cache)> {
        let out = match self {
            Layer::AddChannel => {
                let mut shape = x.shape().to_vec();
                let cache = Cache::Shape(shape.clone());
                shape.push(1);
                return Ok((x.reshape(&shape)?, cache));
            }
            Layer::AvgPool(dims) => {
                let y = avgpool(&x, *dims)?;
                return Ok((y, Cache::Shape(x.shape().to_vec())));
            }
            Layer::Depthwise { kernel, padding } => conv2d_depthwise(&x, &kernel.value, *padding)?,
            Layer::Pointwise { kernel } => conv2d_pointwise(&x, &kernel.value)?,
            Layer::Conv { kernel, padding } => conv2d_standard(&x, &kernel.value, *padding)?,
            Layer::BatchNorm(bn) => {
                let (y, c) = bn.forward_owned(x, mode)?;
                return Ok((y, Cache::Norm(c)));
            }
            Layer::LeakyRelu(slope) => leaky_relu(&x, *slope),
            Layer::Flatten => {
                let shape = x.shape().to_vec();
                let n = shape[0];
                let y = x.reshape(&[n, shape[1..].iter().product()])?;
                return Ok((y, Cache::Shape(shape)));
            }
        };
        Ok((out, Cache::Input(x)))
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the layer input.
    pub fn backward(&mut self, cache: &Cache, grad: Tensor) -> Result<Tensor> {
        let gin = match (self, cache) {
            (Layer::AddChannel, Cache::Shape(s)) | (Layer::Flatten, Cache::Shape(s)) => {
                grad.reshape(s)?
            }
            (Layer::AvgPool(dims), Cache::Shape(s)) => avgpool_backward(s, &grad, *dims)?,
            (Layer::Depthwise { kernel, padding }, Cache::Input(x)) => {
                let (gx, gk) = conv2d_depthwise_backward(x, &kernel.value, &grad, *padding)?;
                kernel.grad.add_assign(&gk)?;
                gx
            }
            (Layer::Pointwise { kernel }, Cache::Input(x)) => {
                let (gx, gk) = conv2d_pointwise_backward(x, &kernel.value, &grad)?;
                kernel.grad.add_assign(&gk)?;
                gx
            }
            (Layer::Conv { kernel, padding }, Cache::Input(x)) => {
                let (gx, gk) = conv2d_standard_backward(x, &kernel.value, &grad, *padding)?;
                kernel.grad.add_assign(&gk)?;
                gx
            }
            (Layer::BatchNorm(bn), Cache::Norm(c)) => bn.backward_owned(c, grad)?,
            (Layer::LeakyRelu(slope), Cache::Input(x)) => {
                leaky_relu_backward_owned(x, grad, *slope)?
            }
            (layer, _) => return shape_err(format!("cache does not belong to {layer:?}")),
        };
        Ok(gin)
    }
}

/// Runs `layers` in order, recording a tape.
pub fn forward_stack(layers: &mut [Layer], x: Tensor, mode: Mode) -> Result<(Tensor, GradTape)> {
    let mut tape = GradTape {
        caches: Vec::with_capacity(layers.len()),
    };
    let mut h = x;
    for layer in layers.iter_mut() {
        let (y, c) = layer.forward(h, mode)?;
        tape.caches.push(c);
        h = y;
    }
    h.ensure_finite("forward pass")?;
    Ok((h, tape))
}

/// Back-propagates `grad` through `layers` using `tape`; returns the input gradient.
pub fn backward_stack(layers: &mut [Layer], tape: &GradTape, grad: Tensor) -> Result<Tensor> {
    if tape.caches.len() != layers.len() {
        return shape_err("tape length does not match layer stack");
    }
    let mut g = grad;
    for (layer, cache) in layers.iter_mut().zip(&tape.caches).rev() {
        g = layer.backward(cache, g)?;
    }
    g.ensure_finite("backward pass")?;
    Ok(g)
}
