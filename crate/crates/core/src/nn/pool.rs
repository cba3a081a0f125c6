//! Kernel-2, stride-2 average pooling in ceil mode.
//!
//! A boundary window that hangs off the end averages only the elements it covers.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolDims {
    /// Pools the W (frequency) axis only.
    Freq,
    /// Pools H and W.
    Spatial,
}

pub fn pooled_extent(n: usize) -> usize {
    n.div_ceil(2)
}

fn out_dims(h: usize, w: usize, dims: PoolDims) -> (usize, usize) {
    match dims {
        PoolDims::Freq => (h, pooled_extent(w)),
        PoolDims::Spatial => (pooled_extent(h), pooled_extent(w)),
    }
}

fn window(o: usize, n: usize, pooled: bool) -> (usize, usize) {
    if pooled {
        (2 * o, (2 * o + 2).min(n))
    } else {
        (o, o + 1)
    }
}

pub fn avgpool(input: &Tensor, dims: PoolDims) -> Result<Tensor> {
    let (n, h, w, c) = input.as_batched()?;
    if h == 0 || w == 0 {
        return shape_err("cannot pool an empty dimension");
    }
    let (ho, wo) = out_dims(h, w, dims);
    let pool_h = dims == PoolDims::Spatial;
    let x = input.data();
    let mut out = vec![0.0; n * ho * wo * c];
    for b in 0..n {
        for oy in 0..ho {
            let (y0, y1) = window(oy, h, pool_h);
            for ox in 0..wo {
                let (x0, x1) = window(ox, w, true);
                let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f64;
                let dst = &mut out[((b * ho + oy) * wo + ox) * c..][..c];
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let src = &x[((b * h + iy) * w + ix) * c..][..c];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
                dst.iter_mut().for_each(|d| *d *= inv);
            }
        }
    }
    let shape = if input.rank() == 3 {
        vec![ho, wo, c]
    } else {
        vec![n, ho, wo, c]
    };
    Tensor::new(shape, out)
}

/// Gradient with respect to the pooling input of shape `input_shape`.
pub fn avgpool_backward(
    input_shape: &[usize],
    grad_out: &Tensor,
    dims: PoolDims,
) -> Result<Tensor> {
    let (n, h, w, c) = match *input_shape {
        [h, w, c] => (1, h, w, c),
        [n, h, w, c] => (n, h, w, c),
        _ => return shape_err(format!("avgpool backward: bad input shape {input_shape:?}")),
    };
    if n * h * w * c == 0 {
        return shape_err("cannot pool an empty dimension");
    }
    let (ho, wo) = out_dims(h, w, dims);
    if grad_out.len() != n * ho * wo * c {
        return shape_err("avgpool backward: gradient shape mismatch");
    }
    let pool_h = dims == PoolDims::Spatial;
    let go = grad_out.data();
    let inv_w: Vec<f64> = (0..wo)
        .map(|ox| {
            let (x0, x1) = window(ox, w, true);
            1.0 / (x1 - x0) as f64
        })
        .collect();
    let mut gin = Vec::with_capacity(n * h * w * c);
    for b in 0..n {
        for iy in 0..h {
            let oy = if pool_h { iy / 2 } else { iy };
            let (y0, y1) = window(oy, h, pool_h);
            let inv_h = 1.0 / (y1 - y0) as f64;
            let grow = &go[(b * ho + oy) * wo * c..][..wo * c];
            for ix in 0..w {
                let ox = ix / 2;
                let inv = inv_h * inv_w[ox];
                gin.extend(grow[ox * c..(ox + 1) * c].iter().map(|g| g * inv));
            }
        }
    }
    Tensor::new(input_shape.to_vec(), gin)
}
