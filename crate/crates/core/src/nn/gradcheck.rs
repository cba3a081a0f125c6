//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::nn::layer::{backward_stack, forward_stack, Layer};
use crate::nn::loss::batch_cross_entropy;
use crate::nn::Mode;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-3;

/// Gradients smaller than this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// Each coordinate is differenced at `step`, `step / 10`, ... this many sizes.
pub const STEP_DECADES: i32 = 6;

/// Something with a flat coordinate view, a scalar loss and an analytic gradient.
pub trait Differentiable {
    fn num_coords(&self) -> usize;
    fn coord(&self, i: usize) -> f64;
    fn set_coord(&mut self, i: usize, v: f64);
    fn loss(&mut self) -> Result<f64>;
    /// Analytic gradient of `loss` over every coordinate.
    fn gradient(&mut self) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coord: usize,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares analytic and central-difference gradients on `coords` (all when `None`).
///
/// Each coordinate keeps its best agreement over steps `step * 10^-k` for
/// `k < STEP_DECADES`, so a step that straddles a LeakyReLU kink does not
/// count against an otherwise correct gradient.
pub fn gradient_check<D: Differentiable + ?Sized>(
    model: &mut D,
    step: f64,
    coords: Option<&[usize]>,
) -> Result<GradCheckReport> {
    let analytic = model.gradient()?;
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..model.num_coords()).collect();
            &all
        }
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_coord: 0,
        checked: 0,
    };
    for &i in coords {
        let orig = model.coord(i);
        let mut err = f64::INFINITY;
        for k in 0..STEP_DECADES {
            let h = step * 10f64.powi(-k);
            model.set_coord(i, orig + h);
            let up = model.loss()?;
            model.set_coord(i, orig - h);
            let down = model.loss()?;
            model.set_coord(i, orig);
            err = err.min(relative_error(analytic[i], (up - down) / (2.0 * h)));
            if err < 1e-8 {
                break;
            }
        }
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_coord = i;
        }
        report.checked += 1;
    }
    Ok(report)
}

/// How a [`StackFragment`] turns its output into a scalar.
#[derive(Debug, Clone)]
pub enum FragmentLoss {
    /// `sum(w * y)` with fixed weights.
    Linear(Tensor),
    /// Mean cross-entropy of `[N, k]` outputs against labels.
    CrossEntropy(Vec<usize>),
}

/// A layer stack plus input, viewed as parameters followed by input coordinates.
#[derive(Debug, Clone)]
pub struct StackFragment {
    pub layers: Vec<Layer>,
    pub input: Tensor,
    pub loss: FragmentLoss,
    pub mode: Mode,
}

impl StackFragment {
    fn locate(&self, mut i: usize) -> (Option<(usize, usize)>, usize) {
        for (li, layer) in self.layers.iter().enumerate() {
            for (pi, p) in layer.params().iter().enumerate() {
                if i < p.value.len() {
                    return (Some((li, pi)), i);
                }
                i -= p.value.len();
            }
        }
        (None, i)
    }

    fn num_params(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|p| p.value.len())
            .sum()
    }

    fn head(&self, y: &Tensor) -> Result<(f64, Tensor)> {
        match &self.loss {
            FragmentLoss::Linear(w) => {
                let l = y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
                Ok((l, Tensor::new(y.shape().to_vec(), w.data().to_vec())?))
            }
            FragmentLoss::CrossEntropy(labels) => batch_cross_entropy(y, labels),
        }
    }
}

impl Differentiable for StackFragment {
    fn num_coords(&self) -> usize {
        self.num_params() + self.input.len()
    }

    fn coord(&self, i: usize) -> f64 {
        match self.locate(i) {
            (Some((li, pi)), k) => self.layers[li].params()[pi].value.data()[k],
            (None, k) => self.input.data()[k],
        }
    }

    fn set_coord(&mut self, i: usize, v: f64) {
        match self.locate(i) {
            (Some((li, pi)), k) => self.layers[li].params_mut()[pi].value.data_mut()[k] = v,
            (None, k) => self.input.data_mut()[k] = v,
        }
    }

    fn loss(&mut self) -> Result<f64> {
        let (y, _) = forward_stack(&mut self.layers, self.input.clone(), self.mode)?;
        Ok(self.head(&y)?.0)
    }

    fn gradient(&mut self) -> Result<Vec<f64>> {
        for l in &mut self.layers {
            l.params_mut().into_iter().for_each(|p| p.zero_grad());
        }
        let (y, tape) = forward_stack(&mut self.layers, self.input.clone(), self.mode)?;
        let (_, gy) = self.head(&y)?;
        let gx = backward_stack(&mut self.layers, &tape, gy)?;
        let mut out: Vec<f64> = self
            .layers
            .iter()
            .flat_map(|l| l.params())
            .flat_map(|p| p.grad.data().to_vec())
            .collect();
        out.extend_from_slice(gx.data());
        Ok(out)
    }
}
