//! Trainable instantiation of a [`ModelSpec`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::spec::{LayerSpec, ModelSpec};
use crate::error::{shape_err, Error, Result};
use crate::nn::batchnorm::BatchNorm;
use crate::nn::dense::Linear;
use crate::nn::grl::GradientReversal;
use crate::nn::layer::{backward_stack, forward_stack, GradTape, Layer};
use crate::nn::loss::softmax;
use crate::nn::optim::Param;
use crate::nn::Mode;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainClassifier {
    pub grl: GradientReversal,
    pub fc: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: ModelSpec,
    pub extractor: Vec<Layer>,
    pub predictor: Linear,
    pub domain: Option<DomainClassifier>,
    domain_calls: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub class: usize,
    pub feature: Vec<f64>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Network {
    /// Glorot-uniform weights from `seed`; batch-norm gamma 1, beta 0.
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut extractor = Vec::with_capacity(spec.layers.len());
        for nl in &spec.layers {
            extractor.push(match nl.layer {
                LayerSpec::AddChannel => Layer::AddChannel,
                LayerSpec::AvgPool { dims } => Layer::AvgPool(dims),
                LayerSpec::Depthwise { kernel, channels } => {
                    Layer::depthwise(kernel, channels, &mut rng)
                }
                LayerSpec::Pointwise {
                    in_channels,
                    out_channels,
                } => Layer::pointwise(in_channels, out_channels, &mut rng),
                LayerSpec::Conv {
                    kernel,
                    in_channels,
                    out_channels,
                } => Layer::conv(kernel, in_channels, out_channels, &mut rng),
                LayerSpec::BatchNorm { channels } => Layer::BatchNorm(BatchNorm::new(channels)),
                LayerSpec::LeakyRelu { slope } => Layer::LeakyRelu(slope),
                LayerSpec::Flatten => Layer::Flatten,
            });
        }
        let predictor = Linear::init(spec.predictor.inputs, spec.predictor.classes, &mut rng);
        let domain = match spec.domain_head {
            Some(d) => Some(DomainClassifier {
                grl: GradientReversal::new(d.lambda)?,
                fc: Linear::init(d.inputs, d.classes, &mut rng),
            }),
            None => None,
        };
        Ok(Self {
            spec: spec.clone(),
            extractor,
            predictor,
            domain,
            domain_calls: 0,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn lambda(&self) -> Option<f64> {
        self.domain.as_ref().map(|d| d.grl.lambda())
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        let d = self
            .domain
            .as_mut()
            .ok_or_else(|| Error::Config("model has no domain classifier".into()))?;
        d.grl = GradientReversal::new(lambda)?;
        if let Some(h) = &mut self.spec.domain_head {
            h.lambda = lambda;
        }
        Ok(())
    }

    /// Number of times the domain classifier has been evaluated.
    pub fn domain_head_calls(&self) -> u64 {
        self.domain_calls
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (f, b) = self.spec.input;
        match *x.shape() {
            [_, ff, bb] if ff == f && bb == b => Ok(()),
            ref s => shape_err(format!("expected [N,{f},{b}] input, got {s:?}")),
        }
    }

    /// `[N, frames, bins]` -> `[N, feature_dim]`.
    pub fn extract(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, GradTape)> {
        self.check_input(x)?;
        forward_stack(&mut self.extractor, x.clone(), mode)
    }

    pub fn extract_backward(&mut self, tape: &GradTape, grad: Tensor) -> Result<Tensor> {
        backward_stack(&mut self.extractor, tape, grad)
    }

    pub fn classify(&self, features: &Tensor) -> Result<Tensor> {
        self.predictor.forward(features)
    }

    /// Domain logits through the gradient reversal layer.
    pub fn domain_logits(&mut self, features: &Tensor) -> Result<Tensor> {
        let d = self
            .domain
            .as_ref()
            .ok_or_else(|| Error::Config("model has no domain classifier".into()))?;
        self.domain_calls += 1;
        d.fc.forward(&d.grl.forward(features))
    }

    /// Back-propagates domain-logit gradients into the domain classifier and
    /// returns the reversed gradient for the features.
    pub fn domain_backward(&mut self, features: &Tensor, grad_logits: &Tensor) -> Result<Tensor> {
        let d = self
            .domain
            .as_mut()
            .ok_or_else(|| Error::Config("model has no domain classifier".into()))?;
        let g = d.fc.backward(features, grad_logits)?;
        Ok(d.grl.backward(&g))
    }

    /// Clears parameter gradients and any pending shared-statistics gradients.
    pub fn zero_grad(&mut self) {
        for p in self.all_params_mut() {
            p.zero_grad();
        }
        for bn in self.batch_norms_mut() {
            bn.shared_sums = None;
        }
    }

    pub fn extractor_params_mut(&mut self) -> Vec<&mut Param> {
        self.extractor
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn predictor_params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.predictor.weight, &mut self.predictor.bias]
    }

    /// Extractor and predictor parameters at scale 1, followed by the domain
    /// classifier's at `domain_scale` when given.
    pub fn param_groups_mut(&mut self, domain_scale: Option<f64>) -> Vec<(&mut Param, f64)> {
        let mut v: Vec<(&mut Param, f64)> = self
            .extractor
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .map(|p| (p, 1.0))
            .collect();
        v.push((&mut self.predictor.weight, 1.0));
        v.push((&mut self.predictor.bias, 1.0));
        if let (Some(scale), Some(d)) = (domain_scale, &mut self.domain) {
            v.push((&mut d.fc.weight, scale));
            v.push((&mut d.fc.bias, scale));
        }
        v
    }

    pub fn domain_params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.domain {
            Some(d) => vec![&mut d.fc.weight, &mut d.fc.bias],
            None => vec![],
        }
    }

    /// Every trainable parameter in declaration order.
    pub fn all_params(&self) -> Vec<&Param> {
        let mut v: Vec<&Param> = self.extractor.iter().flat_map(|l| l.params()).collect();
        v.push(&self.predictor.weight);
        v.push(&self.predictor.bias);
        if let Some(d) = &self.domain {
            v.push(&d.fc.weight);
            v.push(&d.fc.bias);
        }
        v
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut Param> {
        let mut v: Vec<&mut Param> = self
            .extractor
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect();
        v.push(&mut self.predictor.weight);
        v.push(&mut self.predictor.bias);
        if let Some(d) = &mut self.domain {
            v.push(&mut d.fc.weight);
            v.push(&mut d.fc.bias);
        }
        v
    }

    pub fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm> {
        self.extractor.iter().filter_map(|l| match l {
            Layer::BatchNorm(bn) => Some(bn),
            _ => None,
        })
    }

    pub fn batch_norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNorm> {
        self.extractor.iter_mut().filter_map(|l| match l {
            Layer::BatchNorm(bn) => Some(bn),
            _ => None,
        })
    }

    pub fn num_params(&self) -> usize {
        self.all_params().iter().map(|p| p.value.len()).sum()
    }

    pub fn reset_optimizer_state(&mut self) {
        for p in self.all_params_mut() {
            p.reset_moments();
        }
    }

    /// Eval-mode inference on `[N, frames, bins]`; never touches the domain classifier.
    pub fn predict_batch(&mut self, x: &Tensor) -> Result<Vec<Prediction>> {
        let (feats, _) = self.extract(x, Mode::Eval)?;
        let logits = self.classify(&feats)?;
        let n = x.shape()[0];
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let probs = softmax(logits.row(i));
            out.push(Prediction {
                class: argmax(&probs),
                probs,
                feature: feats.row(i).to_vec(),
            });
        }
        Ok(out)
    }

    /// Single `[frames, bins]` spectrogram segment.
    pub fn predict(&mut self, segment: &Tensor) -> Result<Prediction> {
        let (f, b) = self.spec.input;
        if segment.shape() != [f, b] {
            return shape_err(format!(
                "expected [{f},{b}] segment, got {:?}",
                segment.shape()
            ));
        }
        let x = segment.clone().reshape(&[1, f, b])?;
        Ok(self.predict_batch(&x)?.remove(0))
    }
}
