//! Declarative model descriptions.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::activation::LEAKY_SLOPE;
use crate::nn::pool::{pooled_extent, PoolDims};

pub const SPEC_FORMAT_VERSION: u32 = 1;
pub const INPUT_FRAMES: usize = 127;
pub const INPUT_BINS: usize = 251;
pub const FEATURE_DIM: usize = 256;
pub const NUM_CLASSES: usize = 3;
pub const NUM_DOMAINS: usize = 3;
pub const BLOCK_CHANNELS: usize = 16;
pub const NUM_BLOCKS: usize = 5;
pub const KERNEL: usize = 3;
pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    AddChannel,
    AvgPool {
        dims: PoolDims,
    },
    Depthwise {
        kernel: usize,
        channels: usize,
    },
    Pointwise {
        in_channels: usize,
        out_channels: usize,
    },
    Conv {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
    },
    BatchNorm {
        channels: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    Flatten,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::AddChannel => "reshape",
            LayerSpec::AvgPool {
                dims: PoolDims::Freq,
            } => "avgpool1d",
            LayerSpec::AvgPool {
                dims: PoolDims::Spatial,
            } => "avgpool2d",
            LayerSpec::Depthwise { .. } => "depthwise",
            LayerSpec::Pointwise { .. } => "pointwise",
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::BatchNorm { .. } => "batchnorm",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Flatten => "flatten",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedLayer {
    pub name: String,
    #[serde(flatten)]
    pub layer: LayerSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub inputs: usize,
    pub classes: usize,
}

/// Gradient-reversal-fronted domain classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainHeadSpec {
    pub inputs: usize,
    pub classes: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub version: u32,
    pub name: String,
    /// `(frames, frequency bins)`.
    pub input: (usize, usize),
    pub layers: Vec<NamedLayer>,
    pub predictor: HeadSpec,
    pub domain_head: Option<DomainHeadSpec>,
}

fn named(name: impl Into<String>, layer: LayerSpec) -> NamedLayer {
    NamedLayer {
        name: name.into(),
        layer,
    }
}

fn front() -> Vec<NamedLayer> {
    vec![
        named("input", LayerSpec::AddChannel),
        named(
            "pool_freq",
            LayerSpec::AvgPool {
                dims: PoolDims::Freq,
            },
        ),
    ]
}

fn heads(name: &str, layers: Vec<NamedLayer>) -> ModelSpec {
    ModelSpec {
        version: SPEC_FORMAT_VERSION,
        name: name.into(),
        input: (INPUT_FRAMES, INPUT_BINS),
        layers,
        predictor: HeadSpec {
            inputs: FEATURE_DIM,
            classes: NUM_CLASSES,
        },
        domain_head: Some(DomainHeadSpec {
            inputs: FEATURE_DIM,
            classes: NUM_DOMAINS,
            lambda: DEFAULT_LAMBDA,
        }),
    }
}

/// Frequency pooling, five depthwise-separable blocks, flatten to 256.
pub fn build_sepconv() -> ModelSpec {
    let mut layers = front();
    for b in 1..=NUM_BLOCKS {
        let ci = if b == 1 { 1 } else { BLOCK_CHANNELS };
        let p = format!("block{b}");
        layers.extend([
            named(
                format!("{p}.dw"),
                LayerSpec::Depthwise {
                    kernel: KERNEL,
                    channels: ci,
                },
            ),
            named(format!("{p}.dw_bn"), LayerSpec::BatchNorm { channels: ci }),
            named(
                format!("{p}.act"),
                LayerSpec::LeakyRelu { slope: LEAKY_SLOPE },
            ),
            named(
                format!("{p}.pw"),
                LayerSpec::Pointwise {
                    in_channels: ci,
                    out_channels: BLOCK_CHANNELS,
                },
            ),
            named(
                format!("{p}.pw_bn"),
                LayerSpec::BatchNorm {
                    channels: BLOCK_CHANNELS,
                },
            ),
            named(
                format!("{p}.pool"),
                LayerSpec::AvgPool {
                    dims: PoolDims::Spatial,
                },
            ),
        ]);
    }
    layers.push(named("flatten", LayerSpec::Flatten));
    heads("sepconv", layers)
}

/// Same pooling chain with a standard 3x3 convolution per block.
pub fn build_stdconv() -> ModelSpec {
    let mut layers = front();
    for b in 1..=NUM_BLOCKS {
        let ci = if b == 1 { 1 } else { BLOCK_CHANNELS };
        let p = format!("block{b}");
        layers.extend([
            named(
                format!("{p}.conv"),
                LayerSpec::Conv {
                    kernel: KERNEL,
                    in_channels: ci,
                    out_channels: BLOCK_CHANNELS,
                },
            ),
            named(
                format!("{p}.bn"),
                LayerSpec::BatchNorm {
                    channels: BLOCK_CHANNELS,
                },
            ),
            named(
                format!("{p}.act"),
                LayerSpec::LeakyRelu { slope: LEAKY_SLOPE },
            ),
            named(
                format!("{p}.pool"),
                LayerSpec::AvgPool {
                    dims: PoolDims::Spatial,
                },
            ),
        ]);
    }
    layers.push(named("flatten", LayerSpec::Flatten));
    heads("stdconv", layers)
}

/// One step of a shape trace, single example (no batch axis).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub name: String,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

impl ModelSpec {
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
        }
        if let Some(d) = &mut self.domain_head {
            d.lambda = lambda;
        }
        Ok(self)
    }

    /// The same layer graph for a different `(frames, bins)` input, with both
    /// heads resized to the resulting feature width.
    pub fn resized(mut self, input: (usize, usize)) -> Result<Self> {
        self.input = input;
        let d = self.feature_dim()?;
        self.predictor.inputs = d;
        if let Some(h) = &mut self.domain_head {
            h.inputs = d;
        }
        Ok(self)
    }

    pub fn without_domain_head(mut self) -> Self {
        self.domain_head = None;
        self
    }

    /// Propagates a single `(frames, bins)` input through the extractor.
    pub fn shape_trace(&self, input: (usize, usize)) -> Result<Vec<TraceStep>> {
        let mut shape = vec![input.0, input.1];
        let mut steps = Vec::with_capacity(self.layers.len());
        for nl in &self.layers {
            let next = match (&nl.layer, shape.as_slice()) {
                (LayerSpec::AddChannel, [h, w]) => vec![*h, *w, 1],
                (
                    LayerSpec::AvgPool {
                        dims: PoolDims::Freq,
                    },
                    [h, w, c],
                ) => {
                    vec![*h, pooled_extent(*w), *c]
                }
                (
                    LayerSpec::AvgPool {
                        dims: PoolDims::Spatial,
                    },
                    [h, w, c],
                ) => {
                    vec![pooled_extent(*h), pooled_extent(*w), *c]
                }
                (LayerSpec::Depthwise { channels, .. }, [h, w, c]) if c == channels => {
                    vec![*h, *w, *c]
                }
                (
                    LayerSpec::Pointwise {
                        in_channels,
                        out_channels,
                    }
                    | LayerSpec::Conv {
                        in_channels,
                        out_channels,
                        ..
                    },
                    [h, w, c],
                ) if c == in_channels => vec![*h, *w, *out_channels],
                (LayerSpec::BatchNorm { channels }, s) if s.last() == Some(channels) => s.to_vec(),
                (LayerSpec::LeakyRelu { .. }, s) => s.to_vec(),
                (LayerSpec::Flatten, s) => vec![s.iter().product()],
                (l, s) => return shape_err(format!("layer {} ({l:?}) cannot take {s:?}", nl.name)),
            };
            steps.push(TraceStep {
                name: nl.name.clone(),
                input: shape.clone(),
                output: next.clone(),
            });
            shape = next;
        }
        Ok(steps)
    }

    pub fn feature_dim(&self) -> Result<usize> {
        let trace = self.shape_trace(self.input)?;
        match trace.last().map(|s| s.output.as_slice()) {
            Some([d]) => Ok(*d),
            other => shape_err(format!("extractor does not end flat: {other:?}")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model spec version {}",
                self.version
            )));
        }
        let d = self.feature_dim()?;
        if d != self.predictor.inputs {
            return shape_err(format!(
                "feature dim {d} vs predictor inputs {}",
                self.predictor.inputs
            ));
        }
        if let Some(h) = &self.domain_head {
            if h.inputs != d {
                return shape_err(format!(
                    "feature dim {d} vs domain head inputs {}",
                    h.inputs
                ));
            }
            if !(h.lambda >= 0.0) {
                return Err(Error::Config("domain head lambda must be >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Stable digest of the architecture (layer list and heads, excluding lambda).
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        let arch = serde_json::json!({
            "version": self.version,
            "input": self.input,
            "layers": self.layers,
            "predictor": self.predictor,
            "domain": self.domain_head.map(|d| (d.inputs, d.classes)),
        });
        h.update(arch.to_string().as_bytes());
        h.finalize().into()
    }
}
