use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::arch::{build_sepconv, build_stdconv, ModelSpec, DEFAULT_LAMBDA};
use crate::error::{Error, Result};

/// The seven training variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Standard convolutions, source supervision only.
    Stdconv,
    /// Separable convolutions, source supervision only.
    Sepconv,
    /// Supervised on the labeled target adaptation samples only.
    Tgt,
    /// Source-trained separable model fine-tuned on the labeled target samples.
    Ft,
    /// Supervised on source and labeled target samples together.
    Jnt,
    /// Source supervision plus a feature-mean discrepancy penalty.
    Mmd,
    /// Domain adversarial training through a gradient reversal layer.
    Dat,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Stdconv,
        Strategy::Sepconv,
        Strategy::Tgt,
        Strategy::Ft,
        Strategy::Jnt,
        Strategy::Mmd,
        Strategy::Dat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Stdconv => "stdconv",
            Strategy::Sepconv => "sepconv",
            Strategy::Tgt => "tgt",
            Strategy::Ft => "ft",
            Strategy::Jnt => "jnt",
            Strategy::Mmd => "mmd",
            Strategy::Dat => "dat",
        }
    }

    /// Row label in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Strategy::Stdconv => "StdConv",
            Strategy::Sepconv => "SepConv",
            Strategy::Tgt => "SepConv-tgt",
            Strategy::Ft => "SepConv-ft",
            Strategy::Jnt => "SepConv-jnt",
            Strategy::Mmd => "SepConv-mmd",
            Strategy::Dat => "SepConv-dat",
        }
    }

    pub fn reads_target_labels(self) -> bool {
        matches!(self, Strategy::Tgt | Strategy::Ft | Strategy::Jnt)
    }

    pub fn uses_target_inputs(self) -> bool {
        !matches!(self, Strategy::Stdconv | Strategy::Sepconv)
    }

    /// Architecture trained by this strategy; only `dat` keeps the domain head.
    pub fn model_spec(self, lambda: f64) -> Result<ModelSpec> {
        match self {
            Strategy::Stdconv => Ok(build_stdconv().without_domain_head()),
            Strategy::Dat => build_sepconv().with_lambda(lambda),
            _ => Ok(build_sepconv().without_domain_head()),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_lr() -> f64 {
    0.001
}
fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    32
}
fn default_mmd_weight() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub strategy: Strategy,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub source_batch: usize,
    #[serde(default = "default_batch")]
    pub target_batch: usize,
    /// Required; unseeded runs are rejected.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_mmd_weight")]
    pub mmd_weight: f64,
}

impl TrainConfig {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        Self {
            strategy,
            lambda: default_lambda(),
            learning_rate: default_lr(),
            epochs: default_epochs(),
            source_batch: default_batch(),
            target_batch: default_batch(),
            seed: Some(seed),
            mmd_weight: default_mmd_weight(),
        }
    }

    pub fn validate(&self) -> Result<u64> {
        let seed = self
            .seed
            .ok_or_else(|| Error::Config("unseeded training run rejected; set a seed".into()))?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.epochs == 0 || self.source_batch == 0 || self.target_batch == 0 {
            return Err(Error::Config(
                "epochs and batch sizes must be positive".into(),
            ));
        }
        if !(self.mmd_weight >= 0.0) || !self.mmd_weight.is_finite() {
            return Err(Error::Config("mmd weight must be >= 0".into()));
        }
        Ok(seed)
    }
}
