//! Single optimization steps for supervised, mean-discrepancy and domain
//! adversarial training.

use crate::arch::Network;
use crate::error::{Error, Result};
use crate::nn::optim::Adam;
use crate::nn::Mode;
use crate::tensor::Tensor;
use crate::train::losses::{domain_loss_part, label_loss, mmd_loss};

/// `[N, frames, bins]` inputs with optional disease labels and domain labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub labels: Vec<Option<usize>>,
    pub domains: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    fn check(&self, what: &str) -> Result<()> {
        let n = self.x.shape().first().copied().unwrap_or(0);
        if n == 0 || self.is_empty() {
            return Err(Error::Config(format!("{what} batch is empty")));
        }
        if n != self.domains.len() || n != self.labels.len() {
            return Err(Error::Shape(format!(
                "{what} batch has {n} inputs but mismatched label lists"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub label: f64,
    pub domain: Option<f64>,
    pub mmd: Option<f64>,
}

/// Which terms of the adversarial objective reach the gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientPaths {
    Both,
    LabelOnly,
    DomainOnly,
}

/// Accumulates supervised gradients for extractor and predictor.
pub fn supervised_gradients(net: &mut Network, batch: &Batch) -> Result<f64> {
    batch.check("source")?;
    net.zero_grad();
    let (f, tape) = net.extract(&batch.x, Mode::Train)?;
    let (loss, g_logits) = label_loss(&net.classify(&f)?, &batch.labels)?;
    let g_f = net.predictor.backward(&f, &g_logits)?;
    net.extract_backward(&tape, g_f)?;
    Ok(loss)
}

/// Cross-entropy step on extractor and predictor; a domain head, if any, is untouched.
pub fn supervised_step(net: &mut Network, adam: &mut Adam, batch: &Batch) -> Result<StepLosses> {
    let label = supervised_gradients(net, batch)?;
    adam.step(net.param_groups_mut(None));
    Ok(StepLosses {
        label,
        domain: None,
        mmd: None,
    })
}

/// Accumulates the adversarial gradients without stepping.
///
/// The predictor receives the label-loss gradient, the domain classifier the
/// plain domain-loss gradient, and the extractor the label-loss gradient plus
/// the domain-loss gradient reversed and scaled by `-lambda` at the gradient
/// reversal layer. The domain loss is the mean over the source and target rows
/// together.
///
/// Batch normalization uses one set of statistics for both domains: the target
/// batch is normalized with the source batch's statistics, and only the source
/// batch moves the running statistics. Gradients include the target pass's
/// dependence on those statistics.
pub fn dat_gradients(
    net: &mut Network,
    source: &Batch,
    target: &Batch,
    paths: GradientPaths,
) -> Result<StepLosses> {
    source.check("source")?;
    target.check("target")?;
    if net.domain.is_none() {
        return Err(Error::Config(
            "adversarial training needs a domain classifier".into(),
        ));
    }
    let rows = source.len() + target.len();
    net.zero_grad();

    let (fs, tape_s) = net.extract(&source.x, Mode::Train)?;
    let (ft, tape_t) = net.extract(&target.x, Mode::Shared)?;
    let (label, g_logits) = label_loss(&net.classify(&fs)?, &source.labels)?;
    let (ds, g_ds) = domain_loss_part(&net.domain_logits(&fs)?, &source.domains, rows)?;
    let (dt, g_dt) = domain_loss_part(&net.domain_logits(&ft)?, &target.domains, rows)?;
    if paths != GradientPaths::LabelOnly {
        let g_ft = net.domain_backward(&ft, &g_dt)?;
        net.extract_backward(&tape_t, g_ft)?;
    }
    drop(tape_t);
    let mut g_fs = match paths {
        GradientPaths::DomainOnly => Tensor::zeros(fs.shape()),
        _ => net.predictor.backward(&fs, &g_logits)?,
    };
    if paths != GradientPaths::LabelOnly {
        g_fs.add_assign(&net.domain_backward(&fs, &g_ds)?)?;
    }
    net.extract_backward(&tape_s, g_fs)?;
    Ok(StepLosses {
        label,
        domain: Some((ds + dt) / rows as f64),
        mmd: None,
    })
}

/// One adversarial update: extractor and predictor at unit scale, domain
/// classifier gradients scaled by lambda.
pub fn dat_step(
    net: &mut Network,
    adam: &mut Adam,
    source: &Batch,
    target: &Batch,
) -> Result<StepLosses> {
    let lambda = net
        .lambda()
        .ok_or_else(|| Error::Config("adversarial training needs a domain classifier".into()))?;
    let losses = dat_gradients(net, source, target, GradientPaths::Both)?;
    adam.step(net.param_groups_mut(Some(lambda)));
    Ok(losses)
}

/// Source cross-entropy plus `weight` times the squared feature-mean distance.
/// Batch normalization statistics are shared as in [`dat_gradients`].
pub fn mmd_step(
    net: &mut Network,
    adam: &mut Adam,
    source: &Batch,
    target: &Batch,
    weight: f64,
) -> Result<StepLosses> {
    source.check("source")?;
    target.check("target")?;
    net.zero_grad();
    let (fs, tape_s) = net.extract(&source.x, Mode::Train)?;
    let (ft, tape_t) = net.extract(&target.x, Mode::Shared)?;
    let (label, g_logits) = label_loss(&net.classify(&fs)?, &source.labels)?;
    let mmd = mmd_loss(&fs, &ft)?;
    let mut g_fs = net.predictor.backward(&fs, &g_logits)?;
    g_fs.add_assign(&mmd.grad_source.scale(weight))?;
    net.extract_backward(&tape_t, mmd.grad_target.scale(weight))?;
    net.extract_backward(&tape_s, g_fs)?;
    adam.step(net.param_groups_mut(None));
    Ok(StepLosses {
        label,
        domain: None,
        mmd: Some(mmd.value),
    })
}
