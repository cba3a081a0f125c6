//! Closed-form parameter and multiply-accumulate accounting.
//!
//! Convolutions carry no bias; batch norm contributes `2 * C` parameters
//! (gamma and beta); fully connected heads carry a bias. The contract MAC count
//! covers convolution and fully connected multiplies only. An elementwise-inclusive
//! figure (one MAC per batch-norm/activation output element and per pooling input
//! element) is reported alongside for comparison with published totals.

use std::fmt::Write as _;

use crate::arch::spec::{LayerSpec, ModelSpec};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Feature extractor and disease predictor.
    Inference,
    /// Inference plus the domain classifier.
    Training,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerResources {
    pub name: String,
    pub kind: String,
    pub output: Vec<usize>,
    pub params: u64,
    pub macs: u64,
    pub elementwise: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceReport {
    pub model: String,
    pub scope: Scope,
    pub layers: Vec<LayerResources>,
}

impl ResourceReport {
    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| l.params).sum()
    }

    /// Convolution and fully connected multiplies.
    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.macs).sum()
    }

    pub fn total_macs_elementwise_inclusive(&self) -> u64 {
        self.layers.iter().map(|l| l.macs + l.elementwise).sum()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerResources> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// `1 - self / baseline` for parameters and conv-only MACs.
    pub fn reduction_vs(&self, baseline: &ResourceReport) -> (f64, f64) {
        (
            1.0 - self.total_params() as f64 / baseline.total_params() as f64,
            1.0 - self.total_macs() as f64 / baseline.total_macs() as f64,
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,kind,params,macs\n");
        for l in &self.layers {
            let _ = writeln!(s, "{},{},{},{}", l.name, l.kind, l.params, l.macs);
        }
        let _ = writeln!(
            s,
            "total,total,{},{}",
            self.total_params(),
            self.total_macs()
        );
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<14} {:<11} {:>14} {:>10} {:>12} {:>12}",
            "layer", "kind", "output", "params", "macs", "elementwise"
        );
        for l in &self.layers {
            let _ = writeln!(
                s,
                "{:<14} {:<11} {:>14} {:>10} {:>12} {:>12}",
                l.name,
                l.kind,
                format!("{:?}", l.output),
                l.params,
                l.macs,
                l.elementwise
            );
        }
        let _ = writeln!(
            s,
            "{:<14} {:<11} {:>14} {:>10} {:>12} {:>12}",
            "total",
            "",
            "",
            self.total_params(),
            self.total_macs(),
            self.total_macs_elementwise_inclusive() - self.total_macs()
        );
        s
    }
}

fn prod(s: &[usize]) -> u64 {
    s.iter().map(|&d| d as u64).product()
}

/// Per-layer parameters and MACs for one forward pass of a `(frames, bins)` input.
pub fn resource_report(
    spec: &ModelSpec,
    input: (usize, usize),
    scope: Scope,
) -> Result<ResourceReport> {
    let trace = spec.shape_trace(input)?;
    let mut layers = Vec::new();
    for (nl, step) in spec.layers.iter().zip(&trace) {
        let out = &step.output;
        let (params, macs, elementwise) = match nl.layer {
            LayerSpec::Conv {
                kernel,
                in_channels,
                out_channels,
            } => (
                standard_params(kernel, kernel, in_channels, out_channels),
                standard_macs(kernel, kernel, in_channels, out[0], out[1], out_channels),
                0,
            ),
            LayerSpec::Depthwise { kernel, channels } => (
                depthwise_params(kernel, kernel, channels),
                depthwise_macs(kernel, kernel, out[0], out[1], channels),
                0,
            ),
            LayerSpec::Pointwise {
                in_channels,
                out_channels,
            } => (
                pointwise_params(in_channels, out_channels),
                pointwise_macs(in_channels, out[0], out[1], out_channels),
                0,
            ),
            LayerSpec::BatchNorm { channels } => (2 * channels as u64, 0, prod(out)),
            LayerSpec::LeakyRelu { .. } => (0, 0, prod(out)),
            LayerSpec::AvgPool { .. } => (0, 0, prod(&step.input)),
            LayerSpec::AddChannel | LayerSpec::Flatten => continue,
        };
        layers.push(LayerResources {
            name: nl.name.clone(),
            kind: nl.layer.kind_name().into(),
            output: out.clone(),
            params,
            macs,
            elementwise,
        });
    }
    let p = spec.predictor;
    layers.push(fc_row("predictor.fc", p.inputs, p.classes));
    if let (Scope::Training, Some(d)) = (scope, spec.domain_head) {
        layers.push(fc_row("domain.fc", d.inputs, d.classes));
    }
    Ok(ResourceReport {
        model: spec.name.clone(),
        scope,
        layers,
    })
}

fn fc_row(name: &str, inputs: usize, outputs: usize) -> LayerResources {
    LayerResources {
        name: name.into(),
        kind: "fc".into(),
        output: vec![outputs],
        params: (inputs * outputs + outputs) as u64,
        macs: (inputs * outputs) as u64,
        elementwise: 0,
    }
}

pub fn count_params(spec: &ModelSpec, scope: Scope) -> Result<ResourceReport> {
    resource_report(spec, spec.input, scope)
}

pub fn count_macs(spec: &ModelSpec, input: (usize, usize)) -> Result<ResourceReport> {
    resource_report(spec, input, Scope::Inference)
}

pub fn standard_params(wk: usize, hk: usize, ci: usize, co: usize) -> u64 {
    (wk * hk * ci * co) as u64
}

pub fn depthwise_params(wk: usize, hk: usize, ci: usize) -> u64 {
    (wk * hk * ci) as u64
}

pub fn pointwise_params(ci: usize, co: usize) -> u64 {
    (ci * co) as u64
}

pub fn standard_macs(wk: usize, hk: usize, ci: usize, ho: usize, wo: usize, co: usize) -> u64 {
    (wk * hk * ci) as u64 * (wo * ho * co) as u64
}

pub fn depthwise_macs(wk: usize, hk: usize, ho: usize, wo: usize, ci: usize) -> u64 {
    (wk * hk) as u64 * (wo * ho * ci) as u64
}

pub fn pointwise_macs(ci: usize, ho: usize, wo: usize, co: usize) -> u64 {
    ci as u64 * (wo * ho * co) as u64
}

/// Separable-over-standard cost ratio `1/Co + 1/(Wk*Hk)`, shared by parameters and MACs.
pub fn reduction_ratio(kernel: (usize, usize), out_channels: usize) -> f64 {
    assert!(
        kernel.0 > 0 && kernel.1 > 0 && out_channels > 0,
        "extents must be positive"
    );
    1.0 / out_channels as f64 + 1.0 / (kernel.0 * kernel.1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::spec::{build_sepconv, build_stdconv};

    #[test]
    fn table_two_parameter_totals() {
        let sep = count_params(&build_sepconv(), Scope::Inference).unwrap();
        let std = count_params(&build_stdconv(), Scope::Inference).unwrap();
        assert_eq!(sep.total_params(), 2686);
        assert_eq!(std.total_params(), 10291);
        let (p, _) = sep.reduction_vs(&std);
        assert!((p - 0.739).abs() < 0.0005);
    }

    #[test]
    fn domain_head_only_counts_in_training_scope() {
        let spec = build_sepconv();
        let inf = count_params(&spec, Scope::Inference)
            .unwrap()
            .total_params();
        let tr = count_params(&spec, Scope::Training).unwrap().total_params();
        assert_eq!(tr - inf, 771);
        let bare = count_params(&spec.clone().without_domain_head(), Scope::Inference).unwrap();
        assert_eq!(bare.total_params(), inf);
    }

    #[test]
    fn per_layer_macs() {
        let std = count_macs(&build_stdconv(), (127, 251)).unwrap();
        assert_eq!(std.layer("block1.conv").unwrap().macs, 2_304_288);
        let sep = count_macs(&build_sepconv(), (127, 251)).unwrap();
        assert_eq!(sep.layer("block2.pw").unwrap().macs, 1_032_192);
        assert_eq!(sep.layer("predictor.fc").unwrap().macs, 768);
        assert_eq!(standard_params(3, 3, 16, 16), 2304);
    }

    #[test]
    fn ratio_formula() {
        assert!((reduction_ratio((3, 3), 16) - (1.0 / 16.0 + 1.0 / 9.0)).abs() < 1e-15);
        assert_eq!(reduction_ratio((1, 1), 1), 2.0);
        let r = (depthwise_params(3, 3, 16) + pointwise_params(16, 16)) as f64
            / standard_params(3, 3, 16, 16) as f64;
        assert!((r - reduction_ratio((3, 3), 16)).abs() < 1e-12);
    }

    #[test]
    fn csv_has_totals_row() {
        let r = count_params(&build_sepconv(), Scope::Inference).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("layer,kind,params,macs\n"));
        assert!(csv
            .trim_end()
            .ends_with(&format!("total,total,2686,{}", r.total_macs())));
    }
}
