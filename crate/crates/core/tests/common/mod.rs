#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxadapt::arch::{build_sepconv, Network};
use voxadapt::nn::gradcheck::{gradient_check, Differentiable, DEFAULT_STEP};
use voxadapt::nn::Mode;
use voxadapt::train::{dat_gradients, domain_loss, label_loss, Batch, GradientPaths};
use voxadapt::Tensor;

pub const SMALL_INPUT: (usize, usize) = (16, 24);

pub fn random_batch(n: usize, rng: &mut ChaCha8Rng, labeled: bool, domain: usize) -> Batch {
    Batch {
        x: Tensor::uniform(&[n, SMALL_INPUT.0, SMALL_INPUT.1], -1.0, 1.0, rng),
        labels: (0..n)
            .map(|_| labeled.then(|| rng.gen_range(0..3)))
            .collect(),
        domains: vec![domain; n],
    }
}

/// The SepConv network with its gradient-reversed domain head, viewed as the
/// scalar `L_y - lambda * L_d` over every trainable parameter.
pub struct DatGraph {
    pub net: Network,
    pub source: Batch,
    pub target: Batch,
    pub lambda: f64,
    slots: Vec<(usize, usize)>,
}

impl DatGraph {
    pub fn new(seed: u64, lambda: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = build_sepconv()
            .with_lambda(lambda)
            .unwrap()
            .resized(SMALL_INPUT)
            .unwrap();
        let mut net = Network::new(&spec, seed).unwrap();
        for bn in net.batch_norms_mut() {
            for g in bn.gamma.value.data_mut() {
                *g = rng.gen_range(0.5..1.5);
            }
            for b in bn.beta.value.data_mut() {
                *b = rng.gen_range(-0.3..0.3);
            }
        }
        let source = random_batch(3, &mut rng, true, 0);
        let target_domain = 1 + rng.gen_range(0..2);
        let target = random_batch(3, &mut rng, false, target_domain);
        let slots = net
            .all_params()
            .iter()
            .enumerate()
            .flat_map(|(pi, p)| (0..p.value.len()).map(move |k| (pi, k)))
            .collect();
        Self {
            net,
            source,
            target,
            lambda,
            slots,
        }
    }

    fn domain_param_start(&self) -> usize {
        self.net.all_params().len() - 2
    }
}

impl Differentiable for DatGraph {
    fn num_coords(&self) -> usize {
        self.slots.len()
    }

    fn coord(&self, i: usize) -> f64 {
        let (p, k) = self.slots[i];
        self.net.all_params()[p].value.data()[k]
    }

    fn set_coord(&mut self, i: usize, v: f64) {
        let (p, k) = self.slots[i];
        self.net.all_params_mut()[p].value.data_mut()[k] = v;
    }

    fn loss(&mut self) -> voxadapt::Result<f64> {
        let (fs, _) = self.net.extract(&self.source.x, Mode::Train)?;
        let (ly, _) = label_loss(&self.net.classify(&fs)?, &self.source.labels)?;
        let ds = self.net.domain_logits(&fs)?;
        let (ft, _) = self.net.extract(&self.target.x, Mode::Shared)?;
        let dt = self.net.domain_logits(&ft)?;
        let domains: Vec<usize> = self
            .source
            .domains
            .iter()
            .chain(&self.target.domains)
            .copied()
            .collect();
        let (ld, _) = domain_loss(&Tensor::concat_rows(&ds, &dt)?, &domains)?;
        Ok(ly - self.lambda * ld)
    }

    /// Gradient of the network's training graph; the domain head receives the
    /// plain `dL_d` there, so it is rescaled by `-lambda` to match the scalar.
    fn gradient(&mut self) -> voxadapt::Result<Vec<f64>> {
        let (source, target) = (self.source.clone(), self.target.clone());
        dat_gradients(&mut self.net, &source, &target, GradientPaths::Both)?;
        let start = self.domain_param_start();
        let mut out = Vec::with_capacity(self.slots.len());
        for (pi, p) in self.net.all_params().iter().enumerate() {
            let scale = if pi >= start { -self.lambda } else { 1.0 };
            out.extend(p.grad.data().iter().map(|g| g * scale));
        }
        Ok(out)
    }
}

/// Largest relative error of the full adversarial graph's gradient against
/// central differences over every parameter.
pub fn dat_graph_error(seed: u64) -> f64 {
    let mut graph = DatGraph::new(seed, 0.7);
    gradient_check(&mut graph, DEFAULT_STEP, None)
        .unwrap()
        .max_rel_error
}
