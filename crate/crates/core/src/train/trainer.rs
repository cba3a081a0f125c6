//! Epoch loops for every strategy.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alloc::tune_allocator;
use crate::arch::Network;
use crate::audio::Spectrogram;
use crate::data::{stack_segments, Domain, TargetSet, Utterance};
use crate::error::{Error, Result};
use crate::eval::metrics::Confusion;
use crate::nn::optim::{Adam, AdamConfig};
use crate::nn::Mode;
use crate::train::config::{Strategy, TrainConfig};
use crate::train::step::{dat_step, mmd_step, supervised_step, Batch, StepLosses};

const EVAL_CHUNK: usize = 32;

/// Labeled source utterances and the target adaptation set.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub source: &'a [Utterance],
    pub target: &'a TargetSet,
}

/// Held-out sets scored after every epoch.
#[derive(Debug, Clone, Copy)]
pub struct Monitor<'a> {
    pub source: &'a [Utterance],
    pub target: &'a [Utterance],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub label_loss: f64,
    pub domain_loss: Option<f64>,
    pub source_uar: Option<f64>,
    pub target_uar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub strategy: Strategy,
    pub records: Vec<EpochRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,label_loss,domain_loss,source_uar,target_uar\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.epoch,
                r.label_loss,
                opt(r.domain_loss),
                opt(r.source_uar),
                opt(r.target_uar)
            );
        }
        s
    }

    pub fn final_label_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.label_loss)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub optimizer: Adam,
    pub log: TrainingLog,
}

struct Example<'a> {
    lps: &'a Spectrogram,
    label: usize,
    domain: Domain,
}

/// Confusion matrix of head-segment predictions on `utterances`.
pub fn evaluate(net: &mut Network, utterances: &[Utterance]) -> Result<Confusion> {
    let frames = net.spec().input.0;
    let mut conf = Confusion::new(net.spec().predictor.classes);
    for chunk in utterances.chunks(EVAL_CHUNK) {
        let items: Vec<&Spectrogram> = chunk.iter().map(|u| &u.lps).collect();
        let x = stack_segments(&items, frames, None)?;
        for (u, p) in chunk.iter().zip(net.predict_batch(&x)?) {
            conf.record(u.disease.index(), p.class)?;
        }
    }
    Ok(conf)
}

/// Trains one model according to `config.strategy`.
///
/// `ft` starts from `pretrained` when given (it must be a separable model
/// without a domain head), otherwise from a `sepconv` model trained here with
/// the same configuration. `mmd` and `dat` only ever see a label-locked view of
/// the target set.
pub fn train(
    config: &TrainConfig,
    data: TrainData<'_>,
    pretrained: Option<&Network>,
    monitor: Option<Monitor<'_>>,
) -> Result<TrainOutcome> {
    let seed = config.validate()?;
    tune_allocator();
    if data.source.is_empty() && !matches!(config.strategy, Strategy::Tgt | Strategy::Ft) {
        return Err(Error::Config("no source training data".into()));
    }
    let strategy = config.strategy;
    let spec = strategy.model_spec(config.lambda)?;
    let net = match strategy {
        Strategy::Ft => match pretrained {
            Some(base) => {
                if base.spec().digest() != spec.digest() {
                    return Err(Error::Config(
                        "fine-tuning needs a source-trained sepconv model".into(),
                    ));
                }
                let mut n = base.clone();
                n.reset_optimizer_state();
                n
            }
            None => {
                let base_cfg = TrainConfig {
                    strategy: Strategy::Sepconv,
                    ..config.clone()
                };
                let mut n = train(&base_cfg, data, None, None)?.network;
                n.reset_optimizer_state();
                n
            }
        },
        _ => Network::new(&spec, seed)?,
    };

    let locked;
    let mut labeled_target = Vec::new();
    let (pool, adapt): (Vec<Example<'_>>, Option<&TargetSet>) = {
        let source = data.source.iter().map(|u| Example {
            lps: &u.lps,
            label: u.disease.index(),
            domain: u.domain,
        });
        if strategy.reads_target_labels() {
            labeled_target = data.target.labeled()?;
        }
        let target = labeled_target.iter().map(|u| Example {
            lps: &u.lps,
            label: u.disease.index(),
            domain: u.domain,
        });
        match strategy {
            Strategy::Stdconv | Strategy::Sepconv => (source.collect(), None),
            Strategy::Tgt | Strategy::Ft => (target.collect(), None),
            Strategy::Jnt => (source.chain(target).collect(), None),
            Strategy::Mmd | Strategy::Dat => {
                if data.target.is_empty() {
                    return Err(Error::Config("adaptation needs target samples".into()));
                }
                locked = data.target.locked();
                (source.collect(), Some(&locked))
            }
        }
    };
    if pool.is_empty() {
        return Err(Error::Config(format!(
            "{strategy} has no labeled training examples"
        )));
    }
    fit(net, config, seed, &pool, adapt, monitor)
}

fn fit(
    mut net: Network,
    config: &TrainConfig,
    seed: u64,
    pool: &[Example<'_>],
    adapt: Option<&TargetSet>,
    monitor: Option<Monitor<'_>>,
) -> Result<TrainOutcome> {
    let frames = net.spec().input.0;
    let mut adam = Adam::new(AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    });
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    order_rng.set_stream(1);
    let mut target_rng = ChaCha8Rng::seed_from_u64(seed);
    target_rng.set_stream(2);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut order_rng);
        let mut label_sum = 0.0;
        let mut domain_sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(config.source_batch) {
            let items: Vec<&Spectrogram> = chunk.iter().map(|&i| pool[i].lps).collect();
            let batch = Batch {
                x: stack_segments(&items, frames, Some(&mut order_rng))?,
                labels: chunk.iter().map(|&i| Some(pool[i].label)).collect(),
                domains: chunk.iter().map(|&i| pool[i].domain.index()).collect(),
            };
            let losses: StepLosses = match (config.strategy, adapt) {
                (Strategy::Dat, Some(t)) => {
                    let tb = draw_target(t, config.target_batch, frames, &mut target_rng)?;
                    dat_step(&mut net, &mut adam, &batch, &tb)?
                }
                (Strategy::Mmd, Some(t)) => {
                    let tb = draw_target(t, config.target_batch, frames, &mut target_rng)?;
                    mmd_step(&mut net, &mut adam, &batch, &tb, config.mmd_weight)?
                }
                _ => supervised_step(&mut net, &mut adam, &batch)?,
            };
            label_sum += losses.label;
            domain_sum += losses.domain.unwrap_or(0.0);
            steps += 1;
        }
        let (source_uar, target_uar) = match monitor {
            Some(m) => (score(&mut net, m.source)?, score(&mut net, m.target)?),
            None => (None, None),
        };
        records.push(EpochRecord {
            epoch,
            label_loss: label_sum / steps as f64,
            domain_loss: (config.strategy == Strategy::Dat).then(|| domain_sum / steps as f64),
            source_uar,
            target_uar,
        });
    }
    let items: Vec<&Spectrogram> = pool.iter().map(|e| e.lps).collect();
    recalibrate_batch_norms(&mut net, &items, config.source_batch)?;
    if let Some(t) = adapt {
        if t.denied_reads() > 0 {
            return Err(Error::LabelAccess(format!(
                "{} target label reads during {}",
                t.denied_reads(),
                config.strategy
            )));
        }
    }
    Ok(TrainOutcome {
        network: net,
        optimizer: adam,
        log: TrainingLog {
            strategy: config.strategy,
            records,
        },
    })
}

/// Replaces batch-norm running statistics with population statistics of
/// `items` (head segments) under the final weights.
///
/// The training-mode forward pass is repeated over batches of `batch` items;
/// each layer's running mean becomes the size-weighted mean of its batch means,
/// and its running variance the pooled variance.
pub fn recalibrate_batch_norms(
    net: &mut Network,
    items: &[&Spectrogram],
    batch: usize,
) -> Result<()> {
    let frames = net.spec().input.0;
    let layers = net.batch_norms().count();
    let mut sums: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; layers];
    let mut total = 0usize;
    for chunk in items.chunks(batch.max(2)) {
        if chunk.len() < 2 {
            continue;
        }
        let x = stack_segments(chunk, frames, None)?;
        net.extract(&x, Mode::Train)?;
        let w = chunk.len();
        total += w;
        for (k, bn) in net.batch_norms().enumerate() {
            let (mean, var) = bn
                .batch_stats
                .as_ref()
                .ok_or_else(|| Error::Config("batchnorm kept no batch statistics".into()))?;
            let entry =
                sums[k].get_or_insert_with(|| (vec![0.0; mean.len()], vec![0.0; mean.len()]));
            for c in 0..mean.len() {
                entry.0[c] += w as f64 * mean[c];
                entry.1[c] += w as f64 * (var[c] + mean[c] * mean[c]);
            }
        }
    }
    if total == 0 {
        return Ok(());
    }
    for (bn, entry) in net.batch_norms_mut().zip(sums) {
        let (s1, s2) = entry.expect("every layer saw each batch");
        let mean: Vec<f64> = s1.iter().map(|v| v / total as f64).collect();
        let var: Vec<f64> = s2
            .iter()
            .zip(&mean)
            .map(|(v, m)| (v / total as f64 - m * m).max(0.0))
            .collect();
        bn.running_mean = Some(mean);
        bn.running_var = Some(var);
    }
    Ok(())
}

fn score(net: &mut Network, set: &[Utterance]) -> Result<Option<f64>> {
    if set.is_empty() {
        return Ok(None);
    }
    Ok(Some(evaluate(net, set)?.uar()?))
}

/// `size` draws with replacement, random segments, domain labels only.
fn draw_target(
    target: &TargetSet,
    size: usize,
    frames: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Batch> {
    let idx: Vec<usize> = (0..size).map(|_| rng.gen_range(0..target.len())).collect();
    let items: Vec<&Spectrogram> = idx.iter().map(|&i| target.lps(i)).collect();
    Ok(Batch {
        x: stack_segments(&items, frames, Some(rng))?,
        labels: vec![None; size],
        domains: idx.iter().map(|&i| target.domain(i).index()).collect(),
    })
}
