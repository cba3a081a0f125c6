//! Cross-validated comparison of training strategies and the λ sweep.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::Network;
use crate::data::{TargetSet, Utterance};
use crate::error::{Error, Result};
use crate::eval::corpus::{
    all_condition_utterances, clean_utterances, corrupt_clips, corrupt_test_fold,
    corrupted_utterances, Corpus, TEST_SNRS_DB, TRAIN_SNRS_DB,
};
use crate::eval::folds::{make_stratified_folds, FoldPlan};
use crate::eval::metrics::Confusion;
use crate::eval::stats::{box_stats, mean, welch_t_test, BoxStats};
use crate::eval::synth::{synth_dataset, SynthSpec};
use crate::train::{
    evaluate, train, Monitor, Strategy, TrainConfig, TrainData, TrainOutcome, TrainingLog,
};

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

/// Everything needed to reproduce one Table-1-style experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub strategies: Vec<Strategy>,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub source_batch: usize,
    pub target_batch: usize,
    pub mmd_weight: f64,
    pub seed: u64,
    pub repeats: usize,
    pub folds: usize,
    pub synth: SynthSpec,
    /// Evaluate the target domain on noise-corrupted test folds; when false
    /// the clean test fold is scored twice.
    pub corrupt_test: bool,
    /// Score held-out folds after every epoch.
    pub monitor: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            strategies: default_strategies(),
            lambda: 0.5,
            learning_rate: 0.001,
            epochs: 30,
            source_batch: 32,
            target_batch: 32,
            mmd_weight: 0.5,
            seed: 0,
            repeats: 3,
            folds: 5,
            synth: SynthSpec::default(),
            corrupt_test: true,
            monitor: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies selected".into()));
        }
        self.synth.validate()?;
        self.train_config(Strategy::Sepconv, 0).validate()?;
        if self.repeats == 0 || self.folds < 2 {
            return Err(Error::Config(
                "need at least one repeat and two folds".into(),
            ));
        }
        Ok(())
    }

    /// Training settings for one strategy with an explicit run seed.
    pub fn train_config(&self, strategy: Strategy, seed: u64) -> TrainConfig {
        TrainConfig {
            strategy,
            lambda: self.lambda,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            source_batch: self.source_batch,
            target_batch: self.target_batch,
            seed: Some(seed),
            mmd_weight: self.mmd_weight,
        }
    }
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Prepared inputs shared by every job of one experiment.
#[derive(Debug)]
pub struct Workbench {
    pub corpus: Corpus,
    pub clean: Vec<Utterance>,
    pub adaptation: TargetSet,
    pub plans: Vec<FoldPlan>,
}

impl Workbench {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let ds = synth_dataset(&config.synth, config.seed)?;
        let corpus = Corpus::from_synth(&ds)?;
        let clean = clean_utterances(&corpus.source)?;
        let adapt_clips = corrupt_clips(
            &corpus.adaptation,
            &corpus.noise,
            &TRAIN_SNRS_DB,
            derive_seed(config.seed, u64::MAX, 0),
        )?;
        let adaptation = TargetSet::new(corrupted_utterances(&adapt_clips)?);
        let plans =
            make_stratified_folds(&corpus.labels(), config.folds, config.repeats, config.seed)?;
        Ok(Self {
            corpus,
            clean,
            adaptation,
            plans,
        })
    }

    /// Clean and target-domain test utterances of `plan`, paired by position.
    pub fn test_sets(
        &self,
        plan: &FoldPlan,
        corrupt: bool,
    ) -> Result<(Vec<Utterance>, Vec<Utterance>)> {
        let source: Vec<Utterance> = plan.test.iter().map(|&i| self.clean[i].clone()).collect();
        let target = if corrupt {
            let clips = self.corpus.select(&plan.test);
            let seed = derive_seed(plan.seed, plan.repeat as u64, plan.fold as u64);
            corrupted_utterances(&corrupt_test_fold(&clips, &self.corpus.noise, seed)?)?
        } else {
            source.clone()
        };
        Ok((source, target))
    }

    pub fn train_set(&self, plan: &FoldPlan) -> Vec<Utterance> {
        plan.train.iter().map(|&i| self.clean[i].clone()).collect()
    }
}

/// Trains `strategy` on the whole clean source set plus the adaptation set.
pub fn train_full(
    config: &ExperimentConfig,
    bench: &Workbench,
    strategy: Strategy,
) -> Result<TrainOutcome> {
    let tc = config.train_config(strategy, derive_seed(config.seed, 0, 0));
    let data = TrainData {
        source: &bench.clean,
        target: &bench.adaptation,
    };
    train(&tc, data, None, None)
}

/// A fresh synthetic evaluation set, disjoint in draws from the training
/// corpus, with every recording in all three conditions at the test SNRs.
pub fn invariance_set(config: &ExperimentConfig) -> Result<Vec<Utterance>> {
    config.validate()?;
    let ds = synth_dataset(&config.synth, derive_seed(config.seed, 0xFEA7, 0))?;
    let corpus = Corpus::from_synth(&ds)?;
    all_condition_utterances(
        &corpus.source,
        &corpus.noise,
        &TEST_SNRS_DB,
        derive_seed(config.seed, 0xFEA7, 1),
    )
}

/// Scores of one strategy on one (repeat, fold) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub repeat: usize,
    pub fold: usize,
    pub strategy: Strategy,
    pub source: Confusion,
    pub target: Confusion,
    pub log: TrainingLog,
}

/// Mean per-class recalls and UAR of one strategy in one domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainScores {
    pub recalls: [f64; 3],
    pub uar: f64,
    /// Per-cell UARs in (repeat, fold) order.
    pub fold_uars: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantReport {
    pub strategy: Strategy,
    pub source: DomainScores,
    pub target: DomainScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Significance {
    pub strategy: Strategy,
    pub p_source: f64,
    pub p_target: f64,
}

/// A model trained on the first cell, kept for feature analysis.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub strategy: Strategy,
    pub network: Network,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub variants: Vec<VariantReport>,
    /// Each variant against `dat`; empty when `dat` was not run or only one
    /// cell was evaluated.
    pub significance: Vec<Significance>,
    pub cells: Vec<CellResult>,
    pub first_cell_models: Vec<TrainedModel>,
}

fn domain_scores(confusions: &[&Confusion]) -> Result<DomainScores> {
    let mut per_class: [Vec<f64>; 3] = Default::default();
    let mut fold_uars = Vec::with_capacity(confusions.len());
    for c in confusions {
        let r = c.recalls()?;
        for (k, v) in r.iter().enumerate().take(3) {
            per_class[k].push(*v);
        }
        fold_uars.push(c.uar()?);
    }
    Ok(DomainScores {
        recalls: [
            mean(&per_class[0]),
            mean(&per_class[1]),
            mean(&per_class[2]),
        ],
        uar: mean(&fold_uars),
        fold_uars,
    })
}

impl ExperimentReport {
    pub fn variant(&self, s: Strategy) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.strategy == s)
    }

    pub fn table1_csv(&self) -> String {
        let mut out = String::from("variant,domain,health,neoplasm,structural,uar\n");
        for v in &self.variants {
            for (name, d) in [("source", &v.source), ("target", &v.target)] {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    v.strategy.display_name(),
                    name,
                    d.recalls[0],
                    d.recalls[1],
                    d.recalls[2],
                    d.uar
                );
            }
        }
        out
    }

    pub fn significance_csv(&self) -> String {
        let mut out = String::from("variant,p_source,p_target\n");
        for s in &self.significance {
            let _ = writeln!(
                out,
                "{},{},{}",
                s.strategy.display_name(),
                s.p_source,
                s.p_target
            );
        }
        out
    }

    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("table1.csv"), self.table1_csv())?;
        std::fs::write(dir.join("significance.csv"), self.significance_csv())?;
        Ok(())
    }
}

fn run_cell(
    config: &ExperimentConfig,
    bench: &Workbench,
    plan: &FoldPlan,
) -> Result<(Vec<CellResult>, Vec<TrainedModel>)> {
    let train_set = bench.train_set(plan);
    let (test_source, test_target) = bench.test_sets(plan, config.corrupt_test)?;
    let seed = derive_seed(config.seed, plan.repeat as u64, plan.fold as u64);
    let data = TrainData {
        source: &train_set,
        target: &bench.adaptation,
    };
    let monitor = config.monitor.then_some(Monitor {
        source: &test_source,
        target: &test_target,
    });
    let mut order = config.strategies.clone();
    order.sort();
    order.dedup();
    let mut sepconv: Option<Network> = None;
    let mut results = Vec::new();
    let mut models = Vec::new();
    for strategy in order {
        let tc = config.train_config(strategy, seed);
        let pre = if strategy == Strategy::Ft {
            sepconv.as_ref()
        } else {
            None
        };
        let mut outcome = train(&tc, data, pre, monitor)?;
        let source = evaluate(&mut outcome.network, &test_source)?;
        let target = evaluate(&mut outcome.network, &test_target)?;
        if strategy == Strategy::Sepconv {
            sepconv = Some(outcome.network.clone());
        }
        if plan.repeat == 1 && plan.fold == 1 {
            models.push(TrainedModel {
                strategy,
                network: outcome.network,
            });
        }
        results.push(CellResult {
            repeat: plan.repeat,
            fold: plan.fold,
            strategy,
            source,
            target,
            log: outcome.log,
        });
    }
    Ok((results, models))
}

/// Trains every strategy on every (repeat, fold) cell and aggregates scores.
///
/// Cells run in parallel; each is deterministic on its own and results are
/// reassembled in (repeat, fold) order, so output does not depend on
/// scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let bench = Workbench::new(config)?;
    run_experiment_on(config, &bench)
}

pub fn run_experiment_on(config: &ExperimentConfig, bench: &Workbench) -> Result<ExperimentReport> {
    let per_cell: Vec<(Vec<CellResult>, Vec<TrainedModel>)> = bench
        .plans
        .par_iter()
        .map(|plan| run_cell(config, bench, plan))
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    let mut first_cell_models = Vec::new();
    for (c, m) in per_cell {
        cells.extend(c);
        first_cell_models.extend(m);
    }
    let mut strategies = config.strategies.clone();
    let mut seen = Vec::new();
    strategies.retain(|s| {
        let fresh = !seen.contains(s);
        seen.push(*s);
        fresh
    });
    let mut variants = Vec::with_capacity(strategies.len());
    for &s in &strategies {
        let mine: Vec<&CellResult> = cells.iter().filter(|c| c.strategy == s).collect();
        variants.push(VariantReport {
            strategy: s,
            source: domain_scores(&mine.iter().map(|c| &c.source).collect::<Vec<_>>())?,
            target: domain_scores(&mine.iter().map(|c| &c.target).collect::<Vec<_>>())?,
        });
    }
    let mut significance = Vec::new();
    let dat = variants.iter().find(|v| v.strategy == Strategy::Dat);
    if let Some(dat) = dat.filter(|d| d.source.fold_uars.len() >= 2) {
        for v in variants.iter().filter(|v| v.strategy != Strategy::Dat) {
            significance.push(Significance {
                strategy: v.strategy,
                p_source: welch_t_test(&v.source.fold_uars, &dat.source.fold_uars)?.p,
                p_target: welch_t_test(&v.target.fold_uars, &dat.target.fold_uars)?.p,
            });
        }
    }
    Ok(ExperimentReport {
        variants,
        significance,
        cells,
        first_cell_models,
    })
}

/// Source and target UARs of every trial at one λ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaTrials {
    pub lambda: f64,
    pub source: Vec<f64>,
    pub target: Vec<f64>,
}

impl LambdaTrials {
    pub fn source_box(&self) -> Result<BoxStats> {
        box_stats(&self.source)
    }

    pub fn target_box(&self) -> Result<BoxStats> {
        box_stats(&self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaSweep {
    pub trials: Vec<LambdaTrials>,
}

impl LambdaSweep {
    pub fn box_csv(&self) -> Result<String> {
        let mut out = String::from("lambda,domain,min,q1,median,q3,max\n");
        for t in &self.trials {
            for (name, b) in [("source", t.source_box()?), ("target", t.target_box()?)] {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    t.lambda, name, b.min, b.q1, b.median, b.q3, b.max
                );
            }
        }
        Ok(out)
    }
}

/// Trains `trials` differently initialized `dat` models per λ on the first
/// fold of the first repeat and scores each on its clean and corrupted test
/// folds. Trial `t` uses the same run seed for every λ.
pub fn lambda_sweep(
    config: &ExperimentConfig,
    lambdas: &[f64],
    trials: usize,
) -> Result<LambdaSweep> {
    if trials < 10 {
        return Err(Error::Config(format!(
            "need at least 10 trials per lambda, got {trials}"
        )));
    }
    if lambdas.is_empty() {
        return Err(Error::Config("no lambda values given".into()));
    }
    let bench = Workbench::new(config)?;
    let plan = &bench.plans[0];
    let train_set = bench.train_set(plan);
    let (test_source, test_target) = bench.test_sets(plan, config.corrupt_test)?;
    let jobs: Vec<(usize, usize)> = (0..lambdas.len())
        .flat_map(|l| (0..trials).map(move |t| (l, t)))
        .collect();
    let scores: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(l, t)| {
            let mut tc =
                config.train_config(Strategy::Dat, derive_seed(config.seed, 0x5EED, t as u64));
            tc.lambda = lambdas[l];
            let data = TrainData {
                source: &train_set,
                target: &bench.adaptation,
            };
            let mut out = train(&tc, data, None, None)?;
            Ok((
                evaluate(&mut out.network, &test_source)?.uar()?,
                evaluate(&mut out.network, &test_target)?.uar()?,
            ))
        })
        .collect::<Result<_>>()?;
    let trials = lambdas
        .iter()
        .enumerate()
        .map(|(l, &lambda)| {
            let mine = &scores[l * trials..(l + 1) * trials];
            LambdaTrials {
                lambda,
                source: mine.iter().map(|s| s.0).collect(),
                target: mine.iter().map(|s| s.1).collect(),
            }
        })
        .collect();
    Ok(LambdaSweep { trials })
}
