//! Synthetic data, cross-validation, metrics and significance testing.

pub mod corpus;
pub mod experiment;
pub mod folds;
pub mod metrics;
pub mod stats;
pub mod synth;

pub use corpus::{
    all_condition_utterances, clean_utterances, corrupt_clips, corrupt_test_fold,
    corrupted_utterances, Corpus, CorruptedClip, NoiseBank, TEST_SNRS_DB, TRAIN_SNRS_DB,
};
pub use experiment::{
    derive_seed, invariance_set, lambda_sweep, run_experiment, run_experiment_on, train_full,
    ExperimentConfig, ExperimentReport, LambdaSweep, LambdaTrials, Workbench,
};
pub use folds::{make_folds, make_stratified_folds, FoldPlan};
pub use metrics::{uar, uar_from_recalls, Confusion, UarReport};
pub use stats::{box_stats, sign_test_greater, welch_t_test, BoxStats, SignTest, TTest};
pub use synth::{synth_dataset, LabeledClip, SynthDataset, SynthSpec};
