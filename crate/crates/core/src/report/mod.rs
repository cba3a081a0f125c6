//! Feature export, 2-D embeddings, domain probes and plot data.

pub mod features;
pub mod invariance;
pub mod pca;
pub mod plots;
pub mod probe;
pub mod tsne;

pub use features::{export_features, FeatureDump, FeatureRow};
pub use invariance::{clean_pairs, domain_invariance, InvarianceReport};
pub use pca::{pca2d, Pca2d};
pub use plots::{curves_csv, emit_plot_data, tsne_csv, PlotData};
pub use probe::{paired_distance, probe_accuracy, ProbeConfig, ProbeReport, SoftmaxProbe};
pub use tsne::{
    conditional_affinities, row_perplexity, tsne2d, TsneConfig, TsneResult, MAX_POINTS,
};
