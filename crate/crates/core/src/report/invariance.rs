//! Domain-invariance analysis of a trained extractor.

use std::collections::HashMap;

use crate::arch::Network;
use crate::data::{Domain, Utterance};
use crate::error::{Error, Result};
use crate::report::{
    export_features, paired_distance, probe_accuracy, tsne2d, FeatureDump, ProbeConfig,
    ProbeReport, TsneConfig, TsneResult,
};

#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub dump: FeatureDump,
    /// Probe predicting the domain condition from frozen features.
    pub probe: ProbeReport,
    pub embedding: TsneResult,
    /// Normalized mean embedding distance between each noisy row and the
    /// clean row of the same recording.
    pub paired_distance: f64,
}

/// `(noisy, clean)` row pairs sharing a sample id.
pub fn clean_pairs(dump: &FeatureDump) -> Result<Vec<(usize, usize)>> {
    let clean: HashMap<usize, usize> = dump
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.domain == Domain::Clean)
        .map(|(i, r)| (r.id, i))
        .collect();
    let pairs: Vec<(usize, usize)> = dump
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.domain != Domain::Clean)
        .filter_map(|(i, r)| clean.get(&r.id).map(|&c| (i, c)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Config("no noisy row has a clean partner".into()));
    }
    Ok(pairs)
}

pub fn domain_invariance(
    net: &mut Network,
    utterances: &[Utterance],
    tsne: &TsneConfig,
    probe: &ProbeConfig,
    seed: u64,
) -> Result<InvarianceReport> {
    let dump = export_features(net, utterances)?;
    let x = dump.matrix();
    let domains: Vec<usize> = dump.rows.iter().map(|r| r.domain.index()).collect();
    let groups: Vec<usize> = dump.rows.iter().map(|r| r.id).collect();
    let probe = probe_accuracy(&x, &domains, &groups, Domain::ALL.len(), probe)?;
    let embedding = tsne2d(&x, tsne, seed)?;
    let paired_distance = paired_distance(&embedding.coords, &clean_pairs(&dump)?)?;
    Ok(InvarianceReport {
        dump,
        probe,
        embedding,
        paired_distance,
    })
}
