//! Penultimate-layer feature dumps.

use std::fmt::Write as _;

use crate::arch::Network;
use crate::audio::Spectrogram;
use crate::data::{stack_segments, Disease, Domain, Utterance};
use crate::error::{Error, Result};

const CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: usize,
    pub domain: Domain,
    pub disease: Disease,
    pub features: Vec<f64>,
}

/// One row per (sample, domain condition), ordered by id then domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDump {
    pub width: usize,
    pub rows: Vec<FeatureRow>,
}

/// Head-segment features of every utterance, as exposed by prediction.
pub fn export_features(net: &mut Network, utterances: &[Utterance]) -> Result<FeatureDump> {
    let width = net.spec().feature_dim()?;
    let frames = net.spec().input.0;
    let mut order: Vec<&Utterance> = utterances.iter().collect();
    order.sort_by_key(|u| (u.id, u.domain));
    if order
        .windows(2)
        .any(|w| (w[0].id, w[0].domain) == (w[1].id, w[1].domain))
    {
        return Err(Error::Config(
            "duplicate (id, domain) pair in feature export".into(),
        ));
    }
    let mut rows = Vec::with_capacity(order.len());
    for chunk in order.chunks(CHUNK) {
        let items: Vec<&Spectrogram> = chunk.iter().map(|u| &u.lps).collect();
        let x = stack_segments(&items, frames, None)?;
        for (u, p) in chunk.iter().zip(net.predict_batch(&x)?) {
            rows.push(FeatureRow {
                id: u.id,
                domain: u.domain,
                disease: u.disease,
                features: p.feature,
            });
        }
    }
    Ok(FeatureDump { width, rows })
}

impl FeatureDump {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.features.clone()).collect()
    }

    /// `id,domain,disease,f0,...` with 17 significant digits per value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,domain,disease");
        for k in 0..self.width {
            let _ = write!(out, ",f{k}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.id, r.domain, r.disease);
            for v in &r.features {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let width = reader.headers()?.len().saturating_sub(3);
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let field = |i: usize| {
                rec.get(i)
                    .ok_or_else(|| Error::Format("short feature row".into()))
            };
            let id = field(0)?
                .parse()
                .map_err(|e| Error::Format(format!("bad id: {e}")))?;
            let features = (3..3 + width)
                .map(|i| {
                    field(i)?
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("bad feature value: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow {
                id,
                domain: field(1)?.parse()?,
                disease: field(2)?.parse()?,
                features,
            });
        }
        Ok(Self { width, rows })
    }
}
