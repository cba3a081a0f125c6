//! Labeled utterances and the label-guarded target set.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::audio::{segment, SegmentMode, Spectrogram};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Disease {
    Health,
    Neoplasm,
    Structural,
}

impl Disease {
    pub const ALL: [Disease; 3] = [Disease::Health, Disease::Neoplasm, Disease::Structural];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Config(format!("disease index {i} out of range")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Disease::Health => "health",
            Disease::Neoplasm => "neoplasm",
            Disease::Structural => "structural",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Clean,
    Ac,
    Street,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Clean, Domain::Ac, Domain::Street];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Clean => "clean",
            Domain::Ac => "ac",
            Domain::Street => "street",
        }
    }
}

impl fmt::Display for Disease {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown domain {s:?}")))
    }
}

impl FromStr for Disease {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown disease {s:?}")))
    }
}

/// A normalized LPS utterance with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: usize,
    pub lps: Spectrogram,
    pub disease: Disease,
    pub domain: Domain,
}

/// Target-domain utterances whose disease labels can be locked away.
///
/// Inputs and domain labels are always readable. While locked, every disease
/// read fails with [`Error::LabelAccess`] and is counted.
#[derive(Debug)]
pub struct TargetSet {
    items: Vec<Utterance>,
    locked: bool,
    denied: AtomicU64,
}

impl Clone for TargetSet {
    fn clone(&self) -> Self {
        Self {
            items: self.items.clone(),
            locked: self.locked,
            denied: AtomicU64::new(self.denied_reads()),
        }
    }
}

impl TargetSet {
    pub fn new(items: Vec<Utterance>) -> Self {
        Self {
            items,
            locked: false,
            denied: AtomicU64::new(0),
        }
    }

    /// A copy whose disease labels cannot be read.
    pub fn locked(&self) -> Self {
        Self {
            items: self.items.clone(),
            locked: true,
            denied: AtomicU64::new(0),
        }
    }

    pub fn is_locked(&self) -> bool {
        self.locked
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn lps(&self, i: usize) -> &Spectrogram {
        &self.items[i].lps
    }

    pub fn domain(&self, i: usize) -> Domain {
        self.items[i].domain
    }

    pub fn id(&self, i: usize) -> usize {
        self.items[i].id
    }

    pub fn disease(&self, i: usize) -> Result<Disease> {
        if self.locked {
            self.denied.fetch_add(1, Ordering::SeqCst);
            return Err(Error::LabelAccess(format!(
                "disease label of target sample {} read through a locked view",
                self.items[i].id
            )));
        }
        Ok(self.items[i].disease)
    }

    /// Number of refused disease-label reads so far.
    pub fn denied_reads(&self) -> u64 {
        self.denied.load(Ordering::SeqCst)
    }

    /// Labeled copies of every item; fails when locked.
    pub fn labeled(&self) -> Result<Vec<Utterance>> {
        (0..self.len())
            .map(|i| {
                let disease = self.disease(i)?;
                Ok(Utterance {
                    disease,
                    ..self.items[i].clone()
                })
            })
            .collect()
    }
}

/// Stacks `frames`-long segments into a `[N, frames, bins]` batch: head
/// segments without an RNG, uniformly placed ones with.
pub fn stack_segments(
    items: &[&Spectrogram],
    frames: usize,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<Tensor> {
    let bins = match items.first() {
        Some(s) => s.bins,
        None => return Err(Error::Shape("cannot stack an empty batch".into())),
    };
    let mut data = Vec::with_capacity(items.len() * frames * bins);
    for s in items {
        if s.bins != bins {
            return Err(Error::Shape(
                "spectrograms in a batch differ in bins".into(),
            ));
        }
        let mode = match rng.as_deref_mut() {
            Some(r) => SegmentMode::Random(r),
            None => SegmentMode::Head,
        };
        data.extend_from_slice(&segment(s, frames, mode)?.values);
    }
    Tensor::new(vec![items.len(), frames, bins], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::SpectrogramKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn utt(id: usize, disease: Disease) -> Utterance {
        Utterance {
            id,
            lps: Spectrogram::from_values(4, 2, vec![id as f64; 8], SpectrogramKind::NormalizedLps)
                .unwrap(),
            disease,
            domain: Domain::Ac,
        }
    }

    #[test]
    fn locked_view_refuses_and_counts() {
        let set = TargetSet::new(vec![utt(0, Disease::Health), utt(1, Disease::Neoplasm)]);
        assert_eq!(set.disease(1).unwrap(), Disease::Neoplasm);
        let locked = set.locked();
        assert_eq!(locked.domain(0), Domain::Ac);
        assert!(matches!(locked.disease(0), Err(Error::LabelAccess(_))));
        assert!(locked.labeled().is_err());
        assert_eq!(locked.denied_reads(), 2);
        assert_eq!(set.denied_reads(), 0);
    }

    #[test]
    fn names_round_trip() {
        for d in Domain::ALL {
            assert_eq!(d.name().parse::<Domain>().unwrap(), d);
        }
        for d in Disease::ALL {
            assert_eq!(Disease::from_index(d.index()).unwrap(), d);
            assert_eq!(d.to_string().parse::<Disease>().unwrap(), d);
        }
        assert!(Disease::from_index(3).is_err());
    }

    #[test]
    fn stacking_heads_and_random_segments() {
        let a = Spectrogram::from_values(
            5,
            2,
            (0..10).map(f64::from).collect(),
            SpectrogramKind::RawLps,
        )
        .unwrap();
        let head = stack_segments(&[&a, &a], 3, None).unwrap();
        assert_eq!(head.shape(), &[2, 3, 2]);
        assert_eq!(&head.data()[..6], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        let x = stack_segments(&[&a], 3, Some(&mut r1)).unwrap();
        let y = stack_segments(&[&a], 3, Some(&mut r2)).unwrap();
        assert_eq!(x, y);
    }
}
