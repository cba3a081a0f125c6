//! Turning synthetic recordings into clean and noise-corrupted utterances.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{mix_noise, normalize, resample, stft_lps, AudioClip, LPS_SAMPLE_RATE};
use crate::data::{Disease, Domain, Utterance};
use crate::error::{Error, Result};
use crate::eval::synth::{LabeledClip, SynthDataset};

/// SNRs used to corrupt adaptation (training-time) target clips.
pub const TRAIN_SNRS_DB: [f64; 3] = [0.0, 5.0, 10.0];
/// SNRs used to corrupt test folds.
pub const TEST_SNRS_DB: [f64; 3] = [3.0, 6.0, 9.0];

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBank {
    pub ac: Vec<AudioClip>,
    pub street: Vec<AudioClip>,
}

impl NoiseBank {
    fn pick(&self, domain: Domain, rng: &mut ChaCha8Rng) -> Result<&AudioClip> {
        let pool = match domain {
            Domain::Ac => &self.ac,
            Domain::Street => &self.street,
            Domain::Clean => return Err(Error::Config("clean is not a noise type".into())),
        };
        if pool.is_empty() {
            return Err(Error::Config(format!("no {domain} noise clips")));
        }
        Ok(&pool[rng.gen_range(0..pool.len())])
    }
}

/// A noisy copy of a clean clip; `id` is the id of the clean original.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedClip {
    pub id: usize,
    pub disease: Disease,
    pub domain: Domain,
    pub snr_db: f64,
    pub clip: AudioClip,
}

/// Corpus resampled to the feature rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    /// Clean source clips; `source[i].id == i`.
    pub source: Vec<LabeledClip>,
    pub adaptation: Vec<LabeledClip>,
    pub noise: NoiseBank,
}

fn to_feature_rate(clip: &AudioClip) -> Result<AudioClip> {
    resample(clip, LPS_SAMPLE_RATE)
}

impl Corpus {
    pub fn from_synth(ds: &SynthDataset) -> Result<Self> {
        let relabel = |c: &LabeledClip| -> Result<LabeledClip> {
            Ok(LabeledClip {
                clip: to_feature_rate(&c.clip)?,
                ..c.clone()
            })
        };
        Ok(Self {
            source: ds.source.iter().map(relabel).collect::<Result<_>>()?,
            adaptation: ds.adaptation.iter().map(relabel).collect::<Result<_>>()?,
            noise: NoiseBank {
                ac: ds
                    .ac_noise
                    .iter()
                    .map(to_feature_rate)
                    .collect::<Result<_>>()?,
                street: ds
                    .street_noise
                    .iter()
                    .map(to_feature_rate)
                    .collect::<Result<_>>()?,
            },
        })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.source.iter().map(|c| c.disease.index()).collect()
    }

    pub fn select(&self, ids: &[usize]) -> Vec<LabeledClip> {
        ids.iter().map(|&i| self.source[i].clone()).collect()
    }
}

/// Corrupts half of `clips` with A/C noise and the rest with street noise
/// (the extra clip of an odd fold goes to A/C), each at an SNR drawn
/// uniformly from `snrs_db`. Output order follows the input order.
pub fn corrupt_clips(
    clips: &[LabeledClip],
    noise: &NoiseBank,
    snrs_db: &[f64],
    seed: u64,
) -> Result<Vec<CorruptedClip>> {
    if clips.is_empty() {
        return Err(Error::Config("nothing to corrupt".into()));
    }
    if snrs_db.is_empty() {
        return Err(Error::Config("no SNR values given".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..clips.len()).collect();
    order.shuffle(&mut rng);
    let n_ac = clips.len().div_ceil(2);
    let mut domains = vec![Domain::Street; clips.len()];
    for &i in &order[..n_ac] {
        domains[i] = Domain::Ac;
    }
    clips
        .iter()
        .zip(domains)
        .map(|(c, domain)| {
            let snr_db = snrs_db[rng.gen_range(0..snrs_db.len())];
            let noise_clip = noise.pick(domain, &mut rng)?;
            let clip = mix_noise(&c.clip, noise_clip, snr_db, rng.next_u64())?;
            Ok(CorruptedClip {
                id: c.id,
                disease: c.disease,
                domain,
                snr_db,
                clip,
            })
        })
        .collect()
}

/// Target-domain version of a test fold at the test SNRs.
pub fn corrupt_test_fold(
    clips: &[LabeledClip],
    noise: &NoiseBank,
    seed: u64,
) -> Result<Vec<CorruptedClip>> {
    corrupt_clips(clips, noise, &TEST_SNRS_DB, seed)
}

/// Normalized LPS utterance of a feature-rate clip.
pub fn utterance(
    id: usize,
    disease: Disease,
    domain: Domain,
    clip: &AudioClip,
) -> Result<Utterance> {
    Ok(Utterance {
        id,
        lps: normalize(&stft_lps(clip)?),
        disease,
        domain,
    })
}

/// Every clip in all three conditions: clean, A/C noise and street noise,
/// each noisy copy at an SNR drawn uniformly from `snrs_db`.
pub fn all_condition_utterances(
    clips: &[LabeledClip],
    noise: &NoiseBank,
    snrs_db: &[f64],
    seed: u64,
) -> Result<Vec<Utterance>> {
    if snrs_db.is_empty() {
        return Err(Error::Config("no SNR values given".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(clips.len() * 3);
    for c in clips {
        out.push(utterance(c.id, c.disease, Domain::Clean, &c.clip)?);
        for domain in [Domain::Ac, Domain::Street] {
            let snr_db = snrs_db[rng.gen_range(0..snrs_db.len())];
            let noise_clip = noise.pick(domain, &mut rng)?;
            let mixed = mix_noise(&c.clip, noise_clip, snr_db, rng.next_u64())?;
            out.push(utterance(c.id, c.disease, domain, &mixed)?);
        }
    }
    Ok(out)
}

pub fn clean_utterances(clips: &[LabeledClip]) -> Result<Vec<Utterance>> {
    clips
        .iter()
        .map(|c| utterance(c.id, c.disease, Domain::Clean, &c.clip))
        .collect()
}

pub fn corrupted_utterances(clips: &[CorruptedClip]) -> Result<Vec<Utterance>> {
    clips
        .iter()
        .map(|c| utterance(c.id, c.disease, c.domain, &c.clip))
        .collect()
}
