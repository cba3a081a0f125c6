//! Audio ingestion and log-power-spectrum features.

mod lps;
mod mix;
mod resample;

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

pub use lps::{
    normalize, read_spectrogram, segment, stft_lps, write_spectrogram, LpsExtractor, SegmentMode,
    Spectrogram, SpectrogramKind, HOP_SAMPLES, LPS_BINS, LPS_FLOOR, LPS_SAMPLE_RATE,
    SEGMENT_FRAMES, WINDOW_SAMPLES,
};
pub use mix::{mean_power, measured_snr_db, mix_noise, mix_noise_detailed, Mix};
pub use resample::{resample, Resampler, TAPS_PER_PHASE};

/// Mono samples in `[-1, 1]` at `sample_rate` Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Audio("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads 16-bit PCM; multi-channel files yield channel 0.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Audio(format!(
            "unsupported encoding: {:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let channels = spec.channels.max(1) as usize;
    let mut samples = Vec::with_capacity(reader.len() as usize / channels);
    for (i, s) in reader.into_samples::<i16>().enumerate() {
        let s = s?;
        if i % channels == 0 {
            samples.push(s as f64 / 32768.0);
        }
    }
    if samples.is_empty() {
        return Err(Error::Audio("wav data chunk is empty".into()));
    }
    AudioClip::new(samples, spec.sample_rate)
}

/// Writes 16-bit mono PCM, clipping to the representable range.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec)?;
    for &s in &clip.samples {
        let v = (s * 32768.0)
            .round()
            .clamp(i16::MIN as f64, i16::MAX as f64);
        w.write_sample(v as i16)?;
    }
    w.finalize()?;
    Ok(())
}
