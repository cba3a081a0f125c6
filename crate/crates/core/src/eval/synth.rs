//! Synthetic sustained-vowel corpus and environmental noise.
//!
//! Voices are additive harmonic series on a cycle-by-cycle glottal phase with
//! per-cycle period (jitter) and amplitude (shimmer) perturbations, a
//! three-formant envelope, optional period doubling (subharmonics) and
//! pulsatile aspiration noise mixed at a harmonic-to-noise ratio. All parameter
//! ranges below are generator choices.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::data::Disease;
use crate::error::{Error, Result};

/// Closed interval a parameter is drawn from uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

const fn range(lo: f64, hi: f64) -> Range {
    Range { lo, hi }
}

impl Range {
    fn sample(self, rng: &mut ChaCha8Rng) -> f64 {
        if self.hi > self.lo {
            rng.gen_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    fn check(self, name: &str, min: f64) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi || self.lo < min {
            return Err(Error::Config(format!(
                "invalid {name} range [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Voice-quality ranges for one class. Jitter and shimmer are relative
/// standard deviations (0.01 = 1%).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub jitter: Range,
    pub shimmer: Range,
    pub hnr_db: Range,
    /// Relative depth of the alternating-cycle pattern.
    pub subharmonic: Range,
    /// Exponent of the `k^-tilt` harmonic roll-off.
    pub tilt: Range,
    /// Relative depth of a slow (4-7 Hz) sinusoidal f0 modulation.
    pub tremor: Range,
}

impl ClassProfile {
    pub fn health() -> Self {
        Self {
            jitter: range(0.001, 0.003),
            shimmer: range(0.005, 0.02),
            hnr_db: range(26.0, 34.0),
            subharmonic: range(0.0, 0.0),
            tilt: range(0.9, 1.2),
            tremor: range(0.0, 0.005),
        }
    }

    pub fn neoplasm() -> Self {
        Self {
            jitter: range(0.02, 0.04),
            shimmer: range(0.05, 0.09),
            hnr_db: range(12.0, 20.0),
            subharmonic: range(0.25, 0.5),
            tilt: range(0.9, 1.3),
            tremor: range(0.0, 0.01),
        }
    }

    pub fn structural() -> Self {
        Self {
            jitter: range(0.008, 0.016),
            shimmer: range(0.025, 0.05),
            hnr_db: range(18.0, 26.0),
            subharmonic: range(0.0, 0.0),
            tilt: range(1.4, 1.9),
            tremor: range(0.03, 0.06),
        }
    }

    fn validate(&self) -> Result<()> {
        self.jitter.check("jitter", 0.0)?;
        self.shimmer.check("shimmer", 0.0)?;
        self.hnr_db.check("hnr", -40.0)?;
        self.subharmonic.check("subharmonic", 0.0)?;
        self.tilt.check("tilt", 0.0)?;
        self.tremor.check("tremor", 0.0)?;
        if self.jitter.hi >= 0.2
            || self.shimmer.hi >= 0.5
            || self.subharmonic.hi >= 1.0
            || self.tremor.hi >= 0.3
        {
            return Err(Error::Config(
                "jitter, shimmer, subharmonic or tremor depth out of range".into(),
            ));
        }
        Ok(())
    }
}

fn default_profiles() -> [ClassProfile; 3] {
    [
        ClassProfile::health(),
        ClassProfile::neoplasm(),
        ClassProfile::structural(),
    ]
}

/// Corpus size and generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Source clips per class.
    pub per_class: usize,
    /// Target adaptation clips per class.
    pub target_per_class: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Noise clips per noise type.
    pub noise_clips: usize,
    pub noise_duration_s: f64,
    pub f0_hz: Range,
    /// Health, neoplasm, structural.
    pub profiles: [ClassProfile; 3],
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            per_class: 20,
            target_per_class: 4,
            duration_s: 2.5,
            sample_rate: 44_100,
            noise_clips: 4,
            noise_duration_s: 4.0,
            f0_hz: range(120.0, 220.0),
            profiles: default_profiles(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.per_class < 10 {
            return Err(Error::Config(format!(
                "need at least 10 clips per class, got {}",
                self.per_class
            )));
        }
        if self.duration_s < 2.5 || !self.duration_s.is_finite() {
            return Err(Error::Config(format!(
                "clips must last at least 2.5 s, got {}",
                self.duration_s
            )));
        }
        if self.sample_rate < 16_000 {
            return Err(Error::Config(
                "synthesis rate must be at least 16 kHz".into(),
            ));
        }
        if self.noise_clips == 0 || !(self.noise_duration_s > 0.0) {
            return Err(Error::Config("noise bank must be nonempty".into()));
        }
        self.f0_hz.check("f0", 50.0)?;
        if self.f0_hz.hi > 500.0 {
            return Err(Error::Config("f0 above 500 Hz".into()));
        }
        self.profiles.iter().try_for_each(|p| p.validate())
    }
}

/// A clean synthetic recording with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub id: usize,
    pub disease: Disease,
    pub clip: AudioClip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    /// `3 * per_class` clips; class of id `i` is `i % 3`.
    pub source: Vec<LabeledClip>,
    /// `3 * target_per_class` further clips with ids after the source ids.
    pub adaptation: Vec<LabeledClip>,
    pub ac_noise: Vec<AudioClip>,
    pub street_noise: Vec<AudioClip>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoiceParams {
    pub f0: f64,
    pub jitter: f64,
    pub shimmer: f64,
    pub hnr_db: f64,
    pub subharmonic: f64,
    pub tilt: f64,
    pub tremor: f64,
    pub tremor_hz: f64,
    pub tremor_phase: f64,
    pub formants: [f64; 3],
}

const STREAM_VOICE: u64 = 1 << 40;
const STREAM_AC: u64 = 2 << 40;
const STREAM_STREET: u64 = 3 << 40;
const HARMONIC_CEILING_HZ: f64 = 7000.0;
const FORMANTS_A: [f64; 3] = [750.0, 1200.0, 2600.0];
const FORMANT_BW: [f64; 3] = [90.0, 110.0, 160.0];
const FORMANT_GAIN: [f64; 3] = [1.0, 0.7, 0.35];
const OUTPUT_RMS: f64 = 0.1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn scale_to_rms(x: &mut [f64], target: f64) {
    let r = rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / r);
    }
}

/// One-pole low-pass coefficient for cutoff `fc`.
fn one_pole(fc: f64, fs: f64) -> f64 {
    1.0 - (-2.0 * PI * fc / fs).exp()
}

fn lowpass(x: &mut [f64], fc: f64, fs: f64) {
    let a = one_pole(fc, fs);
    let mut y = 0.0;
    for v in x.iter_mut() {
        y += a * (*v - y);
        *v = y;
    }
}

fn highpass(x: &mut [f64], fc: f64, fs: f64) {
    let a = one_pole(fc, fs);
    let mut y = 0.0;
    for v in x.iter_mut() {
        y += a * (*v - y);
        *v -= y;
    }
}

fn fade(x: &mut [f64], fs: f64) {
    let n = ((0.02 * fs) as usize).min(x.len() / 2);
    let len = x.len();
    for i in 0..n {
        let g = i as f64 / n as f64;
        x[i] *= g;
        x[len - 1 - i] *= g;
    }
}

fn formant_envelope(f: f64, formants: &[f64; 3]) -> f64 {
    let mut e = 0.02;
    for i in 0..3 {
        let d = (f - formants[i]) / FORMANT_BW[i];
        e += FORMANT_GAIN[i] / (1.0 + d * d).sqrt();
    }
    e
}

/// Draws the voice parameters of one clip of `disease`.
pub fn draw_voice(spec: &SynthSpec, disease: Disease, rng: &mut ChaCha8Rng) -> VoiceParams {
    let p = &spec.profiles[disease.index()];
    let shift = rng.gen_range(0.9..1.1);
    VoiceParams {
        f0: spec.f0_hz.sample(rng),
        jitter: p.jitter.sample(rng),
        shimmer: p.shimmer.sample(rng),
        hnr_db: p.hnr_db.sample(rng),
        subharmonic: p.subharmonic.sample(rng),
        tilt: p.tilt.sample(rng),
        tremor: p.tremor.sample(rng),
        tremor_hz: rng.gen_range(4.0..7.0),
        tremor_phase: rng.gen_range(0.0..2.0 * PI),
        formants: FORMANTS_A.map(|f| f * shift),
    }
}

/// Renders `n` samples of a sustained vowel at `fs` Hz.
pub fn render_voice(v: &VoiceParams, n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Cycle boundaries and per-cycle amplitudes.
    let nominal = fs / v.f0;
    let mut starts = vec![0.0];
    let mut amps = Vec::new();
    let mut t = 0.0;
    let mut i = 0usize;
    while t < n as f64 + nominal {
        let alt = if i % 2 == 0 { 1.0 } else { -1.0 };
        let slow = 1.0 + v.tremor * (2.0 * PI * v.tremor_hz * t / fs + v.tremor_phase).sin();
        let period = nominal / slow
            * (1.0 + v.jitter * gauss(rng) + 0.5 * v.subharmonic * 0.1 * alt).max(0.3);
        let amp =
            (1.0 + v.shimmer * gauss(rng)).max(0.05) * (1.0 - 0.5 * v.subharmonic * (1.0 - alt));
        t += period;
        starts.push(t);
        amps.push(amp);
        i += 1;
    }
    let harmonics = ((HARMONIC_CEILING_HZ / v.f0).floor() as usize).max(1);
    let weights: Vec<f64> = (1..=harmonics)
        .map(|k| (k as f64).powf(-v.tilt) * formant_envelope(k as f64 * v.f0, &v.formants))
        .collect();

    let mut voiced = vec![0.0; n];
    let mut noise = vec![0.0; n];
    for s in noise.iter_mut() {
        *s = gauss(rng);
    }
    highpass(&mut noise, 1000.0, fs);
    let mut cycle = 0usize;
    for (s, out) in voiced.iter_mut().enumerate() {
        let ts = s as f64;
        while starts[cycle + 1] <= ts {
            cycle += 1;
        }
        let frac = (ts - starts[cycle]) / (starts[cycle + 1] - starts[cycle]);
        let phi = 2.0 * PI * frac;
        let next = amps.get(cycle + 1).copied().unwrap_or(amps[cycle]);
        let amp = amps[cycle] + (next - amps[cycle]) * frac;
        // sin(k phi) by the Chebyshev recurrence.
        let c2 = 2.0 * phi.cos();
        let (mut prev, mut cur) = (0.0, phi.sin());
        let mut acc = 0.0;
        for w in &weights {
            acc += w * cur;
            let nxt = c2 * cur - prev;
            prev = cur;
            cur = nxt;
        }
        *out = amp * acc;
        noise[s] *= 0.6 + 0.4 * phi.cos();
    }
    let target_noise = rms(&voiced) * 10f64.powf(-v.hnr_db / 20.0);
    scale_to_rms(&mut noise, target_noise);
    let mut out: Vec<f64> = voiced.iter().zip(&noise).map(|(a, b)| a + b).collect();
    fade(&mut out, fs);
    scale_to_rms(&mut out, OUTPUT_RMS);
    out
}

/// Stationary air-conditioner noise: mains hum harmonics, low-passed rumble
/// and a weak broadband fan hiss.
pub fn render_ac_noise(n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let line = if rng.gen_bool(0.5) { 50.0 } else { 60.0 };
    let mut rumble: Vec<f64> = (0..n).map(|_| gauss(rng)).collect();
    lowpass(&mut rumble, 120.0, fs);
    lowpass(&mut rumble, 120.0, fs);
    scale_to_rms(&mut rumble, 1.0);
    let mut hiss: Vec<f64> = (0..n).map(|_| gauss(rng)).collect();
    lowpass(&mut hiss, 3000.0, fs);
    scale_to_rms(&mut hiss, 0.2);
    let hum: Vec<(f64, f64, f64)> = (1..=5)
        .map(|h| {
            (
                h as f64 * line,
                0.6 / h as f64,
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let tone: f64 = hum
                .iter()
                .map(|&(f, a, p)| a * (2.0 * PI * f * t + p).sin())
                .sum();
            tone + rumble[i] + hiss[i]
        })
        .collect();
    scale_to_rms(&mut out, OUTPUT_RMS);
    out
}

/// Nonstationary street noise: broadband traffic noise under a slow random
/// amplitude envelope, with occasional horn bursts.
pub fn render_street_noise(n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let white: Vec<f64> = (0..n).map(|_| gauss(rng)).collect();
    let mut low = white.clone();
    lowpass(&mut low, 400.0, fs);
    scale_to_rms(&mut low, 1.0);
    let mut mid = white;
    lowpass(&mut mid, 4000.0, fs);
    highpass(&mut mid, 300.0, fs);
    scale_to_rms(&mut mid, 0.8);
    let mods: Vec<(f64, f64)> = (0..4)
        .map(|_| (rng.gen_range(0.15..2.0), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let horns: Vec<(usize, usize, f64)> = (0..2)
        .map(|_| {
            let len = (rng.gen_range(0.15..0.4) * fs) as usize;
            (
                rng.gen_range(0..n.saturating_sub(len).max(1)),
                len,
                rng.gen_range(350.0..500.0),
            )
        })
        .collect();
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let m: f64 = mods
                .iter()
                .map(|&(f, p)| (2.0 * PI * f * t + p).sin())
                .sum::<f64>()
                / 4.0;
            let env = 0.55 + 0.45 * m;
            let mut v = env * (low[i] + mid[i]);
            for &(start, len, f) in &horns {
                if (start..start + len).contains(&i) {
                    v += 0.5 * ((2.0 * PI * f * t).sin() + 0.5 * (4.0 * PI * f * t).sin());
                }
            }
            v
        })
        .collect();
    scale_to_rms(&mut out, OUTPUT_RMS);
    out
}

fn clip_index_disease(i: usize) -> Disease {
    Disease::ALL[i % 3]
}

/// Deterministic corpus: every clip draws from its own RNG stream of `seed`.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<SynthDataset> {
    spec.validate()?;
    let fs = spec.sample_rate as f64;
    let n = (spec.duration_s * fs).round() as usize;
    let voice = |id: usize| -> Result<LabeledClip> {
        let mut rng = stream_rng(seed, STREAM_VOICE + id as u64);
        let disease = clip_index_disease(id);
        let params = draw_voice(spec, disease, &mut rng);
        Ok(LabeledClip {
            id,
            disease,
            clip: AudioClip::new(render_voice(&params, n, fs, &mut rng), spec.sample_rate)?,
        })
    };
    let n_source = 3 * spec.per_class;
    let n_target = 3 * spec.target_per_class;
    let source = (0..n_source).map(voice).collect::<Result<Vec<_>>>()?;
    let adaptation = (n_source..n_source + n_target)
        .map(voice)
        .collect::<Result<Vec<_>>>()?;
    let nn = (spec.noise_duration_s * fs).round() as usize;
    let ac_noise = (0..spec.noise_clips)
        .map(|i| {
            AudioClip::new(
                render_ac_noise(nn, fs, &mut stream_rng(seed, STREAM_AC + i as u64)),
                spec.sample_rate,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let street_noise = (0..spec.noise_clips)
        .map(|i| {
            AudioClip::new(
                render_street_noise(nn, fs, &mut stream_rng(seed, STREAM_STREET + i as u64)),
                spec.sample_rate,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthDataset {
        source,
        adaptation,
        ac_noise,
        street_noise,
    })
}
