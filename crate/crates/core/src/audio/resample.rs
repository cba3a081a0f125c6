//! Kaiser-windowed sinc resampling with a polyphase table.

use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub const TAPS_PER_PHASE: usize = 256;
const CUTOFF_FRACTION: f64 = 0.47;
const KAISER_BETA: f64 = 8.0;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Precomputed filter bank for one `(source, target)` rate pair.
#[derive(Debug, Clone)]
pub struct Resampler {
    source: u32,
    target: u32,
    up: u64,
    down: u64,
    /// `up` phases of `TAPS_PER_PHASE` taps, each normalized to unit DC gain.
    bank: Vec<f64>,
}

impl Resampler {
    pub fn new(source: u32, target: u32) -> Result<Self> {
        if source == 0 || target == 0 {
            return Err(Error::Audio("sample rates must be positive".into()));
        }
        let g = gcd(source as u64, target as u64);
        let (up, down) = (target as u64 / g, source as u64 / g);
        let cutoff = CUTOFF_FRACTION * source.min(target) as f64 / source as f64;
        let half = TAPS_PER_PHASE as f64 / 2.0;
        let norm = bessel_i0(KAISER_BETA);
        let mut bank = Vec::with_capacity(up as usize * TAPS_PER_PHASE);
        for p in 0..up {
            let frac = p as f64 / up as f64;
            let start = bank.len();
            for i in 0..TAPS_PER_PHASE {
                // Tap i multiplies x[floor(t) - half + 1 + i]; tau = t - k.
                let tau = frac + half - 1.0 - i as f64;
                let r = tau / half;
                let w = if r.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
                };
                bank.push(2.0 * cutoff * sinc(2.0 * cutoff * tau) * w);
            }
            let dc: f64 = bank[start..].iter().sum();
            bank[start..].iter_mut().for_each(|h| *h /= dc);
        }
        Ok(Self {
            source,
            target,
            up,
            down,
            bank,
        })
    }

    pub fn output_len(&self, n: usize) -> usize {
        (n as f64 * self.target as f64 / self.source as f64).round() as usize
    }

    pub fn process(&self, samples: &[f64]) -> Vec<f64> {
        if self.up == self.down {
            return samples.to_vec();
        }
        let n = samples.len() as i64;
        let out_len = self.output_len(samples.len());
        let lead = TAPS_PER_PHASE as i64 / 2 - 1;
        let mut out = Vec::with_capacity(out_len);
        for j in 0..out_len as u64 {
            let pos = j * self.down;
            let base = (pos / self.up) as i64;
            let phase = (pos % self.up) as usize;
            let taps = &self.bank[phase * TAPS_PER_PHASE..][..TAPS_PER_PHASE];
            let first = base - lead;
            let mut acc = 0.0;
            if first >= 0 && first + TAPS_PER_PHASE as i64 <= n {
                let xs = &samples[first as usize..][..TAPS_PER_PHASE];
                for (h, x) in taps.iter().zip(xs) {
                    acc += h * x;
                }
            } else {
                for (i, h) in taps.iter().enumerate() {
                    let k = first + i as i64;
                    if (0..n).contains(&k) {
                        acc += h * samples[k as usize];
                    }
                }
            }
            out.push(acc);
        }
        out
    }
}

/// Resamples to `target` Hz; output length is `round(n * target / source)`.
pub fn resample(clip: &AudioClip, target: u32) -> Result<AudioClip> {
    let r = Resampler::new(clip.sample_rate, target)?;
    AudioClip::new(r.process(&clip.samples), target)
}
