//! Additive noise at a target signal-to-noise ratio.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

/// Mean squared amplitude.
pub fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mix {
    pub mixed: AudioClip,
    /// The noise actually added, already scaled.
    pub scaled_noise: Vec<f64>,
    pub scale: f64,
    /// Start index into the noise clip (wrapping when the noise is shorter).
    pub offset: usize,
}

/// `clean + scale * noise`, with `scale` chosen so the mix has `snr_db`.
pub fn mix_noise(
    clean: &AudioClip,
    noise: &AudioClip,
    snr_db: f64,
    seed: u64,
) -> Result<AudioClip> {
    Ok(mix_noise_detailed(clean, noise, snr_db, seed)?.mixed)
}

/// Like [`mix_noise`] but also returns the scaled noise and crop offset.
///
/// Noise longer than the clean clip is cropped at a seeded random offset;
/// shorter noise is tiled with wrap-around from a seeded offset.
pub fn mix_noise_detailed(
    clean: &AudioClip,
    noise: &AudioClip,
    snr_db: f64,
    seed: u64,
) -> Result<Mix> {
    if clean.sample_rate != noise.sample_rate {
        return Err(Error::Audio(format!(
            "sample rates differ: {} vs {}",
            clean.sample_rate, noise.sample_rate
        )));
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("snr must be finite, got {snr_db}")));
    }
    if clean.is_empty() || noise.is_empty() {
        return Err(Error::Audio("cannot mix empty clips".into()));
    }
    let n = clean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = if noise.len() > n {
        rng.gen_range(0..=noise.len() - n)
    } else {
        rng.gen_range(0..noise.len())
    };
    let fitted: Vec<f64> = (0..n)
        .map(|i| noise.samples[(offset + i) % noise.len()])
        .collect();
    let p_noise = mean_power(&fitted);
    if p_noise == 0.0 {
        return Err(Error::Undefined(
            "noise is silent over the mixed extent; SNR undefined".into(),
        ));
    }
    let p_signal = mean_power(&clean.samples);
    if p_signal == 0.0 {
        return Err(Error::Undefined(
            "clean signal is silent; SNR undefined".into(),
        ));
    }
    let scale = (p_signal / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled_noise: Vec<f64> = fitted.iter().map(|v| v * scale).collect();
    let samples = clean
        .samples
        .iter()
        .zip(&scaled_noise)
        .map(|(c, v)| c + v)
        .collect();
    Ok(Mix {
        mixed: AudioClip::new(samples, clean.sample_rate)?,
        scaled_noise,
        scale,
        offset,
    })
}

/// `10 log10(P_clean / P_(mixed - clean))`.
pub fn measured_snr_db(clean: &AudioClip, mixed: &AudioClip) -> Result<f64> {
    if clean.len() != mixed.len() {
        return Err(Error::Audio("clips differ in length".into()));
    }
    let residual: Vec<f64> = mixed
        .samples
        .iter()
        .zip(&clean.samples)
        .map(|(m, c)| m - c)
        .collect();
    let p_noise = mean_power(&residual);
    if p_noise == 0.0 {
        return Err(Error::Undefined("mix contains no noise".into()));
    }
    Ok(10.0 * (mean_power(&clean.samples) / p_noise).log10())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(n: usize) -> AudioClip {
        let s = (0..n).map(|i| (i as f64 * 0.05).sin()).collect();
        AudioClip::new(s, 16000).unwrap()
    }

    fn noise(n: usize, seed: u64) -> AudioClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioClip::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), 16000).unwrap()
    }

    #[test]
    fn zero_db_means_equal_power() {
        let m = mix_noise_detailed(&sine(8000), &noise(20000, 1), 0.0, 3).unwrap();
        let ratio = mean_power(&m.scaled_noise).sqrt() / mean_power(&sine(8000).samples).sqrt();
        assert!((ratio - 1.0).abs() < 1e-3);
    }

    #[test]
    fn ten_db_scale_from_rms() {
        let clean = sine(16000);
        let mut nz = noise(16000, 2);
        let r = mean_power(&nz.samples).sqrt();
        nz.samples.iter_mut().for_each(|v| *v /= r);
        let m = mix_noise_detailed(&clean, &nz, 10.0, 0).unwrap();
        let expected = mean_power(&clean.samples).sqrt() / 1.0 * 10f64.powf(-0.5);
        assert!((m.scale - expected).abs() < 1e-9 * expected.max(1.0));
        assert!((expected - 0.2236).abs() < 2e-3);
    }

    #[test]
    fn short_noise_is_tiled_long_noise_cropped() {
        let clean = sine(1000);
        let short = noise(300, 4);
        let m = mix_noise_detailed(&clean, &short, 5.0, 9).unwrap();
        for i in 0..1000 {
            let src = short.samples[(m.offset + i) % 300] * m.scale;
            assert_eq!(m.scaled_noise[i], src);
        }
        let long = noise(5000, 5);
        let a = mix_noise_detailed(&clean, &long, 5.0, 9).unwrap();
        let b = mix_noise_detailed(&clean, &long, 5.0, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.offset + 1000 <= 5000);
    }

    #[test]
    fn silent_noise_is_an_error() {
        let z = AudioClip::new(vec![0.0; 100], 16000).unwrap();
        assert!(matches!(
            mix_noise(&sine(100), &z, 3.0, 0),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn rate_mismatch_is_an_error() {
        let other = AudioClip::new(vec![0.1; 100], 8000).unwrap();
        assert!(mix_noise(&sine(100), &other, 3.0, 0).is_err());
    }
}
