//! Short-time log power spectra, z-score normalization and segmentation.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, RngCore};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LPS_SAMPLE_RATE: u32 = 16_000;
/// 31.25 ms at 16 kHz.
pub const WINDOW_SAMPLES: usize = 500;
pub const HOP_SAMPLES: usize = WINDOW_SAMPLES / 2;
pub const LPS_BINS: usize = WINDOW_SAMPLES / 2 + 1;
pub const LPS_FLOOR: f64 = 1e-10;
pub const SEGMENT_FRAMES: usize = 127;
const STD_FLOOR: f64 = 1e-8;

const MAGIC: &[u8; 5] = b"VXLPS";
const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrogramKind {
    RawLps,
    NormalizedLps,
}

/// `frames x bins` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f64>,
    pub sample_rate: u32,
    pub window: usize,
    pub hop: usize,
    pub kind: SpectrogramKind,
}

impl Spectrogram {
    pub fn from_values(
        frames: usize,
        bins: usize,
        values: Vec<f64>,
        kind: SpectrogramKind,
    ) -> Result<Self> {
        if frames * bins != values.len() || frames == 0 || bins == 0 {
            return Err(Error::Shape(format!(
                "{frames}x{bins} spectrogram cannot hold {} values",
                values.len()
            )));
        }
        Ok(Self {
            frames,
            bins,
            values,
            sample_rate: LPS_SAMPLE_RATE,
            window: WINDOW_SAMPLES,
            hop: HOP_SAMPLES,
            kind,
        })
    }

    pub fn frame_length_ms(&self) -> f64 {
        1000.0 * self.window as f64 / self.sample_rate as f64
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.bins..(i + 1) * self.bins]
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.values[frame * self.bins + bin]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation over all cells.
    pub fn std(&self) -> f64 {
        let m = self.mean();
        (self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64)
            .sqrt()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.frames, self.bins], self.values.clone())
            .expect("shape checked at construction")
    }

    /// Header `frame,b0,...`, one row per frame.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame");
        for b in 0..self.bins {
            let _ = write!(s, ",b{b}");
        }
        s.push('\n');
        for f in 0..self.frames {
            let _ = write!(s, "{f}");
            for v in self.frame(f) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

/// Flat binary layout: `VXLPS`, version byte, `u32` rows, `u32` cols (little
/// endian), then row-major little-endian `f64` values. Only the matrix is
/// stored; a read spectrogram carries the default 16 kHz framing and is marked
/// raw.
pub fn write_spectrogram<W: Write>(mut w: W, spec: &Spectrogram) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[FORMAT_VERSION])?;
    w.write_all(&(spec.frames as u32).to_le_bytes())?;
    w.write_all(&(spec.bins as u32).to_le_bytes())?;
    for v in &spec.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_spectrogram<R: Read>(mut r: R) -> Result<Spectrogram> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a spectrogram file".into()));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported spectrogram version {}",
            version[0]
        )));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let rows = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u32::from_le_bytes(word) as usize;
    let mut values = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 8];
    for _ in 0..rows * cols {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Spectrogram::from_values(rows, cols, values, SpectrogramKind::RawLps)
}

/// Hamming-windowed 500-point STFT with a reusable FFT plan.
pub struct LpsExtractor {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl Default for LpsExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl LpsExtractor {
    pub fn new() -> Self {
        let n = WINDOW_SAMPLES;
        let window = (0..n)
            .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
            .collect();
        Self {
            fft: FftPlanner::new().plan_fft_forward(n),
            window,
        }
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// `|X[k]|^2` over all 500 FFT bins of one windowed frame.
    pub fn frame_power(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn compute(&self, clip: &AudioClip) -> Result<Spectrogram> {
        if clip.sample_rate != LPS_SAMPLE_RATE {
            return Err(Error::Audio(format!(
                "LPS extraction expects {LPS_SAMPLE_RATE} Hz audio, got {}",
                clip.sample_rate
            )));
        }
        let n = clip.len();
        if n < WINDOW_SAMPLES {
            return Err(Error::Audio(format!(
                "clip of {n} samples is shorter than one {WINDOW_SAMPLES}-sample window"
            )));
        }
        let frames = (n - WINDOW_SAMPLES) / HOP_SAMPLES + 1;
        let mut values = Vec::with_capacity(frames * LPS_BINS);
        for f in 0..frames {
            let frame = &clip.samples[f * HOP_SAMPLES..][..WINDOW_SAMPLES];
            let power = self.frame_power(frame);
            values.extend(power[..LPS_BINS].iter().map(|p| p.max(LPS_FLOOR).ln()));
        }
        Spectrogram::from_values(frames, LPS_BINS, values, SpectrogramKind::RawLps)
    }
}

/// Raw LPS of a 16 kHz clip: `(floor((n - 500) / 250) + 1) x 251`.
pub fn stft_lps(clip: &AudioClip) -> Result<Spectrogram> {
    LpsExtractor::new().compute(clip)
}

/// Per-utterance z-score over every cell; the standard deviation is floored at 1e-8.
pub fn normalize(spec: &Spectrogram) -> Spectrogram {
    let mean = spec.mean();
    let std = spec.std().max(STD_FLOOR);
    Spectrogram {
        values: spec.values.iter().map(|v| (v - mean) / std).collect(),
        kind: SpectrogramKind::NormalizedLps,
        ..spec.clone()
    }
}

pub enum SegmentMode<'a> {
    /// Frames `[0, frames)`.
    Head,
    /// Uniformly random start frame.
    Random(&'a mut dyn RngCore),
}

pub fn segment(spec: &Spectrogram, frames: usize, mode: SegmentMode<'_>) -> Result<Spectrogram> {
    if frames == 0 || spec.frames < frames {
        return Err(Error::Audio(format!(
            "need {frames} frames, spectrogram has {}",
            spec.frames
        )));
    }
    let start = match mode {
        SegmentMode::Head => 0,
        SegmentMode::Random(rng) => rng.gen_range(0..=spec.frames - frames),
    };
    Ok(Spectrogram {
        frames,
        values: spec.values[start * spec.bins..(start + frames) * spec.bins].to_vec(),
        ..spec.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tone(freq: f64, n: usize) -> AudioClip {
        let s = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin())
            .collect();
        AudioClip::new(s, 16000).unwrap()
    }

    #[test]
    fn two_seconds_is_127_by_251() {
        let s = stft_lps(&tone(440.0, 32000)).unwrap();
        assert_eq!((s.frames, s.bins), (127, 251));
        assert_eq!(s.frame_length_ms(), 31.25);
    }

    #[test]
    fn one_khz_peaks_at_bin_31() {
        let s = stft_lps(&tone(1000.0, 8000)).unwrap();
        for f in 0..s.frames {
            let row = s.frame(f);
            let best = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            assert_eq!(best, 31, "frame {f}");
        }
    }

    #[test]
    fn silence_hits_the_floor() {
        let s = stft_lps(&AudioClip::new(vec![0.0; 1000], 16000).unwrap()).unwrap();
        assert!(s.values.iter().all(|&v| v == LPS_FLOOR.ln()));
    }

    #[test]
    fn short_clip_and_wrong_rate_rejected() {
        assert!(stft_lps(&AudioClip::new(vec![0.1; 499], 16000).unwrap()).is_err());
        assert!(stft_lps(&AudioClip::new(vec![0.1; 1000], 44100).unwrap()).is_err());
    }

    #[test]
    fn parseval_on_windowed_frame() {
        let ex = LpsExtractor::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let frame: Vec<f64> = (0..WINDOW_SAMPLES)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let p: f64 = ex.frame_power(&frame).iter().sum();
        let e: f64 = frame
            .iter()
            .zip(ex.window())
            .map(|(x, w)| (x * w).powi(2))
            .sum();
        assert!((p - WINDOW_SAMPLES as f64 * e).abs() <= 1e-9 * p);
    }

    #[test]
    fn normalization_properties() {
        let s = stft_lps(&tone(700.0, 16000)).unwrap();
        let z = normalize(&s);
        assert!(z.mean().abs() < 1e-6);
        assert!((z.std() - 1.0).abs() < 1e-6);
        let zz = normalize(&z);
        assert!(zz
            .values
            .iter()
            .zip(&z.values)
            .all(|(a, b)| (a - b).abs() < 1e-6));
        let mut affine = s.clone();
        affine.values.iter_mut().for_each(|v| *v = 3.0 * *v - 7.0);
        let za = normalize(&affine);
        assert!(za
            .values
            .iter()
            .zip(&z.values)
            .all(|(a, b)| (a - b).abs() < 1e-9));
        let flat = Spectrogram::from_values(2, 3, vec![4.0; 6], SpectrogramKind::RawLps).unwrap();
        assert!(normalize(&flat).values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn segmentation_modes() {
        let s = Spectrogram::from_values(
            200,
            2,
            (0..400).map(f64::from).collect(),
            SpectrogramKind::RawLps,
        )
        .unwrap();
        let h = segment(&s, 127, SegmentMode::Head).unwrap();
        assert_eq!(h.values, s.values[..254].to_vec());
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let ra = segment(&s, 127, SegmentMode::Random(&mut a)).unwrap();
        let rb = segment(&s, 127, SegmentMode::Random(&mut b)).unwrap();
        assert_eq!(ra, rb);
        let exact = segment(&h, 127, SegmentMode::Random(&mut a)).unwrap();
        assert_eq!(exact, h);
        assert!(segment(&s, 201, SegmentMode::Head).is_err());
    }

    #[test]
    fn binary_round_trip() {
        let s = stft_lps(&tone(300.0, 2000)).unwrap();
        let mut buf = Vec::new();
        write_spectrogram(&mut buf, &s).unwrap();
        assert_eq!(buf.len(), 5 + 1 + 8 + 8 * s.values.len());
        let back = read_spectrogram(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        buf[0] = b'X';
        assert!(read_spectrogram(buf.as_slice()).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = Spectrogram::from_values(2, 2, vec![0.5, 1.0, -2.0, 3.25], SpectrogramKind::RawLps)
            .unwrap();
        assert_eq!(s.to_csv(), "frame,b0,b1\n0,0.5,1\n1,-2,3.25\n");
    }
}
