use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::stft::Window;
use crate::dataset::AudioClip;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfccConfig {
    pub n_coefficients: usize,
    pub n_mel_filters: usize,
    pub pre_emphasis: f64,
    pub frame_s: f64,
    pub hop_s: f64,
    pub log_floor: f64,
    pub low_hz: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub high_hz: Option<f64>,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_coefficients: 13,
            n_mel_filters: 26,
            pre_emphasis: 0.97,
            frame_s: 0.025,
            hop_s: 0.010,
            log_floor: 1e-10,
            low_hz: 0.0,
            high_hz: None,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the mel scale, `n_filters x (fft_size/2 + 1)`.
fn mel_filterbank(n_filters: usize, fft_size: usize, fs: f64, low: f64, high: f64) -> DMatrix<f64> {
    let n_bins = fft_size / 2 + 1;
    let (lo, hi) = (hz_to_mel(low), hz_to_mel(high));
    let edges: Vec<f64> =
        (0..n_filters + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_filters + 1) as f64)).collect();
    let bin_hz = fs / fft_size as f64;
    DMatrix::from_fn(n_filters, n_bins, |m, k| {
        let f = k as f64 * bin_hz;
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        if f > l && f <= c {
            (f - l) / (c - l)
        } else if f > c && f < r {
            (r - f) / (r - c)
        } else {
            0.0
        }
    })
}

/// Orthonormal DCT-II matrix keeping the first `n_out` coefficients.
fn dct_matrix(n_out: usize, n_in: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_out, n_in, |k, n| {
        let scale = if k == 0 { (1.0 / n_in as f64).sqrt() } else { (2.0 / n_in as f64).sqrt() };
        scale * (PI * k as f64 * (2.0 * n as f64 + 1.0) / (2.0 * n_in as f64)).cos()
    })
}

/// Mel-frequency cepstral coefficients, one column per frame.
///
/// Pre-emphasis, Hann-windowed frames zero-padded to the next power of two,
/// power spectrum, mel filterbank, natural log with a floor, DCT-II.
pub fn mfcc(clip: &AudioClip, cfg: &MfccConfig) -> Result<DMatrix<f64>> {
    let fs = f64::from(clip.sample_rate);
    let frame = (cfg.frame_s * fs).round() as usize;
    let hop = (cfg.hop_s * fs).round() as usize;
    if frame == 0 || hop == 0 {
        return Err(Error::Config("MFCC frame and hop must be at least one sample".into()));
    }
    if cfg.n_coefficients > cfg.n_mel_filters || cfg.n_mel_filters == 0 {
        return Err(Error::Config("MFCC needs 0 < n_coefficients <= n_mel_filters".into()));
    }
    if clip.len() < frame {
        return Err(Error::ClipTooShort { clip_id: clip.clip_id.clone(), len: clip.len(), need: frame });
    }
    let high = cfg.high_hz.unwrap_or(fs / 2.0).min(fs / 2.0);
    if cfg.low_hz < 0.0 || cfg.low_hz >= high {
        return Err(Error::Config(format!("MFCC band {}..{high} Hz is empty", cfg.low_hz)));
    }

    let mut emphasized = Vec::with_capacity(clip.len());
    emphasized.push(clip.samples[0]);
    emphasized.extend(clip.samples.windows(2).map(|w| w[1] - cfg.pre_emphasis * w[0]));

    let fft_size = frame.next_power_of_two();
    let n_bins = fft_size / 2 + 1;
    let window = Window::Hann.coefficients(frame);
    let fb = mel_filterbank(cfg.n_mel_filters, fft_size, fs, cfg.low_hz, high);
    let dct = dct_matrix(cfg.n_coefficients, cfg.n_mel_filters);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);

    let n_frames = 1 + (clip.len() - frame) / hop;
    let mut power = DMatrix::<f64>::zeros(n_bins, n_frames);
    let mut buf = vec![Complex64::default(); fft_size];
    for t in 0..n_frames {
        buf.iter_mut().for_each(|b| *b = Complex64::default());
        for (i, (&s, &w)) in emphasized[t * hop..t * hop + frame].iter().zip(&window).enumerate() {
            buf[i].re = s * w;
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            power[(k, t)] = buf[k].norm_sqr() / fft_size as f64;
        }
    }
    let log_energy = (fb * power).map(|e| e.max(cfg.log_floor).ln());
    Ok(dct * log_energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip { samples, sample_rate: 12_500, clip_id: "m".into() }
    }

    #[test]
    fn thirteen_rows() {
        let samples: Vec<f64> = (0..6250).map(|i| (i as f64 * 0.3).sin() * 0.5).collect();
        let m = mfcc(&clip(samples), &MfccConfig::default()).unwrap();
        assert_eq!(m.nrows(), 13);
        assert_eq!(m.ncols(), 1 + (6250 - 313) / 125);
    }

    #[test]
    fn silence_gives_floor_vector() {
        let cfg = MfccConfig::default();
        let m = mfcc(&clip(vec![0.0; 2000]), &cfg).unwrap();
        let c0 = (cfg.n_mel_filters as f64).sqrt() * cfg.log_floor.ln();
        for t in 0..m.ncols() {
            assert!((m[(0, t)] - c0).abs() < 1e-9);
            for k in 1..13 {
                assert!(m[(k, t)].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn scaling_shifts_only_c0() {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..4000).map(|_| rng.random_range(-0.08..0.08)).collect();
        let loud: Vec<f64> = noise.iter().map(|v| v * 10.0).collect();
        let cfg = MfccConfig::default();
        let a = mfcc(&clip(noise), &cfg).unwrap();
        let b = mfcc(&clip(loud), &cfg).unwrap();
        let shift = (cfg.n_mel_filters as f64).sqrt() * 100f64.ln();
        for t in 0..a.ncols() {
            assert!((b[(0, t)] - a[(0, t)] - shift).abs() < 1e-9);
            for k in 1..13 {
                assert!((b[(k, t)] - a[(k, t)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dct_is_orthonormal() {
        let d = dct_matrix(26, 26);
        let i = &d * d.transpose();
        assert!((i - DMatrix::<f64>::identity(26, 26)).abs().max() < 1e-12);
    }

    #[test]
    fn short_clip_is_rejected() {
        assert!(matches!(mfcc(&clip(vec![0.0; 100]), &MfccConfig::default()), Err(Error::ClipTooShort { .. })));
    }
}
