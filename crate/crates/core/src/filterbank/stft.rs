use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dataset::AudioClip;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { fft_size: 128, hop: 64, window: Window::Hann }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() || self.fft_size < 2 {
            return Err(Error::Config(format!("fft_size {} is not a power of two", self.fft_size)));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::Config(format!("hop {} outside 1..={}", self.hop, self.fft_size)));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.fft_size {
            0
        } else {
            1 + (len - self.fft_size) / self.hop
        }
    }
}

/// One-sided short-time Fourier transform: `fft_size/2 + 1` rows, one
/// column per frame.
pub fn stft_complex(clip: &AudioClip, cfg: &StftConfig) -> Result<DMatrix<Complex64>> {
    cfg.validate()?;
    let n_frames = cfg.n_frames(clip.len());
    if n_frames == 0 {
        return Err(Error::ClipTooShort { clip_id: clip.clip_id.clone(), len: clip.len(), need: cfg.fft_size });
    }
    let window = cfg.window.coefficients(cfg.fft_size);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let n_bins = cfg.n_bins();
    let mut out = DMatrix::<Complex64>::zeros(n_bins, n_frames);
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    for t in 0..n_frames {
        let frame = &clip.samples[t * cfg.hop..t * cfg.hop + cfg.fft_size];
        for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex64::new(s * w, 0.0);
        }
        fft.process(&mut buf);
        out.column_mut(t).iter_mut().zip(&buf[..n_bins]).for_each(|(o, &v)| *o = v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip { samples, sample_rate: 12_500, clip_id: "t".into() }
    }

    /// Direct O(N^2) DFT of one frame.
    fn naive_dft(frame: &[f64], k: usize) -> Complex64 {
        let n = frame.len() as f64;
        frame.iter().enumerate().map(|(i, &x)| Complex64::from_polar(x, -2.0 * PI * k as f64 * i as f64 / n)).sum()
    }

    #[test]
    fn shape_follows_frame_count() {
        let c = clip(vec![0.1; 1000]);
        let z = stft_complex(&c, &StftConfig::default()).unwrap();
        assert_eq!(z.nrows(), 65);
        assert_eq!(z.ncols(), 1 + (1000 - 128) / 64);
    }

    #[test]
    fn cosine_at_bin_three_peaks_at_row_three() {
        let cfg = StftConfig { window: Window::Rectangular, ..Default::default() };
        let samples: Vec<f64> = (0..640).map(|i| (2.0 * PI * 3.0 * i as f64 / 128.0).cos()).collect();
        let c = clip(samples);
        let z = stft_complex(&c, &cfg).unwrap();
        for t in 0..z.ncols() {
            let col = z.column(t);
            let best = (0..col.len()).max_by(|&a, &b| col[a].norm().total_cmp(&col[b].norm())).unwrap();
            assert_eq!(best, 3);
            let frame = &c.samples[t * 64..t * 64 + 128];
            for k in 0..65 {
                assert!((col[k] - naive_dft(frame, k)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_clip_and_short_clip() {
        let z = stft_complex(&clip(vec![0.0; 300]), &StftConfig::default()).unwrap();
        assert!(z.iter().all(|v| v.norm() == 0.0));
        assert!(matches!(stft_complex(&clip(vec![0.0; 127]), &StftConfig::default()), Err(Error::ClipTooShort { .. })));
    }

    #[test]
    fn config_validation() {
        assert!(StftConfig { fft_size: 100, ..Default::default() }.validate().is_err());
        assert!(StftConfig { hop: 0, ..Default::default() }.validate().is_err());
        assert!(StftConfig { hop: 129, ..Default::default() }.validate().is_err());
    }
}
