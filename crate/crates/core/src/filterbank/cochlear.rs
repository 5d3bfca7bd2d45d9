//! Lyon passive-ear cochleagram in the Slaney formulation: a cascade of
//! second-order notch/resonator stages, half-wave rectification, four coupled
//! automatic gain control stages, adjacent-channel differencing and two-pole
//! smoothing before decimation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

use crate::dataset::AudioClip;
use crate::{Error, Result};

const EAR_BREAK_HZ: f64 = 1000.0;
const EAR_ZERO_OFFSET: f64 = 1.5;
const EAR_SHARPNESS: f64 = 5.0;
const EAR_PREEMPH_CORNER_HZ: f64 = 300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CochlearConfig {
    pub ear_q: f64,
    pub step_factor: f64,
    /// Channel count the design must produce at the clip's sample rate.
    pub channels: usize,
    /// Output one frame every `decimation` samples.
    pub decimation: usize,
    pub tau_factor: f64,
    pub differ: bool,
    pub agc: bool,
    pub agc_targets: [f64; 4],
    pub agc_taus_s: [f64; 4],
    pub agc_state_limit: f64,
}

impl Default for CochlearConfig {
    fn default() -> Self {
        Self {
            ear_q: 8.0,
            step_factor: 0.25,
            channels: 78,
            decimation: 64,
            tau_factor: 3.0,
            differ: true,
            agc: true,
            agc_targets: [0.0032, 0.0016, 0.0008, 0.0004],
            agc_taus_s: [0.64, 0.16, 0.04, 0.01],
            agc_state_limit: 0.9999,
        }
    }
}

/// One biquad `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn response(&self, f: f64, fs: f64) -> f64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / fs);
        let z2 = z1 * z1;
        let num = self.b[0] + self.b[1] * z1 + self.b[2] * z2;
        let den = 1.0 + self.a[0] * z1 + self.a[1] * z2;
        (num / den).norm()
    }

    fn with_gain(mut self, desired: f64, f: f64, fs: f64) -> Self {
        let g = desired / self.response(f, fs);
        self.b.iter_mut().for_each(|v| *v *= g);
        self
    }
}

/// `[1, -2 rho cos(theta), rho^2]` for a resonance at `f` with quality `q`.
fn second_order(f: f64, q: f64, fs: f64) -> [f64; 3] {
    let cft = f / fs;
    let rho = (-PI * cft / q).exp();
    let theta = 2.0 * PI * cft * (1.0 - 1.0 / (4.0 * q * q)).sqrt();
    [1.0, -2.0 * rho * theta.cos(), rho * rho]
}

/// Filter design for one sample rate.
#[derive(Debug, Clone)]
pub struct LyonDesign {
    front: [Biquad; 2],
    cascade: Vec<Biquad>,
    pub center_hz: Vec<f64>,
}

impl LyonDesign {
    pub fn new(fs: f64, ear_q: f64, step_factor: f64) -> Result<Self> {
        if !(ear_q > 0.5 && step_factor > 0.0 && fs > 0.0) {
            return Err(Error::Config("cochlear design needs ear_q > 0.5, step_factor > 0".into()));
        }
        let eb = EAR_BREAK_HZ;
        let half = fs / 2.0;
        let top = half - (half * half + eb * eb).sqrt() / ear_q * step_factor * EAR_ZERO_OFFSET
            + (half * half + eb * eb).sqrt() / ear_q * step_factor;
        let low = eb / (4.0 * ear_q * ear_q - 1.0).sqrt();
        let span = (top + (eb * eb + top * top).sqrt()).ln() - (low + (low * low + eb * eb).sqrt()).ln();
        let n = (ear_q * span / step_factor).floor();
        if n < 2.0 {
            return Err(Error::Config(format!("cochlear design yields {n} channels at {fs} Hz")));
        }
        let n = n as usize;
        let top_term = top + (eb * eb + top * top).sqrt();
        let center_hz: Vec<f64> = (1..=n)
            .map(|c| {
                let e = (c as f64 * step_factor / ear_q).exp();
                (-(e * eb * eb) / top_term + top_term / e) / 2.0
            })
            .collect();
        let bandwidth = |cf: f64| (cf * cf + eb * eb).sqrt() / ear_q;

        let mut cascade = Vec::with_capacity(n);
        for (i, &cf) in center_hz.iter().enumerate() {
            let bw = bandwidth(cf);
            let zero_cf = cf + bw * step_factor * EAR_ZERO_OFFSET;
            let zero_q = EAR_SHARPNESS * zero_cf / bw;
            let zeros = second_order(zero_cf, zero_q, fs);
            let poles = second_order(cf, cf / bw, fs);
            let ratio = |j: usize| center_hz[j - 1] / center_hz[j];
            let dc_gain = if i == 0 { ratio(1) } else { ratio(i) };
            cascade.push(Biquad { b: zeros, a: [poles[1], poles[2]] }.with_gain(dc_gain, 0.0, fs));
        }

        let preemph = Biquad { b: [0.0, 1.0, -(-2.0 * PI * EAR_PREEMPH_CORNER_HZ / fs).exp()], a: [0.0, 0.0] }
            .with_gain(1.0, fs / 4.0, fs);
        let top_poles = second_order(top, center_hz[0] / bandwidth(center_hz[0]), fs);
        let top_filter = Biquad { b: [1.0, 0.0, -1.0], a: [top_poles[1], top_poles[2]] }.with_gain(1.0, fs / 4.0, fs);
        Ok(Self { front: [preemph, top_filter], cascade, center_hz })
    }

    pub fn n_channels(&self) -> usize {
        self.cascade.len()
    }
}

fn epsilon_from_tau(tau_s: f64, fs: f64) -> f64 {
    1.0 - (-1.0 / (tau_s * fs)).exp()
}

/// Lyon cochleagram: `channels` rows ordered from high to low centre
/// frequency, one column per `decimation` samples. All outputs are >= 0.
pub fn cochleagram(clip: &AudioClip, cfg: &CochlearConfig) -> Result<DMatrix<f64>> {
    if cfg.decimation == 0 {
        return Err(Error::Config("cochlear decimation must be positive".into()));
    }
    let fs = f64::from(clip.sample_rate);
    let design = LyonDesign::new(fs, cfg.ear_q, cfg.step_factor)?;
    let nch = design.n_channels();
    if nch != cfg.channels {
        return Err(Error::Config(format!(
            "cochlear design yields {nch} channels at {} Hz, configuration requires {}",
            clip.sample_rate, cfg.channels
        )));
    }
    if clip.len() < cfg.decimation {
        return Err(Error::ClipTooShort { clip_id: clip.clip_id.clone(), len: clip.len(), need: cfg.decimation });
    }

    let n_frames = clip.len() / cfg.decimation;
    let agc_eps: Vec<f64> = cfg.agc_taus_s.iter().map(|&t| epsilon_from_tau(t, fs)).collect();
    let dec_eps = epsilon_from_tau(cfg.decimation as f64 / fs * cfg.tau_factor, fs);

    let mut front_state = [[0.0f64; 2]; 2];
    let mut sos_state = vec![[0.0f64; 2]; nch];
    let mut agc_state = vec![[0.0f64; 4]; nch];
    let mut lp_state = vec![[0.0f64; 2]; nch];
    let mut stage = vec![0.0f64; nch];
    let mut scratch = vec![0.0f64; nch];
    let mut out = DMatrix::<f64>::zeros(nch, n_frames);

    let run = |f: &Biquad, s: &mut [f64; 2], x: f64| -> f64 {
        let y = f.b[0] * x + s[0];
        s[0] = f.b[1] * x - f.a[0] * y + s[1];
        s[1] = f.b[2] * x - f.a[1] * y;
        y
    };

    for (n, &x) in clip.samples.iter().take(n_frames * cfg.decimation).enumerate() {
        let mut v = run(&design.front[0], &mut front_state[0], x);
        v = run(&design.front[1], &mut front_state[1], v);
        for (ch, f) in design.cascade.iter().enumerate() {
            v = run(f, &mut sos_state[ch], v);
            stage[ch] = v.max(0.0);
        }

        if cfg.agc {
            for j in 0..4 {
                let eps_over_target = agc_eps[j] / cfg.agc_targets[j];
                let one_minus_eps_third = (1.0 - agc_eps[j]) / 3.0;
                let mut prev = agc_state[0][j];
                for ch in 0..nch {
                    let cur = agc_state[ch][j];
                    let next = if ch + 1 < nch { agc_state[ch + 1][j] } else { cur };
                    let y = (stage[ch] * (1.0 - cur)).abs();
                    stage[ch] = y;
                    let f = (y * eps_over_target + one_minus_eps_third * (prev + cur + next)).min(cfg.agc_state_limit);
                    prev = cur;
                    agc_state[ch][j] = f;
                }
            }
        }

        if cfg.differ {
            scratch[0] = stage[0];
            for ch in 1..nch {
                scratch[ch] = (stage[ch - 1] - stage[ch]).max(0.0);
            }
            stage.copy_from_slice(&scratch);
        }

        for ch in 0..nch {
            let s = &mut lp_state[ch];
            s[0] += dec_eps * (stage[ch] - s[0]);
            s[1] += dec_eps * (s[0] - s[1]);
        }
        if (n + 1) % cfg.decimation == 0 {
            let t = n / cfg.decimation;
            for ch in 0..nch {
                out[(ch, t)] = lp_state[ch][1].max(0.0);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(samples: Vec<f64>, fs: u32) -> AudioClip {
        AudioClip { samples, sample_rate: fs, clip_id: "c".into() }
    }

    fn tone(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.5 * (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    #[test]
    fn ti46_rate_yields_78_channels() {
        let d = LyonDesign::new(12_500.0, 8.0, 0.25).unwrap();
        assert_eq!(d.n_channels(), 78);
        assert!(d.center_hz.windows(2).all(|w| w[0] > w[1]));
        let m = cochleagram(&clip(tone(1000.0, 12_500.0, 3000), 12_500), &CochlearConfig::default()).unwrap();
        assert_eq!(m.nrows(), 78);
        assert_eq!(m.ncols(), 3000 / 64);
        assert!(m.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn other_rates_need_matching_channel_count() {
        let c = clip(tone(500.0, 8000.0, 2000), 8000);
        assert!(matches!(cochleagram(&c, &CochlearConfig::default()), Err(Error::Config(_))));
        let n = LyonDesign::new(8000.0, 8.0, 0.25).unwrap().n_channels();
        let cfg = CochlearConfig { channels: n, ..Default::default() };
        assert_eq!(cochleagram(&c, &cfg).unwrap().nrows(), n);
    }

    #[test]
    fn zero_clip_gives_zero_features() {
        let m = cochleagram(&clip(vec![0.0; 1000], 12_500), &CochlearConfig::default()).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cascade_stage_gain_is_set_at_dc() {
        let d = LyonDesign::new(12_500.0, 8.0, 0.25).unwrap();
        for (i, f) in d.cascade.iter().enumerate().skip(1) {
            let want = d.center_hz[i - 1] / d.center_hz[i];
            assert!((f.response(0.0, 12_500.0) - want).abs() < 1e-9);
        }
    }
}
