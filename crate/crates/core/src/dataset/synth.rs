//! License-free surrogate digits.
//!
//! Every class owns a fixed amplitude template over a shared set of spectral
//! lines. Speakers stretch the line frequencies and tilt the template;
//! utterances jitter amplitudes and frequencies and, in random phase mode,
//! draw every line's phase uniformly. Magnitude spectra therefore carry the
//! class while the real part of the spectrum carries an arbitrary phase.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::AudioClip;
use crate::{Error, Result};

/// Line frequencies in Hz, at least 4.5 bins of a 128-point transform apart
/// at 12.5 kHz.
const LINES_HZ: [f64; 8] = [400.0, 850.0, 1300.0, 1800.0, 2400.0, 3000.0, 3700.0, 4500.0];
const TEMPLATE_SEED: u64 = 0x7E3A_11C0_5EED;
const TEMPLATE_MIN: f64 = 0.1;
const SPEAKER_STRETCH: f64 = 0.04;
const SPEAKER_TILT: f64 = 0.2;
const UTTERANCE_AMP_JITTER: f64 = 0.35;
const UTTERANCE_FREQ_JITTER: f64 = 0.01;
const RAMP_S: f64 = 0.05;
const PEAK: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseMode {
    Fixed,
    Random,
}

impl PhaseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseMode::Fixed => "fixed",
            PhaseMode::Random => "random",
        }
    }
}

impl FromStr for PhaseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(PhaseMode::Fixed),
            "random" => Ok(PhaseMode::Random),
            _ => Err(Error::InvalidArgument(format!("phase mode `{s}` (expected fixed|random)"))),
        }
    }
}

/// Parameters of one synthetic digit, encoded in manifests as
/// `synth:<class>:<speaker_seed>:<utterance_seed>:<phase_mode>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SynthRecipe {
    pub class: u8,
    pub speaker_seed: u64,
    pub utterance_seed: u64,
    pub phase_mode: PhaseMode,
}

impl fmt::Display for SynthRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "synth:{}:{}:{}:{}", self.class, self.speaker_seed, self.utterance_seed, self.phase_mode.as_str())
    }
}

impl FromStr for SynthRecipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("malformed synthetic recipe `{s}`"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 5 || parts[0] != "synth" {
            return Err(bad());
        }
        let class: u8 = parts[1].parse().map_err(|_| bad())?;
        if class as usize >= crate::N_DIGITS {
            return Err(Error::InvalidArgument(format!("synthetic class {class} out of range 0-9")));
        }
        Ok(Self {
            class,
            speaker_seed: parts[2].parse().map_err(|_| bad())?,
            utterance_seed: parts[3].parse().map_err(|_| bad())?,
            phase_mode: parts[4].parse()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub duration_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { sample_rate: super::DEFAULT_SAMPLE_RATE, duration_s: 0.5 }
    }
}

/// Amplitude template of a class over [`LINES_HZ`].
pub(crate) fn class_template(class: u8) -> [f64; 8] {
    let mut rng = ChaCha20Rng::seed_from_u64(TEMPLATE_SEED ^ u64::from(class));
    let mut t = [0.0; 8];
    for a in &mut t {
        *a = rng.random_range(TEMPLATE_MIN..=1.0);
    }
    t
}

/// Renders a synthetic digit. Pure function of its arguments.
pub fn synth_digit(recipe: &SynthRecipe, cfg: &SynthConfig) -> AudioClip {
    let fs = f64::from(cfg.sample_rate);
    let n = ((cfg.duration_s * fs).round() as usize).max(1);
    let template = class_template(recipe.class);

    let mut spk = ChaCha20Rng::seed_from_u64(recipe.speaker_seed);
    let stretch = 1.0 + spk.random_range(-SPEAKER_STRETCH..=SPEAKER_STRETCH);
    let tilt: Vec<f64> = (0..LINES_HZ.len()).map(|_| 1.0 + spk.random_range(-SPEAKER_TILT..=SPEAKER_TILT)).collect();

    let mut utt = ChaCha20Rng::seed_from_u64(recipe.utterance_seed);
    let nyquist_guard = 0.45 * fs;
    let partials: Vec<(f64, f64, f64)> = LINES_HZ
        .iter()
        .zip(template.iter().zip(&tilt))
        .map(|(&f, (&a, &k))| {
            let amp = a * k * (1.0 + utt.random_range(-UTTERANCE_AMP_JITTER..=UTTERANCE_AMP_JITTER));
            let freq = (f * stretch * (1.0 + utt.random_range(-UTTERANCE_FREQ_JITTER..=UTTERANCE_FREQ_JITTER)))
                .min(nyquist_guard);
            // The phase draw happens in both modes so the other streams stay aligned.
            let phase = utt.random_range(0.0..2.0 * PI);
            let phase = match recipe.phase_mode {
                PhaseMode::Random => phase,
                PhaseMode::Fixed => 0.0,
            };
            (amp, 2.0 * PI * freq / fs, phase)
        })
        .collect();

    let ramp = ((RAMP_S * fs) as usize).clamp(1, n.div_ceil(2));
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let env = if i < ramp {
                0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos()
            } else if n - 1 - i < ramp {
                0.5 - 0.5 * (PI * (n - 1 - i) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            env * partials.iter().map(|&(a, w, p)| a * (w * i as f64 + p).cos()).sum::<f64>()
        })
        .collect();

    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        for s in &mut samples {
            *s *= PEAK / peak;
        }
    }
    AudioClip { samples, sample_rate: cfg.sample_rate, clip_id: recipe.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recipe(class: u8, mode: PhaseMode) -> SynthRecipe {
        SynthRecipe { class, speaker_seed: 11, utterance_seed: 42, phase_mode: mode }
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::default();
        let a = synth_digit(&recipe(4, PhaseMode::Random), &cfg);
        let b = synth_digit(&recipe(4, PhaseMode::Random), &cfg);
        assert_eq!(a, b);
        assert_eq!(a.len(), 6250);
        assert!(a.peak() <= 1.0);
    }

    #[test]
    fn class_templates_are_distinct() {
        let t3 = class_template(3);
        let t7 = class_template(7);
        assert!(t3.iter().zip(&t7).any(|(a, b)| (a - b).abs() > 0.1));
        for c in 0..10u8 {
            for d in (c + 1)..10 {
                assert_ne!(class_template(c), class_template(d));
            }
        }
    }

    #[test]
    fn recipe_string_roundtrip() {
        let r =
            SynthRecipe { class: 9, speaker_seed: 123, utterance_seed: 9_876_543_210, phase_mode: PhaseMode::Fixed };
        assert_eq!(r.to_string(), "synth:9:123:9876543210:fixed");
        assert_eq!(r.to_string().parse::<SynthRecipe>().unwrap(), r);
        assert!("synth:10:1:1:fixed".parse::<SynthRecipe>().is_err());
        assert!("synth:1:1:fixed".parse::<SynthRecipe>().is_err());
    }
}
