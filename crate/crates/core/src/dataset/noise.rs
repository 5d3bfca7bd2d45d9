use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use super::{AudioClip, NoiseType};
use crate::{Error, Result};

/// Noise sources available to [`add_noise`]. White Gaussian noise is built
/// in; every other noise type needs a user-supplied bed, which is looped
/// from a random offset.
#[derive(Debug, Clone, Default)]
pub struct NoiseBank {
    beds: HashMap<NoiseType, Vec<f64>>,
}

impl NoiseBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_bed(&mut self, noise_type: NoiseType, samples: Vec<f64>) -> Result<()> {
        if noise_type == NoiseType::Clean || noise_type == NoiseType::SyntheticWhite {
            return Err(Error::InvalidArgument(format!("`{noise_type}` cannot take a noise bed")));
        }
        if samples.is_empty() || samples.iter().all(|&s| s == 0.0) {
            return Err(Error::InvalidArgument(format!("noise bed for `{noise_type}` is silent")));
        }
        self.beds.insert(noise_type, samples);
        Ok(())
    }

    fn realize(&self, noise_type: NoiseType, len: usize, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        match noise_type {
            NoiseType::SyntheticWhite => Ok((0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()),
            NoiseType::Clean => Err(Error::InvalidArgument("clean condition with finite SNR".into())),
            other => {
                let bed = self.beds.get(&other).ok_or_else(|| Error::UnknownNoise(other.to_string()))?;
                let offset = rng.random_range(0..bed.len());
                Ok((0..len).map(|i| bed[(offset + i) % bed.len()]).collect())
            }
        }
    }
}

/// Output of [`mix_with_noise`]: `clip = signal_gain * (input + noise)`.
#[derive(Debug, Clone)]
pub struct NoisyMix {
    pub clip: AudioClip,
    pub signal_gain: f64,
}

/// Adds noise at an exact power ratio, then rescales so the peak is at most 1.
/// The rescaling applies to signal and noise alike and therefore keeps the
/// ratio.
pub fn mix_with_noise(
    clip: &AudioClip,
    noise_type: NoiseType,
    snr_db: f64,
    seed: u64,
    bank: &NoiseBank,
) -> Result<NoisyMix> {
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("snr_db is NaN".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(NoisyMix { clip: clip.clone(), signal_gain: 1.0 });
    }
    let noise = bank.realize(noise_type, clip.len(), seed)?;
    let p_sig = clip.power();
    let p_noise = noise.iter().map(|n| n * n).sum::<f64>() / noise.len() as f64;
    let scale = if p_sig > 0.0 && p_noise > 0.0 { (p_sig / p_noise / 10f64.powf(snr_db / 10.0)).sqrt() } else { 0.0 };

    let mut samples: Vec<f64> = clip.samples.iter().zip(&noise).map(|(s, n)| s + scale * n).collect();
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let gain = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if gain != 1.0 {
        samples.iter_mut().for_each(|s| *s *= gain);
    }
    Ok(NoisyMix {
        clip: AudioClip { samples, sample_rate: clip.sample_rate, clip_id: clip.clip_id.clone() },
        signal_gain: gain,
    })
}

/// Additive-noise corruption; see [`mix_with_noise`].
pub fn add_noise(
    clip: &AudioClip,
    noise_type: NoiseType,
    snr_db: f64,
    seed: u64,
    bank: &NoiseBank,
) -> Result<AudioClip> {
    mix_with_noise(clip, noise_type, snr_db, seed, bank).map(|m| m.clip)
}

/// `10 log10(P_signal / P_noise)` on sample sequences.
pub fn measured_snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    let p = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    10.0 * (p(signal) / p(noise)).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_digit, PhaseMode, SynthConfig, SynthRecipe};

    fn clip() -> AudioClip {
        let r = SynthRecipe { class: 2, speaker_seed: 1, utterance_seed: 2, phase_mode: PhaseMode::Random };
        synth_digit(&r, &SynthConfig::default())
    }

    fn measure(input: &AudioClip, mix: &NoisyMix) -> f64 {
        let sig: Vec<f64> = input.samples.iter().map(|s| s * mix.signal_gain).collect();
        let noise: Vec<f64> = mix.clip.samples.iter().zip(&sig).map(|(o, s)| o - s).collect();
        measured_snr_db(&sig, &noise)
    }

    #[test]
    fn infinite_snr_is_identity() {
        let c = clip();
        let out = add_noise(&c, NoiseType::SyntheticWhite, f64::INFINITY, 5, &NoiseBank::new()).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn zero_db_white_noise() {
        let c = clip();
        let mix = mix_with_noise(&c, NoiseType::SyntheticWhite, 0.0, 9, &NoiseBank::new()).unwrap();
        let snr = measure(&c, &mix);
        assert!((-0.1..=0.1).contains(&snr), "{snr}");
        assert!(mix.clip.peak() <= 1.0);
        assert_eq!(mix.clip.len(), c.len());
        assert_eq!(mix.clip.sample_rate, c.sample_rate);
    }

    #[test]
    fn twenty_db_two_seeds() {
        let c = clip();
        let bank = NoiseBank::new();
        let a = mix_with_noise(&c, NoiseType::SyntheticWhite, 20.0, 1, &bank).unwrap();
        let b = mix_with_noise(&c, NoiseType::SyntheticWhite, 20.0, 2, &bank).unwrap();
        assert_ne!(a.clip.samples, b.clip.samples);
        for m in [&a, &b] {
            assert!((measure(&c, m) - 20.0).abs() <= 0.1);
        }
    }

    #[test]
    fn beds_loop_and_unknown_types_fail() {
        let c = clip();
        let mut bank = NoiseBank::new();
        assert!(matches!(add_noise(&c, NoiseType::Babble, 10.0, 0, &bank), Err(Error::UnknownNoise(_))));
        bank.insert_bed(NoiseType::Babble, (0..97).map(|i| ((i * 31 % 17) as f64 - 8.0) / 8.0).collect()).unwrap();
        let mix = mix_with_noise(&c, NoiseType::Babble, 10.0, 3, &bank).unwrap();
        assert!((measure(&c, &mix) - 10.0).abs() <= 0.1);
        assert!(add_noise(&c, NoiseType::Clean, 10.0, 0, &bank).is_err());
    }
}
