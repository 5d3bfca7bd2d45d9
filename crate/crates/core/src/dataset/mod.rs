//! Corpus ingestion, balanced subset partitioning and surrogate synthesis.

mod manifest;
mod noise;
mod partition;
mod synth;
mod wav;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

pub use manifest::{load_manifest, write_manifest};
pub use noise::{add_noise, measured_snr_db, mix_with_noise, NoiseBank, NoisyMix};
pub use partition::{partition_subsets, CorpusProfile, SubsetPartition, N_SUBSETS};
pub use synth::{synth_digit, PhaseMode, SynthConfig, SynthRecipe};
pub use wav::{materialize_clip, read_clip, read_wav, write_wav};

use crate::{Error, Result};

/// Default sample rate of the surrogate corpus, in Hz.
pub const DEFAULT_SAMPLE_RATE: u32 = 12_500;

/// A mono waveform normalized to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub clip_id: String,
}

impl AudioClip {
    pub fn new(clip_id: impl Into<String>, samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let clip_id = clip_id.into();
        if samples.is_empty() {
            return Err(Error::InvalidArgument(format!("clip `{clip_id}` has no samples")));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(format!("clip `{clip_id}` has non-finite samples")));
        }
        Ok(Self { samples, sample_rate, clip_id })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn power(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoiseType {
    Clean,
    Subway,
    Babble,
    Car,
    Exhibition,
    SyntheticWhite,
}

impl NoiseType {
    pub const ALL: [NoiseType; 6] = [
        NoiseType::Clean,
        NoiseType::Subway,
        NoiseType::Babble,
        NoiseType::Car,
        NoiseType::Exhibition,
        NoiseType::SyntheticWhite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseType::Clean => "clean",
            NoiseType::Subway => "subway",
            NoiseType::Babble => "babble",
            NoiseType::Car => "car",
            NoiseType::Exhibition => "exhibition",
            NoiseType::SyntheticWhite => "synthetic-white",
        }
    }
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseType::ALL.into_iter().find(|t| t.as_str() == s.trim()).ok_or_else(|| Error::UnknownNoise(s.to_string()))
    }
}

/// Recording condition. `snr_db` is infinite exactly when the clip is clean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Condition {
    pub noise_type: NoiseType,
    pub snr_db: f64,
}

impl Condition {
    pub const CLEAN: Condition = Condition { noise_type: NoiseType::Clean, snr_db: f64::INFINITY };

    pub fn new(noise_type: NoiseType, snr_db: f64) -> Result<Self> {
        if snr_db.is_nan() {
            return Err(Error::InvalidArgument("snr_db is NaN".into()));
        }
        let clean = noise_type == NoiseType::Clean;
        let infinite = snr_db == f64::INFINITY;
        if clean != infinite {
            return Err(Error::InvalidArgument(format!(
                "snr_db must be infinite iff noise_type is clean (got {noise_type}, {snr_db})"
            )));
        }
        Ok(Self { noise_type, snr_db })
    }

    pub fn is_clean(&self) -> bool {
        self.noise_type == NoiseType::Clean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DigitLabel {
    pub digit: u8,
    pub speaker: String,
    pub utterance: u32,
    pub condition: Condition,
}

impl DigitLabel {
    pub fn new(digit: u8, speaker: impl Into<String>, utterance: u32, condition: Condition) -> Result<Self> {
        if digit as usize >= crate::N_DIGITS {
            return Err(Error::InvalidArgument(format!("digit {digit} out of range 0-9")));
        }
        Ok(Self { digit, speaker: speaker.into(), utterance, condition })
    }
}

/// Where the samples of a manifest entry come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ClipSource {
    File(PathBuf),
    Synth(SynthRecipe),
}

impl fmt::Display for ClipSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClipSource::File(p) => write!(f, "{}", p.display()),
            ClipSource::Synth(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub source: ClipSource,
    pub label: DigitLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub corpus_name: String,
    pub sample_rate: u32,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Builds a manifest, rejecting empty entry lists and duplicate clip ids.
    pub fn new(corpus_name: impl Into<String>, sample_rate: u32, entries: Vec<ManifestEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyManifest);
        }
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.clip_id.as_str()) {
                return Err(Error::DuplicateClip(e.clip_id.clone()));
            }
        }
        Ok(Self { corpus_name: corpus_name.into(), sample_rate, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The default surrogate corpus: every class for every speaker and
    /// utterance seed, all clean.
    pub fn synthetic(profile: CorpusProfile, phase_mode: PhaseMode, synth_seed: u64, sample_rate: u32) -> Self {
        let mut entries = Vec::with_capacity(crate::N_DIGITS * profile.speakers * profile.utterances);
        for speaker in 0..profile.speakers {
            for digit in 0..crate::N_DIGITS {
                for utt in 0..profile.utterances {
                    let recipe = SynthRecipe {
                        class: digit as u8,
                        speaker_seed: synth_seed.wrapping_mul(1_000).wrapping_add(speaker as u64),
                        utterance_seed: synth_seed
                            .wrapping_mul(1_000_000)
                            .wrapping_add((speaker * 1000 + digit * 100 + utt) as u64),
                        phase_mode,
                    };
                    entries.push(ManifestEntry {
                        clip_id: format!("syn_s{speaker}_d{digit}_u{utt}"),
                        source: ClipSource::Synth(recipe),
                        label: DigitLabel {
                            digit: digit as u8,
                            speaker: format!("s{speaker}"),
                            utterance: utt as u32,
                            condition: Condition::CLEAN,
                        },
                    });
                }
            }
        }
        Self { corpus_name: "synthetic".into(), sample_rate, entries }
    }
}

impl Manifest {
    /// Expands every entry into one variant per condition, entry-major.
    /// Clean variants keep the original id; noisy ones get a
    /// `_{noise}_{snr}` suffix. Existing conditions are overwritten.
    pub fn with_conditions(&self, conditions: &[Condition]) -> Result<Self> {
        if conditions.is_empty() {
            return Err(Error::InvalidArgument("no conditions given".into()));
        }
        let mut entries = Vec::with_capacity(self.entries.len() * conditions.len());
        for e in &self.entries {
            for c in conditions {
                let clip_id = if c.is_clean() {
                    e.clip_id.clone()
                } else {
                    format!("{}_{}_{}", e.clip_id, c.noise_type, c.snr_db)
                };
                let mut label = e.label.clone();
                label.condition = *c;
                entries.push(ManifestEntry { clip_id, source: e.source.clone(), label });
            }
        }
        Manifest::new(self.corpus_name.clone(), self.sample_rate, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_variants() {
        let base = Manifest::synthetic(CorpusProfile { speakers: 1, utterances: 2 }, PhaseMode::Random, 1, 8000);
        let conds = [Condition::CLEAN, Condition::new(NoiseType::SyntheticWhite, 10.0).unwrap()];
        let m = base.with_conditions(&conds).unwrap();
        assert_eq!(m.len(), 2 * base.len());
        assert_eq!(m.entries[0].clip_id, base.entries[0].clip_id);
        assert_eq!(m.entries[1].clip_id, format!("{}_synthetic-white_10", base.entries[0].clip_id));
        assert_eq!(m.entries[1].label.condition, conds[1]);
        assert_eq!(m.entries[1].source, base.entries[0].source);
        assert!(base.with_conditions(&[]).is_err());
    }

    #[test]
    fn condition_requires_infinite_snr_iff_clean() {
        assert!(Condition::new(NoiseType::Clean, f64::INFINITY).is_ok());
        assert!(Condition::new(NoiseType::Clean, 20.0).is_err());
        assert!(Condition::new(NoiseType::Babble, f64::INFINITY).is_err());
        assert!(Condition::new(NoiseType::Babble, 10.0).is_ok());
    }

    #[test]
    fn noise_type_parse_roundtrip() {
        for t in NoiseType::ALL {
            assert_eq!(t.as_str().parse::<NoiseType>().unwrap(), t);
        }
        assert!("rain".parse::<NoiseType>().is_err());
    }

    #[test]
    fn synthetic_manifest_has_ti46_shape() {
        let m = Manifest::synthetic(CorpusProfile::TI46, PhaseMode::Random, 1, DEFAULT_SAMPLE_RATE);
        assert_eq!(m.len(), 500);
        assert!(Manifest::new("x", m.sample_rate, m.entries.clone()).is_ok());
    }

    #[test]
    fn digit_label_range() {
        assert!(DigitLabel::new(9, "a", 0, Condition::CLEAN).is_ok());
        assert!(DigitLabel::new(10, "a", 0, Condition::CLEAN).is_err());
    }
}
