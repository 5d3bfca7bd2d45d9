//! Time-frequency front ends.

mod cochlear;
mod mfcc;
mod spectro;
mod stft;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

pub use cochlear::{cochleagram, CochlearConfig, LyonDesign};
pub use mfcc::{mfcc, MfccConfig};
pub use spectro::{exponent_pow, exponent_transform, normalize_maxabs, spectro_hp, split_exponent, Normalized};
pub use stft::{stft_complex, StftConfig, Window};

use crate::dataset::AudioClip;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    /// Real part of the normalized spectrogram.
    SpectroReal,
    /// Normalized real spectrogram raised to a signed real exponent.
    SpectroExp {
        alpha: f64,
    },
    SpectroHp,
    Mfcc,
    Cochlear,
}

impl FilterKind {
    /// Builds a kind from its name; `alpha` is required for `spectro_exp` and
    /// rejected otherwise.
    pub fn parse(name: &str, alpha: Option<f64>) -> Result<Self> {
        let kind = match (name, alpha) {
            ("spectro_exp", Some(a)) => {
                if !a.is_finite() {
                    return Err(Error::InvalidArgument(format!("exponent {a} is not finite")));
                }
                FilterKind::SpectroExp { alpha: a }
            }
            ("spectro_exp", None) => return Err(Error::InvalidArgument("spectro_exp requires an exponent".into())),
            (_, Some(_)) => return Err(Error::InvalidArgument(format!("filter `{name}` takes no exponent"))),
            ("spectro_real", None) => FilterKind::SpectroReal,
            ("spectro_hp", None) => FilterKind::SpectroHp,
            ("mfcc", None) => FilterKind::Mfcc,
            ("cochlear", None) => FilterKind::Cochlear,
            _ => return Err(Error::InvalidArgument(format!("unknown filter `{name}`"))),
        };
        Ok(kind)
    }

    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::SpectroReal => "spectro_real",
            FilterKind::SpectroExp { .. } => "spectro_exp",
            FilterKind::SpectroHp => "spectro_hp",
            FilterKind::Mfcc => "mfcc",
            FilterKind::Cochlear => "cochlear",
        }
    }

    /// Byte tag used in cache headers.
    pub fn code(&self) -> u8 {
        match self {
            FilterKind::SpectroReal => 0,
            FilterKind::SpectroExp { .. } => 1,
            FilterKind::SpectroHp => 2,
            FilterKind::Mfcc => 3,
            FilterKind::Cochlear => 4,
        }
    }

    pub fn from_code(code: u8, alpha: f64) -> Result<Self> {
        Ok(match code {
            0 => FilterKind::SpectroReal,
            1 => FilterKind::SpectroExp { alpha },
            2 => FilterKind::SpectroHp,
            3 => FilterKind::Mfcc,
            4 => FilterKind::Cochlear,
            _ => return Err(Error::InvalidArgument(format!("unknown filter code {code}"))),
        })
    }

    /// Exponent stored alongside the kind: the real exponent for the
    /// spectrogram family, 0 for the others.
    pub fn alpha(&self) -> f64 {
        match self {
            FilterKind::SpectroReal => 1.0,
            FilterKind::SpectroExp { alpha } => *alpha,
            _ => 0.0,
        }
    }

    /// File-name friendly key, e.g. `spectro_exp_a0.2`.
    pub fn key(&self) -> String {
        match self {
            FilterKind::SpectroExp { alpha } => format!("spectro_exp_a{alpha}"),
            other => other.name().to_string(),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterKind::SpectroExp { alpha } => write!(f, "spectro_exp(alpha={alpha})"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    /// Accepts `spectro_exp:<alpha>` in addition to the plain names.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((name, a)) => {
                let alpha = a.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad exponent `{a}`")))?;
                FilterKind::parse(name, Some(alpha))
            }
            None => FilterKind::parse(s, None),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterConfig {
    pub stft: StftConfig,
    pub mfcc: MfccConfig,
    pub cochlear: CochlearConfig,
}

/// `N_f x N_tau` time-frequency representation of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: DMatrix<f64>,
    pub kind: FilterKind,
    pub clip_id: String,
    /// Set when the normalization step saw an all-zero spectrum.
    pub degenerate: bool,
}

impl FeatureMatrix {
    pub fn n_f(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_tau(&self) -> usize {
        self.values.ncols()
    }
}

/// Appends zero columns on the right up to `n_tau_max`.
pub fn pad_to(f: &FeatureMatrix, n_tau_max: usize) -> Result<FeatureMatrix> {
    pad_matrix(&f.values, n_tau_max).map(|values| FeatureMatrix { values, ..f.clone() })
}

pub(crate) fn pad_matrix(m: &DMatrix<f64>, n_cols: usize) -> Result<DMatrix<f64>> {
    if m.ncols() > n_cols {
        return Err(Error::DimensionMismatch(format!("cannot pad {} columns down to {n_cols}", m.ncols())));
    }
    if m.ncols() == n_cols {
        return Ok(m.clone());
    }
    let mut out = DMatrix::zeros(m.nrows(), n_cols);
    out.columns_mut(0, m.ncols()).copy_from(m);
    Ok(out)
}

/// Runs one front end on a clip.
pub fn featurize(clip: &AudioClip, kind: &FilterKind, cfg: &FilterConfig) -> Result<FeatureMatrix> {
    let (values, degenerate) = match *kind {
        FilterKind::SpectroReal => real_spectrogram(clip, 1.0, &cfg.stft)?,
        FilterKind::SpectroExp { alpha } => real_spectrogram(clip, alpha, &cfg.stft)?,
        FilterKind::SpectroHp => (spectro_hp(&stft_complex(clip, &cfg.stft)?)?, false),
        FilterKind::Mfcc => (mfcc(clip, &cfg.mfcc)?, false),
        FilterKind::Cochlear => (cochleagram(clip, &cfg.cochlear)?, false),
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite {kind} features for clip `{}`", clip.clip_id)));
    }
    Ok(FeatureMatrix { values, kind: *kind, clip_id: clip.clip_id.clone(), degenerate })
}

fn real_spectrogram(clip: &AudioClip, alpha: f64, cfg: &StftConfig) -> Result<(DMatrix<f64>, bool)> {
    let z = stft_complex(clip, cfg)?;
    let norm = normalize_maxabs(&z.map(|c| c.re));
    Ok((exponent_transform(&norm.values, alpha)?, norm.degenerate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_digit, PhaseMode, SynthConfig, SynthRecipe};

    fn clip() -> AudioClip {
        synth_digit(
            &SynthRecipe { class: 5, speaker_seed: 3, utterance_seed: 8, phase_mode: PhaseMode::Random },
            &SynthConfig::default(),
        )
    }

    #[test]
    fn pad_examples() {
        let f = FeatureMatrix {
            values: DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            kind: FilterKind::Mfcc,
            clip_id: "p".into(),
            degenerate: false,
        };
        let p = pad_to(&f, 5).unwrap();
        assert_eq!(p.values.shape(), (2, 5));
        assert_eq!(p.values.columns(0, 3), f.values.columns(0, 3));
        assert!(p.values.columns(3, 2).iter().all(|&v| v == 0.0));
        assert_eq!(pad_to(&f, 3).unwrap(), f);
        assert!(pad_to(&f, 2).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!(FilterKind::parse("spectro_exp", Some(0.2)).unwrap(), FilterKind::SpectroExp { alpha: 0.2 });
        assert!(FilterKind::parse("spectro_exp", None).is_err());
        assert!(FilterKind::parse("mfcc", Some(1.0)).is_err());
        assert!(FilterKind::parse("wavelet", None).is_err());
        assert_eq!("spectro_exp:2".parse::<FilterKind>().unwrap(), FilterKind::SpectroExp { alpha: 2.0 });
        assert_eq!("cochlear".parse::<FilterKind>().unwrap(), FilterKind::Cochlear);
        for k in [
            FilterKind::SpectroReal,
            FilterKind::SpectroExp { alpha: 3.5 },
            FilterKind::SpectroHp,
            FilterKind::Mfcc,
            FilterKind::Cochlear,
        ] {
            assert_eq!(FilterKind::from_code(k.code(), k.alpha()).unwrap(), k);
        }
    }

    #[test]
    fn feature_heights() {
        let c = clip();
        let cfg = FilterConfig::default();
        assert_eq!(featurize(&c, &FilterKind::SpectroReal, &cfg).unwrap().n_f(), 65);
        assert_eq!(featurize(&c, &FilterKind::SpectroHp, &cfg).unwrap().n_f(), 65);
        assert_eq!(featurize(&c, &FilterKind::Mfcc, &cfg).unwrap().n_f(), 13);
        assert_eq!(featurize(&c, &FilterKind::Cochlear, &cfg).unwrap().n_f(), 78);
    }

    #[test]
    fn unit_exponent_matches_real_spectrogram() {
        let c = clip();
        let cfg = FilterConfig::default();
        let a = featurize(&c, &FilterKind::SpectroReal, &cfg).unwrap();
        let b = featurize(&c, &FilterKind::SpectroExp { alpha: 1.0 }, &cfg).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn hp_of_silence_is_minus_one() {
        let z = AudioClip { samples: vec![0.0; 1000], sample_rate: 12_500, clip_id: "z".into() };
        let f = featurize(&z, &FilterKind::SpectroHp, &FilterConfig::default()).unwrap();
        assert!(f.values.iter().all(|&v| v == -1.0));
        let r = featurize(&z, &FilterKind::SpectroReal, &FilterConfig::default()).unwrap();
        assert!(r.degenerate);
    }
}
