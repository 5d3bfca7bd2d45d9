use std::hash::Hasher;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{add_noise, synth_digit, AudioClip, ClipSource, ManifestEntry, NoiseBank, SynthConfig};
use crate::{Error, Result};

/// Reads a mono 8- or 16-bit PCM WAV file, scaling samples to `[-1, 1]`.
/// The file's sample rate is kept as is.
pub fn read_wav(path: &Path, clip_id: &str) -> Result<AudioClip> {
    let unsupported = |msg: String| Error::UnsupportedFormat { path: path.to_path_buf(), msg };
    let reader = WavReader::open(path).map_err(|e| unsupported(e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(unsupported(format!("mono required, file has {} channels", spec.channels)));
    }
    if spec.sample_format != SampleFormat::Int || !(spec.bits_per_sample == 8 || spec.bits_per_sample == 16) {
        return Err(unsupported(format!(
            "PCM 8/16-bit required, got {:?} {}-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let full_scale = f64::from(1u32 << (spec.bits_per_sample - 1));
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / full_scale))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| unsupported(e.to_string()))?;
    if samples.is_empty() {
        return Err(unsupported("no samples".into()));
    }
    AudioClip::new(clip_id, samples, spec.sample_rate)
}

/// Writes a clip as 16-bit mono PCM.
pub fn write_wav(clip: &AudioClip, path: &Path) -> Result<()> {
    let spec =
        WavSpec { channels: 1, sample_rate: clip.sample_rate, bits_per_sample: 16, sample_format: SampleFormat::Int };
    let io = |e: hound::Error| Error::Io(std::io::Error::other(e));
    let mut w = WavWriter::create(path, spec).map_err(io)?;
    for &s in &clip.samples {
        w.write_sample((s * 32767.0).round().clamp(-32768.0, 32767.0) as i16).map_err(io)?;
    }
    w.finalize().map_err(io)
}

/// Loads the samples of one manifest entry. Synthetic recipes are rendered
/// at `synth.sample_rate`.
pub fn read_clip(entry: &ManifestEntry, synth: &SynthConfig) -> Result<AudioClip> {
    match &entry.source {
        ClipSource::File(p) => read_wav(p, &entry.clip_id),
        ClipSource::Synth(r) => {
            let mut clip = synth_digit(r, synth);
            clip.clip_id = entry.clip_id.clone();
            Ok(clip)
        }
    }
}

/// Like [`read_clip`], and additionally corrupts synthetic entries whose
/// label carries a noisy condition. WAV entries are assumed to be recorded
/// in their labelled condition already.
pub fn materialize_clip(
    entry: &ManifestEntry,
    synth: &SynthConfig,
    bank: &NoiseBank,
    noise_seed: u64,
) -> Result<AudioClip> {
    let clip = read_clip(entry, synth)?;
    let cond = entry.label.condition;
    match entry.source {
        ClipSource::Synth(_) if !cond.is_clean() => {
            let mut h = twox_hash::XxHash64::with_seed(noise_seed);
            h.write(entry.clip_id.as_bytes());
            add_noise(&clip, cond.noise_type, cond.snr_db, h.finish(), bank)
        }
        _ => Ok(clip),
    }
}
