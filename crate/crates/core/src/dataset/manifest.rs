use std::path::{Path, PathBuf};

use super::{ClipSource, Condition, DigitLabel, Manifest, ManifestEntry, NoiseType, SynthRecipe};
use crate::{Error, Result};

pub(crate) const HEADER: [&str; 7] = ["clip_id", "path", "digit", "speaker", "utterance", "noise_type", "snr_db"];

/// Reads a manifest CSV.
///
/// Relative paths are resolved against the manifest's directory. The sample
/// rate is taken from the first WAV entry; all WAV entries must share it.
/// Manifests made only of synthetic recipes use `synth_rate`.
pub fn load_manifest(path: &Path, synth_rate: u32) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    if text.trim().is_empty() {
        return Err(Error::EmptyManifest);
    }
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());

    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::ManifestRow {
            row: 1,
            msg: format!("expected header `{}`, got `{}`", HEADER.join(","), header.join(",")),
        });
    }

    let mut entries = Vec::new();
    let mut sample_rate: Option<u32> = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::ManifestRow { row, msg: e.to_string() })?;
        let bad = |msg: String| Error::ManifestRow { row, msg };
        if record.len() != HEADER.len() {
            return Err(bad(format!("expected {} columns, got {}", HEADER.len(), record.len())));
        }
        let clip_id = record[0].to_string();
        if clip_id.is_empty() {
            return Err(bad("empty clip_id".into()));
        }
        let source = parse_source(&record[1], &base).map_err(|e| bad(e.to_string()))?;
        if let ClipSource::File(p) = &source {
            if !p.is_file() {
                return Err(bad(format!("missing audio file {}", p.display())));
            }
            let spec = hound::WavReader::open(p).map_err(|e| bad(format!("{}: {e}", p.display())))?.spec();
            match sample_rate {
                None => sample_rate = Some(spec.sample_rate),
                Some(r) if r != spec.sample_rate => {
                    return Err(bad(format!("sample rate {} differs from corpus rate {r}", spec.sample_rate)))
                }
                _ => {}
            }
        }
        let digit: u8 = record[2].parse().map_err(|_| bad(format!("malformed digit `{}`", &record[2])))?;
        let utterance: u32 = record[4].parse().map_err(|_| bad(format!("malformed utterance `{}`", &record[4])))?;
        let noise_type: NoiseType = record[5].parse().map_err(|e: Error| bad(e.to_string()))?;
        let snr_db = parse_snr(&record[6]).ok_or_else(|| bad(format!("malformed snr_db `{}`", &record[6])))?;
        let condition = Condition::new(noise_type, snr_db).map_err(|e| bad(e.to_string()))?;
        let label = DigitLabel::new(digit, &record[3], utterance, condition).map_err(|e| bad(e.to_string()))?;
        entries.push(ManifestEntry { clip_id, source, label });
    }

    let corpus_name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Manifest::new(corpus_name, sample_rate.unwrap_or(synth_rate), entries)
}

/// Writes a manifest in the format read by [`load_manifest`]. File paths are
/// written as given.
pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for e in &manifest.entries {
        let snr = format_snr(e.label.condition.snr_db);
        w.write_record([
            e.clip_id.as_str(),
            &e.source.to_string(),
            &e.label.digit.to_string(),
            &e.label.speaker,
            &e.label.utterance.to_string(),
            e.label.condition.noise_type.as_str(),
            &snr,
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_source(field: &str, base: &Path) -> Result<ClipSource> {
    if field.starts_with("synth:") {
        return Ok(ClipSource::Synth(field.parse::<SynthRecipe>()?));
    }
    if field.is_empty() {
        return Err(Error::InvalidArgument("empty path".into()));
    }
    let p = PathBuf::from(field);
    Ok(ClipSource::File(if p.is_absolute() { p } else { base.join(p) }))
}

pub(crate) fn parse_snr(s: &str) -> Option<f64> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" | "clean" => Some(f64::INFINITY),
        other => other.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}

pub(crate) fn format_snr(snr: f64) -> String {
    if snr == f64::INFINITY {
        "inf".into()
    } else {
        format!("{snr}")
    }
}
