use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use resonet_cli::commands::{
    cache_root, cmd_bench, cmd_export_features, cmd_featurize, cmd_sweep, cmd_synth_corpus, load_dataset,
};
use resonet_cli::{exit_code, RawConfig, RunConfig};
use resonet_core::container::{checksum, peek_features};
use resonet_core::dataset::load_manifest;
use resonet_core::evalharness::chance_band;
use resonet_core::Error;

fn config(out: &Path, extra: &str) -> RunConfig {
    let text = format!("output.dir = {}\n{extra}", out.display());
    RunConfig::from_raw(RawConfig::parse(&text, Path::new(".")).unwrap()).unwrap()
}

fn cache_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(cache_files(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn featurize_is_idempotent_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let first = cmd_featurize(&cfg).unwrap();
    assert_eq!((first.written, first.reused), (500, 0));
    let files = cache_files(&cache_root(&cfg));
    assert_eq!(files.len(), 500);
    let (_, n_f, _) = peek_features(&files[0], None).unwrap();
    assert_eq!(n_f, 65);
    let mtime = fs::metadata(&files[0]).unwrap().modified().unwrap();

    let again = cmd_featurize(&cfg).unwrap();
    assert_eq!((again.written, again.reused), (0, 500));
    assert_eq!(fs::metadata(&files[0]).unwrap().modified().unwrap(), mtime);

    let mut bytes = fs::read(&files[3]).unwrap();
    bytes[40] ^= 0xff;
    fs::write(&files[3], &bytes).unwrap();
    match cmd_featurize(&cfg) {
        Err(Error::Checksum(p)) => assert_eq!(p, files[3]),
        other => panic!("expected checksum error, got {other:?}"),
    }
}

#[test]
fn version_and_hash_mismatches_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    cmd_featurize(&cfg).unwrap();
    let files = cache_files(&cache_root(&cfg));

    let mut bytes = fs::read(&files[0]).unwrap();
    bytes[4..6].copy_from_slice(&2u16.to_le_bytes());
    let body = bytes.len() - 8;
    let sum = checksum(&bytes[..body]);
    bytes[body..].copy_from_slice(&sum.to_le_bytes());
    fs::write(&files[0], &bytes).unwrap();
    let err = cmd_featurize(&cfg).unwrap_err();
    assert!(matches!(err, Error::Cache { .. }));
    assert!(err.to_string().contains("regenerate"), "{err}");
    assert_eq!(exit_code(&err), 3);

    // A file from another configuration placed into this cache.
    let other = config(dir.path(), "seeds.noise = 5");
    let mut bytes = fs::read(&files[1]).unwrap();
    let at = bytes.len() - 16;
    bytes[at..at + 8].copy_from_slice(&other.feature_hash(&other.filter).to_le_bytes());
    let body = bytes.len() - 8;
    let sum = checksum(&bytes[..body]);
    bytes[body..].copy_from_slice(&sum.to_le_bytes());
    fs::write(&files[0], fs::read(&files[2]).unwrap()).unwrap();
    fs::write(&files[1], &bytes).unwrap();
    assert!(matches!(cmd_featurize(&cfg), Err(Error::Cache { .. })));
}

#[test]
fn bench_without_node_omits_gain() {
    let dir = tempfile::tempdir().unwrap();
    let out = cmd_bench(&config(dir.path(), "filter.kind = mfcc")).unwrap();
    assert!(out.total.is_none() && out.gain.is_none());
    assert!(!dir.path().join("total_folds.csv").exists());
    let report = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(!report.contains("Reservoir gain"));
    assert!(report.contains("mfcc (filter only)"));
    let csv = fs::read_to_string(dir.path().join("baseline_folds.csv")).unwrap();
    let hash = config(dir.path(), "filter.kind = mfcc").hash();
    assert_eq!(csv.lines().next().unwrap(), format!("# config_hash={hash:016x}"));
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn sweep_consistency_and_parity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "filter.kind = spectro_exp\nfilter.alpha = 1");
    let bench = cmd_bench(&cfg).unwrap().baseline.unwrap();
    let one = cmd_sweep(&cfg, Some(&[1.0])).unwrap();
    assert_eq!(one.points.len(), 1);
    assert_eq!(one.points[0].wsr, bench.test.wsr);

    let zero = cmd_sweep(&cfg, Some(&[0.0])).unwrap();
    let (centre, band) = chance_band(10, 500);
    assert!((zero.points[0].wsr - centre).abs() <= band, "{}", zero.points[0].wsr);

    cmd_sweep(&cfg, Some(&[1001.0])).unwrap();
    let parity = fs::read_to_string(dir.path().join("parity.csv")).unwrap();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(parity.as_bytes());
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let (plus, minus): (usize, usize) = (rec[2].parse().unwrap(), rec[3].parse().unwrap());
        let (suppressed, bound): (f64, f64) = (rec[5].parse().unwrap(), rec[6].parse().unwrap());
        assert!(plus + minus >= 1, "{rec:?}");
        assert!(suppressed <= bound, "{rec:?}");
        rows += 1;
    }
    assert_eq!(rows, 500);
}

#[test]
fn export_rows_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let (path, rows) = cmd_export_features(&cfg).unwrap();
    // 0.5 s at 12.5 kHz with 128-sample frames and hop 64: 1 + (6250 - 128) / 64 frames.
    assert_eq!(rows, 500 * 96);
    let first = fs::read(&path).unwrap();
    let data = load_dataset(&cfg).unwrap();
    let digits: std::collections::HashMap<String, u8> =
        data.manifest.entries.iter().map(|e| (e.clip_id.clone(), e.label.digit)).collect();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(first.as_slice());
    assert_eq!(reader.headers().unwrap().len(), 8 + 65);
    for rec in reader.records() {
        let rec = rec.unwrap();
        assert_eq!(rec[1].parse::<u8>().unwrap(), digits[&rec[0]]);
    }
    let (path2, _) = cmd_export_features(&cfg).unwrap();
    assert_eq!(fs::read(path2).unwrap(), first);
}

#[test]
fn synth_corpus_round_trips_through_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = cmd_synth_corpus(&config(dir.path(), "")).unwrap();
    let m = load_manifest(&manifest, 12_500).unwrap();
    assert_eq!(m.len(), 500);
    let text = format!(
        "corpus.kind = manifest\ncorpus.manifest = {}\nfilter.kind = spectro_exp\nfilter.alpha = 2",
        manifest.display()
    );
    let mut raw = RawConfig::parse(&text, Path::new(".")).unwrap();
    raw.set("output.dir", &dir.path().join("bench").display().to_string()).unwrap();
    let wsr = cmd_bench(&RunConfig::from_raw(raw).unwrap()).unwrap().baseline.unwrap().test.wsr;
    assert!(wsr > 60.0, "{wsr}");
}

#[test]
fn stratified_white_noise_degrades_gracefully() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "filter.kind = spectro_exp\nfilter.alpha = 2\nbench.mode = stratified\nbench.test_snrs = inf, 20, 10\nbench.test_noises = synthetic-white",
    );
    let r = cmd_bench(&cfg).unwrap().conditions.unwrap();
    let col: Vec<f64> = r.cells.iter().map(|row| row[0].wsr).collect();
    assert!(col[0] >= col[1] && col[1] >= col[2], "{col:?}");
    assert!(r.margins_consistent());
    assert!(dir.path().join("conditions.csv").exists());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_resonet"))
}

#[test]
fn invalid_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "filter.kind = spectro_real\nreservoir.n_thta = 400\n").unwrap();
    let out = dir.path().join("out");
    let status = bin().args(["bench", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&status.stderr).contains("n_thta"));
    assert!(!out.exists());

    let status = bin().args(["featurize", "--seed-override", "bogus"]).arg("--out").arg(&out).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn cache_root_follows_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("elsewhere");
    let status = bin()
        .args(["featurize", "--workers", "2", "--seed-override", "filter.kind=mfcc", "--out"])
        .arg(dir.path().join("out"))
        .env("RESONET_CACHE_DIR", &cache)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(String::from_utf8_lossy(&status.stdout).contains("500 written"));
    assert_eq!(cache_files(&cache).len(), 500);
    assert!(!dir.path().join("out").join("cache").exists());
}
