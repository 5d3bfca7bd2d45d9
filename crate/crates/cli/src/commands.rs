use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use resonet_core::container::{read_features, read_states, write_features, write_model, write_states};
use resonet_core::dataset::{
    load_manifest, materialize_clip, partition_subsets, write_manifest, write_wav, ClipSource, DigitLabel, Manifest,
    ManifestEntry, NoiseBank,
};
use resonet_core::evalharness::{
    compute_gain, condition_csv, condition_markdown, cross_validate, cv_csv, cv_markdown, gain_markdown, pad_all,
    parity_csv, parity_diagnostic, run_reservoir, select_by_counts, stratified_report, sweep_csv, ConditionReport,
    CrossValReport, EvalSet, Evaluator, GainReport, ReservoirSpec, SweepPoint,
};
use resonet_core::filterbank::{featurize, FeatureMatrix, FilterConfig, FilterKind};
use resonet_core::reservoir::NeuronStates;
use resonet_core::{Error, Result};

use crate::config::{BenchMode, CorpusSource, RunConfig};

pub const CACHE_ENV: &str = "RESONET_CACHE_DIR";

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Numerical(_) => 4,
        _ => 3,
    }
}

pub fn cache_root(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => cfg.output_dir.join("cache"),
    }
}

fn file_stem(clip_id: &str) -> String {
    clip_id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

fn hash_line(hash: u64) -> String {
    format!("# config_hash={hash:016x}\n")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Manifest entries with subset tags and, in stratified mode, the
/// training and test pools.
pub struct Dataset {
    pub manifest: Manifest,
    pub subsets: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn digits(&self) -> Vec<u8> {
        self.manifest.entries.iter().map(|e| e.label.digit).collect()
    }

    pub fn labels(&self) -> Vec<DigitLabel> {
        self.manifest.entries.iter().map(|e| e.label.clone()).collect()
    }

    pub fn eval_set(&self, blocks: Vec<DMatrix<f64>>) -> Result<EvalSet> {
        EvalSet::new(
            blocks,
            self.digits(),
            self.manifest.entries.iter().map(|e| e.clip_id.clone()).collect(),
            self.subsets.clone(),
        )
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let stratified = cfg.bench.mode == BenchMode::Stratified;
    match &cfg.corpus {
        CorpusSource::Synthetic { phase_mode, synth } => {
            let base = Manifest::synthetic(cfg.profile, *phase_mode, cfg.seeds.synth, synth.sample_rate);
            let tags = partition_subsets(&base, cfg.seeds.partition, cfg.profile)?.assignment(base.len());
            let conds = cfg.synthetic_conditions();
            let manifest = base.with_conditions(&conds)?;
            let subsets: Vec<usize> = tags.iter().flat_map(|&t| std::iter::repeat_n(t, conds.len())).collect();
            let (mut train, mut test) = (Vec::new(), Vec::new());
            if stratified {
                for (i, e) in manifest.entries.iter().enumerate() {
                    if subsets[i] < cfg.bench.n {
                        if cfg.bench.train_conditions.contains(&e.label.condition) {
                            train.push(i);
                        }
                    } else {
                        test.push(i);
                    }
                }
            }
            Ok(Dataset { manifest, subsets, train, test })
        }
        CorpusSource::Manifest { path, test_path } => {
            let rate = cfg.synth_config().sample_rate;
            let manifest = load_manifest(path, rate)?;
            if !stratified {
                let subsets =
                    partition_subsets(&manifest, cfg.seeds.partition, cfg.profile)?.assignment(manifest.len());
                return Ok(Dataset { manifest, subsets, train: Vec::new(), test: Vec::new() });
            }
            let test_m = load_manifest(test_path.as_ref().expect("validated"), rate)?;
            if test_m.sample_rate != manifest.sample_rate {
                return Err(Error::InvalidArgument("train and test manifests differ in sample rate".into()));
            }
            let n_train = manifest.len();
            let mut entries = manifest.entries;
            entries.extend(test_m.entries);
            let combined = Manifest::new(manifest.corpus_name, manifest.sample_rate, entries)?;
            let labels: Vec<DigitLabel> = combined.entries.iter().map(|e| e.label.clone()).collect();
            let candidates: Vec<usize> =
                (0..n_train).filter(|&i| cfg.bench.train_conditions.contains(&labels[i].condition)).collect();
            let train = if cfg.bench.train_counts.is_empty() {
                candidates
            } else {
                select_by_counts(&labels, &candidates, &cfg.bench.train_counts)?
            };
            let test = (n_train..combined.len()).collect();
            let subsets = vec![0; combined.len()];
            Ok(Dataset { manifest: combined, subsets, train, test })
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub written: usize,
    pub reused: usize,
}

fn feature_dir(cfg: &RunConfig, kind: &FilterKind) -> PathBuf {
    cache_root(cfg).join("features").join(format!("{:016x}", cfg.corpus_hash())).join(kind.key())
}

/// Loads or computes the features of every clip, unpadded.
pub fn ensure_features(cfg: &RunConfig, data: &Dataset, kind: &FilterKind) -> Result<(Vec<FeatureMatrix>, CacheStats)> {
    let dir = feature_dir(cfg, kind);
    fs::create_dir_all(&dir)?;
    let hash = cfg.feature_hash(kind);
    let synth = cfg.synth_config();
    let bank = NoiseBank::new();
    let fcfg = FilterConfig::default();
    let results = data
        .manifest
        .entries
        .par_iter()
        .map(|e| {
            let path = dir.join(format!("{}.rnbf", file_stem(&e.clip_id)));
            if path.exists() {
                return Ok((read_features(&path, &e.clip_id, Some(hash))?, false));
            }
            let clip = materialize_clip(e, &synth, &bank, cfg.seeds.noise)?;
            let f = featurize(&clip, kind, &fcfg)?;
            write_features(&path, &f, hash)?;
            Ok((f, true))
        })
        .collect::<Result<Vec<_>>>()?;
    let written = results.iter().filter(|(_, w)| *w).count();
    let stats = CacheStats { written, reused: results.len() - written };
    Ok((results.into_iter().map(|(f, _)| f).collect(), stats))
}

fn reservoir_spec(cfg: &RunConfig) -> Option<ReservoirSpec> {
    cfg.node.as_ref().map(|n| ReservoirSpec {
        n_theta: cfg.n_theta,
        mask_seed: cfg.seeds.mask,
        node: n.kind,
        input_gain: n.input_gain,
    })
}

/// Loads or computes neuron states for padded features.
pub fn ensure_states(
    cfg: &RunConfig,
    kind: &FilterKind,
    features: &[FeatureMatrix],
) -> Result<(Vec<NeuronStates>, CacheStats)> {
    let spec = reservoir_spec(cfg).ok_or_else(|| Error::Config("no node configured".into()))?;
    let dir = cache_root(cfg).join("states").join(format!("{:016x}", cfg.states_hash(kind)));
    let hash = cfg.states_hash(kind);
    let paths: Vec<PathBuf> = features.iter().map(|f| dir.join(format!("{}.rnbs", file_stem(&f.clip_id)))).collect();
    if paths.iter().all(|p| p.exists()) {
        let states = paths
            .par_iter()
            .zip(features)
            .map(|(p, f)| read_states(p, &f.clip_id, Some(hash)).map(|(_, s)| s))
            .collect::<Result<Vec<_>>>()?;
        if states.iter().zip(features).all(|(s, f)| s.n_tau() == f.n_tau()) {
            let reused = states.len();
            return Ok((states, CacheStats { written: 0, reused }));
        }
    }
    let (res, states) = run_reservoir(features, &spec)?;
    fs::create_dir_all(&dir)?;
    paths.par_iter().zip(&states).try_for_each(|(p, s)| write_states(p, &res.node, s, hash))?;
    let written = states.len();
    Ok((states, CacheStats { written, reused: 0 }))
}

pub fn cmd_featurize(cfg: &RunConfig) -> Result<CacheStats> {
    let data = load_dataset(cfg)?;
    let (_, stats) = ensure_features(cfg, &data, &cfg.filter)?;
    Ok(stats)
}

fn padded_features(cfg: &RunConfig, data: &Dataset, kind: &FilterKind) -> Result<Vec<FeatureMatrix>> {
    pad_all(ensure_features(cfg, data, kind)?.0)
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub baseline: Option<CrossValReport>,
    pub total: Option<CrossValReport>,
    pub gain: Option<GainReport>,
    pub conditions: Option<ConditionReport>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchOutcome> {
    let data = load_dataset(cfg)?;
    let features = padded_features(cfg, &data, &cfg.filter)?;
    let base_set = data.eval_set(features.iter().map(|f| f.values.clone()).collect())?;
    let states_set = match cfg.node {
        Some(_) => {
            let (states, _) = ensure_states(cfg, &cfg.filter, &features)?;
            Some(data.eval_set(states.into_iter().map(|s| s.values).collect())?)
        }
        None => None,
    };
    let hash = cfg.hash();
    let out = &cfg.output_dir;
    let mut files = Vec::new();
    let mut md = format!("# resonet bench\n\nconfig hash: `{hash:016x}`\n\npipeline: {}\n\n", cfg.describe());
    let label = cfg.filter.key();

    if cfg.bench.mode == BenchMode::Stratified {
        let labels = data.labels();
        let report = match &states_set {
            Some(s) => stratified_report(
                s,
                Some(&base_set),
                &labels,
                &data.train,
                &data.test,
                &cfg.bench.test_snrs,
                &cfg.bench.test_noises,
                &cfg.readout,
            )?,
            None => stratified_report(
                &base_set,
                None,
                &labels,
                &data.train,
                &data.test,
                &cfg.bench.test_snrs,
                &cfg.bench.test_noises,
                &cfg.readout,
            )?,
        };
        let title = format!("Word success rate (%) by condition, {label}, {} training clips", data.train.len());
        md.push_str(&condition_markdown(&title, &report));
        let csv_path = out.join("conditions.csv");
        write_text(&csv_path, &(hash_line(hash) + &condition_csv(&report)?))?;
        files.push(csv_path);
        let md_path = out.join("report.md");
        write_text(&md_path, &md)?;
        files.push(md_path);
        return Ok(BenchOutcome { baseline: None, total: None, gain: None, conditions: Some(report), files });
    }

    let n = cfg.bench.n;
    let base_eval = Evaluator::new(&base_set, cfg.readout)?.with_tags(0, cfg.filter);
    let baseline = cross_validate(n, &base_eval, &format!("{label} filter only"))?;
    let p = out.join("baseline_folds.csv");
    write_text(&p, &(hash_line(hash) + &cv_csv(&baseline)?))?;
    files.push(p);

    let (total, gain) = match &states_set {
        Some(s) => {
            let code = cfg.node.as_ref().map(|n| n.kind.code()).unwrap_or(0);
            let eval = Evaluator::new(s, cfg.readout)?.with_tags(code, cfg.filter);
            let total = cross_validate(n, &eval, &format!("{label} + {}", cfg.describe()))?;
            let p = out.join("total_folds.csv");
            write_text(&p, &(hash_line(hash) + &cv_csv(&total)?))?;
            files.push(p);
            if cfg.bench.save_models {
                files.extend(save_models(cfg, &eval, &total)?);
            }
            let gain = compute_gain(&total, &baseline)?;
            (Some(total), Some(gain))
        }
        None => {
            if cfg.bench.save_models {
                files.extend(save_models(cfg, &base_eval, &baseline)?);
            }
            (None, None)
        }
    };

    let mut rows: Vec<(String, &CrossValReport)> = vec![(format!("{label} (filter only)"), &baseline)];
    if let Some(t) = &total {
        rows.push((format!("{label} + {}", cfg.node.as_ref().expect("node").kind.name()), t));
    }
    let rows_ref: Vec<(&str, &CrossValReport)> = rows.iter().map(|(l, r)| (l.as_str(), *r)).collect();
    md.push_str(&cv_markdown(&format!("Cross-validated scores, N = {n}, {} folds", baseline.folds.len()), &rows_ref));
    if let Some(g) = &gain {
        md.push('\n');
        md.push_str(&gain_markdown(&[(label.as_str(), g)]));
    }
    let md_path = out.join("report.md");
    write_text(&md_path, &md)?;
    files.push(md_path);
    Ok(BenchOutcome { baseline: Some(baseline), total, gain, conditions: None, files })
}

fn save_models(cfg: &RunConfig, eval: &Evaluator, report: &CrossValReport) -> Result<Vec<PathBuf>> {
    let dir = cfg.output_dir.join("models");
    report
        .folds
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.join(format!("fold_{i:03}.rnbm"));
            write_model(&path, &eval.train(&f.fold)?, cfg.hash())?;
            Ok(path)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub files: Vec<PathBuf>,
}

pub fn cmd_sweep(cfg: &RunConfig, alphas: Option<&[f64]>) -> Result<SweepOutcome> {
    let alphas = alphas.unwrap_or(&cfg.sweep_alphas);
    if let Some(a) = alphas.iter().find(|a| !a.is_finite()) {
        return Err(Error::Config(format!("alpha {a} is not finite")));
    }
    let data = load_dataset(cfg)?;
    let n = cfg.bench.n;
    let mut points = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let kind = FilterKind::SpectroExp { alpha };
        let features = padded_features(cfg, &data, &kind)?;
        let set = if cfg.sweep_reservoir {
            let (states, _) = ensure_states(cfg, &kind, &features)?;
            data.eval_set(states.into_iter().map(|s| s.values).collect())?
        } else {
            data.eval_set(features.into_iter().map(|f| f.values).collect())?
        };
        let r = cross_validate(n, &Evaluator::new(&set, cfg.readout)?, &kind.key())?;
        points.push(SweepPoint { alpha, wsr: r.test.wsr, wsr_std: r.test.wsr_std });
    }
    let normalized = padded_features(cfg, &data, &FilterKind::SpectroReal)?;
    let mut parity = Vec::new();
    for &alpha in alphas {
        parity.extend(parity_diagnostic(&normalized, alpha)?);
    }
    let hash = cfg.hash();
    let sweep_path = cfg.output_dir.join("sweep.csv");
    write_text(&sweep_path, &(hash_line(hash) + &sweep_csv(&points)?))?;
    let parity_path = cfg.output_dir.join("parity.csv");
    write_text(&parity_path, &(hash_line(hash) + &parity_csv(&parity)?))?;
    Ok(SweepOutcome { points, files: vec![sweep_path, parity_path] })
}

/// One row per (clip, frame) of the configured filter, padded features.
pub fn cmd_export_features(cfg: &RunConfig) -> Result<(PathBuf, usize)> {
    let data = load_dataset(cfg)?;
    let features = padded_features(cfg, &data, &cfg.filter)?;
    let n_f = features.first().map(FeatureMatrix::n_f).unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["clip_id", "digit", "speaker", "utterance", "noise_type", "snr_db", "subset", "tau"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..n_f).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    let mut rows = 0;
    for (i, (e, f)) in data.manifest.entries.iter().zip(&features).enumerate() {
        let l = &e.label;
        for tau in 0..f.n_tau() {
            let mut rec = vec![
                e.clip_id.clone(),
                l.digit.to_string(),
                l.speaker.clone(),
                l.utterance.to_string(),
                l.condition.noise_type.to_string(),
                if l.condition.is_clean() { "inf".to_string() } else { l.condition.snr_db.to_string() },
                data.subsets[i].to_string(),
                tau.to_string(),
            ];
            rec.extend(f.values.column(tau).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
            rows += 1;
        }
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("utf-8");
    let path = cfg.output_dir.join(format!("features_{}.csv", file_stem(&cfg.filter.key())));
    write_text(&path, &(hash_line(cfg.feature_hash(&cfg.filter)) + &body))?;
    Ok((path, rows))
}

/// Renders the synthetic corpus to 16-bit WAV files plus a manifest.
pub fn cmd_synth_corpus(cfg: &RunConfig) -> Result<PathBuf> {
    if !matches!(cfg.corpus, CorpusSource::Synthetic { .. }) {
        return Err(Error::Config("synth-corpus needs `corpus.kind = synthetic`".into()));
    }
    let data = load_dataset(cfg)?;
    let root = cfg.output_dir.join("corpus");
    fs::create_dir_all(root.join("wav"))?;
    let synth = cfg.synth_config();
    let bank = NoiseBank::new();
    let entries = data
        .manifest
        .entries
        .par_iter()
        .map(|e| {
            let clip = materialize_clip(e, &synth, &bank, cfg.seeds.noise)?;
            let rel = PathBuf::from("wav").join(format!("{}.wav", file_stem(&e.clip_id)));
            write_wav(&clip, &root.join(&rel))?;
            Ok(ManifestEntry { clip_id: e.clip_id.clone(), source: ClipSource::File(rel), label: e.label.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(data.manifest.corpus_name.clone(), data.manifest.sample_rate, entries)?;
    let path = root.join("manifest.csv");
    write_manifest(&manifest, &path)?;
    Ok(path)
}

/// One-line summary of a bench outcome for the terminal.
pub fn summarize(o: &BenchOutcome) -> String {
    let mut s = String::new();
    if let Some(b) = &o.baseline {
        let _ = writeln!(s, "baseline test WSR {:.2} % (std {:.2})", b.test.wsr, b.test.wsr_std);
    }
    if let Some(t) = &o.total {
        let _ = writeln!(s, "total test WSR {:.2} % (std {:.2})", t.test.wsr, t.test.wsr_std);
    }
    if let Some(g) = &o.gain {
        let _ = writeln!(s, "gain {:+.2} points", g.gain_points);
    }
    if let Some(c) = &o.conditions {
        let _ = writeln!(s, "overall condition AVG {:.2} %", c.overall.wsr);
    }
    s
}
