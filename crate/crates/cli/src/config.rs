//! `section.key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use resonet_core::container::config_hash;
use resonet_core::dataset::{Condition, CorpusProfile, NoiseType, PhaseMode, SynthConfig, DEFAULT_SAMPLE_RATE};
use resonet_core::filterbank::FilterKind;
use resonet_core::readout::SolverOptions;
use resonet_core::reservoir::{NodeKind, StnoParams};
use resonet_core::{Error, Result};

/// Every accepted key with its default; `None` marks keys without one.
const KEYS: &[(&str, Option<&str>)] = &[
    ("corpus.kind", Some("synthetic")),
    ("corpus.manifest", None),
    ("corpus.test_manifest", None),
    ("corpus.phase_mode", Some("random")),
    ("corpus.speakers", Some("5")),
    ("corpus.utterances", Some("10")),
    ("corpus.sample_rate", Some("12500")),
    ("corpus.duration_s", Some("0.5")),
    ("filter.kind", Some("spectro_real")),
    ("filter.alpha", None),
    ("node.kind", None),
    ("node.dt", Some("5e-9")),
    ("node.t_relax", Some("4.1e-7")),
    ("node.i_dc", Some("6")),
    ("node.i_c", Some("4.9")),
    ("node.r_dc", Some("1")),
    ("node.c", Some("1")),
    ("node.input_gain", Some("auto")),
    ("node.gain", Some("1")),
    ("node.leak", Some("1")),
    ("node.allow_slow_sampling", Some("false")),
    ("reservoir.n_theta", Some("400")),
    ("readout.rtol", Some("1e-10")),
    ("readout.ridge", Some("0")),
    ("readout.bias", Some("false")),
    ("seeds.prng", Some("chacha20")),
    ("seeds.mask", Some("1")),
    ("seeds.synth", Some("1")),
    ("seeds.partition", Some("7")),
    ("seeds.noise", Some("0")),
    ("bench.mode", Some("cv")),
    ("bench.n", Some("9")),
    ("bench.save_models", Some("false")),
    ("bench.train_conditions", Some("clean")),
    ("bench.train_counts", None),
    ("bench.test_snrs", Some("inf")),
    ("bench.test_noises", Some("synthetic-white")),
    ("sweep.alphas", Some("0, 1, 2")),
    ("sweep.reservoir", Some("false")),
    ("output.dir", Some("resonet-out")),
    ("run.workers", Some("1")),
];

/// Keys that change neither features, states nor reports.
const VOLATILE: &[&str] = &["output.dir", "run.workers"];

/// Raw key/value pairs after defaults and overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

impl RawConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `section.key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !known(k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", i + 1)));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        Ok(Self { values, base_dir: base_dir.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Applies `k=v`; a bare seed name such as `mask` means `seeds.mask`.
    pub fn set_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) =
            spec.split_once('=').ok_or_else(|| Error::Config(format!("override `{spec}` is not `key=value`")))?;
        let k = k.trim();
        let key = if k.contains('.') { k.to_string() } else { format!("seeds.{k}") };
        if !known(&key) {
            return Err(Error::Config(format!("unknown override key `{key}`")));
        }
        self.values.insert(key, v.trim().to_string());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !known(key) {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        debug_assert!(known(key), "{key}");
        self.values.get(key).map(String::as_str).or_else(|| KEYS.iter().find(|(k, _)| *k == key).and_then(|(_, d)| *d))
    }

    fn has_section(&self, section: &str) -> bool {
        self.values.keys().any(|k| k.starts_with(&format!("{section}.")))
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base_dir.join(p)
            }
        })
    }

    /// Fully resolved `key = value` lines, sorted, excluding volatile keys.
    pub fn canonical(&self) -> String {
        KEYS.iter()
            .filter(|(k, _)| !VOLATILE.contains(k))
            .filter_map(|(k, _)| self.get(k).map(|v| format!("{k} = {}\n", normalize(k, v, self))))
            .collect()
    }

    /// Canonical text of the keys starting with any of `prefixes`.
    pub fn canonical_subset(&self, prefixes: &[&str]) -> String {
        self.canonical()
            .lines()
            .filter(|l| prefixes.iter().any(|p| l.starts_with(p)))
            .map(|l| format!("{l}\n"))
            .collect()
    }
}

/// Paths are hashed by their resolved form so relative and absolute
/// spellings of one file agree.
fn normalize(key: &str, value: &str, raw: &RawConfig) -> String {
    if key == "corpus.manifest" || key == "corpus.test_manifest" {
        let p = raw.path(key).expect("present");
        return std::fs::canonicalize(&p).unwrap_or(p).display().to_string();
    }
    value.to_string()
}

fn parse_num<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<T> {
    let v = raw.get(key).ok_or_else(|| Error::Config(format!("`{key}` is required")))?;
    v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(raw: &RawConfig, key: &str) -> Result<bool> {
    match raw.get(key) {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        other => Err(Error::Config(format!("`{key}` must be true or false, got {other:?}"))),
    }
}

fn list(raw: &RawConfig, key: &str) -> Vec<String> {
    raw.get(key).unwrap_or("").split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
}

fn parse_condition(s: &str) -> Result<Condition> {
    if s == "clean" {
        return Ok(Condition::CLEAN);
    }
    let (noise, snr) =
        s.rsplit_once(':').ok_or_else(|| Error::Config(format!("condition `{s}` is not `clean` or `noise:snr`")))?;
    let noise: NoiseType = noise.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    let snr: f64 = snr.parse().map_err(|_| Error::Config(format!("condition `{s}`: bad snr")))?;
    Condition::new(noise, snr).map_err(|e| Error::Config(e.to_string()))
}

fn parse_snr(s: &str) -> Result<f64> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "clean" => Ok(f64::INFINITY),
        v => v.parse().map_err(|_| Error::Config(format!("bad snr `{s}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Synthetic { phase_mode: PhaseMode, synth: SynthConfig },
    Manifest { path: PathBuf, test_path: Option<PathBuf> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    CrossValidation,
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub mask: u64,
    pub synth: u64,
    pub partition: u64,
    pub noise: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub kind: NodeKind,
    /// `None` calibrates on the corpus.
    pub input_gain: Option<f64>,
    pub allow_slow_sampling: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub mode: BenchMode,
    pub n: usize,
    pub save_models: bool,
    pub train_conditions: Vec<Condition>,
    pub train_counts: Vec<(Condition, usize)>,
    pub test_snrs: Vec<f64>,
    pub test_noises: Vec<NoiseType>,
}

/// Validated configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub corpus: CorpusSource,
    pub profile: CorpusProfile,
    pub filter: FilterKind,
    pub node: Option<NodeConfig>,
    pub n_theta: usize,
    pub readout: SolverOptions,
    pub seeds: Seeds,
    pub bench: BenchConfig,
    pub sweep_alphas: Vec<f64>,
    pub sweep_reservoir: bool,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl RunConfig {
    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let corpus = match raw.get("corpus.kind") {
            Some("synthetic") => {
                if raw.values.contains_key("corpus.manifest") {
                    return Err(Error::Config("`corpus.manifest` given for a synthetic corpus".into()));
                }
                let phase_mode: PhaseMode = raw
                    .get("corpus.phase_mode")
                    .unwrap_or("")
                    .parse()
                    .map_err(|e: Error| Error::Config(e.to_string()))?;
                let synth = SynthConfig {
                    sample_rate: parse_num(&raw, "corpus.sample_rate")?,
                    duration_s: parse_num(&raw, "corpus.duration_s")?,
                };
                if synth.sample_rate == 0 || !(synth.duration_s > 0.0 && synth.duration_s.is_finite()) {
                    return Err(Error::Config("synthetic sample rate and duration must be positive".into()));
                }
                CorpusSource::Synthetic { phase_mode, synth }
            }
            Some("manifest") => {
                let path = raw
                    .path("corpus.manifest")
                    .ok_or_else(|| Error::Config("`corpus.manifest` is required for a manifest corpus".into()))?;
                if !path.is_file() {
                    return Err(Error::Config(format!("manifest {} does not exist", path.display())));
                }
                let test_path = raw.path("corpus.test_manifest");
                if let Some(t) = &test_path {
                    if !t.is_file() {
                        return Err(Error::Config(format!("test manifest {} does not exist", t.display())));
                    }
                }
                CorpusSource::Manifest { path, test_path }
            }
            other => return Err(Error::Config(format!("`corpus.kind` must be synthetic or manifest, got {other:?}"))),
        };
        let profile = CorpusProfile {
            speakers: parse_num(&raw, "corpus.speakers")?,
            utterances: parse_num(&raw, "corpus.utterances")?,
        };

        let alpha = match raw.get("filter.alpha") {
            Some(_) => Some(parse_num::<f64>(&raw, "filter.alpha")?),
            None => None,
        };
        let filter =
            FilterKind::parse(raw.get("filter.kind").unwrap_or(""), alpha).map_err(|e| Error::Config(e.to_string()))?;

        let node = if raw.has_section("node") {
            let allow_slow_sampling = parse_bool(&raw, "node.allow_slow_sampling")?;
            let input_gain = match raw.get("node.input_gain") {
                Some("auto") => None,
                _ => Some(parse_num::<f64>(&raw, "node.input_gain")?),
            };
            let kind = match raw.get("node.kind") {
                Some("stno") => NodeKind::Stno(StnoParams {
                    dt: parse_num(&raw, "node.dt")?,
                    t_relax: parse_num(&raw, "node.t_relax")?,
                    i_dc: parse_num(&raw, "node.i_dc")?,
                    i_c: parse_num(&raw, "node.i_c")?,
                    r_dc: parse_num(&raw, "node.r_dc")?,
                    c: parse_num(&raw, "node.c")?,
                    input_gain: input_gain.unwrap_or(1.0),
                }),
                Some("tanh") => {
                    NodeKind::Reference { gain: parse_num(&raw, "node.gain")?, leak: parse_num(&raw, "node.leak")? }
                }
                other => return Err(Error::Config(format!("`node.kind` must be stno or tanh, got {other:?}"))),
            };
            kind.validate(allow_slow_sampling)?;
            if let Some(g) = input_gain {
                if !(g.is_finite() && g > 0.0) {
                    return Err(Error::Config(format!("`node.input_gain` must be positive, got {g}")));
                }
            }
            Some(NodeConfig { kind, input_gain, allow_slow_sampling })
        } else {
            None
        };
        let n_theta: usize = parse_num(&raw, "reservoir.n_theta")?;
        if node.is_some() && n_theta == 0 {
            return Err(Error::Config("`reservoir.n_theta` must be at least 1".into()));
        }

        let readout = SolverOptions {
            rtol: parse_num(&raw, "readout.rtol")?,
            ridge: parse_num(&raw, "readout.ridge")?,
            bias: parse_bool(&raw, "readout.bias")?,
        };
        readout.validate()?;

        if raw.get("seeds.prng") != Some("chacha20") {
            return Err(Error::Config(format!("`seeds.prng` must be chacha20, got {:?}", raw.get("seeds.prng"))));
        }
        let seeds = Seeds {
            mask: parse_num(&raw, "seeds.mask")?,
            synth: parse_num(&raw, "seeds.synth")?,
            partition: parse_num(&raw, "seeds.partition")?,
            noise: parse_num(&raw, "seeds.noise")?,
        };

        let mode = match raw.get("bench.mode") {
            Some("cv") => BenchMode::CrossValidation,
            Some("stratified") => BenchMode::Stratified,
            other => return Err(Error::Config(format!("`bench.mode` must be cv or stratified, got {other:?}"))),
        };
        let n: usize = parse_num(&raw, "bench.n")?;
        if !(1..=9).contains(&n) {
            return Err(Error::Config(format!("`bench.n` must lie in [1, 9], got {n}")));
        }
        let train_conditions =
            list(&raw, "bench.train_conditions").iter().map(|s| parse_condition(s)).collect::<Result<Vec<_>>>()?;
        let train_counts = list(&raw, "bench.train_counts")
            .iter()
            .map(|s| {
                let (c, k) = s
                    .rsplit_once('=')
                    .ok_or_else(|| Error::Config(format!("train count `{s}` is not `condition=count`")))?;
                let k = k.trim().parse().map_err(|_| Error::Config(format!("train count `{s}`: bad count")))?;
                Ok((parse_condition(c.trim())?, k))
            })
            .collect::<Result<Vec<_>>>()?;
        let test_snrs = list(&raw, "bench.test_snrs").iter().map(|s| parse_snr(s)).collect::<Result<Vec<_>>>()?;
        let test_noises = list(&raw, "bench.test_noises")
            .iter()
            .map(|s| s.parse::<NoiseType>().map_err(|e| Error::Config(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if mode == BenchMode::Stratified {
            if train_conditions.is_empty() || test_snrs.is_empty() || test_noises.is_empty() {
                return Err(Error::Config("stratified mode needs train conditions, test snrs and test noises".into()));
            }
            if test_noises.contains(&NoiseType::Clean) {
                return Err(Error::Config("`bench.test_noises` lists noise columns; use snr inf for clean".into()));
            }
            if let CorpusSource::Manifest { test_path: None, .. } = corpus {
                return Err(Error::Config("stratified mode on a manifest corpus needs `corpus.test_manifest`".into()));
            }
        }
        let bench = BenchConfig {
            mode,
            n,
            save_models: parse_bool(&raw, "bench.save_models")?,
            train_conditions,
            train_counts,
            test_snrs,
            test_noises,
        };

        let sweep_alphas = list(&raw, "sweep.alphas")
            .iter()
            .map(|s| {
                s.parse::<f64>().ok().filter(|a| a.is_finite()).ok_or_else(|| Error::Config(format!("bad alpha `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if sweep_alphas.is_empty() {
            return Err(Error::Config("`sweep.alphas` is empty".into()));
        }
        let sweep_reservoir = parse_bool(&raw, "sweep.reservoir")?;
        if sweep_reservoir && node.is_none() {
            return Err(Error::Config("`sweep.reservoir = true` needs a node section".into()));
        }
        let workers: usize = parse_num(&raw, "run.workers")?;
        if workers == 0 {
            return Err(Error::Config("`run.workers` must be at least 1".into()));
        }
        let output_dir = raw.path("output.dir").expect("has default");

        Ok(Self {
            corpus,
            profile,
            filter,
            node,
            n_theta,
            readout,
            seeds,
            bench,
            sweep_alphas,
            sweep_reservoir,
            output_dir,
            workers,
            raw,
        })
    }

    pub fn hash(&self) -> u64 {
        config_hash(&self.raw.canonical())
    }

    /// Identifies everything that determines the rendered clips.
    pub fn corpus_hash(&self) -> u64 {
        config_hash(&self.raw.canonical_subset(&[
            "corpus.",
            "seeds.prng",
            "seeds.synth",
            "seeds.noise",
            "bench.mode",
            "bench.train_",
            "bench.test_",
        ]))
    }

    /// Identifies the features of one filter on this corpus.
    pub fn feature_hash(&self, kind: &FilterKind) -> u64 {
        config_hash(&format!("{:016x}\n{}", self.corpus_hash(), kind.key()))
    }

    /// Identifies the neuron states of one filter through the configured node.
    pub fn states_hash(&self, kind: &FilterKind) -> u64 {
        let node = self.raw.canonical_subset(&["node.", "reservoir.", "seeds.mask"]);
        config_hash(&format!("{:016x}\n{node}", self.feature_hash(kind)))
    }

    pub fn synth_config(&self) -> SynthConfig {
        match self.corpus {
            CorpusSource::Synthetic { synth, .. } => synth,
            CorpusSource::Manifest { .. } => SynthConfig { sample_rate: DEFAULT_SAMPLE_RATE, ..SynthConfig::default() },
        }
    }

    /// Conditions rendered for a synthetic corpus: clean only for cross
    /// validation, otherwise every training condition and test cell.
    pub fn synthetic_conditions(&self) -> Vec<Condition> {
        let mut out = vec![Condition::CLEAN];
        if self.bench.mode == BenchMode::Stratified {
            let mut push = |c: Condition| {
                if !out.contains(&c) {
                    out.push(c);
                }
            };
            for &c in &self.bench.train_conditions {
                push(c);
            }
            for &snr in &self.bench.test_snrs {
                for &noise in &self.bench.test_noises {
                    if snr.is_finite() {
                        if let Ok(c) = Condition::new(noise, snr) {
                            push(c);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn describe(&self) -> String {
        let node = match &self.node {
            Some(n) => format!("{} n_theta={} mask_seed={}", n.kind.name(), self.n_theta, self.seeds.mask),
            None => "none".into(),
        };
        format!(
            "filter={} node={} N={} synth_seed={} partition_seed={} noise_seed={}",
            self.filter.key(),
            node,
            self.bench.n,
            self.seeds.synth,
            self.seeds.partition,
            self.seeds.noise
        )
    }
}
