//! Cross-validation over subset folds, filter baselines, reservoir gains,
//! exponent sweeps and condition-stratified reports.

mod folds;
mod report;
mod stratified;
mod sweep;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use folds::{enumerate_folds, FoldSpec};
pub use report::{condition_csv, condition_markdown, cv_csv, cv_markdown, gain_markdown, parity_csv, sweep_csv};
pub use stratified::{evaluate_grid, select_by_counts, stratified_report, Cell, ConditionReport};
pub use sweep::{alpha_sweep, parity_diagnostic, ParityRow, SweepPoint, SURVIVAL_X};

use crate::dataset::{
    materialize_clip, partition_subsets, AudioClip, CorpusProfile, Manifest, NoiseBank, PhaseMode, SynthConfig,
    N_SUBSETS,
};
use crate::filterbank::{featurize, pad_to, FeatureMatrix, FilterConfig, FilterKind};
use crate::readout::{mean_std, one_hot, predict_from_sums, Metrics, QrAccumulator, ReadoutModel, SolverOptions};
use crate::reservoir::{gen_mask, NeuronStates, NodeKind, Reservoir};
use crate::{Error, Result, N_DIGITS};

/// Per-clip design matrices with labels and subset membership.
///
/// Blocks are feature matrices for the filter-only classifier or neuron
/// states for the full pipeline; all share one row count.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub blocks: Vec<DMatrix<f64>>,
    pub digits: Vec<u8>,
    pub clip_ids: Vec<String>,
    pub subsets: Vec<usize>,
}

impl EvalSet {
    pub fn new(blocks: Vec<DMatrix<f64>>, digits: Vec<u8>, clip_ids: Vec<String>, subsets: Vec<usize>) -> Result<Self> {
        let n = blocks.len();
        if n == 0 {
            return Err(Error::InvalidArgument("evaluation set is empty".into()));
        }
        if digits.len() != n || clip_ids.len() != n || subsets.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{n} blocks, {} digits, {} ids, {} subset tags",
                digits.len(),
                clip_ids.len(),
                subsets.len()
            )));
        }
        let rows = blocks[0].nrows();
        if let Some(i) = blocks.iter().position(|b| b.nrows() != rows || b.ncols() == 0) {
            return Err(Error::DimensionMismatch(format!(
                "block `{}` is {}x{}, expected {rows} rows",
                clip_ids[i],
                blocks[i].nrows(),
                blocks[i].ncols()
            )));
        }
        if let Some(&d) = digits.iter().find(|&&d| d as usize >= N_DIGITS) {
            return Err(Error::InvalidArgument(format!("digit {d} out of range")));
        }
        Ok(Self { blocks, digits, clip_ids, subsets })
    }

    pub fn from_features(features: &[FeatureMatrix], digits: Vec<u8>, subsets: Vec<usize>) -> Result<Self> {
        Self::new(
            features.iter().map(|f| f.values.clone()).collect(),
            digits,
            features.iter().map(|f| f.clip_id.clone()).collect(),
            subsets,
        )
    }

    pub fn from_states(states: &[NeuronStates], digits: Vec<u8>, subsets: Vec<usize>) -> Result<Self> {
        Self::new(
            states.iter().map(|s| s.values.clone()).collect(),
            digits,
            states.iter().map(|s| s.clip_id.clone()).collect(),
            subsets,
        )
    }

    /// Looks every clip up in a cache keyed by clip id.
    pub fn from_cache(
        clip_ids: &[String],
        digits: Vec<u8>,
        subsets: Vec<usize>,
        cache: &HashMap<String, DMatrix<f64>>,
    ) -> Result<Self> {
        let blocks = clip_ids
            .iter()
            .map(|id| cache.get(id).cloned().ok_or_else(|| Error::MissingCache(id.clone())))
            .collect::<Result<Vec<_>>>()?;
        Self::new(blocks, digits, clip_ids.to_vec(), subsets)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn n_rows(&self) -> usize {
        self.blocks[0].nrows()
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self { blocks: self.blocks.iter().map(|b| b * lambda).collect(), ..self.clone() }
    }

    /// Copy without the clip at `index`.
    pub fn without(&self, index: usize) -> Self {
        let mut out = self.clone();
        out.blocks.remove(index);
        out.digits.remove(index);
        out.clip_ids.remove(index);
        out.subsets.remove(index);
        out
    }
}

const CHUNK: usize = 16;

/// Least-squares factor over `indices`, accumulated in fixed chunks and merged in
/// order so the result does not depend on the worker count.
pub fn accumulate(set: &EvalSet, indices: &[usize], bias: bool) -> Result<QrAccumulator> {
    let parts = indices
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = QrAccumulator::new(set.n_rows(), bias);
            for &i in chunk {
                acc.add(&set.blocks[i], set.digits[i])?;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = QrAccumulator::new(set.n_rows(), bias);
    for p in &parts {
        total.merge(p)?;
    }
    total.compact();
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub wsr: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: FoldSpec,
    pub train: Score,
    pub test: Score,
}

/// Scores clips `indices` under weights `w`.
pub fn score_indices(model: &ReadoutModel, set: &EvalSet, sums: &[DVector<f64>], indices: &[usize]) -> Result<Score> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("no clips to score".into()));
    }
    let mut hits = 0usize;
    let mut sq = 0.0;
    for &i in indices {
        let t_hat = predict_from_sums(model, &sums[i], set.blocks[i].ncols())?;
        if crate::readout::classify(&t_hat) == set.digits[i] {
            hits += 1;
        }
        sq += (t_hat - one_hot(set.digits[i])).norm_squared();
    }
    Ok(Score { wsr: 100.0 * hits as f64 / indices.len() as f64, mse: sq / (indices.len() * N_DIGITS) as f64 })
}

/// Per-subset sufficient statistics of one evaluation set, shared by all folds.
pub struct Evaluator<'a> {
    set: &'a EvalSet,
    options: SolverOptions,
    stats: Vec<QrAccumulator>,
    members: Vec<Vec<usize>>,
    sums: Vec<DVector<f64>>,
    pub node_code: u8,
    pub filter: FilterKind,
}

impl<'a> Evaluator<'a> {
    pub fn new(set: &'a EvalSet, options: SolverOptions) -> Result<Self> {
        options.validate()?;
        let mut members = vec![Vec::new(); N_SUBSETS];
        for (i, &k) in set.subsets.iter().enumerate() {
            if k >= N_SUBSETS {
                return Err(Error::InvalidArgument(format!("clip `{}` has no subset", set.clip_ids[i])));
            }
            members[k].push(i);
        }
        let stats = members.iter().map(|m| accumulate(set, m, options.bias)).collect::<Result<Vec<_>>>()?;
        let sums = set.blocks.par_iter().map(|b| b.column_sum()).collect();
        Ok(Self { set, options, stats, members, sums, node_code: 0, filter: FilterKind::SpectroReal })
    }

    /// Tags written into exported model files.
    pub fn with_tags(mut self, node_code: u8, filter: FilterKind) -> Self {
        self.node_code = node_code;
        self.filter = filter;
        self
    }

    pub fn set(&self) -> &EvalSet {
        self.set
    }

    /// Trains on the fold's training subsets only.
    pub fn train(&self, fold: &FoldSpec) -> Result<ReadoutModel> {
        let mut acc = QrAccumulator::new(self.set.n_rows(), self.options.bias);
        for &k in &fold.train {
            acc.merge(&self.stats[k])?;
        }
        if acc.n_digits == 0 {
            return Err(Error::InvalidArgument("fold has no training clips".into()));
        }
        Ok(ReadoutModel {
            w: acc.solve(&self.options)?,
            options: self.options,
            train_mask: fold.train_mask(),
            node_code: self.node_code,
            filter: self.filter,
        })
    }

    pub fn run_fold(&self, fold: &FoldSpec) -> Result<FoldResult> {
        let model = self.train(fold)?;
        let pick = |ks: &[usize]| ks.iter().flat_map(|&k| self.members[k].iter().copied()).collect::<Vec<_>>();
        let (train_idx, test_idx) = (pick(&fold.train), pick(&fold.test));
        Ok(FoldResult {
            fold: fold.clone(),
            train: score_indices(&model, self.set, &self.sums, &train_idx)?,
            test: score_indices(&model, self.set, &self.sums, &test_idx)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValReport {
    pub descriptor: String,
    pub n: usize,
    pub folds: Vec<FoldResult>,
    pub train: Metrics,
    pub test: Metrics,
}

impl CrossValReport {
    pub fn from_folds(descriptor: impl Into<String>, n: usize, folds: Vec<FoldResult>) -> Result<Self> {
        if folds.is_empty() {
            return Err(Error::InvalidArgument("no folds to aggregate".into()));
        }
        let agg = |f: &dyn Fn(&FoldResult) -> f64| mean_std(&folds.iter().map(f).collect::<Vec<_>>());
        let (tr_wsr, tr_wsr_std) = agg(&|r| r.train.wsr);
        let (tr_mse, tr_mse_std) = agg(&|r| r.train.mse);
        let (te_wsr, te_wsr_std) = agg(&|r| r.test.wsr);
        let (te_mse, te_mse_std) = agg(&|r| r.test.mse);
        let overfit_ratio = te_mse / tr_mse;
        Ok(Self {
            descriptor: descriptor.into(),
            n,
            train: Metrics { wsr: tr_wsr, mse: tr_mse, wsr_std: tr_wsr_std, mse_std: tr_mse_std, overfit_ratio },
            test: Metrics { wsr: te_wsr, mse: te_mse, wsr_std: te_wsr_std, mse_std: te_mse_std, overfit_ratio },
            folds,
        })
    }
}

/// Runs every fold with `n` training subsets. Folds execute in parallel;
/// results keep enumeration order.
pub fn cross_validate(n: usize, eval: &Evaluator, descriptor: &str) -> Result<CrossValReport> {
    let folds = enumerate_folds(n)?;
    let results = folds.par_iter().map(|f| eval.run_fold(f)).collect::<Result<Vec<_>>>()?;
    CrossValReport::from_folds(descriptor, n, results)
}

/// Filter-only classifier: the readout sees the feature channels directly.
pub fn filter_baseline(
    n: usize,
    features: &EvalSet,
    options: SolverOptions,
    descriptor: &str,
) -> Result<CrossValReport> {
    cross_validate(n, &Evaluator::new(features, options)?, descriptor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    pub total: Metrics,
    pub baseline: Metrics,
    /// Test WSR difference in percentage points.
    pub gain_points: f64,
}

pub fn compute_gain(total: &CrossValReport, baseline: &CrossValReport) -> Result<GainReport> {
    if total.n != baseline.n {
        return Err(Error::FoldMismatch(format!("N = {} against N = {}", total.n, baseline.n)));
    }
    let same = total.folds.len() == baseline.folds.len()
        && total.folds.iter().zip(&baseline.folds).all(|(a, b)| a.fold == b.fold);
    if !same {
        return Err(Error::FoldMismatch("reports were computed on different folds".into()));
    }
    Ok(GainReport { total: total.test, baseline: baseline.test, gain_points: total.test.wsr - baseline.test.wsr })
}

/// Chance level and binomial 3-sigma half width, in percent, for a balanced
/// `k`-class test of `n` predictions.
pub fn chance_band(k: usize, n: usize) -> (f64, f64) {
    let p = 1.0 / k as f64;
    (100.0 * p, 3.0 * 100.0 * (p * (1.0 - p) / n as f64).sqrt())
}

/// Rendered clips with their subset tags.
pub struct Corpus {
    pub manifest: Manifest,
    pub clips: Vec<AudioClip>,
    pub subsets: Vec<usize>,
}

impl Corpus {
    pub fn materialize(
        manifest: Manifest,
        subsets: Vec<usize>,
        synth: &SynthConfig,
        bank: &NoiseBank,
        noise_seed: u64,
    ) -> Result<Self> {
        if subsets.len() != manifest.len() {
            return Err(Error::DimensionMismatch("one subset tag per manifest entry required".into()));
        }
        let clips = manifest
            .entries
            .par_iter()
            .map(|e| materialize_clip(e, synth, bank, noise_seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, clips, subsets })
    }

    /// The surrogate 10-digit, 5-speaker, 10-utterance corpus.
    pub fn synthetic(phase_mode: PhaseMode, synth_seed: u64, partition_seed: u64) -> Result<Self> {
        let synth = SynthConfig::default();
        let manifest = Manifest::synthetic(CorpusProfile::TI46, phase_mode, synth_seed, synth.sample_rate);
        let part = partition_subsets(&manifest, partition_seed, CorpusProfile::TI46)?;
        let subsets = part.assignment(manifest.len());
        Self::materialize(manifest, subsets, &synth, &NoiseBank::new(), 0)
    }

    pub fn digits(&self) -> Vec<u8> {
        self.manifest.entries.iter().map(|e| e.label.digit).collect()
    }

    pub fn clip_ids(&self) -> Vec<String> {
        self.manifest.entries.iter().map(|e| e.clip_id.clone()).collect()
    }

    /// Features of every clip, zero-padded to the longest clip.
    pub fn features(&self, kind: &FilterKind, cfg: &FilterConfig) -> Result<Vec<FeatureMatrix>> {
        let raw = self.clips.par_iter().map(|c| featurize(c, kind, cfg)).collect::<Result<Vec<_>>>()?;
        pad_all(raw)
    }

    pub fn eval_set(&self, blocks: Vec<DMatrix<f64>>) -> Result<EvalSet> {
        EvalSet::new(blocks, self.digits(), self.clip_ids(), self.subsets.clone())
    }
}

pub fn pad_all(features: Vec<FeatureMatrix>) -> Result<Vec<FeatureMatrix>> {
    let n_tau = features.iter().map(FeatureMatrix::n_tau).max().unwrap_or(0);
    features.iter().map(|f| pad_to(f, n_tau)).collect()
}

/// How to build the reservoir for a feature set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirSpec {
    pub n_theta: usize,
    pub mask_seed: u64,
    pub node: NodeKind,
    /// Fixed input scaling; `None` calibrates on the feature set given.
    pub input_gain: Option<f64>,
}

/// Builds the mask for the features' channel count, calibrates or pins the
/// input scaling and runs every clip through the node.
pub fn run_reservoir(features: &[FeatureMatrix], spec: &ReservoirSpec) -> Result<(Reservoir, Vec<NeuronStates>)> {
    let n_f = features.first().map(FeatureMatrix::n_f).ok_or_else(|| Error::InvalidArgument("no features".into()))?;
    if spec.n_theta == 0 {
        return Err(Error::Config("reservoir needs at least one virtual neuron".into()));
    }
    let mut res = Reservoir::new(gen_mask(spec.mask_seed, spec.n_theta, n_f), spec.node);
    match spec.input_gain {
        Some(g) => {
            res.node = match res.node {
                NodeKind::Stno(p) => NodeKind::Stno(crate::reservoir::StnoParams { input_gain: g, ..p }),
                NodeKind::Reference { leak, .. } => NodeKind::Reference { gain: g, leak },
            }
        }
        None => {
            res.calibrate(features)?;
        }
    }
    let states = features.par_iter().map(|f| res.transform(f)).collect::<Result<Vec<_>>>()?;
    Ok((res, states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::encode_model;
    use crate::reservoir::StnoParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two classes with orthogonal feature directions, spread evenly over the subsets.
    fn separable() -> EvalSet {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut blocks = Vec::new();
        let mut digits = Vec::new();
        let mut subsets = Vec::new();
        for i in 0..40 {
            let d = (i % 2) as u8;
            let mut b = DMatrix::zeros(4, 3);
            for c in 0..3 {
                b[(d as usize, c)] = rng.random_range(0.5..1.5);
                b[(2 + d as usize, c)] = rng.random_range(0.5..1.5);
            }
            blocks.push(b);
            digits.push(d);
            subsets.push((i / 2) % 10);
        }
        let ids = (0..40).map(|i| format!("c{i}")).collect();
        EvalSet::new(blocks, digits, ids, subsets).unwrap()
    }

    #[test]
    fn separable_toy_is_perfect() {
        let set = separable();
        let eval = Evaluator::new(&set, SolverOptions::default()).unwrap();
        let r = cross_validate(9, &eval, "toy").unwrap();
        assert_eq!(r.test.wsr, 100.0);
        assert_eq!(r.test.wsr_std, 0.0);
        assert_eq!(r.folds.len(), 10);
    }

    #[test]
    fn fold_determinism_and_aggregates() {
        let set = separable();
        let eval = Evaluator::new(&set, SolverOptions::default()).unwrap();
        let fold = FoldSpec::from_train(&[0, 2, 4, 6, 8]).unwrap();
        assert_eq!(eval.run_fold(&fold).unwrap(), eval.run_fold(&fold).unwrap());
        let r = cross_validate(5, &eval, "toy").unwrap();
        assert_eq!(r.folds.len(), 252);
        let mean = r.folds.iter().map(|f| f.test.mse).sum::<f64>() / 252.0;
        assert!((mean - r.test.mse).abs() < 1e-15);
    }

    #[test]
    fn missing_cache_entry() {
        let mut cache = HashMap::new();
        cache.insert("a".to_string(), DMatrix::zeros(2, 2));
        let ids = vec!["a".to_string(), "b".to_string()];
        match EvalSet::from_cache(&ids, vec![0, 1], vec![0, 1], &cache) {
            Err(Error::MissingCache(id)) => assert_eq!(id, "b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn test_clips_do_not_touch_weights() {
        let set = separable();
        let fold = FoldSpec::from_train(&[0, 1, 2, 3, 4, 5, 6, 7, 8]).unwrap();
        let before = Evaluator::new(&set, SolverOptions::default()).unwrap().train(&fold).unwrap();
        let victim = set.subsets.iter().position(|&k| k == 9).unwrap();
        let smaller = set.without(victim);
        let after = Evaluator::new(&smaller, SolverOptions::default()).unwrap().train(&fold).unwrap();
        assert_eq!(encode_model(&before, 1), encode_model(&after, 1));
    }

    #[test]
    fn gain_is_difference() {
        let set = separable();
        let eval = Evaluator::new(&set, SolverOptions::default()).unwrap();
        let a = cross_validate(9, &eval, "a").unwrap();
        let g = compute_gain(&a, &a).unwrap();
        assert_eq!(g.gain_points, 0.0);
        let mut shifted = a.clone();
        shifted.test.wsr = 99.6;
        let mut base = a.clone();
        base.test.wsr = 95.8;
        assert_eq!(compute_gain(&shifted, &base).unwrap().gain_points, 99.6 - 95.8);
        let other = cross_validate(8, &eval, "b").unwrap();
        assert!(matches!(compute_gain(&a, &other), Err(Error::FoldMismatch(_))));
    }

    #[test]
    fn chance_band_width() {
        let (c, w) = chance_band(10, 500);
        assert_eq!(c, 10.0);
        assert!((w - 4.0249).abs() < 1e-4);
    }

    #[test]
    fn reservoir_with_pinned_gain() {
        let f = vec![FeatureMatrix {
            values: DMatrix::from_fn(3, 5, |r, c| (r as f64 - c as f64) / 4.0),
            kind: FilterKind::Mfcc,
            clip_id: "x".into(),
            degenerate: false,
        }];
        let spec = ReservoirSpec {
            n_theta: 6,
            mask_seed: 1,
            node: NodeKind::Stno(StnoParams::default()),
            input_gain: Some(0.25),
        };
        let (res, states) = run_reservoir(&f, &spec).unwrap();
        assert_eq!(res.node, NodeKind::Stno(StnoParams { input_gain: 0.25, ..Default::default() }));
        assert_eq!(states[0].values.shape(), (6, 5));
    }
}
