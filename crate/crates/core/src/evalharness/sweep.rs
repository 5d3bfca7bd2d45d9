use super::{cross_validate, run_reservoir, Corpus, Evaluator, ReservoirSpec};
use crate::filterbank::{exponent_transform, FeatureMatrix, FilterConfig, FilterKind};
use crate::readout::SolverOptions;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub wsr: f64,
    pub wsr_std: f64,
}

/// Cross-validated test WSR of the exponent spectrogram for every `alpha`,
/// filter-only or through the reservoir.
pub fn alpha_sweep(
    corpus: &Corpus,
    alphas: &[f64],
    n: usize,
    reservoir: Option<&ReservoirSpec>,
    cfg: &FilterConfig,
    options: &SolverOptions,
) -> Result<Vec<SweepPoint>> {
    if let Some(a) = alphas.iter().find(|a| !a.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha {a} is not finite")));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let kind = FilterKind::SpectroExp { alpha };
            let features = corpus.features(&kind, cfg)?;
            let blocks = match reservoir {
                Some(spec) => run_reservoir(&features, spec)?.1.into_iter().map(|s| s.values).collect(),
                None => features.into_iter().map(|f| f.values).collect(),
            };
            let set = corpus.eval_set(blocks)?;
            let r = cross_validate(n, &Evaluator::new(&set, *options)?, &kind.key())?;
            Ok(SweepPoint { alpha, wsr: r.test.wsr, wsr_std: r.test.wsr_std })
        })
        .collect()
}

/// Inputs with `|x|` at or below this value are expected to vanish at large
/// exponents: their image is bounded by `SURVIVAL_X^alpha`.
pub const SURVIVAL_X: f64 = 0.98;

/// Large-exponent census of one clip's transformed features.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityRow {
    pub clip_id: String,
    pub alpha: f64,
    /// Entries mapped exactly to +1.
    pub n_plus: usize,
    /// Entries mapped exactly to -1.
    pub n_minus: usize,
    /// Entries with `SURVIVAL_X < |x| < 1`, partially surviving.
    pub n_partial: usize,
    /// Largest `|R|` among entries with `|x| <= SURVIVAL_X`.
    pub max_suppressed: f64,
    /// `SURVIVAL_X^alpha`.
    pub bound: f64,
}

impl ParityRow {
    pub fn within_bound(&self) -> bool {
        self.max_suppressed <= self.bound
    }
}

/// Applies the exponent transform to normalized real spectrograms and
/// counts which entries survive.
pub fn parity_diagnostic(normalized: &[FeatureMatrix], alpha: f64) -> Result<Vec<ParityRow>> {
    let bound = SURVIVAL_X.powf(alpha);
    normalized
        .iter()
        .map(|f| {
            let r = exponent_transform(&f.values, alpha)?;
            let mut row = ParityRow {
                clip_id: f.clip_id.clone(),
                alpha,
                n_plus: 0,
                n_minus: 0,
                n_partial: 0,
                max_suppressed: 0.0,
                bound,
            };
            for (&x, &y) in f.values.iter().zip(r.iter()) {
                if y == 1.0 {
                    row.n_plus += 1;
                } else if y == -1.0 {
                    row.n_minus += 1;
                } else if x.abs() > SURVIVAL_X {
                    row.n_partial += 1;
                } else {
                    row.max_suppressed = row.max_suppressed.max(y.abs());
                }
            }
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn parity_counts() {
        let f = FeatureMatrix {
            values: DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.99, 0.5, -0.98, 0.0]),
            kind: FilterKind::SpectroReal,
            clip_id: "p".into(),
            degenerate: false,
        };
        let even = &parity_diagnostic(std::slice::from_ref(&f), 1000.0).unwrap()[0];
        assert_eq!((even.n_plus, even.n_minus, even.n_partial), (2, 0, 1));
        assert!(even.within_bound());
        let odd = &parity_diagnostic(&[f], 1001.0).unwrap()[0];
        assert_eq!((odd.n_plus, odd.n_minus, odd.n_partial), (1, 1, 1));
        assert!(odd.within_bound());
        assert!((odd.bound - 0.98f64.powi(1001)).abs() < 1e-24);
    }
}
