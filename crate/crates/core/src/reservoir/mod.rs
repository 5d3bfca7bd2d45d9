//! Masking, time multiplexing and the single-node dynamics.

mod mask;
mod stno;

use nalgebra::DMatrix;

pub use mask::{gen_mask, BinaryMask};
pub use stno::{node_run_reference, stno_run, stno_step, StnoParams, DRIVE_MA};

use crate::filterbank::FeatureMatrix;
use crate::{Error, Result};

/// Dynamics of the physical node driven by the multiplexed input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Stno(StnoParams),
    /// Leaky tanh; `gain` is the tanh argument reached by the largest
    /// calibrated input.
    Reference {
        gain: f64,
        leak: f64,
    },
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Stno(_) => "stno",
            NodeKind::Reference { .. } => "tanh",
        }
    }

    /// Byte tag used in cache and model headers; 0 is reserved for "no node".
    pub fn code(&self) -> u8 {
        match self {
            NodeKind::Stno(_) => 1,
            NodeKind::Reference { .. } => 2,
        }
    }

    /// Parameters in a fixed order, for file headers and hashing.
    pub fn params(&self) -> Vec<f64> {
        match *self {
            NodeKind::Stno(p) => vec![p.dt, p.t_relax, p.i_dc, p.i_c, p.r_dc, p.c, p.input_gain],
            NodeKind::Reference { gain, leak } => vec![gain, leak],
        }
    }

    pub fn from_parts(code: u8, params: &[f64]) -> Result<Self> {
        match (code, params) {
            (1, &[dt, t_relax, i_dc, i_c, r_dc, c, input_gain]) => {
                Ok(NodeKind::Stno(StnoParams { dt, t_relax, i_dc, i_c, r_dc, c, input_gain }))
            }
            (2, &[gain, leak]) => Ok(NodeKind::Reference { gain, leak }),
            _ => Err(Error::InvalidArgument(format!("node code {code} with {} parameters", params.len()))),
        }
    }

    pub fn validate(&self, allow_slow_sampling: bool) -> Result<()> {
        match *self {
            NodeKind::Stno(p) => p.validate(allow_slow_sampling),
            NodeKind::Reference { gain, leak } => {
                if !gain.is_finite() || !(0.0..=1.0).contains(&leak) {
                    return Err(Error::Config(format!("tanh node gain {gain}, leak {leak}")));
                }
                Ok(())
            }
        }
    }

    pub fn initial_state(&self) -> f64 {
        match self {
            NodeKind::Stno(p) => p.v0(),
            NodeKind::Reference { .. } => 0.0,
        }
    }

    /// Returns a copy whose input scaling maps `max_abs` to full drive.
    pub fn calibrated(&self, max_abs: f64) -> Result<Self> {
        if !(max_abs.is_finite() && max_abs > 0.0) {
            return Err(Error::Numerical(format!("cannot calibrate input gain from max |masked input| = {max_abs}")));
        }
        Ok(match *self {
            NodeKind::Stno(p) => NodeKind::Stno(StnoParams { input_gain: DRIVE_MA / max_abs, ..p }),
            NodeKind::Reference { gain, leak } => NodeKind::Reference { gain: gain / max_abs, leak },
        })
    }

    /// Runs one digit from the reset state.
    pub fn run(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            NodeKind::Stno(ref p) => stno_run(x, p, p.v0()),
            NodeKind::Reference { gain, leak } => {
                node_run_reference(x, gain, leak.clamp(0.0, 1.0), 0.0).expect("leak clamped")
            }
        }
    }
}

/// Virtual neuron responses of one digit, `N_theta x N_tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronStates {
    pub values: DMatrix<f64>,
    pub clip_id: String,
}

impl NeuronStates {
    pub fn n_theta(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_tau(&self) -> usize {
        self.values.ncols()
    }
}

/// `M * X` flattened so that theta varies fastest within each frame.
pub fn mask_and_flatten(x: &FeatureMatrix, m: &BinaryMask) -> Result<Vec<f64>> {
    if m.n_f() != x.n_f() {
        return Err(Error::DimensionMismatch(format!("mask has {} columns, features have {} rows", m.n_f(), x.n_f())));
    }
    // Column-major storage is exactly the required ordering.
    Ok((&m.entries * &x.values).as_slice().to_vec())
}

pub fn reshape_states(v: &[f64], n_theta: usize, n_tau: usize, clip_id: &str) -> Result<NeuronStates> {
    if v.len() != n_theta * n_tau {
        return Err(Error::DimensionMismatch(format!("{} states cannot be reshaped to {n_theta} x {n_tau}", v.len())));
    }
    Ok(NeuronStates { values: DMatrix::from_column_slice(n_theta, n_tau, v), clip_id: clip_id.to_string() })
}

/// Largest `|M * X|` entry over a set of feature matrices.
pub fn max_masked_abs(mask: &BinaryMask, features: &[FeatureMatrix]) -> Result<f64> {
    let mut mx = 0.0f64;
    for f in features {
        for v in mask_and_flatten(f, mask)? {
            mx = mx.max(v.abs());
        }
    }
    Ok(mx)
}

/// Mask plus node: maps a feature matrix to its neuron states.
#[derive(Debug, Clone)]
pub struct Reservoir {
    pub mask: BinaryMask,
    pub node: NodeKind,
}

impl Reservoir {
    pub fn new(mask: BinaryMask, node: NodeKind) -> Self {
        Self { mask, node }
    }

    /// Sets the node input scaling from the corpus-wide maximum masked value.
    pub fn calibrate(&mut self, features: &[FeatureMatrix]) -> Result<f64> {
        let mx = max_masked_abs(&self.mask, features)?;
        self.node = self.node.calibrated(mx)?;
        Ok(mx)
    }

    pub fn n_theta(&self) -> usize {
        self.mask.n_theta()
    }

    pub fn transform(&self, x: &FeatureMatrix) -> Result<NeuronStates> {
        let flat = mask_and_flatten(x, &self.mask)?;
        let v = self.node.run(&flat);
        if v.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numerical(format!("non-finite neuron state for `{}`", x.clip_id)));
        }
        reshape_states(&v, self.n_theta(), x.n_tau(), &x.clip_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::FilterKind;
    use proptest::prelude::*;

    fn feat(values: DMatrix<f64>) -> FeatureMatrix {
        FeatureMatrix { values, kind: FilterKind::SpectroReal, clip_id: "c".into(), degenerate: false }
    }

    #[test]
    fn flatten_example() {
        let m = BinaryMask { entries: DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]), seed: 0 };
        let x = feat(DMatrix::identity(2, 2));
        assert_eq!(mask_and_flatten(&x, &m).unwrap(), vec![1.0, -1.0, -1.0, 1.0]);
        let z = feat(DMatrix::zeros(2, 3));
        assert!(mask_and_flatten(&z, &m).unwrap().iter().all(|&v| v == 0.0));
        let bad = feat(DMatrix::zeros(3, 3));
        assert!(mask_and_flatten(&bad, &m).is_err());
    }

    #[test]
    fn flatten_ordering() {
        let m = gen_mask(1, 400, 4);
        let x = feat(DMatrix::from_fn(4, 50, |r, c| (r * 50 + c) as f64));
        let flat = mask_and_flatten(&x, &m).unwrap();
        assert_eq!(flat.len(), 20000);
        let mx = &m.entries * &x.values;
        assert_eq!(flat[7 * 400 + 13], mx[(13, 7)]);
    }

    #[test]
    fn reshape_example() {
        let s = reshape_states(&[1.0, -1.0, -1.0, 1.0], 2, 2, "a").unwrap();
        assert_eq!(s.values, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert!(reshape_states(&[0.0; 5], 2, 2, "a").is_err());
    }

    #[test]
    fn calibration_maps_peak_to_drive() {
        let m = gen_mask(3, 20, 5);
        let fs = vec![feat(DMatrix::from_fn(5, 7, |r, c| ((r + 2 * c) as f64).sin()))];
        let mut res = Reservoir::new(m, NodeKind::Stno(StnoParams::default()));
        let mx = res.calibrate(&fs).unwrap();
        let NodeKind::Stno(p) = res.node else { unreachable!() };
        assert!((p.input_gain * mx - DRIVE_MA).abs() < 1e-12);
        let s = res.transform(&fs[0]).unwrap();
        assert_eq!((s.n_theta(), s.n_tau()), (20, 7));
        assert!(s.values.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn transform_resets_per_digit() {
        let m = gen_mask(4, 8, 3);
        let res = Reservoir::new(m, NodeKind::Stno(StnoParams::default()));
        let a = feat(DMatrix::from_fn(3, 4, |r, c| (r as f64 - c as f64) * 0.3));
        assert_eq!(res.transform(&a).unwrap(), res.transform(&a).unwrap());
    }

    #[test]
    fn node_roundtrip() {
        for n in [NodeKind::Stno(StnoParams::default()), NodeKind::Reference { gain: 2.0, leak: 0.5 }] {
            assert_eq!(NodeKind::from_parts(n.code(), &n.params()).unwrap(), n);
        }
        assert!(NodeKind::from_parts(1, &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn flatten_reshape_inverse(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>()) {
            let a = DMatrix::from_fn(rows, cols, |r, c| ((seed % 97) as f64 + r as f64 * 1.7 - c as f64).cos());
            let back = reshape_states(a.as_slice(), rows, cols, "p").unwrap();
            prop_assert_eq!(back.values, a);
        }
    }
}
