//! Linear readout trained by pseudo-inverse, winner-takes-all decisions and
//! the WSR/MSE metrics.

use nalgebra::{DMatrix, DVector};

use crate::filterbank::FilterKind;
use crate::{Error, Result, N_DIGITS};

/// One-hot target repeated over every frame of a digit.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    pub values: DMatrix<f64>,
    pub digit: u8,
}

pub fn build_targets(digit: u8, n_tau: usize) -> Result<TargetMatrix> {
    if digit as usize >= N_DIGITS {
        return Err(Error::InvalidArgument(format!("digit {digit} out of range")));
    }
    if n_tau == 0 {
        return Err(Error::InvalidArgument("target needs at least one frame".into()));
    }
    let mut values = DMatrix::zeros(N_DIGITS, n_tau);
    values.row_mut(digit as usize).fill(1.0);
    Ok(TargetMatrix { values, digit })
}

pub fn one_hot(digit: u8) -> DVector<f64> {
    let mut t = DVector::zeros(N_DIGITS);
    t[digit as usize] = 1.0;
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Singular values below `rtol * sigma_max` are treated as zero.
    pub rtol: f64,
    /// Tikhonov term added to the squared singular values; 0 gives the plain
    /// pseudo-inverse.
    pub ridge: f64,
    /// Append a constant-1 virtual neuron.
    pub bias: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, ridge: 0.0, bias: false }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol.is_finite() && self.rtol >= 0.0) {
            return Err(Error::Config(format!("readout rtol {} must be finite and >= 0", self.rtol)));
        }
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::Config(format!("readout ridge {} must be finite and >= 0", self.ridge)));
        }
        Ok(())
    }
}

/// Trained `N_d x N_theta` weights (one extra column with the bias row).
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    pub w: DMatrix<f64>,
    pub options: SolverOptions,
    /// Bit k set when subset k was in the training pool.
    pub train_mask: u16,
    /// Node tag, 0 for the filter-only classifier.
    pub node_code: u8,
    pub filter: FilterKind,
}

impl ReadoutModel {
    /// Number of state rows the model expects (without the bias row).
    pub fn n_inputs(&self) -> usize {
        self.w.ncols() - usize::from(self.options.bias)
    }
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} contains non-finite values")))
    }
}

fn with_bias_row(v: &DMatrix<f64>) -> DMatrix<f64> {
    v.clone().insert_row(v.nrows(), 1.0)
}

/// SVD pseudo-inverse with a relative singular-value cutoff.
pub fn pinv(v: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    ridge_pinv(v, rtol, 0.0)
}

fn ridge_pinv(v: &DMatrix<f64>, rtol: f64, ridge: f64) -> Result<DMatrix<f64>> {
    check_finite(v, "state matrix")?;
    let svd = v.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = rtol * smax;
    let inv = svd.singular_values.map(|s| if s <= cut || s == 0.0 { 0.0 } else { s / (s * s + ridge) });
    // pinv = V_t^T * diag(inv) * U^T
    let mut scaled = vt.transpose();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= inv[j];
    }
    Ok(scaled * u.transpose())
}

/// `W = T * pinv(V)`, the minimum-norm least-squares solution of `W V = T`.
pub fn pinv_solve(t: &DMatrix<f64>, v: &DMatrix<f64>, options: &SolverOptions) -> Result<DMatrix<f64>> {
    if t.ncols() != v.ncols() {
        return Err(Error::DimensionMismatch(format!("targets have {} columns, states {}", t.ncols(), v.ncols())));
    }
    let v = if options.bias { with_bias_row(v) } else { v.clone() };
    let w = t * ridge_pinv(&v, options.rtol, options.ridge)?;
    check_finite(&w, "readout weights")?;
    Ok(w)
}

/// Trains on explicitly stacked blocks `[V_1 ... V_N]` and `[T_1 ... T_N]`.
pub fn train_pinv(states: &[&DMatrix<f64>], targets: &[TargetMatrix], options: &SolverOptions) -> Result<ReadoutModel> {
    if states.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if states.len() != targets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} state blocks, {} target blocks",
            states.len(),
            targets.len()
        )));
    }
    let n_rows = states[0].nrows();
    let mut total = 0;
    for (s, t) in states.iter().zip(targets) {
        if s.nrows() != n_rows || s.ncols() != t.values.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "state block {}x{} against target block with {} columns",
                s.nrows(),
                s.ncols(),
                t.values.ncols()
            )));
        }
        total += s.ncols();
    }
    let mut v = DMatrix::zeros(n_rows, total);
    let mut t = DMatrix::zeros(N_DIGITS, total);
    let mut at = 0;
    for (s, tm) in states.iter().zip(targets) {
        v.columns_mut(at, s.ncols()).copy_from(*s);
        t.columns_mut(at, s.ncols()).copy_from(&tm.values);
        at += s.ncols();
    }
    Ok(ReadoutModel {
        w: pinv_solve(&t, &v, options)?,
        options: *options,
        train_mask: 0,
        node_code: 0,
        filter: FilterKind::SpectroReal,
    })
}

/// Folding buffered rows into the factor happens once this many are queued.
const COMPACT_ROWS: usize = 1024;

/// Least-squares factor of the stacked training data: with every state
/// block transposed and stacked as `A = [V_1^T; V_2^T; ...]` and the targets
/// as `B`, keeps `R` and `Z = Q^T B` from `A = Q R`.
///
/// Solving on `R` keeps the conditioning of `V` instead of squaring it as
/// the normal equations would. Accumulators merge by stacking factors, so
/// per-subset factors can be combined into any fold.
#[derive(Debug, Clone)]
pub struct QrAccumulator {
    r: DMatrix<f64>,
    z: DMatrix<f64>,
    pending: Vec<(DMatrix<f64>, DMatrix<f64>)>,
    pending_rows: usize,
    dim: usize,
    pub n_digits: usize,
    pub bias: bool,
}

impl QrAccumulator {
    pub fn new(n_rows: usize, bias: bool) -> Self {
        let dim = n_rows + usize::from(bias);
        Self {
            r: DMatrix::zeros(0, dim),
            z: DMatrix::zeros(0, N_DIGITS),
            pending: Vec::new(),
            pending_rows: 0,
            dim,
            n_digits: 0,
            bias,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn push(&mut self, a: DMatrix<f64>, b: DMatrix<f64>) {
        self.pending_rows += a.nrows();
        self.pending.push((a, b));
        if self.pending_rows >= COMPACT_ROWS.max(4 * self.dim) {
            self.compact();
        }
    }

    pub fn add(&mut self, v: &DMatrix<f64>, digit: u8) -> Result<()> {
        if digit as usize >= N_DIGITS {
            return Err(Error::InvalidArgument(format!("digit {digit} out of range")));
        }
        let aug;
        let v = if self.bias {
            aug = with_bias_row(v);
            &aug
        } else {
            v
        };
        if v.nrows() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "state block has {} rows, accumulator expects {}",
                v.nrows(),
                self.dim
            )));
        }
        check_finite(v, "state block")?;
        let mut b = DMatrix::zeros(v.ncols(), N_DIGITS);
        b.column_mut(digit as usize).fill(1.0);
        self.push(v.transpose(), b);
        self.n_digits += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &QrAccumulator) -> Result<()> {
        if other.dim != self.dim || other.bias != self.bias {
            return Err(Error::DimensionMismatch("accumulators of different shape".into()));
        }
        if other.r.nrows() > 0 {
            self.push(other.r.clone(), other.z.clone());
        }
        for (a, b) in &other.pending {
            self.push(a.clone(), b.clone());
        }
        self.n_digits += other.n_digits;
        Ok(())
    }

    /// Folds every buffered block into the triangular factor.
    pub fn compact(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let rows = self.r.nrows() + self.pending_rows;
        let mut a = DMatrix::zeros(rows, self.dim);
        let mut b = DMatrix::zeros(rows, N_DIGITS);
        a.rows_mut(0, self.r.nrows()).copy_from(&self.r);
        b.rows_mut(0, self.r.nrows()).copy_from(&self.z);
        let mut at = self.r.nrows();
        for (pa, pb) in self.pending.drain(..) {
            a.rows_mut(at, pa.nrows()).copy_from(&pa);
            b.rows_mut(at, pb.nrows()).copy_from(&pb);
            at += pa.nrows();
        }
        self.pending_rows = 0;
        let qr = a.qr();
        qr.q_tr_mul(&mut b);
        let k = rows.min(self.dim);
        self.r = qr.r();
        self.z = b.rows(0, k).into_owned();
    }

    /// `W = (pinv(R) Z)^T`, identical to `T * pinv(V)` on the stacked data.
    pub fn solve(&self, options: &SolverOptions) -> Result<DMatrix<f64>> {
        if self.n_digits == 0 {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        if options.bias != self.bias {
            return Err(Error::InvalidArgument("bias flag differs from accumulator".into()));
        }
        let mut full = self.clone();
        full.compact();
        let w = (ridge_pinv(&full.r, options.rtol, options.ridge)? * &full.z).transpose();
        check_finite(&w, "readout weights")?;
        Ok(w)
    }
}

/// Frame-averaged readout output from the row sums of a state block.
pub fn predict_from_sums(model: &ReadoutModel, sums: &DVector<f64>, n_tau: usize) -> Result<DVector<f64>> {
    if sums.len() != model.n_inputs() {
        return Err(Error::DimensionMismatch(format!("model expects {} rows, got {}", model.n_inputs(), sums.len())));
    }
    if n_tau == 0 {
        return Err(Error::InvalidArgument("state block has no frames".into()));
    }
    let nt = n_tau as f64;
    let mut t = model.w.columns(0, sums.len()) * sums / nt;
    if model.options.bias {
        t += model.w.column(sums.len());
    }
    Ok(t)
}

/// `t_hat = mean over frames of W * V`.
pub fn predict(model: &ReadoutModel, v: &DMatrix<f64>) -> Result<DVector<f64>> {
    predict_from_sums(model, &v.column_sum(), v.ncols())
}

/// Winner-takes-all; ties go to the lowest index.
pub fn classify(t_hat: &DVector<f64>) -> u8 {
    let mut best = 0;
    for (i, &v) in t_hat.iter().enumerate() {
        if v > t_hat[best] {
            best = i;
        }
    }
    best as u8
}

pub fn score_wsr(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions, {} labels", predictions.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

pub fn score_mse(estimates: &[DVector<f64>], targets: &[DVector<f64>]) -> Result<f64> {
    if estimates.len() != targets.len() || estimates.is_empty() {
        return Err(Error::DimensionMismatch(format!("{} estimates, {} targets", estimates.len(), targets.len())));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for (e, t) in estimates.iter().zip(targets) {
        if e.len() != t.len() {
            return Err(Error::DimensionMismatch("estimate and target lengths differ".into()));
        }
        acc += (e - t).norm_squared();
        count += e.len();
    }
    Ok(acc / count as f64)
}

/// Aggregate scores over cross-validation folds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub wsr: f64,
    pub mse: f64,
    pub wsr_std: f64,
    pub mse_std: f64,
    /// Mean test MSE over mean train MSE of the same run.
    pub overfit_ratio: f64,
}

/// Mean and sample standard deviation (n - 1); std is 0 for a single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
