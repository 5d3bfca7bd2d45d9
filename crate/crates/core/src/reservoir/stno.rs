use crate::{Error, Result};

/// Drive current that the corpus-wide maximum masked value is mapped to.
pub const DRIVE_MA: f64 = 3.0;

/// Constants of the relaxation model of the oscillator amplitude.
///
/// Currents are in milliamperes and `r_dc` in kiloohms, so `v_in / r_dc` is
/// also a current in mA. `input_gain` converts a masked feature value straight
/// into that drive current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StnoParams {
    /// Virtual neuron spacing in seconds.
    pub dt: f64,
    /// Amplitude relaxation time in seconds.
    pub t_relax: f64,
    pub i_dc: f64,
    pub i_c: f64,
    pub r_dc: f64,
    pub c: f64,
    pub input_gain: f64,
}

impl Default for StnoParams {
    fn default() -> Self {
        Self { dt: 5e-9, t_relax: 410e-9, i_dc: 6.0, i_c: 4.9, r_dc: 1.0, c: 1.0, input_gain: 1.0 }
    }
}

impl StnoParams {
    /// Checks the physical constraints. `dt >= t_relax` is rejected unless
    /// `allow_slow_sampling` is set.
    pub fn validate(&self, allow_slow_sampling: bool) -> Result<()> {
        let all = [self.dt, self.t_relax, self.i_dc, self.i_c, self.r_dc, self.c, self.input_gain];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("stno parameters must be finite".into()));
        }
        if self.dt <= 0.0 || self.t_relax <= 0.0 {
            return Err(Error::Config("stno dt and t_relax must be positive".into()));
        }
        if self.i_dc <= self.i_c {
            return Err(Error::Config(format!(
                "stno i_dc ({}) must exceed i_c ({}) for auto-oscillation",
                self.i_dc, self.i_c
            )));
        }
        if self.r_dc <= 0.0 || self.c <= 0.0 {
            return Err(Error::Config("stno r_dc and c must be positive".into()));
        }
        if self.dt >= self.t_relax && !allow_slow_sampling {
            return Err(Error::Config(format!(
                "stno dt ({:e} s) must be shorter than t_relax ({:e} s)",
                self.dt, self.t_relax
            )));
        }
        Ok(())
    }

    /// Per-step memory factor `exp(-dt / t_relax)`.
    pub fn decay(&self) -> f64 {
        (-self.dt / self.t_relax).exp()
    }

    /// Steady amplitude for a drive voltage; zero below threshold.
    pub fn v_inf(&self, v_in: f64) -> f64 {
        self.c * (self.i_dc - v_in / self.r_dc - self.i_c).max(0.0).sqrt()
    }

    /// Zero-input steady amplitude, used as the state at every digit start.
    pub fn v0(&self) -> f64 {
        self.v_inf(0.0)
    }
}

pub fn stno_step(v_prev: f64, v_in: f64, p: &StnoParams) -> f64 {
    let d = p.decay();
    p.v_inf(v_in) * (1.0 - d) + v_prev * d
}

/// Runs the node over a masked input sequence. Each `x_i` is scaled by
/// `input_gain` into a drive current.
pub fn stno_run(x: &[f64], p: &StnoParams, v0: f64) -> Vec<f64> {
    let d = p.decay();
    let mut v = v0;
    x.iter()
        .map(|&xi| {
            let v_in = p.input_gain * xi * p.r_dc;
            v = p.v_inf(v_in) * (1.0 - d) + v * d;
            v
        })
        .collect()
}

/// Leaky tanh node used to cross-check that harness conclusions do not
/// depend on the oscillator model.
pub fn node_run_reference(x: &[f64], gain: f64, leak: f64, v0: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&leak) {
        return Err(Error::InvalidArgument(format!("leak {leak} outside [0, 1]")));
    }
    let mut v = v0;
    Ok(x.iter()
        .map(|&xi| {
            v = (1.0 - leak) * v + leak * (gain * xi).tanh();
            v
        })
        .collect())
}
