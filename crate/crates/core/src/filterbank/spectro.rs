//! Spectrogram-family maps: max-abs normalization, the signed real exponent
//! and the sin/cos "HP" map.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: DMatrix<f64>,
    /// Set when the input was all zeros; `values` is then all zeros too.
    pub degenerate: bool,
}

/// Divides by the largest magnitude so that the extremal entry becomes
/// exactly +1 or -1.
pub fn normalize_maxabs(z: &DMatrix<f64>) -> Normalized {
    let peak = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Normalized { values: DMatrix::zeros(z.nrows(), z.ncols()), degenerate: true };
    }
    // Division (not multiplication by a reciprocal) keeps z/peak == ±1 exact.
    Normalized { values: z.map(|v| v / peak), degenerate: false }
}

/// Splits `alpha = n + eps` with integer `n` and `eps` in `(-0.5, 0.5]`.
pub fn split_exponent(alpha: f64) -> (f64, f64) {
    let n = (alpha - 0.5).ceil();
    (n, alpha - n)
}

/// Real part of `x^alpha` on the principal branch, written as
/// `|x|^alpha * (-1)^n * cos(pi * eps)` for negative `x`.
pub fn exponent_pow(x: f64, alpha: f64) -> f64 {
    if alpha == 0.0 {
        return 1.0;
    }
    if x >= 0.0 {
        return x.powf(alpha);
    }
    let (n, eps) = split_exponent(alpha);
    let sign = if n.rem_euclid(2.0) == 0.0 { 1.0 } else { -1.0 };
    let phase = if eps == 0.0 {
        1.0
    } else if eps == 0.5 {
        0.0
    } else {
        (PI * eps).cos()
    };
    (-x).powf(alpha) * sign * phase
}

/// Elementwise [`exponent_pow`].
pub fn exponent_transform(x: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("exponent {alpha} is not finite")));
    }
    Ok(x.map(|v| exponent_pow(v, alpha)))
}

/// `|sin sqrt|Re z|| - |cos sqrt|Im z||` after scaling real and imaginary
/// parts jointly by their largest magnitude.
pub fn spectro_hp(z: &DMatrix<Complex64>) -> Result<DMatrix<f64>> {
    if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::InvalidArgument("non-finite spectrum".into()));
    }
    let peak = z.iter().fold(0.0f64, |m, v| m.max(v.re.abs()).max(v.im.abs()));
    let scale = if peak > 0.0 { peak } else { 1.0 };
    Ok(z.map(|v| hp_map(v.re / scale, v.im / scale)))
}

pub(crate) fn hp_map(re: f64, im: f64) -> f64 {
    re.abs().sqrt().sin().abs() - im.abs().sqrt().cos().abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        let n = normalize_maxabs(&DMatrix::from_row_slice(1, 2, &[2.0, -4.0]));
        assert_eq!(n.values, DMatrix::from_row_slice(1, 2, &[0.5, -1.0]));
        assert!(!n.degenerate);
        let z = normalize_maxabs(&DMatrix::zeros(3, 2));
        assert!(z.degenerate);
        assert!(z.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exponent_examples() {
        let x = DMatrix::from_row_slice(1, 5, &[-1.0, -0.3, 0.0, 0.4, 1.0]);
        assert_eq!(exponent_transform(&x, 1.0).unwrap(), x);
        assert!(exponent_transform(&x, 0.0).unwrap().iter().all(|&v| v == 1.0));
        assert_eq!(exponent_pow(-0.5, 2.5), 0.0);
        assert_eq!(exponent_pow(-1.0, 3.0), -1.0);
        assert_eq!(exponent_pow(0.0, 0.7), 0.0);
        assert!(exponent_transform(&x, f64::NAN).is_err());
        assert!(exponent_transform(&x, f64::INFINITY).is_err());
    }

    #[test]
    fn split_boundaries() {
        assert_eq!(split_exponent(2.5), (2.0, 0.5));
        assert_eq!(split_exponent(1.5), (1.0, 0.5));
        assert_eq!(split_exponent(2.0), (2.0, 0.0));
        let (n, e) = split_exponent(1.6);
        assert_eq!(n, 2.0);
        assert!((e + 0.4).abs() < 1e-15);
        let (n, e) = split_exponent(-0.2);
        assert_eq!(n, 0.0);
        assert!((e + 0.2).abs() < 1e-15);
    }

    #[test]
    fn hp_examples() {
        assert_eq!(hp_map(0.0, 0.0), -1.0);
        assert!((hp_map(1.0, 0.0) - (1f64.sin() - 1.0)).abs() < 1e-15);
        assert!((hp_map(1.0, 0.0) + 0.158529).abs() < 1e-6);
        let z = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        assert!(spectro_hp(&z).unwrap().iter().all(|&v| v == -1.0));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
            prop_assume!(v.iter().any(|&x| x != 0.0));
            let m = DMatrix::from_vec(1, v.len(), v);
            let once = normalize_maxabs(&m).values;
            prop_assert!(once.iter().any(|&x| x == 1.0 || x == -1.0));
            prop_assert!(once.iter().all(|&x| (-1.0..=1.0).contains(&x)));
            prop_assert_eq!(normalize_maxabs(&once).values, once);
        }

        #[test]
        fn integer_exponent_sign_law(x in -1.0f64..1.0, n in 0u32..12) {
            prop_assume!(x != 0.0);
            let r = exponent_pow(x, f64::from(n));
            let expected_sign = if n % 2 == 0 { 1.0 } else { x.signum() };
            prop_assert!(r == 0.0 || r.signum() == expected_sign);
        }

        #[test]
        fn hp_is_bounded(re in -1e3f64..1e3, im in -1e3f64..1e3) {
            let z = DMatrix::from_element(1, 1, Complex64::new(re, im));
            let v = spectro_hp(&z).unwrap()[(0, 0)];
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }
}
