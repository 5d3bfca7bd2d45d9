use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Fixed `N_theta x N_f` matrix of ±1 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub entries: DMatrix<f64>,
    pub seed: u64,
}

impl BinaryMask {
    pub fn n_theta(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_f(&self) -> usize {
        self.entries.ncols()
    }
}

/// Draws the mask from a ChaCha20 stream keyed by `seed`
/// (`ChaCha20Rng::seed_from_u64`). Entries are filled row by row, one
/// 32-bit word each; the low bit selects +1 (set) or -1 (clear). The stream
/// cipher output is platform independent, so the mask is too.
pub fn gen_mask(seed: u64, n_theta: usize, n_f: usize) -> BinaryMask {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut entries = DMatrix::zeros(n_theta, n_f);
    for r in 0..n_theta {
        for c in 0..n_f {
            entries[(r, c)] = if rng.next_u32() & 1 == 1 { 1.0 } else { -1.0 };
        }
    }
    BinaryMask { entries, seed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_binary() {
        let a = gen_mask(9, 40, 13);
        assert_eq!(a, gen_mask(9, 40, 13));
        assert_ne!(a, gen_mask(10, 40, 13));
        assert!(a.entries.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn balanced_within_three_sigma() {
        let m = gen_mask(2024, 400, 65);
        let n = m.entries.len() as f64;
        let frac = m.entries.iter().filter(|&&v| v == 1.0).count() as f64 / n;
        let sigma = (0.25 / n).sqrt();
        assert!((frac - 0.5).abs() <= 3.0 * sigma, "{frac}");
        assert!((3.0 * sigma - 0.0093).abs() < 1e-4);
    }

    #[test]
    fn pinned_prefix() {
        // Frozen output of the generator; a change here breaks cross-platform reproducibility.
        let m = gen_mask(0, 2, 8);
        let bits: Vec<i8> = m.entries.transpose().iter().map(|&v| v as i8).collect();
        assert_eq!(bits, PINNED_SEED0);
    }

    const PINNED_SEED0: [i8; 16] = [-1, -1, -1, -1, -1, 1, -1, 1, -1, 1, -1, -1, -1, 1, -1, 1];
}
