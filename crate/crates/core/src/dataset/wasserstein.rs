//! Closed-form L²-Wasserstein distance between 1-D empirical distributions.

use serde::{Deserialize, Serialize};

use crate::analysis::PelletClass;
use crate::error::{Error, Result};

/// Per-image values of one class fraction: an empirical distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFractionSample {
    pub class: PelletClass,
    pub values: Vec<f64>,
}

impl ClassFractionSample {
    pub fn w2(&self, other: &ClassFractionSample) -> Result<f64> {
        wasserstein2_1d(&self.values, &other.values)
    }
}

/// W2 between the empirical distributions of `a` and `b`.
///
/// In one dimension the optimal transport map is the monotone rearrangement,
/// so W2² is the integral over `u ∈ [0, 1]` of the squared difference of the
/// two quantile functions. Both are step functions with breaks at `i/n` and
/// `j/m`; the integral is summed exactly over the merged breakpoints.
pub fn wasserstein2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("wasserstein sample is empty"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as u64, ys.len() as u64);
    // Positions along [0, 1] in units of 1 / (n m).
    let (mut i, mut j) = (0u64, 0u64);
    let mut prev = 0u64;
    let mut acc = 0.0f64;
    while i < n && j < m {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        let d = xs[i as usize] - ys[j as usize];
        acc += d * d * (next - prev) as f64;
        prev = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok((acc / (n * m) as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        assert_eq!(wasserstein2_1d(&[0.3, 0.1, 0.2], &[0.2, 0.3, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn point_masses() {
        assert!((wasserstein2_1d(&[0.2], &[0.5]).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn two_atoms() {
        let w = wasserstein2_1d(&[0.0, 1.0], &[0.0, 2.0]).unwrap();
        assert!((w - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unequal_sizes() {
        // {0} vs {0, 1}: half the mass moves by 1.
        let w = wasserstein2_1d(&[0.0], &[0.0, 1.0]).unwrap();
        assert!((w - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_sample() {
        assert!(matches!(wasserstein2_1d(&[], &[1.0]), Err(Error::EmptyInput(_))));
    }
}
