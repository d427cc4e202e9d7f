//! Rademacher probe ensembles and Hutchinson trace estimation.
//!
//! Probe column `j` is drawn from its own ChaCha stream keyed by
//! `(seed, j)`, so enlarging an ensemble leaves earlier columns untouched.

use crate::par;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default probe count.
pub const DEFAULT_SAA_COUNT: usize = 72;

/// What the presolved columns hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresolveMode {
    /// `W^{-T} v_j` with `A = W W^T`.
    Symmetrized,
    /// `A^{-1} v_j`.
    Unsymmetrized,
}

/// `S` probe vectors of length `n` with entries in `{-1, +1}`.
#[derive(Clone, Debug)]
pub struct SaaEnsemble {
    pub n: usize,
    pub seed: u64,
    columns: Vec<Vec<f64>>,
    pub presolved: Option<(PresolveMode, Vec<Vec<f64>>)>,
}

fn draw_column(n: usize, seed: u64, j: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(j as u64);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let bits: u64 = rng.random();
        for b in 0..64.min(n - out.len()) {
            out.push(if (bits >> b) & 1 == 1 { 1.0 } else { -1.0 });
        }
    }
    out
}

/// Draws `s` Rademacher probes of length `n`.
pub fn draw_saa(n: usize, s: usize, seed: u64) -> SaaEnsemble {
    SaaEnsemble {
        n,
        seed,
        columns: par::map_indices(s, |j| draw_column(n, seed, j)),
        presolved: None,
    }
}

impl SaaEnsemble {
    pub fn count(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Grows the ensemble to `total` columns; existing columns are kept and
    /// any presolved data is dropped.
    pub fn augment(&mut self, total: usize) {
        let (n, seed, have) = (self.n, self.seed, self.count());
        if total > have {
            let extra = par::map_indices(total - have, |k| draw_column(n, seed, have + k));
            self.columns.extend(extra);
        }
        self.presolved = None;
    }

    /// The first `s` columns.
    pub fn truncated(&self, s: usize) -> SaaEnsemble {
        SaaEnsemble {
            n: self.n,
            seed: self.seed,
            columns: self.columns[..s.min(self.count())].to_vec(),
            presolved: None,
        }
    }
}

/// Per-probe quadratic forms `v_j^T A v_j`.
pub fn hutchinson_samples<F>(apply: F, ens: &SaaEnsemble) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync + Send,
{
    par::map_slice(ens.columns(), |v| {
        apply(v).iter().zip(v).map(|(a, b)| a * b).sum()
    })
}

/// `S^{-1} sum_j v_j^T A v_j`.
pub fn hutchinson_trace<F>(apply: F, ens: &SaaEnsemble) -> f64
where
    F: Fn(&[f64]) -> Vec<f64> + Sync + Send,
{
    let s = hutchinson_samples(apply, ens);
    s.iter().sum::<f64>() / s.len() as f64
}

/// Variance of `v^T A v` for a Rademacher `v`:
/// `2 (|A|_F^2 - sum_j A_jj^2)` for symmetric `A`. For a general square
/// matrix the symmetric part is used.
pub fn estimate_variance(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut off = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let s = 0.5 * (a[(i, j)] + a[(j, i)]);
                off += s * s;
            }
        }
    }
    2.0 * off
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_and_determinism() {
        let a = draw_saa(100, 10, 5);
        let b = draw_saa(100, 10, 5);
        for j in 0..10 {
            assert_eq!(a.column(j), b.column(j));
            assert!(a.column(j).iter().all(|&x| x == 1.0 || x == -1.0));
            let vv: f64 = a.column(j).iter().map(|x| x * x).sum();
            assert_eq!(vv, 100.0);
        }
        assert_ne!(a.column(0), a.column(1));
    }

    #[test]
    fn augmentation_keeps_columns() {
        let mut a = draw_saa(37, 5, 1);
        let first = a.columns().to_vec();
        a.augment(25);
        assert_eq!(a.count(), 25);
        assert_eq!(&a.columns()[..5], &first[..]);
        assert_eq!(draw_saa(37, 25, 1).columns(), a.columns());
        assert_eq!(a.truncated(5).columns(), &first[..]);
    }

    #[test]
    fn exact_for_diagonal_operators() {
        let ens = draw_saa(40, 7, 3);
        let t = hutchinson_trace(|v| v.to_vec(), &ens);
        assert_eq!(t, 40.0);
        let d: Vec<f64> = (0..40).map(|i| i as f64 * 0.5 - 3.0).collect();
        let t = hutchinson_trace(|v| v.iter().zip(&d).map(|(a, b)| a * b).collect(), &ens);
        assert!((t - d.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn variance_formula_small_cases() {
        assert_eq!(
            estimate_variance(&DMatrix::from_diagonal_element(3, 3, 2.0)),
            0.0
        );
        assert_eq!(estimate_variance(&DMatrix::from_element(2, 2, 1.0)), 4.0);
    }
}
