//! Exact GP simulation and nearest-neighbour kriging.

use crate::error::{Error, Result};
use crate::kernels::{cov_matrix, KernelModel, NoiseDiagParams};
use crate::model::ModelParams;
use crate::points::{dist2, Points};
use crate::solver::{check_dense, dense_factor, FactorHandle};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug, PartialEq)]
pub struct SimSpec {
    pub n: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub params: ModelParams,
    pub seed: u64,
    pub replicates: usize,
}

impl SimSpec {
    /// `n` points in the unit square.
    pub fn unit_square(n: usize, params: ModelParams, seed: u64) -> Self {
        Self {
            n,
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
            params,
            seed,
            replicates: 1,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::Config(
                "domain bounds must be non-empty and of equal length".into(),
            ));
        }
        if self.lower.iter().zip(&self.upper).any(|(a, b)| !(b > a)) {
            return Err(Error::Config("domain must have positive volume".into()));
        }
        self.params.validate()
    }

    /// Independent seed of replicate `r`.
    pub fn replicate_seed(&self, r: usize) -> u64 {
        replicate_seed(self.seed, r)
    }
}

/// Derives the seed of replicate `r` from a master seed.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(1_000_003 + r as u64);
    rng.random()
}

/// I.i.d. uniform locations over the spec's box.
pub fn sample_locations(spec: &SimSpec, seed: u64) -> Result<Points> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim();
    let mut coords = Vec::with_capacity(spec.n * d);
    for _ in 0..spec.n {
        for k in 0..d {
            let u: f64 = rng.random();
            coords.push(spec.lower[k] + u * (spec.upper[k] - spec.lower[k]));
        }
    }
    Points::new(d, coords)
}

fn normals(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// A draw `(y, z)` with `z = chol(S) g1` and `y = z + R^{1/2} g2`.
pub fn sample_gp(
    kernel: &KernelModel<f64>,
    noise: &NoiseDiagParams<f64>,
    locs: &Points,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    kernel.validate()?;
    noise.validate()?;
    let n = locs.len();
    check_dense(n, false)?;
    let l = match dense_factor(cov_matrix(kernel, locs, None)?)? {
        FactorHandle::Dense { l } => l,
        FactorHandle::Sparse(_) => unreachable!("dense_factor returns a dense handle"),
    };
    let g1 = DVector::from_vec(normals(seed, 0, n));
    let z = (&l * g1).as_slice().to_vec();
    let g2 = normals(seed, 1, n);
    let r = noise.diagonal(locs);
    let y = z
        .iter()
        .zip(&g2)
        .zip(&r)
        .map(|((z, g), r)| z + r.sqrt() * g)
        .collect();
    Ok((y, z))
}

/// Indices of the `k` points nearest to `x` (ties by index).
pub fn nearest_indices(locs: &Points, x: &[f64], k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = locs
        .iter()
        .enumerate()
        .map(|(i, p)| (dist2(p, x), i))
        .collect();
    let k = k.min(all.len());
    if k < all.len() {
        all.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().map(|(_, i)| i).collect()
}

/// Kriging prediction of the latent process at `x_star` from the `k` nearest
/// observations: `(mean, variance)`, with the nugget excluded from the
/// target's variance.
pub fn predict_nn(
    kernel: &KernelModel<f64>,
    noise: &NoiseDiagParams<f64>,
    locs: &Points,
    y: &[f64],
    x_star: &[f64],
    k: usize,
) -> Result<(f64, f64)> {
    if y.len() != locs.len() {
        return Err(Error::DimensionMismatch {
            expected: locs.len(),
            got: y.len(),
        });
    }
    if x_star.len() != locs.dim() {
        return Err(Error::DimensionMismatch {
            expected: locs.dim(),
            got: x_star.len(),
        });
    }
    if k == 0 || k > locs.len() {
        return Err(Error::Config(format!("k must lie in 1..={}", locs.len())));
    }
    kernel.validate()?;
    noise.validate()?;
    let idx = nearest_indices(locs, x_star, k);
    let nb = locs.select(&idx);
    let mut c = cov_matrix(kernel, &nb, None)?;
    for (i, r) in noise.diagonal(&nb).into_iter().enumerate() {
        c[(i, i)] += r;
    }
    let f = dense_factor(c)?;
    let target = Points::new(locs.dim(), x_star.to_vec())?;
    let k_star = cov_matrix(kernel, &nb, Some(&target))?;
    let k_star: Vec<f64> = k_star.column(0).iter().copied().collect();
    let y_nb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let w = f.solve(&y_nb);
    let mean = k_star.iter().zip(&w).map(|(a, b)| a * b).sum();
    let explained: f64 = k_star
        .iter()
        .zip(f.solve(&k_star))
        .map(|(a, b)| a * b)
        .sum();
    let prior = kernel.cov(x_star, x_star)?;
    Ok((mean, (prior - explained).max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::MaternIsoParams;

    #[test]
    fn nearest_indices_sorted() {
        let locs = Points::new(1, vec![0.0, 0.5, 0.2, 0.9, 0.21]).unwrap();
        assert_eq!(nearest_indices(&locs, &[0.2], 3), vec![2, 4, 0]);
        assert_eq!(nearest_indices(&locs, &[0.2], 10).len(), 5);
    }

    #[test]
    fn replicate_seeds_differ() {
        assert_ne!(replicate_seed(1, 0), replicate_seed(1, 1));
        assert_eq!(replicate_seed(1, 3), replicate_seed(1, 3));
    }

    #[test]
    fn single_point_prediction_is_shrunk_observation() {
        let k = KernelModel::MaternIso(MaternIsoParams {
            sigma2: 3.0,
            rho: 0.1,
            nu: 0.5,
        });
        let locs = Points::new(2, vec![0.3, 0.3]).unwrap();
        let noise = NoiseDiagParams::Constant { eta2: 1.0 };
        let (m, v) = predict_nn(&k, &noise, &locs, &[2.0], &[0.3, 0.3], 1).unwrap();
        assert!((m - 1.5).abs() < 1e-14);
        assert!((v - 0.75).abs() < 1e-14);
    }
}
