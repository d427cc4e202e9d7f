//! Dense oracle: exact likelihoods and E-function, for validation at small n.

use super::{dense_factor, factorize, Backend, FactorHandle, PrecisionSystem};
use crate::error::{Error, Result};
use crate::kernels::{cov_matrix, noise_matrix, KernelModel, NoiseDiagParams};
use crate::model::ModelParams;
use crate::points::Points;
use crate::vecchia::{assemble_precision_factor, VecchiaPlan};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, Ordering as AtomicOrdering};

/// Largest `n` accepted by dense computations unless forced.
pub const DENSE_GUARD: usize = 20000;

fn available_memory() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

static FORCE_DENSE: AtomicBool = AtomicBool::new(false);

/// Lifts the dense guard for the whole process.
pub fn set_force_dense(force: bool) {
    FORCE_DENSE.store(force, AtomicOrdering::Relaxed);
}

/// Refuses dense work beyond [`DENSE_GUARD`] or beyond available memory
/// (three `n x n` matrices), unless `force` (or [`set_force_dense`]) is set.
pub fn check_dense(n: usize, force: bool) -> Result<()> {
    if force || FORCE_DENSE.load(AtomicOrdering::Relaxed) {
        return Ok(());
    }
    if n > DENSE_GUARD {
        return Err(Error::DenseGuard {
            n,
            limit: DENSE_GUARD,
        });
    }
    if let Some(avail) = available_memory() {
        let need = 3 * (n as u64) * (n as u64) * 8;
        if need > avail {
            let limit = ((avail / 24) as f64).sqrt() as usize;
            return Err(Error::DenseGuard { n, limit });
        }
    }
    Ok(())
}

/// `(log|A| + u^T A^{-1} u + n log 2 pi) / 2`.
pub fn gaussian_nll(factor: &FactorHandle, u: &[f64]) -> Result<f64> {
    if u.len() != factor.len() {
        return Err(Error::DimensionMismatch {
            expected: factor.len(),
            got: u.len(),
        });
    }
    let x = factor.solve(u);
    let qf: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
    Ok(0.5 * (factor.log_det() + qf + u.len() as f64 * (2.0 * PI).ln()))
}

/// `S + R` as a dense matrix.
pub fn noisy_cov(
    kernel: &KernelModel<f64>,
    noise: &NoiseDiagParams<f64>,
    locs: &Points,
) -> Result<DMatrix<f64>> {
    let mut s = cov_matrix(kernel, locs, None)?;
    for (i, r) in noise.diagonal(locs).into_iter().enumerate() {
        s[(i, i)] += r;
    }
    Ok(s)
}

fn check_len(locs: &Points, y: &[f64]) -> Result<()> {
    if y.len() != locs.len() {
        return Err(Error::DimensionMismatch {
            expected: locs.len(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Exact marginal negative log-likelihood of `y ~ N(0, S + R)`.
pub fn exact_nll(
    kernel: &KernelModel<f64>,
    noise: &NoiseDiagParams<f64>,
    locs: &Points,
    y: &[f64],
    force: bool,
) -> Result<f64> {
    check_len(locs, y)?;
    check_dense(locs.len(), force)?;
    gaussian_nll(&dense_factor(noisy_cov(kernel, noise, locs)?)?, y)
}

/// `S (S + R)^{-1} y`, the exact conditional mean of the latent field.
pub fn dense_conditional_mean(
    kernel: &KernelModel<f64>,
    noise: &NoiseDiagParams<f64>,
    locs: &Points,
    y: &[f64],
) -> Result<Vec<f64>> {
    check_len(locs, y)?;
    check_dense(locs.len(), false)?;
    let s = cov_matrix(kernel, locs, None)?;
    let f = dense_factor(noisy_cov(kernel, noise, locs)?)?;
    let w = DVector::from_vec(f.solve(y));
    Ok((s * w).as_slice().to_vec())
}

fn noise_nll(r: &[f64], e: &[f64]) -> f64 {
    let n = r.len() as f64;
    let s: f64 = r.iter().zip(e).map(|(r, e)| r.ln() + e * e / r).sum();
    0.5 * (s + n * (2.0 * PI).ln())
}

/// Exact expected joint negative log-likelihood
/// `tr[(S^{-1} + R^{-1})(S_0^{-1} + R_0^{-1})^{-1}] / 2 + l_S(z0) + l_R(y - z0)`
/// with `z0 = S_0 (S_0 + R_0)^{-1} y`.
pub fn exact_e_function(
    params: &ModelParams,
    params0: &ModelParams,
    locs: &Points,
    y: &[f64],
) -> Result<f64> {
    check_len(locs, y)?;
    check_dense(locs.len(), false)?;
    let n = locs.len();
    let s0 = cov_matrix(&params0.kernel, locs, None)?;
    let f0 = dense_factor(noisy_cov(&params0.kernel, &params0.noise, locs)?)?;
    let inv0 = f0.inverse();
    let c0 = &s0 - &s0 * &inv0 * &s0;
    let z0 = (&s0 * DVector::from_vec(f0.solve(y))).as_slice().to_vec();

    let s = cov_matrix(&params.kernel, locs, None)?;
    let fs = dense_factor(s)?;
    let r = noise_matrix(&params.noise, locs)?;
    let mut trace = 0.0;
    for j in 0..n {
        let col: Vec<f64> = c0.column(j).iter().copied().collect();
        trace += fs.solve(&col)[j] + c0[(j, j)] * r.r_inv[j];
    }
    let resid: Vec<f64> = y.iter().zip(&z0).map(|(a, b)| a - b).collect();
    Ok(0.5 * trace + gaussian_nll(&fs, &z0)? + noise_nll(&r.r, &resid))
}

/// Marginal NLL of `y ~ N(0, Omega^{-1} + R)` with the Vecchia precision
/// `Omega`, using
/// `log|Omega^{-1} + R| = log|R| - log|Omega| + log|A|` and
/// `(Omega^{-1} + R)^{-1} = R^{-1} - R^{-1} A^{-1} R^{-1}`, `A = Omega + R^{-1}`.
pub fn approx_nll(
    kernel: &KernelModel<f64>,
    noise: &NoiseDiagParams<f64>,
    plan: &VecchiaPlan,
    locs: &Points,
    y: &[f64],
    backend: &Backend,
) -> Result<f64> {
    check_len(locs, y)?;
    let sys = PrecisionSystem::new(kernel, noise, plan, locs)?;
    let f = factorize(&sys, backend)?;
    let yp = plan.to_positions(y);
    let ry: Vec<f64> = yp.iter().zip(&sys.r_inv).map(|(a, b)| a * b).collect();
    let x = f.solve(&ry);
    let qf = yp.iter().zip(&ry).map(|(a, b)| a * b).sum::<f64>()
        - ry.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
    let log_r: f64 = -sys.r_inv.iter().map(|v| v.ln()).sum::<f64>();
    let logdet = log_r - sys.factor.log_det_precision() + f.log_det();
    Ok(0.5 * (logdet + qf + y.len() as f64 * (2.0 * PI).ln()))
}

/// [`approx_nll`] computed literally: assemble `Omega`, invert it densely,
/// add `R` and factor.
pub fn dense_approx_nll(
    kernel: &KernelModel<f64>,
    noise: &NoiseDiagParams<f64>,
    plan: &VecchiaPlan,
    locs: &Points,
    y: &[f64],
) -> Result<f64> {
    check_len(locs, y)?;
    check_dense(locs.len(), false)?;
    let omega = assemble_precision_factor(kernel, plan, locs)?.to_dense();
    let mut cov = dense_factor(omega)?.inverse();
    for (i, r) in noise.diagonal(locs).into_iter().enumerate() {
        cov[(i, i)] += r;
    }
    gaussian_nll(&dense_factor(cov)?, y)
}
