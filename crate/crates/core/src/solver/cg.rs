use crate::error::{Error, Result};
use crate::vecchia::SparsePrecisionFactor;

pub enum Preconditioner<'a> {
    None,
    /// Inverse diagonal.
    Jacobi(Vec<f64>),
    /// `Omega^{-1} = G^{-1} G^{-T}` (position order).
    Vecchia(&'a SparsePrecisionFactor),
}

impl Preconditioner<'_> {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        match self {
            Preconditioner::None => r.to_vec(),
            Preconditioner::Jacobi(d) => r.iter().zip(d).map(|(a, b)| a * b).collect(),
            Preconditioner::Vecchia(f) => f.solve_g(&f.solve_gt(r)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgOptions {
    /// Relative residual `|A x - b| / |b|` to reach.
    pub tol: f64,
    pub maxit: usize,
    /// Record every iterate (diagnostics).
    pub keep_iterates: bool,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            maxit: 2000,
            keep_iterates: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub rel_residual: f64,
    pub iterates: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients from a zero initial guess.
pub fn conjugate_gradient<F>(
    apply: F,
    b: &[f64],
    pre: &Preconditioner,
    opts: &CgOptions,
) -> Result<CgResult>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    let mut iterates = Vec::new();
    if bnorm == 0.0 {
        return Ok(CgResult {
            x,
            iterations: 0,
            rel_residual: 0.0,
            iterates,
        });
    }
    let mut r = b.to_vec();
    let mut z = pre.apply(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 1..=opts.maxit {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "CG breakdown at iteration {it} (p^T A p = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if opts.keep_iterates {
            iterates.push(x.clone());
        }
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= opts.tol {
            return Ok(CgResult {
                x,
                iterations: it,
                rel_residual: rel,
                iterates,
            });
        }
        z = pre.apply(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::CgNotConverged {
        iterations: opts.maxit,
        residual: rel,
    })
}
