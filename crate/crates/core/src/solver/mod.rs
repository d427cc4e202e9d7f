//! Linear algebra with `A = Omega + R^{-1}` and the dense oracle.
//!
//! Two interchangeable ways to solve: a direct factorization (dense or
//! sparse Cholesky, both exposing `A = W W^T`) and matrix-free conjugate
//! gradients.

mod cg;
mod dense;
mod sparse;

pub use cg::{conjugate_gradient, CgOptions, CgResult, Preconditioner};
pub use dense::{
    approx_nll, check_dense, dense_approx_nll, dense_conditional_mean, exact_e_function, exact_nll,
    gaussian_nll, noisy_cov, set_force_dense, DENSE_GUARD,
};
pub use sparse::{minimum_degree_order, SparseCholesky, SymCsc};

use crate::error::{Error, Result};
use crate::kernels::{noise_matrix, KernelModel, NoiseDiagParams};
use crate::points::Points;
use crate::vecchia::{assemble_precision_factor, SparsePrecisionFactor, VecchiaPlan};
use nalgebra::{DMatrix, DVector};

/// Preconditioner choice for [`Backend::Cg`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrecondKind {
    None,
    Jacobi,
    /// `Omega^{-1}` applied through the Vecchia factor.
    Vecchia,
}

/// How systems with `A` are solved.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Backend {
    Dense,
    #[default]
    Sparse,
    Cg {
        tol: f64,
        maxit: usize,
        precond: PrecondKind,
    },
}

impl Backend {
    pub fn cg_default() -> Self {
        Backend::Cg {
            tol: 1e-10,
            maxit: 2000,
            precond: PrecondKind::Jacobi,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Backend::Dense),
            "sparse" => Ok(Backend::Sparse),
            "cg" => Ok(Backend::cg_default()),
            _ => Err(Error::Config(format!("unknown backend '{s}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Dense => "dense",
            Backend::Sparse => "sparse",
            Backend::Cg { .. } => "cg",
        }
    }
}

/// A symmetric positive definite operator.
pub trait SpdMatrix: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, u: &[f64]) -> Vec<f64>;
    fn diagonal(&self) -> Vec<f64>;
    /// Lower triangle as `(row, col, value)` with `row >= col`.
    fn lower_triplets(&self) -> Vec<(usize, usize, f64)>;

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for (i, j, v) in self.lower_triplets() {
            a[(i, j)] += v;
            if i != j {
                a[(j, i)] += v;
            }
        }
        a
    }

    fn vecchia_factor(&self) -> Option<&SparsePrecisionFactor> {
        None
    }
}

impl SpdMatrix for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        (self * DVector::from_column_slice(u)).as_slice().to_vec()
    }

    fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows()).map(|i| self[(i, i)]).collect()
    }

    fn lower_triplets(&self) -> Vec<(usize, usize, f64)> {
        let n = self.nrows();
        let mut t = Vec::new();
        for j in 0..n {
            for i in j..n {
                if self[(i, j)] != 0.0 {
                    t.push((i, j, self[(i, j)]));
                }
            }
        }
        t
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

impl SpdMatrix for SymCsc {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matvec(u)
    }

    fn diagonal(&self) -> Vec<f64> {
        SymCsc::diagonal(self)
    }

    fn lower_triplets(&self) -> Vec<(usize, usize, f64)> {
        self.triplets()
    }
}

/// `A = Omega + R^{-1}` in the plan's position order.
#[derive(Clone, Debug)]
pub struct PrecisionSystem {
    pub factor: SparsePrecisionFactor,
    /// `R^{-1}` diagonal, position order.
    pub r_inv: Vec<f64>,
}

impl PrecisionSystem {
    pub fn new(
        kernel: &KernelModel<f64>,
        noise: &NoiseDiagParams<f64>,
        plan: &VecchiaPlan,
        locs: &Points,
    ) -> Result<Self> {
        let factor = assemble_precision_factor(kernel, plan, locs)?;
        let nm = noise_matrix(noise, locs)?;
        let r_inv = plan.to_positions(&nm.r_inv);
        Ok(Self { factor, r_inv })
    }
}

impl SpdMatrix for PrecisionSystem {
    fn dim(&self) -> usize {
        self.r_inv.len()
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.factor.matvec_positions(u);
        for ((o, r), x) in out.iter_mut().zip(&self.r_inv).zip(u) {
            *o += r * x;
        }
        out
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.factor.precision_diagonal();
        for (a, r) in d.iter_mut().zip(&self.r_inv) {
            *a += r;
        }
        d
    }

    fn lower_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = self.factor.lower_triplets();
        t.extend(self.r_inv.iter().enumerate().map(|(i, &r)| (i, i, r)));
        t
    }

    fn vecchia_factor(&self) -> Option<&SparsePrecisionFactor> {
        Some(&self.factor)
    }
}

/// `A = W W^T` from a dense or sparse Cholesky factorization.
#[derive(Clone, Debug)]
pub enum FactorHandle {
    Dense { l: DMatrix<f64> },
    Sparse(SparseCholesky),
}

impl FactorHandle {
    pub fn len(&self) -> usize {
        match self {
            FactorHandle::Dense { l } => l.nrows(),
            FactorHandle::Sparse(f) => f.n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn log_det(&self) -> f64 {
        match self {
            FactorHandle::Dense { l } => (0..l.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum(),
            FactorHandle::Sparse(f) => f.log_det(),
        }
    }

    /// Nonzeros in `W`.
    pub fn nnz(&self) -> usize {
        match self {
            FactorHandle::Dense { l } => l.nrows() * (l.nrows() + 1) / 2,
            FactorHandle::Sparse(f) => f.nnz(),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            FactorHandle::Dense { l } => {
                let mut x = DVector::from_column_slice(b);
                l.solve_lower_triangular_mut(&mut x);
                l.tr_solve_lower_triangular_mut(&mut x);
                x.as_slice().to_vec()
            }
            FactorHandle::Sparse(f) => f.solve(b),
        }
    }

    /// `W^{-T} v`.
    pub fn half_solve_t(&self, v: &[f64]) -> Vec<f64> {
        match self {
            FactorHandle::Dense { l } => {
                let mut x = DVector::from_column_slice(v);
                l.tr_solve_lower_triangular_mut(&mut x);
                x.as_slice().to_vec()
            }
            FactorHandle::Sparse(f) => f.half_solve_t(v),
        }
    }

    pub fn apply_w(&self, u: &[f64]) -> Vec<f64> {
        match self {
            FactorHandle::Dense { l } => (l * DVector::from_column_slice(u)).as_slice().to_vec(),
            FactorHandle::Sparse(f) => f.apply_w(u),
        }
    }

    pub fn apply_wt(&self, w: &[f64]) -> Vec<f64> {
        match self {
            FactorHandle::Dense { l } => (l.tr_mul(&DVector::from_column_slice(w)))
                .as_slice()
                .to_vec(),
            FactorHandle::Sparse(f) => f.apply_wt(w),
        }
    }

    /// Dense `A^{-1}` (oracle use).
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut out = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.solve(&e);
            out.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        out
    }
}

/// Dense Cholesky of a matrix.
pub fn dense_factor(a: DMatrix<f64>) -> Result<FactorHandle> {
    let n = a.nrows();
    let chol = nalgebra::Cholesky::new(a)
        .ok_or_else(|| Error::NotPositiveDefinite(format!("dense {n}x{n} matrix")))?;
    Ok(FactorHandle::Dense { l: chol.unpack() })
}

/// Factors `a` with a direct backend.
pub fn factorize(a: &dyn SpdMatrix, backend: &Backend) -> Result<FactorHandle> {
    match backend {
        Backend::Dense => dense_factor(a.to_dense()),
        Backend::Sparse => {
            let m = SymCsc::from_lower_triplets(a.dim(), a.lower_triplets())?;
            let f = SparseCholesky::factor(&m, None)?;
            log::debug!("sparse Cholesky: n = {}, nnz(L) = {}", f.n, f.nnz());
            Ok(FactorHandle::Sparse(f))
        }
        Backend::Cg { .. } => Err(Error::Config(
            "conjugate gradients do not produce a factorization".into(),
        )),
    }
}

fn cg_preconditioner<'a>(a: &'a dyn SpdMatrix, kind: PrecondKind) -> Result<Preconditioner<'a>> {
    Ok(match kind {
        PrecondKind::None => Preconditioner::None,
        PrecondKind::Jacobi => {
            Preconditioner::Jacobi(a.diagonal().iter().map(|d| 1.0 / d).collect())
        }
        PrecondKind::Vecchia => Preconditioner::Vecchia(a.vecchia_factor().ok_or_else(|| {
            Error::Config("the Vecchia preconditioner needs a Vecchia precision system".into())
        })?),
    })
}

/// Solves `A x = b` with the chosen backend.
pub fn solve_spd(a: &dyn SpdMatrix, b: &[f64], backend: &Backend) -> Result<Vec<f64>> {
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.len(),
        });
    }
    match backend {
        Backend::Cg {
            tol,
            maxit,
            precond,
        } => {
            let pre = cg_preconditioner(a, *precond)?;
            let opts = CgOptions {
                tol: *tol,
                maxit: *maxit,
                keep_iterates: false,
            };
            let res = conjugate_gradient(|u| a.apply(u), b, &pre, &opts)?;
            log::debug!(
                "CG: {} iterations, relative residual {:.3e}",
                res.iterations,
                res.rel_residual
            );
            Ok(res.x)
        }
        _ => Ok(factorize(a, backend)?.solve(b)),
    }
}

/// Solves `A x = b_s` for many right-hand sides, in parallel for CG.
pub fn solve_many(a: &dyn SpdMatrix, rhs: &[Vec<f64>], backend: &Backend) -> Result<Vec<Vec<f64>>> {
    match backend {
        Backend::Cg { .. } => crate::par::map_slice(rhs, |b| solve_spd(a, b, backend))
            .into_iter()
            .collect(),
        _ => {
            let f = factorize(a, backend)?;
            Ok(crate::par::map_slice(rhs, |b| f.solve(b)))
        }
    }
}

/// Conditional mean `(Omega + R^{-1})^{-1} R^{-1} y` of the latent field,
/// in original order.
pub fn conditional_mean(
    kernel: &KernelModel<f64>,
    noise: &NoiseDiagParams<f64>,
    plan: &VecchiaPlan,
    locs: &Points,
    y: &[f64],
    backend: &Backend,
) -> Result<Vec<f64>> {
    let sys = PrecisionSystem::new(kernel, noise, plan, locs)?;
    let rhs: Vec<f64> = plan
        .to_positions(y)
        .iter()
        .zip(&sys.r_inv)
        .map(|(y, r)| y * r)
        .collect();
    let z = solve_spd(&sys, &rhs, backend)?;
    Ok(plan.from_positions(&z))
}
