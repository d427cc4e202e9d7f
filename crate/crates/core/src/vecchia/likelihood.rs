use super::VecchiaPlan;
use crate::error::{Error, Result};
use crate::kernels::{KernelModel, NoiseDiagParams};
use crate::linalg::{cholesky_in_place, inverse_row};
use crate::par;
use crate::points::Points;
use crate::scalar::Scalar;
use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Block `j`'s slice of the precision factor.
///
/// With `L` the Cholesky factor of the joint covariance over
/// `cols = [cond, block]`, `rows` holds the last `b` rows of `L^{-1}`
/// (row-major `b x k`). Applied to the local vector they give
/// `D^{-1/2} (u_block - B u_cond)`, whose squared norm is the block's
/// quadratic form.
#[derive(Clone, Debug)]
pub struct BlockFactor<T> {
    pub cols: Vec<usize>,
    pub n_cond: usize,
    pub rows: Vec<T>,
    /// `log |D_j|` of the conditional covariance.
    pub logdet: T,
}

impl<T: Scalar> BlockFactor<T> {
    pub fn size(&self) -> usize {
        self.cols.len() - self.n_cond
    }

    pub fn row(&self, r: usize) -> &[T] {
        let k = self.cols.len();
        &self.rows[r * k..(r + 1) * k]
    }

    /// Block contribution to the quadratic form of `u` (position order).
    pub fn qf(&self, u: &[f64]) -> T {
        let mut total = T::zero();
        for r in 0..self.size() {
            let row = self.row(r);
            let mut s = T::zero();
            for a in 0..=self.n_cond + r {
                s += row[a] * u[self.cols[a]];
            }
            total += s * s;
        }
        total
    }

    /// `sum_r row_r P row_r^T` for a row-major `k x k` matrix `P`.
    pub fn trace_with(&self, p: &[f64]) -> T {
        let k = self.cols.len();
        let mut total = T::zero();
        for r in 0..self.size() {
            let row = self.row(r);
            let len = self.n_cond + r + 1;
            for a in 0..len {
                let mut s = T::zero();
                let pa = &p[a * k..a * k + len];
                for b in 0..len {
                    s += row[b] * pa[b];
                }
                total += row[a] * s;
            }
        }
        total
    }
}

/// Factors block `j`. With `nugget` the noise variance is added to the
/// diagonal of the joint covariance (the naive Vecchia likelihood of the
/// noisy data).
pub fn factor_block<T: Scalar>(
    kernel: &KernelModel<T>,
    nugget: Option<&NoiseDiagParams<T>>,
    plan: &VecchiaPlan,
    locs: &Points,
    j: usize,
) -> Result<BlockFactor<T>> {
    let cols = plan.block_cols(j);
    let n_cond = plan.cond[j].len();
    let k = cols.len();
    let pts: Vec<&[f64]> = cols.iter().map(|&p| locs.point(plan.perm[p])).collect();
    if nugget.is_none() && (0..k).any(|r| (0..r).any(|c| pts[r] == pts[c])) {
        return Err(Error::DegenerateConditioning { block: j });
    }
    let mut a = vec![T::zero(); k * k];
    for r in 0..k {
        for c in 0..r {
            let v = kernel.cov(pts[r], pts[c])?;
            a[r * k + c] = v;
            a[c * k + r] = v;
        }
        let mut d = kernel.variance_at(pts[r]);
        if let Some(noise) = nugget {
            d += noise.variance_at(pts[r]);
        }
        a[r * k + r] = d;
    }
    if let Err(pivot) = cholesky_in_place(&mut a, k) {
        return Err(Error::NotPositiveDefinite(format!(
            "block {j}, local pivot {pivot} of {k}"
        )));
    }
    let b = k - n_cond;
    let mut rows = vec![T::zero(); b * k];
    let mut logdet = T::zero();
    for r in 0..b {
        let i = n_cond + r;
        inverse_row(&a, k, i, &mut rows[r * k..(r + 1) * k]);
        logdet += a[i * k + i].ln() * 2.0;
    }
    Ok(BlockFactor {
        cols,
        n_cond,
        rows,
        logdet,
    })
}

/// Sums `f(j, block_factor_j)` over all blocks. Blocks are evaluated in
/// parallel; the reduction order is fixed, so results are reproducible.
pub fn block_sum<T, const K: usize, F>(
    kernel: &KernelModel<T>,
    nugget: Option<&NoiseDiagParams<T>>,
    plan: &VecchiaPlan,
    locs: &Points,
    f: F,
) -> Result<[T; K]>
where
    T: Scalar,
    F: Fn(usize, &BlockFactor<T>) -> [T; K] + Sync + Send,
{
    if locs.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.len(),
            got: locs.len(),
        });
    }
    let parts = par::chunked_fold(
        plan.n_blocks(),
        || Ok([T::zero(); K]),
        |acc: &mut Result<[T; K]>, j| {
            if let Ok(sums) = acc {
                match factor_block(kernel, nugget, plan, locs, j) {
                    Ok(bf) => {
                        for (s, v) in sums.iter_mut().zip(f(j, &bf)) {
                            *s += v;
                        }
                    }
                    Err(e) => *acc = Err(e),
                }
            }
        },
    );
    let mut total = [T::zero(); K];
    for p in parts {
        for (s, v) in total.iter_mut().zip(p?) {
            *s += v;
        }
    }
    Ok(total)
}

/// `(sum_j log|D_j|, sum_j |D_j^{-1/2}(u_j - B_j u_{sigma(j)})|^2)` for `u`
/// in original order.
pub fn vecchia_nll_parts<T: Scalar>(
    kernel: &KernelModel<T>,
    nugget: Option<&NoiseDiagParams<T>>,
    plan: &VecchiaPlan,
    locs: &Points,
    u: &[f64],
) -> Result<(T, T)> {
    if u.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.len(),
            got: u.len(),
        });
    }
    let up = plan.to_positions(u);
    let [det, qf] = block_sum(kernel, nugget, plan, locs, |_, bf| [bf.logdet, bf.qf(&up)])?;
    Ok((det, qf))
}

/// Vecchia negative log-likelihood `(det + qf + n log 2 pi) / 2`.
pub fn vecchia_nll<T: Scalar>(
    kernel: &KernelModel<T>,
    nugget: Option<&NoiseDiagParams<T>>,
    plan: &VecchiaPlan,
    locs: &Points,
    u: &[f64],
) -> Result<T> {
    let (det, qf) = vecchia_nll_parts(kernel, nugget, plan, locs, u)?;
    Ok((det + qf + u.len() as f64 * (2.0 * PI).ln()) * 0.5)
}

/// The Vecchia precision `Omega = G^T G` in the plan's ordering, with `G`
/// lower triangular and stored by rows.
#[derive(Clone, Debug)]
pub struct SparsePrecisionFactor {
    pub perm: Vec<usize>,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
    /// `log |D_j|` per block.
    pub block_logdet: Vec<f64>,
}

impl SparsePrecisionFactor {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `log |Omega| = -sum_j log |D_j|`.
    pub fn log_det_precision(&self) -> f64 {
        -self.block_logdet.iter().sum::<f64>()
    }

    /// `G u` for `u` in position order.
    pub fn apply_g(&self, u: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|t| self.vals[t] * u[self.col_idx[t]])
                    .sum()
            })
            .collect()
    }

    /// `G^T w` for `w` in position order.
    pub fn apply_gt(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (r, &wr) in w.iter().enumerate() {
            for t in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[t]] += self.vals[t] * wr;
            }
        }
        out
    }

    /// `Omega u` in position order.
    pub fn matvec_positions(&self, u: &[f64]) -> Vec<f64> {
        self.apply_gt(&self.apply_g(u))
    }

    /// `u^T Omega u` in position order.
    pub fn qf_positions(&self, u: &[f64]) -> f64 {
        self.apply_g(u).iter().map(|v| v * v).sum()
    }

    /// Solves `G x = w` (position order).
    pub fn solve_g(&self, w: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        for r in 0..self.len() {
            let (start, end) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut s = w[r];
            for t in start..end - 1 {
                s -= self.vals[t] * x[self.col_idx[t]];
            }
            x[r] = s / self.vals[end - 1];
        }
        x
    }

    /// Solves `G^T x = w` (position order).
    pub fn solve_gt(&self, w: &[f64]) -> Vec<f64> {
        let mut rhs = w.to_vec();
        let mut x = vec![0.0; self.len()];
        for r in (0..self.len()).rev() {
            let (start, end) = (self.row_ptr[r], self.row_ptr[r + 1]);
            x[r] = rhs[r] / self.vals[end - 1];
            for t in start..end - 1 {
                rhs[self.col_idx[t]] -= self.vals[t] * x[r];
            }
        }
        x
    }

    /// Diagonal of `Omega` (position order).
    pub fn precision_diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.len()];
        for (&c, &v) in self.col_idx.iter().zip(&self.vals) {
            d[c] += v * v;
        }
        d
    }

    /// Dense `Omega` in position order (oracle use).
    pub fn to_dense_positions(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut g = DMatrix::zeros(n, n);
        for r in 0..n {
            for t in self.row_ptr[r]..self.row_ptr[r + 1] {
                g[(r, self.col_idx[t])] = self.vals[t];
            }
        }
        g.transpose() * g
    }

    /// Dense `Omega` in original order (oracle use).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.to_dense_positions();
        let n = self.len();
        let mut out = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                out[(self.perm[a], self.perm[b])] = d[(a, b)];
            }
        }
        out
    }

    /// Lower triangle of `Omega` in position order as sorted
    /// `(row, col, value)` triplets with `row >= col`.
    pub fn lower_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for r in 0..self.len() {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            for a in span.clone() {
                for b in span.start..=a {
                    let (i, j) = (self.col_idx[a], self.col_idx[b]);
                    t.push((i.max(j), i.min(j), self.vals[a] * self.vals[b]));
                }
            }
        }
        t.sort_by_key(|x| (x.1, x.0));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for e in t {
            match merged.last_mut() {
                Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
                _ => merged.push(e),
            }
        }
        merged
    }
}

/// Assembles the sparse precision factor of the kernel (no nugget).
pub fn assemble_precision_factor(
    kernel: &KernelModel<f64>,
    plan: &VecchiaPlan,
    locs: &Points,
) -> Result<SparsePrecisionFactor> {
    if locs.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.len(),
            got: locs.len(),
        });
    }
    let blocks = par::map_indices(plan.n_blocks(), |j| {
        factor_block(kernel, None, plan, locs, j)
    });
    let n = plan.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::with_capacity(plan.factor_nnz_bound());
    let mut vals = Vec::with_capacity(plan.factor_nnz_bound());
    let mut block_logdet = Vec::with_capacity(plan.n_blocks());
    for bf in blocks {
        let bf = bf?;
        for r in 0..bf.size() {
            let row = bf.row(r);
            for a in 0..=bf.n_cond + r {
                col_idx.push(bf.cols[a]);
                vals.push(row[a]);
            }
            row_ptr.push(col_idx.len());
        }
        block_logdet.push(bf.logdet);
    }
    Ok(SparsePrecisionFactor {
        perm: plan.perm.clone(),
        row_ptr,
        col_idx,
        vals,
        block_logdet,
    })
}

/// `Omega u` for `u` in original order.
pub fn precision_matvec(factor: &SparsePrecisionFactor, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != factor.len() {
        return Err(Error::DimensionMismatch {
            expected: factor.len(),
            got: u.len(),
        });
    }
    let up: Vec<f64> = factor.perm.iter().map(|&i| u[i]).collect();
    let wp = factor.matvec_positions(&up);
    let mut out = vec![0.0; u.len()];
    for (p, &i) in factor.perm.iter().enumerate() {
        out[i] = wp[p];
    }
    Ok(out)
}
