//! Sparse Cholesky factorization with a minimum-degree fill-reducing
//! ordering. The numeric phase is the up-looking row-by-row algorithm driven
//! by the elimination tree.

use crate::error::{Error, Result};
use std::collections::BTreeSet;

/// Symmetric matrix stored as its lower triangle in compressed columns
/// (row indices ascending, so the diagonal comes first in each column).
#[derive(Clone, Debug)]
pub struct SymCsc {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SymCsc {
    /// From `(row, col, value)` triplets with `row >= col`; duplicates are
    /// summed.
    pub fn from_lower_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Result<Self> {
        if t.iter().any(|e| e.0 < e.1 || e.0 >= n) {
            return Err(Error::InvalidParameter(
                "triplets must lie in the lower triangle".into(),
            ));
        }
        t.sort_by_key(|x| (x.1, x.0));
        let mut col_ptr = vec![0; n + 1];
        let mut row_idx = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *vals.last_mut().expect("nonempty") += v;
                continue;
            }
            last = Some((i, j));
            row_idx.push(i);
            vals.push(v);
            col_ptr[j + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self {
            n,
            col_ptr,
            row_idx,
            vals,
        })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                let v = self.vals[p];
                out[i] += v * u[j];
                if i != j {
                    out[j] += v * u[i];
                }
            }
        }
        out
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|j| {
                let p = self.col_ptr[j];
                if p < self.col_ptr[j + 1] && self.row_idx[p] == j {
                    self.vals[p]
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::with_capacity(self.nnz());
        for j in 0..self.n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                t.push((self.row_idx[p], j, self.vals[p]));
            }
        }
        t
    }
}

/// Minimum-degree ordering computed on the explicit elimination graph.
/// Ties go to the lowest index. Returns `q` with new position `k` holding
/// old index `q[k]`.
pub fn minimum_degree_order(a: &SymCsc) -> Vec<usize> {
    let n = a.n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for p in a.col_ptr[j]..a.col_ptr[j + 1] {
            let i = a.row_idx[p];
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some((_, v)) = queue.pop_first() {
        order.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            queue.remove(&(adj[u].len(), u));
            merged.clear();
            let (mut x, mut y) = (0, 0);
            let (au, nv) = (&adj[u], &nbrs);
            while x < au.len() || y < nv.len() {
                let next = match (au.get(x), nv.get(y)) {
                    (Some(&p), Some(&q)) if p == q => {
                        x += 1;
                        y += 1;
                        p
                    }
                    (Some(&p), Some(&q)) if p < q => {
                        x += 1;
                        p
                    }
                    (Some(_), Some(&q)) => {
                        y += 1;
                        q
                    }
                    (Some(&p), None) => {
                        x += 1;
                        p
                    }
                    (None, Some(&q)) => {
                        y += 1;
                        q
                    }
                    (None, None) => unreachable!(),
                };
                if next != u && next != v {
                    merged.push(next);
                }
            }
            std::mem::swap(&mut adj[u], &mut merged);
            queue.insert((adj[u].len(), u));
        }
    }
    order
}

/// `P A P^T = L L^T` with `L` in compressed columns, diagonal first.
#[derive(Clone, Debug)]
pub struct SparseCholesky {
    pub n: usize,
    /// New position `k` holds old index `q[k]`.
    pub q: Vec<usize>,
    pub lp: Vec<usize>,
    pub li: Vec<usize>,
    pub lx: Vec<f64>,
}

const NONE: usize = usize::MAX;

/// Pattern of row `k` of `L` (excluding the diagonal) in topological order,
/// written to `s[top..n]`; returns `top`.
fn ereach(
    cp: &[usize],
    ci: &[usize],
    k: usize,
    parent: &[usize],
    s: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let n = s.len();
    let mut top = n;
    mark[k] = k;
    for &start in &ci[cp[k]..cp[k + 1]] {
        if start > k {
            continue;
        }
        let mut i = start;
        let mut len = 0;
        while mark[i] != k {
            s[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
            if i == NONE {
                break;
            }
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            s[top] = s[len];
        }
    }
    top
}

impl SparseCholesky {
    /// Factors `a` with the given ordering (or minimum degree when `None`).
    pub fn factor(a: &SymCsc, q: Option<Vec<usize>>) -> Result<Self> {
        let n = a.n;
        let q = q.unwrap_or_else(|| minimum_degree_order(a));
        let mut pinv = vec![0; n];
        for (k, &i) in q.iter().enumerate() {
            pinv[i] = k;
        }
        // Upper triangle of the permuted matrix, by columns.
        let mut counts = vec![0usize; n + 1];
        for j in 0..n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                let (x, y) = (pinv[a.row_idx[p]], pinv[j]);
                counts[x.max(y) + 1] += 1;
            }
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let cp = counts.clone();
        let mut next = counts;
        let mut ci = vec![0; a.nnz()];
        let mut cx = vec![0.0; a.nnz()];
        for j in 0..n {
            for p in a.col_ptr[j]..a.col_ptr[j + 1] {
                let (x, y) = (pinv[a.row_idx[p]], pinv[j]);
                let col = x.max(y);
                ci[next[col]] = x.min(y);
                cx[next[col]] = a.vals[p];
                next[col] += 1;
            }
        }
        // Elimination tree.
        let mut parent = vec![NONE; n];
        let mut ancestor = vec![NONE; n];
        for k in 0..n {
            for &start in &ci[cp[k]..cp[k + 1]] {
                let mut i = start;
                while i != NONE && i < k {
                    let inext = ancestor[i];
                    ancestor[i] = k;
                    if inext == NONE {
                        parent[i] = k;
                    }
                    i = inext;
                }
            }
        }
        // Column counts from the row patterns.
        let mut s = vec![0; n];
        let mut mark = vec![NONE; n];
        let mut colcount = vec![1usize; n];
        for k in 0..n {
            let top = ereach(&cp, &ci, k, &parent, &mut s, &mut mark);
            for &i in &s[top..] {
                colcount[i] += 1;
            }
        }
        let mut lp = vec![0; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + colcount[k];
        }
        let mut li = vec![0; lp[n]];
        let mut lx = vec![0.0; lp[n]];
        let mut c: Vec<usize> = lp[..n].to_vec();
        let mut x = vec![0.0; n];
        mark.iter_mut().for_each(|m| *m = NONE);
        for k in 0..n {
            let top = ereach(&cp, &ci, k, &parent, &mut s, &mut mark);
            x[k] = 0.0;
            for p in cp[k]..cp[k + 1] {
                if ci[p] <= k {
                    x[ci[p]] += cx[p];
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &s[top..] {
                let lki = x[i] / lx[lp[i]];
                x[i] = 0.0;
                for p in lp[i] + 1..c[i] {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = c[i];
                c[i] += 1;
                li[p] = k;
                lx[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite(format!(
                    "sparse Cholesky pivot {k} of {n}"
                )));
            }
            let p = c[k];
            c[k] += 1;
            li[p] = k;
            lx[p] = d.sqrt();
        }
        Ok(Self { n, q, lp, li, lx })
    }

    pub fn nnz(&self) -> usize {
        self.lx.len()
    }

    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|k| 2.0 * self.lx[self.lp[k]].ln()).sum()
    }

    fn lsolve(&self, x: &mut [f64]) {
        for j in 0..self.n {
            x[j] /= self.lx[self.lp[j]];
            for p in self.lp[j] + 1..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * x[j];
            }
        }
    }

    fn ltsolve(&self, x: &mut [f64]) {
        for j in (0..self.n).rev() {
            for p in self.lp[j] + 1..self.lp[j + 1] {
                x[j] -= self.lx[p] * x[self.li[p]];
            }
            x[j] /= self.lx[self.lp[j]];
        }
    }

    /// `A^{-1} b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.q.iter().map(|&i| b[i]).collect();
        self.lsolve(&mut x);
        self.ltsolve(&mut x);
        let mut out = vec![0.0; self.n];
        for (k, &i) in self.q.iter().enumerate() {
            out[i] = x[k];
        }
        out
    }

    /// `W^{-T} v` where `A = W W^T`, `W = P^T L`.
    pub fn half_solve_t(&self, v: &[f64]) -> Vec<f64> {
        let mut x = v.to_vec();
        self.ltsolve(&mut x);
        let mut out = vec![0.0; self.n];
        for (k, &i) in self.q.iter().enumerate() {
            out[i] = x[k];
        }
        out
    }

    /// `W u`.
    pub fn apply_w(&self, u: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.n];
        for j in 0..self.n {
            for p in self.lp[j]..self.lp[j + 1] {
                t[self.li[p]] += self.lx[p] * u[j];
            }
        }
        let mut out = vec![0.0; self.n];
        for (k, &i) in self.q.iter().enumerate() {
            out[i] = t[k];
        }
        out
    }

    /// `W^T w`.
    pub fn apply_wt(&self, w: &[f64]) -> Vec<f64> {
        let pw: Vec<f64> = self.q.iter().map(|&i| w[i]).collect();
        (0..self.n)
            .map(|j| {
                (self.lp[j]..self.lp[j + 1])
                    .map(|p| self.lx[p] * pw[self.li[p]])
                    .sum()
            })
            .collect()
    }
}
