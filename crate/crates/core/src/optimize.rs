//! Unconstrained local minimization: trust-region Newton and BFGS.
//!
//! Objectives report invalid points as `+inf`; both methods treat such
//! trial points as rejected steps.

use crate::error::{Error, Result};
use crate::scalar::{seed_gradient, seed_hessian, Scalar, MAX_DUAL_DIM};
use crate::with_dim;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// An objective with value, gradient and Hessian.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    /// `+inf` when `x` is infeasible.
    fn value(&self, x: &[f64]) -> f64;
    /// `(f, grad)`, or `None` when infeasible.
    fn gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)>;
    /// `(f, grad, hessian)`, or `None` when infeasible.
    fn hessian(&self, x: &[f64]) -> Option<(f64, Vec<f64>, DMatrix<f64>)>;
}

/// A function that can be evaluated at any [`Scalar`] type.
pub trait ScalarFn: Sync {
    fn dim(&self) -> usize;
    fn eval<T: Scalar>(&self, x: &[T]) -> Result<T>;
}

impl<F: ScalarFn> ScalarFn for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval<T: Scalar>(&self, x: &[T]) -> Result<T> {
        (**self).eval(x)
    }
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Derivatives by forward-mode dual numbers.
pub struct AutoDiff<F>(pub F);

impl<F: ScalarFn> Objective for AutoDiff<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.0
            .eval(x)
            .ok()
            .and_then(finite_or_none)
            .unwrap_or(f64::INFINITY)
    }

    fn gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        with_dim!(x.len(), N => {
            let d = self.0.eval(&seed_gradient::<N>(x)).ok()?;
            finite_or_none(d.re)?;
            Some((d.re, d.du.to_vec()))
        })
        .flatten()
    }

    fn hessian(&self, x: &[f64]) -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
        with_dim!(x.len(), N => {
            let d = self.0.eval(&seed_hessian::<N>(x)).ok()?;
            finite_or_none(d.re.re)?;
            let g: Vec<f64> = d.re.du.to_vec();
            let h = DMatrix::from_fn(N, N, |i, j| 0.5 * (d.du[i].du[j] + d.du[j].du[i]));
            Some((d.re.re, g, h))
        })
        .flatten()
    }
}

/// Step rule `h_i = max(abs, rel * |x_i|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HRule {
    pub abs: f64,
    pub rel: f64,
}

impl HRule {
    pub const GRADIENT: HRule = HRule {
        abs: 1e-6,
        rel: 1e-6,
    };
    pub const HESSIAN: HRule = HRule {
        abs: 1e-4,
        rel: 1e-4,
    };

    pub fn step(&self, x: f64) -> f64 {
        self.abs.max(self.rel * x.abs())
    }
}

/// Central-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: HRule) -> Result<Vec<f64>> {
    let mut xp = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let hi = h.step(x[i]);
        xp[i] = x[i] + hi;
        let fp = f(&xp);
        xp[i] = x[i] - hi;
        let fm = f(&xp);
        xp[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Domain(format!(
                "objective is not finite on the difference stencil of coordinate {i}"
            )));
        }
        g.push((fp - fm) / (2.0 * hi));
    }
    Ok(g)
}

/// Central-difference Hessian from function values.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: HRule) -> Result<DMatrix<f64>> {
    let n = x.len();
    let f0 = f(x);
    let hs: Vec<f64> = x.iter().map(|&v| h.step(v)).collect();
    let mut out = DMatrix::zeros(n, n);
    let mut xp = x.to_vec();
    let at = |xp: &mut Vec<f64>, d: &[(usize, f64)]| -> Result<f64> {
        for &(i, s) in d {
            xp[i] += s;
        }
        let v = f(xp);
        for &(i, s) in d {
            xp[i] -= s;
        }
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Domain(
                "objective is not finite on the Hessian stencil".into(),
            ))
        }
    };
    for i in 0..n {
        let (hi, fp, fm) = (
            hs[i],
            at(&mut xp, &[(i, hs[i])])?,
            at(&mut xp, &[(i, -hs[i])])?,
        );
        out[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = hs[j];
            let pp = at(&mut xp, &[(i, hi), (j, hj)])?;
            let pm = at(&mut xp, &[(i, hi), (j, -hj)])?;
            let mp = at(&mut xp, &[(i, -hi), (j, hj)])?;
            let mm = at(&mut xp, &[(i, -hi), (j, -hj)])?;
            let v = (pp - pm - mp + mm) / (4.0 * hi * hj);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Derivatives by central finite differences of the `f64` evaluation.
pub struct FiniteDiff<F>(pub F);

impl<F: ScalarFn> FiniteDiff<F> {
    fn f(&self, x: &[f64]) -> f64 {
        self.0
            .eval(x)
            .ok()
            .and_then(finite_or_none)
            .unwrap_or(f64::INFINITY)
    }
}

impl<F: ScalarFn> Objective for FiniteDiff<F> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.f(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let v = finite_or_none(self.f(x))?;
        Some((v, fd_gradient(|z| self.f(z), x, HRule::GRADIENT).ok()?))
    }

    fn hessian(&self, x: &[f64]) -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
        let (v, g) = self.gradient(x)?;
        Some((v, g, fd_hessian(|z| self.f(z), x, HRule::HESSIAN).ok()?))
    }
}

/// Plain closure objective with finite-difference derivatives.
pub struct FnObjective<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let v = finite_or_none(self.value(x))?;
        Some((v, fd_gradient(|z| self.value(z), x, HRule::GRADIENT).ok()?))
    }

    fn hessian(&self, x: &[f64]) -> Option<(f64, Vec<f64>, DMatrix<f64>)> {
        let (v, g) = self.gradient(x)?;
        Some((v, g, fd_hessian(|z| self.value(z), x, HRule::HESSIAN).ok()?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    NewtonTrustRegion,
    Bfgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradMode {
    Dual,
    FiniteDiff,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub grad_mode: GradMode,
    /// Budget of objective evaluations (any order).
    pub max_evals: usize,
    /// Stop when `|grad|_inf <= grad_tol`.
    pub grad_tol: f64,
    /// Stop when the trust radius or line-search step falls below this.
    pub step_tol: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
    /// Minimum actual/predicted reduction ratio for accepting a step.
    pub eta: f64,
    /// Armijo constant for the BFGS line search.
    pub armijo: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::NewtonTrustRegion,
            grad_mode: GradMode::Dual,
            max_evals: 500,
            grad_tol: 1e-6,
            step_tol: 1e-10,
            initial_radius: 1.0,
            max_radius: 100.0,
            eta: 1e-4,
            armijo: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_evals == 0 || !(self.grad_tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(Error::Config(
                "optimizer tolerances must be positive and max_evals >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    GradientTolerance,
    StepTolerance,
    MaxEvaluations,
}

/// One accepted iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub evals: usize,
    pub f: f64,
    pub grad_norm: f64,
    pub step_norm: f64,
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub evals: usize,
    pub status: Status,
    pub trace: Vec<TraceRow>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Minimizes `obj` from `x0`.
pub fn minimize(obj: &dyn Objective, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptimResult> {
    cfg.validate()?;
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch {
            expected: obj.dim(),
            got: x0.len(),
        });
    }
    if x0.len() > MAX_DUAL_DIM && cfg.grad_mode == GradMode::Dual {
        return Err(Error::Config(format!(
            "at most {MAX_DUAL_DIM} parameters are supported with dual derivatives"
        )));
    }
    match cfg.method {
        Method::NewtonTrustRegion => trust_region(obj, x0, cfg),
        Method::Bfgs => bfgs(obj, x0, cfg),
    }
}

/// Minimizes `g^T p + p^T H p / 2` over `|p| <= radius` exactly, using the
/// eigendecomposition of `H` (equivalently, the Cholesky factor of
/// `H + lambda I` for the optimal ridge `lambda`).
fn trust_region_step(g: &DVector<f64>, h: &DMatrix<f64>, radius: f64) -> DVector<f64> {
    let eig = SymmetricEigen::new(h.clone());
    let q = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let gt = q.transpose() * g;
    let n = g.len();
    let step_norm = |shift: f64| -> f64 {
        (0..n)
            .map(|i| {
                let d = lam[i] + shift;
                (gt[i] / d).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    };
    let build = |shift: f64| -> DVector<f64> {
        let c = DVector::from_fn(n, |i, _| -gt[i] / (lam[i] + shift));
        q * c
    };
    let lmin = lam.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = lam.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if lmin > 1e-12 * scale && step_norm(0.0) <= radius {
        return build(0.0);
    }
    let lo0 = (-lmin).max(0.0);
    let eps = 1e-12 * scale;
    if step_norm(lo0 + eps) <= radius {
        // Hard case: move along the lowest eigenvector to the boundary.
        let mut p = DVector::zeros(n);
        for i in 0..n {
            let d = lam[i] + lo0;
            if d.abs() > eps {
                p += q.column(i) * (-gt[i] / d);
            }
        }
        let imin = (0..n)
            .min_by(|&a, &b| lam[a].total_cmp(&lam[b]))
            .unwrap_or(0);
        let z = q.column(imin).into_owned();
        let pz = p.dot(&z);
        let rem = (radius * radius - p.norm_squared()).max(0.0);
        let tau = -pz + (pz * pz + rem).sqrt();
        return p + z * tau;
    }
    let (mut lo, mut hi) = (lo0 + eps, lo0 + eps + 1.0);
    while step_norm(hi) > radius {
        hi = lo0 + 2.0 * (hi - lo0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if step_norm(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1e-300) {
            break;
        }
    }
    build(hi)
}

fn trust_region(obj: &dyn Objective, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptimResult> {
    let mut evals = 1;
    let (mut f, mut g, mut h) = obj
        .hessian(x0)
        .ok_or_else(|| Error::Optimizer("objective is not finite at the starting point".into()))?;
    let mut x = x0.to_vec();
    let mut radius = cfg.initial_radius;
    let mut trace = vec![TraceRow {
        evals,
        f,
        grad_norm: norm(&g),
        step_norm: 0.0,
    }];
    let status = loop {
        if inf_norm(&g) <= cfg.grad_tol {
            break Status::GradientTolerance;
        }
        if radius < cfg.step_tol {
            break Status::StepTolerance;
        }
        if evals + 2 > cfg.max_evals {
            break Status::MaxEvaluations;
        }
        let gv = DVector::from_column_slice(&g);
        let p = trust_region_step(&gv, &h, radius);
        let pnorm = p.norm();
        let predicted = -(gv.dot(&p) + 0.5 * p.dot(&(&h * &p)));
        let xt: Vec<f64> = x.iter().zip(p.iter()).map(|(a, b)| a + b).collect();
        let ft = obj.value(&xt);
        evals += 1;
        let actual = f - ft;
        let ratio = if predicted > 0.0 {
            actual / predicted
        } else {
            -1.0
        };
        if !ft.is_finite() || ratio < 0.25 {
            radius = 0.25 * pnorm.min(radius);
        } else if ratio > 0.75 && pnorm > 0.99 * radius {
            radius = (2.0 * radius).min(cfg.max_radius);
        }
        if ft.is_finite() && ratio > cfg.eta && ft < f {
            match obj.hessian(&xt) {
                Some((fn_, gn, hn)) => {
                    evals += 1;
                    x = xt;
                    f = fn_;
                    g = gn;
                    h = hn;
                    trace.push(TraceRow {
                        evals,
                        f,
                        grad_norm: norm(&g),
                        step_norm: pnorm,
                    });
                }
                None => {
                    evals += 1;
                    radius = 0.25 * pnorm;
                }
            }
        } else if ft.is_finite() && predicted <= 0.0 && actual.abs() <= 1e-15 * f.abs() {
            // No further decrease is representable.
            break Status::StepTolerance;
        }
    };
    Ok(OptimResult {
        grad_norm: norm(&g),
        x,
        f,
        evals,
        status,
        trace,
    })
}

fn bfgs(obj: &dyn Objective, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptimResult> {
    let n = x0.len();
    let mut evals = 1;
    let (mut f, g0) = obj
        .gradient(x0)
        .ok_or_else(|| Error::Optimizer("objective is not finite at the starting point".into()))?;
    let mut g = DVector::from_vec(g0);
    let mut x = DVector::from_column_slice(x0);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![TraceRow {
        evals,
        f,
        grad_norm: g.norm(),
        step_norm: 0.0,
    }];
    let mut first = true;
    let status = loop {
        if g.amax() <= cfg.grad_tol {
            break Status::GradientTolerance;
        }
        let mut d = -(&hinv * &g);
        if d.dot(&g) >= 0.0 {
            hinv = DMatrix::identity(n, n);
            d = -g.clone();
        }
        if first {
            // Scale the first step to the initial radius.
            let dn = d.norm();
            if dn > cfg.initial_radius {
                d *= cfg.initial_radius / dn;
            }
        }
        let slope = d.dot(&g);
        let mut t = 1.0;
        let accepted = loop {
            if evals >= cfg.max_evals {
                break None;
            }
            if t * d.norm() < cfg.step_tol {
                break None;
            }
            let xt = &x + &d * t;
            evals += 1;
            let ft = obj.value(xt.as_slice());
            if ft.is_finite() && ft <= f + cfg.armijo * t * slope {
                break Some((xt, ft));
            }
            t *= if ft.is_finite() { 0.5 } else { 0.1 };
        };
        let Some((xt, _)) = accepted else {
            break if evals >= cfg.max_evals {
                Status::MaxEvaluations
            } else {
                Status::StepTolerance
            };
        };
        let Some((fn_, gn)) = obj.gradient(xt.as_slice()) else {
            break Status::StepTolerance;
        };
        evals += 1;
        let gn = DVector::from_vec(gn);
        let s = &xt - &x;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            if first {
                hinv *= sy / yv.dot(&yv);
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let a = &i - &s * yv.transpose() * rho;
            hinv = &a * &hinv * a.transpose() + &s * s.transpose() * rho;
        }
        first = false;
        let step = s.norm();
        x = xt;
        f = fn_;
        g = gn;
        trace.push(TraceRow {
            evals,
            f,
            grad_norm: g.norm(),
            step_norm: step,
        });
    };
    Ok(OptimResult {
        grad_norm: g.norm(),
        x: x.as_slice().to_vec(),
        f,
        evals,
        status,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl ScalarFn for Rosenbrock {
        fn dim(&self) -> usize {
            2
        }
        fn eval<T: Scalar>(&self, x: &[T]) -> Result<T> {
            let a = T::one() - x[0];
            let b = x[1] - x[0] * x[0];
            Ok(a * a + b * b * 100.0)
        }
    }

    struct Quadratic;

    impl ScalarFn for Quadratic {
        fn dim(&self) -> usize {
            3
        }
        fn eval<T: Scalar>(&self, x: &[T]) -> Result<T> {
            let a = [1.0, -2.0, 0.5];
            let mut s = T::zero();
            for i in 0..3 {
                let d = x[i] - a[i];
                s += d * d;
            }
            Ok(s)
        }
    }

    #[test]
    fn quadratic_in_one_newton_step() {
        let cfg = OptimizerConfig {
            initial_radius: 10.0,
            ..Default::default()
        };
        let r = minimize(&AutoDiff(Quadratic), &[5.0, 5.0, 5.0], &cfg).unwrap();
        assert!(r.trace.len() <= 4);
        for (x, a) in r.x.iter().zip([1.0, -2.0, 0.5]) {
            assert!((x - a).abs() < 1e-8);
        }
    }

    #[test]
    fn rosenbrock_both_methods() {
        for method in [Method::NewtonTrustRegion, Method::Bfgs] {
            for grad_mode in [GradMode::Dual, GradMode::FiniteDiff] {
                let cfg = OptimizerConfig {
                    method,
                    grad_mode,
                    max_evals: 5000,
                    grad_tol: 1e-9,
                    ..Default::default()
                };
                let r = match grad_mode {
                    GradMode::Dual => minimize(&AutoDiff(Rosenbrock), &[-1.2, 1.0], &cfg),
                    GradMode::FiniteDiff => minimize(&FiniteDiff(Rosenbrock), &[-1.2, 1.0], &cfg),
                }
                .unwrap();
                assert!(
                    (r.x[0] - 1.0).abs() < 1e-6,
                    "{method:?} {grad_mode:?}: {:?}",
                    r.x
                );
                assert!((r.x[1] - 1.0).abs() < 1e-6);
                for w in r.trace.windows(2) {
                    assert!(w[1].f < w[0].f);
                }
            }
        }
    }

    #[test]
    fn finite_differences() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let g = fd_gradient(f, &[1.0, 2.0], HRule::GRADIENT).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
        let q = |x: &[f64]| 3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] - x[1] * x[1] + x[0];
        let h = fd_hessian(q, &[0.3, -1.1], HRule::HESSIAN).unwrap();
        let want = [[6.0, 2.0], [2.0, -2.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[(i, j)] - want[i][j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn infinite_start_is_an_error() {
        let obj = FnObjective {
            dim: 1,
            f: |_: &[f64]| f64::INFINITY,
        };
        assert!(minimize(&obj, &[0.0], &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // log-barrier-like objective, infinite for x <= 0
        let obj = FnObjective {
            dim: 1,
            f: |x: &[f64]| {
                if x[0] <= 0.0 {
                    f64::INFINITY
                } else {
                    x[0] - 0.5 * x[0].ln()
                }
            },
        };
        let cfg = OptimizerConfig {
            initial_radius: 10.0,
            grad_tol: 1e-8,
            ..Default::default()
        };
        let r = minimize(&obj, &[3.0], &cfg).unwrap();
        assert!((r.x[0] - 0.5).abs() < 1e-6);
    }
}
