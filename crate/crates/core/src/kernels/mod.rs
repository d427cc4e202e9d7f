//! Covariance functions and diagonal noise models.

mod bessel;
mod config;

pub use bessel::{bessel_k, bessel_k_generic, bessel_k_lower, ln_gamma};
pub use config::{parse_params, write_params};

use crate::error::{Error, Result};
use crate::points::Points;
use crate::scalar::{Dual, Jet2, Scalar};
use nalgebra::DMatrix;
use std::f64::consts::LN_2;

/// Knot locations (km) used by the LIDAR-style varying-scale model.
pub const DEFAULT_KNOTS: [f64; 3] = [0.2, 0.8, 1.2];

/// Isotropic Matérn covariance `sigma2 * M_nu(|x - x'| / rho)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaternIsoParams<T = f64> {
    pub sigma2: T,
    pub rho: T,
    pub nu: T,
}

/// Matérn model with full geometric anisotropy in two dimensions and a
/// scale `sigma(x)` interpolated between three knots along the last
/// coordinate. `Gamma^{-1} = W W^T` with `W = [[w11, 0], [w12, w22]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnisoKnotParams<T = f64> {
    pub sigmas: [T; 3],
    pub w11: T,
    pub w12: T,
    pub w22: T,
    pub nu: T,
    pub knots: [f64; 3],
}

/// Diagonal observation-noise covariance `R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseDiagParams<T = f64> {
    /// No noise; `R` is not full rank and cannot be used by the EM path.
    None,
    /// `R = eta2 * I`.
    Constant { eta2: T },
    /// `R = diag(eta(x)^2)` with `eta(x) = sum_j w_j(x) eta_j`.
    Knot { etas: [T; 3], knots: [f64; 3] },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelModel<T = f64> {
    MaternIso(MaternIsoParams<T>),
    AnisoKnot(AnisoKnotParams<T>),
}

/// Normalized inverse-distance weights of the three knots at coordinate `s`.
/// A location exactly on a knot gets weight one there.
pub fn knot_weights(knots: &[f64; 3], s: f64) -> [f64; 3] {
    let mut w = [0.0; 3];
    for (j, &k) in knots.iter().enumerate() {
        let d = (s - k).abs();
        if d < 1e-12 {
            w = [0.0; 3];
            w[j] = 1.0;
            return w;
        }
        w[j] = 1.0 / d;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

fn knot_interp<T: Scalar>(values: &[T; 3], knots: &[f64; 3], s: f64) -> T {
    let w = knot_weights(knots, s);
    values[0] * w[0] + values[1] * w[1] + values[2] * w[2]
}

fn matern_direct<T: Scalar>(nu: T, t: T) -> Result<T> {
    let x = (nu * 2.0).sqrt() * t;
    let k = bessel_k_generic(nu, x)?;
    if k.re() == 0.0 {
        return Ok(T::zero());
    }
    let log_pref = (-nu + 1.0) * LN_2 - ln_gamma(nu)? + nu * x.ln();
    Ok(log_pref.exp() * k)
}

/// `(M, dM/dt, d2M/dt2)` as functions of `nu` (any [`Scalar`] in `nu`) at a
/// fixed lag, using `d/dx [x^nu K_nu(x)] = -x^nu K_{nu-1}(x)`.
fn matern_t_partials<T: Scalar>(nu: T, t: f64) -> Result<(T, T, T)> {
    let s = (nu * 2.0).sqrt();
    let x = s * t;
    let (k0, k1, k2) = bessel_k_lower(nu, x)?;
    if k0.re() == 0.0 {
        return Ok((T::zero(), T::zero(), T::zero()));
    }
    let cx = ((-nu + 1.0) * LN_2 - ln_gamma(nu)? + nu * x.ln()).exp();
    let m = cx * k0;
    let mt = -(s * cx * k1);
    let mtt = -(s * s * cx / x * (k1 - x * k2));
    Ok((m, mt, mtt))
}

/// Partials of the Matérn correlation in `(t, nu)`: `[M, M_t, M_nu, M_tt,
/// M_tnu, M_nunu]` (entries beyond `order` are zero). Lag derivatives are
/// analytic; `nu` derivatives come from a one-variable dual.
fn matern_jet(nu: f64, t: f64, order: usize) -> Result<Jet2> {
    match order {
        1 => {
            let (m, mt, _) = matern_t_partials(Dual::<f64, 1>::variable(nu, 0), t)?;
            Ok(Jet2 {
                order: 1,
                d: [m.re, mt.re, m.du[0], 0.0, 0.0, 0.0],
            })
        }
        2 => {
            let v = Dual::<Dual<f64, 1>, 1>::variable(Dual::variable(nu, 0), 0);
            let (m, mt, mtt) = matern_t_partials(v, t)?;
            Ok(Jet2::new([
                m.re.re,
                mt.re.re,
                m.re.du[0],
                mtt.re.re,
                mt.re.du[0],
                m.du[0].du[0],
            ]))
        }
        _ => Err(Error::Domain(format!(
            "Matérn derivatives of order {order} are not supported"
        ))),
    }
}

/// Matérn correlation
/// `M_nu(t) = 2^{1-nu} / Gamma(nu) * (sqrt(2 nu) t)^nu * K_nu(sqrt(2 nu) t)`,
/// with `M_nu(0) = 1`.
///
/// For dual arguments the partial derivatives in `(t, nu)` are computed once
/// in plain doubles and then chained into the caller's derivative directions.
pub fn matern_correlation<T: Scalar>(nu: T, t: T) -> Result<T> {
    if !(nu.re() > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Matérn smoothness must be positive, got {}",
            nu.re()
        )));
    }
    if t.re() < 0.0 {
        return Err(Error::Domain(format!("negative lag {}", t.re())));
    }
    if t.re() == 0.0 {
        return Ok(T::one());
    }
    if T::ORDER == 0 {
        return matern_direct(nu, t);
    }
    let jet = matern_jet(nu.re(), t.re(), T::ORDER)?;
    Ok(T::apply_jet(t, nu, &jet))
}

impl<T: Scalar> MaternIsoParams<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma2", self.sigma2), ("rho", self.rho), ("nu", self.nu)] {
            if !(v.re() > 0.0) || !v.re().is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {}",
                    v.re()
                )));
            }
        }
        Ok(())
    }
}

impl<T: Scalar> AnisoKnotParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma1", self.sigmas[0]),
            ("sigma2", self.sigmas[1]),
            ("sigma3", self.sigmas[2]),
            ("W11", self.w11),
            ("W22", self.w22),
            ("nu", self.nu),
        ];
        for (name, v) in positive {
            if !(v.re() > 0.0) || !v.re().is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {}",
                    v.re()
                )));
            }
        }
        if !self.w12.re().is_finite() {
            return Err(Error::InvalidParameter("W12 must be finite".into()));
        }
        Ok(())
    }

    /// Knot-interpolated scale `sigma(x)`.
    pub fn scale_at(&self, x: &[f64]) -> T {
        knot_interp(&self.sigmas, &self.knots, x[x.len() - 1])
    }
}

impl<T: Scalar> KernelModel<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelModel::MaternIso(p) => p.validate(),
            KernelModel::AnisoKnot(p) => p.validate(),
        }
    }

    /// Required location dimension, if the model fixes one.
    pub fn required_dim(&self) -> Option<usize> {
        match self {
            KernelModel::MaternIso(_) => None,
            KernelModel::AnisoKnot(_) => Some(2),
        }
    }

    /// Marginal variance `K(x, x)`.
    pub fn variance_at(&self, x: &[f64]) -> T {
        match self {
            KernelModel::MaternIso(p) => p.sigma2,
            KernelModel::AnisoKnot(p) => {
                let s = p.scale_at(x);
                s * s
            }
        }
    }

    /// Covariance between two locations; no dimension checks.
    pub fn cov(&self, x: &[f64], y: &[f64]) -> Result<T> {
        match self {
            KernelModel::MaternIso(p) => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 == 0.0 {
                    return Ok(p.sigma2);
                }
                let t = p.rho.recip() * d2.sqrt();
                Ok(p.sigma2 * matern_correlation(p.nu, t)?)
            }
            KernelModel::AnisoKnot(p) => {
                let scale = p.scale_at(x) * p.scale_at(y);
                let (d1, d2) = (x[0] - y[0], x[1] - y[1]);
                if d1 == 0.0 && d2 == 0.0 {
                    return Ok(scale);
                }
                // W^T d
                let u1 = p.w11 * d1 + p.w12 * d2;
                let u2 = p.w22 * d2;
                let t = (u1 * u1 + u2 * u2).sqrt();
                Ok(scale * matern_correlation(p.nu, t)?)
            }
        }
    }
}

/// Evaluates `K(x, x2)` with dimension checks.
pub fn kernel_eval<T: Scalar>(model: &KernelModel<T>, x: &[f64], x2: &[f64]) -> Result<T> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: x2.len(),
        });
    }
    if let Some(d) = model.required_dim() {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
    }
    model.cov(x, x2)
}

/// Dense covariance matrix between `locs` and `locs2` (or `locs` itself).
pub fn cov_matrix(
    model: &KernelModel<f64>,
    locs: &Points,
    locs2: Option<&Points>,
) -> Result<DMatrix<f64>> {
    if let Some(d) = model.required_dim() {
        if locs.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: locs.dim(),
            });
        }
    }
    match locs2 {
        None => {
            let n = locs.len();
            let mut s = DMatrix::zeros(n, n);
            for j in 0..n {
                for i in j..n {
                    let v = model.cov(locs.point(i), locs.point(j))?;
                    s[(i, j)] = v;
                    s[(j, i)] = v;
                }
            }
            Ok(s)
        }
        Some(other) => {
            if other.dim() != locs.dim() {
                return Err(Error::DimensionMismatch {
                    expected: locs.dim(),
                    got: other.dim(),
                });
            }
            let mut s = DMatrix::zeros(locs.len(), other.len());
            for j in 0..other.len() {
                for i in 0..locs.len() {
                    s[(i, j)] = model.cov(locs.point(i), other.point(j))?;
                }
            }
            Ok(s)
        }
    }
}

impl<T: Scalar> NoiseDiagParams<T> {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: T| {
            if !(v.re() > 0.0) || !v.re().is_finite() {
                Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {}",
                    v.re()
                )))
            } else {
                Ok(())
            }
        };
        match self {
            NoiseDiagParams::None => Ok(()),
            NoiseDiagParams::Constant { eta2 } => check("eta2", *eta2),
            NoiseDiagParams::Knot { etas, .. } => etas.iter().try_for_each(|&e| check("eta", e)),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NoiseDiagParams::None)
    }

    /// Noise variance at `x` (zero for [`NoiseDiagParams::None`]).
    pub fn variance_at(&self, x: &[f64]) -> T {
        match self {
            NoiseDiagParams::None => T::zero(),
            NoiseDiagParams::Constant { eta2 } => *eta2,
            NoiseDiagParams::Knot { etas, knots } => {
                let e = knot_interp(etas, knots, x[x.len() - 1]);
                e * e
            }
        }
    }

    /// Diagonal of `R` at every location.
    pub fn diagonal(&self, locs: &Points) -> Vec<T> {
        locs.iter().map(|x| self.variance_at(x)).collect()
    }
}

/// A diagonal noise covariance with its inverse and inverse square root.
#[derive(Clone, Debug)]
pub struct NoiseMatrix {
    pub r: Vec<f64>,
    pub r_inv: Vec<f64>,
    pub r_inv_sqrt: Vec<f64>,
}

impl NoiseMatrix {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn log_det(&self) -> f64 {
        self.r.iter().map(|v| v.ln()).sum()
    }
}

/// Builds `R`, `R^{-1}` and `R^{-1/2}` for the given locations. Requires a
/// full-rank noise model.
pub fn noise_matrix(noise: &NoiseDiagParams<f64>, locs: &Points) -> Result<NoiseMatrix> {
    if noise.is_none() {
        return Err(Error::InvalidParameter(
            "a noise model is required (R must be full rank)".into(),
        ));
    }
    noise.validate()?;
    let r = noise.diagonal(locs);
    if let Some(bad) = r.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "noise variance must be positive, got {bad}"
        )));
    }
    let r_inv: Vec<f64> = r.iter().map(|v| 1.0 / v).collect();
    let r_inv_sqrt = r_inv.iter().map(|v| v.sqrt()).collect();
    Ok(NoiseMatrix {
        r,
        r_inv,
        r_inv_sqrt,
    })
}
