//! Scalar types for forward-mode differentiation.
//!
//! Everything that depends on model parameters (kernels, block Cholesky
//! factors, E-objectives) is written once against [`Scalar`] and evaluated
//! with `f64` for values, [`Dual`] for gradients and `Dual<Dual<f64, N>, N>`
//! for Hessians.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// Nesting depth of derivative parts: 0 for `f64`, 1 for `Dual<f64, N>`, ...
    const ORDER: usize;

    fn from_f64(v: f64) -> Self;

    /// Innermost real value.
    fn re(&self) -> f64;

    /// Largest absolute value over the value and every derivative component.
    fn magnitude(&self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;

    /// Evaluates a smooth function `f(a, b)` at dual arguments, given its
    /// Taylor data at `(a.re(), b.re())`. Supports nesting depth up to 2.
    fn apply_jet(a: Self, b: Self, jet: &Jet2) -> Self;

    #[inline]
    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    #[inline]
    fn one() -> Self {
        Self::from_f64(1.0)
    }

    #[inline]
    fn recip(self) -> Self {
        Self::one() / self
    }

    #[inline]
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::one(),
            1 => self,
            2 => self * self,
            _ if n < 0 => self.powi(-n).recip(),
            _ => {
                let half = self.powi(n / 2);
                if n % 2 == 0 {
                    half * half
                } else {
                    half * half * self
                }
            }
        }
    }

    /// `self^p` for positive `self`.
    #[inline]
    fn powf(self, p: Self) -> Self {
        (p * self.ln()).exp()
    }
}

/// Second-order Taylor data of a bivariate function at a base point:
/// `[f, f_a, f_b, f_aa, f_ab, f_bb]`, truncated at `order`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub order: usize,
    pub d: [f64; 6],
}

impl Jet2 {
    pub fn new(d: [f64; 6]) -> Self {
        Self { order: 2, d }
    }

    fn d_a(&self) -> Jet2 {
        let d = &self.d;
        Jet2 {
            order: self.order.saturating_sub(1),
            d: [d[1], d[3], d[4], 0.0, 0.0, 0.0],
        }
    }

    fn d_b(&self) -> Jet2 {
        let d = &self.d;
        Jet2 {
            order: self.order.saturating_sub(1),
            d: [d[2], d[4], d[5], 0.0, 0.0, 0.0],
        }
    }
}

impl Scalar for f64 {
    const ORDER: usize = 0;

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    #[inline]
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    #[inline]
    fn apply_jet(_a: Self, _b: Self, jet: &Jet2) -> Self {
        jet.d[0]
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn powf(self, p: Self) -> Self {
        f64::powf(self, p)
    }
}

/// Forward-mode dual number with `N` directional derivatives over an inner
/// scalar `T`. `Dual<Dual<f64, N>, N>` carries exact second derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T, const N: usize> {
    pub re: T,
    pub du: [T; N],
}

impl<T: Scalar, const N: usize> Dual<T, N> {
    pub fn constant(re: T) -> Self {
        Self {
            re,
            du: [T::zero(); N],
        }
    }

    /// A variable seeded along direction `i`.
    pub fn variable(re: T, i: usize) -> Self {
        let mut du = [T::zero(); N];
        du[i] = T::one();
        Self { re, du }
    }

    /// Applies a univariate function with value `f` and derivative `df`
    /// (both already evaluated at `self.re`).
    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        let mut du = self.du;
        for d in du.iter_mut() {
            *d *= df;
        }
        Self { re: f, du }
    }
}

/// Seeds `x` as an `N`-dimensional gradient variable.
pub fn seed_gradient<const N: usize>(x: &[f64]) -> Vec<Dual<f64, N>> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| Dual::variable(v, i))
        .collect()
}

/// Seeds `x` for dual-over-dual Hessian evaluation.
pub fn seed_hessian<const N: usize>(x: &[f64]) -> Vec<Dual<Dual<f64, N>, N>> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| Dual::variable(Dual::variable(v, i), i))
        .collect()
}

impl<T: Scalar, const N: usize> Scalar for Dual<T, N> {
    const ORDER: usize = T::ORDER + 1;

    #[inline]
    fn from_f64(v: f64) -> Self {
        Self::constant(T::from_f64(v))
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re.re()
    }
    fn magnitude(&self) -> f64 {
        self.du
            .iter()
            .fold(self.re.magnitude(), |m, d| m.max(d.magnitude()))
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        self.chain(self.re.ln(), self.re.recip())
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, (s * 2.0).recip())
    }
    #[inline]
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    #[inline]
    fn sinh(self) -> Self {
        self.chain(self.re.sinh(), self.re.cosh())
    }
    #[inline]
    fn cosh(self) -> Self {
        self.chain(self.re.cosh(), self.re.sinh())
    }
    fn apply_jet(a: Self, b: Self, jet: &Jet2) -> Self {
        debug_assert!(
            jet.order >= Self::ORDER,
            "jet order too low for nesting depth"
        );
        let re = T::apply_jet(a.re, b.re, jet);
        let fa = T::apply_jet(a.re, b.re, &jet.d_a());
        let fb = T::apply_jet(a.re, b.re, &jet.d_b());
        let mut du = [T::zero(); N];
        for i in 0..N {
            du[i] = fa * a.du[i] + fb * b.du[i];
        }
        Self { re, du }
    }
}

impl<T: Scalar, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for i in 0..N {
            self.du[i] += rhs.du[i];
        }
        self
    }
}

impl<T: Scalar, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for i in 0..N {
            self.du[i] -= rhs.du[i];
        }
        self
    }
}

impl<T: Scalar, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut du = [T::zero(); N];
        for i in 0..N {
            du[i] = self.re * rhs.du[i] + self.du[i] * rhs.re;
        }
        Self {
            re: self.re * rhs.re,
            du,
        }
    }
}

impl<T: Scalar, const N: usize> Div for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = rhs.re.recip();
        let q = self.re * inv;
        let mut du = [T::zero(); N];
        for i in 0..N {
            du[i] = (self.du[i] - q * rhs.du[i]) * inv;
        }
        Self { re: q, du }
    }
}

impl<T: Scalar, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.re = -self.re;
        for d in self.du.iter_mut() {
            *d = -*d;
        }
        self
    }
}

impl<T: Scalar, const N: usize> Add<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.re = self.re + rhs;
        self
    }
}

impl<T: Scalar, const N: usize> Sub<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.re = self.re - rhs;
        self
    }
}

impl<T: Scalar, const N: usize> Mul<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(mut self, rhs: f64) -> Self {
        self.re = self.re * rhs;
        for d in self.du.iter_mut() {
            *d = *d * rhs;
        }
        self
    }
}

impl<T: Scalar, const N: usize> Div<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

macro_rules! assign_ops {
    ($($tr:ident $f:ident $op:tt),*) => {$(
        impl<T: Scalar, const N: usize> $tr for Dual<T, N> {
            #[inline]
            fn $f(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        }
    )*};
}

assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /);

/// Runs `$body` with `const $n: usize` bound to the runtime dimension `$dim`
/// (supported range 1..=12). Evaluates to `None` outside that range.
#[macro_export]
macro_rules! with_dim {
    ($dim:expr, $n:ident => $body:expr) => {{
        match $dim {
            1 => {
                const $n: usize = 1;
                Some($body)
            }
            2 => {
                const $n: usize = 2;
                Some($body)
            }
            3 => {
                const $n: usize = 3;
                Some($body)
            }
            4 => {
                const $n: usize = 4;
                Some($body)
            }
            5 => {
                const $n: usize = 5;
                Some($body)
            }
            6 => {
                const $n: usize = 6;
                Some($body)
            }
            7 => {
                const $n: usize = 7;
                Some($body)
            }
            8 => {
                const $n: usize = 8;
                Some($body)
            }
            9 => {
                const $n: usize = 9;
                Some($body)
            }
            10 => {
                const $n: usize = 10;
                Some($body)
            }
            11 => {
                const $n: usize = 11;
                Some($body)
            }
            12 => {
                const $n: usize = 12;
                Some($body)
            }
            _ => None,
        }
    }};
}

/// Largest parameter count supported by dual-number differentiation.
pub const MAX_DUAL_DIM: usize = 12;
