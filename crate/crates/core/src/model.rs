//! Parameter vectors in optimization coordinates.
//!
//! Positive quantities are stored as logarithms; the anisotropy off-diagonal
//! `W12` is unconstrained. Kernel parameters come first, then noise
//! parameters, so the two groups never overlap.

use crate::error::{Error, Result};
use crate::kernels::{AnisoKnotParams, KernelModel, MaternIsoParams, NoiseDiagParams};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum KernelKind {
    MaternIso,
    AnisoKnot { knots: [f64; 3] },
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoiseKind {
    None,
    Constant,
    Knot { knots: [f64; 3] },
}

/// The structure of a kernel + noise model, without values.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub kernel: KernelKind,
    pub noise: NoiseKind,
}

/// Concrete kernel and noise parameters in natural units.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub kernel: KernelModel<f64>,
    pub noise: NoiseDiagParams<f64>,
}

impl ModelSpec {
    pub fn matern_iso_with_nugget() -> Self {
        Self {
            kernel: KernelKind::MaternIso,
            noise: NoiseKind::Constant,
        }
    }

    pub fn n_kernel(&self) -> usize {
        match self.kernel {
            KernelKind::MaternIso => 3,
            KernelKind::AnisoKnot { .. } => 7,
        }
    }

    pub fn n_noise(&self) -> usize {
        match self.noise {
            NoiseKind::None => 0,
            NoiseKind::Constant => 1,
            NoiseKind::Knot { .. } => 3,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_kernel() + self.n_noise()
    }

    /// Indices of the noise parameters in the full vector.
    pub fn noise_indices(&self) -> std::ops::Range<usize> {
        self.n_kernel()..self.dim()
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = match self.kernel {
            KernelKind::MaternIso => vec!["sigma2", "rho", "nu"],
            KernelKind::AnisoKnot { .. } => {
                vec!["sigma1", "sigma2", "sigma3", "W11", "W12", "W22", "nu"]
            }
        };
        match self.noise {
            NoiseKind::None => {}
            NoiseKind::Constant => out.push("eta2"),
            NoiseKind::Knot { .. } => out.extend(["eta1", "eta2", "eta3"]),
        }
        out
    }

    /// Whether coordinate `i` is stored on the log scale.
    pub fn is_log(&self, i: usize) -> bool {
        !(matches!(self.kernel, KernelKind::AnisoKnot { .. }) && i == 4)
    }

    pub fn kernel<T: Scalar>(&self, theta: &[T]) -> KernelModel<T> {
        match self.kernel {
            KernelKind::MaternIso => KernelModel::MaternIso(MaternIsoParams {
                sigma2: theta[0].exp(),
                rho: theta[1].exp(),
                nu: theta[2].exp(),
            }),
            KernelKind::AnisoKnot { knots } => KernelModel::AnisoKnot(AnisoKnotParams {
                sigmas: [theta[0].exp(), theta[1].exp(), theta[2].exp()],
                w11: theta[3].exp(),
                w12: theta[4],
                w22: theta[5].exp(),
                nu: theta[6].exp(),
                knots,
            }),
        }
    }

    pub fn noise<T: Scalar>(&self, theta: &[T]) -> NoiseDiagParams<T> {
        let k = self.n_kernel();
        match self.noise {
            NoiseKind::None => NoiseDiagParams::None,
            NoiseKind::Constant => NoiseDiagParams::Constant {
                eta2: theta[k].exp(),
            },
            NoiseKind::Knot { knots } => NoiseDiagParams::Knot {
                etas: [theta[k].exp(), theta[k + 1].exp(), theta[k + 2].exp()],
                knots,
            },
        }
    }

    pub fn params(&self, theta: &[f64]) -> ModelParams {
        ModelParams {
            kernel: self.kernel(theta),
            noise: self.noise(theta),
        }
    }

    /// Same structure with the noise model removed (kernel-only fits).
    pub fn without_noise(&self) -> ModelSpec {
        ModelSpec {
            kernel: self.kernel.clone(),
            noise: NoiseKind::None,
        }
    }
}

impl ModelParams {
    pub fn spec(&self) -> ModelSpec {
        let kernel = match &self.kernel {
            KernelModel::MaternIso(_) => KernelKind::MaternIso,
            KernelModel::AnisoKnot(p) => KernelKind::AnisoKnot { knots: p.knots },
        };
        let noise = match &self.noise {
            NoiseDiagParams::None => NoiseKind::None,
            NoiseDiagParams::Constant { .. } => NoiseKind::Constant,
            NoiseDiagParams::Knot { knots, .. } => NoiseKind::Knot { knots: *knots },
        };
        ModelSpec { kernel, noise }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.noise.validate()
    }

    /// Optimization coordinates of these parameters.
    pub fn theta(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let mut out = match &self.kernel {
            KernelModel::MaternIso(p) => vec![p.sigma2.ln(), p.rho.ln(), p.nu.ln()],
            KernelModel::AnisoKnot(p) => vec![
                p.sigmas[0].ln(),
                p.sigmas[1].ln(),
                p.sigmas[2].ln(),
                p.w11.ln(),
                p.w12,
                p.w22.ln(),
                p.nu.ln(),
            ],
        };
        match &self.noise {
            NoiseDiagParams::None => {}
            NoiseDiagParams::Constant { eta2 } => out.push(eta2.ln()),
            NoiseDiagParams::Knot { etas, .. } => out.extend(etas.iter().map(|e| e.ln())),
        }
        Ok(out)
    }

    /// Natural-unit values in [`ModelSpec::names`] order.
    pub fn values(&self) -> Vec<f64> {
        let spec = self.spec();
        let theta = self.theta().unwrap_or_else(|_| vec![f64::NAN; spec.dim()]);
        theta
            .iter()
            .enumerate()
            .map(|(i, &t)| if spec.is_log(i) { t.exp() } else { t })
            .collect()
    }
}

/// A subset of free coordinates over a full parameter vector; the remaining
/// coordinates stay at their base values.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameterization {
    pub spec: ModelSpec,
    pub base: Vec<f64>,
    pub free: Vec<usize>,
}

impl Parameterization {
    pub fn all_free(spec: ModelSpec, base: Vec<f64>) -> Self {
        let free = (0..spec.dim()).collect();
        Self { spec, base, free }
    }

    /// Fixes the named parameters at their base values.
    pub fn with_fixed(mut self, names: &[&str]) -> Result<Self> {
        let all = self.spec.names();
        for name in names {
            let idx = all
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))?;
            self.free.retain(|&i| i != idx);
        }
        if self.free.is_empty() {
            return Err(Error::Config("no free parameters left".into()));
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn free_values(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| full[i]).collect()
    }

    pub fn expand<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let mut full: Vec<T> = self.base.iter().map(|&v| T::from_f64(v)).collect();
        for (k, &i) in self.free.iter().enumerate() {
            full[i] = x[k];
        }
        full
    }

    pub fn with_base(&self, base: Vec<f64>) -> Self {
        Self {
            spec: self.spec.clone(),
            base,
            free: self.free.clone(),
        }
    }
}
