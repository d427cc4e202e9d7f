use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vecchia_em::em::NaiveVecchiaObjective;
use vecchia_em::kernels::{cov_matrix, KernelModel, MaternIsoParams};
use vecchia_em::optimize::*;
use vecchia_em::scalar::Scalar;
use vecchia_em::simulate::{sample_gp, sample_locations, SimSpec};
use vecchia_em::solver::{dense_factor, exact_nll};
use vecchia_em::vecchia::{plan, vecchia_nll, Conditioning, Ordering, VecchiaPlan};
use vecchia_em::{ModelParams, ModelSpec, Parameterization, Points, Result};

const RHO: f64 = 0.1;
const NU: f64 = 0.8;

fn truth() -> ModelParams {
    ModelSpec::matern_iso_with_nugget().params(&[2f64.ln(), 0.1f64.ln(), 1.2f64.ln(), 0.3f64.ln()])
}

fn data(n: usize, seed: u64) -> (Points, Vec<f64>) {
    let t = truth();
    let locs = sample_locations(&SimSpec::unit_square(n, t.clone(), seed), seed).unwrap();
    let (y, _) = sample_gp(&t.kernel, &t.noise, &locs, seed + 1).unwrap();
    (locs, y)
}

/// Noiseless NLL in `log sigma2` with the correlation fixed.
struct SigmaProfile<'a> {
    locs: &'a Points,
    y: &'a [f64],
    plan: &'a VecchiaPlan,
}

impl ScalarFn for SigmaProfile<'_> {
    fn dim(&self) -> usize {
        1
    }

    fn eval<T: Scalar>(&self, x: &[T]) -> Result<T> {
        let kernel = KernelModel::MaternIso(MaternIsoParams {
            sigma2: x[0].exp(),
            rho: T::from_f64(RHO),
            nu: T::from_f64(NU),
        });
        vecchia_nll(&kernel, None, self.plan, self.locs, self.y)
    }
}

#[test]
fn variance_mle_matches_closed_form() {
    let (locs, y) = data(100, 1);
    let corr = KernelModel::MaternIso(MaternIsoParams {
        sigma2: 1.0,
        rho: RHO,
        nu: NU,
    });
    let m = dense_factor(cov_matrix(&corr, &locs, None).unwrap()).unwrap();
    let qf: f64 = y.iter().zip(m.solve(&y)).map(|(a, b)| a * b).sum();
    let closed = qf / y.len() as f64;

    let p = plan(&locs, &Ordering::Maximin, Conditioning::Full).unwrap();
    let cfg = OptimizerConfig {
        grad_tol: 1e-10,
        ..OptimizerConfig::default()
    };
    let r = minimize(
        &AutoDiff(SigmaProfile {
            locs: &locs,
            y: &y,
            plan: &p,
        }),
        &[0.0],
        &cfg,
    )
    .unwrap();
    assert!(
        (r.x[0].exp() / closed - 1.0).abs() < 1e-8,
        "{} vs {closed} ({:?})",
        r.x[0].exp(),
        r.status
    );

    // Same through the dense exact likelihood with finite-difference derivatives.
    let obj = FnObjective {
        dim: 1,
        f: |x: &[f64]| {
            let k = KernelModel::MaternIso(MaternIsoParams {
                sigma2: x[0].exp(),
                rho: RHO,
                nu: NU,
            });
            exact_nll(
                &k,
                &vecchia_em::kernels::NoiseDiagParams::None,
                &locs,
                &y,
                false,
            )
            .unwrap()
        },
    };
    let r = minimize(&obj, &[1.0], &OptimizerConfig::default()).unwrap();
    assert!((r.x[0].exp() / closed - 1.0).abs() < 1e-6);
}

#[test]
fn dual_derivatives_match_finite_differences() {
    let (locs, y) = data(150, 2);
    let p = plan(&locs, &Ordering::Maximin, Conditioning::Nn { m: 8 }).unwrap();
    let spec = ModelSpec::matern_iso_with_nugget();
    let param = Parameterization::all_free(spec, truth().theta().unwrap());
    let f = NaiveVecchiaObjective {
        locs: &locs,
        y: &y,
        plan: &p,
        param: &param,
    };
    let (ad, fd) = (AutoDiff(&f), FiniteDiff(&f));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let x: Vec<f64> = truth()
            .theta()
            .unwrap()
            .iter()
            .map(|t| t + rng.random_range(-0.5..0.5))
            .collect();
        let (va, ga, ha) = ad.hessian(&x).unwrap();
        let (vf, gf) = fd.gradient(&x).unwrap();
        assert!((va - vf).abs() <= 1e-12 * va.abs());
        let gnorm = ga.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = ga
            .iter()
            .zip(&gf)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-5 * gnorm.max(1.0), "{ga:?} vs {gf:?}");
        let hf = fd_hessian(|z| f.eval::<f64>(z).unwrap(), &x, HRule::HESSIAN).unwrap();
        assert!(
            (&ha - &hf).norm() <= 1e-4 * ha.norm().max(1.0),
            "{ha} vs {hf}"
        );
    }
}

#[test]
fn fits_descend_and_methods_agree() {
    let (locs, y) = data(200, 4);
    let p = plan(&locs, &Ordering::Maximin, Conditioning::Nn { m: 10 }).unwrap();
    let param = Parameterization::all_free(
        ModelSpec::matern_iso_with_nugget(),
        truth().theta().unwrap(),
    );
    let f = NaiveVecchiaObjective {
        locs: &locs,
        y: &y,
        plan: &p,
        param: &param,
    };
    let x0 = [0.0, -1.5, 0.5, -0.5];
    let mut fits = Vec::new();
    for method in [Method::NewtonTrustRegion, Method::Bfgs] {
        let cfg = OptimizerConfig {
            method,
            max_evals: 2000,
            ..OptimizerConfig::default()
        };
        let r = minimize(&AutoDiff(&f), &x0, &cfg).unwrap();
        assert_eq!(r.status, Status::GradientTolerance, "{method:?}");
        assert!(r.f <= AutoDiff(&f).value(&x0));
        for w in r.trace.windows(2) {
            assert!(w[1].f < w[0].f, "{method:?}");
            assert!(w[1].evals > w[0].evals);
        }
        fits.push(r.x);
    }
    for (a, b) in fits[0].iter().zip(&fits[1]) {
        assert!((a - b).abs() < 1e-4, "{fits:?}");
    }

    let tight = OptimizerConfig {
        max_evals: 3,
        ..OptimizerConfig::default()
    };
    let r = minimize(&AutoDiff(&f), &x0, &tight).unwrap();
    assert_eq!(r.status, Status::MaxEvaluations);
    assert!(r.evals <= 3);
}

#[test]
fn fixed_parameters_stay_put() {
    let (locs, y) = data(120, 5);
    let p = plan(&locs, &Ordering::Maximin, Conditioning::Nn { m: 6 }).unwrap();
    let base = truth().theta().unwrap();
    let param = Parameterization::all_free(ModelSpec::matern_iso_with_nugget(), base.clone())
        .with_fixed(&["nu"])
        .unwrap();
    assert_eq!(param.dim(), 3);
    let f = NaiveVecchiaObjective {
        locs: &locs,
        y: &y,
        plan: &p,
        param: &param,
    };
    let r = minimize(
        &AutoDiff(&f),
        &param.free_values(&base),
        &OptimizerConfig::default(),
    )
    .unwrap();
    let full = param.expand(&r.x);
    assert_eq!(full[2], base[2]);
}

#[test]
fn invalid_configurations_are_rejected() {
    let obj = FnObjective {
        dim: 1,
        f: |x: &[f64]| x[0] * x[0],
    };
    for cfg in [
        OptimizerConfig {
            max_evals: 0,
            ..OptimizerConfig::default()
        },
        OptimizerConfig {
            grad_tol: 0.0,
            ..OptimizerConfig::default()
        },
        OptimizerConfig {
            step_tol: -1.0,
            ..OptimizerConfig::default()
        },
    ] {
        assert!(minimize(&obj, &[1.0], &cfg).is_err());
    }
    assert!(minimize(&obj, &[1.0, 2.0], &OptimizerConfig::default()).is_err());
}
