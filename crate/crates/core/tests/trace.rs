use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vecchia_em::trace::{draw_saa, estimate_variance, hutchinson_samples, hutchinson_trace};

fn gaussian(n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, n, |_, _| r.sample(StandardNormal))
}

fn symmetric(n: usize, seed: u64) -> DMatrix<f64> {
    let b = gaussian(n, seed);
    (&b + b.transpose()) * 0.5
}

fn spd(n: usize, seed: u64) -> DMatrix<f64> {
    let b = gaussian(n, seed);
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n)
}

fn op(a: &DMatrix<f64>) -> impl Fn(&[f64]) -> Vec<f64> + Sync + Send + '_ {
    move |v| (a * DVector::from_column_slice(v)).as_slice().to_vec()
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (
        m,
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0),
    )
}

#[test]
fn probe_rows_are_centred_and_columns_have_norm_n() {
    let (n, s) = (100, 10_000);
    let ens = draw_saa(n, s, 3);
    for k in 0..n {
        let mean = ens.columns().iter().map(|c| c[k]).sum::<f64>() / s as f64;
        assert!(mean.abs() <= 4.0 / (s as f64).sqrt(), "row {k}: {mean}");
    }
    for c in ens.columns() {
        assert_eq!(c.iter().map(|v| v * v).sum::<f64>(), n as f64);
    }
    assert_eq!(draw_saa(n, 20, 3).columns(), &ens.columns()[..20]);
}

#[test]
fn identity_gives_n_for_every_ensemble() {
    let id = DMatrix::<f64>::identity(37, 37);
    for seed in 0..5 {
        assert_eq!(hutchinson_trace(op(&id), &draw_saa(37, 3, seed)), 37.0);
    }
}

#[test]
fn random_symmetric_matrix_within_five_standard_errors() {
    let a = symmetric(50, 1);
    let s = 10_000;
    let samples = hutchinson_samples(op(&a), &draw_saa(50, s, 2));
    let (mean, var) = mean_var(&samples);
    let se = (var / s as f64).sqrt();
    assert!(
        (mean - a.trace()).abs() < 5.0 * se,
        "{mean} vs {}",
        a.trace()
    );
    assert!(var <= 1.5 * estimate_variance(&a));
}

#[test]
fn unbiased_over_independent_ensembles() {
    let a = symmetric(30, 4);
    let means: Vec<f64> = (0..200)
        .map(|e| hutchinson_trace(op(&a), &draw_saa(30, 50, 1000 + e)))
        .collect();
    let (m, v) = mean_var(&means);
    let se = (v / means.len() as f64).sqrt();
    assert!((m - a.trace()).abs() < 4.0 * se, "{m} vs {}", a.trace());
}

#[test]
fn symmetrized_estimator_is_no_worse_and_has_the_same_mean() {
    let n = 40;
    let probes = 10_000;
    for pair in 0..4u64 {
        let a = spd(n, 10 + pair);
        let b = spd(n, 20 + pair);
        let l = a.clone().cholesky().unwrap().unpack();
        let ab = &a * &b;
        let ltbl = l.transpose() * &b * &l;
        let ens = draw_saa(n, probes, 30 + pair);
        let unsym = hutchinson_samples(op(&ab), &ens);
        let sym = hutchinson_samples(op(&ltbl), &ens);
        let (mu, vu) = mean_var(&unsym);
        let (ms, vs) = mean_var(&sym);

        // Standard error of a sample variance: sd of squared deviations / sqrt(N).
        let var_se = |x: &[f64], m: f64| {
            let d: Vec<f64> = x.iter().map(|t| (t - m).powi(2)).collect();
            (mean_var(&d).1 / x.len() as f64).sqrt()
        };
        assert!(
            vs <= vu + 3.0 * (var_se(&sym, ms) + var_se(&unsym, mu)),
            "pair {pair}: {vs} vs {vu}"
        );

        let diff: Vec<f64> = sym.iter().zip(&unsym).map(|(s, u)| s - u).collect();
        let (md, vd) = mean_var(&diff);
        assert!(md.abs() < 5.0 * (vd / probes as f64).sqrt(), "pair {pair}");
        let t = ab.trace();
        assert!((ms - t).abs() < 5.0 * (vs / probes as f64).sqrt());
    }
}

#[test]
fn variance_formula_matches_monte_carlo() {
    let a = symmetric(20, 5);
    let probes = 100_000;
    let samples = hutchinson_samples(op(&a), &draw_saa(20, probes, 6));
    let (_, v) = mean_var(&samples);
    let formula = estimate_variance(&a);
    assert!((v / formula - 1.0).abs() < 0.05, "{v} vs {formula}");
}
