//! Parallel vs sequential cost of the main likelihood kernels.
//!
//! With the default `parallel` feature each kernel is timed on the global
//! rayon pool and inside a one-thread pool; `--no-default-features` builds
//! the sequential fallback and times it under the `sequential` label.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use vecchia_em::em::NaiveVecchiaObjective;
use vecchia_em::em::{estep_objective_sym, estep_prepare, EmConfig, EmProblem};
use vecchia_em::optimize::{AutoDiff, Objective};
use vecchia_em::simulate::{sample_gp, sample_locations, SimSpec};
use vecchia_em::trace::draw_saa;
use vecchia_em::vecchia::{plan, vecchia_nll, Conditioning, Ordering, VecchiaPlan};
use vecchia_em::{ModelParams, ModelSpec, Parameterization, Points};

const N: usize = 2000;

struct Fixture {
    truth: ModelParams,
    locs: Points,
    y: Vec<f64>,
    plan: VecchiaPlan,
}

fn fixture() -> Fixture {
    let spec = ModelSpec::matern_iso_with_nugget();
    let truth = spec.params(&[10f64.ln(), 0.025f64.ln(), 2.25f64.ln(), 0.25f64.ln()]);
    let locs = sample_locations(&SimSpec::unit_square(N, truth.clone(), 1), 1).unwrap();
    let (y, _) = sample_gp(&truth.kernel, &truth.noise, &locs, 2).unwrap();
    let plan = plan(&locs, &Ordering::Maximin, Conditioning::Nn { m: 10 }).unwrap();
    Fixture {
        truth,
        locs,
        y,
        plan,
    }
}

/// Runs `f` once per execution mode available in this build.
fn modes(mut f: impl FnMut(&str, &mut dyn FnMut(&mut (dyn FnMut() + Send)))) {
    #[cfg(feature = "parallel")]
    {
        f("parallel", &mut |body| body());
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        f("one_thread", &mut |body| one.install(&mut *body));
    }
    #[cfg(not(feature = "parallel"))]
    f("sequential", &mut |body| body());
}

fn benches(c: &mut Criterion) {
    let fx = fixture();
    let param = Parameterization::all_free(
        ModelSpec::matern_iso_with_nugget(),
        fx.truth.theta().unwrap(),
    );
    let theta = fx.truth.theta().unwrap();
    let problem = EmProblem {
        locs: &fx.locs,
        y: &fx.y,
        plan: &fx.plan,
        param: param.clone(),
    };
    let cfg = EmConfig::default();
    let ens = draw_saa(N, 72, 3);
    let estep = estep_prepare(&theta, &problem, Some(&ens), &cfg).unwrap();
    let naive = AutoDiff(NaiveVecchiaObjective {
        locs: &fx.locs,
        y: &fx.y,
        plan: &fx.plan,
        param: &param,
    });

    let mut g = c.benchmark_group("likelihood");
    g.sample_size(10);
    modes(|label, run| {
        g.bench_function(BenchmarkId::new("vecchia_nll", label), |b| {
            b.iter(|| {
                run(&mut || {
                    let v: f64 = vecchia_nll(
                        &fx.truth.kernel,
                        Some(&fx.truth.noise),
                        &fx.plan,
                        &fx.locs,
                        &fx.y,
                    )
                    .unwrap();
                    black_box(v);
                })
            })
        });
        g.bench_function(BenchmarkId::new("naive_gradient", label), |b| {
            b.iter(|| {
                run(&mut || {
                    black_box(naive.gradient(&theta));
                })
            })
        });
        g.bench_function(BenchmarkId::new("estep_prepare", label), |b| {
            b.iter(|| {
                run(&mut || {
                    black_box(estep_prepare(&theta, &problem, Some(&ens), &cfg).unwrap());
                })
            })
        });
        g.bench_function(BenchmarkId::new("e_objective", label), |b| {
            b.iter(|| {
                run(&mut || {
                    black_box(estep_objective_sym(&theta, &estep, &problem).unwrap());
                })
            })
        });
    });
    g.finish();
}

criterion_group!(likelihood, benches);
criterion_main!(likelihood);
