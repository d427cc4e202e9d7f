//! Replicated simulation study: simulate, fit naive Vecchia, refine with EM,
//! score both fits with the exact likelihood and compare center-point
//! predictions.

use crate::em::{em_fit, fit_naive_vecchia, saa_diagnostic, EmConfig, EmProblem, EmStatus, SaaRow};
use crate::error::Result;
use crate::model::{ModelParams, Parameterization};
use crate::optimize::OptimizerConfig;
use crate::par;
use crate::points::Points;
use crate::simulate::{predict_nn, replicate_seed, sample_gp, sample_locations, SimSpec};
use crate::solver::exact_nll;
use crate::vecchia::{plan, Conditioning, Ordering};
use std::fmt::Write;
use std::time::Instant;

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub sim: SimSpec,
    pub ordering: Ordering,
    pub conditioning: Conditioning,
    pub naive: OptimizerConfig,
    pub em: EmConfig,
    /// Neighbours used for the center-point prediction.
    pub predict_k: usize,
    pub center: Vec<f64>,
}

impl StudyConfig {
    /// Scaled version of the fixed-parameter experiment: maximin ordering,
    /// ten nearest neighbours, 72 probes, at most 30 EM iterations.
    pub fn scaled(n: usize, truth: ModelParams, replicates: usize, seed: u64) -> Self {
        let mut sim = SimSpec::unit_square(n, truth, seed);
        sim.replicates = replicates;
        Self {
            sim,
            ordering: Ordering::Maximin,
            conditioning: Conditioning::Nn { m: 10 },
            naive: OptimizerConfig::default(),
            em: EmConfig {
                track_nll: false,
                ..EmConfig::default()
            },
            predict_k: 500.min(n),
            center: vec![0.5, 0.5],
        }
    }
}

/// One replicate's outcome. Parameter vectors are in optimization
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub theta_naive: Vec<f64>,
    pub theta_em: Vec<f64>,
    pub exact_nll_truth: f64,
    pub exact_nll_naive: f64,
    pub exact_nll_em: f64,
    pub em_iterations: usize,
    pub em_converged: bool,
    /// Kriging means at the center under the true, naive and EM parameters.
    pub pred_truth: f64,
    pub pred_naive: f64,
    pub pred_em: f64,
    pub seconds_naive: f64,
    pub seconds_em: f64,
}

/// Replicate `r`'s seed, locations and observations.
pub fn replicate_data(cfg: &StudyConfig, r: usize) -> Result<(u64, Points, Vec<f64>)> {
    let seed = replicate_seed(cfg.sim.seed, r);
    let truth = &cfg.sim.params;
    let locs = sample_locations(&cfg.sim, seed)?;
    let (y, _) = sample_gp(&truth.kernel, &truth.noise, &locs, seed.wrapping_add(1))?;
    Ok((seed, locs, y))
}

fn em_config(cfg: &StudyConfig, seed: u64) -> EmConfig {
    let mut em = cfg.em.clone();
    em.seed = seed.wrapping_add(2);
    em
}

/// Runs replicate `r`.
pub fn run_replicate(cfg: &StudyConfig, r: usize) -> Result<ReplicateResult> {
    let (seed, locs, y) = replicate_data(cfg, r)?;
    let truth = &cfg.sim.params;
    let spec = truth.spec();
    let theta_true = truth.theta()?;
    let p = plan(&locs, &cfg.ordering, cfg.conditioning)?;
    let param = Parameterization::all_free(spec.clone(), theta_true.clone());

    let t0 = Instant::now();
    let (theta_naive, _) = fit_naive_vecchia(&locs, &y, &p, &param, &cfg.naive)?;
    let seconds_naive = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let problem = EmProblem {
        locs: &locs,
        y: &y,
        plan: &p,
        param: param.with_base(theta_naive.clone()),
    };
    let state = em_fit(&problem, &theta_naive, &em_config(cfg, seed))?;
    let seconds_em = t0.elapsed().as_secs_f64();

    let score = |theta: &[f64]| -> Result<f64> {
        let q = spec.params(theta);
        exact_nll(&q.kernel, &q.noise, &locs, &y, false)
    };
    let predict = |theta: &[f64]| -> Result<f64> {
        let q = spec.params(theta);
        Ok(predict_nn(&q.kernel, &q.noise, &locs, &y, &cfg.center, cfg.predict_k)?.0)
    };
    Ok(ReplicateResult {
        replicate: r,
        seed,
        exact_nll_truth: score(&theta_true)?,
        exact_nll_naive: score(&theta_naive)?,
        exact_nll_em: score(&state.theta0)?,
        em_iterations: state.iteration,
        em_converged: state.status == EmStatus::Converged,
        pred_truth: predict(&theta_true)?,
        pred_naive: predict(&theta_naive)?,
        pred_em: predict(&state.theta0)?,
        theta_naive,
        theta_em: state.theta0,
        seconds_naive,
        seconds_em,
    })
}

/// The probe-count diagnostic for replicate `r` at `theta0`, with the same
/// data, plan and probe seed as [`run_replicate`].
pub fn replicate_saa_diagnostic(
    cfg: &StudyConfig,
    r: usize,
    theta0: &[f64],
    counts: &[usize],
) -> Result<Vec<SaaRow>> {
    let (seed, locs, y) = replicate_data(cfg, r)?;
    let p = plan(&locs, &cfg.ordering, cfg.conditioning)?;
    let problem = EmProblem {
        locs: &locs,
        y: &y,
        plan: &p,
        param: Parameterization::all_free(cfg.sim.params.spec(), theta0.to_vec()),
    };
    saa_diagnostic(&problem, theta0, &em_config(cfg, seed), counts)
}

/// Runs all replicates (concurrently when the `parallel` feature is on).
/// Failures are kept per replicate so one bad draw does not end the study.
pub fn run_study(cfg: &StudyConfig) -> Vec<std::result::Result<ReplicateResult, String>> {
    par::map_indices(cfg.sim.replicates, |r| {
        run_replicate(cfg, r).map_err(|e| {
            log::warn!("replicate {r} failed: {e}");
            e.to_string()
        })
    })
}

/// Per-replicate CSV; parameters in natural units.
pub fn study_csv(
    cfg: &StudyConfig,
    rows: &[std::result::Result<ReplicateResult, String>],
) -> String {
    let spec = cfg.sim.params.spec();
    let names = spec.names();
    let mut out = String::from("replicate,seed,status");
    for pre in ["naive", "em"] {
        for n in &names {
            let _ = write!(out, ",{n}_{pre}");
        }
    }
    out.push_str(
        ",exact_nll_truth,exact_nll_naive,exact_nll_em,em_iterations,em_converged,\
         pred_truth,pred_naive,pred_em,seconds_naive,seconds_em\n",
    );
    let natural = |theta: &[f64]| -> Vec<f64> {
        theta
            .iter()
            .enumerate()
            .map(|(i, t)| if spec.is_log(i) { t.exp() } else { *t })
            .collect()
    };
    for (r, row) in rows.iter().enumerate() {
        match row {
            Ok(res) => {
                let _ = write!(out, "{},{},ok", res.replicate, res.seed);
                for v in natural(&res.theta_naive)
                    .into_iter()
                    .chain(natural(&res.theta_em))
                {
                    let _ = write!(out, ",{v:?}");
                }
                let _ = writeln!(
                    out,
                    ",{:?},{:?},{:?},{},{},{:?},{:?},{:?}",
                    res.exact_nll_truth,
                    res.exact_nll_naive,
                    res.exact_nll_em,
                    res.em_iterations,
                    res.em_converged,
                    res.pred_truth,
                    res.pred_naive,
                    res.pred_em
                );
            }
            Err(e) => {
                let blanks = 2 * names.len() + 8;
                let msg = e.replace([',', '\n'], ";");
                let _ = writeln!(
                    out,
                    "{r},{},failed: {msg}{}",
                    replicate_seed(cfg.sim.seed, r),
                    ",".repeat(blanks)
                );
            }
        }
    }
    out
}

/// Per-replicate wall-clock seconds, separate from [`study_csv`] so the
/// results file is reproducible bit for bit.
pub fn study_timings_csv(rows: &[std::result::Result<ReplicateResult, String>]) -> String {
    let mut out = String::from("replicate,seconds_naive,seconds_em\n");
    for r in rows.iter().flatten() {
        let _ = writeln!(
            out,
            "{},{:.3},{:.3}",
            r.replicate, r.seconds_naive, r.seconds_em
        );
    }
    out
}
