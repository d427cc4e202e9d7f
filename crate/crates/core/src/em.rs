//! EM for `y = z + eps` with a Vecchia-approximated latent precision.
//!
//! Each iteration freezes everything that depends on the current estimate
//! `theta0` (the conditional mean and the presolved probes) and then
//! minimizes the stochastic E-function over `theta`. The trace term enters
//! blockwise: for every Vecchia block we keep the `k x k` matrix of probe
//! second moments restricted to the block's columns, so evaluating the
//! E-function costs one Vecchia likelihood pass regardless of the number of
//! probes.

use crate::error::{Error, Result};
use crate::kernels::NoiseDiagParams;
use crate::model::{ModelSpec, Parameterization};
use crate::optimize::{
    minimize, AutoDiff, FiniteDiff, GradMode, OptimResult, OptimizerConfig, ScalarFn, Status,
};
use crate::par;
use crate::points::Points;
use crate::scalar::Scalar;
use crate::solver::{
    approx_nll, check_dense, factorize, solve_many, solve_spd, Backend, PrecisionSystem,
};
use crate::trace::{draw_saa, PresolveMode, SaaEnsemble, DEFAULT_SAA_COUNT};
use crate::vecchia::{assemble_precision_factor, block_sum, vecchia_nll, VecchiaPlan};
use std::f64::consts::PI;
use std::fmt::Write;
use std::time::Instant;

/// How the E-function's trace term is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceMode {
    /// Hutchinson with `W^{-T} v_j` (needs a direct factorization).
    Symmetrized,
    /// Hutchinson with `v_j` and `A^{-1} v_j`.
    Unsymmetrized,
    /// Exact trace from a dense `A(theta0)^{-1}` (small problems only).
    Exact,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmConfig {
    pub saa_count: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when `|theta_{j+1} - theta_j| <= tol` in optimization coordinates.
    pub tol: f64,
    pub trace_mode: TraceMode,
    pub backend: Backend,
    pub mstep: OptimizerConfig,
    /// Record the approximate marginal NLL of every iterate in the history.
    pub track_nll: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            saa_count: DEFAULT_SAA_COUNT,
            seed: 0,
            max_iter: 30,
            tol: 1e-4,
            trace_mode: TraceMode::Symmetrized,
            backend: Backend::Sparse,
            mstep: OptimizerConfig::default(),
            track_nll: true,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.saa_count == 0 && self.trace_mode != TraceMode::Exact {
            return Err(Error::Config("saa_count must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if self.trace_mode == TraceMode::Symmetrized && matches!(self.backend, Backend::Cg { .. }) {
            return Err(Error::Config(
                "the symmetrized E-function needs a direct (dense or sparse) backend".into(),
            ));
        }
        self.mstep.validate()
    }
}

/// Data, plan and parameterization shared by all EM steps.
pub struct EmProblem<'a> {
    pub locs: &'a Points,
    pub y: &'a [f64],
    pub plan: &'a VecchiaPlan,
    pub param: Parameterization,
}

impl EmProblem<'_> {
    pub fn spec(&self) -> &ModelSpec {
        &self.param.spec
    }

    fn check(&self) -> Result<()> {
        let n = self.locs.len();
        for got in [self.y.len(), self.plan.len()] {
            if got != n {
                return Err(Error::DimensionMismatch { expected: n, got });
            }
        }
        if self.spec().n_noise() == 0 {
            return Err(Error::Config(
                "EM needs a model with observation noise".into(),
            ));
        }
        Ok(())
    }
}

/// Everything frozen at `theta0` for one M-step.
#[derive(Clone, Debug)]
pub struct EStep {
    pub theta0: Vec<f64>,
    /// Conditional mean of the latent field (original order).
    pub z_hat: Vec<f64>,
    z_pos: Vec<f64>,
    resid: Vec<f64>,
    /// Per-block `k x k` probe moment matrices.
    block_p: Vec<Vec<f64>>,
    /// Estimated `diag(A(theta0)^{-1})` (original order).
    noise_d: Vec<f64>,
    pub mode: TraceMode,
    /// Probes in position order, presolved per `mode`.
    pub ensemble: Option<SaaEnsemble>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major `n x S` copy of a set of columns.
fn rows_of(cols: &[Vec<f64>], n: usize) -> Vec<f64> {
    let s = cols.len();
    let mut out = vec![0.0; n * s];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            out[i * s + j] = c[i];
        }
    }
    out
}

/// Solves for `z_hat(theta0)`, presolves the probes and builds the per-block
/// moment matrices.
pub fn estep_prepare(
    theta0: &[f64],
    problem: &EmProblem,
    ensemble: Option<&SaaEnsemble>,
    config: &EmConfig,
) -> Result<EStep> {
    problem.check()?;
    let spec = problem.spec();
    let plan = problem.plan;
    let n = plan.len();
    let params = spec.params(theta0);
    params.validate()?;
    let sys = PrecisionSystem::new(&params.kernel, &params.noise, plan, problem.locs)?;
    let yp = plan.to_positions(problem.y);
    let rhs: Vec<f64> = yp.iter().zip(&sys.r_inv).map(|(a, b)| a * b).collect();

    let mode = config.trace_mode;
    let probes = match mode {
        TraceMode::Exact => None,
        _ => Some(ensemble.ok_or_else(|| {
            Error::Config("a probe ensemble is required for stochastic traces".into())
        })?),
    };
    let direct = !matches!(config.backend, Backend::Cg { .. });
    let factor = if direct || mode == TraceMode::Exact {
        let backend = if direct {
            config.backend
        } else {
            Backend::Sparse
        };
        Some(factorize(&sys, &backend)?)
    } else {
        None
    };
    let z_pos = match (&factor, direct) {
        (Some(f), true) => f.solve(&rhs),
        _ => solve_spd(&sys, &rhs, &config.backend)?,
    };

    let (block_p, noise_pos, ens) = match mode {
        TraceMode::Exact => {
            check_dense(n, false)?;
            let ainv = factor.as_ref().expect("factor exists").inverse();
            let block_p = par::map_indices(plan.n_blocks(), |j| {
                let cols = plan.block_cols(j);
                let k = cols.len();
                let mut p = vec![0.0; k * k];
                for a in 0..k {
                    for b in 0..k {
                        p[a * k + b] = ainv[(cols[a], cols[b])];
                    }
                }
                p
            });
            let d: Vec<f64> = (0..n).map(|i| ainv[(i, i)]).collect();
            (block_p, d, None)
        }
        TraceMode::Symmetrized | TraceMode::Unsymmetrized => {
            let ens = probes.expect("checked above");
            if ens.n != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: ens.n,
                });
            }
            let s = ens.count();
            let (pmode, pres) = if mode == TraceMode::Symmetrized {
                let f = factor.as_ref().expect("direct backend");
                (
                    PresolveMode::Symmetrized,
                    par::map_slice(ens.columns(), |v| f.half_solve_t(v)),
                )
            } else if let Some(f) = factor.as_ref() {
                (
                    PresolveMode::Unsymmetrized,
                    par::map_slice(ens.columns(), |v| f.solve(v)),
                )
            } else {
                (
                    PresolveMode::Unsymmetrized,
                    solve_many(&sys, ens.columns(), &config.backend)?,
                )
            };
            let left = rows_of(&pres, n);
            let right = if pmode == PresolveMode::Symmetrized {
                None
            } else {
                Some(rows_of(ens.columns(), n))
            };
            let right_rows = right.as_deref().unwrap_or(&left);
            let inv_s = 1.0 / s as f64;
            let row = |rows: &[f64], i: usize| rows[i * s..(i + 1) * s].to_vec();
            let block_p = par::map_indices(plan.n_blocks(), |j| {
                let cols = plan.block_cols(j);
                let k = cols.len();
                let l: Vec<Vec<f64>> = cols.iter().map(|&c| row(&left, c)).collect();
                let r: Vec<Vec<f64>> = cols.iter().map(|&c| row(right_rows, c)).collect();
                let mut p = vec![0.0; k * k];
                for a in 0..k {
                    for b in 0..k {
                        p[a * k + b] = dot(&l[a], &r[b]) * inv_s;
                    }
                }
                p
            });
            let d: Vec<f64> = (0..n)
                .map(|i| dot(&left[i * s..(i + 1) * s], &right_rows[i * s..(i + 1) * s]) * inv_s)
                .collect();
            let mut e = ens.clone();
            e.presolved = Some((pmode, pres));
            (block_p, d, Some(e))
        }
    };

    let z_hat = plan.from_positions(&z_pos);
    let resid = problem.y.iter().zip(&z_hat).map(|(a, b)| a - b).collect();
    Ok(EStep {
        theta0: theta0.to_vec(),
        z_hat,
        z_pos,
        resid,
        block_p,
        noise_d: plan.from_positions(&noise_pos),
        mode,
        ensemble: ens,
    })
}

fn invalid_to_inf<T: Scalar>(r: Result<T>) -> Result<T> {
    match r {
        Err(
            Error::InvalidParameter(_)
            | Error::NotPositiveDefinite(_)
            | Error::Domain(_)
            | Error::Overflow(_),
        ) => Ok(T::from_f64(f64::INFINITY)),
        other => other,
    }
}

/// `(sum_i log r_i + (e_i^2 + d_i) / r_i + n log 2 pi) / 2`.
fn noise_terms<T: Scalar>(
    noise: &NoiseDiagParams<T>,
    locs: &Points,
    resid: &[f64],
    d: &[f64],
) -> Result<T> {
    noise.validate()?;
    if noise.is_none() {
        return Err(Error::InvalidParameter("noise model required".into()));
    }
    let mut s = T::zero();
    for (i, x) in locs.iter().enumerate() {
        let r = noise.variance_at(x);
        s += r.ln() + r.recip() * (resid[i] * resid[i] + d[i]);
    }
    Ok((s + resid.len() as f64 * (2.0 * PI).ln()) * 0.5)
}

fn vecchia_form<T: Scalar>(theta: &[T], estep: &EStep, problem: &EmProblem) -> Result<T> {
    let spec = problem.spec();
    let kernel = spec.kernel(theta);
    kernel.validate()?;
    let noise = spec.noise(theta);
    let noise_part = noise_terms(&noise, problem.locs, &estep.resid, &estep.noise_d)?;
    let [det, qf, tr] = block_sum(&kernel, None, problem.plan, problem.locs, |j, bf| {
        [
            bf.logdet,
            bf.qf(&estep.z_pos),
            bf.trace_with(&estep.block_p[j]),
        ]
    })?;
    let n = problem.y.len() as f64;
    Ok((det + qf + tr + n * (2.0 * PI).ln()) * 0.5 + noise_part)
}

/// Blockwise E-function
/// `(det + qf(z_hat) + n log 2pi)/2 + tr/2 + sum_i d_i / (2 r_i) + l_R(y - z_hat)`,
/// where `tr` is the probe (or exact) trace of `Omega(theta)` against
/// `A(theta0)^{-1}`. Invalid parameters give `+inf`.
pub fn estep_objective_vecchia<T: Scalar>(
    theta: &[T],
    estep: &EStep,
    problem: &EmProblem,
) -> Result<T> {
    invalid_to_inf(vecchia_form(theta, estep, problem))
}

fn literal_form(
    theta: &[f64],
    estep: &EStep,
    problem: &EmProblem,
    want: PresolveMode,
) -> Result<f64> {
    let ens = estep.ensemble.as_ref().ok_or_else(|| {
        Error::Config("this E-function form needs a stochastic (probe) E-step".into())
    })?;
    let (mode, pres) = ens.presolved.as_ref().expect("presolved at E-step");
    if *mode != want {
        return Err(Error::Config(format!(
            "E-step was prepared in {mode:?} mode, not {want:?}"
        )));
    }
    let spec = problem.spec();
    let params = spec.params(theta);
    params.validate()?;
    let plan = problem.plan;
    let factor = assemble_precision_factor(&params.kernel, plan, problem.locs)?;
    let r = params.noise.diagonal(problem.locs);
    if r.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter(
            "noise variance must be positive".into(),
        ));
    }
    let r_inv = plan.to_positions(&r.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
    let terms = par::map_indices(ens.count(), |j| {
        let p = &pres[j];
        match want {
            PresolveMode::Symmetrized => {
                let rq: f64 = p.iter().zip(&r_inv).map(|(v, ri)| v * v * ri).sum();
                factor.qf_positions(p) + rq
            }
            PresolveMode::Unsymmetrized => {
                let v = ens.column(j);
                let gv = factor.apply_g(v);
                let gp = factor.apply_g(p);
                let rq: f64 = p
                    .iter()
                    .zip(v)
                    .zip(&r_inv)
                    .map(|((a, b), ri)| a * b * ri)
                    .sum();
                dot(&gv, &gp) + rq
            }
        }
    });
    let trace = terms.iter().sum::<f64>() / ens.count() as f64;
    let n = problem.y.len() as f64;
    let l_s = 0.5
        * (-factor.log_det_precision() + factor.qf_positions(&estep.z_pos) + n * (2.0 * PI).ln());
    let l_r: f64 = 0.5
        * (r.iter()
            .zip(&estep.resid)
            .map(|(ri, e)| ri.ln() + e * e / ri)
            .sum::<f64>()
            + n * (2.0 * PI).ln());
    Ok(0.5 * trace + l_s + l_r)
}

/// Symmetrized stochastic E-function evaluated through the assembled
/// precision factor: `(1/2S) sum_j vt_j^T (Omega + R^{-1}) vt_j + l_S(z_hat) + l_R(y - z_hat)`.
pub fn estep_objective_sym(theta: &[f64], estep: &EStep, problem: &EmProblem) -> Result<f64> {
    invalid_to_inf(literal_form(
        theta,
        estep,
        problem,
        PresolveMode::Symmetrized,
    ))
}

/// Unsymmetrized form `(1/2S) sum_j v_j^T (Omega + R^{-1}) vbar_j + ...`.
pub fn estep_objective_asym(theta: &[f64], estep: &EStep, problem: &EmProblem) -> Result<f64> {
    invalid_to_inf(literal_form(
        theta,
        estep,
        problem,
        PresolveMode::Unsymmetrized,
    ))
}

/// The E-function over the free coordinates of the problem's
/// parameterization.
pub struct EObjective<'a> {
    pub estep: &'a EStep,
    pub problem: &'a EmProblem<'a>,
}

impl ScalarFn for EObjective<'_> {
    fn dim(&self) -> usize {
        self.problem.param.dim()
    }

    fn eval<T: Scalar>(&self, x: &[T]) -> Result<T> {
        vecchia_form(&self.problem.param.expand(x), self.estep, self.problem)
    }
}

/// Naive Vecchia NLL of the noisy data (nugget folded into every block).
pub struct NaiveVecchiaObjective<'a> {
    pub locs: &'a Points,
    pub y: &'a [f64],
    pub plan: &'a VecchiaPlan,
    pub param: &'a Parameterization,
}

impl ScalarFn for NaiveVecchiaObjective<'_> {
    fn dim(&self) -> usize {
        self.param.dim()
    }

    fn eval<T: Scalar>(&self, x: &[T]) -> Result<T> {
        let theta = self.param.expand(x);
        let spec = &self.param.spec;
        let kernel = spec.kernel(&theta);
        kernel.validate()?;
        let noise = spec.noise(&theta);
        noise.validate()?;
        let nugget = (!noise.is_none()).then_some(&noise);
        vecchia_nll(&kernel, nugget, self.plan, self.locs, self.y)
    }
}

fn run_optimizer<F: ScalarFn>(f: F, x0: &[f64], cfg: &OptimizerConfig) -> Result<OptimResult> {
    match cfg.grad_mode {
        GradMode::Dual => minimize(&AutoDiff(f), x0, cfg),
        GradMode::FiniteDiff => minimize(&FiniteDiff(f), x0, cfg),
    }
}

/// Fits the naive Vecchia likelihood; returns the full parameter vector and
/// the optimizer result.
pub fn fit_naive_vecchia(
    locs: &Points,
    y: &[f64],
    plan: &VecchiaPlan,
    param: &Parameterization,
    cfg: &OptimizerConfig,
) -> Result<(Vec<f64>, OptimResult)> {
    let obj = NaiveVecchiaObjective {
        locs,
        y,
        plan,
        param,
    };
    let res = run_optimizer(obj, &param.free_values(&param.base), cfg)?;
    Ok((param.expand(&res.x), res))
}

#[derive(Clone, Debug)]
pub struct MStepResult {
    pub theta: Vec<f64>,
    pub value: f64,
    pub optim: Option<OptimResult>,
}

/// Minimizes the E-function from `theta0`. If the optimizer fails, `theta0`
/// is returned unchanged (no progress) and a warning is logged.
pub fn mstep(estep: &EStep, problem: &EmProblem, config: &EmConfig) -> Result<MStepResult> {
    let obj = EObjective { estep, problem };
    let x0 = problem.param.free_values(&estep.theta0);
    match run_optimizer(obj, &x0, &config.mstep) {
        Ok(r) => Ok(MStepResult {
            theta: problem.param.expand(&r.x),
            value: r.f,
            optim: Some(r),
        }),
        Err(e) => {
            log::warn!("M-step failed ({e}); keeping the current estimate");
            let value = vecchia_form(&estep.theta0, estep, problem)?;
            Ok(MStepResult {
                theta: estep.theta0.clone(),
                value,
                optim: None,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmStatus {
    Running,
    Converged,
    MaxIterations,
}

/// One row per iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub iteration: usize,
    /// Full parameter vector in optimization coordinates.
    pub theta: Vec<f64>,
    /// E-function value at this iterate under the previous E-step (`NaN`
    /// for the initial point).
    pub e_value: f64,
    /// Approximate marginal NLL (`NaN` when not tracked).
    pub vecchia_nll: f64,
    pub mstep_evals: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct EmState {
    pub iteration: usize,
    pub theta0: Vec<f64>,
    pub estep: Option<EStep>,
    pub ensemble: Option<SaaEnsemble>,
    pub history: Vec<HistoryRow>,
    pub status: EmStatus,
}

fn marginal_nll(theta: &[f64], problem: &EmProblem, config: &EmConfig) -> f64 {
    if !config.track_nll {
        return f64::NAN;
    }
    let backend = match config.backend {
        Backend::Cg { .. } => Backend::Sparse,
        b => b,
    };
    let p = problem.spec().params(theta);
    approx_nll(
        &p.kernel,
        &p.noise,
        problem.plan,
        problem.locs,
        problem.y,
        &backend,
    )
    .unwrap_or(f64::NAN)
}

fn free_distance(problem: &EmProblem, a: &[f64], b: &[f64]) -> f64 {
    problem
        .param
        .free
        .iter()
        .map(|&i| (a[i] - b[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Runs EM from `init` (full parameter vector) until the step in the free
/// coordinates is at most `tol` or `max_iter` iterations have run.
pub fn em_fit(problem: &EmProblem, init: &[f64], config: &EmConfig) -> Result<EmState> {
    config.validate()?;
    problem.check()?;
    let start = Instant::now();
    let ensemble = match config.trace_mode {
        TraceMode::Exact => None,
        _ => Some(draw_saa(problem.plan.len(), config.saa_count, config.seed)),
    };
    let mut state = EmState {
        iteration: 0,
        theta0: init.to_vec(),
        estep: None,
        ensemble,
        history: vec![HistoryRow {
            iteration: 0,
            theta: init.to_vec(),
            e_value: f64::NAN,
            vecchia_nll: marginal_nll(init, problem, config),
            mstep_evals: 0,
            seconds: start.elapsed().as_secs_f64(),
        }],
        status: EmStatus::Running,
    };
    while state.iteration < config.max_iter {
        let it = state.iteration + 1;
        let wrap = |e: Error| Error::Em {
            iteration: it,
            source: Box::new(e),
        };
        let estep =
            estep_prepare(&state.theta0, problem, state.ensemble.as_ref(), config).map_err(wrap)?;
        let m = mstep(&estep, problem, config).map_err(wrap)?;
        let delta = free_distance(problem, &m.theta, &state.theta0);
        log::info!("EM iteration {it}: E = {:.6}, step = {delta:.3e}", m.value);
        state.history.push(HistoryRow {
            iteration: it,
            theta: m.theta.clone(),
            e_value: m.value,
            vecchia_nll: marginal_nll(&m.theta, problem, config),
            mstep_evals: m.optim.as_ref().map_or(0, |o| o.evals),
            seconds: start.elapsed().as_secs_f64(),
        });
        state.iteration = it;
        state.theta0 = m.theta;
        state.estep = Some(estep);
        if delta <= config.tol {
            state.status = EmStatus::Converged;
            return Ok(state);
        }
    }
    state.status = EmStatus::MaxIterations;
    Ok(state)
}

/// One row of the probe-count diagnostic.
#[derive(Clone, Debug, PartialEq)]
pub struct SaaRow {
    pub count: usize,
    pub theta: Vec<f64>,
    pub e_value: f64,
    pub status: Option<Status>,
}

/// Default probe counts for [`saa_diagnostic`].
pub const DIAGNOSTIC_COUNTS: [usize; 6] = [5, 25, 50, 75, 100, 125];

/// Re-runs one M-step from `theta0` with nested probe ensembles of the given
/// sizes (each larger ensemble extends the smaller ones).
pub fn saa_diagnostic(
    problem: &EmProblem,
    theta0: &[f64],
    config: &EmConfig,
    counts: &[usize],
) -> Result<Vec<SaaRow>> {
    if config.trace_mode == TraceMode::Exact {
        return Err(Error::Config(
            "the probe diagnostic needs a stochastic trace mode".into(),
        ));
    }
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::Config("probe counts must be >= 1".into()));
    }
    let full = draw_saa(problem.plan.len(), max, config.seed);
    counts
        .iter()
        .map(|&c| {
            let ens = full.truncated(c);
            let estep = estep_prepare(theta0, problem, Some(&ens), config)?;
            let m = mstep(&estep, problem, config)?;
            Ok(SaaRow {
                count: c,
                theta: m.theta,
                e_value: m.value,
                status: m.optim.map(|o| o.status),
            })
        })
        .collect()
}

/// Fit history as CSV: iteration, natural-unit parameters, E-value,
/// approximate marginal NLL, M-step evaluations.
pub fn history_csv(spec: &ModelSpec, history: &[HistoryRow]) -> String {
    let mut out = String::from("iteration");
    for name in spec.names() {
        let _ = write!(out, ",{name}");
    }
    out.push_str(",e_value,vecchia_nll,mstep_evals\n");
    for row in history {
        let _ = write!(out, "{}", row.iteration);
        for (i, t) in row.theta.iter().enumerate() {
            let v = if spec.is_log(i) { t.exp() } else { *t };
            let _ = write!(out, ",{v:e}");
        }
        let _ = writeln!(
            out,
            ",{:e},{:e},{}",
            row.e_value, row.vecchia_nll, row.mstep_evals
        );
    }
    out
}

/// Cumulative wall-clock seconds per iteration. Kept apart from
/// [`history_csv`] so that the history itself is reproducible bit for bit.
pub fn history_timings_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from("iteration,seconds\n");
    for row in history {
        let _ = writeln!(out, "{},{:.3}", row.iteration, row.seconds);
    }
    out
}

/// A rough starting point for `spec` from the data: variance split between
/// signal and noise, range a tenth of the domain diameter, smoothness one.
pub fn default_start(spec: &ModelSpec, locs: &Points, y: &[f64]) -> Vec<f64> {
    let n = y.len().max(1) as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).max(1e-8);
    let mut lo = vec![f64::INFINITY; locs.dim()];
    let mut hi = vec![f64::NEG_INFINITY; locs.dim()];
    for p in locs.iter() {
        for (d, &c) in p.iter().enumerate() {
            lo[d] = lo[d].min(c);
            hi[d] = hi[d].max(c);
        }
    }
    let diam = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (b - a).powi(2))
        .sum::<f64>()
        .sqrt()
        .max(1e-8);
    let noise_var = 0.1 * var;
    let mut theta = match spec.kernel {
        crate::model::KernelKind::MaternIso => vec![(0.9 * var).ln(), (0.1 * diam).ln(), 0.0],
        crate::model::KernelKind::AnisoKnot { .. } => {
            let s = (0.9 * var).sqrt().ln();
            let w = (10.0 / diam).ln();
            vec![s, s, s, w, 0.0, w, 0.0]
        }
    };
    match spec.noise {
        crate::model::NoiseKind::None => {}
        crate::model::NoiseKind::Constant => theta.push(noise_var.ln()),
        crate::model::NoiseKind::Knot { .. } => {
            theta.extend([noise_var.sqrt().ln(); 3]);
        }
    }
    theta
}
