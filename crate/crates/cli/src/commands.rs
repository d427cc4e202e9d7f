use crate::args::*;
use crate::manifest::Manifest;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use vecchia_em::data::{read_points, write_atomic, Dataset};
use vecchia_em::em::{
    default_start, em_fit, fit_naive_vecchia, history_csv, history_timings_csv, saa_diagnostic,
    EmConfig, EmProblem, TraceMode,
};
use vecchia_em::kernels::{parse_params, write_params};
use vecchia_em::optimize::{GradMode, Method, OptimResult, OptimizerConfig};
use vecchia_em::simulate::{predict_nn, replicate_seed, sample_gp, sample_locations, SimSpec};
use vecchia_em::solver::{exact_nll, Backend};
use vecchia_em::study::{run_study, study_csv, study_timings_csv, StudyConfig};
use vecchia_em::vecchia::{plan, Conditioning, Ordering, VecchiaPlan};
use vecchia_em::{Error, ModelParams, ModelSpec, Parameterization, Points, Result};

/// `(sigma2,rho,nu,eta2)` / `(sigma2,rho,nu)` or a parameter file path.
pub fn load_params(arg: &str) -> Result<ModelParams> {
    let s = arg.trim();
    if let Some(inner) = s.strip_prefix('(').and_then(|r| r.strip_suffix(')')) {
        let vals = inner
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Parse(format!("cannot parse parameter tuple '{s}'")))?;
        let keys = ["sigma2", "rho", "nu", "eta2"];
        if !(3..=4).contains(&vals.len()) {
            return Err(Error::Parse(
                "parameter tuple must be (sigma2,rho,nu) or (sigma2,rho,nu,eta2)".into(),
            ));
        }
        let mut text = String::from("kind = matern_iso\n");
        for (k, v) in keys.iter().zip(&vals) {
            let _ = writeln!(text, "{k} = {v}");
        }
        return parse_params(&text);
    }
    parse_params(
        &std::fs::read_to_string(s)
            .map_err(|e| Error::Config(format!("cannot read parameter file '{s}': {e}")))?,
    )
}

fn build_plan(locs: &Points, a: &PlanArgs) -> Result<VecchiaPlan> {
    let ordering = Ordering::parse(&a.ordering)?;
    let mode = if a.full {
        Conditioning::Full
    } else if let Some(b) = a.chunk {
        Conditioning::Chunked { b, p: a.chunk_cond }
    } else {
        Conditioning::Nn { m: a.m }
    };
    plan(locs, &ordering, mode)
}

fn optimizer(a: &OptimArgs) -> OptimizerConfig {
    OptimizerConfig {
        method: match a.method {
            MethodArg::Newton => Method::NewtonTrustRegion,
            MethodArg::Bfgs => Method::Bfgs,
        },
        grad_mode: if a.fd {
            GradMode::FiniteDiff
        } else {
            GradMode::Dual
        },
        max_evals: a.max_evals,
        ..OptimizerConfig::default()
    }
}

fn parameterization(spec: ModelSpec, base: Vec<f64>, fix: &[String]) -> Result<Parameterization> {
    let names: Vec<&str> = fix.iter().map(String::as_str).collect();
    Parameterization::all_free(spec, base).with_fixed(&names)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn save_text(path: &Path, text: &str, m: &mut Manifest) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_atomic(path, text.as_bytes())?;
    m.output(path);
    Ok(())
}

fn trace_csv(r: &OptimResult) -> String {
    let mut out = String::from("evals,f,grad_norm,step_norm\n");
    for t in &r.trace {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?}",
            t.evals, t.f, t.grad_norm, t.step_norm
        );
    }
    out
}

fn natural(spec: &ModelSpec, theta: &[f64]) -> Vec<f64> {
    theta
        .iter()
        .enumerate()
        .map(|(i, t)| if spec.is_log(i) { t.exp() } else { *t })
        .collect()
}

fn describe(spec: &ModelSpec, theta: &[f64]) -> String {
    spec.names()
        .iter()
        .zip(natural(spec, theta))
        .map(|(n, v)| format!("{n}={v:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn simulate(a: &SimulateArgs, m: &mut Manifest) -> Result<()> {
    let truth = load_params(&a.params)?;
    let mut spec = SimSpec::unit_square(a.n, truth.clone(), a.seed);
    spec.lower = vec![0.0; a.dim];
    spec.upper = vec![1.0; a.dim];
    spec.replicates = a.replicates;
    spec.validate()?;
    std::fs::create_dir_all(&a.out)?;
    m.seed("seed", a.seed);
    for r in 0..a.replicates {
        let seed = replicate_seed(a.seed, r);
        let locs = sample_locations(&spec, seed)?;
        let (y, z) = sample_gp(&truth.kernel, &truth.noise, &locs, seed.wrapping_add(1))?;
        let ds = Dataset::new(locs, y, a.latent.then_some(z))?;
        let name = if a.replicates == 1 {
            "data.csv".to_string()
        } else {
            format!("data_{r:03}.csv")
        };
        let path = a.out.join(name);
        ds.save(&path)?;
        m.output(&path);
    }
    save_text(&a.out.join("truth.params"), &write_params(&truth), m)?;
    println!(
        "wrote {} dataset(s) of n = {} to {}",
        a.replicates,
        a.n,
        a.out.display()
    );
    Ok(())
}

fn load_data(path: &Path, m: &mut Manifest) -> Result<Dataset> {
    m.input(path);
    Dataset::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read dataset '{}': {io}", path.display())),
        other => other,
    })
}

fn initial(init: Option<&str>, ds: &Dataset) -> Result<(ModelSpec, Vec<f64>)> {
    match init {
        Some(s) => {
            let p = load_params(s)?;
            Ok((p.spec(), p.theta()?))
        }
        None => {
            let spec = ModelSpec::matern_iso_with_nugget();
            let start = default_start(&spec, &ds.locs, &ds.y);
            Ok((spec, start))
        }
    }
}

pub fn fit_vecchia(a: &FitVecchiaArgs, m: &mut Manifest) -> Result<()> {
    let ds = load_data(&a.data, m)?;
    let (spec, start) = initial(a.init.as_deref(), &ds)?;
    let p = build_plan(&ds.locs, &a.plan)?;
    let param = parameterization(spec.clone(), start, &a.optim.fix)?;
    let (theta, res) = fit_naive_vecchia(&ds.locs, &ds.y, &p, &param, &optimizer(&a.optim))?;
    save_text(&a.out, &write_params(&spec.params(&theta)), m)?;
    save_text(&with_suffix(&a.out, ".trace.csv"), &trace_csv(&res), m)?;
    println!(
        "naive Vecchia NLL {:.6} ({:?}, {} evaluations): {}",
        res.f,
        res.status,
        res.evals,
        describe(&spec, &theta)
    );
    Ok(())
}

fn em_config(a: &EmArgs, optim: &OptimArgs) -> Result<EmConfig> {
    let trace_mode = if a.exact_trace {
        TraceMode::Exact
    } else if a.symmetrize == OnOff::On {
        TraceMode::Symmetrized
    } else {
        TraceMode::Unsymmetrized
    };
    let cfg = EmConfig {
        saa_count: a.saa_count,
        seed: a.saa_seed,
        max_iter: a.max_iter,
        tol: a.tol,
        trace_mode,
        backend: Backend::parse(&a.backend)?,
        mstep: optimizer(optim),
        track_nll: true,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn fit_em(a: &FitEmArgs, m: &mut Manifest) -> Result<()> {
    let ds = load_data(&a.data, m)?;
    let cfg = em_config(&a.em, &a.optim)?;
    m.seed("saa_seed", a.em.saa_seed);
    let p = build_plan(&ds.locs, &a.plan)?;
    let (spec, init) = match &a.init {
        Some(s) => initial(Some(s), &ds)?,
        None => {
            let (spec, start) = initial(None, &ds)?;
            let param = parameterization(spec.clone(), start, &a.optim.fix)?;
            let (theta, res) = fit_naive_vecchia(&ds.locs, &ds.y, &p, &param, &cfg.mstep)?;
            log::info!(
                "naive Vecchia initializer: {:?}, {}",
                res.status,
                describe(&spec, &theta)
            );
            (spec, theta)
        }
    };
    let problem = EmProblem {
        locs: &ds.locs,
        y: &ds.y,
        plan: &p,
        param: parameterization(spec.clone(), init.clone(), &a.optim.fix)?,
    };
    let state = em_fit(&problem, &init, &cfg)?;
    save_text(&a.out, &write_params(&spec.params(&state.theta0)), m)?;
    save_text(
        &with_suffix(&a.out, ".history.csv"),
        &history_csv(&spec, &state.history),
        m,
    )?;
    save_text(
        &with_suffix(&a.out, ".timings.csv"),
        &history_timings_csv(&state.history),
        m,
    )?;
    println!(
        "EM {:?} after {} iteration(s): {}",
        state.status,
        state.iteration,
        describe(&spec, &state.theta0)
    );
    Ok(())
}

pub fn exact(a: &ExactNllArgs, force: bool, m: &mut Manifest) -> Result<()> {
    let ds = load_data(&a.data, m)?;
    let score = |s: &str| -> Result<f64> {
        let p = load_params(s)?;
        exact_nll(&p.kernel, &p.noise, &ds.locs, &ds.y, force)
    };
    let report = match (&a.params, &a.diff) {
        (Some(p), _) => format!("exact_nll = {:?}\n", score(p)?),
        (None, Some(d)) => {
            let (fa, fb) = (score(&d[0])?, score(&d[1])?);
            format!(
                "exact_nll_a = {fa:?}\nexact_nll_b = {fb:?}\ndiff = {:?}\n",
                fa - fb
            )
        }
        (None, None) => return Err(Error::Config("give --params or --diff".into())),
    };
    print!("{report}");
    if let Some(out) = &a.out {
        save_text(out, &report, m)?;
    }
    Ok(())
}

pub fn predict(a: &PredictArgs, m: &mut Manifest) -> Result<()> {
    let ds = load_data(&a.data, m)?;
    let targets = match &a.targets {
        Some(path) => {
            m.input(path);
            read_points(std::fs::File::open(path)?)?
        }
        None if !a.at.is_empty() => {
            let mut coords = Vec::new();
            for t in &a.at {
                for v in t.split(',') {
                    coords.push(
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Parse(format!("bad target point '{t}'")))?,
                    );
                }
            }
            Points::new(ds.locs.dim(), coords)?
        }
        None => return Err(Error::Config("give --targets or --at".into())),
    };
    if targets.dim() != ds.locs.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.locs.dim(),
            got: targets.dim(),
        });
    }
    let k = a.k.unwrap_or(500.min(ds.len()));
    let p = load_params(&a.params)?;
    let cmp = a.compare.as_deref().map(load_params).transpose()?;
    let mut out = String::new();
    for d in 1..=targets.dim() {
        let _ = write!(out, "x{d},");
    }
    out.push_str("mean,var");
    if cmp.is_some() {
        out.push_str(",mean_compare,abs_diff");
    }
    out.push('\n');
    for x in targets.iter() {
        let (mean, var) = predict_nn(&p.kernel, &p.noise, &ds.locs, &ds.y, x, k)?;
        for c in x {
            let _ = write!(out, "{c:?},");
        }
        let _ = write!(out, "{mean:?},{var:?}");
        if let Some(q) = &cmp {
            let (m2, _) = predict_nn(&q.kernel, &q.noise, &ds.locs, &ds.y, x, k)?;
            let _ = write!(out, ",{m2:?},{:?}", (mean - m2).abs());
        }
        out.push('\n');
    }
    save_text(&a.out, &out, m)?;
    println!("predicted {} point(s) with k = {k}", targets.len());
    Ok(())
}

pub fn diagnose(a: &DiagnoseSaaArgs, m: &mut Manifest) -> Result<()> {
    let ds = load_data(&a.data, m)?;
    let p0 = load_params(&a.params)?;
    let spec = p0.spec();
    let theta0 = p0.theta()?;
    let em = EmArgs {
        max_iter: 1,
        saa_count: a.counts.iter().copied().max().unwrap_or(1),
        saa_seed: a.saa_seed,
        symmetrize: a.symmetrize,
        exact_trace: false,
        backend: a.backend.clone(),
        tol: 1e-4,
    };
    let cfg = em_config(&em, &a.optim)?;
    m.seed("saa_seed", a.saa_seed);
    let plan = build_plan(&ds.locs, &a.plan)?;
    let problem = EmProblem {
        locs: &ds.locs,
        y: &ds.y,
        plan: &plan,
        param: parameterization(spec.clone(), theta0.clone(), &a.optim.fix)?,
    };
    let rows = saa_diagnostic(&problem, &theta0, &cfg, &a.counts)?;
    let mut out = String::from("count");
    for n in spec.names() {
        let _ = write!(out, ",{n}");
    }
    out.push_str(",e_value,status\n");
    for r in &rows {
        let _ = write!(out, "{}", r.count);
        for v in natural(&spec, &r.theta) {
            let _ = write!(out, ",{v:?}");
        }
        let status = r.status.map_or("failed".to_string(), |s| format!("{s:?}"));
        let _ = writeln!(out, ",{:?},{status}", r.e_value);
    }
    save_text(&a.out, &out, m)?;
    println!("{} probe counts evaluated", rows.len());
    Ok(())
}

pub fn study(a: &StudyArgs, m: &mut Manifest) -> Result<()> {
    let truth = load_params(&a.params)?;
    let mut cfg = StudyConfig::scaled(a.n, truth, a.replicates, a.seed);
    cfg.conditioning = Conditioning::Nn { m: a.m };
    cfg.em.saa_count = a.saa_count;
    cfg.em.max_iter = a.max_iter;
    cfg.predict_k = a.k.min(a.n);
    cfg.em.validate()?;
    m.seed("seed", a.seed);
    let rows = run_study(&cfg);
    save_text(&a.out, &study_csv(&cfg, &rows), m)?;
    save_text(
        &with_suffix(&a.out, ".timings.csv"),
        &study_timings_csv(&rows),
        m,
    )?;
    let ok: Vec<_> = rows.iter().filter_map(|r| r.as_ref().ok()).collect();
    let wins = ok
        .iter()
        .filter(|r| r.exact_nll_em <= r.exact_nll_naive)
        .count();
    println!(
        "{} of {} replicates succeeded; EM exact NLL <= naive in {wins}",
        ok.len(),
        rows.len()
    );
    Ok(())
}
