use std::path::Path;
use std::process::{Command, Output};
use vecchia_em::data::Dataset;
use vecchia_em::kernels::parse_params;
use vecchia_em::optimize::{minimize, FnObjective, Method, OptimizerConfig};
use vecchia_em::solver::exact_nll;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vecchia-em"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn simulate_writes_header_plus_n_rows_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--n",
            "2000",
            "--params",
            "(10,0.025,2.25,0.25)",
            "--seed",
            "1",
            "--out",
            "sim",
        ],
    );
    assert_eq!(read(dir.path(), "sim/data.csv").lines().count(), 2001);
    let truth = parse_params(&read(dir.path(), "sim/truth.params")).unwrap();
    assert_eq!(truth.spec().names(), ["sigma2", "rho", "nu", "eta2"]);
    assert_eq!(truth.kernel.variance_at(&[0.0, 0.0]), 10.0);
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "sim/data.csv.manifest.json")).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seeds"]["seed"], 1);
    assert_eq!(manifest["flags"]["command"]["Simulate"]["n"], 2000);
}

#[test]
fn replicated_simulation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        [
            "simulate",
            "--n",
            "50",
            "--replicates",
            "2",
            "--seed",
            "1",
            "--out",
            out,
        ]
    };
    ok(dir.path(), &args("a"));
    ok(dir.path(), &args("b"));
    for f in ["data_000.csv", "data_001.csv", "truth.params"] {
        assert_eq!(
            read(dir.path(), &format!("a/{f}")),
            read(dir.path(), &format!("b/{f}"))
        );
    }
    assert_ne!(
        read(dir.path(), "a/data_000.csv"),
        read(dir.path(), "a/data_001.csv")
    );
}

#[test]
fn zero_noise_full_conditioning_fit_matches_dense_mle() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "simulate",
            "--n",
            "150",
            "--params",
            "(1,0.2,1.0)",
            "--seed",
            "4",
            "--out",
            "sim",
        ],
    );
    let init = "(0.8,0.15,1.3)";
    ok(
        p,
        &[
            "fit-vecchia",
            "--data",
            "sim/data.csv",
            "--init",
            init,
            "--full",
            "--out",
            "fit.params",
        ],
    );
    let fitted = parse_params(&read(p, "fit.params")).unwrap();
    assert!(read(p, "fit.params.trace.csv").starts_with("evals,f,grad_norm,step_norm\n"));

    let ds = Dataset::load(&p.join("sim/data.csv")).unwrap();
    let start = parse_params("kind = matern_iso\nsigma2 = 0.8\nrho = 0.15\nnu = 1.3\n").unwrap();
    let spec = start.spec();
    let obj = FnObjective {
        dim: 3,
        f: |x: &[f64]| {
            let q = spec.params(x);
            exact_nll(&q.kernel, &q.noise, &ds.locs, &ds.y, false).unwrap_or(f64::INFINITY)
        },
    };
    let cfg = OptimizerConfig {
        method: Method::Bfgs,
        ..OptimizerConfig::default()
    };
    let oracle = minimize(&obj, &start.theta().unwrap(), &cfg).unwrap();
    let got = fitted.theta().unwrap();
    for (a, b) in got.iter().zip(&oracle.x) {
        assert!((a - b).abs() < 1e-3, "{got:?} vs {:?}", oracle.x);
    }
}

#[test]
fn em_with_exact_trace_descends_and_history_is_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "simulate",
            "--n",
            "120",
            "--params",
            "(1,0.15,1.2,0.2)",
            "--seed",
            "2",
            "--out",
            "sim",
        ],
    );
    ok(
        p,
        &[
            "fit-em",
            "--data",
            "sim/data.csv",
            "--m",
            "5",
            "--backend",
            "dense",
            "--exact-trace",
            "--out",
            "em.params",
        ],
    );
    let rows = csv_rows(&read(p, "em.params.history.csv"));
    assert_eq!(
        rows[0],
        [
            "iteration",
            "sigma2",
            "rho",
            "nu",
            "eta2",
            "e_value",
            "vecchia_nll",
            "mstep_evals"
        ]
    );
    assert!(rows.len() - 1 <= 31);
    let nll: Vec<f64> = rows[1..].iter().map(|r| r[6].parse().unwrap()).collect();
    for w in nll.windows(2) {
        assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "{nll:?}");
    }
    parse_params(&read(p, "em.params")).unwrap();
    assert_eq!(read(p, "em.params.timings.csv").lines().count(), rows.len());
}

#[test]
fn exact_nll_matches_library_and_diff_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--n", "80", "--seed", "9", "--out", "sim"]);
    std::fs::write(
        p.join("b.params"),
        "kind = matern_iso\nsigma2 = 5\nrho = 0.05\nnu = 1.5\neta2 = 0.5\n",
    )
    .unwrap();
    let one = ok(
        p,
        &[
            "exact-nll",
            "--data",
            "sim/data.csv",
            "--params",
            "sim/truth.params",
            "--out",
            "r.txt",
        ],
    );
    let ds = Dataset::load(&p.join("sim/data.csv")).unwrap();
    let truth = parse_params(&read(p, "sim/truth.params")).unwrap();
    let lib = exact_nll(&truth.kernel, &truth.noise, &ds.locs, &ds.y, false).unwrap();
    assert_eq!(one, format!("exact_nll = {lib:?}\n"));
    assert_eq!(read(p, "r.txt"), one);

    let diff = ok(
        p,
        &[
            "exact-nll",
            "--data",
            "sim/data.csv",
            "--diff",
            "sim/truth.params",
            "b.params",
        ],
    );
    let vals: Vec<f64> = diff
        .lines()
        .map(|l| l.split(" = ").nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(vals[0], lib);
    assert_eq!(vals[2], vals[0] - vals[1]);
}

#[test]
fn predict_columns_and_full_neighbour_set_matches_dense() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["simulate", "--n", "60", "--seed", "5", "--out", "sim"]);
    std::fs::write(p.join("t.csv"), "x1,x2\n0.5,0.5\n0.25,0.75\n").unwrap();
    ok(
        p,
        &[
            "predict",
            "--data",
            "sim/data.csv",
            "--params",
            "sim/truth.params",
            "--targets",
            "t.csv",
            "--k",
            "60",
            "--compare",
            "(9,0.03,2,0.3)",
            "--out",
            "pred.csv",
        ],
    );
    let rows = csv_rows(&read(p, "pred.csv"));
    assert_eq!(
        rows[0],
        ["x1", "x2", "mean", "var", "mean_compare", "abs_diff"]
    );
    assert_eq!(rows.len(), 3);

    let ds = Dataset::load(&p.join("sim/data.csv")).unwrap();
    let truth = parse_params(&read(p, "sim/truth.params")).unwrap();
    let x = [0.5, 0.5];
    let n = ds.len();
    let cov = |a: &[f64], b: &[f64]| truth.kernel.cov(a, b).unwrap();
    let mut c = nalgebra::DMatrix::from_fn(n, n, |i, j| cov(ds.locs.point(i), ds.locs.point(j)));
    for i in 0..n {
        c[(i, i)] += truth.noise.variance_at(ds.locs.point(i));
    }
    let k = nalgebra::DVector::from_fn(n, |i, _| cov(ds.locs.point(i), &x));
    let chol = c.cholesky().unwrap();
    let mean = k.dot(&chol.solve(&nalgebra::DVector::from_vec(ds.y.clone())));
    let var = cov(&x, &x) - k.dot(&chol.solve(&k));
    let got_mean: f64 = rows[1][2].parse().unwrap();
    let got_var: f64 = rows[1][3].parse().unwrap();
    assert!(
        (got_mean - mean).abs() < 1e-8 * (1.0 + mean.abs()),
        "{got_mean} vs {mean}"
    );
    assert!(
        (got_var - var).abs() < 1e-8 * (1.0 + var.abs()),
        "{got_var} vs {var}"
    );
    let (m, mc): (f64, f64) = (rows[1][2].parse().unwrap(), rows[1][4].parse().unwrap());
    assert_eq!(rows[1][5].parse::<f64>().unwrap(), (m - mc).abs());
}

#[test]
fn diagnose_saa_has_one_row_per_default_count() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "simulate",
            "--n",
            "100",
            "--params",
            "(1,0.15,1.2,0.2)",
            "--seed",
            "6",
            "--out",
            "sim",
        ],
    );
    ok(
        p,
        &[
            "diagnose-saa",
            "--data",
            "sim/data.csv",
            "--params",
            "sim/truth.params",
            "--m",
            "5",
            "--out",
            "saa.csv",
        ],
    );
    let rows = csv_rows(&read(p, "saa.csv"));
    assert_eq!(
        rows[0],
        ["count", "sigma2", "rho", "nu", "eta2", "e_value", "status"]
    );
    let counts: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(counts, ["5", "25", "50", "75", "100", "125"]);
}

#[test]
fn study_is_deterministic_and_replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let args = |out: &'static str| {
        [
            "study",
            "--n",
            "150",
            "--replicates",
            "2",
            "--params",
            "(1,0.1,1.5,0.2)",
            "--m",
            "5",
            "--saa-count",
            "8",
            "--max-iter",
            "3",
            "--k",
            "50",
            "--out",
            out,
        ]
    };
    ok(p, &args("a.csv"));
    ok(p, &args("b.csv"));
    let a = read(p, "a.csv");
    assert_eq!(a, read(p, "b.csv"));
    assert_eq!(a.lines().count(), 3);
    assert!(
        a.lines().skip(1).all(|l| l.split(',').nth(2) == Some("ok")),
        "{a}"
    );

    std::fs::remove_file(p.join("a.csv")).unwrap();
    ok(p, &["replay", "a.csv.manifest.json"]);
    assert_eq!(read(p, "a.csv"), read(p, "b.csv"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(run(p, &["--help"]).status.code(), Some(0));
    assert_eq!(run(p, &["fit-em", "--help"]).status.code(), Some(0));
    assert_eq!(run(p, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        run(
            p,
            &[
                "exact-nll",
                "--data",
                "missing.csv",
                "--params",
                "(1,1,1,1)"
            ]
        )
        .status
        .code(),
        Some(1)
    );

    std::fs::write(
        p.join("dup.csv"),
        "x1,x2,y\n0.1,0.1,1\n0.1,0.1,2\n0.5,0.5,0\n",
    )
    .unwrap();
    assert_eq!(
        run(
            p,
            &["exact-nll", "--data", "dup.csv", "--params", "(1,-1,1,1)"]
        )
        .status
        .code(),
        Some(1)
    );
    // Coincident points without a nugget: singular covariance.
    assert_eq!(
        run(
            p,
            &["exact-nll", "--data", "dup.csv", "--params", "(1,0.1,0.5)"]
        )
        .status
        .code(),
        Some(2)
    );
}
