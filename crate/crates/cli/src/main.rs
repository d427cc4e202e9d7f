mod args;
mod commands;
mod manifest;

use args::{Cli, Command};
use clap::Parser;
use manifest::Manifest;
use std::process::ExitCode;
use std::time::Instant;
use vecchia_em::{par, solver, Error};

/// 0 success, 1 user error, 2 numerical failure.
fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::FitVecchia(_) => "fit-vecchia",
        Command::FitEm(_) => "fit-em",
        Command::ExactNll(_) => "exact-nll",
        Command::Predict(_) => "predict",
        Command::DiagnoseSaa(_) => "diagnose-saa",
        Command::Study(_) => "study",
        Command::Replay { .. } => "replay",
    }
}

fn run(argv: Vec<String>, depth: usize) -> Result<(), (u8, String)> {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return if code == 0 {
                Ok(())
            } else {
                Err((1, String::new()))
            };
        }
    };
    if depth == 0 {
        let level = match cli.verbose {
            0 => "warn",
            1 => "info",
            _ => "debug",
        };
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
            .try_init();
        par::set_threads(cli.threads);
    }
    solver::set_force_dense(cli.force_dense);

    if let Command::Replay { manifest } = &cli.command {
        if depth > 0 {
            return Err((1, "a manifest cannot replay another replay".into()));
        }
        let m = Manifest::load(manifest).map_err(|e| (exit_code(&e), e.to_string()))?;
        return run(m.argv, depth + 1);
    }

    let flags = serde_json::to_value(&cli).unwrap_or_default();
    let mut m = Manifest::new(
        command_name(&cli.command),
        argv,
        flags,
        par::current_threads(),
    );
    let start = Instant::now();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &mut m),
        Command::FitVecchia(a) => commands::fit_vecchia(a, &mut m),
        Command::FitEm(a) => commands::fit_em(a, &mut m),
        Command::ExactNll(a) => commands::exact(a, cli.force_dense, &mut m),
        Command::Predict(a) => commands::predict(a, &mut m),
        Command::DiagnoseSaa(a) => commands::diagnose(a, &mut m),
        Command::Study(a) => commands::study(a, &mut m),
        Command::Replay { .. } => unreachable!(),
    };
    m.seconds = start.elapsed().as_secs_f64();
    result.map_err(|e| (exit_code(&e), e.to_string()))?;
    m.save().map_err(|e| (exit_code(&e), e.to_string()))?;
    Ok(())
}

fn main() -> ExitCode {
    match run(std::env::args().collect(), 0) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(code)
        }
    }
}
