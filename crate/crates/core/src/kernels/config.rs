//! Plain-text parameter files: one `key = value` per line, `#` comments.
//!
//! Keys: `kind` (`matern_iso` or `aniso_knot`), `sigma2`, `rho`, `nu`,
//! `eta2`, `sigmas`, `etas`, `knots`, `W11`, `W12`, `W22`. Lists are
//! comma-separated.

use super::{AnisoKnotParams, KernelModel, MaternIsoParams, NoiseDiagParams, DEFAULT_KNOTS};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use std::collections::BTreeMap;
use std::fmt::Write;

fn scalar(map: &BTreeMap<String, String>, key: &str) -> Result<f64> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Parse(format!("missing key '{key}'")))?;
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("'{key}': cannot parse '{raw}' as a number")))
}

fn triple(map: &BTreeMap<String, String>, key: &str) -> Result<[f64; 3]> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Parse(format!("missing key '{key}'")))?;
    let vals = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Parse(format!("'{key}': cannot parse '{raw}'")))?;
    vals.try_into()
        .map_err(|_| Error::Parse(format!("'{key}' needs exactly three values")))
}

/// Parses a parameter file.
pub fn parse_params(text: &str) -> Result<ModelParams> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", lineno + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    let kind = map.get("kind").map(String::as_str).unwrap_or("matern_iso");
    let knots = if map.contains_key("knots") {
        triple(&map, "knots")?
    } else {
        DEFAULT_KNOTS
    };
    let kernel = match kind {
        "matern_iso" => KernelModel::MaternIso(MaternIsoParams {
            sigma2: scalar(&map, "sigma2")?,
            rho: scalar(&map, "rho")?,
            nu: scalar(&map, "nu")?,
        }),
        "aniso_knot" => KernelModel::AnisoKnot(AnisoKnotParams {
            sigmas: triple(&map, "sigmas")?,
            w11: scalar(&map, "W11")?,
            w12: scalar(&map, "W12")?,
            w22: scalar(&map, "W22")?,
            nu: scalar(&map, "nu")?,
            knots,
        }),
        other => return Err(Error::Parse(format!("unknown kind '{other}'"))),
    };
    let noise = match (map.contains_key("eta2"), map.contains_key("etas")) {
        (true, true) => {
            return Err(Error::Parse(
                "give either 'eta2' or 'etas', not both".into(),
            ))
        }
        (true, false) => NoiseDiagParams::Constant {
            eta2: scalar(&map, "eta2")?,
        },
        (false, true) => NoiseDiagParams::Knot {
            etas: triple(&map, "etas")?,
            knots,
        },
        (false, false) => NoiseDiagParams::None,
    };
    let params = ModelParams { kernel, noise };
    params.validate()?;
    Ok(params)
}

fn list(v: &[f64; 3]) -> String {
    format!("{}, {}, {}", v[0], v[1], v[2])
}

/// Formats parameters so that [`parse_params`] reproduces them exactly.
pub fn write_params(params: &ModelParams) -> String {
    let mut out = String::new();
    let mut knots = None;
    match &params.kernel {
        KernelModel::MaternIso(p) => {
            let _ = writeln!(out, "kind = matern_iso");
            let _ = writeln!(out, "sigma2 = {}", p.sigma2);
            let _ = writeln!(out, "rho = {}", p.rho);
            let _ = writeln!(out, "nu = {}", p.nu);
        }
        KernelModel::AnisoKnot(p) => {
            let _ = writeln!(out, "kind = aniso_knot");
            let _ = writeln!(out, "sigmas = {}", list(&p.sigmas));
            let _ = writeln!(out, "W11 = {}", p.w11);
            let _ = writeln!(out, "W12 = {}", p.w12);
            let _ = writeln!(out, "W22 = {}", p.w22);
            let _ = writeln!(out, "nu = {}", p.nu);
            knots = Some(p.knots);
        }
    }
    match &params.noise {
        NoiseDiagParams::None => {}
        NoiseDiagParams::Constant { eta2 } => {
            let _ = writeln!(out, "eta2 = {eta2}");
        }
        NoiseDiagParams::Knot { etas, knots: k } => {
            let _ = writeln!(out, "etas = {}", list(etas));
            knots = Some(*k);
        }
    }
    if let Some(k) = knots {
        let _ = writeln!(out, "knots = {}", list(&k));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_iso_with_comments() {
        let text = "# truth\nkind = matern_iso\nsigma2 = 10\nrho = 0.025 # range\nnu = 2.25\neta2 = 0.25\n";
        let p = parse_params(text).unwrap();
        assert_eq!(
            p.kernel,
            KernelModel::MaternIso(MaternIsoParams {
                sigma2: 10.0,
                rho: 0.025,
                nu: 2.25
            })
        );
        assert_eq!(p.noise, NoiseDiagParams::Constant { eta2: 0.25 });
        assert_eq!(parse_params(&write_params(&p)).unwrap(), p);
    }

    #[test]
    fn parses_aniso_knot() {
        let text = "kind = aniso_knot\nsigmas = 1, 2, 3\nW11 = 0.5\nW12 = -0.1\nW22 = 3\nnu = 0.9\netas = 0.1,0.2,0.3\nknots = 0.2, 0.8, 1.2\n";
        let p = parse_params(text).unwrap();
        assert_eq!(p.spec().dim(), 10);
        assert_eq!(parse_params(&write_params(&p)).unwrap(), p);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_params("sigma2 = 1\nrho = 1\n").is_err());
        assert!(parse_params("sigma2 = 1\nrho = x\nnu = 1\n").is_err());
        assert!(parse_params("sigma2 = -1\nrho = 1\nnu = 1\n").is_err());
        assert!(parse_params("kind = nope\n").is_err());
        assert!(parse_params("sigma2 = 1\nrho = 1\nnu = 1\neta2 = 0\n").is_err());
    }
}
