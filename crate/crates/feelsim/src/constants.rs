//! Constants files for the `bound` subcommand.
//!
//! Same `key = value` syntax as experiment configs. Keys: `R`, `L`, `xi`,
//! `D` (one value per device, or a single value used for all), `sigma_sq`,
//! `lambda`, `d`, `N`, `n`, `T`, `eta` (one value repeated `T` times, or
//! the full schedule) and the optional per-client mutual information list
//! `mi` for the generic bound.

use std::fmt::Write as _;

use feelsim_core::bounds::{bound_cfl, bound_dfl, bound_generic, BoundConstants};
use feelsim_core::Error;

use crate::config::parse_pairs;
use crate::error::ConfigError;
use crate::output::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsFile {
    pub constants: BoundConstants,
    pub mi: Vec<f64>,
}

fn num(line: usize, key: &str, v: &str) -> Result<f64, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::new(Some(line), Some(key), format!("expected a number, got `{v}`")))
}

fn nums(line: usize, key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',').map(|s| num(line, key, s.trim())).collect()
}

fn count(line: usize, key: &str, v: &str) -> Result<usize, ConfigError> {
    v.parse().map_err(|_| {
        ConfigError::new(Some(line), Some(key), format!("expected a non-negative integer, got `{v}`"))
    })
}

impl ConstantsFile {
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let (mut r, mut l, mut sigma_sq) = (None, None, None);
        let (mut xi, mut d_het, mut eta, mut mi) = (None, None, None, Vec::new());
        let (mut lambda, mut dim, mut devices, mut samples, mut rounds) = (0.0, 0, None, None, None);
        for (line, key, v) in parse_pairs(text)? {
            match key.as_str() {
                "R" => r = Some(num(line, &key, &v)?),
                "L" => l = Some(num(line, &key, &v)?),
                "sigma_sq" => sigma_sq = Some(num(line, &key, &v)?),
                "lambda" => lambda = num(line, &key, &v)?,
                "xi" => xi = Some((line, nums(line, &key, &v)?)),
                "D" => d_het = Some((line, nums(line, &key, &v)?)),
                "eta" => eta = Some((line, nums(line, &key, &v)?)),
                "mi" => mi = nums(line, &key, &v)?,
                "d" => dim = count(line, &key, &v)?,
                "N" => devices = Some(count(line, &key, &v)?),
                "n" => samples = Some(count(line, &key, &v)?),
                "T" => rounds = Some(count(line, &key, &v)?),
                _ => return Err(ConfigError::new(Some(line), Some(&key), "unknown key")),
            }
        }
        let need = |key: &str| ConfigError::new(None, Some(key), "required key missing");
        let devices = devices.ok_or_else(|| need("N"))?;
        let per_device = |name: &str, v: Option<(usize, Vec<f64>)>| -> Result<Vec<f64>, ConfigError> {
            let (line, v) = v.ok_or_else(|| need(name))?;
            match v.len() {
                1 => Ok(vec![v[0]; devices]),
                k if k == devices => Ok(v),
                k => Err(ConfigError::new(
                    Some(line),
                    Some(name),
                    format!("{k} values for N = {devices} devices"),
                )),
            }
        };
        let xi = per_device("xi", xi)?;
        let d_het = per_device("D", d_het)?;
        let (eta_line, eta) = eta.ok_or_else(|| need("eta"))?;
        let eta = match (rounds, eta.len()) {
            (Some(t), 1) => vec![eta[0]; t],
            (Some(t), k) if k == t => eta,
            (None, _) => eta,
            (Some(t), k) => {
                return Err(ConfigError::new(
                    Some(eta_line),
                    Some("eta"),
                    format!("{k} learning rates for T = {t}"),
                ))
            }
        };
        let constants = BoundConstants {
            r: r.ok_or_else(|| need("R"))?,
            l: l.ok_or_else(|| need("L"))?,
            xi,
            d_het,
            sigma_sq: sigma_sq.ok_or_else(|| need("sigma_sq"))?,
            lambda,
            dim,
            devices,
            samples: samples.ok_or_else(|| need("n"))?,
            eta,
        };
        constants
            .validate()
            .map_err(|e| ConfigError::new(None, None, e.to_string()))?;
        Ok(Self { constants, mi })
    }
}

/// Evaluated bounds; `None` where the bound is undefined or not requested.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub cfl: Option<f64>,
    pub dfl: Option<f64>,
    pub generic: Option<f64>,
}

pub fn evaluate(file: &ConstantsFile) -> Result<BoundReport, Error> {
    let defined = |r: Result<f64, Error>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedBound) => Ok(None),
        Err(e) => Err(e),
    };
    let c = &file.constants;
    Ok(BoundReport {
        cfl: defined(bound_cfl(c))?,
        dfl: defined(bound_dfl(c))?,
        generic: if file.mi.is_empty() {
            None
        } else {
            Some(bound_generic(&file.mi, c.r, c.samples)?)
        },
    })
}

/// Labeled lines followed by the same values as CSV.
pub fn render(report: &BoundReport) -> String {
    let rows = [
        ("bound_cfl", report.cfl, "undefined (sigma_sq = 0)"),
        ("bound_dfl", report.dfl, "undefined (sigma_sq = 0)"),
        ("bound_generic", report.generic, "not requested (no mi)"),
    ];
    let mut s = String::new();
    for (name, v, missing) in rows {
        let _ = match v {
            Some(v) => writeln!(s, "{name} = {}", fmt_f64(v)),
            None => writeln!(s, "{name} = {missing}"),
        };
    }
    s.push_str("\nquantity,value\n");
    for (name, v, _) in rows {
        let _ = writeln!(s, "{name},{}", v.map(fmt_f64).unwrap_or_default());
    }
    s
}
