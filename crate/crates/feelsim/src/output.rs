//! Run artifacts: resolved config, metrics CSV, summary JSON and plots.

use std::fs;
use std::io::Write;
use std::path::Path;

use feelsim_core::trainer::RoundMetrics;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::experiment::Outcome;
use crate::plot::{line_chart, Series};

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    f.sync_all().map_err(|e| HarnessError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn metrics_csv(metrics: &[RoundMetrics]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["round", "train_loss", "test_loss", "test_acc", "gap"])?;
    for m in metrics {
        w.write_record([
            m.round.to_string(),
            fmt_f64(m.train_loss),
            fmt_f64(m.test_loss),
            fmt_f64(m.test_acc),
            fmt_f64(m.gap),
        ])?;
    }
    w.into_inner().map_err(|e| HarnessError::io("metrics.csv", e.into_error()))
}

#[derive(Debug, Serialize)]
struct FinalMetrics {
    round: usize,
    train_loss: f64,
    test_loss: f64,
    test_acc: f64,
    gap: f64,
}

#[derive(Debug, Serialize)]
struct ConstantsJson<'a> {
    #[serde(rename = "R")]
    r: f64,
    r_estimator: &'static str,
    #[serde(rename = "L")]
    l: f64,
    xi: &'a [f64],
    #[serde(rename = "D")]
    d: &'a [f64],
    sigma_sq: f64,
    lambda: f64,
    d_params: usize,
    #[serde(rename = "N")]
    devices: usize,
    n: usize,
    #[serde(rename = "T")]
    rounds: usize,
    eta: &'a [f64],
    probe_models: usize,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    seed: u64,
    mode: String,
    method: String,
    rounds_completed: usize,
    diverged: bool,
    #[serde(rename = "final")]
    last: Option<FinalMetrics>,
    bound_kind: &'static str,
    bound: Option<f64>,
    lambda: Option<f64>,
    heterogeneity: &'a [f64],
    mean_heterogeneity: f64,
    noise_var: f64,
    constants: ConstantsJson<'a>,
    wall_clock_secs: f64,
}

pub fn summary_json(cfg: &ExperimentConfig, o: &Outcome) -> Result<Vec<u8>, HarnessError> {
    let c = &o.constants;
    let summary = Summary {
        seed: o.seed,
        mode: cfg.mode.to_string(),
        method: cfg.method.to_string(),
        rounds_completed: o.result.rounds_completed,
        diverged: o.result.diverged,
        last: o.final_metrics().map(|m| FinalMetrics {
            round: m.round,
            train_loss: m.train_loss,
            test_loss: m.test_loss,
            test_acc: m.test_acc,
            gap: m.gap,
        }),
        bound_kind: match cfg.mode {
            feelsim_core::trainer::Mode::Cfl => "cfl",
            feelsim_core::trainer::Mode::Dfl => "dfl",
        },
        bound: o.bound,
        lambda: o.result.lambda,
        heterogeneity: &o.result.heterogeneity,
        mean_heterogeneity: o.mean_heterogeneity(),
        noise_var: o.result.noise_var,
        constants: ConstantsJson {
            r: c.r,
            r_estimator: "half the per-sample loss range over probe models (empirical proxy)",
            l: c.l,
            xi: &c.xi,
            d: &c.d_het,
            sigma_sq: c.sigma_sq,
            lambda: c.lambda,
            d_params: c.dim,
            devices: c.devices,
            n: c.samples,
            rounds: c.rounds(),
            eta: &c.eta,
            probe_models: o.empirical.probes,
        },
        wall_clock_secs: o.wall_clock_secs,
    };
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes the full artifact set of one run into `dir`.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, o: &Outcome, plots: bool) -> Result<(), HarnessError> {
    write_atomic(&dir.join("config.resolved"), cfg.resolved().as_bytes())?;
    write_atomic(&dir.join("metrics.csv"), &metrics_csv(&o.result.metrics)?)?;
    write_atomic(&dir.join("summary.json"), &summary_json(cfg, o)?)?;
    if plots {
        let rounds: Vec<f64> = o.result.metrics.iter().map(|m| m.round as f64).collect();
        let series = |name: &str, f: fn(&RoundMetrics) -> f64| Series {
            name: name.to_string(),
            points: rounds.iter().copied().zip(o.result.metrics.iter().map(f)).collect(),
        };
        let acc = line_chart("Test accuracy", "round", "accuracy", &[series("test_acc", |m| m.test_acc)]);
        write_atomic(&dir.join("accuracy.svg"), acc.as_bytes())?;
        let loss = line_chart(
            "Loss",
            "round",
            "loss",
            &[
                series("train_loss", |m| m.train_loss),
                series("test_loss", |m| m.test_loss),
                series("gap", |m| m.gap),
            ],
        );
        write_atomic(&dir.join("loss.svg"), loss.as_bytes())?;
    }
    Ok(())
}
