//! Cross-product sweeps over experiment axes.

use std::path::Path;

use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;
use crate::experiment::{run_experiment, Outcome};
use crate::output::{fmt_f64, write_atomic, write_run};
use crate::plot::{line_chart, Series};

/// One combination of axis values.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub cfg: ExperimentConfig,
    /// `(axis, value)` for each swept axis.
    pub labels: Vec<(&'static str, String)>,
}

impl SweepPoint {
    pub fn slug(&self) -> String {
        if self.labels.is_empty() {
            return "base".into();
        }
        self.labels
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join("_")
    }
}

/// Expands the sweep axes of `base` into points, varying the last axis
/// fastest in the order mode, method, alpha, topology, snr_db, lr.
pub fn expand(base: &ExperimentConfig) -> Vec<SweepPoint> {
    let mut points = vec![SweepPoint {
        cfg: base.clone(),
        labels: Vec::new(),
    }];
    fn cross<T: Clone + ToString>(
        points: Vec<SweepPoint>,
        axis: &'static str,
        values: &[T],
        apply: impl Fn(&mut ExperimentConfig, &T),
    ) -> Vec<SweepPoint> {
        if values.is_empty() {
            return points;
        }
        let mut out = Vec::with_capacity(points.len() * values.len());
        for p in points {
            for v in values {
                let mut q = p.clone();
                apply(&mut q.cfg, v);
                q.labels.push((axis, v.to_string()));
                out.push(q);
            }
        }
        out
    }
    let axes = base.sweep.clone();
    points = cross(points, "mode", &axes.mode, |c, v| c.mode = *v);
    points = cross(points, "method", &axes.method, |c, v| c.method = *v);
    points = cross(points, "alpha", &axes.alpha, |c, v| c.dirichlet_alpha = *v);
    points = cross(points, "topology", &axes.topology, |c, v| c.topology = *v);
    points = cross(points, "snr_db", &axes.snr_db, |c, v| c.set_snr(*v));
    points = cross(points, "lr", &axes.lr, |c, v| c.lr = *v);
    for p in &mut points {
        p.cfg.sweep = Default::default();
    }
    points
}

/// Final numbers of one (point, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub point: usize,
    pub seed: u64,
    pub final_acc: f64,
    pub final_gap: f64,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
    pub bound: Option<f64>,
    pub lambda: Option<f64>,
    pub mean_d: f64,
    pub diverged: bool,
    pub error: Option<String>,
}

impl RunRow {
    fn usable(&self) -> bool {
        self.error.is_none() && !self.diverged
    }
}

/// Mean and sample standard deviation over the usable runs of a point.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub point: usize,
    pub runs: usize,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub gap_mean: f64,
    pub gap_std: f64,
    pub bound_mean: Option<f64>,
    pub lambda_mean: Option<f64>,
    pub mean_d: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<AggregateRow>,
    /// Seed-averaged test accuracy per evaluation round, per point.
    pub curves: Vec<Vec<(usize, f64)>>,
}

impl SweepReport {
    pub fn aggregate(&self, point: usize) -> &AggregateRow {
        &self.aggregates[point]
    }

    pub fn rows_of(&self, point: usize) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(move |r| r.point == point)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn row_of(point: usize, seed: u64, res: &Result<Outcome, HarnessError>) -> RunRow {
    match res {
        Ok(o) => {
            let last = o.final_metrics();
            let pick = |f: fn(&feelsim_core::trainer::RoundMetrics) -> f64| last.map_or(f64::NAN, f);
            RunRow {
                point,
                seed,
                final_acc: pick(|m| m.test_acc),
                final_gap: pick(|m| m.gap),
                final_train_loss: pick(|m| m.train_loss),
                final_test_loss: pick(|m| m.test_loss),
                bound: o.bound,
                lambda: o.result.lambda,
                mean_d: o.mean_heterogeneity(),
                diverged: o.result.diverged,
                error: None,
            }
        }
        Err(e) => RunRow {
            point,
            seed,
            final_acc: f64::NAN,
            final_gap: f64::NAN,
            final_train_loss: f64::NAN,
            final_test_loss: f64::NAN,
            bound: None,
            lambda: None,
            mean_d: f64::NAN,
            diverged: false,
            error: Some(e.to_string()),
        },
    }
}

fn aggregate(point: usize, rows: &[&RunRow]) -> AggregateRow {
    let ok: Vec<&&RunRow> = rows.iter().filter(|r| r.usable()).collect();
    let col = |f: fn(&RunRow) -> f64| -> Vec<f64> { ok.iter().map(|r| f(r)).collect() };
    let (acc_mean, acc_std) = mean_std(&col(|r| r.final_acc));
    let (gap_mean, gap_std) = mean_std(&col(|r| r.final_gap));
    let opt_mean = |f: fn(&RunRow) -> Option<f64>| -> Option<f64> {
        let v: Option<Vec<f64>> = ok.iter().map(|r| f(r)).collect();
        v.filter(|v| !v.is_empty()).map(|v| mean_std(&v).0)
    };
    AggregateRow {
        point,
        runs: ok.len(),
        acc_mean,
        acc_std,
        gap_mean,
        gap_std,
        bound_mean: opt_mean(|r| r.bound),
        lambda_mean: opt_mean(|r| r.lambda),
        mean_d: mean_std(&col(|r| r.mean_d)).0,
    }
}

fn mean_curve(outcomes: &[&Outcome]) -> Vec<(usize, f64)> {
    let Some(first) = outcomes.iter().find(|o| !o.result.diverged) else {
        return Vec::new();
    };
    let rounds: Vec<usize> = first.result.metrics.iter().map(|m| m.round).collect();
    rounds
        .iter()
        .enumerate()
        .filter_map(|(k, &r)| {
            let vals: Vec<f64> = outcomes
                .iter()
                .filter_map(|o| o.result.metrics.get(k).filter(|m| m.round == r).map(|m| m.test_acc))
                .collect();
            (vals.len() == outcomes.len()).then(|| (r, mean_std(&vals).0))
        })
        .collect()
}

/// Runs every (point, seed) pair, in parallel across pairs. When `out` is
/// given, per-run artifacts go to `out/points/<slug>/seed-<s>/`.
pub fn run_sweep(base: &ExperimentConfig, out: Option<&Path>, plots: bool) -> Result<SweepReport, HarnessError> {
    let points = expand(base);
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| base.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let results: Vec<Result<Outcome, HarnessError>> = jobs
        .par_iter()
        .map(|&(p, seed)| {
            let cfg = &points[p].cfg;
            let o = run_experiment(cfg, seed)?;
            if let Some(dir) = out {
                let run_dir = dir.join("points").join(points[p].slug()).join(format!("seed-{seed}"));
                write_run(&run_dir, cfg, &o, plots)?;
            }
            Ok(o)
        })
        .collect();
    let rows: Vec<RunRow> = jobs.iter().zip(&results).map(|(&(p, s), r)| row_of(p, s, r)).collect();
    let aggregates = (0..points.len())
        .map(|p| aggregate(p, &rows.iter().filter(|r| r.point == p).collect::<Vec<_>>()))
        .collect();
    let curves = (0..points.len())
        .map(|p| {
            let outs: Vec<&Outcome> = jobs
                .iter()
                .zip(&results)
                .filter(|((q, _), _)| *q == p)
                .filter_map(|(_, r)| r.as_ref().ok())
                .collect();
            mean_curve(&outs)
        })
        .collect();
    Ok(SweepReport {
        points,
        rows,
        aggregates,
        curves,
    })
}

const AXES: [&str; 6] = ["mode", "method", "alpha", "topology", "snr_db", "lr"];

fn axis_values(p: &SweepPoint) -> Vec<String> {
    let c = &p.cfg;
    let snr = match c.noise() {
        crate::config::Noise::Noiseless => "noiseless".to_string(),
        crate::config::Noise::SnrDb(s) => s.to_string(),
        crate::config::Noise::Sigma(s) => format!("sigma={s}"),
    };
    vec![
        c.mode.to_string(),
        c.method.to_string(),
        c.dirichlet_alpha.to_string(),
        c.topology.to_string(),
        snr,
        c.lr.to_string(),
    ]
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn num(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x)
    } else {
        String::new()
    }
}

/// One `run` row per (point, seed), then one `aggregate` row per point.
pub fn sweep_csv(report: &SweepReport) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = vec!["kind"];
    header.extend(AXES);
    header.extend([
        "seed", "runs", "final_acc", "final_acc_std", "final_gap", "final_gap_std", "bound", "lambda", "mean_d",
        "diverged", "error",
    ]);
    w.write_record(&header)?;
    for r in &report.rows {
        let mut rec = vec!["run".to_string()];
        rec.extend(axis_values(&report.points[r.point]));
        rec.extend([
            r.seed.to_string(),
            "1".into(),
            num(r.final_acc),
            String::new(),
            num(r.final_gap),
            String::new(),
            opt(r.bound),
            opt(r.lambda),
            num(r.mean_d),
            r.diverged.to_string(),
            r.error.clone().unwrap_or_default(),
        ]);
        w.write_record(&rec)?;
    }
    for a in &report.aggregates {
        let mut rec = vec!["aggregate".to_string()];
        rec.extend(axis_values(&report.points[a.point]));
        rec.extend([
            String::new(),
            a.runs.to_string(),
            num(a.acc_mean),
            num(a.acc_std),
            num(a.gap_mean),
            num(a.gap_std),
            opt(a.bound_mean),
            opt(a.lambda_mean),
            num(a.mean_d),
            String::new(),
            String::new(),
        ]);
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| HarnessError::io("sweep.csv", e.into_error()))
}

/// Writes `sweep.csv`, the resolved config and (optionally) an accuracy
/// plot with one series per point.
pub fn write_sweep(dir: &Path, base: &ExperimentConfig, report: &SweepReport, plots: bool) -> Result<(), HarnessError> {
    write_atomic(&dir.join("config.resolved"), base.resolved().as_bytes())?;
    write_atomic(&dir.join("sweep.csv"), &sweep_csv(report)?)?;
    if plots {
        let series: Vec<Series> = report
            .points
            .iter()
            .zip(&report.curves)
            .map(|(p, c)| Series {
                name: p.slug(),
                points: c.iter().map(|&(r, a)| (r as f64, a)).collect(),
            })
            .collect();
        let svg = line_chart("Mean test accuracy", "round", "accuracy", &series);
        write_atomic(&dir.join("sweep_accuracy.svg"), svg.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SnrPoint;
    use feelsim_core::trainer::Method;

    #[test]
    fn expansion_counts_and_labels() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(expand(&cfg).len(), 1);
        assert_eq!(expand(&cfg)[0].slug(), "base");
        cfg.sweep.alpha = vec![0.1, 1.0, 10.0];
        cfg.sweep.method = vec![Method::FedSgd, Method::FedGmir];
        cfg.sweep.snr_db = vec![SnrPoint::Noiseless, SnrPoint::Db(20.0)];
        let pts = expand(&cfg);
        assert_eq!(pts.len(), 12);
        assert_eq!(pts[0].slug(), "method=fedsgd_alpha=0.1_snr_db=noiseless");
        assert_eq!(pts[11].cfg.method, Method::FedGmir);
        assert_eq!(pts[11].cfg.dirichlet_alpha, 10.0);
        assert_eq!(pts[11].cfg.snr_db, 20.0);
        assert!(pts.iter().all(|p| p.cfg.sweep.is_empty()));
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }
}
