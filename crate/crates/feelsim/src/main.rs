use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feelsim::config::ExperimentConfig;
use feelsim::constants::{evaluate, render, ConstantsFile};
use feelsim::error::{ConfigError, HarnessError};
use feelsim::experiment::{build_data, run_experiment};
use feelsim::output::{fmt_f64, write_run};
use feelsim::sweep::{expand, run_sweep, write_sweep};
use feelsim_core::data::heterogeneity;
use feelsim_core::numerics::{Purpose, RngStream};
use feelsim_core::topology::{build_graph, metropolis_weights, TopologyKind};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_DIVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "feelsim", version, about = "Federated edge learning over noisy channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run only this seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
    #[arg(long)]
    no_plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its artifacts.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the cross product of the `sweep.*` axes.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the generalization bounds for a constants file.
    Bound { constants: PathBuf },
    /// Print a topology's mixing matrix and spectral value.
    Topology {
        #[arg(long)]
        kind: TopologyKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.01)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print per-client label histograms and heterogeneity as CSV.
    Partition {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(format!("config error: {e}"))
    }
}

impl From<feelsim_core::Error> for Failure {
    fn from(e: feelsim_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(path: &Path, common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_path(path).map_err(|e| match e {
        HarnessError::Io { .. } => Failure::Config(e.to_string()),
        other => other.into(),
    })?;
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if common.no_plots {
        cfg.plots = false;
    }
    Ok(cfg)
}

fn simulate(path: &Path, common: &Common) -> Result<u8, Failure> {
    let cfg = load(path, common)?;
    let mut diverged = false;
    for &seed in &cfg.seeds {
        let dir = if cfg.seeds.len() == 1 {
            cfg.out_dir.clone()
        } else {
            cfg.out_dir.join(format!("seed-{seed}"))
        };
        let o = run_experiment(&cfg, seed)?;
        write_run(&dir, &cfg, &o, cfg.plots)?;
        diverged |= o.result.diverged;
        if !common.quiet {
            let last = o.final_metrics();
            println!(
                "seed {seed}: rounds {} acc {} gap {} bound {}{} -> {}",
                o.result.rounds_completed,
                last.map_or("n/a".into(), |m| format!("{:.4}", m.test_acc)),
                last.map_or("n/a".into(), |m| format!("{:.4}", m.gap)),
                o.bound.map_or("undefined".into(), |b| format!("{b:.6e}")),
                if o.result.diverged { " DIVERGED" } else { "" },
                dir.display()
            );
        }
    }
    Ok(if diverged { EXIT_DIVERGED } else { 0 })
}

fn sweep(path: &Path, common: &Common) -> Result<u8, Failure> {
    let cfg = load(path, common)?;
    let points = expand(&cfg).len();
    if !common.quiet {
        println!(
            "sweep: {points} points x {} seeds = {} runs",
            cfg.seeds.len(),
            points * cfg.seeds.len()
        );
    }
    let report = run_sweep(&cfg, Some(&cfg.out_dir), cfg.plots)?;
    write_sweep(&cfg.out_dir, &cfg, &report, cfg.plots)?;
    if !common.quiet {
        for (p, a) in report.points.iter().zip(&report.aggregates) {
            println!(
                "{:40} runs {} acc {:.4} ± {:.4} gap {:.4} ± {:.4}",
                p.slug(),
                a.runs,
                a.acc_mean,
                a.acc_std,
                a.gap_mean,
                a.gap_std
            );
        }
        for r in report.rows.iter().filter(|r| r.error.is_some()) {
            println!("failed: {} seed {}: {}", report.points[r.point].slug(), r.seed, r.error.as_deref().unwrap_or(""));
        }
        println!("wrote {}", cfg.out_dir.join("sweep.csv").display());
    }
    Ok(0)
}

fn bound(path: &Path) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let file = ConstantsFile::parse_str(&text)?;
    print!("{}", render(&evaluate(&file)?));
    Ok(0)
}

fn topology(kind: TopologyKind, n: usize, p: f64, seed: u64) -> Result<u8, Failure> {
    let mut rng = RngStream::for_purpose(seed, Purpose::Topology, 0, 0);
    let graph = build_graph(kind, n, p, &mut rng)?;
    let m = metropolis_weights(&graph)?;
    println!("kind = {kind}");
    println!("n = {n}");
    println!("edges = {}", graph.edge_count());
    println!("lambda = {}", fmt_f64(m.lambda()));
    println!();
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| fmt_f64(m.theta()[(i, j)])).collect();
        println!("{}", row.join(","));
    }
    Ok(0)
}

fn partition(path: &Path, common: &Common) -> Result<u8, Failure> {
    let cfg = load(path, common)?;
    let seed = cfg.seeds[0];
    let (_, part, _) = build_data(&cfg, seed)?;
    let d = heterogeneity(&part);
    let mut w = csv::Writer::from_writer(std::io::stdout());
    let mut header = vec!["client".to_string(), "n".to_string()];
    header.extend((0..cfg.classes).map(|c| format!("class_{c}")));
    header.push("D".into());
    let wrap = |e: csv::Error| Failure::Runtime(e.to_string());
    w.write_record(&header).map_err(wrap)?;
    for (i, client) in part.clients().iter().enumerate() {
        let mut rec = vec![i.to_string(), client.len().to_string()];
        rec.extend(client.label_counts().iter().map(ToString::to_string));
        rec.push(fmt_f64(d[i]));
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate { config, common } => simulate(config, common),
        Command::Sweep { config, common } => sweep(config, common),
        Command::Bound { constants } => bound(constants),
        Command::Topology { kind, n, p, seed } => topology(*kind, *n, *p, *seed),
        Command::Partition { config, common } => partition(config, common),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
