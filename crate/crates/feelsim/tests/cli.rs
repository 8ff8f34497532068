use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn feelsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feelsim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn feelsim")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn simulate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.txt", "rounds = 20\nseeds = 2\nmode = dfl\ntopology = star\n");
    let out = feelsim(&["simulate", "c.txt", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    for f in ["config.resolved", "metrics.csv", "summary.json", "accuracy.svg", "loss.svg"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let rounds: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rounds, ["0", "10", "20"]);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["bound_kind"], "dfl");
    assert_eq!(summary["rounds_completed"], 20);
    assert!(summary["bound"].as_f64().unwrap() > 0.0);
    assert!(summary["lambda"].as_f64().unwrap() > 0.0);

    // The resolved config reproduces the run.
    let again = feelsim(&["simulate", "run/config.resolved", "--out", "again", "--quiet"], dir.path());
    assert_eq!(again.status.code(), Some(0));
    assert!(again.stdout.is_empty());
    assert_eq!(fs::read(run.join("metrics.csv")).unwrap(), fs::read(dir.path().join("again/metrics.csv")).unwrap());
}

#[test]
fn several_seeds_get_subdirectories() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.txt", "rounds = 3\nseeds = 0, 1\nplots = false\n");
    let out = feelsim(&["simulate", "c.txt", "--out", "r", "--quiet"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("r/seed-0/metrics.csv").is_file());
    assert!(dir.path().join("r/seed-1/metrics.csv").is_file());
    assert!(!dir.path().join("r/seed-0/accuracy.svg").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.txt", "rounds = 5\ndevices = -1\n");
    let out = feelsim(&["simulate", "bad.txt"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("devices") && err.contains("line 2"), "{err}");

    write(dir.path(), "typo.txt", "roundz = 5\n");
    assert_eq!(feelsim(&["simulate", "typo.txt"], dir.path()).status.code(), Some(2));
    assert_eq!(feelsim(&["simulate", "missing.txt"], dir.path()).status.code(), Some(2));
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.txt", "rounds = 5\nseeds = 0\nnoise_mode = sigma\nsigma = 1e308\n");
    let out = feelsim(&["simulate", "d.txt", "--out", "dv"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("dv/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["diverged"], true);
    let csv = fs::read_to_string(dir.path().join("dv/metrics.csv")).unwrap();
    assert!(!csv.contains("NaN") && !csv.contains("inf"));
}

#[test]
fn bound_prints_text_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "k.txt",
        "R = 1\nL = 1\nxi = 1\nD = 0\nsigma_sq = 1\nN = 10\nn = 100\nT = 10\neta = 0.1\nmi = 2\n",
    );
    let out = feelsim(&["bound", "k.txt"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("bound_cfl = 4.47213595499957"));
    assert!(text.contains("bound_dfl = 6.32455532033675"));
    assert!(text.contains("bound_generic,2.0000000000000001e-1"));

    write(dir.path(), "short.txt", "R = 1\n");
    assert_eq!(feelsim(&["bound", "short.txt"], dir.path()).status.code(), Some(2));
}

#[test]
fn topology_prints_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let out = feelsim(&["topology", "--kind", "ring", "--n", "4"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("lambda = 3.333333333333333"));
    let rows: Vec<&str> = text.lines().filter(|l| l.contains(',')).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.split(',').count() == 4));

    let out = feelsim(&["topology", "--kind", "complete", "--n", "5"], dir.path());
    assert!(String::from_utf8(out.stdout).unwrap().contains("lambda = 0.0000000000000000e0"));
    let out = feelsim(&["topology", "--kind", "ring", "--n", "1"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn partition_lists_clients() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.txt", "devices = 4\nsamples_per_device = 50\nclasses = 3\ndirichlet_alpha = 0.5\n");
    let out = feelsim(&["partition", "c.txt", "--seed", "9"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("client,n,class_0,class_1,class_2,D"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r[1], "50");
        let counts: usize = r[2..5].iter().map(|c| c.parse::<usize>().unwrap()).sum();
        assert_eq!(counts, 50);
    }
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.txt", "rounds = 10\nseeds = 0, 1\nsweep.alpha = 0.1, 10\nsweep.mode = cfl, dfl\n");
    let out = feelsim(&["sweep", "s.txt", "--out", "sw", "--no-plots"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sw/sweep.csv")).unwrap();
    let kinds: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "run").count(), 8);
    assert_eq!(kinds.iter().filter(|k| **k == "aggregate").count(), 4);
    assert!(dir.path().join("sw/points/mode=dfl_alpha=0.1/seed-1/metrics.csv").is_file());
    assert_eq!(fs::read_dir(dir.path().join("sw/points")).unwrap().count(), 4);
    assert!(!dir.path().join("sw/sweep_accuracy.svg").exists());
}
