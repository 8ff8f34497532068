//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Lists are comma
//! separated. Unknown or repeated keys are rejected. Keys prefixed with
//! `sweep.` list the values of a sweep axis.

use std::collections::HashMap;
use std::fmt::{self, Display, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use feelsim_core::channel::PowerRef;
use feelsim_core::topology::TopologyKind;
use feelsim_core::trainer::{LrSchedule, Method, Mode, TrainConfig};

use crate::error::{ConfigError, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrKind {
    Constant,
    InvSqrt,
}

impl Display for LrKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LrKind::Constant => "constant",
            LrKind::InvSqrt => "inv_sqrt",
        })
    }
}

impl FromStr for LrKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "constant" => Ok(LrKind::Constant),
            "inv_sqrt" => Ok(LrKind::InvSqrt),
            _ => Err(format!("expected `constant` or `inv_sqrt`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Noiseless,
    Snr,
    Sigma,
}

impl Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Noiseless => "noiseless",
            NoiseKind::Snr => "snr",
            NoiseKind::Sigma => "sigma",
        })
    }
}

impl FromStr for NoiseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "noiseless" => Ok(NoiseKind::Noiseless),
            "snr" => Ok(NoiseKind::Snr),
            "sigma" => Ok(NoiseKind::Sigma),
            _ => Err(format!("expected `noiseless`, `snr` or `sigma`, got `{s}`")),
        }
    }
}

/// Resolved channel noise setting of an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    Noiseless,
    SnrDb(f64),
    Sigma(f64),
}

/// A value of the SNR sweep axis: a number in dB or `noiseless`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrPoint {
    Noiseless,
    Db(f64),
}

impl Display for SnrPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnrPoint::Noiseless => f.write_str("noiseless"),
            SnrPoint::Db(s) => write!(f, "{s}"),
        }
    }
}

impl FromStr for SnrPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "noiseless" {
            return Ok(SnrPoint::Noiseless);
        }
        parse_f64(s).map(SnrPoint::Db)
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("expected a number, got `{s}`"))
}

fn power_name(p: PowerRef) -> &'static str {
    match p {
        PowerRef::Unit => "unit",
        PowerRef::Empirical => "empirical",
    }
}

/// Values to cross in a sweep. Empty axes keep the base value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepAxes {
    pub alpha: Vec<f64>,
    pub topology: Vec<TopologyKind>,
    pub snr_db: Vec<SnrPoint>,
    pub method: Vec<Method>,
    pub lr: Vec<f64>,
    pub mode: Vec<Mode>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
            && self.topology.is_empty()
            && self.snr_db.is_empty()
            && self.method.is_empty()
            && self.lr.is_empty()
            && self.mode.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub method: Method,
    pub rounds: usize,
    pub lr: f64,
    pub lr_schedule: LrKind,
    pub batch_size: usize,
    pub beta: f64,
    pub beta_decay: f64,
    pub mu_prox: f64,
    pub eval_every: usize,
    pub seeds: Vec<u64>,
    pub devices: usize,
    pub samples_per_device: usize,
    pub classes: usize,
    pub feature_dim: usize,
    pub hidden: usize,
    pub dirichlet_alpha: f64,
    pub topology: TopologyKind,
    pub er_p: f64,
    pub noise_mode: NoiseKind,
    pub snr_db: f64,
    pub sigma: f64,
    /// Per-device noise std for DFL; replaces the shared noise setting when non-empty.
    pub device_sigma: Vec<f64>,
    pub power_ref: PowerRef,
    pub mixture_seed: u64,
    pub mixture_radius: f64,
    pub mixture_std: f64,
    pub test_size: usize,
    pub probe_models: usize,
    pub probe_scale: f64,
    pub parallel: bool,
    pub plots: bool,
    pub out_dir: PathBuf,
    pub sweep: SweepAxes,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Cfl,
            method: Method::FedSgd,
            rounds: 300,
            lr: 0.05,
            lr_schedule: LrKind::Constant,
            batch_size: 32,
            beta: 1.0,
            beta_decay: 1.0,
            mu_prox: 0.01,
            eval_every: 10,
            seeds: vec![0, 1, 2, 3, 4],
            devices: 10,
            samples_per_device: 200,
            classes: 5,
            feature_dim: 20,
            hidden: 0,
            dirichlet_alpha: 1.0,
            topology: TopologyKind::Ring,
            er_p: 0.01,
            noise_mode: NoiseKind::Snr,
            snr_db: 40.0,
            sigma: 0.0,
            device_sigma: Vec::new(),
            power_ref: PowerRef::Unit,
            mixture_seed: 0,
            mixture_radius: 3.0,
            mixture_std: 1.0,
            test_size: 2000,
            probe_models: 10,
            probe_scale: feelsim_core::bounds::DEFAULT_PROBE_SCALE,
            parallel: false,
            plots: true,
            out_dir: PathBuf::from("runs/default"),
            sweep: SweepAxes::default(),
        }
    }
}

fn list<T: Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn parse_list<T>(value: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|s| item(s.trim())).collect()
}

fn parse_usize(s: &str) -> Result<usize, String> {
    if s.starts_with('-') {
        return Err(format!("must be non-negative, got `{s}`"));
    }
    s.parse().map_err(|_| format!("expected a non-negative integer, got `{s}`"))
}

fn parse_u64(s: &str) -> Result<u64, String> {
    if s.starts_with('-') {
        return Err(format!("must be non-negative, got `{s}`"));
    }
    s.parse().map_err(|_| format!("expected a non-negative integer, got `{s}`"))
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

fn parse_with<T: FromStr>(s: &str) -> Result<T, String>
where
    T::Err: Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn parse_power(s: &str) -> Result<PowerRef, String> {
    match s {
        "unit" => Ok(PowerRef::Unit),
        "empirical" => Ok(PowerRef::Empirical),
        _ => Err(format!("expected `unit` or `empirical`, got `{s}`")),
    }
}

/// Splits `text` into `(line, key, value)` entries.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::new(Some(line), None, "expected `key = value`"))?;
        let (key, value) = (key.trim().to_string(), value.trim().to_string());
        if key.is_empty() {
            return Err(ConfigError::new(Some(line), None, "missing key"));
        }
        if let Some(first) = seen.insert(key.clone(), line) {
            return Err(ConfigError::new(
                Some(line),
                Some(&key),
                format!("duplicate key (first set on line {first})"),
            ));
        }
        out.push((line, key, value));
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut lines = HashMap::new();
        for (line, key, value) in parse_pairs(text)? {
            cfg.set(&key, &value)
                .map_err(|msg| ConfigError::new(Some(line), Some(&key), msg))?;
            lines.insert(key, line);
        }
        cfg.validate()
            .map_err(|(key, msg)| ConfigError::new(lines.get(key).copied(), Some(key), msg))?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text).map_err(HarnessError::Config)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "mode" => self.mode = parse_with(v)?,
            "method" => self.method = parse_with(v)?,
            "rounds" => self.rounds = parse_usize(v)?,
            "lr" => self.lr = parse_f64(v)?,
            "lr_schedule" => self.lr_schedule = v.parse()?,
            "batch_size" => self.batch_size = parse_usize(v)?,
            "beta" => self.beta = parse_f64(v)?,
            "beta_decay" => self.beta_decay = parse_f64(v)?,
            "mu_prox" => self.mu_prox = parse_f64(v)?,
            "eval_every" => self.eval_every = parse_usize(v)?,
            "seeds" => self.seeds = parse_list(v, parse_u64)?,
            "devices" => self.devices = parse_usize(v)?,
            "samples_per_device" => self.samples_per_device = parse_usize(v)?,
            "classes" => self.classes = parse_usize(v)?,
            "feature_dim" => self.feature_dim = parse_usize(v)?,
            "hidden" => self.hidden = parse_usize(v)?,
            "dirichlet_alpha" => self.dirichlet_alpha = parse_f64(v)?,
            "topology" => self.topology = parse_with(v)?,
            "er_p" => self.er_p = parse_f64(v)?,
            "noise_mode" => self.noise_mode = v.parse()?,
            "snr_db" => self.snr_db = parse_f64(v)?,
            "sigma" => self.sigma = parse_f64(v)?,
            "device_sigma" => self.device_sigma = parse_list(v, parse_f64)?,
            "power_ref" => self.power_ref = parse_power(v)?,
            "mixture_seed" => self.mixture_seed = parse_u64(v)?,
            "mixture_radius" => self.mixture_radius = parse_f64(v)?,
            "mixture_std" => self.mixture_std = parse_f64(v)?,
            "test_size" => self.test_size = parse_usize(v)?,
            "probe_models" => self.probe_models = parse_usize(v)?,
            "probe_scale" => self.probe_scale = parse_f64(v)?,
            "parallel" => self.parallel = parse_bool(v)?,
            "plots" => self.plots = parse_bool(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "sweep.alpha" => self.sweep.alpha = parse_list(v, parse_f64)?,
            "sweep.topology" => self.sweep.topology = parse_list(v, parse_with)?,
            "sweep.snr_db" => self.sweep.snr_db = parse_list(v, |s| s.parse())?,
            "sweep.method" => self.sweep.method = parse_list(v, parse_with)?,
            "sweep.lr" => self.sweep.lr = parse_list(v, parse_f64)?,
            "sweep.mode" => self.sweep.mode = parse_list(v, parse_with)?,
            "sweep.seed" => self.seeds = parse_list(v, parse_u64)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Checks every constraint; on failure names the offending key.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        fn positive(key: &'static str, x: f64) -> Result<(), (&'static str, String)> {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err((key, format!("must be positive and finite, got {x}")))
            }
        }
        fn non_negative(key: &'static str, x: f64) -> Result<(), (&'static str, String)> {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err((key, format!("must be finite and non-negative, got {x}")))
            }
        }
        fn at_least(key: &'static str, x: usize, min: usize) -> Result<(), (&'static str, String)> {
            if x >= min {
                Ok(())
            } else {
                Err((key, format!("must be at least {min}, got {x}")))
            }
        }
        positive("lr", self.lr)?;
        at_least("batch_size", self.batch_size, 1)?;
        non_negative("beta", self.beta)?;
        if !(self.beta_decay > 0.0 && self.beta_decay <= 1.0) {
            return Err(("beta_decay", format!("must lie in (0, 1], got {}", self.beta_decay)));
        }
        non_negative("mu_prox", self.mu_prox)?;
        at_least("eval_every", self.eval_every, 1)?;
        if self.seeds.is_empty() {
            return Err(("seeds", "need at least one seed".into()));
        }
        at_least("devices", self.devices, 1)?;
        at_least("samples_per_device", self.samples_per_device, 1)?;
        at_least("classes", self.classes, 2)?;
        at_least("feature_dim", self.feature_dim, 1)?;
        positive("dirichlet_alpha", self.dirichlet_alpha)?;
        if !(0.0..=1.0).contains(&self.er_p) {
            return Err(("er_p", format!("must lie in [0, 1], got {}", self.er_p)));
        }
        if !self.snr_db.is_finite() {
            return Err(("snr_db", "must be finite".into()));
        }
        non_negative("sigma", self.sigma)?;
        for &s in &self.device_sigma {
            non_negative("device_sigma", s)?;
        }
        if !self.device_sigma.is_empty() && self.device_sigma.len() != self.devices {
            return Err((
                "device_sigma",
                format!("needs one value per device ({}), got {}", self.devices, self.device_sigma.len()),
            ));
        }
        positive("mixture_radius", self.mixture_radius)?;
        positive("mixture_std", self.mixture_std)?;
        at_least("test_size", self.test_size, 1)?;
        at_least("probe_models", self.probe_models, 10)?;
        non_negative("probe_scale", self.probe_scale)?;
        for &a in &self.sweep.alpha {
            positive("sweep.alpha", a)?;
        }
        for &p in &self.sweep.snr_db {
            if let SnrPoint::Db(s) = p {
                if !s.is_finite() {
                    return Err(("sweep.snr_db", "SNR must be finite".into()));
                }
            }
        }
        for &lr in &self.sweep.lr {
            positive("sweep.lr", lr)?;
        }
        Ok(())
    }

    pub fn noise(&self) -> Noise {
        match self.noise_mode {
            NoiseKind::Noiseless => Noise::Noiseless,
            NoiseKind::Snr => Noise::SnrDb(self.snr_db),
            NoiseKind::Sigma => Noise::Sigma(self.sigma),
        }
    }

    /// Applies one point of the SNR axis.
    pub fn set_snr(&mut self, p: SnrPoint) {
        match p {
            SnrPoint::Noiseless => self.noise_mode = NoiseKind::Noiseless,
            SnrPoint::Db(s) => {
                self.noise_mode = NoiseKind::Snr;
                self.snr_db = s;
            }
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            method: self.method,
            rounds: self.rounds,
            lr: match self.lr_schedule {
                LrKind::Constant => LrSchedule::Constant(self.lr),
                LrKind::InvSqrt => LrSchedule::InvSqrt(self.lr),
            },
            batch_size: self.batch_size,
            beta: self.beta,
            beta_decay: self.beta_decay,
            mu_prox: self.mu_prox,
            eval_every: self.eval_every,
            seed,
            parallel: self.parallel,
        }
    }

    /// Every key with its value, in a form [`ExperimentConfig::parse_str`]
    /// reads back to an identical config.
    pub fn resolved(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("mode", self.mode.to_string());
        put("method", self.method.to_string());
        put("rounds", self.rounds.to_string());
        put("lr", self.lr.to_string());
        put("lr_schedule", self.lr_schedule.to_string());
        put("batch_size", self.batch_size.to_string());
        put("beta", self.beta.to_string());
        put("beta_decay", self.beta_decay.to_string());
        put("mu_prox", self.mu_prox.to_string());
        put("eval_every", self.eval_every.to_string());
        put("seeds", list(&self.seeds));
        put("devices", self.devices.to_string());
        put("samples_per_device", self.samples_per_device.to_string());
        put("classes", self.classes.to_string());
        put("feature_dim", self.feature_dim.to_string());
        put("hidden", self.hidden.to_string());
        put("dirichlet_alpha", self.dirichlet_alpha.to_string());
        put("topology", self.topology.to_string());
        put("er_p", self.er_p.to_string());
        put("noise_mode", self.noise_mode.to_string());
        put("snr_db", self.snr_db.to_string());
        put("sigma", self.sigma.to_string());
        put("device_sigma", list(&self.device_sigma));
        put("power_ref", power_name(self.power_ref).to_string());
        put("mixture_seed", self.mixture_seed.to_string());
        put("mixture_radius", self.mixture_radius.to_string());
        put("mixture_std", self.mixture_std.to_string());
        put("test_size", self.test_size.to_string());
        put("probe_models", self.probe_models.to_string());
        put("probe_scale", self.probe_scale.to_string());
        put("parallel", self.parallel.to_string());
        put("plots", self.plots.to_string());
        put("out_dir", self.out_dir.display().to_string());
        put("sweep.alpha", list(&self.sweep.alpha));
        put("sweep.topology", list(&self.sweep.topology));
        put("sweep.snr_db", list(&self.sweep.snr_db));
        put("sweep.method", list(&self.sweep.method));
        put("sweep.lr", list(&self.sweep.lr));
        put("sweep.mode", list(&self.sweep.mode));
        s
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(ExperimentConfig::parse_str("").unwrap(), ExperimentConfig::default());
        assert_eq!(
            ExperimentConfig::parse_str("# nothing here\n\n   \n").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn values_and_comments() {
        let cfg = ExperimentConfig::parse_str(
            "mode = dfl  # decentralized\nmethod=fedgmir\nseeds = 3, 4\nnoise_mode = noiseless\ntopology = star\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Dfl);
        assert_eq!(cfg.method, Method::FedGmir);
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.noise(), Noise::Noiseless);
        assert_eq!(cfg.topology, TopologyKind::Star);
    }

    #[test]
    fn negative_devices_names_the_key() {
        let err = ExperimentConfig::parse_str("rounds = 5\ndevices = -1\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert_eq!(err.key.as_deref(), Some("devices"));
    }

    #[test]
    fn constraint_errors_point_at_their_line() {
        let err = ExperimentConfig::parse_str("\nlr = 0\n").unwrap_err();
        assert_eq!((err.line, err.key.as_deref()), (Some(2), Some("lr")));
        let err = ExperimentConfig::parse_str("probe_models = 3").unwrap_err();
        assert_eq!(err.key.as_deref(), Some("probe_models"));
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(ExperimentConfig::parse_str("colour = red").is_err());
        let err = ExperimentConfig::parse_str("rounds = 1\nrounds = 2").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(ExperimentConfig::parse_str("rounds").is_err());
        assert!(ExperimentConfig::parse_str("rounds = many").is_err());
        assert!(ExperimentConfig::parse_str("mode = hybrid").is_err());
    }

    #[test]
    fn resolved_echo_is_a_fixpoint() {
        let text = "mode = dfl\nlr = 0.1\nnoise_mode = sigma\nsigma = 0.25\nsweep.alpha = 0.1, 1, 10\n\
                    sweep.snr_db = noiseless, 20, 55\nsweep.topology = complete, ring, erdos_renyi\n\
                    power_ref = empirical\nout_dir = /tmp/x y\nbeta_decay = 0.996\n";
        let cfg = ExperimentConfig::parse_str(text).unwrap();
        let echo = cfg.resolved();
        let again = ExperimentConfig::parse_str(&echo).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.resolved(), echo);
        let defaults = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse_str(&defaults.resolved()).unwrap(), defaults);
    }
}
