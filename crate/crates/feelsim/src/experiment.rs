//! One configured training run: data, topology, channel, trainer, bound.

use std::time::Instant;

use feelsim_core::bounds::{bound_cfl, bound_dfl, estimate_constants, BoundConstants, EmpiricalConstants};
use feelsim_core::channel::{ChannelSpec, NoiseMode};
use feelsim_core::data::{dirichlet_partition, gen_synthetic, global_test_set, ClientPartition, LabeledDataset, MixtureSpec};
use feelsim_core::model::ModelSpec;
use feelsim_core::numerics::{Purpose, RngStream};
use feelsim_core::topology::{build_graph, metropolis_weights, Graph, MixingMatrix};
use feelsim_core::trainer::{run_cfl, run_dfl, Mode, RunResult};
use feelsim_core::Error;

use crate::config::{ExperimentConfig, Noise};
use crate::error::HarnessError;

/// Source pool size as a multiple of `devices × samples_per_device`; the
/// slack lets skewed Dirichlet draws fill every client.
const SOURCE_FACTOR: usize = 2;

/// Everything a run needs besides the trainer settings.
#[derive(Debug, Clone)]
pub struct Setup {
    pub spec: ModelSpec,
    pub mixture: MixtureSpec,
    pub partition: ClientPartition,
    pub test: LabeledDataset,
    pub mixing: Option<MixingMatrix>,
    pub channels: Vec<ChannelSpec>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub seed: u64,
    pub result: RunResult,
    pub empirical: EmpiricalConstants,
    pub constants: BoundConstants,
    /// `None` for noiseless or diverged runs.
    pub bound: Option<f64>,
    pub wall_clock_secs: f64,
}

impl Outcome {
    pub fn final_metrics(&self) -> Option<&feelsim_core::trainer::RoundMetrics> {
        self.result.metrics.last()
    }

    pub fn mean_heterogeneity(&self) -> f64 {
        let d = &self.result.heterogeneity;
        d.iter().sum::<f64>() / d.len().max(1) as f64
    }
}

pub fn model_spec(cfg: &ExperimentConfig) -> Result<ModelSpec, Error> {
    if cfg.hidden == 0 {
        ModelSpec::logistic(cfg.feature_dim, cfg.classes)
    } else {
        ModelSpec::mlp(cfg.feature_dim, cfg.hidden, cfg.classes)
    }
}

pub fn channel(cfg: &ExperimentConfig) -> Result<ChannelSpec, Error> {
    let mode = match cfg.noise() {
        Noise::Noiseless => NoiseMode::Noiseless,
        Noise::SnrDb(s) => NoiseMode::SnrDb(s),
        Noise::Sigma(s) => NoiseMode::Sigma(s),
    };
    ChannelSpec::new(mode, cfg.power_ref)
}

pub fn topology_graph(cfg: &ExperimentConfig, seed: u64) -> Result<Graph, Error> {
    if cfg.devices == 1 {
        return Graph::from_edges(1, &[]);
    }
    let mut rng = RngStream::for_purpose(seed, Purpose::Topology, 0, 0);
    build_graph(cfg.topology, cfg.devices, cfg.er_p, &mut rng)
}

/// Client data and held-out test set for `seed`. Class means depend only
/// on `mixture_seed`, so every seed solves the same task.
pub fn build_data(cfg: &ExperimentConfig, seed: u64) -> Result<(MixtureSpec, ClientPartition, LabeledDataset), Error> {
    let mut mix_rng = RngStream::for_purpose(cfg.mixture_seed, Purpose::Mixture, 0, 0);
    let mixture = MixtureSpec::on_sphere(cfg.classes, cfg.feature_dim, cfg.mixture_radius, cfg.mixture_std, &mut mix_rng)?;
    let uniform = vec![1.0 / cfg.classes as f64; cfg.classes];
    let total = SOURCE_FACTOR * cfg.devices * cfg.samples_per_device;
    let source = gen_synthetic(&mixture, total, &uniform, &mut RngStream::for_purpose(seed, Purpose::Source, 0, 0))?;
    let partition = dirichlet_partition(
        &source,
        cfg.devices,
        cfg.dirichlet_alpha,
        cfg.samples_per_device,
        &mut RngStream::for_purpose(seed, Purpose::Partition, 0, 0),
    )?;
    let test = global_test_set(
        &mixture,
        &partition,
        cfg.test_size,
        &mut RngStream::for_purpose(seed, Purpose::TestSet, 0, 0),
    )?;
    Ok((mixture, partition, test))
}

pub fn setup(cfg: &ExperimentConfig, seed: u64) -> Result<Setup, Error> {
    let spec = model_spec(cfg)?;
    let (mixture, partition, test) = build_data(cfg, seed)?;
    let (mixing, channels) = match cfg.mode {
        Mode::Cfl => (None, vec![channel(cfg)?]),
        Mode::Dfl => {
            let mixing = metropolis_weights(&topology_graph(cfg, seed)?)?;
            let channels = if cfg.device_sigma.is_empty() {
                vec![channel(cfg)?]
            } else {
                cfg.device_sigma
                    .iter()
                    .map(|&s| ChannelSpec::new(NoiseMode::Sigma(s), cfg.power_ref))
                    .collect::<Result<_, _>>()?
            };
            (Some(mixing), channels)
        }
    };
    Ok(Setup {
        spec,
        mixture,
        partition,
        test,
        mixing,
        channels,
    })
}

/// Runs one seed of `cfg` and evaluates the matching bound on constants
/// estimated from random probe models.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<Outcome, HarnessError> {
    let start = Instant::now();
    let s = setup(cfg, seed)?;
    let train = cfg.train_config(seed);
    let result = match &s.mixing {
        None => run_cfl(&train, &s.spec, &s.partition, &s.test, &s.channels[0])?,
        Some(m) => run_dfl(&train, &s.spec, &s.partition, &s.test, m, &s.channels)?,
    };
    let mut probe_rng = RngStream::for_purpose(seed, Purpose::Probe, 0, 0);
    let empirical = estimate_constants(&s.spec, &s.partition, cfg.probe_models, cfg.probe_scale, &[], &mut probe_rng)?;
    let constants = BoundConstants::from_empirical(
        &empirical,
        result.noise_var,
        result.lambda.unwrap_or(0.0),
        s.spec.param_dim(),
        cfg.samples_per_device,
        result.etas.clone(),
    );
    let bound = match cfg.mode {
        Mode::Cfl => bound_cfl(&constants),
        Mode::Dfl => bound_dfl(&constants),
    };
    let bound = match bound {
        Ok(b) => Some(b),
        Err(Error::UndefinedBound) => None,
        // a diverged run can carry an infinite noise variance
        Err(_) if result.diverged => None,
        Err(e) => return Err(e.into()),
    };
    Ok(Outcome {
        seed,
        result,
        empirical,
        constants,
        bound,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
