//! Centralized and decentralized noisy training loops.
//!
//! All models start at zero. Every random draw comes from a substream keyed
//! by `(seed, device, round)` and device results are combined in index
//! order, so a run is bitwise reproducible whether or not per-device work
//! runs on several threads.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::channel::ChannelSpec;
use crate::data::{heterogeneity, ClientPartition, LabeledDataset};
use crate::model::{Batch, ModelSpec};
use crate::numerics::{axpy, Matrix, Purpose, RngStream};
use crate::topology::MixingMatrix;
use crate::{Error, Result};

/// Device index used for the server's noise stream in centralized mode.
const SERVER: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Cfl,
    Dfl,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Cfl => "cfl",
            Mode::Dfl => "dfl",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cfl" => Ok(Mode::Cfl),
            "dfl" => Ok(Mode::Dfl),
            other => Err(Error::param("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Local objective each device differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    FedSgd,
    FedProx,
    FedGmir,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::FedSgd => "fedsgd",
            Method::FedProx => "fedprox",
            Method::FedGmir => "fedgmir",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedsgd" | "fedavg" => Ok(Method::FedSgd),
            "fedprox" => Ok(Method::FedProx),
            "fedgmir" => Ok(Method::FedGmir),
            other => Err(Error::param("method", format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    /// `η_t = η₀ / √t`.
    InvSqrt(f64),
}

impl LrSchedule {
    /// Learning rate of round `t ≥ 1`.
    pub fn eta(&self, t: usize) -> f64 {
        match *self {
            LrSchedule::Constant(eta) => eta,
            LrSchedule::InvSqrt(eta0) => eta0 / libm::sqrt(t.max(1) as f64),
        }
    }

    pub fn base(&self) -> f64 {
        match *self {
            LrSchedule::Constant(eta) | LrSchedule::InvSqrt(eta) => eta,
        }
    }

    /// `η_1, …, η_T`.
    pub fn etas(&self, rounds: usize) -> Vec<f64> {
        (1..=rounds).map(|t| self.eta(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub rounds: usize,
    pub lr: LrSchedule,
    pub batch_size: usize,
    pub beta: f64,
    /// Per-round multiplicative decay of `beta`, in `(0, 1]`.
    pub beta_decay: f64,
    pub mu_prox: f64,
    pub eval_every: usize,
    pub seed: u64,
    /// Spread per-device work over threads (needs the `parallel` feature).
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::FedSgd,
            rounds: 300,
            lr: LrSchedule::Constant(0.05),
            batch_size: 32,
            beta: 1.0,
            beta_decay: 1.0,
            mu_prox: 0.01,
            eval_every: 10,
            seed: 0,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let eta = self.lr.base();
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::param("lr", "must be positive and finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be at least 1"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::param("beta", "must be finite and non-negative"));
        }
        if !(self.beta_decay > 0.0 && self.beta_decay <= 1.0) {
            return Err(Error::param("beta_decay", "must lie in (0, 1]"));
        }
        if !(self.mu_prox >= 0.0) || !self.mu_prox.is_finite() {
            return Err(Error::param("mu_prox", "must be finite and non-negative"));
        }
        if self.eval_every == 0 {
            return Err(Error::param("eval_every", "must be at least 1"));
        }
        Ok(())
    }

    /// `β_t = β · decay^(t−1)`.
    pub fn beta_at(&self, t: usize) -> f64 {
        self.beta * libm::pow(self.beta_decay, t.saturating_sub(1) as f64)
    }

    fn is_eval_round(&self, t: usize) -> bool {
        t.is_multiple_of(self.eval_every) || t == self.rounds
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    /// Mean over devices of the full local training loss.
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_acc: f64,
    /// `test_loss − train_loss`.
    pub gap: f64,
}

impl RoundMetrics {
    pub fn is_finite(&self) -> bool {
        self.train_loss.is_finite() && self.test_loss.is_finite() && self.test_acc.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub mode: Mode,
    /// Per-device models (DFL) or the single global model (CFL).
    pub models: Vec<Vec<f64>>,
    /// Global model (CFL) or the average of the device models (DFL).
    pub model: Vec<f64>,
    pub metrics: Vec<RoundMetrics>,
    pub lambda: Option<f64>,
    pub heterogeneity: Vec<f64>,
    /// Noise variance entering the bounds: the aggregate draw's variance in
    /// CFL, `Σᵢ σᵢ²` in DFL, averaged over the rounds run.
    pub noise_var: f64,
    /// Learning rates of the rounds actually run.
    pub etas: Vec<f64>,
    pub rounds_completed: usize,
    pub diverged: bool,
}

/// Sample indices device `device` uses in round `round ≥ 1`.
///
/// Each epoch of `⌈n / batch_size⌉` rounds walks a fresh permutation of the
/// local data, so every sample is used once per epoch; the last batch of an
/// epoch may be short.
pub fn batch_indices(seed: u64, device: usize, round: usize, n: usize, batch_size: usize) -> Vec<usize> {
    let per_epoch = n.div_ceil(batch_size);
    let r = round.max(1) - 1;
    let (epoch, pos) = (r / per_epoch, r % per_epoch);
    let mut perm: Vec<usize> = (0..n).collect();
    RngStream::for_purpose(seed, Purpose::Batch, device as u64, epoch as u64).shuffle(&mut perm);
    let start = pos * batch_size;
    perm[start..(start + batch_size).min(n)].to_vec()
}

/// Noise stream for `device` (or the server) in round `round`.
pub fn noise_stream(seed: u64, device: Option<usize>, round: usize) -> RngStream {
    let who = device.map_or(SERVER, |d| d as u64);
    RngStream::for_purpose(seed, Purpose::Noise, who, round as u64)
}

/// Gradient of the chosen local objective at `w_eval`.
///
/// FedProx pulls towards `w_anchor`; FedGMIR regularizes around `prior`.
#[allow(clippy::too_many_arguments)]
pub fn local_gradient(
    method: Method,
    spec: &ModelSpec,
    w_eval: &[f64],
    w_anchor: &[f64],
    prior: &[f64],
    batch: &Batch<'_>,
    beta_t: f64,
    mu_prox: f64,
) -> Result<Vec<f64>> {
    match method {
        Method::FedSgd => spec.grad(w_eval, batch),
        Method::FedProx => spec.fedprox_grad(w_eval, w_anchor, batch, mu_prox),
        Method::FedGmir => spec.gmir_grad(w_eval, prior, batch, beta_t),
    }
}

/// `outᵢ = Σⱼ θᵢⱼ wⱼ`, summed over every `j` in index order.
pub fn mix(theta: &Matrix, models: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = models.first().map_or(0, Vec::len);
    (0..theta.rows())
        .map(|i| {
            let mut out = vec![0.0; d];
            for (j, wj) in models.iter().enumerate() {
                axpy(theta[(i, j)], wj, &mut out);
            }
            out
        })
        .collect()
}

/// Metrics of `w`: mean full-pass train loss over devices, test loss and
/// accuracy.
pub fn evaluate(
    spec: &ModelSpec,
    w: &[f64],
    partition: &ClientPartition,
    test: &LabeledDataset,
    round: usize,
) -> Result<RoundMetrics> {
    if test.is_empty() {
        return Err(Error::param("test_size", "test set is empty"));
    }
    let mut train = 0.0;
    for client in partition.clients() {
        train += spec.loss(w, &Batch::full(client)?)?;
    }
    let train_loss = train / partition.devices() as f64;
    let test_loss = spec.loss(w, &Batch::full(test)?)?;
    let test_acc = spec.accuracy(w, test)?;
    Ok(RoundMetrics {
        round,
        train_loss,
        test_loss,
        test_acc,
        gap: test_loss - train_loss,
    })
}

fn for_each_device<T, F>(n: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = parallel;
    (0..n).map(f).collect()
}

fn check_inputs(cfg: &TrainConfig, spec: &ModelSpec, partition: &ClientPartition, test: &LabeledDataset) -> Result<()> {
    cfg.validate()?;
    if partition.samples_per_device() == 0 {
        return Err(Error::param("samples_per_device", "every client needs data"));
    }
    let first = partition.client(0);
    if first.dim() != spec.features() || first.classes() != spec.classes() {
        return Err(Error::Dimension("partition does not match the model".into()));
    }
    if test.dim() != spec.features() {
        return Err(Error::Dimension("test set does not match the model".into()));
    }
    Ok(())
}

fn all_finite(w: &[f64]) -> bool {
    w.iter().all(|x| x.is_finite())
}

struct Recorder<'a> {
    spec: &'a ModelSpec,
    partition: &'a ClientPartition,
    test: &'a LabeledDataset,
    metrics: Vec<RoundMetrics>,
}

impl Recorder<'_> {
    /// Records metrics; returns false if they are not finite.
    fn record(&mut self, w: &[f64], t: usize) -> Result<bool> {
        if !all_finite(w) {
            return Ok(false);
        }
        let m = evaluate(self.spec, w, self.partition, self.test, t)?;
        if !m.is_finite() {
            return Ok(false);
        }
        self.metrics.push(m);
        Ok(true)
    }
}

/// Centralized training: every round each device computes its local
/// gradient at the shared model, the server averages them and the
/// over-the-air aggregate picks up one noise draw.
pub fn run_cfl(
    cfg: &TrainConfig,
    spec: &ModelSpec,
    partition: &ClientPartition,
    test: &LabeledDataset,
    channel: &ChannelSpec,
) -> Result<RunResult> {
    check_inputs(cfg, spec, partition, test)?;
    let (devices, d, n) = (partition.devices(), spec.param_dim(), partition.samples_per_device());
    let prior = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut rec = Recorder {
        spec,
        partition,
        test,
        metrics: Vec::new(),
    };
    let mut diverged = !rec.record(&w, 0)?;
    let mut etas = Vec::new();
    let mut noise_sum = 0.0;
    let mut t = 0;
    while !diverged && t < cfg.rounds {
        t += 1;
        let eta = cfg.lr.eta(t);
        let beta_t = cfg.beta_at(t);
        let grads = for_each_device(devices, cfg.parallel, |i| {
            let client = partition.client(i);
            let idx = batch_indices(cfg.seed, i, t, n, cfg.batch_size);
            let batch = Batch::from_dataset(client, &idx)?;
            local_gradient(cfg.method, spec, &w, &w, &prior, &batch, beta_t, cfg.mu_prox)
        })?;
        let mut sum = vec![0.0; d];
        for g in &grads {
            axpy(1.0, g, &mut sum);
        }
        let scale = eta / devices as f64;
        for (wk, sk) in w.iter_mut().zip(&sum) {
            *wk -= scale * sk;
        }
        let sigma = channel.transmit_into(&mut w, &mut noise_stream(cfg.seed, None, t));
        noise_sum += sigma * sigma;
        etas.push(eta);
        if !all_finite(&w) {
            diverged = true;
        } else if cfg.is_eval_round(t) {
            diverged = !rec.record(&w, t)?;
        }
    }
    let noise_var = if t > 0 {
        noise_sum / t as f64
    } else {
        let s = channel.sigma_for(&w);
        s * s
    };
    Ok(RunResult {
        mode: Mode::Cfl,
        models: vec![w.clone()],
        model: w,
        metrics: rec.metrics,
        lambda: None,
        heterogeneity: heterogeneity(partition),
        noise_var,
        etas,
        rounds_completed: t,
        diverged,
    })
}

/// Average of the device models.
pub fn average_model(models: &[Vec<f64>]) -> Vec<f64> {
    let d = models.first().map_or(0, Vec::len);
    let mut avg = vec![0.0; d];
    for m in models {
        axpy(1.0, m, &mut avg);
    }
    let n = models.len().max(1) as f64;
    for x in &mut avg {
        *x /= n;
    }
    avg
}

/// Decentralized training: each device mixes its neighbours' models with
/// its row of `mixing`, steps along its local gradient taken at its own
/// model, and its transmission adds its own noise draw. `channels` holds
/// one entry for all devices or one per device.
pub fn run_dfl(
    cfg: &TrainConfig,
    spec: &ModelSpec,
    partition: &ClientPartition,
    test: &LabeledDataset,
    mixing: &MixingMatrix,
    channels: &[ChannelSpec],
) -> Result<RunResult> {
    check_inputs(cfg, spec, partition, test)?;
    let (devices, d, n) = (partition.devices(), spec.param_dim(), partition.samples_per_device());
    if mixing.size() != devices {
        return Err(Error::Dimension(format!(
            "mixing matrix is {0}×{0} for {devices} devices",
            mixing.size()
        )));
    }
    if channels.len() != 1 && channels.len() != devices {
        return Err(Error::param(
            "channels",
            format!("need 1 or {devices} channel specs, got {}", channels.len()),
        ));
    }
    let channel_of = |i: usize| if channels.len() == 1 { &channels[0] } else { &channels[i] };
    let prior = vec![0.0; d];
    let mut models = vec![vec![0.0; d]; devices];
    let mut rec = Recorder {
        spec,
        partition,
        test,
        metrics: Vec::new(),
    };
    let mut diverged = !rec.record(&average_model(&models), 0)?;
    let mut etas = Vec::new();
    let mut noise_sum = 0.0;
    let mut t = 0;
    while !diverged && t < cfg.rounds {
        t += 1;
        let eta = cfg.lr.eta(t);
        let beta_t = cfg.beta_at(t);
        let mixed = mix(mixing.theta(), &models);
        let updates = for_each_device(devices, cfg.parallel, |i| {
            let client = partition.client(i);
            let idx = batch_indices(cfg.seed, i, t, n, cfg.batch_size);
            let batch = Batch::from_dataset(client, &idx)?;
            let g = local_gradient(cfg.method, spec, &models[i], &mixed[i], &prior, &batch, beta_t, cfg.mu_prox)?;
            let mut v = mixed[i].clone();
            for (vk, gk) in v.iter_mut().zip(&g) {
                *vk -= eta * gk;
            }
            let sigma = channel_of(i).transmit_into(&mut v, &mut noise_stream(cfg.seed, Some(i), t));
            Ok((v, sigma * sigma))
        })?;
        let mut round_var = 0.0;
        for (i, (v, var)) in updates.into_iter().enumerate() {
            models[i] = v;
            round_var += var;
        }
        noise_sum += round_var;
        etas.push(eta);
        if !models.iter().all(|m| all_finite(m)) {
            diverged = true;
        } else if cfg.is_eval_round(t) {
            diverged = !rec.record(&average_model(&models), t)?;
        }
    }
    let noise_var = if t > 0 {
        noise_sum / t as f64
    } else {
        (0..devices)
            .map(|i| {
                let s = channel_of(i).sigma_for(&models[i]);
                s * s
            })
            .sum()
    };
    Ok(RunResult {
        mode: Mode::Dfl,
        model: average_model(&models),
        models,
        metrics: rec.metrics,
        lambda: Some(mixing.lambda()),
        heterogeneity: heterogeneity(partition),
        noise_var,
        etas,
        rounds_completed: t,
        diverged,
    })
}
