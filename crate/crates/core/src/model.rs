//! Differentiable classifiers with analytic loss, gradient and
//! Hessian-vector product, plus the regularized local objectives used by
//! FedGMIR and FedProx.
//!
//! Parameters are flat `&[f64]` vectors. Logistic regression stores the
//! `C × F` weight block row-major followed by the `C` biases. The MLP stores
//! `W1 (H × F)`, `b1 (H)`, `W2 (C × H)`, `b2 (C)` in that order and uses a
//! `tanh` hidden layer so every objective is smooth.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabeledDataset;
use crate::numerics::{axpy, dot, norm};
use crate::{Error, Result};

/// Model architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSpec {
    Logistic {
        features: usize,
        classes: usize,
    },
    Mlp {
        features: usize,
        hidden: usize,
        classes: usize,
    },
}

/// A non-empty minibatch borrowed from a dataset.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    features: Vec<&'a [f64]>,
    labels: Vec<usize>,
}

impl<'a> Batch<'a> {
    pub fn new(features: Vec<&'a [f64]>, labels: Vec<usize>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::param("batch", "must not be empty"));
        }
        if features.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows for {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features[0].len();
        if features.iter().any(|x| x.len() != dim) {
            return Err(Error::Dimension("ragged batch".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn from_dataset(ds: &'a LabeledDataset, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= ds.len()) {
            return Err(Error::param("batch", format!("index {bad} outside dataset")));
        }
        Self::new(
            idx.iter().map(|&i| ds.feature(i)).collect(),
            idx.iter().map(|&i| ds.label(i)).collect(),
        )
    }

    pub fn full(ds: &'a LabeledDataset) -> Result<Self> {
        let idx: Vec<usize> = (0..ds.len()).collect();
        Self::from_dataset(ds, &idx)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn dim(&self) -> usize {
        self.features[0].len()
    }
}

/// Per-sample buffers reused across a batch.
struct Scratch {
    hidden: Vec<f64>,
    logits: Vec<f64>,
}

impl ModelSpec {
    pub fn logistic(features: usize, classes: usize) -> Result<Self> {
        Self::check_io(features, classes)?;
        Ok(Self::Logistic { features, classes })
    }

    pub fn mlp(features: usize, hidden: usize, classes: usize) -> Result<Self> {
        Self::check_io(features, classes)?;
        if hidden == 0 {
            return Err(Error::param("hidden", "must be positive for an MLP"));
        }
        Ok(Self::Mlp {
            features,
            hidden,
            classes,
        })
    }

    fn check_io(features: usize, classes: usize) -> Result<()> {
        if features == 0 {
            return Err(Error::param("feature_dim", "must be positive"));
        }
        if classes < 2 {
            return Err(Error::param("classes", "need at least two classes"));
        }
        Ok(())
    }

    pub fn features(&self) -> usize {
        match *self {
            Self::Logistic { features, .. } | Self::Mlp { features, .. } => features,
        }
    }

    pub fn classes(&self) -> usize {
        match *self {
            Self::Logistic { classes, .. } | Self::Mlp { classes, .. } => classes,
        }
    }

    /// Number of parameters `d`.
    pub fn param_dim(&self) -> usize {
        match *self {
            Self::Logistic { features, classes } => (features + 1) * classes,
            Self::Mlp {
                features,
                hidden,
                classes,
            } => (features + 1) * hidden + (hidden + 1) * classes,
        }
    }

    /// Range of the parameter vector holding the output layer (weights and
    /// biases that produce the logits), as `(weights, biases)`.
    pub fn output_layer(&self) -> (core::ops::Range<usize>, core::ops::Range<usize>) {
        match *self {
            Self::Logistic { features, classes } => {
                (0..features * classes, features * classes..(features + 1) * classes)
            }
            Self::Mlp {
                features,
                hidden,
                classes,
            } => {
                let w2 = (features + 1) * hidden;
                let b2 = w2 + classes * hidden;
                (w2..b2, b2..b2 + classes)
            }
        }
    }

    fn scratch(&self) -> Scratch {
        let hidden = match *self {
            Self::Logistic { .. } => 0,
            Self::Mlp { hidden, .. } => hidden,
        };
        Scratch {
            hidden: vec![0.0; hidden],
            logits: vec![0.0; self.classes()],
        }
    }

    fn check_params(&self, name: &'static str, w: &[f64]) -> Result<()> {
        if w.len() != self.param_dim() {
            return Err(Error::Dimension(format!(
                "`{name}` has length {}, model needs {}",
                w.len(),
                self.param_dim()
            )));
        }
        Ok(())
    }

    fn check_batch(&self, b: &Batch<'_>) -> Result<()> {
        if b.dim() != self.features() {
            return Err(Error::Dimension(format!(
                "batch features have dimension {}, model expects {}",
                b.dim(),
                self.features()
            )));
        }
        if let Some(&bad) = b.labels.iter().find(|&&y| y >= self.classes()) {
            return Err(Error::param("labels", format!("label {bad} outside 0..{}", self.classes())));
        }
        Ok(())
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.features() {
            return Err(Error::Dimension(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.features()
            )));
        }
        Ok(())
    }

    /// Writes logits into `s.logits` (and hidden activations for the MLP).
    fn forward(&self, w: &[f64], x: &[f64], s: &mut Scratch) {
        match *self {
            Self::Logistic { features, classes } => {
                let bias = &w[features * classes..];
                for c in 0..classes {
                    s.logits[c] = dot(&w[c * features..(c + 1) * features], x) + bias[c];
                }
            }
            Self::Mlp {
                features,
                hidden,
                classes,
            } => {
                let b1 = hidden * features;
                let w2 = b1 + hidden;
                let b2 = w2 + classes * hidden;
                for h in 0..hidden {
                    let a = dot(&w[h * features..(h + 1) * features], x) + w[b1 + h];
                    s.hidden[h] = libm::tanh(a);
                }
                for c in 0..classes {
                    s.logits[c] = dot(&w[w2 + c * hidden..w2 + (c + 1) * hidden], &s.hidden) + w[b2 + c];
                }
            }
        }
    }

    /// Turns `s.logits` into probabilities in place and returns
    /// `log Σ exp(logits)`.
    fn softmax_in_place(s: &mut Scratch) -> f64 {
        let max = s.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for z in s.logits.iter_mut() {
            *z = libm::exp(*z - max);
            total += *z;
        }
        for z in s.logits.iter_mut() {
            *z /= total;
        }
        max + libm::log(total)
    }

    /// Cross-entropy of one sample; when `grad` is given, adds
    /// `scale · ∇ℓ` into it.
    fn sample_objective(
        &self,
        w: &[f64],
        x: &[f64],
        y: usize,
        s: &mut Scratch,
        grad: Option<(&mut [f64], f64)>,
    ) -> f64 {
        self.forward(w, x, s);
        let z_y = s.logits[y];
        let lse = Self::softmax_in_place(s);
        let loss = lse - z_y;
        let Some((g, scale)) = grad else {
            return loss;
        };
        // s.logits now holds softmax probabilities.
        match *self {
            Self::Logistic { features, classes } => {
                for c in 0..classes {
                    let dz = (s.logits[c] - if c == y { 1.0 } else { 0.0 }) * scale;
                    axpy(dz, x, &mut g[c * features..(c + 1) * features]);
                    g[features * classes + c] += dz;
                }
            }
            Self::Mlp {
                features,
                hidden,
                classes,
            } => {
                let b1 = hidden * features;
                let w2 = b1 + hidden;
                let b2 = w2 + classes * hidden;
                let mut dh = vec![0.0; hidden];
                for c in 0..classes {
                    let dz = (s.logits[c] - if c == y { 1.0 } else { 0.0 }) * scale;
                    let row = w2 + c * hidden;
                    for h in 0..hidden {
                        g[row + h] += dz * s.hidden[h];
                        dh[h] += w[row + h] * dz;
                    }
                    g[b2 + c] += dz;
                }
                for h in 0..hidden {
                    let da = dh[h] * (1.0 - s.hidden[h] * s.hidden[h]);
                    axpy(da, x, &mut g[h * features..(h + 1) * features]);
                    g[b1 + h] += da;
                }
            }
        }
        loss
    }

    /// Mean softmax cross-entropy over the batch.
    pub fn loss(&self, w: &[f64], b: &Batch<'_>) -> Result<f64> {
        self.check_params("w", w)?;
        self.check_batch(b)?;
        let mut s = self.scratch();
        let total: f64 = b
            .features
            .iter()
            .zip(&b.labels)
            .map(|(x, &y)| self.sample_objective(w, x, y, &mut s, None))
            .sum();
        Ok(total / b.len() as f64)
    }

    /// Mean loss and its gradient in one pass.
    pub fn loss_and_grad(&self, w: &[f64], b: &Batch<'_>) -> Result<(f64, Vec<f64>)> {
        self.check_params("w", w)?;
        self.check_batch(b)?;
        let mut s = self.scratch();
        let mut g = vec![0.0; self.param_dim()];
        let scale = 1.0 / b.len() as f64;
        let mut total = 0.0;
        for (x, &y) in b.features.iter().zip(&b.labels) {
            total += self.sample_objective(w, x, y, &mut s, Some((&mut g, scale)));
        }
        Ok((total / b.len() as f64, g))
    }

    /// Gradient of [`ModelSpec::loss`].
    pub fn grad(&self, w: &[f64], b: &Batch<'_>) -> Result<Vec<f64>> {
        self.loss_and_grad(w, b).map(|(_, g)| g)
    }

    /// Loss and gradient of a single sample.
    pub fn sample_loss_grad(&self, w: &[f64], x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        self.check_params("w", w)?;
        self.check_features(x)?;
        if y >= self.classes() {
            return Err(Error::param("labels", format!("label {y} outside 0..{}", self.classes())));
        }
        let mut s = self.scratch();
        let mut g = vec![0.0; self.param_dim()];
        let loss = self.sample_objective(w, x, y, &mut s, Some((&mut g, 1.0)));
        Ok((loss, g))
    }

    /// Hessian-vector product `∇²loss(w) · v`.
    ///
    /// Exact for logistic regression. For the MLP it is a forward difference
    /// of the gradient along `v` with a perturbation of length
    /// `1e-6 · (1 + ‖w‖)`.
    pub fn hvp(&self, w: &[f64], b: &Batch<'_>, v: &[f64]) -> Result<Vec<f64>> {
        self.check_params("w", w)?;
        self.check_params("v", v)?;
        self.check_batch(b)?;
        match self {
            Self::Logistic { .. } => Ok(self.logistic_hvp(w, b, v)),
            Self::Mlp { .. } => {
                let base = self.grad(w, b)?;
                self.fd_hvp(w, b, v, &base)
            }
        }
    }

    fn logistic_hvp(&self, w: &[f64], b: &Batch<'_>, v: &[f64]) -> Vec<f64> {
        let (features, classes) = (self.features(), self.classes());
        let mut s = self.scratch();
        let mut out = vec![0.0; self.param_dim()];
        let mut u = vec![0.0; classes];
        let scale = 1.0 / b.len() as f64;
        for x in &b.features {
            self.forward(w, x, &mut s);
            Self::softmax_in_place(&mut s);
            // u = J v, the change in logits along v.
            for c in 0..classes {
                u[c] = dot(&v[c * features..(c + 1) * features], x) + v[features * classes + c];
            }
            let pu = dot(&s.logits, &u);
            for c in 0..classes {
                let coef = s.logits[c] * (u[c] - pu) * scale;
                axpy(coef, x, &mut out[c * features..(c + 1) * features]);
                out[features * classes + c] += coef;
            }
        }
        out
    }

    fn fd_hvp(&self, w: &[f64], b: &Batch<'_>, v: &[f64], base: &[f64]) -> Result<Vec<f64>> {
        let v_norm = norm(v);
        if v_norm == 0.0 {
            return Ok(vec![0.0; v.len()]);
        }
        let h = 1e-6 * (1.0 + norm(w)) / v_norm;
        let shifted: Vec<f64> = w.iter().zip(v).map(|(wi, vi)| wi + h * vi).collect();
        let g = self.grad(&shifted, b)?;
        Ok(g.iter().zip(base).map(|(a, c)| (a - c) / h).collect())
    }

    fn hvp_with_base(&self, w: &[f64], b: &Batch<'_>, v: &[f64], base: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Logistic { .. } => Ok(self.logistic_hvp(w, b, v)),
            Self::Mlp { .. } => self.fd_hvp(w, b, v, base),
        }
    }

    /// FedGMIR objective `loss + β · (∇loss(w)ᵀ (w − w0))²`.
    pub fn gmir_value(&self, w: &[f64], w0: &[f64], b: &Batch<'_>, beta: f64) -> Result<f64> {
        check_beta(beta)?;
        self.check_params("w0", w0)?;
        let (loss, g) = self.loss_and_grad(w, b)?;
        let r: f64 = g.iter().zip(w.iter().zip(w0)).map(|(gi, (wi, pi))| gi * (wi - pi)).sum();
        Ok(loss + beta * r * r)
    }

    /// Gradient of [`ModelSpec::gmir_value`]:
    /// `∇loss + 2βr (H (w − w0) + ∇loss)` with `r = ∇lossᵀ (w − w0)`.
    pub fn gmir_grad(&self, w: &[f64], w0: &[f64], b: &Batch<'_>, beta: f64) -> Result<Vec<f64>> {
        check_beta(beta)?;
        self.check_params("w0", w0)?;
        let mut g = self.grad(w, b)?;
        if beta == 0.0 {
            return Ok(g);
        }
        let delta: Vec<f64> = w.iter().zip(w0).map(|(a, c)| a - c).collect();
        let r = dot(&g, &delta);
        if r == 0.0 {
            return Ok(g);
        }
        let hd = self.hvp_with_base(w, b, &delta, &g)?;
        let coef = 2.0 * beta * r;
        for (gi, hi) in g.iter_mut().zip(&hd) {
            *gi += coef * (hi + *gi);
        }
        Ok(g)
    }

    /// FedProx local gradient `∇loss(w) + μ (w − w_ref)`.
    pub fn fedprox_grad(&self, w: &[f64], w_ref: &[f64], b: &Batch<'_>, mu_prox: f64) -> Result<Vec<f64>> {
        if !(mu_prox >= 0.0) || !mu_prox.is_finite() {
            return Err(Error::param("mu_prox", "must be finite and non-negative"));
        }
        self.check_params("w_ref", w_ref)?;
        let mut g = self.grad(w, b)?;
        if mu_prox != 0.0 {
            for (gi, (wi, ri)) in g.iter_mut().zip(w.iter().zip(w_ref)) {
                *gi += mu_prox * (wi - ri);
            }
        }
        Ok(g)
    }

    pub fn logits(&self, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_params("w", w)?;
        self.check_features(x)?;
        let mut s = self.scratch();
        self.forward(w, x, &mut s);
        Ok(s.logits)
    }

    /// Arg-max class; ties go to the lowest index.
    pub fn predict(&self, w: &[f64], x: &[f64]) -> Result<usize> {
        let z = self.logits(w, x)?;
        Ok(argmax(&z))
    }

    /// Fraction of correctly classified samples; 0 for an empty dataset.
    pub fn accuracy(&self, w: &[f64], ds: &LabeledDataset) -> Result<f64> {
        self.check_params("w", w)?;
        if ds.is_empty() {
            return Ok(0.0);
        }
        if ds.dim() != self.features() {
            return Err(Error::Dimension("dataset dimension differs from model".into()));
        }
        let mut s = self.scratch();
        let mut hits = 0usize;
        for i in 0..ds.len() {
            self.forward(w, ds.feature(i), &mut s);
            if argmax(&s.logits) == ds.label(i) {
                hits += 1;
            }
        }
        Ok(hits as f64 / ds.len() as f64)
    }
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::param("beta", "must be finite and non-negative"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, RngStream};

    fn toy_dataset() -> LabeledDataset {
        LabeledDataset::new(
            2,
            3,
            vec![1.0, -0.5, 0.3, 2.0, -1.2, 0.7],
            vec![0, 2, 1],
        )
        .unwrap()
    }

    fn toy_weights() -> Vec<f64> {
        vec![0.5, -0.3, 0.1, 0.8, -0.6, 0.2, 0.05, -0.1, 0.2]
    }

    #[test]
    fn param_dims() {
        assert_eq!(ModelSpec::logistic(20, 5).unwrap().param_dim(), 105);
        assert_eq!(ModelSpec::mlp(20, 8, 5).unwrap().param_dim(), 21 * 8 + 9 * 5);
        assert!(ModelSpec::logistic(0, 5).is_err());
        assert!(ModelSpec::logistic(3, 1).is_err());
        assert!(ModelSpec::mlp(3, 0, 2).is_err());
    }

    #[test]
    fn zero_weights_give_log_c() {
        let ds = toy_dataset();
        let spec = ModelSpec::logistic(2, 3).unwrap();
        let b = Batch::full(&ds).unwrap();
        let loss = spec.loss(&[0.0; 9], &b).unwrap();
        assert!((loss - libm::log(3.0)).abs() <= 1e-15);
    }

    #[test]
    fn large_margin_loss_vanishes() {
        let spec = ModelSpec::logistic(1, 2).unwrap();
        let ds = LabeledDataset::new(1, 2, vec![1.0], vec![1]).unwrap();
        // logits (0, 40)
        let loss = spec.loss(&[0.0, 40.0, 0.0, 0.0], &Batch::full(&ds).unwrap()).unwrap();
        assert!((0.0..1e-6).contains(&loss));
    }

    #[test]
    fn loss_matches_high_precision_oracle() {
        // 40-digit evaluation of the same three samples.
        let want = 1.069_854_934_023_576_9;
        let ds = toy_dataset();
        let spec = ModelSpec::logistic(2, 3).unwrap();
        let loss = spec.loss(&toy_weights(), &Batch::full(&ds).unwrap()).unwrap();
        assert!((loss - want).abs() < 1e-14, "{loss}");
    }

    #[test]
    fn dimension_errors() {
        let ds = toy_dataset();
        let b = Batch::full(&ds).unwrap();
        let spec = ModelSpec::logistic(3, 3).unwrap();
        assert!(matches!(spec.loss(&[0.0; 12], &b), Err(Error::Dimension(_))));
        let spec = ModelSpec::logistic(2, 3).unwrap();
        assert!(matches!(spec.loss(&[0.0; 8], &b), Err(Error::Dimension(_))));
        let two_class = ModelSpec::logistic(2, 2).unwrap();
        assert!(two_class.loss(&[0.0; 6], &b).is_err());
        assert!(Batch::new(vec![], vec![]).is_err());
        assert!(Batch::from_dataset(&ds, &[5]).is_err());
    }

    #[test]
    fn zero_features_closed_form() {
        let spec = ModelSpec::logistic(2, 3).unwrap();
        let ds = LabeledDataset::new(2, 3, vec![0.0; 6], vec![0, 2, 1]).unwrap();
        let w = toy_weights();
        let g = spec.grad(&w, &Batch::full(&ds).unwrap()).unwrap();
        assert!(g[..6].iter().all(|&x| x == 0.0));
        let z = [0.05f64, -0.1, 0.2];
        let lse = libm::log(z.iter().map(|v| libm::exp(*v)).sum::<f64>());
        for c in 0..3 {
            let p = libm::exp(z[c] - lse);
            // each class appears once among three samples
            assert!((g[6 + c] - (p - 1.0 / 3.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_vanishes_at_the_optimum() {
        // Overlapping 1-D classes, so the optimum is finite.
        let ds = LabeledDataset::new(1, 2, vec![-2.0, -1.0, 0.5, -0.5, 1.0, 2.0], vec![0, 0, 0, 1, 1, 1])
            .unwrap();
        let spec = ModelSpec::logistic(1, 2).unwrap();
        let b = Batch::full(&ds).unwrap();
        let mut w = vec![0.0; 4];
        for _ in 0..20_000 {
            let g = spec.grad(&w, &b).unwrap();
            axpy(-1.0, &g, &mut w);
        }
        assert!(norm(&spec.grad(&w, &b).unwrap()) < 1e-6);
    }

    #[test]
    fn hvp_zero_direction() {
        let ds = toy_dataset();
        let spec = ModelSpec::logistic(2, 3).unwrap();
        let hv = spec.hvp(&toy_weights(), &Batch::full(&ds).unwrap(), &[0.0; 9]).unwrap();
        assert_eq!(hv, vec![0.0; 9]);
        let mlp = ModelSpec::mlp(2, 3, 3).unwrap();
        let w = vec![0.1; mlp.param_dim()];
        let hv = mlp.hvp(&w, &Batch::full(&ds).unwrap(), &vec![0.0; w.len()]).unwrap();
        assert!(hv.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn hvp_is_symmetric() {
        let ds = toy_dataset();
        let b = Batch::full(&ds).unwrap();
        let spec = ModelSpec::logistic(2, 3).unwrap();
        let mut rng = RngStream::new(9, 9);
        for _ in 0..20 {
            let u: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
            let v: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
            let w: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
            let vhu = dot(&v, &spec.hvp(&w, &b, &u).unwrap());
            let uhv = dot(&u, &spec.hvp(&w, &b, &v).unwrap());
            assert!((vhu - uhv).abs() < 1e-9);
        }
    }

    #[test]
    fn gmir_reduces_to_plain_objective() {
        let ds = toy_dataset();
        let b = Batch::full(&ds).unwrap();
        let spec = ModelSpec::logistic(2, 3).unwrap();
        let w = toy_weights();
        let g = spec.grad(&w, &b).unwrap();
        assert_eq!(spec.gmir_grad(&w, &w, &b, 3.0).unwrap(), g);
        assert_eq!(spec.gmir_grad(&w, &[0.0; 9], &b, 0.0).unwrap(), g);
        let loss = spec.loss(&w, &b).unwrap();
        assert_eq!(spec.gmir_value(&w, &w, &b, 3.0).unwrap(), loss);
        assert_eq!(spec.gmir_value(&w, &[0.0; 9], &b, 0.0).unwrap(), loss);
        assert!(spec.gmir_grad(&w, &w, &b, -1.0).is_err());
    }

    #[test]
    fn gmir_grad_matches_finite_differences() {
        let ds = toy_dataset();
        let b = Batch::full(&ds).unwrap();
        let spec = ModelSpec::logistic(2, 3).unwrap();
        let w = toy_weights();
        let w0 = vec![0.1; 9];
        let fd = finite_diff_grad(|p| spec.gmir_value(p, &w0, &b, 0.7).unwrap(), &w, 1e-5).unwrap();
        let g = spec.gmir_grad(&w, &w0, &b, 0.7).unwrap();
        assert!(relative_error(&g, &fd) < 1e-6);
    }

    #[test]
    fn fedprox_cases() {
        let ds = toy_dataset();
        let b = Batch::full(&ds).unwrap();
        let spec = ModelSpec::logistic(2, 3).unwrap();
        let w = toy_weights();
        let g = spec.grad(&w, &b).unwrap();
        assert_eq!(spec.fedprox_grad(&w, &[0.0; 9], &b, 0.0).unwrap(), g);
        assert_eq!(spec.fedprox_grad(&w, &w, &b, 2.0).unwrap(), g);
        let anchor = vec![0.3; 9];
        let mu = 0.4;
        let objective = |p: &[f64]| {
            spec.loss(p, &b).unwrap()
                + 0.5 * mu * p.iter().zip(&anchor).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
        };
        let fd = finite_diff_grad(objective, &w, 1e-5).unwrap();
        assert!(relative_error(&spec.fedprox_grad(&w, &anchor, &b, mu).unwrap(), &fd) < 1e-6);
        assert!(spec.fedprox_grad(&w, &w, &b, -0.1).is_err());
    }

    #[test]
    fn prediction_and_accuracy() {
        let spec = ModelSpec::logistic(2, 3).unwrap();
        assert_eq!(spec.predict(&[0.0; 9], &[1.0, 2.0]).unwrap(), 0);

        // Five samples, logits z_c = w_c · x with w = rows (1,0), (0,1), (-1,-1):
        // (2,1)->0 ok, (0,3)->1 ok, (-2,-1)->2 wrong (label 0), (1,1) tie 0/1 -> 0 wrong (label 1),
        // (-1,-3)->2 ok. Hand count: 3/5.
        let w = vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 0.0, 0.0, 0.0];
        let ds = LabeledDataset::new(
            2,
            3,
            vec![2.0, 1.0, 0.0, 3.0, -2.0, -1.0, 1.0, 1.0, -1.0, -3.0],
            vec![0, 1, 0, 1, 2],
        )
        .unwrap();
        assert_eq!(spec.accuracy(&w, &ds).unwrap(), 0.6);
        assert_eq!(spec.accuracy(&w, &LabeledDataset::empty(2, 3)).unwrap(), 0.0);
    }

    #[test]
    fn fitting_one_point_gives_full_accuracy() {
        let spec = ModelSpec::logistic(2, 3).unwrap();
        let ds = LabeledDataset::new(2, 3, vec![0.4, -1.0], vec![2]).unwrap();
        let b = Batch::full(&ds).unwrap();
        let mut w = vec![0.0; 9];
        for _ in 0..50 {
            let g = spec.grad(&w, &b).unwrap();
            axpy(-0.5, &g, &mut w);
        }
        assert_eq!(spec.accuracy(&w, &ds).unwrap(), 1.0);
    }
}
