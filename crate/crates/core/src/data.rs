//! Synthetic labeled data, Dirichlet partitioning across devices and the
//! per-device heterogeneity measure `D_i`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{dirichlet_sample, RngStream};
use crate::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

/// Gaussian class-conditional mixture: class `c` has features
/// `N(means[c], std² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    means: Vec<Vec<f64>>,
    std: f64,
}

impl MixtureSpec {
    pub fn new(means: Vec<Vec<f64>>, std: f64) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::param("classes", "need at least two classes"));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::Dimension("class means must share a positive dimension".into()));
        }
        if means.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::param("means", "non-finite entry"));
        }
        for i in 0..means.len() {
            for j in (i + 1)..means.len() {
                if means[i] == means[j] {
                    return Err(Error::param("means", format!("classes {i} and {j} coincide")));
                }
            }
        }
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::param("std", "must be positive"));
        }
        Ok(Self { means, std })
    }

    /// Class means drawn uniformly on the sphere of the given radius.
    pub fn on_sphere(
        classes: usize,
        feature_dim: usize,
        radius: f64,
        std: f64,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::param("feature_dim", "must be positive"));
        }
        let means = (0..classes)
            .map(|_| {
                let dir: Vec<f64> = (0..feature_dim).map(|_| rng.normal()).collect();
                let len = crate::numerics::norm(&dir);
                dir.into_iter().map(|x| radius * x / len).collect()
            })
            .collect();
        Self::new(means, std)
    }

    pub fn classes(&self) -> usize {
        self.means.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn std(&self) -> f64 {
        self.std
    }
}

/// Features stored row-major with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(dim: usize, classes: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != dim * labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature values for {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::param("labels", format!("label {bad} outside 0..{classes}")));
        }
        Ok(Self {
            dim,
            classes,
            features,
            labels,
        })
    }

    pub fn empty(dim: usize, classes: usize) -> Self {
        Self {
            dim,
            classes,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Empirical label distribution; all zeros for an empty dataset.
    pub fn label_marginal(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        self.label_counts().iter().map(|&c| c as f64 / n).collect()
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            features.extend_from_slice(self.feature(i));
            labels.push(self.labels[i]);
        }
        Self {
            dim: self.dim,
            classes: self.classes,
            features,
            labels,
        }
    }
}

/// Per-device local datasets, all of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPartition {
    clients: Vec<LabeledDataset>,
    label_marginals: Vec<Vec<f64>>,
}

impl ClientPartition {
    /// Wraps pre-built client datasets; every client must hold the same
    /// number of samples.
    pub fn new(clients: Vec<LabeledDataset>) -> Result<Self> {
        let first = clients
            .first()
            .ok_or_else(|| Error::param("clients", "need at least one client"))?;
        let (n, dim, classes) = (first.len(), first.dim(), first.classes());
        if clients
            .iter()
            .any(|c| c.len() != n || c.dim() != dim || c.classes() != classes)
        {
            return Err(Error::param("clients", "clients differ in size or shape"));
        }
        let label_marginals = clients.iter().map(LabeledDataset::label_marginal).collect();
        Ok(Self {
            clients,
            label_marginals,
        })
    }

    pub fn clients(&self) -> &[LabeledDataset] {
        &self.clients
    }

    pub fn client(&self, i: usize) -> &LabeledDataset {
        &self.clients[i]
    }

    pub fn devices(&self) -> usize {
        self.clients.len()
    }

    pub fn samples_per_device(&self) -> usize {
        self.clients[0].len()
    }

    pub fn classes(&self) -> usize {
        self.clients[0].classes()
    }

    pub fn label_marginals(&self) -> &[Vec<f64>] {
        &self.label_marginals
    }

    /// Uniform mixture `(1/N) Σ_i p_i` of the client label marginals.
    pub fn mean_marginal(&self) -> Vec<f64> {
        let n = self.devices() as f64;
        let mut mean = vec![0.0; self.classes()];
        for p in &self.label_marginals {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += x / n;
            }
        }
        mean
    }
}

fn check_simplex(probs: &[f64], classes: usize) -> Result<()> {
    if probs.len() != classes {
        return Err(Error::param(
            "class_probs",
            format!("{} entries for {classes} classes", probs.len()),
        ));
    }
    if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::param("class_probs", "entries must be finite and non-negative"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::param("class_probs", format!("sums to {total}, not 1")));
    }
    Ok(())
}

/// Draws `total` samples: labels categorically from `class_probs`, features
/// from the labeled class's Gaussian.
pub fn gen_synthetic(
    spec: &MixtureSpec,
    total: usize,
    class_probs: &[f64],
    rng: &mut RngStream,
) -> Result<LabeledDataset> {
    check_simplex(class_probs, spec.classes())?;
    let dim = spec.feature_dim();
    let mut features = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for _ in 0..total {
        let y = rng.categorical(class_probs);
        for &mu in &spec.means[y] {
            features.push(mu + spec.std * rng.normal());
        }
        labels.push(y);
    }
    LabeledDataset::new(dim, spec.classes(), features, labels)
}

/// Splits `total` into integer parts proportional to `weights` using the
/// largest-remainder rule (ties go to the lower index).
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if !(sum > 0.0) {
        let mut out = vec![0; weights.len()];
        out[0] = total;
        return out;
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - libm::floor(quotas[a]);
        let fb = quotas[b] - libm::floor(quotas[b]);
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Non-IID split of `ds` over `devices` clients of exactly `per_device`
/// samples each.
///
/// For every class the shuffled class members are divided among devices in
/// proportions drawn from `Dir(alpha · 1_N)` (largest-remainder rounding).
/// Over-full clients then shrink to `per_device` samples while keeping their
/// own label proportions, handing the surplus to a shared pool. Under-full
/// clients top up from that pool, first in the classes they already hold (in
/// proportion), then from whichever pooled class is most represented.
pub fn dirichlet_partition(
    ds: &LabeledDataset,
    devices: usize,
    alpha: f64,
    per_device: usize,
    rng: &mut RngStream,
) -> Result<ClientPartition> {
    if devices == 0 {
        return Err(Error::param("devices", "must be positive"));
    }
    if per_device == 0 {
        return Err(Error::param("samples_per_device", "must be positive"));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::param("alpha", "must be positive"));
    }
    let needed = devices * per_device;
    if ds.len() < needed {
        return Err(Error::Capacity {
            needed,
            available: ds.len(),
        });
    }
    let classes = ds.classes();

    // held[i][c]: indices into ds of class-c samples currently on device i.
    let mut held: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); classes]; devices];
    for c in 0..classes {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.label(i) == c).collect();
        rng.shuffle(&mut members);
        let shares = dirichlet_sample(rng, alpha, devices)?;
        let counts = apportion(members.len(), &shares);
        let mut rest = members.as_slice();
        for (dev, &k) in counts.iter().enumerate() {
            let (take, tail) = rest.split_at(k);
            held[dev][c].extend_from_slice(take);
            rest = tail;
        }
    }

    let class_counts = |h: &Vec<Vec<usize>>| -> Vec<f64> { h.iter().map(|v| v.len() as f64).collect() };
    let mut pool: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for h in held.iter_mut() {
        let size: usize = h.iter().map(Vec::len).sum();
        if size > per_device {
            let keep = apportion(per_device, &class_counts(h));
            for (c, k) in keep.into_iter().enumerate() {
                pool[c].extend(h[c].drain(k..));
            }
        }
    }
    let mut cursor = vec![0usize; classes];
    for h in held.iter_mut() {
        let size: usize = h.iter().map(Vec::len).sum();
        if size >= per_device {
            continue;
        }
        let mut deficit = per_device - size;
        if size > 0 {
            let target = apportion(per_device, &class_counts(h));
            for c in 0..classes {
                let want = target[c] - h[c].len();
                let avail = pool[c].len() - cursor[c];
                let k = want.min(avail).min(deficit);
                h[c].extend_from_slice(&pool[c][cursor[c]..cursor[c] + k]);
                cursor[c] += k;
                deficit -= k;
            }
        }
        while deficit > 0 {
            let c = (0..classes)
                .max_by(|&a, &b| {
                    let (ra, rb) = (pool[a].len() - cursor[a], pool[b].len() - cursor[b]);
                    ra.cmp(&rb).then(b.cmp(&a))
                })
                .expect("at least one class");
            let avail = pool[c].len() - cursor[c];
            if avail == 0 {
                return Err(Error::Capacity {
                    needed,
                    available: ds.len(),
                });
            }
            let k = avail.min(deficit);
            h[c].extend_from_slice(&pool[c][cursor[c]..cursor[c] + k]);
            cursor[c] += k;
            deficit -= k;
        }
    }

    let clients = held
        .iter()
        .map(|h| {
            let idx: Vec<usize> = h.iter().flatten().copied().collect();
            ds.subset(&idx)
        })
        .collect();
    ClientPartition::new(clients)
}

/// Total-variation distance `D_i = ½ Σ_c |p_i(c) − p̄(c)|` between each
/// client's label marginal and the uniform mixture of all clients.
///
/// With class-conditional features shared across clients this equals the
/// total variation between the full data distributions.
pub fn heterogeneity(p: &ClientPartition) -> Vec<f64> {
    heterogeneity_of(p.label_marginals())
}

/// [`heterogeneity`] on raw label marginals.
pub fn heterogeneity_of(marginals: &[Vec<f64>]) -> Vec<f64> {
    if marginals.is_empty() {
        return Vec::new();
    }
    let n = marginals.len() as f64;
    let k = marginals[0].len();
    let mut mean = vec![0.0; k];
    for p in marginals {
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x / n;
        }
    }
    marginals
        .iter()
        .map(|p| 0.5 * p.iter().zip(&mean).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .collect()
}

/// Test set drawn from the uniform mixture of the client label marginals
/// with the mixture's class-conditional feature law.
pub fn global_test_set(
    spec: &MixtureSpec,
    p: &ClientPartition,
    m: usize,
    rng: &mut RngStream,
) -> Result<LabeledDataset> {
    if m == 0 {
        return Err(Error::param("test_size", "must be at least 1"));
    }
    let mut probs = p.mean_marginal();
    let total: f64 = probs.iter().sum();
    for x in &mut probs {
        *x /= total;
    }
    gen_synthetic(spec, m, &probs, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(classes: usize) -> MixtureSpec {
        MixtureSpec::on_sphere(classes, 4, 3.0, 1.0, &mut RngStream::new(0, 1)).unwrap()
    }

    fn tv(a: &[f64], b: &[f64]) -> f64 {
        0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    #[test]
    fn mixture_validation() {
        assert!(MixtureSpec::new(vec![vec![0.0]], 1.0).is_err());
        assert!(MixtureSpec::new(vec![vec![0.0], vec![0.0]], 1.0).is_err());
        assert!(MixtureSpec::new(vec![vec![0.0], vec![1.0]], 0.0).is_err());
        let s = spec(5);
        for m in s.means() {
            assert!((crate::numerics::norm(m) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gen_edge_cases() {
        let s = spec(3);
        let mut rng = RngStream::new(1, 1);
        assert!(gen_synthetic(&s, 0, &[0.2, 0.3, 0.5], &mut rng).unwrap().is_empty());
        let ds = gen_synthetic(&s, 50, &[0.0, 0.0, 1.0], &mut rng).unwrap();
        assert!(ds.labels().iter().all(|&y| y == 2));
        assert!(gen_synthetic(&s, 5, &[0.5, 0.6, 0.0], &mut rng).is_err());
        assert!(gen_synthetic(&s, 5, &[0.5, 0.5], &mut rng).is_err());
    }

    #[test]
    fn gen_class_counts_concentrate() {
        // Binomial(1e4, 0.2) has s.d. 40, so ±150 is > 3.7 s.d.
        let s = spec(5);
        let ds = gen_synthetic(&s, 10_000, &[0.2; 5], &mut RngStream::new(42, 0)).unwrap();
        for c in ds.label_counts() {
            assert!((1850..=2150).contains(&c), "{c}");
        }
    }

    #[test]
    fn apportion_sums_and_ties() {
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(apportion(7, &[0.5, 0.25, 0.25]), vec![3, 2, 2]);
        assert_eq!(apportion(5, &[0.0, 0.0]), vec![5, 0]);
        assert_eq!(apportion(0, &[0.3, 0.7]), vec![0, 0]);
    }

    #[test]
    fn single_device_keeps_source_distribution() {
        let s = spec(3);
        let ds = gen_synthetic(&s, 400, &[0.5, 0.3, 0.2], &mut RngStream::new(2, 2)).unwrap();
        let p = dirichlet_partition(&ds, 1, 0.5, 200, &mut RngStream::new(2, 3)).unwrap();
        assert_eq!(p.client(0).len(), 200);
        assert!(tv(&p.label_marginals()[0], &ds.label_marginal()) < 0.01);
    }

    #[test]
    fn partition_sizes_exact_for_all_alpha() {
        let s = spec(5);
        let ds = gen_synthetic(&s, 2000, &[0.2; 5], &mut RngStream::new(3, 3)).unwrap();
        for alpha in [0.01, 0.1, 1.0, 10.0, 1e6] {
            let p = dirichlet_partition(&ds, 10, alpha, 100, &mut RngStream::new(3, 4)).unwrap();
            assert!(p.clients().iter().all(|c| c.len() == 100));
            for m in p.label_marginals() {
                assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn partition_is_deterministic_and_checks_capacity() {
        let s = spec(5);
        let ds = gen_synthetic(&s, 500, &[0.2; 5], &mut RngStream::new(3, 3)).unwrap();
        let a = dirichlet_partition(&ds, 5, 0.3, 50, &mut RngStream::new(8, 8)).unwrap();
        let b = dirichlet_partition(&ds, 5, 0.3, 50, &mut RngStream::new(8, 8)).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            dirichlet_partition(&ds, 6, 0.3, 100, &mut RngStream::new(8, 8)),
            Err(Error::Capacity { needed: 600, available: 500 })
        ));
    }

    #[test]
    fn large_alpha_matches_source_marginal() {
        let s = spec(5);
        let ds = gen_synthetic(&s, 4000, &[0.2; 5], &mut RngStream::new(5, 5)).unwrap();
        let p = dirichlet_partition(&ds, 10, 1e6, 200, &mut RngStream::new(5, 6)).unwrap();
        let src = ds.label_marginal();
        for m in p.label_marginals() {
            assert!(tv(m, &src) < 0.05, "{m:?} vs {src:?}");
        }
    }

    #[test]
    fn heterogeneity_examples() {
        let same = vec![vec![0.25; 4]; 3];
        assert!(heterogeneity_of(&same).iter().all(|&d| d == 0.0));
        let disjoint = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(heterogeneity_of(&disjoint), vec![0.5, 0.5]);
        let third = 1.0 / 3.0;
        let skew = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, third, third, third],
            vec![0.0, third, third, third],
            vec![0.0, third, third, third],
        ];
        assert!((heterogeneity_of(&skew)[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn test_set_follows_mixture() {
        let s = spec(5);
        let ds = gen_synthetic(&s, 4000, &[0.2; 5], &mut RngStream::new(6, 6)).unwrap();
        let p = dirichlet_partition(&ds, 10, 0.5, 150, &mut RngStream::new(6, 7)).unwrap();
        let test = global_test_set(&s, &p, 10_000, &mut RngStream::new(6, 8)).unwrap();
        assert!(tv(&test.label_marginal(), &p.mean_marginal()) < 0.03);
        assert!(global_test_set(&s, &p, 0, &mut RngStream::new(6, 8)).is_err());

        let one = dirichlet_partition(&ds, 1, 0.5, 300, &mut RngStream::new(6, 9)).unwrap();
        assert_eq!(one.mean_marginal(), one.label_marginals()[0]);
    }
}
