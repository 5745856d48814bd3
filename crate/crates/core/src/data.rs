//! Datasets, long-tail shaping, Dirichlet client partitioning and label pools.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{norm, Scalar};

/// Row-major feature matrix with integer class labels in `0..num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Vec<T>,
        dim: usize,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("dataset has no rows"));
        }
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if num_classes < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} feature values for {} rows of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            dim,
            labels,
            num_classes,
        })
    }

    pub fn from_rows(rows: &[Vec<T>], labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.len(),
            });
        }
        Self::new(rows.concat(), dim, labels, num_classes)
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

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Indices of every class, each list ascending.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            by_class[y].push(i);
        }
        by_class
    }

    /// New dataset made of the given rows, in the given order. Keeps `num_classes`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!("row index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, self.dim, labels, self.num_classes)
    }

    /// Writes the dataset as CSV with columns `x0..x{d-1},label`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        let mut header: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        header.push("label".into());
        w.write_record(&header).map_err(|e| csv_err(path, e))?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels[i].to_string());
            w.write_record(&rec).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

/// Gaussian blobs, one unit-variance cluster per class, samples grouped by class.
///
/// Class means sit on scaled orthonormal directions when `num_classes <= dim`
/// (pairwise distance exactly `separation`); otherwise random directions are
/// rescaled so the closest pair of means is `separation` apart.
pub fn synth_blobs<T: Scalar>(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    separation: T,
    seed: u64,
) -> Result<Dataset<T>> {
    if num_classes < 2 || per_class < 1 || dim < 2 || !(separation > T::zero()) {
        return Err(Error::invalid(format!(
            "synth_blobs needs num_classes >= 2, per_class >= 1, dim >= 2, separation > 0 \
             (got {num_classes}, {per_class}, {dim}, {separation})"
        )));
    }
    let mut rng = rng::stream(seed, "blobs", &[]);
    let gauss = |rng: &mut rng::StreamRng| -> f64 { StandardNormal.sample(rng) };

    let mut means: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
    if num_classes <= dim {
        // Gram-Schmidt on random gaussian vectors.
        while means.len() < num_classes {
            let mut v: Vec<f64> = (0..dim).map(|_| gauss(&mut rng)).collect();
            for m in &means {
                let proj: f64 = v.iter().zip(m).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(m).for_each(|(a, b)| *a -= proj * b);
            }
            let n = norm(&v);
            if n > 1e-8 {
                v.iter_mut().for_each(|a| *a /= n);
                means.push(v);
            }
        }
        let scale = separation.as_f64() / std::f64::consts::SQRT_2;
        means.iter_mut().flatten().for_each(|a| *a *= scale);
    } else {
        for _ in 0..num_classes {
            means.push((0..dim).map(|_| gauss(&mut rng)).collect());
        }
        let mut min_d = f64::INFINITY;
        for a in 0..num_classes {
            for b in a + 1..num_classes {
                min_d = min_d.min(crate::scalar::sq_dist(&means[a], &means[b]).sqrt());
            }
        }
        let scale = separation.as_f64() / min_d.max(1e-12);
        means.iter_mut().flatten().for_each(|a| *a *= scale);
    }

    let mut features = Vec::with_capacity(num_classes * per_class * dim);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            features.extend(mean.iter().map(|&m| T::lit(m + gauss(&mut rng))));
            labels.push(c);
        }
    }
    Dataset::new(features, dim, labels, num_classes)
}

/// Shape of the per-class retained counts when imposing a global imbalance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailProfile {
    /// `n_r = round(n_max * rho^(-r / (C - 1)))` for class rank `r`.
    #[default]
    Exponential,
    /// First half of the ranks keep `n_max`, the rest `round(n_max / rho)`.
    Step,
}

/// Target retained count for each class rank under `profile`.
pub fn long_tail_counts(
    n_max: usize,
    num_classes: usize,
    rho: f64,
    profile: TailProfile,
) -> Vec<usize> {
    let denom = (num_classes - 1).max(1) as f64;
    (0..num_classes)
        .map(|r| {
            let keep = match profile {
                TailProfile::Exponential => n_max as f64 * rho.powf(-(r as f64) / denom),
                TailProfile::Step if r < num_classes / 2 => n_max as f64,
                TailProfile::Step => n_max as f64 / rho,
            };
            keep.round() as usize
        })
        .collect()
}

/// Subsamples `ds` so class counts follow a long-tailed profile with
/// max/min ratio `rho`. Classes are ranked by their original count
/// (descending, ties by class id); retained rows keep their original order.
pub fn make_long_tailed<T: Scalar>(ds: &Dataset<T>, rho: f64, seed: u64) -> Result<Dataset<T>> {
    make_long_tailed_with(ds, rho, TailProfile::Exponential, seed)
}

pub fn make_long_tailed_with<T: Scalar>(
    ds: &Dataset<T>,
    rho: f64,
    profile: TailProfile,
    seed: u64,
) -> Result<Dataset<T>> {
    if !(rho >= 1.0) || !rho.is_finite() {
        return Err(Error::invalid(format!(
            "imbalance ratio must be >= 1, got {rho}"
        )));
    }
    let by_class = ds.indices_by_class();
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("class {c} has no samples")));
    }
    let mut ranked: Vec<usize> = (0..ds.num_classes()).collect();
    ranked.sort_by(|&a, &b| by_class[b].len().cmp(&by_class[a].len()).then(a.cmp(&b)));
    let n_max = by_class[ranked[0]].len();
    let targets = long_tail_counts(n_max, ds.num_classes(), rho, profile);

    let mut rng = rng::stream(seed, "long_tail", &[]);
    let mut keep = Vec::new();
    for (rank, &c) in ranked.iter().enumerate() {
        let n = targets[rank].min(by_class[c].len());
        if n == 0 {
            return Err(Error::invalid(format!(
                "class {c} would retain no samples at imbalance ratio {rho}"
            )));
        }
        keep.extend(by_class[c].choose_multiple(&mut rng, n).copied());
    }
    keep.sort_unstable();
    ds.subset(&keep)
}

/// Client count, Dirichlet concentration, global imbalance and seed of a federated split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub num_clients: usize,
    pub alpha: f64,
    pub rho: f64,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::invalid("num_clients must be >= 1"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.rho >= 1.0) {
            return Err(Error::invalid(format!(
                "rho must be >= 1, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Draws one Dirichlet(alpha * 1_k) vector by normalizing Gamma(alpha, 1) draws.
pub(crate) fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let mut p: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = p.iter().sum();
    if total > 0.0 && total.is_finite() {
        p.iter_mut().for_each(|x| *x /= total);
    } else {
        // Every draw underflowed (tiny alpha): the limit is a point mass.
        let hot = rng.random_range(0..k);
        p.iter_mut()
            .enumerate()
            .for_each(|(i, x)| *x = if i == hot { 1.0 } else { 0.0 });
    }
    p
}

/// Splits `total` items by `props` with largest-remainder rounding; ties go to the lower slot.
pub(crate) fn largest_remainder(total: usize, props: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = props.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-class Dirichlet split of `ds` across clients. Each returned set is sorted;
/// together they cover every index exactly once. Clients may receive nothing.
pub fn dirichlet_partition<T: Scalar>(
    ds: &Dataset<T>,
    spec: &PartitionSpec,
) -> Result<Vec<Vec<usize>>> {
    spec.validate()?;
    let k = spec.num_clients;
    if k > ds.len() {
        return Err(Error::invalid(format!(
            "{k} clients for only {} samples",
            ds.len()
        )));
    }
    let mut clients = vec![Vec::new(); k];
    for (c, mut members) in ds.indices_by_class().into_iter().enumerate() {
        let mut rng = rng::stream(spec.seed, "dirichlet", &[c as u64]);
        let props = sample_dirichlet(spec.alpha, k, &mut rng);
        members.shuffle(&mut rng);
        let counts = largest_remainder(members.len(), &props);
        let mut start = 0;
        for (client, n) in counts.into_iter().enumerate() {
            clients[client].extend_from_slice(&members[start..start + n]);
            start += n;
        }
    }
    clients.iter_mut().for_each(|s| s.sort_unstable());
    Ok(clients)
}

/// A client's labeled and unlabeled index sets, both kept sorted and disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClientPools {
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
}

impl ClientPools {
    /// All of `indices` start out unlabeled.
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self {
            labeled: Vec::new(),
            unlabeled: indices,
        }
    }

    pub fn from_parts(mut labeled: Vec<usize>, mut unlabeled: Vec<usize>) -> Result<Self> {
        labeled.sort_unstable();
        unlabeled.sort_unstable();
        if labeled.iter().any(|i| unlabeled.binary_search(i).is_ok()) {
            return Err(Error::invalid("labeled and unlabeled pools overlap"));
        }
        Ok(Self { labeled, unlabeled })
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn len(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Moves `query` from unlabeled to labeled. Every index must currently be unlabeled.
    pub fn acquire(&mut self, query: &[usize]) -> Result<()> {
        let mut q = query.to_vec();
        q.sort_unstable();
        if q.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("query contains duplicate indices"));
        }
        if let Some(&i) = q.iter().find(|i| self.unlabeled.binary_search(i).is_err()) {
            return Err(Error::invalid(format!(
                "index {i} is not in the unlabeled pool"
            )));
        }
        self.unlabeled.retain(|i| q.binary_search(i).is_err());
        self.labeled.extend(q);
        self.labeled.sort_unstable();
        Ok(())
    }

    /// Labeled indices grouped by true class (only classes with at least one sample).
    pub fn labeled_by_class<T: Scalar>(&self, ds: &Dataset<T>) -> BTreeMap<usize, Vec<usize>> {
        let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &self.labeled {
            out.entry(ds.label(i)).or_default().push(i);
        }
        out
    }
}

/// Labels `ceil(fraction * |client data|)` uniformly chosen indices.
pub fn init_labeled(pools: &ClientPools, fraction: f64, seed: u64) -> Result<ClientPools> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "initial fraction must be in (0, 1], got {fraction}"
        )));
    }
    if !pools.labeled.is_empty() {
        return Err(Error::invalid("labeled pool is already initialized"));
    }
    let n = fraction_count(fraction, pools.len()).min(pools.unlabeled.len());
    let mut rng = rng::stream(seed, "init_labeled", &[]);
    let chosen: Vec<usize> = pools
        .unlabeled
        .choose_multiple(&mut rng, n)
        .copied()
        .collect();
    let mut out = pools.clone();
    out.acquire(&chosen)?;
    Ok(out)
}

/// `ceil(fraction * n)` with a small tolerance so that e.g. `0.05 * 100` is exactly 5.
pub fn fraction_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Reads a CSV with a header row: feature columns plus one `label` column.
/// Integer labels are remapped to `0..C` in ascending order of their original value.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => csv_err(path, e),
        })?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.is_empty() {
        return Err(parse_err(1, "empty file".into()));
    }
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| parse_err(1, "missing `label` column".into()))?;
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(parse_err(1, "no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", headers.len(), rec.len()),
            ));
        }
        for (j, field) in rec.iter().enumerate() {
            if j == label_col {
                if field.is_empty() {
                    return Err(parse_err(line, "missing label".into()));
                }
                let y: i64 = field
                    .parse()
                    .map_err(|_| parse_err(line, format!("non-integer label `{field}`")))?;
                raw_labels.push(y);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    parse_err(
                        line,
                        format!("non-numeric feature `{field}` in column `{}`", &headers[j]),
                    )
                })?;
                features.push(T::lit(v));
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    let mut distinct = raw_labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let labels = raw_labels
        .iter()
        .map(|y| distinct.binary_search(y).expect("label collected above"))
        .collect();
    // A single-class file is still a valid input; keep at least two classes.
    Dataset::new(features, dim, labels, distinct.len().max(2))
}

/// Mean over clients of the L1 distance between each client's class
/// proportions and the global class proportions. Empty clients are skipped.
pub fn mean_label_skew<T: Scalar>(ds: &Dataset<T>, clients: &[Vec<usize>]) -> f64 {
    let global: Vec<f64> = ds
        .class_counts()
        .iter()
        .map(|&n| n as f64 / ds.len() as f64)
        .collect();
    let mut total = 0.0;
    let mut counted = 0;
    for members in clients.iter().filter(|m| !m.is_empty()) {
        let mut counts = vec![0usize; ds.num_classes()];
        members.iter().for_each(|&i| counts[ds.label(i)] += 1);
        total += counts
            .iter()
            .zip(&global)
            .map(|(&n, g)| (n as f64 / members.len() as f64 - g).abs())
            .sum::<f64>();
        counted += 1;
    }
    total / counted.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(c: usize, per: usize) -> Dataset<f64> {
        let labels: Vec<usize> = (0..c).flat_map(|k| std::iter::repeat_n(k, per)).collect();
        let features = (0..labels.len() * 2).map(|v| v as f64).collect();
        Dataset::new(features, 2, labels, c).unwrap()
    }

    #[test]
    fn blobs_shape_and_determinism() {
        let ds: Dataset<f64> = synth_blobs(2, 1, 2, 10.0, 1).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels(), &[0, 1]);
        let a: Dataset<f64> = synth_blobs(5, 20, 4, 3.0, 7).unwrap();
        let b: Dataset<f64> = synth_blobs(5, 20, 4, 3.0, 7).unwrap();
        assert_eq!(a, b);
        assert!(synth_blobs::<f64>(1, 10, 2, 1.0, 0).is_err());
        assert!(synth_blobs::<f64>(3, 10, 2, 0.0, 0).is_err());
        assert!(synth_blobs::<f64>(3, 0, 2, 1.0, 0).is_err());
    }

    #[test]
    fn blob_means_are_separated_when_classes_exceed_dim() {
        let ds: Dataset<f64> = synth_blobs(6, 400, 2, 6.0, 3).unwrap();
        let means: Vec<Vec<f64>> = ds
            .indices_by_class()
            .iter()
            .map(|idx| {
                let mut m = vec![0.0; 2];
                idx.iter()
                    .for_each(|&i| m.iter_mut().zip(ds.row(i)).for_each(|(a, b)| *a += b));
                m.iter_mut().for_each(|a| *a /= idx.len() as f64);
                m
            })
            .collect();
        for a in 0..6 {
            for b in a + 1..6 {
                // empirical means wobble by ~0.1 around the constructed ones
                assert!(crate::scalar::sq_dist(&means[a], &means[b]).sqrt() > 5.5);
            }
        }
    }

    #[test]
    fn long_tail_balanced_when_rho_is_one() {
        let ds = balanced(4, 30);
        let lt = make_long_tailed(&ds, 1.0, 3).unwrap();
        assert_eq!(lt.class_counts(), vec![30; 4]);
    }

    #[test]
    fn long_tail_counts_match_exponential_profile() {
        let ds = balanced(10, 100);
        let lt = make_long_tailed(&ds, 20.0, 3).unwrap();
        assert_eq!(
            lt.class_counts(),
            vec![100, 72, 51, 37, 26, 19, 14, 10, 7, 5]
        );
    }

    #[test]
    fn long_tail_errors() {
        let ds = balanced(10, 10);
        assert!(make_long_tailed(&ds, 0.5, 0).is_err());
        // 10 * 1000^(-1) rounds to 0
        assert!(make_long_tailed(&ds, 1000.0, 0).is_err());
    }

    #[test]
    fn step_profile() {
        assert_eq!(
            long_tail_counts(100, 4, 10.0, TailProfile::Step),
            vec![100, 100, 10, 10]
        );
    }

    #[test]
    fn single_client_gets_everything() {
        let ds = balanced(3, 7);
        let spec = PartitionSpec {
            num_clients: 1,
            alpha: 0.5,
            rho: 1.0,
            seed: 9,
        };
        let parts = dirichlet_partition(&ds, &spec).unwrap();
        assert_eq!(parts, vec![(0..21).collect::<Vec<_>>()]);
    }

    #[test]
    fn partition_rejects_more_clients_than_samples() {
        let ds = balanced(2, 2);
        let spec = PartitionSpec {
            num_clients: 5,
            alpha: 1.0,
            rho: 1.0,
            seed: 0,
        };
        assert!(dirichlet_partition(&ds, &spec).is_err());
        let spec = PartitionSpec {
            num_clients: 2,
            alpha: 0.0,
            rho: 1.0,
            seed: 0,
        };
        assert!(dirichlet_partition(&ds, &spec).is_err());
    }

    #[test]
    fn largest_remainder_is_exact() {
        assert_eq!(largest_remainder(10, &[0.25, 0.25, 0.5]), vec![3, 2, 5]);
        assert_eq!(largest_remainder(3, &[1.0 / 3.0; 3]), vec![1, 1, 1]);
        assert_eq!(largest_remainder(0, &[0.5, 0.5]), vec![0, 0]);
    }

    #[test]
    fn init_labeled_counts() {
        let pools = ClientPools::new((0..100).collect());
        let p = init_labeled(&pools, 0.05, 1).unwrap();
        assert_eq!(p.labeled().len(), 5);
        assert_eq!(p.unlabeled().len(), 95);
        assert_eq!(p, init_labeled(&pools, 0.05, 1).unwrap());
        let full = init_labeled(&pools, 1.0, 1).unwrap();
        assert!(full.unlabeled().is_empty());
        assert!(init_labeled(&p, 0.05, 1).is_err());
        assert!(init_labeled(&pools, 0.0, 1).is_err());
        let odd = ClientPools::new((0..7).collect());
        assert_eq!(init_labeled(&odd, 0.05, 2).unwrap().labeled().len(), 1);
    }

    #[test]
    fn acquire_rejects_foreign_indices() {
        let mut p = ClientPools::new(vec![3, 1, 2]);
        p.acquire(&[2]).unwrap();
        assert_eq!(p.labeled(), &[2]);
        assert_eq!(p.unlabeled(), &[1, 3]);
        assert!(p.acquire(&[2]).is_err());
        assert!(p.acquire(&[1, 1]).is_err());
        assert!(p.acquire(&[7]).is_err());
    }

    #[test]
    fn csv_remaps_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "a,b,label\n1,2,5\n3,4,5\n5,6,9\n").unwrap();
        let ds: Dataset<f64> = load_csv(&path).unwrap();
        assert_eq!(ds.labels(), &[0, 0, 1]);
        assert_eq!(ds.num_classes(), 2);
        assert_eq!(ds.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(load_csv::<f64>(&empty).is_err());

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "a,label\n1,0\nx,1\n").unwrap();
        let err = load_csv::<f64>(&bad).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");

        let missing = dir.path().join("missing.csv");
        std::fs::write(&missing, "a,label\n1,\n").unwrap();
        assert!(load_csv::<f64>(&missing)
            .unwrap_err()
            .to_string()
            .contains("missing label"));

        let nolabel = dir.path().join("nolabel.csv");
        std::fs::write(&nolabel, "a,b\n1,2\n").unwrap();
        assert!(load_csv::<f64>(&nolabel).is_err());

        assert!(matches!(
            load_csv::<f64>(dir.path().join("nope.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        let ds: Dataset<f64> = synth_blobs(3, 5, 4, 2.5, 11).unwrap();
        ds.write_csv(&path).unwrap();
        let back: Dataset<f64> = load_csv(&path).unwrap();
        assert_eq!(back, ds);
    }
}
