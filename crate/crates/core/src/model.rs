//! Small feed-forward softmax classifier: linear or one ReLU hidden layer.
//!
//! Parameters live in one flat vector laid out as
//! `[W1 (h x d), b1 (h), W2 (C x h), b2 (C)]`, row-major, with the first two
//! blocks absent in linear mode. The flat layout makes averaging, SGD and
//! finite-difference checks plain vector operations.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{argmax, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    /// Width of the hidden ReLU layer; 0 means a linear model.
    pub hidden: usize,
    pub num_classes: usize,
}

impl Architecture {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden: 0,
            num_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden,
            num_classes,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.hidden == 0
    }

    /// Dimension of the penultimate features fed to the classifier head.
    pub fn feature_dim(&self) -> usize {
        if self.is_linear() {
            self.input_dim
        } else {
            self.hidden
        }
    }

    fn hidden_len(&self) -> usize {
        self.hidden * self.input_dim + self.hidden
    }

    pub fn num_params(&self) -> usize {
        self.hidden_len() + self.num_classes * self.feature_dim() + self.num_classes
    }

    /// Length of a head gradient embedding: `C * h + C`.
    pub fn embedding_dim(&self) -> usize {
        self.num_classes * self.feature_dim() + self.num_classes
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes < 2 {
            return Err(Error::invalid(format!("bad architecture {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    arch: Architecture,
    values: Vec<T>,
}

/// One forward pass: penultimate features, logits and softmax probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward<T> {
    pub features: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            arch,
            values: vec![T::zero(); arch.num_params()],
        })
    }

    /// Weights and biases uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = rng::stream(seed, "init", &[]);
        let hidden_len = arch.hidden_len();
        let hidden_bound = 1.0 / (arch.input_dim as f64).sqrt();
        let head_bound = 1.0 / (arch.feature_dim() as f64).sqrt();
        for (i, v) in p.values.iter_mut().enumerate() {
            let bound = if i < hidden_len {
                hidden_bound
            } else {
                head_bound
            };
            *v = T::lit(rng.random_range(-bound..bound));
        }
        Ok(p)
    }

    pub fn from_values(arch: Architecture, values: Vec<T>) -> Result<Self> {
        arch.validate()?;
        if values.len() != arch.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for architecture needing {}",
                values.len(),
                arch.num_params()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("parameters must be finite"));
        }
        Ok(Self { arch, values })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    fn split(&self) -> (&[T], &[T], &[T], &[T]) {
        let a = self.arch;
        let (w1, rest) = self.values.split_at(a.hidden * a.input_dim);
        let (b1, rest) = rest.split_at(a.hidden);
        let (w2, b2) = rest.split_at(a.num_classes * a.feature_dim());
        (w1, b1, w2, b2)
    }

    /// Hidden pre-activations (empty in linear mode) and penultimate features.
    fn hidden_layer(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        if self.arch.is_linear() {
            return (Vec::new(), x.to_vec());
        }
        let (w1, b1, _, _) = self.split();
        let d = self.arch.input_dim;
        let pre: Vec<T> = b1
            .iter()
            .enumerate()
            .map(|(j, &b)| crate::scalar::dot(&w1[j * d..(j + 1) * d], x) + b)
            .collect();
        let act = pre.iter().map(|&z| z.max(T::zero())).collect();
        (pre, act)
    }

    fn head(&self, features: &[T]) -> Vec<T> {
        let (_, _, w2, b2) = self.split();
        let h = self.arch.feature_dim();
        b2.iter()
            .enumerate()
            .map(|(c, &b)| crate::scalar::dot(&w2[c * h..(c + 1) * h], features) + b)
            .collect()
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.arch.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Forward<T>> {
        self.check_dim(x)?;
        let (_, features) = self.hidden_layer(x);
        let logits = self.head(&features);
        let probs = softmax(&logits);
        Ok(Forward {
            features,
            logits,
            probs,
        })
    }

    pub fn probs(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(x)?.probs)
    }

    pub fn features(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        Ok(self.hidden_layer(x).1)
    }

    pub fn predict(&self, x: &[T]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?.logits))
    }

    pub fn predict_batch(&self, xs: &[&[T]]) -> Result<Vec<Vec<T>>> {
        xs.iter().map(|x| self.probs(x)).collect()
    }

    pub fn features_batch(&self, xs: &[&[T]]) -> Result<Vec<Vec<T>>> {
        xs.iter().map(|x| self.features(x)).collect()
    }

    /// Probabilities for the given rows of `ds`.
    pub fn predict_rows(&self, ds: &Dataset<T>, indices: &[usize]) -> Result<Vec<Vec<T>>> {
        indices.iter().map(|&i| self.probs(ds.row(i))).collect()
    }

    pub fn features_rows(&self, ds: &Dataset<T>, indices: &[usize]) -> Result<Vec<Vec<T>>> {
        indices.iter().map(|&i| self.features(ds.row(i))).collect()
    }

    /// Gradient of the cross-entropy loss w.r.t. the classifier head `(W2, b2)`
    /// at a hypothesized label: `(p - e_y) (x) features`, class-major, followed
    /// by the `C` bias entries `p - e_y`. `label = None` uses the argmax class.
    pub fn gradient_embedding(&self, x: &[T], label: Option<usize>) -> Result<Vec<T>> {
        let fwd = self.forward(x)?;
        let c_count = self.arch.num_classes;
        let y = label.unwrap_or_else(|| argmax(&fwd.probs));
        if y >= c_count {
            return Err(Error::invalid(format!("label {y} out of range")));
        }
        let mut residual = fwd.probs;
        residual[y] -= T::one();
        let mut out = Vec::with_capacity(self.arch.embedding_dim());
        for &r in &residual {
            out.extend(fwd.features.iter().map(|&f| r * f));
        }
        out.extend_from_slice(&residual);
        Ok(out)
    }

    /// Mean cross-entropy over `(x, y)` pairs and its gradient w.r.t. every parameter.
    pub fn loss_and_grad<'a, I>(&self, batch: I) -> Result<(T, Vec<T>)>
    where
        I: IntoIterator<Item = (&'a [T], usize)>,
    {
        let a = self.arch;
        let (_, _, w2, _) = self.split();
        let h = a.feature_dim();
        let d = a.input_dim;
        let hidden_len = a.hidden_len();
        let mut grad = vec![T::zero(); a.num_params()];
        let mut loss = T::zero();
        let mut n = 0usize;
        for (x, y) in batch {
            self.check_dim(x)?;
            if y >= a.num_classes {
                return Err(Error::invalid(format!("label {y} out of range")));
            }
            let (pre, feat) = self.hidden_layer(x);
            let logits = self.head(&feat);
            let lse = log_sum_exp(&logits);
            loss += lse - logits[y];
            let mut dlogit: Vec<T> = logits.iter().map(|&z| (z - lse).exp()).collect();
            dlogit[y] -= T::one();

            let (gw2, gb2) = grad[hidden_len..].split_at_mut(a.num_classes * h);
            for (c, &g) in dlogit.iter().enumerate() {
                gb2[c] += g;
                gw2[c * h..(c + 1) * h]
                    .iter_mut()
                    .zip(&feat)
                    .for_each(|(gw, &f)| *gw += g * f);
            }
            if !a.is_linear() {
                let (gw1, gb1) = grad[..hidden_len].split_at_mut(a.hidden * d);
                for j in 0..a.hidden {
                    if pre[j] <= T::zero() {
                        continue;
                    }
                    let dz: T = dlogit
                        .iter()
                        .enumerate()
                        .fold(T::zero(), |acc, (c, &g)| acc + g * w2[c * h + j]);
                    gb1[j] += dz;
                    gw1[j * d..(j + 1) * d]
                        .iter_mut()
                        .zip(x)
                        .for_each(|(gw, &xi)| *gw += dz * xi);
                }
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Empty("loss over an empty batch"));
        }
        let inv = T::one() / T::from_count(n);
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((loss * inv, grad))
    }

    /// Mean cross-entropy only.
    pub fn loss<'a, I>(&self, batch: I) -> Result<T>
    where
        I: IntoIterator<Item = (&'a [T], usize)>,
    {
        let mut total = T::zero();
        let mut n = 0usize;
        for (x, y) in batch {
            let logits = self.forward(x)?.logits;
            total += log_sum_exp(&logits) - logits[y];
            n += 1;
        }
        if n == 0 {
            return Err(Error::Empty("loss over an empty batch"));
        }
        Ok(total / T::from_count(n))
    }

    /// Writes shapes and row-major values as JSON. Debugging aid only.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()>
    where
        T: Serialize,
    {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::invalid(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        Self::from_values(p.arch, p.values)
    }
}

fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    m + xs.iter().map(|&z| (z - m).exp()).sum::<T>().ln()
}

/// Softmax with max subtraction.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epoch from which the learning rate is multiplied by `lr_decay_factor`.
    pub lr_decay_at: Option<usize>,
    pub lr_decay_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-5,
            batch_size: 64,
            epochs: 5,
            lr_decay_at: None,
            lr_decay_factor: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight_decay must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.lr_decay_factor > 0.0) {
            return Err(Error::invalid("lr_decay_factor must be > 0"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay_at {
            Some(at) if epoch >= at => self.lr * self.lr_decay_factor,
            _ => self.lr,
        }
    }
}

/// Result of a training call: final parameters and the mean loss of every epoch.
#[derive(Debug, Clone)]
pub struct Trained<T> {
    pub params: ModelParams<T>,
    pub epoch_losses: Vec<T>,
}

/// Mini-batch SGD with momentum and L2 weight decay on mean cross-entropy
/// over the rows `indices` of `ds`. Shuffling is driven by `cfg.seed`.
pub fn train_sgd<T: Scalar>(
    params: &ModelParams<T>,
    ds: &Dataset<T>,
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<ModelParams<T>> {
    Ok(train_sgd_logged(params, ds, indices, cfg)?.params)
}

pub fn train_sgd_logged<T: Scalar>(
    params: &ModelParams<T>,
    ds: &Dataset<T>,
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<Trained<T>> {
    cfg.validate()?;
    let mut p = params.clone();
    if cfg.epochs == 0 {
        return Ok(Trained {
            params: p,
            epoch_losses: Vec::new(),
        });
    }
    if indices.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if ds.dim() != p.arch.input_dim {
        return Err(Error::DimensionMismatch {
            expected: p.arch.input_dim,
            found: ds.dim(),
        });
    }
    let mut rng = rng::stream(cfg.seed, "sgd", &[]);
    let mut order = indices.to_vec();
    let mut velocity = vec![T::zero(); p.values.len()];
    let momentum = T::lit(cfg.momentum);
    let wd = T::lit(cfg.weight_decay);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = T::lit(cfg.lr_at(epoch));
        order.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = p.loss_and_grad(batch.iter().map(|&i| (ds.row(i), ds.label(i))))?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            epoch_loss += loss * T::from_count(batch.len());
            for ((v, g), w) in velocity.iter_mut().zip(&grad).zip(p.values.iter_mut()) {
                *v = momentum * *v + *g + wd * *w;
                *w -= lr * *v;
            }
        }
        if p.values.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        epoch_losses.push(epoch_loss / T::from_count(order.len()));
    }
    Ok(Trained {
        params: p,
        epoch_losses,
    })
}
