//! FedAvg training loop and per-client independently trained local models.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClientPools, Dataset};
use crate::error::{Error, Result};
use crate::model::{train_sgd, train_sgd_logged, ModelParams, TrainConfig};
use crate::rng::stream_seed;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub comm_rounds: usize,
    pub local_epochs: usize,
    /// SGD settings. `train.lr_decay_at` counts communication rounds here and
    /// `train.epochs` / `train.seed` are ignored.
    pub train: TrainConfig,
    /// Epoch budget of the independent local query model.
    pub local_model_epochs: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            comm_rounds: 100,
            local_epochs: 5,
            train: TrainConfig {
                lr_decay_at: Some(75),
                ..TrainConfig::default()
            },
            local_model_epochs: 200,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.comm_rounds == 0 {
            return Err(Error::invalid("comm_rounds must be >= 1"));
        }
        if self.local_epochs == 0 {
            return Err(Error::invalid("local_epochs must be >= 1"));
        }
        if self.local_model_epochs == 0 {
            return Err(Error::invalid("local_model_epochs must be >= 1"));
        }
        self.train.validate()
    }

    /// The SGD configuration client `client` uses in communication round `round`.
    pub fn round_config(&self, seed: u64, client: usize, round: usize) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr_at(round),
            epochs: self.local_epochs,
            lr_decay_at: None,
            seed: stream_seed(seed, "fed_round", &[client as u64, round as u64]),
            ..self.train
        }
    }

    /// Configuration of the independent local model. The decay point is scaled
    /// from rounds to the local epoch budget.
    pub fn local_model_config(&self, seed: u64, client: usize) -> TrainConfig {
        let decay = self
            .train
            .lr_decay_at
            .map(|r| r * self.local_model_epochs / self.comm_rounds);
        TrainConfig {
            epochs: self.local_model_epochs,
            lr_decay_at: decay,
            seed: stream_seed(seed, "local_model", &[client as u64]),
            ..self.train
        }
    }
}

#[derive(Debug, Clone)]
pub struct FederationResult<T> {
    pub global: ModelParams<T>,
    pub locals: Vec<ModelParams<T>>,
    /// Size-weighted mean training loss of the last local epoch, per round.
    pub round_loss: Vec<T>,
}

/// Weighted parameter average `sum_k (n_k / N) theta_k`, accumulated in entry order.
pub fn fedavg_aggregate<T: Scalar>(entries: &[(&ModelParams<T>, usize)]) -> Result<ModelParams<T>> {
    let (first, _) = entries
        .first()
        .ok_or(Error::Empty("no models to aggregate"))?;
    let arch = first.arch();
    if let Some((p, _)) = entries.iter().find(|(p, _)| p.arch() != arch) {
        return Err(Error::ShapeMismatch(format!(
            "cannot average {:?} with {:?}",
            arch,
            p.arch()
        )));
    }
    let total: usize = entries.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::invalid("all aggregation weights are zero"));
    }
    let total = T::from_count(total);
    let mut out = vec![T::zero(); arch.num_params()];
    for (p, n) in entries.iter().filter(|(_, n)| *n > 0) {
        let w = T::from_count(*n) / total;
        out.iter_mut()
            .zip(p.values())
            .for_each(|(o, &v)| *o += w * v);
    }
    ModelParams::from_values(arch, out)
}

/// Runs `comm_rounds` of FedAvg from `init` with full participation, then
/// trains one local model per client from `init` on that client's labeled data.
///
/// Clients with an empty labeled pool sit out (zero weight) and keep `init`
/// as their local model. Client work within a round runs on the current
/// rayon pool; results are gathered in client order, so the outcome does not
/// depend on the thread count.
pub fn run_federation<T: Scalar>(
    clients: &[ClientPools],
    ds: &Dataset<T>,
    init: &ModelParams<T>,
    cfg: &FederationConfig,
    seed: u64,
) -> Result<FederationResult<T>> {
    cfg.validate()?;
    if clients.iter().all(|c| c.labeled().is_empty()) {
        return Err(Error::Empty("no client has labeled data"));
    }
    let mut global = init.clone();
    let mut round_loss = Vec::with_capacity(cfg.comm_rounds);
    for round in 0..cfg.comm_rounds {
        let updates: Vec<Option<(ModelParams<T>, T, usize)>> = clients
            .par_iter()
            .enumerate()
            .map(|(k, pools)| {
                if pools.labeled().is_empty() {
                    return Ok(None);
                }
                let trained = train_sgd_logged(
                    &global,
                    ds,
                    pools.labeled(),
                    &cfg.round_config(seed, k, round),
                )
                .map_err(|e| e.context(format!("client {k}, round {round}")))?;
                let last = trained.epoch_losses.last().copied().unwrap_or_else(T::zero);
                Ok(Some((trained.params, last, pools.labeled().len())))
            })
            .collect::<Result<_>>()?;

        let entries: Vec<(&ModelParams<T>, usize)> =
            updates.iter().flatten().map(|(p, _, n)| (p, *n)).collect();
        global = fedavg_aggregate(&entries)?;
        let n_total: usize = entries.iter().map(|(_, n)| n).sum();
        let loss = updates
            .iter()
            .flatten()
            .fold(T::zero(), |acc, (_, l, n)| acc + *l * T::from_count(*n));
        round_loss.push(loss / T::from_count(n_total));
    }

    let locals = clients
        .par_iter()
        .enumerate()
        .map(|(k, pools)| {
            if pools.labeled().is_empty() {
                return Ok(init.clone());
            }
            train_sgd(init, ds, pools.labeled(), &cfg.local_model_config(seed, k))
                .map_err(|e| e.context(format!("local model of client {k}")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FederationResult {
        global,
        locals,
        round_loss,
    })
}
