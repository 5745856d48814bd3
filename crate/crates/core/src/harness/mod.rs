//! Experiment orchestration: data preparation, the outer train-query-label
//! loop, persistence and multi-seed comparison.

mod cli;
mod config;
mod io;

pub use cli::cli;
pub use config::{
    DatasetConfig, DatasetKind, ExperimentConfig, FederationSection, ModelConfig, PartitionConfig,
    TrainSection,
};
pub use io::{read_curve_csv, write_run, write_stats};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{self, fraction_count, ClientPools, Dataset, PartitionSpec};
use crate::error::{Error, Result};
use crate::eval::{self, LearningCurve, PairedStats};
use crate::fairfal::{
    aggregate_gamma, client_priors, fairfal_query, BalanceEstimate, ClientPriors,
};
use crate::federation::run_federation;
use crate::model::ModelParams;
use crate::rng::stream_seed;
use crate::strategies::{
    query_coreset, query_random, query_uncertainty, QueryContext, Selector, Strategy, StrategyKind,
};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "FAIRFAL_THREADS";

/// Training universe, held-out test set and client pools for one seed.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
    pub clients: Vec<ClientPools>,
}

/// Test split is held out first and kept class-balanced; the long tail is
/// imposed on the remainder, which is then split across clients.
pub fn prepare_data(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    let d = &cfg.dataset;
    let (pool, test) = match d.kind {
        config::DatasetKind::Blobs => {
            let all = data::synth_blobs(
                d.num_classes,
                d.per_class + d.test_per_class,
                d.dim,
                d.separation,
                d.seed,
            )?;
            let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
            for members in all.indices_by_class() {
                let (tr, te) = members.split_at(d.per_class);
                train_idx.extend_from_slice(tr);
                test_idx.extend_from_slice(te);
            }
            (all.subset(&train_idx)?, all.subset(&test_idx)?)
        }
        config::DatasetKind::Csv => {
            let path = d.path.as_ref().expect("validated");
            let all: Dataset<f64> = data::load_csv(path)?;
            match &d.test_path {
                Some(tp) => {
                    let test: Dataset<f64> = data::load_csv(tp)?;
                    if test.dim() != all.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: all.dim(),
                            found: test.dim(),
                        });
                    }
                    (all, test)
                }
                None => balanced_holdout(&all, d.test_fraction, d.seed)?,
            }
        }
    };
    let train = data::make_long_tailed_with(&pool, cfg.partition.rho, cfg.partition.tail, d.seed)?;
    let spec = PartitionSpec {
        num_clients: cfg.partition.num_clients,
        alpha: cfg.partition.alpha,
        rho: cfg.partition.rho,
        seed: stream_seed(seed, "partition", &[]),
    };
    let parts = data::dirichlet_partition(&train, &spec)?;
    let clients = parts
        .into_iter()
        .enumerate()
        .map(|(k, idx)| {
            let pools = ClientPools::new(idx);
            if pools.is_empty() {
                return Ok(pools);
            }
            data::init_labeled(
                &pools,
                cfg.per_cycle_fraction,
                stream_seed(seed, "init_labeled", &[k as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreparedData {
        train,
        test,
        clients,
    })
}

fn balanced_holdout(
    all: &Dataset<f64>,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset<f64>, Dataset<f64>)> {
    use rand::seq::SliceRandom;
    let by_class = all.indices_by_class();
    let smallest = by_class
        .iter()
        .map(Vec::len)
        .filter(|&n| n > 0)
        .min()
        .unwrap_or(0);
    let per_class = ((smallest as f64) * fraction).floor() as usize;
    if per_class == 0 {
        return Err(Error::invalid(
            "test_fraction leaves no test samples for the smallest class",
        ));
    }
    let mut rng = crate::rng::stream(seed, "holdout", &[]);
    let (mut train_idx, mut test_idx) = (Vec::new(), Vec::new());
    for mut members in by_class.into_iter().filter(|m| !m.is_empty()) {
        members.shuffle(&mut rng);
        test_idx.extend_from_slice(&members[..per_class]);
        train_idx.extend_from_slice(&members[per_class..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((all.subset(&train_idx)?, all.subset(&test_idx)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub labeled_fraction: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub cycle: usize,
    pub client: usize,
    pub sample_index: usize,
    pub true_class: usize,
    pub pseudo_class: Option<usize>,
    pub selector_model: Selector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagRecord {
    pub cycle: usize,
    pub client: usize,
    pub gamma_k: f64,
    pub gamma_bar: f64,
    pub d_k: f64,
    pub s_k: f64,
    pub model: Selector,
}

/// Everything one `(config, seed)` run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub strategy: String,
    pub cycles: Vec<CycleRecord>,
    pub queries: Vec<QueryRecord>,
    pub diagnostics: Vec<DiagRecord>,
    pub gamma_bar: Option<f64>,
    /// Global class counts of the training universe.
    pub class_counts: Vec<usize>,
    pub initial_labeled: Vec<Vec<usize>>,
    pub final_pools: Vec<ClientPools>,
}

impl RunRecord {
    pub fn curve(&self) -> Result<LearningCurve<f64>> {
        LearningCurve::new(
            self.cycles
                .iter()
                .map(|c| (c.labeled_fraction, c.test_accuracy))
                .collect(),
        )
    }

    pub fn aulc(&self) -> Result<f64> {
        eval::aulc(&self.curve()?)
    }

    /// `(cycle, true_class)` of every query, in log order.
    pub fn query_classes(&self) -> Vec<(usize, usize)> {
        self.queries
            .iter()
            .map(|q| (q.cycle, q.true_class))
            .collect()
    }
}

struct ClientOutcome {
    picks: Vec<(usize, Option<usize>)>,
    selector: Selector,
    estimate: Option<BalanceEstimate<f64>>,
}

/// Runs the full train-evaluate-query loop for one seed on the current rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    cfg.validate()?;
    let strategy = cfg.strategy()?;
    let PreparedData {
        train,
        test,
        mut clients,
    } = prepare_data(cfg, seed)?;
    let arch = cfg.architecture(train.dim(), train.num_classes());
    let init = ModelParams::init(arch, stream_seed(seed, "model_init", &[]))?;
    let fed_cfg = cfg.federation_config();
    let total: usize = clients.iter().map(ClientPools::len).sum();
    let initial_labeled: Vec<Vec<usize>> = clients.iter().map(|c| c.labeled().to_vec()).collect();

    let mut record = RunRecord {
        seed,
        strategy: strategy.to_string(),
        cycles: Vec::with_capacity(cfg.al_cycles),
        queries: Vec::new(),
        diagnostics: Vec::new(),
        gamma_bar: None,
        class_counts: train.class_counts(),
        initial_labeled,
        final_pools: Vec::new(),
    };
    let mut start = init.clone();

    for cycle in 1..=cfg.al_cycles {
        let fed = run_federation(
            &clients,
            &train,
            &start,
            &fed_cfg,
            stream_seed(seed, "federation", &[cycle as u64]),
        )
        .map_err(|e| e.context(format!("cycle {cycle}")))?;
        let labeled: usize = clients.iter().map(|c| c.labeled().len()).sum();
        record.cycles.push(CycleRecord {
            cycle,
            labeled_fraction: labeled as f64 / total as f64,
            test_accuracy: eval::accuracy(&fed.global, &test)?,
        });
        if cfg.federation.warm_start {
            start = fed.global.clone();
        }
        if cycle == cfg.al_cycles {
            break;
        }

        let priors: Vec<Option<ClientPriors<f64>>> = clients
            .par_iter()
            .enumerate()
            .map(|(k, pools)| {
                if pools.labeled().is_empty() {
                    return Ok(None);
                }
                let by_class = pools.labeled_by_class(&train);
                client_priors(
                    &fed.global,
                    &fed.locals[k],
                    &train,
                    &by_class,
                    balance_seed(seed, k, cycle),
                )
                .map(Some)
                .map_err(|e| e.context(format!("cycle {cycle}, client {k}")))
            })
            .collect::<Result<_>>()?;
        let gamma_bar = match record.gamma_bar {
            Some(g) => g,
            None => {
                let gammas: Vec<f64> = priors.iter().flatten().map(|p| p.gamma_k).collect();
                let g = aggregate_gamma(&gammas)?;
                record.gamma_bar = Some(g);
                g
            }
        };

        let outcomes: Vec<Option<ClientOutcome>> = clients
            .par_iter()
            .enumerate()
            .map(|(k, pools)| {
                let budget = fraction_count(cfg.per_cycle_fraction, pools.len())
                    .min(pools.unlabeled().len());
                if budget == 0 || pools.labeled().is_empty() {
                    return Ok(None);
                }
                let ctx = QueryContext {
                    global: &fed.global,
                    local: &fed.locals[k],
                    pools,
                    dataset: &train,
                    budget,
                    selector: strategy.selector,
                };
                query_client(
                    &ctx,
                    strategy,
                    cfg,
                    gamma_bar,
                    priors[k].as_ref(),
                    seed,
                    k,
                    cycle,
                )
                .map(Some)
                .map_err(|e| e.context(format!("cycle {cycle}, client {k}")))
            })
            .collect::<Result<_>>()?;

        for (k, outcome) in outcomes.into_iter().enumerate() {
            let Some(out) = outcome else { continue };
            let picked: Vec<usize> = out.picks.iter().map(|p| p.0).collect();
            clients[k].acquire(&picked)?;
            record
                .queries
                .extend(out.picks.iter().map(|&(i, pseudo)| QueryRecord {
                    cycle,
                    client: k,
                    sample_index: i,
                    true_class: train.label(i),
                    pseudo_class: pseudo,
                    selector_model: out.selector,
                }));
            if let Some(e) = out.estimate {
                record.diagnostics.push(DiagRecord {
                    cycle,
                    client: k,
                    gamma_k: e.gamma_k,
                    gamma_bar: e.gamma_bar,
                    d_k: e.d_k,
                    s_k: e.s_k,
                    model: out.selector,
                });
            }
        }
    }
    record.final_pools = clients;
    Ok(record)
}

fn balance_seed(seed: u64, client: usize, cycle: usize) -> u64 {
    stream_seed(seed, "balanced_subset", &[client as u64, cycle as u64])
}

#[allow(clippy::too_many_arguments)]
fn query_client(
    ctx: &QueryContext<'_, f64>,
    strategy: Strategy,
    cfg: &ExperimentConfig,
    gamma_bar: f64,
    priors: Option<&ClientPriors<f64>>,
    seed: u64,
    client: usize,
    cycle: usize,
) -> Result<ClientOutcome> {
    let plain = |idx: Vec<usize>| idx.into_iter().map(|i| (i, None)).collect::<Vec<_>>();
    // Baselines report the same balance estimate, evaluated with the fixed selector.
    let estimate = priors.map(|p| BalanceEstimate {
        gamma_k: p.gamma_k,
        gamma_bar,
        d_k: p.d_k,
        s_k: 1.0 - (p.d_k + gamma_bar) / 2.0,
    });
    let outcome = match strategy.kind {
        StrategyKind::Random => ClientOutcome {
            picks: plain(query_random(
                ctx,
                stream_seed(seed, "query_random", &[client as u64, cycle as u64]),
            )?),
            selector: strategy.selector,
            estimate,
        },
        StrategyKind::Uncertainty(kind) => ClientOutcome {
            picks: plain(query_uncertainty(ctx, kind)?),
            selector: strategy.selector,
            estimate,
        },
        StrategyKind::Coreset => ClientOutcome {
            picks: plain(query_coreset(ctx)?),
            selector: strategy.selector,
            estimate,
        },
        StrategyKind::FairFal => {
            let q = fairfal_query(
                ctx,
                &cfg.fairfal,
                gamma_bar,
                balance_seed(seed, client, cycle),
            )?;
            ClientOutcome {
                picks: q.selected.iter().map(|&(i, c)| (i, Some(c))).collect(),
                selector: q.model,
                estimate: Some(q.estimate),
            }
        }
    };
    Ok(outcome)
}

/// Thread count after applying the `FAIRFAL_THREADS` cap; 0 requests all cores.
pub fn effective_threads(requested: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let n = if requested == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        requested
    };
    cap.map_or(n, |c| n.min(c))
}

/// Runs `f` on a dedicated pool of `threads` workers (after the env cap).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(effective_threads(threads))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every seed of `cfg` (seeds in parallel) and returns the records in seed order.
pub fn run_seeds(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<RunRecord>> {
    seeds
        .par_iter()
        .map(|&s| {
            run_experiment(cfg, s).map_err(|e| e.context(format!("{} seed {s}", cfg.strategy)))
        })
        .collect()
}

/// Paired comparison of two configs that differ only in strategy.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub first: Vec<RunRecord>,
    pub second: Vec<RunRecord>,
    pub stats: PairedStats<f64>,
}

pub fn run_comparison(
    first: &ExperimentConfig,
    second: &ExperimentConfig,
    seeds: &[u64],
) -> Result<Comparison> {
    let mut a = first.clone();
    a.strategy = second.strategy.clone();
    if a != *second {
        return Err(Error::invalid(
            "compared configs may differ only in strategy",
        ));
    }
    let (ra, rb) = rayon::join(|| run_seeds(first, seeds), || run_seeds(second, seeds));
    let (ra, rb) = (ra?, rb?);
    let curves = |rs: &[RunRecord]| -> Result<Vec<(u64, LearningCurve<f64>)>> {
        rs.iter().map(|r| Ok((r.seed, r.curve()?))).collect()
    };
    let stats = eval::compare(&curves(&ra)?, &curves(&rb)?)?;
    Ok(Comparison {
        first: ra,
        second: rb,
        stats,
    })
}
