//! Baseline acquisition strategies and the selection primitives shared with FairFAL.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ClientPools, Dataset};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng;
use crate::scalar::{cmp_scalar, sq_dist, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyKind {
    #[default]
    Entropy,
    Margin,
    LeastConfidence,
}

/// Which model scores the unlabeled pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    Global,
    Local,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selector::Global => "global",
            Selector::Local => "local",
        })
    }
}

/// Uncertainty of a probability vector; larger means more uncertain.
pub fn uncertainty_score<T: Scalar>(probs: &[T], kind: UncertaintyKind) -> Result<T> {
    let total: T = probs.iter().copied().sum();
    if probs.is_empty() || (total - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::NotNormalized(total.as_f64()));
    }
    Ok(match kind {
        UncertaintyKind::Entropy => -probs
            .iter()
            .filter(|&&p| p > T::zero())
            .map(|&p| p * p.ln())
            .sum::<T>(),
        UncertaintyKind::Margin => {
            let (mut first, mut second) = (T::neg_infinity(), T::neg_infinity());
            for &p in probs {
                if p > first {
                    second = first;
                    first = p;
                } else if p > second {
                    second = p;
                }
            }
            if second == T::neg_infinity() {
                second = T::zero();
            }
            -(first - second)
        }
        UncertaintyKind::LeastConfidence => {
            T::one() - probs.iter().copied().fold(T::neg_infinity(), T::max)
        }
    })
}

/// The `k` highest-scoring entries of `indices`; ties go to the smaller index.
/// Scores are aligned with `indices`.
pub fn top_k<T: Scalar>(indices: &[usize], scores: &[T], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_by(|&a, &b| cmp_scalar(scores[b], scores[a]).then(indices[a].cmp(&indices[b])));
    order.into_iter().take(k).map(|i| indices[i]).collect()
}

/// Greedy farthest-first selection of `b` candidates.
///
/// Each step picks the candidate whose Euclidean distance to the nearest point
/// of `anchors` plus the already selected candidates is largest. Without
/// anchors the first pick is the candidate farthest from the candidate
/// centroid. Ties resolve to the lowest candidate position. Returns positions
/// into `candidates` in selection order.
pub fn greedy_kcenter<T: Scalar>(
    candidates: &[Vec<T>],
    anchors: &[Vec<T>],
    b: usize,
) -> Result<Vec<usize>> {
    if b > candidates.len() {
        return Err(Error::BudgetExceedsPool {
            budget: b,
            pool: candidates.len(),
        });
    }
    let dim = candidates.first().or(anchors.first()).map_or(0, Vec::len);
    if let Some(v) = candidates.iter().chain(anchors).find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    if b == 0 {
        return Ok(Vec::new());
    }

    let mut selected = Vec::with_capacity(b);
    let mut taken = vec![false; candidates.len()];
    let mut nearest: Vec<T> = if anchors.is_empty() {
        vec![T::infinity(); candidates.len()]
    } else {
        candidates
            .iter()
            .map(|c| {
                anchors
                    .iter()
                    .map(|a| sq_dist(c, a))
                    .fold(T::infinity(), T::min)
            })
            .collect()
    };

    if anchors.is_empty() {
        let inv = T::one() / T::from_count(candidates.len());
        let mut centroid = vec![T::zero(); dim];
        for c in candidates {
            centroid.iter_mut().zip(c).for_each(|(m, &v)| *m += v * inv);
        }
        let first = farthest(candidates.iter().map(|c| sq_dist(c, &centroid)), &taken);
        take(first, candidates, &mut selected, &mut taken, &mut nearest);
    }
    while selected.len() < b {
        let next = farthest(nearest.iter().copied(), &taken);
        take(next, candidates, &mut selected, &mut taken, &mut nearest);
    }
    Ok(selected)
}

fn farthest<T: Scalar>(dists: impl Iterator<Item = T>, taken: &[bool]) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, d) in dists.enumerate() {
        if taken[i] {
            continue;
        }
        if best.is_none_or(|(_, bd)| d > bd) {
            best = Some((i, d));
        }
    }
    best.expect("b <= |candidates| leaves a free candidate").0
}

fn take<T: Scalar>(
    i: usize,
    candidates: &[Vec<T>],
    selected: &mut Vec<usize>,
    taken: &mut [bool],
    nearest: &mut [T],
) {
    selected.push(i);
    taken[i] = true;
    for (j, c) in candidates.iter().enumerate() {
        let d = sq_dist(c, &candidates[i]);
        if d < nearest[j] {
            nearest[j] = d;
        }
    }
}

/// Covering radius `max_x min_{a in anchors + centers} |x - a|` over `points`.
pub fn covering_radius<T: Scalar>(points: &[Vec<T>], anchors: &[Vec<T>], centers: &[usize]) -> T {
    points
        .iter()
        .map(|x| {
            anchors
                .iter()
                .chain(centers.iter().map(|&c| &points[c]))
                .map(|a| sq_dist(x, a))
                .fold(T::infinity(), T::min)
        })
        .fold(T::zero(), T::max)
        .sqrt()
}

/// Everything a client-side query needs.
#[derive(Debug, Clone, Copy)]
pub struct QueryContext<'a, T> {
    pub global: &'a ModelParams<T>,
    pub local: &'a ModelParams<T>,
    pub pools: &'a ClientPools,
    pub dataset: &'a Dataset<T>,
    pub budget: usize,
    pub selector: Selector,
}

impl<'a, T: Scalar> QueryContext<'a, T> {
    pub fn selector_model(&self) -> &'a ModelParams<T> {
        self.model(self.selector)
    }

    pub fn model(&self, which: Selector) -> &'a ModelParams<T> {
        match which {
            Selector::Global => self.global,
            Selector::Local => self.local,
        }
    }

    pub(crate) fn check_budget(&self) -> Result<()> {
        let pool = self.pools.unlabeled().len();
        if self.budget > pool {
            return Err(Error::BudgetExceedsPool {
                budget: self.budget,
                pool,
            });
        }
        Ok(())
    }
}

pub fn query_random<T: Scalar>(ctx: &QueryContext<'_, T>, seed: u64) -> Result<Vec<usize>> {
    ctx.check_budget()?;
    let mut rng = rng::stream(seed, "query_random", &[]);
    let mut out: Vec<usize> = ctx
        .pools
        .unlabeled()
        .choose_multiple(&mut rng, ctx.budget)
        .copied()
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Uncertainty scores of `indices` under `model`.
pub fn score_rows<T: Scalar>(
    model: &ModelParams<T>,
    ds: &Dataset<T>,
    indices: &[usize],
    kind: UncertaintyKind,
) -> Result<Vec<T>> {
    indices
        .iter()
        .map(|&i| uncertainty_score(&model.probs(ds.row(i))?, kind))
        .collect()
}

pub fn query_uncertainty<T: Scalar>(
    ctx: &QueryContext<'_, T>,
    kind: UncertaintyKind,
) -> Result<Vec<usize>> {
    ctx.check_budget()?;
    let pool = ctx.pools.unlabeled();
    let scores = score_rows(ctx.selector_model(), ctx.dataset, pool, kind)?;
    Ok(top_k(pool, &scores, ctx.budget))
}

/// k-center over selector-model features, labeled samples acting as anchors.
pub fn query_coreset<T: Scalar>(ctx: &QueryContext<'_, T>) -> Result<Vec<usize>> {
    ctx.check_budget()?;
    let model = ctx.selector_model();
    let pool = ctx.pools.unlabeled();
    let candidates = model.features_rows(ctx.dataset, pool)?;
    let anchors = model.features_rows(ctx.dataset, ctx.pools.labeled())?;
    let picks = greedy_kcenter(&candidates, &anchors, ctx.budget)?;
    let mut out: Vec<usize> = picks.into_iter().map(|p| pool[p]).collect();
    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Random,
    Uncertainty(UncertaintyKind),
    Coreset,
    FairFal,
}

/// A strategy name as used in configs: `random`, `entropy`, `margin`, `lc`,
/// `coreset` or `fairfal`, baselines optionally suffixed `:global` / `:local`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub selector: Selector,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, sel) = match s.split_once(':') {
            Some((n, sel)) => (n, Some(sel)),
            None => (s, None),
        };
        let kind = match name {
            "random" => StrategyKind::Random,
            "entropy" => StrategyKind::Uncertainty(UncertaintyKind::Entropy),
            "margin" => StrategyKind::Uncertainty(UncertaintyKind::Margin),
            "lc" => StrategyKind::Uncertainty(UncertaintyKind::LeastConfidence),
            "coreset" => StrategyKind::Coreset,
            "fairfal" => StrategyKind::FairFal,
            other => return Err(Error::invalid(format!("unknown strategy `{other}`"))),
        };
        let selector = match (kind, sel) {
            (StrategyKind::FairFal, Some(_)) => {
                return Err(Error::invalid(
                    "fairfal chooses its query model itself; drop the selector suffix",
                ))
            }
            (_, None) | (_, Some("global")) => Selector::Global,
            (_, Some("local")) => Selector::Local,
            (_, Some(other)) => return Err(Error::invalid(format!("unknown selector `{other}`"))),
        };
        Ok(Self { kind, selector })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            StrategyKind::Random => "random",
            StrategyKind::Uncertainty(UncertaintyKind::Entropy) => "entropy",
            StrategyKind::Uncertainty(UncertaintyKind::Margin) => "margin",
            StrategyKind::Uncertainty(UncertaintyKind::LeastConfidence) => "lc",
            StrategyKind::Coreset => "coreset",
            StrategyKind::FairFal => return f.write_str("fairfal"),
        };
        write!(f, "{name}:{}", self.selector)
    }
}
