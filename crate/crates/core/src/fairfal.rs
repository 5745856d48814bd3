//! Class-fair adaptive querying.
//!
//! Per client and cycle the pipeline is:
//!
//! 1. estimate how imbalanced the global distribution looks (`gamma`) and how
//!    far the client's local model drifts from the global one (`d_k`) using
//!    predictive priors on a class-balanced resample of the labeled set, and
//!    pick the global or the local model as the uncertainty scorer;
//! 2. pseudo-label the unlabeled pool by similarity to per-class prototypes of
//!    normalized global-model features;
//! 3. split the budget uniformly across observed classes, keep the
//!    `ceil(kappa * b_c)` most uncertain samples of each pseudo-class and run
//!    greedy k-center on global head gradient embeddings, anchored at the
//!    labeled samples of that class.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng;
use crate::scalar::{dot, norm, Scalar};
use crate::strategies::{
    greedy_kcenter, score_rows, top_k, QueryContext, Selector, UncertaintyKind,
};

/// Guard added to the denominators of the divergence.
pub const DIVERGENCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// Raw inner product with the (not re-normalized) prototype mean.
    #[default]
    InnerProduct,
    /// Cosine similarity with the prototype.
    Cosine,
}

/// Label at which the head gradient embedding is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingLabel {
    /// Argmax of the global model's prediction.
    #[default]
    Argmax,
    /// The class the sample was grouped under (pseudo-label, or true label for anchors).
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FairFalConfig {
    pub kappa: f64,
    pub delta: f64,
    pub uncertainty: UncertaintyKind,
    pub similarity: Similarity,
    pub embedding_label: EmbeddingLabel,
}

impl Default for FairFalConfig {
    fn default() -> Self {
        Self {
            kappa: 4.0,
            delta: 0.75,
            uncertainty: UncertaintyKind::Entropy,
            similarity: Similarity::InnerProduct,
            embedding_label: EmbeddingLabel::Argmax,
        }
    }
}

impl FairFalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 1.0) || !self.kappa.is_finite() {
            return Err(Error::invalid(format!(
                "kappa must be > 1, got {}",
                self.kappa
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Balanced resample of the labeled set: every observed class contributes
/// `max_c n_c` indices, all of its own first, then uniform draws with
/// replacement. Classes are visited in ascending id order.
pub fn build_balanced_subset(
    by_class: &BTreeMap<usize, Vec<usize>>,
    seed: u64,
) -> Result<Vec<usize>> {
    let n_max = by_class.values().map(Vec::len).max().unwrap_or(0);
    if n_max == 0 {
        return Err(Error::Empty("labeled set"));
    }
    let mut rng = rng::stream(seed, "balanced_subset", &[]);
    let mut out = Vec::with_capacity(n_max * by_class.len());
    for members in by_class.values().filter(|m| !m.is_empty()) {
        out.extend_from_slice(members);
        for _ in members.len()..n_max {
            out.push(members[rng.random_range(0..members.len())]);
        }
    }
    Ok(out)
}

/// Mean predicted probability vector over `subset`, duplicates counted.
pub fn estimate_prior<T: Scalar>(
    params: &ModelParams<T>,
    ds: &Dataset<T>,
    subset: &[usize],
) -> Result<Vec<T>> {
    if subset.is_empty() {
        return Err(Error::Empty("balanced subset"));
    }
    let mut prior = vec![T::zero(); params.arch().num_classes];
    for &i in subset {
        let p = params.probs(ds.row(i))?;
        prior.iter_mut().zip(&p).for_each(|(a, &b)| *a += b);
    }
    let inv = T::one() / T::from_count(subset.len());
    prior.iter_mut().for_each(|a| *a *= inv);
    Ok(prior)
}

/// Ratio of the smallest to the largest prior entry over the observed classes.
pub fn gamma_from_prior<T: Scalar>(prior: &[T], observed: &[usize]) -> Result<T> {
    if observed.is_empty() {
        return Err(Error::Empty("observed classes"));
    }
    let vals: Vec<T> = observed
        .iter()
        .map(|&c| {
            prior
                .get(c)
                .copied()
                .ok_or_else(|| Error::invalid(format!("class {c} outside prior")))
        })
        .collect::<Result<_>>()?;
    let lo = vals.iter().copied().fold(T::infinity(), T::min);
    let hi = vals.iter().copied().fold(T::neg_infinity(), T::max);
    if !(hi > T::zero()) {
        return Err(Error::invalid("prior has no mass on the observed classes"));
    }
    Ok(lo / hi)
}

/// Arithmetic mean of the per-client balance estimates.
pub fn aggregate_gamma<T: Scalar>(gammas: &[T]) -> Result<T> {
    if gammas.is_empty() {
        return Err(Error::Empty("client gamma values"));
    }
    Ok(gammas.iter().copied().sum::<T>() / T::from_count(gammas.len()))
}

/// Normalized symmetric difference between two priors, averaged over all classes.
pub fn divergence<T: Scalar>(global: &[T], local: &[T]) -> Result<T> {
    if global.len() != local.len() || global.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: global.len(),
            found: local.len(),
        });
    }
    let eps = T::lit(DIVERGENCE_EPS);
    let total = global
        .iter()
        .zip(local)
        .map(|(&g, &l)| (g - l).abs() / (g + l + eps))
        .sum::<T>();
    Ok(total / T::from_count(global.len()))
}

/// Model-selection score `s = 1 - (d + gamma_bar) / 2`; the global model is
/// chosen only when `s > delta`.
pub fn select_model<T: Scalar>(gamma_bar: T, d: T, delta: T) -> (Selector, T) {
    let s = T::one() - (d + gamma_bar) / T::lit(2.0);
    let which = if s > delta {
        Selector::Global
    } else {
        Selector::Local
    };
    (which, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceEstimate<T> {
    pub gamma_k: T,
    pub gamma_bar: T,
    pub d_k: T,
    pub s_k: T,
}

/// Client-side quantities behind model selection, for one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPriors<T> {
    pub global_prior: Vec<T>,
    pub local_prior: Vec<T>,
    pub gamma_k: T,
    pub d_k: T,
}

/// Builds the balanced resample of the client's labeled data and derives both
/// priors, the client's balance estimate and the local-global divergence.
pub fn client_priors<T: Scalar>(
    global: &ModelParams<T>,
    local: &ModelParams<T>,
    ds: &Dataset<T>,
    by_class: &BTreeMap<usize, Vec<usize>>,
    seed: u64,
) -> Result<ClientPriors<T>> {
    let subset = build_balanced_subset(by_class, seed)?;
    let global_prior = estimate_prior(global, ds, &subset)?;
    let local_prior = estimate_prior(local, ds, &subset)?;
    let observed: Vec<usize> = by_class.keys().copied().collect();
    let gamma_k = gamma_from_prior(&global_prior, &observed)?;
    let d_k = divergence(&global_prior, &local_prior)?;
    Ok(ClientPriors {
        global_prior,
        local_prior,
        gamma_k,
        d_k,
    })
}

/// Per-class mean of l2-normalized features. Zero-norm features stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet<T> {
    pub prototypes: BTreeMap<usize, Vec<T>>,
    /// Labeled samples whose feature vector had zero norm.
    pub zero_norm: usize,
}

fn normalized<T: Scalar>(mut v: Vec<T>) -> (Vec<T>, bool) {
    let n = norm(&v);
    if n > T::zero() {
        v.iter_mut().for_each(|x| *x /= n);
        (v, true)
    } else {
        (v, false)
    }
}

pub fn compute_prototypes<T: Scalar>(
    global: &ModelParams<T>,
    ds: &Dataset<T>,
    by_class: &BTreeMap<usize, Vec<usize>>,
) -> Result<PrototypeSet<T>> {
    let mut prototypes = BTreeMap::new();
    let mut zero_norm = 0;
    for (&c, members) in by_class.iter().filter(|(_, m)| !m.is_empty()) {
        let mut mean = vec![T::zero(); global.arch().feature_dim()];
        for &i in members {
            let (z, ok) = normalized(global.features(ds.row(i))?);
            zero_norm += usize::from(!ok);
            mean.iter_mut().zip(&z).for_each(|(m, &v)| *m += v);
        }
        let inv = T::one() / T::from_count(members.len());
        mean.iter_mut().for_each(|m| *m *= inv);
        prototypes.insert(c, mean);
    }
    if prototypes.is_empty() {
        return Err(Error::Empty("labeled set"));
    }
    Ok(PrototypeSet {
        prototypes,
        zero_norm,
    })
}

/// Class whose prototype is most similar to the normalized `feature`; ties go to the lowest class id.
pub fn pseudo_label<T: Scalar>(
    protos: &PrototypeSet<T>,
    feature: &[T],
    similarity: Similarity,
) -> Result<usize> {
    let (z, _) = normalized(feature.to_vec());
    let mut best: Option<(usize, T)> = None;
    for (&c, mu) in &protos.prototypes {
        if mu.len() != z.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                found: z.len(),
            });
        }
        let mut s = dot(&z, mu);
        if similarity == Similarity::Cosine {
            let n = norm(mu);
            if n > T::zero() {
                s /= n;
            }
        }
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((c, s));
        }
    }
    best.map(|(c, _)| c).ok_or(Error::Empty("prototype set"))
}

/// Uniform split of `budget` over classes (in the given order), remainder to
/// the earliest classes, then capped at each pool size with the excess
/// redistributed in the same order to classes with room left.
pub fn allocate_budgets(budget: usize, pool_sizes: &[usize]) -> Result<Vec<usize>> {
    let capacity: usize = pool_sizes.iter().sum();
    if capacity < budget {
        return Err(Error::BudgetExceedsPool {
            budget,
            pool: capacity,
        });
    }
    if pool_sizes.is_empty() {
        return Ok(Vec::new());
    }
    let n = pool_sizes.len();
    let mut alloc: Vec<usize> = (0..n)
        .map(|i| budget / n + usize::from(i < budget % n))
        .collect();
    let mut deficit = 0;
    for (a, &cap) in alloc.iter_mut().zip(pool_sizes) {
        if *a > cap {
            deficit += *a - cap;
            *a = cap;
        }
    }
    while deficit > 0 {
        for (a, &cap) in alloc.iter_mut().zip(pool_sizes) {
            if deficit > 0 && *a < cap {
                *a += 1;
                deficit -= 1;
            }
        }
    }
    Ok(alloc)
}

/// Size of the over-complete candidate pool: `min(ceil(kappa * b), pool)`.
pub fn candidate_pool_size(budget: usize, kappa: f64, pool: usize) -> usize {
    (((kappa * budget as f64) - 1e-9).ceil() as usize)
        .max(budget)
        .min(pool)
}

/// The `ceil(kappa * b)` most uncertain members of one pseudo-class pool.
pub fn candidate_pool<T: Scalar>(
    pool: &[usize],
    scores: &[T],
    budget: usize,
    kappa: f64,
) -> Vec<usize> {
    top_k(pool, scores, candidate_pool_size(budget, kappa, pool.len()))
}

/// Per-class trace of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTrace {
    pub class: usize,
    pub pool_size: usize,
    pub budget: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairFalQuery<T> {
    /// Selected indices with the pseudo-class each was drawn from, ascending by index.
    pub selected: Vec<(usize, usize)>,
    pub model: Selector,
    pub estimate: BalanceEstimate<T>,
    pub classes: Vec<ClassTrace>,
    pub zero_norm_features: usize,
}

impl<T> FairFalQuery<T> {
    pub fn indices(&self) -> Vec<usize> {
        self.selected.iter().map(|&(i, _)| i).collect()
    }
}

/// Full query for one client. `gamma_bar` is the server-side balance
/// coefficient fixed in the first querying cycle; `seed` drives the balanced
/// resample. `ctx.selector` is ignored: the model is chosen adaptively.
pub fn fairfal_query<T: Scalar>(
    ctx: &QueryContext<'_, T>,
    cfg: &FairFalConfig,
    gamma_bar: T,
    seed: u64,
) -> Result<FairFalQuery<T>> {
    cfg.validate()?;
    ctx.check_budget()?;
    let ds = ctx.dataset;
    let by_class = ctx.pools.labeled_by_class(ds);
    if by_class.is_empty() {
        return Err(Error::Empty("labeled set"));
    }

    let priors = client_priors(ctx.global, ctx.local, ds, &by_class, seed)?;
    let (model, s_k) = select_model(gamma_bar, priors.d_k, T::lit(cfg.delta));
    let scorer = ctx.model(model);
    let estimate = BalanceEstimate {
        gamma_k: priors.gamma_k,
        gamma_bar,
        d_k: priors.d_k,
        s_k,
    };

    let protos = compute_prototypes(ctx.global, ds, &by_class)?;
    let mut pseudo_pools: BTreeMap<usize, Vec<usize>> =
        by_class.keys().map(|&c| (c, Vec::new())).collect();
    for &i in ctx.pools.unlabeled() {
        let c = pseudo_label(&protos, &ctx.global.features(ds.row(i))?, cfg.similarity)?;
        pseudo_pools
            .get_mut(&c)
            .expect("prototype classes are the observed classes")
            .push(i);
    }

    let classes: Vec<usize> = pseudo_pools.keys().copied().collect();
    let sizes: Vec<usize> = pseudo_pools.values().map(Vec::len).collect();
    let budgets = allocate_budgets(ctx.budget, &sizes)?;

    let embed = |i: usize, group: usize| {
        let label = match cfg.embedding_label {
            EmbeddingLabel::Argmax => None,
            EmbeddingLabel::Group => Some(group),
        };
        ctx.global.gradient_embedding(ds.row(i), label)
    };

    let mut selected = Vec::with_capacity(ctx.budget);
    let mut traces = Vec::with_capacity(classes.len());
    for ((&c, pool), &b) in classes.iter().zip(pseudo_pools.values()).zip(&budgets) {
        let mut trace = ClassTrace {
            class: c,
            pool_size: pool.len(),
            budget: b,
            candidates: 0,
        };
        if b > 0 {
            let scores = score_rows(scorer, ds, pool, cfg.uncertainty)?;
            let cands = candidate_pool(pool, &scores, b, cfg.kappa);
            trace.candidates = cands.len();
            let cand_emb = cands
                .iter()
                .map(|&i| embed(i, c))
                .collect::<Result<Vec<_>>>()?;
            let anchor_emb = by_class[&c]
                .iter()
                .map(|&i| embed(i, c))
                .collect::<Result<Vec<_>>>()?;
            let picks = greedy_kcenter(&cand_emb, &anchor_emb, b)?;
            selected.extend(picks.into_iter().map(|p| (cands[p], c)));
        }
        traces.push(trace);
    }
    selected.sort_unstable();

    Ok(FairFalQuery {
        selected,
        model,
        estimate,
        classes: traces,
        zero_norm_features: protos.zero_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClientPools;
    use crate::model::Architecture;

    fn classes(spec: &[(usize, Vec<usize>)]) -> BTreeMap<usize, Vec<usize>> {
        spec.iter().cloned().collect()
    }

    #[test]
    fn balanced_subset_sizes() {
        let b =
            build_balanced_subset(&classes(&[(0, vec![1, 2, 3]), (1, vec![4, 5, 6])]), 1).unwrap();
        assert_eq!(b, vec![1, 2, 3, 4, 5, 6]);

        let b = build_balanced_subset(&classes(&[(0, vec![7]), (1, vec![1, 2, 3, 4])]), 1).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!(&b[..4], &[7, 7, 7, 7]);
        assert_eq!(&b[4..], &[1, 2, 3, 4]);

        let b = build_balanced_subset(&classes(&[(0, vec![]), (2, vec![3, 4])]), 1).unwrap();
        assert_eq!(b, vec![3, 4]);
        assert!(build_balanced_subset(&BTreeMap::new(), 0).is_err());
    }

    #[test]
    fn balanced_subset_is_seeded() {
        let cls = classes(&[(0, vec![1, 2]), (1, (10..30).collect())]);
        assert_eq!(
            build_balanced_subset(&cls, 5).unwrap(),
            build_balanced_subset(&cls, 5).unwrap()
        );
        assert_ne!(
            build_balanced_subset(&cls, 5).unwrap(),
            build_balanced_subset(&cls, 6).unwrap()
        );
    }

    #[test]
    fn prior_of_uniform_model_is_uniform() {
        let ds = Dataset::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]], vec![0, 1], 2).unwrap();
        let zero = ModelParams::<f64>::zeros(Architecture::linear(2, 2)).unwrap();
        assert_eq!(
            estimate_prior(&zero, &ds, &[0, 1, 1]).unwrap(),
            vec![0.5, 0.5]
        );
        let m = ModelParams::<f64>::init(Architecture::linear(2, 2), 4).unwrap();
        assert_eq!(
            estimate_prior(&m, &ds, &[1]).unwrap(),
            m.probs(ds.row(1)).unwrap()
        );
        assert!(estimate_prior(&m, &ds, &[]).is_err());
    }

    #[test]
    fn gamma_values() {
        assert_eq!(
            gamma_from_prior(&[0.25f64, 0.25, 0.25, 0.25], &[0, 1, 2, 3]).unwrap(),
            1.0
        );
        let g = gamma_from_prior(&[0.5f64, 0.25, 0.15, 0.10], &[0, 1, 2, 3]).unwrap();
        assert!((g - 0.2).abs() < 1e-12);
        // class 3 carries the extreme value but is not observed
        let g = gamma_from_prior(&[0.4f64, 0.2, 0.39, 0.01], &[0, 1, 2]).unwrap();
        assert!((g - 0.5).abs() < 1e-12);
        assert!(gamma_from_prior(&[0.5f64, 0.5], &[]).is_err());
    }

    #[test]
    fn gamma_aggregation() {
        assert!((aggregate_gamma(&[0.2f64, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(aggregate_gamma(&[0.7f64; 4]).unwrap(), 0.7);
        assert!(aggregate_gamma::<f64>(&[]).is_err());
    }

    #[test]
    fn divergence_values() {
        assert_eq!(divergence(&[0.3f64, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((divergence(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-11);
        assert!((divergence(&[0.8f64, 0.2], &[0.2, 0.8]).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(divergence(&[0.0f64, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(divergence(&[0.5f64, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn selection_rule() {
        let (m, s) = select_model(0.3f64, 0.2, 0.75);
        assert!((s - 0.75).abs() < 1e-15);
        assert_eq!(select_model(0.25f64, 0.25, 0.75), (Selector::Local, 0.75));
        assert_eq!(
            m,
            if s > 0.75 {
                Selector::Global
            } else {
                Selector::Local
            }
        );
        let (m, s) = select_model(0.2f64, 0.1, 0.75);
        assert_eq!(m, Selector::Global);
        assert!((s - 0.85).abs() < 1e-12);
        assert_eq!(select_model(1.0f64, 1.0, 0.75), (Selector::Local, 0.0));
    }

    #[test]
    fn prototypes_are_unrenormalized_means() {
        let ds = Dataset::from_rows(
            &[
                vec![2.0, 0.0],
                vec![0.0, 3.0],
                vec![0.0, 5.0],
                vec![0.0, 5.0],
                vec![0.0, 0.0],
            ],
            vec![0, 0, 1, 1, 1],
            2,
        )
        .unwrap();
        let id = ModelParams::<f64>::zeros(Architecture::linear(2, 2)).unwrap();
        let p =
            compute_prototypes(&id, &ds, &classes(&[(0, vec![0, 1]), (1, vec![2, 3])])).unwrap();
        assert_eq!(p.prototypes[&0], vec![0.5, 0.5]);
        assert!((norm(&p.prototypes[&0]) - 2f64.sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(p.prototypes[&1], vec![0.0, 1.0]);
        assert_eq!(p.zero_norm, 0);

        let single = compute_prototypes(&id, &ds, &classes(&[(1, vec![2])])).unwrap();
        assert_eq!(single.prototypes[&1], p.prototypes[&1]);

        let z = compute_prototypes(&id, &ds, &classes(&[(1, vec![2, 4])])).unwrap();
        assert_eq!(z.zero_norm, 1);
        assert_eq!(z.prototypes[&1], vec![0.0, 0.5]);
    }

    #[test]
    fn pseudo_labels() {
        let protos = PrototypeSet {
            prototypes: [(1, vec![1.0, 0.0]), (4, vec![0.0, 1.0])]
                .into_iter()
                .collect(),
            zero_norm: 0,
        };
        assert_eq!(
            pseudo_label(&protos, &[3.0, 0.5], Similarity::InnerProduct).unwrap(),
            1
        );
        assert_eq!(
            pseudo_label(&protos, &[0.1, 0.5], Similarity::InnerProduct).unwrap(),
            4
        );
        assert_eq!(
            pseudo_label(&protos, &[1.0, 1.0], Similarity::InnerProduct).unwrap(),
            1
        );

        let uneven = PrototypeSet {
            prototypes: [(0, vec![0.5, 0.0]), (1, vec![0.0, 1.0])]
                .into_iter()
                .collect(),
            zero_norm: 0,
        };
        // inner product favours the longer prototype, cosine does not
        assert_eq!(
            pseudo_label(&uneven, &[1.0, 0.8], Similarity::InnerProduct).unwrap(),
            1
        );
        assert_eq!(
            pseudo_label(&uneven, &[1.0, 0.8], Similarity::Cosine).unwrap(),
            0
        );
    }

    #[test]
    fn budgets() {
        assert_eq!(allocate_budgets(10, &[100; 5]).unwrap(), vec![2; 5]);
        assert_eq!(allocate_budgets(10, &[100; 3]).unwrap(), vec![4, 3, 3]);
        assert_eq!(allocate_budgets(6, &[1, 100, 100]).unwrap(), vec![1, 3, 2]);
        assert_eq!(allocate_budgets(2, &[5, 5, 5]).unwrap(), vec![1, 1, 0]);
        assert_eq!(allocate_budgets(7, &[0, 2, 9]).unwrap(), vec![0, 2, 5]);
        assert!(matches!(
            allocate_budgets(5, &[1, 2]),
            Err(Error::BudgetExceedsPool { .. })
        ));
    }

    #[test]
    fn candidate_pool_sizes() {
        assert_eq!(candidate_pool_size(2, 4.0, 20), 8);
        assert_eq!(candidate_pool_size(3, 4.0, 3), 3);
        assert_eq!(candidate_pool_size(3, 1.5, 100), 5);
        assert_eq!(candidate_pool_size(2, 1.0000001, 100), 3);
        let pool: Vec<usize> = (0..6).collect();
        let scores = [0.1f64, 0.9, 0.3, 0.8, 0.5, 0.2];
        let h = candidate_pool(&pool, &scores, 1, 3.0);
        assert_eq!(h, vec![1, 3, 4]);
    }

    fn query_fixture() -> (
        Dataset<f64>,
        ModelParams<f64>,
        ModelParams<f64>,
        ClientPools,
    ) {
        let ds: Dataset<f64> = crate::data::synth_blobs(3, 20, 4, 6.0, 2).unwrap();
        let arch = Architecture::mlp(4, 8, 3);
        let g = ModelParams::init(arch, 1).unwrap();
        let l = ModelParams::init(arch, 2).unwrap();
        let pools = ClientPools::from_parts(
            vec![0, 1, 20, 45],
            (0..60).filter(|i| ![0, 1, 20, 45].contains(i)).collect(),
        )
        .unwrap();
        (ds, g, l, pools)
    }

    #[test]
    fn query_contract() {
        let (ds, g, l, pools) = query_fixture();
        let cfg = FairFalConfig::default();
        for budget in [1, 5, 17] {
            let ctx = QueryContext {
                global: &g,
                local: &l,
                pools: &pools,
                dataset: &ds,
                budget,
                selector: Selector::Global,
            };
            let q = fairfal_query(&ctx, &cfg, 0.4, 3).unwrap();
            let idx = q.indices();
            assert_eq!(idx.len(), budget);
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
            assert!(idx.iter().all(|i| pools.unlabeled().contains(i)));
            assert_eq!(q.classes.iter().map(|c| c.budget).sum::<usize>(), budget);
            let est = q.estimate;
            assert_eq!(est.s_k, 1.0 - (est.d_k + est.gamma_bar) / 2.0);
        }
        let ctx = QueryContext {
            global: &g,
            local: &l,
            pools: &pools,
            dataset: &ds,
            budget: 56,
            selector: Selector::Global,
        };
        assert_eq!(
            fairfal_query(&ctx, &cfg, 0.4, 3).unwrap().indices(),
            pools.unlabeled()
        );
        let too_many = QueryContext { budget: 57, ..ctx };
        assert!(fairfal_query(&too_many, &cfg, 0.4, 3).is_err());
    }
}
