mod common;

use std::collections::BTreeSet;

use common::{kcenter_optimum, radius};
use fairfal::data::{init_labeled, synth_blobs, ClientPools, Dataset};
use fairfal::model::{Architecture, ModelParams};
use fairfal::strategies::{
    covering_radius, greedy_kcenter, query_coreset, query_random, query_uncertainty, top_k,
    QueryContext, Selector, UncertaintyKind,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect()
}

#[test]
fn greedy_kcenter_is_a_two_approximation() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..500 {
        let n = rng.random_range(1..=10);
        let b = rng.random_range(1..=3.min(n));
        let dim = rng.random_range(1..=4);
        let cands = points(&mut rng, n, dim);
        let m = rng.random_range(0..=3);
        let anchors = points(&mut rng, m, dim);
        let picks = greedy_kcenter(&cands, &anchors, b).unwrap();
        assert_eq!(picks.len(), b);
        assert_eq!(picks.iter().collect::<BTreeSet<_>>().len(), b);
        let greedy = radius(&cands, &anchors, &picks);
        let opt = kcenter_optimum(&cands, &anchors, b);
        assert!(
            greedy <= 2.0 * opt + 1e-12,
            "greedy {greedy} > 2 x optimum {opt}"
        );
        assert!((covering_radius(&cands, &anchors, &picks) - greedy).abs() < 1e-12);
    }
}

#[test]
fn covering_radius_shrinks_with_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..100 {
        let cands = points(&mut rng, 12, 3);
        let m = rng.random_range(0..3);
        let anchors = points(&mut rng, m, 3);
        let mut last = f64::INFINITY;
        for b in 1..=12 {
            let r = radius(
                &cands,
                &anchors,
                &greedy_kcenter(&cands, &anchors, b).unwrap(),
            );
            assert!(r <= last + 1e-12);
            last = r;
        }
        assert!(last < 1e-12);
    }
}

struct Setup {
    ds: Dataset<f64>,
    global: ModelParams<f64>,
    local: ModelParams<f64>,
    pools: ClientPools,
}

fn setup(seed: u64) -> Setup {
    let ds: Dataset<f64> = synth_blobs(4, 25, 5, 2.0, seed).unwrap();
    let arch = Architecture::mlp(5, 6, 4);
    let pools = init_labeled(&ClientPools::new((0..ds.len()).collect()), 0.2, seed).unwrap();
    Setup {
        global: ModelParams::init(arch, seed + 1).unwrap(),
        local: ModelParams::init(arch, seed + 2).unwrap(),
        ds,
        pools,
    }
}

#[test]
fn uncertainty_selection_ignores_pool_order() {
    let s = setup(3);
    let ctx = QueryContext {
        global: &s.global,
        local: &s.local,
        pools: &s.pools,
        dataset: &s.ds,
        budget: 7,
        selector: Selector::Global,
    };
    let mut unl = s.pools.unlabeled().to_vec();
    unl.reverse();
    let shuffled = ClientPools::from_parts(s.pools.labeled().to_vec(), unl).unwrap();
    let ctx2 = QueryContext {
        pools: &shuffled,
        ..ctx
    };
    for kind in [
        UncertaintyKind::Entropy,
        UncertaintyKind::Margin,
        UncertaintyKind::LeastConfidence,
    ] {
        let mut a = query_uncertainty(&ctx, kind).unwrap();
        let mut b = query_uncertainty(&ctx2, kind).unwrap();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, b);
    }
}

proptest! {
    #[test]
    fn every_strategy_returns_a_subset_of_the_pool(seed in 0u64..500, budget in 0usize..80, local in any::<bool>()) {
        let s = setup(seed);
        let budget = budget.min(s.pools.unlabeled().len());
        let ctx = QueryContext {
            global: &s.global,
            local: &s.local,
            pools: &s.pools,
            dataset: &s.ds,
            budget,
            selector: if local { Selector::Local } else { Selector::Global },
        };
        let pool: BTreeSet<usize> = s.pools.unlabeled().iter().copied().collect();
        let results = [
            query_random(&ctx, seed).unwrap(),
            query_uncertainty(&ctx, UncertaintyKind::Entropy).unwrap(),
            query_uncertainty(&ctx, UncertaintyKind::Margin).unwrap(),
            query_uncertainty(&ctx, UncertaintyKind::LeastConfidence).unwrap(),
            query_coreset(&ctx).unwrap(),
        ];
        for q in results {
            let set: BTreeSet<usize> = q.iter().copied().collect();
            prop_assert_eq!(q.len(), budget);
            prop_assert_eq!(set.len(), budget);
            prop_assert!(set.is_subset(&pool));
        }
        let over = QueryContext { budget: pool.len() + 1, ..ctx };
        prop_assert!(query_uncertainty(&over, UncertaintyKind::Entropy).is_err());
    }

    #[test]
    fn top_k_is_invariant_to_increasing_transforms(
        scores in prop::collection::vec(-100.0f64..100.0, 1..40),
        k in 0usize..40,
    ) {
        let idx: Vec<usize> = (0..scores.len()).map(|i| i * 3 + 1).collect();
        let k = k.min(scores.len());
        let affine: Vec<f64> = scores.iter().map(|s| 2.0 * s + 1.0).collect();
        prop_assert_eq!(top_k(&idx, &scores, k), top_k(&idx, &affine, k));
    }
}
