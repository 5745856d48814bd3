//! Learning-curve metrics and robust paired comparison of two strategies
//! across seeds: positive ratio, exact one-sided Wilcoxon signed-rank test and
//! the Hodges-Lehmann estimator.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::scalar::{argmax, cmp_scalar, Scalar};

/// Largest sample size accepted by the exact Wilcoxon test.
pub const WILCOXON_MAX_N: usize = 20;

/// Fraction of rows whose argmax prediction matches the label.
pub fn accuracy<T: Scalar>(params: &ModelParams<T>, test: &Dataset<T>) -> Result<T> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut correct = 0usize;
    for i in 0..test.len() {
        if argmax(&params.forward(test.row(i))?.logits) == test.label(i) {
            correct += 1;
        }
    }
    Ok(T::from_count(correct) / T::from_count(test.len()))
}

/// Accuracy against labeled fraction, fractions strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve<T> {
    points: Vec<(T, T)>,
}

impl<T: Scalar> LearningCurve<T> {
    pub fn new(points: Vec<(T, T)>) -> Result<Self> {
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid(
                "labeled fractions must be strictly increasing",
            ));
        }
        if points
            .iter()
            .any(|&(f, a)| !(f >= T::zero() && f <= T::one() && a >= T::zero() && a <= T::one()))
        {
            return Err(Error::invalid(
                "fractions and accuracies must lie in [0, 1]",
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    fn scaled(&self, factor: T) -> Vec<(T, T)> {
        self.points.iter().map(|&(f, a)| (f, a * factor)).collect()
    }
}

fn trapezoid<T: Scalar>(points: &[(T, T)]) -> Result<T> {
    if points.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 curve points, got {}",
            points.len()
        )));
    }
    let half = T::lit(0.5);
    Ok(points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) * half)
        .sum())
}

/// Trapezoidal area under accuracy over labeled fraction.
pub fn aulc<T: Scalar>(curve: &LearningCurve<T>) -> Result<T> {
    trapezoid(curve.points())
}

/// Fraction of strictly positive deltas.
pub fn positive_ratio<T: Scalar>(deltas: &[T]) -> Result<T> {
    if deltas.is_empty() {
        return Err(Error::Empty("deltas"));
    }
    let pos = deltas.iter().filter(|&&d| d > T::zero()).count();
    Ok(T::from_count(pos) / T::from_count(deltas.len()))
}

/// Average ranks of `values` (1-based), doubled so tied ranks stay integral.
pub(crate) fn doubled_ranks<T: Scalar>(values: &[T]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp_scalar(values[a], values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end+1 share rank (start + end + 2) / 2
        let doubled = (start + end + 2) as u64;
        for &i in &order[start..=end] {
            ranks[i] = doubled;
        }
        start = end + 1;
    }
    ranks
}

/// Exact one-sided Wilcoxon signed-rank p-value for `H1: median > 0`.
///
/// Zeros are dropped, absolute values ranked with average ranks for ties, and
/// `p = P(W >= W+)` under the null that every sign is equally likely, computed
/// by counting all `2^n` sign assignments.
pub fn wilcoxon_one_sided<T: Scalar>(deltas: &[T]) -> Result<T> {
    let nonzero: Vec<T> = deltas.iter().copied().filter(|&d| d != T::zero()).collect();
    if nonzero.is_empty() {
        return Err(Error::invalid("all deltas are zero"));
    }
    if nonzero.len() > WILCOXON_MAX_N {
        return Err(Error::invalid(format!(
            "exact test limited to {WILCOXON_MAX_N} nonzero deltas, got {}",
            nonzero.len()
        )));
    }
    let abs: Vec<T> = nonzero.iter().map(|d| d.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let observed: u64 = ranks
        .iter()
        .zip(&nonzero)
        .filter(|(_, &d)| d > T::zero())
        .map(|(&r, _)| r)
        .sum();

    // counts[s] = number of sign assignments whose positive doubled-rank sum is s
    let max_sum: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; max_sum as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in &ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let at_least: u64 = counts[observed as usize..].iter().sum();
    let total = 1u64 << nonzero.len();
    Ok(T::from_u64(at_least).expect("count fits") / T::from_u64(total).expect("count fits"))
}

/// Median of all Walsh averages `(d_s + d_t) / 2`, `s <= t`.
pub fn hodges_lehmann<T: Scalar>(deltas: &[T]) -> Result<T> {
    if deltas.is_empty() {
        return Err(Error::Empty("deltas"));
    }
    let half = T::lit(0.5);
    let mut walsh = Vec::with_capacity(deltas.len() * (deltas.len() + 1) / 2);
    for s in 0..deltas.len() {
        for t in s..deltas.len() {
            walsh.push((deltas[s] + deltas[t]) * half);
        }
    }
    Ok(median(&mut walsh))
}

pub(crate) fn median<T: Scalar>(xs: &mut [T]) -> T {
    xs.sort_by(|a, b| cmp_scalar(*a, *b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) * T::lit(0.5)
    }
}

/// Class groups ordered from most to least frequent.
///
/// With at least 7 classes: top 3, middle `C - 6`, bottom 3 by global count;
/// otherwise one group per class. Ties in count go to the lower class id.
pub fn default_groups(class_counts: &[usize]) -> Vec<Vec<usize>> {
    let mut ranked: Vec<usize> = (0..class_counts.len()).collect();
    ranked.sort_by(|&a, &b| class_counts[b].cmp(&class_counts[a]).then(a.cmp(&b)));
    let c = ranked.len();
    if c >= 7 {
        vec![
            ranked[..3].to_vec(),
            ranked[3..c - 3].to_vec(),
            ranked[c - 3..].to_vec(),
        ]
    } else {
        ranked.into_iter().map(|k| vec![k]).collect()
    }
}

/// Cumulative per-group share of queried samples after each cycle.
///
/// `history` holds `(cycle, true_class)` per query. Rows run from the first
/// to the last queried cycle; each row sums to 1.
pub fn class_group_ratios<T: Scalar>(
    history: &[(usize, usize)],
    groups: &[Vec<usize>],
) -> Result<Vec<(usize, Vec<T>)>> {
    if history.is_empty() {
        return Err(Error::Empty("query history"));
    }
    let num_classes = groups.iter().flatten().max().map_or(0, |&c| c + 1);
    let mut group_of = vec![usize::MAX; num_classes];
    for (g, members) in groups.iter().enumerate() {
        for &c in members {
            group_of[c] = g;
        }
    }
    let first = history.iter().map(|h| h.0).min().expect("nonempty");
    let last = history.iter().map(|h| h.0).max().expect("nonempty");
    let mut counts = vec![0usize; groups.len()];
    let mut seen = 0usize;
    let mut rows = Vec::with_capacity(last - first + 1);
    for cycle in first..=last {
        for &(_, class) in history.iter().filter(|h| h.0 == cycle) {
            let g = *group_of
                .get(class)
                .filter(|&&g| g != usize::MAX)
                .ok_or_else(|| Error::invalid(format!("class {class} belongs to no group")))?;
            counts[g] += 1;
            seen += 1;
        }
        let total = T::from_count(seen);
        rows.push((
            cycle,
            counts.iter().map(|&n| T::from_count(n) / total).collect(),
        ));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    First,
    Second,
}

/// Paired comparison of strategy `i` (first) against `j` (second).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedStats<T> {
    pub seeds: Vec<u64>,
    /// Per-seed AULC differences in percentage points.
    pub deltas: Vec<T>,
    pub pi_plus: T,
    pub p_value: T,
    pub hl_estimate: T,
}

impl<T: Scalar> PairedStats<T> {
    pub fn from_deltas(seeds: Vec<u64>, deltas: Vec<T>) -> Result<Self> {
        let pi_plus = positive_ratio(&deltas)?;
        let p_value = if deltas.iter().all(|&d| d == T::zero()) {
            T::one()
        } else {
            wilcoxon_one_sided(&deltas)?
        };
        let hl_estimate = hodges_lehmann(&deltas)?;
        Ok(Self {
            seeds,
            deltas,
            pi_plus,
            p_value,
            hl_estimate,
        })
    }

    pub fn winner(&self) -> Winner {
        if self.hl_estimate > T::zero() {
            Winner::First
        } else {
            Winner::Second
        }
    }
}

/// Per-seed AULC differences (accuracy in percent) and the three statistics.
/// Both sides must list the same seeds in the same order.
pub fn compare<T: Scalar>(
    first: &[(u64, LearningCurve<T>)],
    second: &[(u64, LearningCurve<T>)],
) -> Result<PairedStats<T>> {
    if first.len() != second.len() || first.iter().zip(second).any(|(a, b)| a.0 != b.0) {
        return Err(Error::invalid(format!(
            "seed mismatch: {:?} vs {:?}",
            first.iter().map(|s| s.0).collect::<Vec<_>>(),
            second.iter().map(|s| s.0).collect::<Vec<_>>()
        )));
    }
    let pct = T::lit(100.0);
    let deltas = first
        .iter()
        .zip(second)
        .map(|((_, a), (_, b))| Ok(trapezoid(&a.scaled(pct))? - trapezoid(&b.scaled(pct))?))
        .collect::<Result<Vec<T>>>()?;
    PairedStats::from_deltas(first.iter().map(|s| s.0).collect(), deltas)
}
