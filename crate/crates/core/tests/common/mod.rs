// Reference implementations used as test oracles. They trade speed for
// directness and share no code with the library.
#![allow(dead_code)]

use fairfal::model::{Architecture, ModelParams};

/// Average ranks (1-based) of `v` as f64.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let below = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// One-sided signed-rank p-value by flipping every sign pattern.
pub fn wilcoxon_brute(deltas: &[f64]) -> f64 {
    let d: Vec<f64> = deltas.iter().copied().filter(|&x| x != 0.0).collect();
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = average_ranks(&abs);
    let observed: f64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, &x)| x > 0.0)
        .map(|(r, _)| r)
        .sum();
    let n = d.len();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if w >= observed - 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// Median of every `(d_s + d_t) / 2` with `s <= t`.
pub fn hodges_lehmann_brute(d: &[f64]) -> f64 {
    let mut w = Vec::new();
    for s in 0..d.len() {
        for t in s..d.len() {
            w.push((d[s] + d[t]) / 2.0);
        }
    }
    w.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = w.len();
    if m % 2 == 1 {
        w[m / 2]
    } else {
        (w[m / 2 - 1] + w[m / 2]) / 2.0
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Covering radius of `points` by `anchors` plus the chosen `points`.
pub fn radius(points: &[Vec<f64>], anchors: &[Vec<f64>], chosen: &[usize]) -> f64 {
    points
        .iter()
        .map(|x| {
            anchors
                .iter()
                .chain(chosen.iter().map(|&c| &points[c]))
                .map(|a| dist(x, a))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Optimal k-center radius over all size-`b` subsets of `points`.
pub fn kcenter_optimum(points: &[Vec<f64>], anchors: &[Vec<f64>], b: usize) -> f64 {
    fn rec(
        points: &[Vec<f64>],
        anchors: &[Vec<f64>],
        b: usize,
        start: usize,
        cur: &mut Vec<usize>,
        best: &mut f64,
    ) {
        if cur.len() == b {
            *best = best.min(radius(points, anchors, cur));
            return;
        }
        for i in start..points.len() {
            cur.push(i);
            rec(points, anchors, b, i + 1, cur, best);
            cur.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(points, anchors, b, 0, &mut Vec::new(), &mut best);
    best
}

/// Central finite difference of `f` at every coordinate of `x`.
pub fn numeric_grad(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            buf[i] = x[i] + h;
            let up = f(&buf);
            buf[i] = x[i] - h;
            let down = f(&buf);
            buf[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Hidden pre-activations `W1 x + b1` read straight from the parameter layout.
pub fn hidden_pre(p: &ModelParams<f64>, x: &[f64]) -> Vec<f64> {
    let Architecture {
        input_dim: d,
        hidden: h,
        ..
    } = p.arch();
    let v = p.values();
    (0..h)
        .map(|j| {
            v[j * d..(j + 1) * d]
                .iter()
                .zip(x)
                .map(|(w, xi)| w * xi)
                .sum::<f64>()
                + v[h * d + j]
        })
        .collect()
}

/// Fraction of `pred` equal to `truth`.
pub fn agreement(pred: &[usize], truth: &[usize]) -> f64 {
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}
