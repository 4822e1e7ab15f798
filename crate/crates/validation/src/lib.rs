//! Shared fixtures for the acceptance suite and the population-level tests:
//! a six-point discrete distribution with exact population risks, and the
//! Gaussian blob mixture with its closed-form posterior.

#![allow(clippy::needless_range_loop)]

use mauc::dataset::{blob_mean, synth_blobs, ClassIndex, Dataset};
use mauc::metrics::{mauc, ScoreMatrix};
use mauc::{rng, LinearSoftmaxModel};
use ndarray::Array2;
use rand::Rng;

/// Six support points, three classes; `JOINT[k][c] = P(x = k, y = c)`.
pub const JOINT: [[f64; 3]; 6] = [
    [0.20, 0.02, 0.01],
    [0.12, 0.05, 0.02],
    [0.08, 0.08, 0.02],
    [0.05, 0.08, 0.03],
    [0.03, 0.05, 0.04],
    [0.02, 0.02, 0.08],
];

/// A fixed scorer on the support, with a tie in column 1.
pub const SUPPORT_SCORES: [[f64; 3]; 6] = [
    [0.9, 0.1, 0.0],
    [0.7, 0.3, 0.2],
    [0.5, 0.3, 0.1],
    [0.4, 0.6, 0.3],
    [0.3, 0.5, 0.6],
    [0.1, 0.2, 0.9],
];

pub fn priors() -> [f64; 3] {
    let mut p = [0.0; 3];
    for row in &JOINT {
        for c in 0..3 {
            p[c] += row[c];
        }
    }
    p
}

/// `P(x = k | y = c)`.
pub fn conditional(k: usize, c: usize) -> f64 {
    JOINT[k][c] / priors()[c]
}

/// Population pairwise risk `1/(C(C-1)) sum_i sum_{j != i} E l(f_i(x) - f_i(x'))`.
pub fn population_risk(scores: &[[f64; 3]; 6], loss: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i == j {
                continue;
            }
            for k in 0..6 {
                for l in 0..6 {
                    total += conditional(k, i) * conditional(l, j) * loss(scores[k][i] - scores[l][i]);
                }
            }
        }
    }
    total / 6.0
}

/// `n` i.i.d. draws from `JOINT`, redrawn until every class appears.
/// Returns support indices and labels.
pub fn sample_support(n: usize, r: &mut rng::Rng) -> (Vec<usize>, Vec<usize>) {
    loop {
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let mut u: f64 = r.random();
            let mut cell = (5, 2);
            'outer: for (k, row) in JOINT.iter().enumerate() {
                for (c, &p) in row.iter().enumerate() {
                    if u < p {
                        cell = (k, c);
                        break 'outer;
                    }
                    u -= p;
                }
            }
            xs.push(cell.0);
            ys.push(cell.1);
        }
        if (0..3).all(|c| ys.contains(&c)) {
            return (xs, ys);
        }
    }
}

pub fn support_score_matrix(xs: &[usize]) -> ScoreMatrix {
    ScoreMatrix::new(Array2::from_shape_fn((xs.len(), 3), |(m, c)| SUPPORT_SCORES[xs[m]][c])).unwrap()
}

/// Posterior of the Gaussian blob mixture of [`synth_blobs`] at each row.
pub fn blob_posterior(x: &Array2<f64>, rho: &[f64], separation: f64) -> Array2<f64> {
    let c = rho.len();
    let d = x.ncols();
    let means: Vec<Vec<f64>> = (0..c).map(|k| blob_mean(k, d, separation)).collect();
    let mut eta = Array2::zeros((x.nrows(), c));
    for (m, row) in x.rows().into_iter().enumerate() {
        let logits: Vec<f64> = (0..c)
            .map(|k| {
                let dot: f64 = row.iter().zip(&means[k]).map(|(a, b)| a * b).sum();
                let norm: f64 = means[k].iter().map(|v| v * v).sum();
                rho[k].ln() + dot - 0.5 * norm
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        for k in 0..c {
            eta[[m, k]] = (logits[k] - max).exp() / z;
        }
    }
    eta
}

pub fn test_mauc(model: &LinearSoftmaxModel, test: &Dataset) -> f64 {
    let idx = ClassIndex::from_labels(test.labels(), test.n_classes()).unwrap();
    mauc(&model.score(test.features()).unwrap(), &idx).unwrap()
}

/// Blob fixture split 0.8 / 0.1 / 0.1.
pub fn blob_splits(n: usize, d: usize, rho: &[f64], separation: f64, seed: u64) -> (Dataset, Dataset, Dataset) {
    let ds = synth_blobs(n, d, rho, separation, seed).unwrap();
    mauc::dataset::split_stratified(&ds, (0.8, 0.1, 0.1), seed).unwrap()
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}
