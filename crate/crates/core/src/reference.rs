//! Quadratic-time evaluation of the pairwise empirical risk
//!
//! `R = 1/(P(P-1)) sum_i sum_{j != i} sum_{m in N_i} sum_{n in N_j} l(F[m,i] - F[n,i]) / (n_i n_j)`
//!
//! and its gradient with respect to the score matrix. `P` is the number of
//! classes present in the index (all of them outside mini-batches). These
//! are the oracles for the fast kernels.

use ndarray::{Array2, ArrayView2};

use crate::dataset::ClassIndex;
use crate::metrics::ScoreMatrix;
use crate::surrogates::SurrogateSpec;
use crate::{Error, Result};

/// An empirical risk value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskValue {
    pub value: f64,
    /// Whether the `1/(P(P-1))` normalizer has been applied.
    pub normalized: bool,
}

impl RiskValue {
    pub fn normalized(value: f64) -> Self {
        RiskValue {
            value,
            normalized: true,
        }
    }

    /// The value without the class-pair normalizer.
    pub fn unnormalized(&self, idx: &ClassIndex) -> f64 {
        if self.normalized {
            self.value / idx.normalizer()
        } else {
            self.value
        }
    }
}

/// `dR/dF`, same shape as the score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradient(Array2<f64>);

impl ScoreGradient {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gradient has non-finite entries"));
        }
        Ok(ScoreGradient(values))
    }

    pub(crate) fn from_raw(values: Array2<f64>) -> Self {
        ScoreGradient(values)
    }

    pub fn zeros(n: usize, n_classes: usize) -> Self {
        ScoreGradient(Array2::zeros((n, n_classes)))
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Largest entrywise absolute difference.
    pub fn max_abs_diff(&self, other: &ScoreGradient) -> f64 {
        assert_eq!(self.0.dim(), other.0.dim(), "gradient shapes differ");
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-class unnormalized sums `sum_{m in N_i} sum_{n notin N_i} D_n l(...)`
/// and the number of loss evaluations performed.
fn pair_sums(scores: &ScoreMatrix, idx: &ClassIndex, loss: impl Fn(f64) -> f64) -> Result<(Vec<f64>, u64)> {
    scores.check_against(idx)?;
    let f = scores.values();
    let labels = idx.labels();
    let mut evals = 0u64;
    let per_class = (0..idx.n_classes())
        .map(|i| {
            let w = idx.pair_weights(i);
            let mut acc = CompensatedSum::default();
            for &m in idx.members(i) {
                let s = f[[m, i]];
                for (n, &y) in labels.iter().enumerate() {
                    if y != i {
                        acc.add(w[n] * loss(s - f[[n, i]]));
                        evals += 1;
                    }
                }
            }
            acc.total()
        })
        .collect();
    Ok((per_class, evals))
}

fn finish(per_class: &[f64], idx: &ClassIndex) -> RiskValue {
    let mut acc = CompensatedSum::default();
    for &v in per_class {
        acc.add(v);
    }
    RiskValue::normalized(idx.normalizer() * acc.total())
}

/// Brute-force empirical risk: exactly `sum_i n_i (N - n_i)` loss evaluations.
pub fn risk_naive(scores: &ScoreMatrix, idx: &ClassIndex, spec: &SurrogateSpec) -> Result<RiskValue> {
    Ok(risk_naive_counted(scores, idx, spec)?.0)
}

/// [`risk_naive`] together with the number of loss evaluations.
pub fn risk_naive_counted(scores: &ScoreMatrix, idx: &ClassIndex, spec: &SurrogateSpec) -> Result<(RiskValue, u64)> {
    let loss = spec.pointwise()?;
    let (per_class, evals) = pair_sums(scores, idx, |t| loss.eval(t))?;
    Ok((finish(&per_class, idx), evals))
}

/// Normalized per-class contributions; they sum to the risk.
pub fn risk_naive_per_class(scores: &ScoreMatrix, idx: &ClassIndex, spec: &SurrogateSpec) -> Result<Vec<f64>> {
    let loss = spec.pointwise()?;
    let (per_class, _) = pair_sums(scores, idx, |t| loss.eval(t))?;
    let z = idx.normalizer();
    Ok(per_class.into_iter().map(|v| v * z).collect())
}

/// Risk under the 0-1 mis-ranking indicator, ties counted `1/2`. Equals
/// `1 - mauc_ovo(pair_auc_all(F, idx))`.
pub fn risk_zero_one(scores: &ScoreMatrix, idx: &ClassIndex) -> Result<RiskValue> {
    let (per_class, _) = pair_sums(scores, idx, |t| {
        if t < 0.0 {
            1.0
        } else if t == 0.0 {
            0.5
        } else {
            0.0
        }
    })?;
    Ok(finish(&per_class, idx))
}

/// Brute-force gradient of [`risk_naive`] with respect to `F`.
pub fn grad_naive(scores: &ScoreMatrix, idx: &ClassIndex, spec: &SurrogateSpec) -> Result<ScoreGradient> {
    scores.check_against(idx)?;
    let loss = spec.pointwise()?;
    let f = scores.values();
    let labels = idx.labels();
    let z = idx.normalizer();
    let mut g = Array2::<f64>::zeros(f.dim());
    for i in 0..idx.n_classes() {
        let w = idx.pair_weights(i);
        for &m in idx.members(i) {
            let s = f[[m, i]];
            let mut pos = CompensatedSum::default();
            for (n, &y) in labels.iter().enumerate() {
                if y != i {
                    let c = w[n] * loss.deriv(s - f[[n, i]]);
                    pos.add(c);
                    g[[n, i]] -= z * c;
                }
            }
            g[[m, i]] += z * pos.total();
        }
    }
    Ok(ScoreGradient::from_raw(g))
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Bayes-optimal scores: with `s_i = eta_i / p_i`,
/// `f_i = sigmoid(s_i / sum_{j != i} s_j)`, or `1` where `eta_i = 1`.
pub fn bayes_scores(eta: ArrayView2<'_, f64>, prior: &[f64]) -> Result<ScoreMatrix> {
    let (n, c) = eta.dim();
    if prior.len() != c {
        return Err(Error::shape(format!(
            "posterior has {c} columns but {} priors were given",
            prior.len()
        )));
    }
    if prior.iter().any(|&p| !(p > 0.0)) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("priors must be positive and sum to 1"));
    }
    let mut out = Array2::<f64>::zeros((n, c));
    for (r, row) in eta.rows().into_iter().enumerate() {
        if row.iter().any(|&e| !(0.0..=1.0).contains(&e)) || (row.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("posterior row {r} is not a distribution")));
        }
        let s: Vec<f64> = row.iter().zip(prior).map(|(e, p)| e / p).collect();
        let total: f64 = s.iter().sum();
        for i in 0..c {
            out[[r, i]] = if row[i] == 1.0 {
                1.0
            } else {
                let rest = total - s[i];
                if !(rest > 0.0) {
                    return Err(Error::invalid(format!(
                        "posterior row {r}: class {i} has no competing mass"
                    )));
                }
                sigmoid(s[i] / rest)
            };
        }
    }
    ScoreMatrix::new(out)
}
