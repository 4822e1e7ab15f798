use crate::dataset::ClassIndex;
use crate::kernels::{Accum, FastRiskOutput, KernelPath};
use crate::metrics::ScoreMatrix;
use crate::surrogates::{Loss, SurrogateSpec};
use crate::{Error, Result};

/// Largest admissible `alpha * (max - min) / 2` over a score column. Each
/// factor is at most `N e^300`, so the product stays finite.
pub const EXP_HALF_RANGE_LIMIT: f64 = 300.0;

/// Exponential loss through the factorization
/// `sum_m sum_n D_n e^{-alpha (F_m - F_n)} = a_i b_i` with
/// `a_i = sum_{m in N_i} e^{-alpha (F_m - c)}` and
/// `b_i = sum_{n notin N_i} D_n e^{alpha (F_n - c)}`, `c` the column midpoint.
/// Exactly one exponential per present class and sample.
pub fn exp_fast(
    scores: &ScoreMatrix,
    idx: &ClassIndex,
    spec: &SurrogateSpec,
    want_grad: bool,
) -> Result<FastRiskOutput> {
    let Loss::Exp { alpha } = spec.loss() else {
        return Err(Error::invalid(format!("exp_fast called with {spec}")));
    };
    scores.check_against(idx)?;
    let f = scores.values();
    let labels = idx.labels();
    let mut acc = Accum::new(idx, want_grad);
    let z = acc.normalizer();
    let mut e = vec![0.0; idx.len()];
    for i in idx.present_classes().collect::<Vec<_>>() {
        let col = f.column(i);
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let half = alpha * (hi - lo) / 2.0;
        if half > EXP_HALF_RANGE_LIMIT {
            return Err(Error::ExpOverflow(half));
        }
        let c = lo + (hi - lo) / 2.0;
        let w = idx.pair_weights(i);
        let (mut a, mut b) = (0.0, 0.0);
        for (m, (&y, &v)) in labels.iter().zip(col.iter()).enumerate() {
            if y == i {
                e[m] = (-alpha * (v - c)).exp();
                a += e[m];
            } else {
                e[m] = (alpha * (v - c)).exp();
                b += w[m] * e[m];
            }
        }
        acc.counters_mut().loss_evals += labels.len() as u64;
        acc.set_class(i, a * b);
        if let Some(g) = acc.grad_mut() {
            for (m, &y) in labels.iter().enumerate() {
                g[[m, i]] = if y == i {
                    -z * alpha * e[m] * b
                } else {
                    z * alpha * w[m] * e[m] * a
                };
            }
        }
    }
    Ok(acc.finish(KernelPath::Exp))
}
