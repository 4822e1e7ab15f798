use crate::dataset::ClassIndex;
use crate::kernels::{Accum, FastRiskOutput, KernelPath};
use crate::metrics::ScoreMatrix;
use crate::surrogates::{binomial, BernsteinCoeffs, SurrogateSpec};
use crate::{Error, Result};

/// Risk of the Bernstein approximation `l_K(t) = sum_j c_j u^j`,
/// `u = (1 + t)/2`, through separable moments.
///
/// With `a_m = 1/2 + F[m,i]` and `b_n = 1/2 - F[n,i]`, `u = (a_m + b_n)/2`, so
/// `u^j = 2^-j sum_k binom(j,k) a^k b^(j-k)` and per class
///
/// `sum_m sum_n D_n l_K = sum_r G_r M_r`, `M_r = sum_n D_n b_n^r`,
/// `G_r = sum_k A_k w(k,r)`, `A_k = sum_m a_m^k`,
/// `w(k,r) = c_{k+r} binom(k+r,k) 2^-(k+r)`.
///
/// Scores must lie in `[0, 1]`.
pub fn general_fast(
    scores: &ScoreMatrix,
    idx: &ClassIndex,
    spec: &SurrogateSpec,
    want_grad: bool,
) -> Result<FastRiskOutput> {
    scores.check_against(idx)?;
    let f = scores.values();
    if let Some(&bad) = f.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange {
            value: bad,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let coeffs = BernsteinCoeffs::fit(&spec.loss(), spec.degree())?;
    let c = coeffs.coeffs();
    let k_max = c.len() - 1;
    // w[k][r] for k + r <= K.
    let w: Vec<Vec<f64>> = (0..=k_max)
        .map(|k| {
            (0..=k_max - k)
                .map(|r| {
                    let j = k + r;
                    c[j] * binomial(j as u32, k as u32) * 0.5f64.powi(j as i32)
                })
                .collect()
        })
        .collect();

    let labels = idx.labels();
    let mut acc = Accum::new(idx, want_grad);
    let z = acc.normalizer();
    let mut a_mom = vec![0.0; k_max + 1];
    let mut m_mom = vec![0.0; k_max + 1];
    let mut g_mom = vec![0.0; k_max + 1];
    let mut b_mom = vec![0.0; k_max + 1];
    for i in idx.present_classes().collect::<Vec<_>>() {
        let col = f.column(i);
        let d = idx.pair_weights(i);
        a_mom.fill(0.0);
        m_mom.fill(0.0);
        for (m, &y) in labels.iter().enumerate() {
            let (x, weight, target) = if y == i {
                (0.5 + col[m], 1.0, &mut a_mom)
            } else {
                (0.5 - col[m], d[m], &mut m_mom)
            };
            let mut p = weight;
            for t in target.iter_mut() {
                *t += p;
                p *= x;
            }
        }
        acc.counters_mut().loss_evals += labels.len() as u64;
        for r in 0..=k_max {
            g_mom[r] = (0..=k_max - r).map(|k| a_mom[k] * w[k][r]).sum();
        }
        let total: f64 = g_mom.iter().zip(&m_mom).map(|(g, m)| g * m).sum();
        acc.set_class(i, total);

        if let Some(grad) = acc.grad_mut() {
            for k in 0..=k_max {
                b_mom[k] = (0..=k_max - k).map(|r| w[k][r] * m_mom[r]).sum();
            }
            // d/da sum_k A_k B_k and d/db sum_r G_r b^r as Horner polynomials.
            let horner_deriv = |poly: &[f64], x: f64| {
                poly.iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (p, &v)| acc * x + p as f64 * v)
            };
            for (m, &y) in labels.iter().enumerate() {
                grad[[m, i]] = if y == i {
                    z * horner_deriv(&b_mom, 0.5 + col[m])
                } else {
                    -z * d[m] * horner_deriv(&g_mom, 0.5 - col[m])
                };
            }
        }
    }
    Ok(acc.finish(KernelPath::Bernstein))
}
