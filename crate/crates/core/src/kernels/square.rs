use crate::dataset::ClassIndex;
use crate::kernels::{Accum, FastRiskOutput, KernelPath};
use crate::metrics::ScoreMatrix;
use crate::surrogates::{Loss, SurrogateSpec};
use crate::{Error, Result};

/// Squared loss as a Laplacian quadratic form. With residuals
/// `r = alpha Y - F_i` every pair contributes `D_n (r_m - r_n)^2`, so per class
///
/// `sum kappa r^2 - 2 r1 r2`, `kappa = n_i D (1 - Y) + (P - 1)/n_i Y`,
/// `r2 = Y^T r`, `r1 = r^T (D (1 - Y))`.
///
/// Residuals are centered first; the pairwise differences do not change.
pub fn square_fast(
    scores: &ScoreMatrix,
    idx: &ClassIndex,
    spec: &SurrogateSpec,
    want_grad: bool,
) -> Result<FastRiskOutput> {
    let Loss::Squared { alpha } = spec.loss() else {
        return Err(Error::invalid(format!("square_fast called with {spec}")));
    };
    scores.check_against(idx)?;
    let f = scores.values();
    let labels = idx.labels();
    let others = (idx.n_present() - 1) as f64;
    let mut acc = Accum::new(idx, want_grad);
    let z = acc.normalizer();
    let mut r = vec![0.0; idx.len()];
    let mut kappa = vec![0.0; idx.len()];
    for i in idx.present_classes().collect::<Vec<_>>() {
        let col = f.column(i);
        let w = idx.pair_weights(i);
        let ni = idx.counts()[i] as f64;
        let (mut pos_sum, mut neg_sum) = (0.0, 0.0);
        for (m, &y) in labels.iter().enumerate() {
            if y == i {
                r[m] = alpha - col[m];
                pos_sum += r[m];
            } else {
                r[m] = -col[m];
                neg_sum += w[m] * r[m];
            }
        }
        // Negative weights sum to (P - 1)/n_i.
        let shift = 0.5 * (pos_sum / ni + neg_sum * ni / others);
        let (mut quad, mut r1, mut r2) = (0.0, 0.0, 0.0);
        for (m, &y) in labels.iter().enumerate() {
            r[m] -= shift;
            if y == i {
                kappa[m] = others / ni;
                r2 += r[m];
            } else {
                kappa[m] = ni * w[m];
                r1 += w[m] * r[m];
            }
            quad += kappa[m] * r[m] * r[m];
        }
        acc.counters_mut().loss_evals += labels.len() as u64;
        acc.set_class(i, quad - 2.0 * r1 * r2);
        if let Some(g) = acc.grad_mut() {
            for (m, &y) in labels.iter().enumerate() {
                let cross = if y == i { r1 } else { r2 * w[m] };
                g[[m, i]] = -2.0 * z * (kappa[m] * r[m] - cross);
            }
        }
    }
    Ok(acc.finish(KernelPath::Squared))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::OneHot;
    use crate::reference::{grad_naive, risk_naive};
    use ndarray::array;

    #[test]
    fn perfect_fit_is_a_fixed_point() {
        let labels = [0, 2, 1, 1, 0, 2, 2];
        let alpha = 1.5;
        let f = ScoreMatrix::new(OneHot::new(&labels, 3).matrix().mapv(|v| alpha * v)).unwrap();
        let idx = ClassIndex::from_labels(&labels, 3).unwrap();
        let out = square_fast(&f, &idx, &SurrogateSpec::squared(alpha).unwrap(), true).unwrap();
        assert!(out.loss.value.abs() < 1e-15);
        assert!(out.grad.unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn calibrated_against_pairwise_definition() {
        let f = ScoreMatrix::new(array![[0.8, 0.2], [0.2, 0.8]]).unwrap();
        let idx = ClassIndex::from_labels(&[0, 1], 2).unwrap();
        let out = square_fast(&f, &idx, &SurrogateSpec::squared(1.0).unwrap(), false).unwrap();
        assert!((out.loss.value - 0.16).abs() < 1e-15);
    }

    #[test]
    fn matches_reference_on_fixture() {
        let f = ScoreMatrix::new(array![
            [0.7, 0.2, 0.1],
            [0.3, 0.4, 0.3],
            [0.1, 0.1, 0.8],
            [0.5, 0.25, 0.25],
            [0.2, 0.6, 0.2]
        ])
        .unwrap();
        let idx = ClassIndex::from_labels(&[0, 1, 2, 0, 1], 3).unwrap();
        let spec = SurrogateSpec::squared(0.8).unwrap();
        let out = square_fast(&f, &idx, &spec, true).unwrap();
        let naive = risk_naive(&f, &idx, &spec).unwrap().value;
        assert!((out.loss.value - naive).abs() <= 1e-13 * naive);
        assert!(out.grad.unwrap().max_abs_diff(&grad_naive(&f, &idx, &spec).unwrap()) < 1e-14);
        assert_eq!(out.counters.loss_evals, 15);
    }
}
