use std::cmp::Ordering;

use ndarray::ArrayView1;

use crate::dataset::ClassIndex;
use crate::kernels::{Accum, FastRiskOutput, KernelPath};
use crate::metrics::ScoreMatrix;
use crate::surrogates::{Loss, SurrogateSpec};
use crate::{Error, Result};

/// Sorted positives/negatives of one class and their activation prefixes.
///
/// `cut[k]` is the number of leading entries of `neg_order` whose hinge
/// margin against `pos_order[k]` is violated, i.e. `F[pos] - F[neg] < alpha`.
/// Along the descending positives these sets are nested, so `cut` is
/// nondecreasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HingeIndex {
    pub pos_order: Vec<usize>,
    pub neg_order: Vec<usize>,
    pub cut: Vec<usize>,
    /// Margin comparisons made by the sweep.
    pub sweep_steps: u64,
}

fn descending(col: ArrayView1<'_, f64>) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b))
}

/// Builds the activation prefixes of class `i` with a two-pointer sweep.
pub fn hinge_index(col: ArrayView1<'_, f64>, idx: &ClassIndex, i: usize, alpha: f64) -> HingeIndex {
    let mut pos_order = idx.members(i).to_vec();
    let mut neg_order: Vec<usize> = idx
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &y)| y != i)
        .map(|(n, _)| n)
        .collect();
    pos_order.sort_unstable_by(descending(col));
    neg_order.sort_unstable_by(descending(col));

    let mut cut = Vec::with_capacity(pos_order.len());
    let mut ptr = 0;
    let mut steps = 0u64;
    for &m in &pos_order {
        let s = col[m];
        loop {
            if ptr == neg_order.len() {
                break;
            }
            steps += 1;
            if s - col[neg_order[ptr]] < alpha {
                ptr += 1;
            } else {
                break;
            }
        }
        cut.push(ptr);
    }
    HingeIndex {
        pos_order,
        neg_order,
        cut,
        sweep_steps: steps,
    }
}

/// Hinge loss by prefix sums over the activation sets: for the `k`-th
/// positive `sum_{n active} D_n (alpha - s_k + F_n) = delta_k (alpha - s_k) + Delta_k`
/// with `delta_k = sum D_n` and `Delta_k = sum D_n F_n` over the prefix.
pub fn hinge_fast(
    scores: &ScoreMatrix,
    idx: &ClassIndex,
    spec: &SurrogateSpec,
    want_grad: bool,
) -> Result<FastRiskOutput> {
    let Loss::Hinge { alpha } = spec.loss() else {
        return Err(Error::invalid(format!("hinge_fast called with {spec}")));
    };
    scores.check_against(idx)?;
    let f = scores.values();
    let mut acc = Accum::new(idx, want_grad);
    let z = acc.normalizer();
    for i in idx.present_classes().collect::<Vec<_>>() {
        let col = f.column(i);
        let hi = hinge_index(col, idx, i, alpha);
        acc.counters_mut().sweep_steps += hi.sweep_steps;
        let w = idx.pair_weights(i);
        // Centering keeps delta_k (alpha - s_k) and Delta_k small.
        let c = match (hi.pos_order.first(), hi.neg_order.first()) {
            (Some(&p), Some(&n)) => 0.5 * (col[p] + col[n]),
            _ => 0.0,
        };
        let mut delta = 0.0;
        let mut delta_f = 0.0;
        let mut q = 0;
        let mut total = 0.0;
        let mut deltas = Vec::with_capacity(hi.cut.len());
        for (&m, &cut) in hi.pos_order.iter().zip(&hi.cut) {
            while q < cut {
                let n = hi.neg_order[q];
                delta += w[n];
                delta_f += w[n] * (col[n] - c);
                q += 1;
            }
            if cut > 0 {
                total += delta * (alpha - (col[m] - c)) + delta_f;
            }
            deltas.push(delta);
        }
        acc.set_class(i, total);
        if let Some(g) = acc.grad_mut() {
            // covered[q] = number of positives whose prefix contains position q.
            let mut covered = vec![0i64; hi.neg_order.len() + 1];
            for (k, &m) in hi.pos_order.iter().enumerate() {
                g[[m, i]] = -z * deltas[k];
                covered[0] += 1;
                covered[hi.cut[k]] -= 1;
            }
            let mut running = 0i64;
            for (q, &n) in hi.neg_order.iter().enumerate() {
                running += covered[q];
                g[[n, i]] = z * w[n] * running as f64;
            }
        }
    }
    Ok(acc.finish(KernelPath::Hinge))
}
