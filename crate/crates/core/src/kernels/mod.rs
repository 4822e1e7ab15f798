//! Fast evaluation of the pairwise empirical risk and its score gradient.
//!
//! | loss      | kernel        | cost                  |
//! |-----------|---------------|-----------------------|
//! | exp       | [`exp_fast`]    | `O(N N_C)`            |
//! | hinge     | [`hinge_fast`]  | `O(N_C N log N)`      |
//! | squared   | [`square_fast`] | `O(N N_C)`            |
//! | others    | [`general_fast`] on the degree-`K` Bernstein approximation | `O(K N N_C + K^2 N_C)` |
//!
//! All kernels agree with [`crate::reference`] up to rounding.

mod bernstein;
mod exp;
mod hinge;
mod square;

pub use bernstein::general_fast;
pub use exp::{exp_fast, EXP_HALF_RANGE_LIMIT};
pub use hinge::{hinge_fast, hinge_index, HingeIndex};
pub use square::square_fast;

use ndarray::Array2;

use crate::dataset::ClassIndex;
use crate::metrics::ScoreMatrix;
use crate::reference::{self, CompensatedSum, RiskValue, ScoreGradient};
use crate::surrogates::{Loss, SurrogateSpec};
use crate::Result;

/// Work counters, used to witness the complexity of each kernel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KernelCounters {
    /// Pointwise loss (or exponential / moment) evaluations.
    pub loss_evals: u64,
    /// Comparisons made by the hinge two-pointer sweep.
    pub sweep_steps: u64,
}

/// Which evaluator produced a [`FastRiskOutput`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelPath {
    Exp,
    Hinge,
    Squared,
    Bernstein,
    Naive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FastRiskOutput {
    pub loss: RiskValue,
    pub grad: Option<ScoreGradient>,
    /// Normalized contribution of each class; absent classes contribute 0.
    pub per_class: Vec<f64>,
    pub counters: KernelCounters,
    pub path: KernelPath,
}

/// Per-kernel accumulator shared by the implementations.
pub(crate) struct Accum {
    per_class: Vec<f64>,
    grad: Option<Array2<f64>>,
    counters: KernelCounters,
    normalizer: f64,
}

impl Accum {
    pub(crate) fn new(idx: &ClassIndex, want_grad: bool) -> Self {
        let (n, c) = (idx.len(), idx.n_classes());
        Accum {
            per_class: vec![0.0; c],
            grad: want_grad.then(|| Array2::zeros((n, c))),
            counters: KernelCounters::default(),
            normalizer: idx.normalizer(),
        }
    }

    pub(crate) fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub(crate) fn grad_mut(&mut self) -> Option<&mut Array2<f64>> {
        self.grad.as_mut()
    }

    pub(crate) fn set_class(&mut self, i: usize, unnormalized: f64) {
        self.per_class[i] = self.normalizer * unnormalized;
    }

    pub(crate) fn counters_mut(&mut self) -> &mut KernelCounters {
        &mut self.counters
    }

    pub(crate) fn finish(self, path: KernelPath) -> FastRiskOutput {
        let mut total = CompensatedSum::default();
        for &v in &self.per_class {
            total.add(v);
        }
        FastRiskOutput {
            loss: RiskValue::normalized(total.total()),
            grad: self.grad.map(ScoreGradient::from_raw),
            per_class: self.per_class,
            counters: self.counters,
            path,
        }
    }
}

/// Routes to the matching fast kernel. Losses without an exact kernel
/// (logit, q-hinge, generalized hinge, distance-weighted) are evaluated on
/// their Bernstein approximation of degree `spec.degree()`.
pub fn dispatch_fast(
    scores: &ScoreMatrix,
    idx: &ClassIndex,
    spec: &SurrogateSpec,
    want_grad: bool,
) -> Result<FastRiskOutput> {
    if spec.is_bernstein() || !spec.loss().has_exact_kernel() {
        return general_fast(scores, idx, &spec.as_bernstein(), want_grad);
    }
    match spec.loss() {
        Loss::Exp { .. } => exp_fast(scores, idx, spec, want_grad),
        Loss::Hinge { .. } => hinge_fast(scores, idx, spec, want_grad),
        Loss::Squared { .. } => square_fast(scores, idx, spec, want_grad),
        _ => unreachable!("every loss without an exact kernel is routed above"),
    }
}

/// [`dispatch_fast`], or the brute-force reference when `force_naive` is set.
pub fn dispatch(
    scores: &ScoreMatrix,
    idx: &ClassIndex,
    spec: &SurrogateSpec,
    want_grad: bool,
    force_naive: bool,
) -> Result<FastRiskOutput> {
    if !force_naive {
        return dispatch_fast(scores, idx, spec, want_grad);
    }
    let (loss, evals) = reference::risk_naive_counted(scores, idx, spec)?;
    let grad = if want_grad {
        Some(reference::grad_naive(scores, idx, spec)?)
    } else {
        None
    };
    Ok(FastRiskOutput {
        loss,
        grad,
        per_class: reference::risk_naive_per_class(scores, idx, spec)?,
        counters: KernelCounters {
            loss_evals: evals,
            sweep_steps: 0,
        },
        path: KernelPath::Naive,
    })
}

/// The spec the fast path actually evaluates: the Bernstein approximation
/// for losses routed through [`general_fast`], the spec itself otherwise.
pub fn effective_spec(spec: &SurrogateSpec) -> SurrogateSpec {
    if spec.is_bernstein() || !spec.loss().has_exact_kernel() {
        spec.as_bernstein()
    } else {
        *spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (ScoreMatrix, ClassIndex) {
        let f = ndarray::array![[0.7, 0.2, 0.1], [0.3, 0.4, 0.3], [0.1, 0.1, 0.8], [0.5, 0.25, 0.25]];
        (
            ScoreMatrix::new(f).unwrap(),
            ClassIndex::from_labels(&[0, 1, 2, 0], 3).unwrap(),
        )
    }

    #[test]
    fn routing() {
        let (f, idx) = fixture();
        let path = |s: &str| dispatch_fast(&f, &idx, &s.parse().unwrap(), false).unwrap().path;
        assert_eq!(path("exp"), KernelPath::Exp);
        assert_eq!(path("hinge"), KernelPath::Hinge);
        assert_eq!(path("squared"), KernelPath::Squared);
        assert_eq!(path("logit:K=12"), KernelPath::Bernstein);
        assert_eq!(path("bernstein:base=exp,K=8"), KernelPath::Bernstein);
        let naive = dispatch(&f, &idx, &"exp".parse().unwrap(), true, true).unwrap();
        assert_eq!(naive.path, KernelPath::Naive);
        assert!(naive.grad.is_some());
    }

    #[test]
    fn routed_logit_matches_its_approximation() {
        let (f, idx) = fixture();
        let spec: SurrogateSpec = "logit:K=12".parse().unwrap();
        let fast = dispatch_fast(&f, &idx, &spec, false).unwrap();
        let naive = reference::risk_naive(&f, &idx, &effective_spec(&spec)).unwrap();
        assert!((fast.loss.value - naive.value).abs() <= 1e-12 * naive.value);
    }
}
