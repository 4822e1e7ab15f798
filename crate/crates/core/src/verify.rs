//! Randomized equivalence checks of a fast kernel against the brute-force
//! reference.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dataset::ClassIndex;
use crate::kernels::{dispatch_fast, effective_spec, FastRiskOutput};
use crate::metrics::ScoreMatrix;
use crate::reference::{grad_naive, risk_naive};
use crate::rng;
use crate::surrogates::SurrogateSpec;
use crate::{Error, Result};

pub const LOSS_REL_TOL: f64 = 1e-9;
pub const LOSS_ABS_TOL_AT_ZERO: f64 = 1e-12;
pub const GRAD_ABS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub trials: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub max_classes: usize,
    /// Smallest class proportion the generator aims for.
    pub min_rho: f64,
    /// Probability that a score is replaced by another sample's score.
    pub dup_prob: f64,
    /// Trial `t` uses instance seed `seed + t`.
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            trials: 200,
            min_n: 8,
            max_n: 512,
            max_classes: 7,
            min_rho: 0.02,
            dup_prob: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialResult {
    pub seed: u64,
    pub n: usize,
    pub n_classes: usize,
    pub naive_loss: f64,
    pub fast_loss: f64,
    /// `|fast - naive| / |naive|`, or the absolute gap when the oracle is 0.
    pub loss_dev: f64,
    pub grad_dev: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub spec: String,
    pub trials: usize,
    pub worst_loss_dev: f64,
    pub worst_grad_dev: f64,
    pub failures: Vec<TrialResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// A random kernel input: `N` in `[min_n, max_n]`, `N_C` in
/// `[2, max_classes]`, skewed class sizes, duplicated scores. Scores lie in
/// `[0, 1]` when `unit_scores` is set and are Gaussian otherwise.
pub fn random_instance(cfg: &VerifyConfig, seed: u64, unit_scores: bool) -> Result<(ScoreMatrix, ClassIndex)> {
    if cfg.min_n < 2 || cfg.max_n < cfg.min_n || cfg.max_classes < 2 {
        return Err(Error::invalid(
            "verify needs 2 <= min_n <= max_n and at least 2 classes",
        ));
    }
    let mut r = rng::seeded(seed);
    let n = r.random_range(cfg.min_n..=cfg.max_n);
    let c = r.random_range(2..=cfg.max_classes.min(n));
    let raw: Vec<f64> = (0..c).map(|_| cfg.min_rho + r.random::<f64>().powi(3)).collect();
    let total: f64 = raw.iter().sum();
    let rho: Vec<f64> = raw.iter().map(|w| w / total).collect();
    // At least one sample per class; the largest class absorbs the rest.
    let spare = n - c;
    let mut counts: Vec<usize> = rho.iter().map(|p| 1 + (p * spare as f64).floor() as usize).collect();
    let big = (0..c).max_by(|&a, &b| rho[a].total_cmp(&rho[b])).expect("c >= 2");
    counts[big] += n - counts.iter().sum::<usize>();
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(k, &m)| std::iter::repeat_n(k, m))
        .collect();
    labels.shuffle(&mut r);

    let scale = if unit_scores {
        1.0
    } else {
        0.25 + 2.75 * r.random::<f64>()
    };
    let mut f = Array2::from_shape_simple_fn((n, c), || {
        if unit_scores {
            r.random::<f64>()
        } else {
            let z: f64 = StandardNormal.sample(&mut r);
            scale * z
        }
    });
    for i in 0..c {
        for m in 0..n {
            if r.random::<f64>() < cfg.dup_prob {
                let src = r.random_range(0..n);
                f[[m, i]] = f[[src, i]];
            }
        }
    }
    Ok((ScoreMatrix::new(f)?, ClassIndex::from_labels(&labels, c)?))
}

/// Compares one kernel output with the oracle for `spec`.
pub fn compare(
    scores: &ScoreMatrix,
    idx: &ClassIndex,
    spec: &SurrogateSpec,
    fast: &FastRiskOutput,
) -> Result<(f64, f64, f64, bool)> {
    let naive = risk_naive(scores, idx, spec)?.value;
    let gap = (fast.loss.value - naive).abs();
    let (loss_dev, loss_ok) = if naive == 0.0 {
        (gap, gap <= LOSS_ABS_TOL_AT_ZERO)
    } else {
        let rel = gap / naive.abs();
        (rel, rel <= LOSS_REL_TOL)
    };
    let grad_dev = match &fast.grad {
        Some(g) => g.max_abs_diff(&grad_naive(scores, idx, spec)?),
        None => f64::INFINITY,
    };
    Ok((naive, loss_dev, grad_dev, loss_ok && grad_dev <= GRAD_ABS_TOL))
}

/// Runs `cfg.trials` random instances through `kernel` and the oracle of
/// the spec the fast path evaluates (the Bernstein approximation for losses
/// without an exact kernel).
pub fn verify_kernel<K>(spec: &SurrogateSpec, cfg: &VerifyConfig, kernel: K) -> Result<VerifyReport>
where
    K: Fn(&ScoreMatrix, &ClassIndex, &SurrogateSpec, bool) -> Result<FastRiskOutput>,
{
    let oracle = effective_spec(spec);
    let unit = oracle.is_bernstein();
    let mut report = VerifyReport {
        spec: spec.to_string(),
        trials: cfg.trials,
        worst_loss_dev: 0.0,
        worst_grad_dev: 0.0,
        failures: Vec::new(),
    };
    for t in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(t as u64);
        let (f, idx) = random_instance(cfg, seed, unit)?;
        let fast = kernel(&f, &idx, spec, true)?;
        let (naive, loss_dev, grad_dev, passed) = compare(&f, &idx, &oracle, &fast)?;
        report.worst_loss_dev = report.worst_loss_dev.max(loss_dev);
        report.worst_grad_dev = report.worst_grad_dev.max(grad_dev);
        if !passed {
            report.failures.push(TrialResult {
                seed,
                n: idx.len(),
                n_classes: idx.n_classes(),
                naive_loss: naive,
                fast_loss: fast.loss.value,
                loss_dev,
                grad_dev,
                passed,
            });
        }
    }
    Ok(report)
}

/// [`verify_kernel`] on [`dispatch_fast`].
pub fn verify(spec: &SurrogateSpec, cfg: &VerifyConfig) -> Result<VerifyReport> {
    verify_kernel(spec, cfg, dispatch_fast)
}
