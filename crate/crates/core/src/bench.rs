//! Wall-clock comparison of the naive and fast risk evaluators.
//!
//! Each measurement discards one warm-up run, then reports the median over
//! `trials` timed runs. A run repeats the evaluation enough times to last at
//! least [`MIN_RUN_MS`] and reports the per-evaluation time.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;

use crate::dataset::{synth_uniform, ClassIndex};
use crate::kernels::dispatch_fast;
use crate::metrics::ScoreMatrix;
use crate::model::LinearSoftmaxModel;
use crate::reference::{grad_naive, risk_naive};
use crate::surrogates::SurrogateSpec;
use crate::{Error, Result};

/// Largest `N` the quadratic naive evaluator is run on.
pub const NAIVE_CAP: usize = 8192;
pub const MIN_RUN_MS: f64 = 2.0;
pub const BENCH_CSV_HEADER: &str = "loss,N,nc,d,trials,naive_ms,fast_ms,ratio";

pub const DEFAULT_SIZES: [usize; 6] = [32, 64, 128, 256, 512, 1024];
pub const DEFAULT_RHO: [f64; 5] = [0.2, 0.1, 0.2, 0.4, 0.1];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub spec: SurrogateSpec,
    pub sizes: Vec<usize>,
    pub n_classes: usize,
    pub dim: usize,
    pub rho: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Time loss and gradient together instead of the loss alone.
    pub with_grad: bool,
}

impl BenchConfig {
    pub fn new(spec: SurrogateSpec) -> Self {
        BenchConfig {
            spec,
            sizes: DEFAULT_SIZES.to_vec(),
            n_classes: DEFAULT_RHO.len(),
            dim: 100,
            rho: DEFAULT_RHO.to_vec(),
            trials: 5,
            seed: 0,
            with_grad: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("sizes must be nonempty and strictly ascending"));
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| n > NAIVE_CAP) {
            return Err(Error::invalid(format!("N = {n} exceeds the naive cap of {NAIVE_CAP}")));
        }
        if self.rho.len() != self.n_classes {
            return Err(Error::invalid(format!(
                "rho has {} entries for {} classes",
                self.rho.len(),
                self.n_classes
            )));
        }
        if self.trials == 0 || self.dim == 0 {
            return Err(Error::invalid("trials and d must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub loss: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub nc: usize,
    pub d: usize,
    pub trials: usize,
    pub naive_ms: f64,
    pub fast_ms: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub timing: &'static str,
    pub warmup_runs: usize,
    pub with_grad: bool,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{BENCH_CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6},{:.6},{:.4}",
                r.loss, r.n, r.nc, r.d, r.trials, r.naive_ms, r.fast_ms, r.ratio
            );
        }
        out
    }
}

/// Median of a nonempty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Median per-call time of `f` in milliseconds.
pub fn time_median_ms(trials: usize, mut f: impl FnMut()) -> f64 {
    let start = Instant::now();
    f();
    let warm = start.elapsed().as_secs_f64() * 1e3;
    let reps = if warm >= MIN_RUN_MS {
        1
    } else {
        (MIN_RUN_MS / warm.max(1e-6)).ceil().min(1e6) as usize
    };
    let samples: Vec<f64> = (0..trials)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..reps {
                f();
            }
            start.elapsed().as_secs_f64() * 1e3 / reps as f64
        })
        .collect();
    median(&samples)
}

/// Scores of a random linear-softmax model on uniform synthetic data.
pub fn bench_instance(n: usize, cfg: &BenchConfig) -> Result<(ScoreMatrix, ClassIndex)> {
    let seed = cfg.seed.wrapping_add(n as u64);
    let ds = synth_uniform(n, cfg.dim, &cfg.rho, seed)?;
    let idx = ClassIndex::from_labels(ds.labels(), cfg.n_classes)?;
    let init = LinearSoftmaxModel::random_init(cfg.n_classes, cfg.dim, seed)?;
    // Spread the scores: the default initialization is nearly uniform.
    let model = LinearSoftmaxModel::new(init.weights().mapv(|v| 10.0 * v), init.bias().to_owned())?;
    Ok((model.score(ds.features())?, idx))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let spec = cfg.spec;
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let (f, idx) = bench_instance(n, cfg)?;
        // Surface kernel errors before timing.
        dispatch_fast(&f, &idx, &spec, cfg.with_grad)?;
        let naive_spec = crate::kernels::effective_spec(&spec);
        let naive_ms = time_median_ms(cfg.trials, || {
            black_box(risk_naive(&f, &idx, &naive_spec).expect("validated"));
            if cfg.with_grad {
                black_box(grad_naive(&f, &idx, &naive_spec).expect("validated"));
            }
        });
        let fast_ms = time_median_ms(cfg.trials, || {
            black_box(dispatch_fast(&f, &idx, &spec, cfg.with_grad).expect("validated"));
        });
        rows.push(BenchRow {
            loss: spec.to_string(),
            n,
            nc: cfg.n_classes,
            d: cfg.dim,
            trials: cfg.trials,
            naive_ms,
            fast_ms,
            ratio: naive_ms / fast_ms,
        });
    }
    Ok(BenchReport {
        timing: "median",
        warmup_runs: 1,
        with_grad: cfg.with_grad,
        seed: cfg.seed,
        rows,
    })
}
