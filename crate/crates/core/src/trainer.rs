//! Empirical surrogate risk minimization for [`LinearSoftmaxModel`].
//!
//! Objective per step: `R(f) + lambda ||W||_F^2` on the current batch, with
//! the risk and its score gradient from [`dispatch_fast`]. Updates use
//! Nesterov momentum in lookahead form:
//!
//! `v <- mu v - lr g`, `theta <- theta + mu v - lr g`.
//!
//! The learning rate is multiplied by `lr_decay` after every epoch.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::dataset::{ClassIndex, Dataset};
use crate::kernels::dispatch_fast;
use crate::metrics::mauc;
use crate::model::LinearSoftmaxModel;
use crate::rng;
use crate::surrogates::SurrogateSpec;
use crate::{Error, Result};

/// How many training samples enter each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batch {
    Full,
    /// Stratified mini-batches of about this many samples.
    Size(usize),
}

impl FromStr for Batch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Batch::Full),
            other => match other.parse::<usize>() {
                Ok(n) if n > 0 => Ok(Batch::Size(n)),
                _ => Err(Error::invalid(format!(
                    "batch must be \"full\" or a positive integer, got {s:?}"
                ))),
            },
        }
    }
}

impl fmt::Display for Batch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Batch::Full => f.write_str("full"),
            Batch::Size(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Weight decay `lambda` on `W` (the bias is not regularized).
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch: Batch,
    pub lr_decay: f64,
    pub seed: u64,
    /// Validation MAUC is computed every this many epochs and at the end.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1.0,
            momentum: 0.9,
            weight_decay: 1e-4,
            epochs: 200,
            batch: Batch::Full,
            lr_decay: 1.0,
            seed: 0,
            eval_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be a nonnegative number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be nonnegative");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr decay must lie in (0, 1]");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        Ok(())
    }
}

/// One epoch of a [`TrainTrace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    /// Full training objective after the epoch's updates.
    pub risk: f64,
    pub val_mauc: Option<f64>,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub weight_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

pub const TRACE_CSV_HEADER: &str = "epoch,risk,val_mauc,lr";

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRACE_CSV_HEADER}\n");
        for r in &self.records {
            let v = r.val_mauc.map(|v| format!("{v:.10}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:.12e},{v},{:.6e}", r.epoch, r.risk, r.lr);
        }
        out
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Epoch with the highest validation MAUC (earliest on ties).
    pub fn best_validation(&self) -> Option<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.val_mauc.map(|v| (r.epoch, v)))
            .fold(None, |best, (e, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((e, v)),
            })
    }
}

type ParamGrad = (Array2<f64>, Array1<f64>);

/// The per-batch objective whose gradient the optimizer follows.
trait Objective {
    /// Returns the data term and its `(dW, db)` gradient.
    fn eval(
        &self,
        model: &LinearSoftmaxModel,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
        want_grad: bool,
    ) -> Result<(f64, Option<ParamGrad>)>;
}

struct PairwiseRisk(SurrogateSpec);

impl Objective for PairwiseRisk {
    fn eval(
        &self,
        model: &LinearSoftmaxModel,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
        want_grad: bool,
    ) -> Result<(f64, Option<ParamGrad>)> {
        let idx = ClassIndex::from_labels_partial(labels, model.n_classes())?;
        let scores = model.score(x)?;
        let out = dispatch_fast(&scores, &idx, &self.0, want_grad)?;
        let grads = match out.grad {
            Some(g) => Some(model.backprop_with_scores(x, &scores, &g)?),
            None => None,
        };
        Ok((out.loss.value, grads))
    }
}

struct CrossEntropy;

impl Objective for CrossEntropy {
    fn eval(
        &self,
        model: &LinearSoftmaxModel,
        x: ArrayView2<'_, f64>,
        labels: &[usize],
        want_grad: bool,
    ) -> Result<(f64, Option<ParamGrad>)> {
        let z = model.logits(x)?;
        let n = labels.len() as f64;
        let mut loss = 0.0;
        let mut dlogits = Array2::<f64>::zeros(z.dim());
        for ((row, &y), mut d) in z.rows().into_iter().zip(labels).zip(dlogits.rows_mut()) {
            let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            for (k, dk) in d.iter_mut().enumerate() {
                *dk = ((row[k] - lse).exp() - if k == y { 1.0 } else { 0.0 }) / n;
            }
        }
        let grads = if want_grad {
            Some(model.backprop_logits(x, dlogits.view())?)
        } else {
            None
        };
        Ok((loss / n, grads))
    }
}

/// Splits `0..n` into stratified batches: each class is shuffled and dealt
/// over the batches in contiguous slices starting at a random batch, so every
/// batch receives a proportional share (at least one sample of each class
/// that has as many samples as there are batches).
fn stratified_batches(labels: &[usize], n_classes: usize, size: usize, r: &mut rng::Rng) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    let n_batches = n.div_ceil(size).max(1);
    let mut by_class = vec![Vec::new(); n_classes];
    for (m, &y) in labels.iter().enumerate() {
        by_class[y].push(m);
    }
    for _attempt in 0..10 {
        let mut batches = vec![Vec::new(); n_batches];
        for members in &mut by_class {
            members.shuffle(r);
            let nc = members.len();
            let offset = r.random_range(0..n_batches);
            for (b, batch) in batches.iter_mut().enumerate() {
                let slot = (b + offset) % n_batches;
                batch.extend_from_slice(&members[slot * nc / n_batches..(slot + 1) * nc / n_batches]);
            }
        }
        let degenerate = batches.iter().any(|batch| {
            let mut seen = vec![false; n_classes];
            batch.iter().for_each(|&m| seen[labels[m]] = true);
            seen.iter().filter(|&&s| s).count() < 2
        });
        if !degenerate {
            for batch in &mut batches {
                batch.sort_unstable();
            }
            return Ok(batches);
        }
    }
    Err(Error::DegenerateBatch(size))
}

fn rows(x: ArrayView2<'_, f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

fn run(
    objective: &dyn Objective,
    train: &Dataset,
    valid: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(LinearSoftmaxModel, TrainTrace)> {
    cfg.validate()?;
    let c = train.n_classes();
    if let Some(v) = valid {
        if v.n_classes() != c || v.dim() != train.dim() {
            return Err(Error::shape("validation data does not match the training data"));
        }
    }
    let valid_idx = valid.map(|v| ClassIndex::from_labels(v.labels(), c)).transpose()?;
    let x = train.features();
    let labels = train.labels();

    let mut model = LinearSoftmaxModel::random_init(c, train.dim(), cfg.seed)?;
    let mut vw = Array2::<f64>::zeros((c, train.dim()));
    let mut vb = Array1::<f64>::zeros(c);
    let mut batch_rng = rng::stream(cfg.seed, 2);
    let mut lr = cfg.lr;
    let mut trace = TrainTrace::default();
    let lambda = cfg.weight_decay;

    for epoch in 1..=cfg.epochs {
        let batches = match cfg.batch {
            Batch::Full => vec![(0..train.len()).collect::<Vec<_>>()],
            Batch::Size(s) => stratified_batches(labels, c, s, &mut batch_rng)?,
        };
        for batch in &batches {
            let (xb, yb) = if batches.len() == 1 && batch.len() == train.len() {
                (x.to_owned(), labels.to_vec())
            } else {
                (rows(x, batch), batch.iter().map(|&m| labels[m]).collect())
            };
            let (risk, grads) = objective
                .eval(&model, xb.view(), &yb, true)
                .map_err(|e| diverged_or(e, "scores", epoch))?;
            if !risk.is_finite() {
                return Err(Error::Diverged { what: "risk", epoch });
            }
            let (mut gw, gb) = grads.expect("gradient requested");
            gw.scaled_add(2.0 * lambda, &model.weights());
            let fit_bias = model.fits_bias();
            let mu = cfg.momentum;
            let (w, b) = model.params_mut();
            vw.zip_mut_with(&gw, |v, &g| *v = mu * *v - lr * g);
            w.zip_mut_with(&vw, |p, &v| *p += mu * v);
            w.scaled_add(-lr, &gw);
            if fit_bias {
                vb.zip_mut_with(&gb, |v, &g| *v = mu * *v - lr * g);
                b.zip_mut_with(&vb, |p, &v| *p += mu * v);
                b.scaled_add(-lr, &gb);
            }
            if !model.is_finite() {
                return Err(Error::Diverged {
                    what: "parameters",
                    epoch,
                });
            }
        }

        let (data_risk, _) = objective
            .eval(&model, x, labels, false)
            .map_err(|e| diverged_or(e, "scores", epoch))?;
        let risk = data_risk + lambda * model.weight_norm_sq();
        if !risk.is_finite() {
            return Err(Error::Diverged { what: "risk", epoch });
        }
        let val_mauc = match (valid, &valid_idx) {
            (Some(v), Some(vi)) if epoch % cfg.eval_every == 0 || epoch == cfg.epochs => {
                Some(mauc(&model.score(v.features())?, vi)?)
            }
            _ => None,
        };
        trace.records.push(TraceRecord {
            epoch,
            risk,
            val_mauc,
            lr,
            weight_norm: model.weight_norm_sq().sqrt(),
        });
        lr *= cfg.lr_decay;
    }
    Ok((model, trace))
}

/// Non-finite scores mean the parameters blew up.
fn diverged_or(e: Error, what: &'static str, epoch: usize) -> Error {
    match e {
        Error::InvalidArgument(msg) if msg.contains("finite") => Error::Diverged { what, epoch },
        other => other,
    }
}

/// Minimizes the pairwise surrogate risk of `spec` plus weight decay.
pub fn train(
    train: &Dataset,
    valid: Option<&Dataset>,
    spec: &SurrogateSpec,
    cfg: &TrainConfig,
) -> Result<(LinearSoftmaxModel, TrainTrace)> {
    run(&PairwiseRisk(*spec), train, valid, cfg)
}

/// Multiclass logistic regression with the same optimizer and schedule.
pub fn train_ce_baseline(
    train: &Dataset,
    valid: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(LinearSoftmaxModel, TrainTrace)> {
    run(&CrossEntropy, train, valid, cfg)
}
