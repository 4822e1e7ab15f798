//! Pairwise surrogate losses `l(t)`, `t = f_i(x_pos) - f_i(x_neg)`.
//!
//! Losses with an exact fast kernel are the exponential, squared and hinge
//! losses. The others (logit, q-norm hinge, generalized hinge,
//! distance-weighted) are accelerated through a degree-`K` Bernstein
//! approximation `l_K(t) = B_K(phi, (1 + t) / 2)` with `phi(u) = l(2u - 1)`,
//! which is exact in its own right and only valid for scores in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// Largest supported Bernstein degree. Beyond this the power-basis
/// coefficients `binom(K, j) * Delta^j phi(0)` lose too much precision.
pub const MAX_BERNSTEIN_DEGREE: u32 = 60;

pub const DEFAULT_BERNSTEIN_DEGREE: u32 = 10;

/// A base surrogate loss with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    /// `exp(-alpha t)`
    Exp { alpha: f64 },
    /// `(alpha - t)^2`
    Squared { alpha: f64 },
    /// `max(alpha - t, 0)`
    Hinge { alpha: f64 },
    /// `log(1 + exp(-t))`
    Logit,
    /// `max(1 - t, 0)^q`, `q > 1`
    QHinge { q: f64 },
    /// Generalized hinge with `m = 1`, `0 < epsilon < 1/2`:
    /// `1 - t` for `t <= 1 - eps`, `(t - 1 - eps)^2 / (4 eps)` for
    /// `1 - eps <= t < 1`, and `0` from `t = 1` on.
    GenHinge { epsilon: f64 },
    /// Distance-weighted loss, `0 < epsilon < 1`: `1/t` for `t > eps`,
    /// `(2 - t/eps) / eps` otherwise.
    DistWeight { epsilon: f64 },
}

impl Loss {
    pub fn name(&self) -> &'static str {
        match self {
            Loss::Exp { .. } => "exp",
            Loss::Squared { .. } => "squared",
            Loss::Hinge { .. } => "hinge",
            Loss::Logit => "logit",
            Loss::QHinge { .. } => "qhinge",
            Loss::GenHinge { .. } => "genhinge",
            Loss::DistWeight { .. } => "distweight",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::invalid(format!("{}: {msg}", self.name())));
        match *self {
            Loss::Exp { alpha } | Loss::Squared { alpha } | Loss::Hinge { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return bad("alpha must be positive");
                }
            }
            Loss::Logit => {}
            Loss::QHinge { q } => {
                if !(q > 1.0 && q.is_finite()) {
                    return bad("q must exceed 1");
                }
            }
            Loss::GenHinge { epsilon } => {
                if !(epsilon > 0.0 && epsilon < 0.5) {
                    return bad("epsilon must lie in (0, 1/2)");
                }
            }
            Loss::DistWeight { epsilon } => {
                if !(epsilon > 0.0 && epsilon < 1.0) {
                    return bad("epsilon must lie in (0, 1)");
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Loss::Exp { alpha } => (-alpha * t).exp(),
            Loss::Squared { alpha } => {
                let r = alpha - t;
                r * r
            }
            Loss::Hinge { alpha } => (alpha - t).max(0.0),
            Loss::Logit => {
                if t > 0.0 {
                    (-t).exp().ln_1p()
                } else {
                    -t + t.exp().ln_1p()
                }
            }
            Loss::QHinge { q } => {
                if t < 1.0 {
                    (1.0 - t).powf(q)
                } else {
                    0.0
                }
            }
            Loss::GenHinge { epsilon } => {
                if t <= 1.0 - epsilon {
                    1.0 - t
                } else if t < 1.0 {
                    let r = t - 1.0 - epsilon;
                    r * r / (4.0 * epsilon)
                } else {
                    0.0
                }
            }
            Loss::DistWeight { epsilon } => {
                if t > epsilon {
                    1.0 / t
                } else {
                    (2.0 - t / epsilon) / epsilon
                }
            }
        }
    }

    /// Derivative; the right derivative at kinks (so the hinge has
    /// derivative 0 exactly at the margin).
    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        match *self {
            Loss::Exp { alpha } => -alpha * (-alpha * t).exp(),
            Loss::Squared { alpha } => -2.0 * (alpha - t),
            Loss::Hinge { alpha } => {
                if t < alpha {
                    -1.0
                } else {
                    0.0
                }
            }
            Loss::Logit => {
                // -1 / (1 + e^t)
                if t > 0.0 {
                    let e = (-t).exp();
                    -e / (1.0 + e)
                } else {
                    -1.0 / (1.0 + t.exp())
                }
            }
            Loss::QHinge { q } => {
                if t < 1.0 {
                    -q * (1.0 - t).powf(q - 1.0)
                } else {
                    0.0
                }
            }
            Loss::GenHinge { epsilon } => {
                if t < 1.0 - epsilon {
                    -1.0
                } else if t < 1.0 {
                    (t - 1.0 - epsilon) / (2.0 * epsilon)
                } else {
                    0.0
                }
            }
            Loss::DistWeight { epsilon } => {
                if t > epsilon {
                    -1.0 / (t * t)
                } else {
                    -1.0 / (epsilon * epsilon)
                }
            }
        }
    }

    /// Points where the loss or its derivative is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            Loss::Hinge { alpha } => vec![alpha],
            Loss::QHinge { .. } => vec![1.0],
            Loss::GenHinge { epsilon } => vec![1.0 - epsilon, 1.0],
            Loss::DistWeight { epsilon } => vec![epsilon],
            _ => Vec::new(),
        }
    }

    /// `true` for the losses with an exact fast kernel.
    pub fn has_exact_kernel(&self) -> bool {
        matches!(self, Loss::Exp { .. } | Loss::Squared { .. } | Loss::Hinge { .. })
    }
}

/// A surrogate loss selection as consumed by the risk evaluators.
///
/// With `bernstein` set, the risk is computed for the degree-`degree`
/// Bernstein approximation of `loss`. Otherwise `degree` is only used when a
/// loss without an exact kernel has to be routed through the Bernstein path.
///
/// String form: `kind:param=value,...`, e.g. `exp:alpha=2`, `logit:K=12`,
/// `bernstein:base=squared,alpha=1,K=10`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateSpec {
    loss: Loss,
    bernstein: bool,
    degree: u32,
}

impl SurrogateSpec {
    pub fn new(loss: Loss) -> Result<Self> {
        loss.validate()?;
        Ok(SurrogateSpec {
            loss,
            bernstein: false,
            degree: DEFAULT_BERNSTEIN_DEGREE,
        })
    }

    /// Bernstein approximation of `loss` with degree `degree`.
    pub fn bernstein(loss: Loss, degree: u32) -> Result<Self> {
        check_degree(degree)?;
        Ok(SurrogateSpec {
            bernstein: true,
            degree,
            ..Self::new(loss)?
        })
    }

    pub fn with_degree(self, degree: u32) -> Result<Self> {
        check_degree(degree)?;
        Ok(SurrogateSpec { degree, ..self })
    }

    pub fn exp(alpha: f64) -> Result<Self> {
        Self::new(Loss::Exp { alpha })
    }

    pub fn squared(alpha: f64) -> Result<Self> {
        Self::new(Loss::Squared { alpha })
    }

    pub fn hinge(alpha: f64) -> Result<Self> {
        Self::new(Loss::Hinge { alpha })
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn is_bernstein(&self) -> bool {
        self.bernstein
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// The same spec with the Bernstein flag set.
    pub fn as_bernstein(&self) -> SurrogateSpec {
        SurrogateSpec {
            bernstein: true,
            ..*self
        }
    }

    /// A ready-to-evaluate loss; fits Bernstein coefficients when needed.
    pub fn pointwise(&self) -> Result<PointLoss> {
        if self.bernstein {
            Ok(PointLoss::Poly(BernsteinCoeffs::fit(&self.loss, self.degree)?))
        } else {
            Ok(PointLoss::Closed(self.loss))
        }
    }
}

fn check_degree(degree: u32) -> Result<()> {
    if degree == 0 || degree > MAX_BERNSTEIN_DEGREE {
        return Err(Error::invalid(format!(
            "Bernstein degree must lie in [1, {MAX_BERNSTEIN_DEGREE}], got {degree}"
        )));
    }
    Ok(())
}

impl fmt::Display for SurrogateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params = match self.loss {
            Loss::Exp { alpha } | Loss::Squared { alpha } | Loss::Hinge { alpha } => {
                format!("alpha={alpha}")
            }
            Loss::Logit => String::new(),
            Loss::QHinge { q } => format!("q={q}"),
            Loss::GenHinge { epsilon } | Loss::DistWeight { epsilon } => {
                format!("epsilon={epsilon}")
            }
        };
        let sep = if params.is_empty() { "" } else { "," };
        if self.bernstein {
            write!(f, "bernstein:base={}{sep}{params},K={}", self.loss.name(), self.degree)
        } else if self.loss.has_exact_kernel() {
            write!(f, "{}:{params}", self.loss.name())
        } else {
            write!(f, "{}:{params}{sep}K={}", self.loss.name(), self.degree)
        }
    }
}

impl FromStr for SurrogateSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut base = None;
        let mut alpha = None;
        let mut q = None;
        let mut epsilon = None;
        let mut degree = None;
        for kv in rest.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value, got {kv:?}")))?;
            let num = || {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::invalid(format!("{k}: {v:?} is not a number")))
            };
            match k.trim() {
                "base" => base = Some(v.trim().to_string()),
                "alpha" => alpha = Some(num()?),
                "q" => q = Some(num()?),
                "epsilon" | "eps" => epsilon = Some(num()?),
                "K" | "k" | "degree" => {
                    degree = Some(
                        v.trim()
                            .parse::<u32>()
                            .map_err(|_| Error::invalid(format!("K: {v:?} is not a positive integer")))?,
                    )
                }
                other => return Err(Error::invalid(format!("unknown loss parameter {other:?}"))),
            }
        }
        let bernstein = kind == "bernstein";
        let base_kind = if bernstein {
            base.ok_or_else(|| Error::invalid("bernstein needs base=<kind>"))?
        } else {
            if base.is_some() {
                return Err(Error::invalid("base= is only valid for bernstein"));
            }
            kind.to_string()
        };
        let loss = match base_kind.as_str() {
            "exp" => Loss::Exp {
                alpha: alpha.unwrap_or(1.0),
            },
            "squared" | "square" | "sq" => Loss::Squared {
                alpha: alpha.unwrap_or(1.0),
            },
            "hinge" => Loss::Hinge {
                alpha: alpha.unwrap_or(1.0),
            },
            "logit" => Loss::Logit,
            "qhinge" => Loss::QHinge { q: q.unwrap_or(2.0) },
            "genhinge" => Loss::GenHinge {
                epsilon: epsilon.unwrap_or(0.25),
            },
            "distweight" => Loss::DistWeight {
                epsilon: epsilon.unwrap_or(0.5),
            },
            other => return Err(Error::invalid(format!("unknown loss kind {other:?}"))),
        };
        let unused = match loss {
            Loss::Exp { .. } | Loss::Squared { .. } | Loss::Hinge { .. } => q.or(epsilon).is_some(),
            Loss::Logit => alpha.or(q).or(epsilon).is_some(),
            Loss::QHinge { .. } => alpha.or(epsilon).is_some(),
            Loss::GenHinge { .. } | Loss::DistWeight { .. } => alpha.or(q).is_some(),
        };
        if unused {
            return Err(Error::invalid(format!("parameter not used by {}", loss.name())));
        }
        let spec = SurrogateSpec::new(loss)?;
        let spec = match degree {
            Some(k) => spec.with_degree(k)?,
            None => spec,
        };
        Ok(if bernstein { spec.as_bernstein() } else { spec })
    }
}

/// A loss ready for repeated pointwise evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum PointLoss {
    Closed(Loss),
    Poly(BernsteinCoeffs),
}

impl PointLoss {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            PointLoss::Closed(l) => l.eval(t),
            PointLoss::Poly(c) => c.loss_value(t),
        }
    }

    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        match self {
            PointLoss::Closed(l) => l.deriv(t),
            PointLoss::Poly(c) => c.loss_deriv(t),
        }
    }
}

/// `l(t)` for the spec (the Bernstein approximation when selected; its
/// coefficients are refitted on every call, use [`SurrogateSpec::pointwise`]
/// in loops).
pub fn loss_eval(spec: &SurrogateSpec, t: f64) -> Result<f64> {
    Ok(spec.pointwise()?.eval(t))
}

pub fn loss_deriv(spec: &SurrogateSpec, t: f64) -> Result<f64> {
    Ok(spec.pointwise()?.deriv(t))
}

/// Numeric spot checks of the sufficient consistency conditions on a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub differentiable_on_grid: bool,
    pub convex_on_grid: bool,
    pub nonincreasing_on_unit: bool,
    pub neg_deriv_at_zero: bool,
}

impl ConsistencyReport {
    pub fn all(&self) -> bool {
        self.differentiable_on_grid && self.convex_on_grid && self.nonincreasing_on_unit && self.neg_deriv_at_zero
    }
}

const GRID_POINTS: usize = 1001;
const GRID_LO: f64 = -3.0;
const GRID_HI: f64 = 3.0;

fn grid() -> impl Iterator<Item = f64> {
    let h = (GRID_HI - GRID_LO) / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS).map(move |k| GRID_LO + k as f64 * h)
}

/// Shrinks `[lo, hi]` towards its largest jump of `g` until the bracket is
/// two adjacent floats, then returns that jump. A continuous `g` yields a
/// jump near zero, a discontinuity keeps its full size.
fn localized_jump(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return (g(hi) - g(lo)).abs();
        }
        let left = (g(mid) - g(lo)).abs();
        let right = (g(hi) - g(mid)).abs();
        if left >= right {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// Reports (does not prove) differentiability, convexity, monotonicity on
/// `[-1, 1]` and `l'(0) < 0` on a 1001-point grid over `[-3, 3]`.
pub fn consistency_check(spec: &SurrogateSpec) -> Result<ConsistencyReport> {
    let loss = spec.pointwise()?;
    let ts: Vec<f64> = grid().collect();
    let vals: Vec<f64> = ts.iter().map(|&t| loss.eval(t)).collect();

    let differentiable_on_grid = ts.windows(2).all(|w| {
        let dj = localized_jump(|t| loss.deriv(t), w[0], w[1]);
        let vj = localized_jump(|t| loss.eval(t), w[0], w[1]);
        let scale = 1.0 + loss.deriv(w[0]).abs();
        dj <= 1e-6 * scale && vj <= 1e-6 * (1.0 + vals[0].abs())
    });

    let convex_on_grid = vals.windows(3).all(|w| {
        let scale = 1.0_f64.max(w[1].abs());
        w[0] - 2.0 * w[1] + w[2] >= -1e-8 * scale
    });

    let nonincreasing_on_unit = ts
        .iter()
        .zip(&vals)
        .filter(|(t, _)| (-1.0..=1.0).contains(*t))
        .map(|(_, v)| *v)
        .collect::<Vec<f64>>()
        .windows(2)
        .all(|w| w[1] - w[0] <= 1e-12 * 1.0_f64.max(w[0].abs()));

    let neg_deriv_at_zero = loss.deriv(0.0) < -1e-12;

    Ok(ConsistencyReport {
        differentiable_on_grid,
        convex_on_grid,
        nonincreasing_on_unit,
        neg_deriv_at_zero,
    })
}

/// `binom(n, k)` in floating point.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for r in 0..k {
        acc = acc * f64::from(n - r) / f64::from(r + 1);
    }
    acc.round()
}

/// Degree-`K` Bernstein polynomial of `phi` on `[0, 1]` in the power basis:
/// `B_K(phi, u) = sum_j c_j u^j` with `c_j = binom(K, j) Delta^j phi(0)` and
/// `Delta^j phi(0) = sum_r (-1)^(j-r) binom(j, r) phi(r/K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinCoeffs {
    degree: u32,
    coeffs: Vec<f64>,
}

impl BernsteinCoeffs {
    /// Fits `phi(u) = loss(2u - 1)`.
    pub fn fit(loss: &Loss, degree: u32) -> Result<Self> {
        loss.validate()?;
        Self::fit_fn(|u| loss.eval(2.0 * u - 1.0), degree)
    }

    /// Fits an arbitrary `phi` on `[0, 1]`.
    pub fn fit_fn(phi: impl Fn(f64) -> f64, degree: u32) -> Result<Self> {
        check_degree(degree)?;
        let k = degree as usize;
        let mut diffs: Vec<f64> = (0..=k).map(|r| phi(r as f64 / k as f64)).collect();
        let mut coeffs = Vec::with_capacity(k + 1);
        // Row j of the forward-difference table starts with Delta^j phi(0).
        for j in 0..=k {
            coeffs.push(binomial(degree, j as u32) * diffs[0]);
            for r in 0..k - j {
                diffs[r] = diffs[r + 1] - diffs[r];
            }
        }
        Ok(BernsteinCoeffs { degree, coeffs })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Power-basis coefficients `c_0..=c_K`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Horner evaluation; `u` must lie in `[0, 1]`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::OutOfRange {
                value: u,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(self.eval_unchecked(u))
    }

    #[inline]
    pub fn eval_unchecked(&self, u: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    /// `d/du B_K(phi, u)`.
    #[inline]
    pub fn deriv_unchecked(&self, u: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (j, &c)| acc * u + j as f64 * c)
    }

    /// The approximated loss `l_K(t) = B_K(phi, (1 + t) / 2)`.
    #[inline]
    pub fn loss_value(&self, t: f64) -> f64 {
        self.eval_unchecked(0.5 * (1.0 + t))
    }

    /// `d l_K / dt`.
    #[inline]
    pub fn loss_deriv(&self, t: f64) -> f64 {
        0.5 * self.deriv_unchecked(0.5 * (1.0 + t))
    }
}

/// Bernstein coefficients of the spec's base loss at degree `degree`.
pub fn bernstein_fit(spec: &SurrogateSpec, degree: u32) -> Result<BernsteinCoeffs> {
    BernsteinCoeffs::fit(&spec.loss(), degree)
}

pub fn bernstein_eval(coeffs: &BernsteinCoeffs, u: f64) -> Result<f64> {
    coeffs.eval(u)
}
