//! Labelled datasets, class bookkeeping, loaders and synthetic generators.
//!
//! Labels are dense class ids `0..n_classes`. Loaders never remap labels: a
//! file whose labels skip a class id is rejected so that class ids stay
//! stable across splits.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng;
use crate::{Error, Result};

/// Dense feature matrix (row per sample) with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    /// Requires `N >= 2`, `d >= 1`, every label below `n_classes` and at
    /// least two distinct labels.
    pub fn new(features: Array2<f64>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let (n, d) = features.dim();
        if n != labels.len() {
            return Err(Error::shape(format!("{n} feature rows but {} labels", labels.len())));
        }
        if n == 0 {
            return Err(Error::Empty);
        }
        if n < 2 {
            return Err(Error::invalid("a dataset needs at least 2 samples"));
        }
        if d == 0 {
            return Err(Error::invalid("a dataset needs at least 1 feature"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::invalid(format!("label {bad} outside [0, {n_classes})")));
        }
        let distinct = count_labels(&labels, n_classes).iter().filter(|&&c| c > 0).count();
        if distinct < 2 {
            return Err(Error::TooFewClasses(distinct));
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        count_labels(&self.labels, self.n_classes)
    }

    /// Rows `indices` (in that order) as a new dataset with the same class
    /// count.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(features, labels, self.n_classes)
    }

    /// Error unless every class id in `0..n_classes` has a sample.
    pub fn require_all_classes(&self) -> Result<()> {
        match self.class_counts().iter().position(|&c| c == 0) {
            Some(c) => Err(Error::EmptyClass(c)),
            None => Ok(()),
        }
    }

    /// Writes the CSV form read by [`load_csv`]: label first, then features.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (row, &y) in self.features.rows().into_iter().zip(&self.labels) {
            write!(out, "{y}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn count_labels(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for &y in labels {
        counts[y] += 1;
    }
    counts
}

/// Per-class membership, counts, proportions and pair weights.
///
/// `pair_weights[i][m] = 1 / (n_i * n_{y_m})` is the weight a pair with
/// class-`i` positive and negative `m` carries in the empirical pairwise
/// risk.
///
/// An index built with [`ClassIndex::from_labels_partial`] may have empty
/// classes (mini-batches). Empty classes have an empty `members` list and an
/// empty weight vector, and are skipped by every risk evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassIndex {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
    counts: Vec<usize>,
    proportions: Vec<f64>,
    pair_weights: Vec<Vec<f64>>,
}

impl ClassIndex {
    /// Strict constructor: every class must be populated.
    pub fn from_labels(labels: &[usize], n_classes: usize) -> Result<Self> {
        let idx = Self::from_labels_partial(labels, n_classes)?;
        if let Some(c) = idx.counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass(c));
        }
        Ok(idx)
    }

    /// Allows empty classes; at least two classes must be present.
    pub fn from_labels_partial(labels: &[usize], n_classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::invalid(format!("label {bad} outside [0, {n_classes})")));
        }
        let mut members = vec![Vec::new(); n_classes];
        for (m, &y) in labels.iter().enumerate() {
            members[y].push(m);
        }
        let counts: Vec<usize> = members.iter().map(Vec::len).collect();
        let present = counts.iter().filter(|&&c| c > 0).count();
        if present < 2 {
            return Err(Error::TooFewClasses(present));
        }
        let n = labels.len() as f64;
        let proportions = counts.iter().map(|&c| c as f64 / n).collect();
        let inv: Vec<f64> = counts
            .iter()
            .map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 })
            .collect();
        let pair_weights = (0..n_classes)
            .map(|i| {
                if counts[i] == 0 {
                    Vec::new()
                } else {
                    labels.iter().map(|&y| inv[i] * inv[y]).collect()
                }
            })
            .collect();
        Ok(ClassIndex {
            labels: labels.to_vec(),
            members,
            counts,
            proportions,
            pair_weights,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Sample indices of class `i`, in input order.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.members[i]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    /// `D^(i)`: length-N weights `1 / (n_i n_{y_m})`. Empty for an absent
    /// class.
    pub fn pair_weights(&self, i: usize) -> &[f64] {
        &self.pair_weights[i]
    }

    /// Classes with at least one sample, ascending.
    pub fn present_classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, _)| i)
    }

    pub fn n_present(&self) -> usize {
        self.present_classes().count()
    }

    /// `1 / (P (P - 1))` with `P` the number of present classes.
    pub fn normalizer(&self) -> f64 {
        let p = self.n_present() as f64;
        1.0 / (p * (p - 1.0))
    }

    /// Number of ordered cross-class sample pairs, `sum_i n_i (N - n_i)`.
    pub fn pair_count(&self) -> u64 {
        let n = self.len() as u64;
        self.counts.iter().map(|&c| c as u64 * (n - c as u64)).sum()
    }
}

/// Index of a dataset. Fails if any class id has no sample.
pub fn build_index(ds: &Dataset) -> Result<ClassIndex> {
    ClassIndex::from_labels(ds.labels(), ds.n_classes())
}

/// One-hot label indicators, stored as an `N x N_C` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHot {
    matrix: Array2<f64>,
}

impl OneHot {
    pub fn new(labels: &[usize], n_classes: usize) -> Self {
        let mut matrix = Array2::zeros((labels.len(), n_classes));
        for (m, &y) in labels.iter().enumerate() {
            matrix[[m, y]] = 1.0;
        }
        OneHot { matrix }
    }

    /// `Y^(i)`.
    pub fn column(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.matrix.column(i)
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }
}

/// Label-skew factors `xi = sqrt(sum_i 1/rho_i)` and
/// `chi = sqrt(sum_i sum_{j != i} 1/(rho_i rho_j))`.
pub fn imbalance_factors(idx: &ClassIndex) -> (f64, f64) {
    let rho = idx.proportions();
    let xi2: f64 = rho.iter().map(|r| 1.0 / r).sum();
    let mut chi2 = 0.0;
    for (i, ri) in rho.iter().enumerate() {
        for (j, rj) in rho.iter().enumerate() {
            if i != j {
                chi2 += 1.0 / (ri * rj);
            }
        }
    }
    (xi2.sqrt(), chi2.sqrt())
}

// ---------------------------------------------------------------------------
// Loaders
// ---------------------------------------------------------------------------

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_label(tok: &str, line: usize) -> Result<usize> {
    let tok = tok.trim();
    if let Ok(v) = tok.parse::<usize>() {
        return Ok(v);
    }
    let bad = |msg: String| Error::Parse { line, msg };
    let v: f64 = tok.parse().map_err(|_| bad(format!("label {tok:?} is not a number")))?;
    if v < 0.0 {
        return Err(bad(format!("negative label {tok}")));
    }
    if v.fract() != 0.0 || !v.is_finite() {
        return Err(bad(format!("label {tok} is not an integer")));
    }
    Ok(v as usize)
}

/// Builds the dataset with `N_C = 1 + max(label)`; refuses label gaps.
fn finish_dense(rows: Vec<Vec<f64>>, labels: Vec<usize>, d: usize) -> Result<Dataset> {
    if labels.is_empty() {
        return Err(Error::Empty);
    }
    let n_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    let counts = count_labels(&labels, n_classes);
    let distinct = counts.iter().filter(|&&c| c > 0).count();
    if distinct < 2 {
        return Err(Error::TooFewClasses(distinct));
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(c));
    }
    let n = rows.len();
    let mut features = Array2::zeros((n, d));
    for (m, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            features[[m, k]] = v;
        }
    }
    Dataset::new(features, labels, n_classes)
}

/// Parses comma-separated rows; `label_col` is the label's field position.
pub fn parse_csv(text: &str, label_col: usize) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() < 2 || label_col >= fields.len() {
            return Err(Error::Parse {
                line,
                msg: format!("expected a label and at least one feature, got {} fields", fields.len()),
            });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {w} fields, got {}", fields.len()),
                })
            }
            _ => {}
        }
        labels.push(parse_label(fields[label_col], line)?);
        let row = fields
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != label_col)
            .map(|(_, f)| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("feature {f:?} is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let d = width.map_or(0, |w| w - 1);
    finish_dense(rows, labels, d)
}

/// Reads a headerless CSV file (see [`parse_csv`]).
pub fn load_csv(path: impl AsRef<Path>, label_col: usize) -> Result<Dataset> {
    parse_csv(&read_file(path.as_ref())?, label_col)
}

/// Parses LIBSVM text: `label idx:val idx:val ...` with 1-based, strictly
/// ascending indices. Blank lines and `#` comments are skipped. Features are
/// densified with `d` equal to the largest index seen.
pub fn parse_libsvm(text: &str) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut d = 0;
    for (no, raw) in text.lines().enumerate() {
        let line = no + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut toks = body.split_whitespace();
        let label = parse_label(toks.next().unwrap_or_default(), line)?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for tok in toks {
            let bad = |msg: String| Error::Parse { line, msg };
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| bad(format!("token {tok:?} is not idx:val")))?;
            let i: usize = i
                .parse()
                .map_err(|_| bad(format!("index {i:?} is not a positive integer")))?;
            if i == 0 {
                return Err(bad("indices are 1-based".into()));
            }
            if i <= last {
                return Err(bad(format!("index {i} after {last}: indices must ascend")));
            }
            let v: f64 = v.parse().map_err(|_| bad(format!("value {v:?} is not a number")))?;
            if row.len() < i {
                row.resize(i, 0.0);
            }
            row[i - 1] = v;
            last = i;
        }
        d = d.max(last);
        rows.push(row);
        labels.push(label);
    }
    if d == 0 && !labels.is_empty() {
        return Err(Error::invalid("no feature index appears in the file"));
    }
    finish_dense(rows, labels, d)
}

pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_libsvm(&read_file(path.as_ref())?)
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Per-class counts for `n` samples with proportions `rho`: `floor(rho_i n)`,
/// then the remainder handed out one at a time in descending `rho` order
/// (ties by class id).
pub fn class_counts_for(n: usize, rho: &[f64]) -> Result<Vec<usize>> {
    if rho.len() < 2 {
        return Err(Error::TooFewClasses(rho.len()));
    }
    if rho.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
        return Err(Error::invalid("class proportions must be positive"));
    }
    let total: f64 = rho.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("class proportions sum to {total}, not 1")));
    }
    let mut counts: Vec<usize> = rho.iter().map(|&r| (r * n as f64).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.sort_by(|&a, &b| rho[b].total_cmp(&rho[a]).then(a.cmp(&b)));
    for k in 0..n.saturating_sub(assigned) {
        counts[order[k % order.len()]] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(c));
    }
    Ok(counts)
}

fn shuffled_labels(counts: &[usize], rng: &mut rng::Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    labels.shuffle(rng);
    labels
}

/// Features i.i.d. uniform on `[0, 1]`, labels with counts from
/// [`class_counts_for`], in shuffled order.
pub fn synth_uniform(n: usize, d: usize, rho: &[f64], seed: u64) -> Result<Dataset> {
    let counts = class_counts_for(n, rho)?;
    let labels = shuffled_labels(&counts, &mut rng::stream(seed, 0));
    let mut frng = rng::stream(seed, 1);
    let features = Array2::from_shape_simple_fn((n, d), || frng.random::<f64>());
    Dataset::new(features, labels, rho.len())
}

/// Mean of blob `class` in [`synth_blobs`]: `separation / sqrt(2)` along
/// coordinate axis `class`, so any two means are `separation` apart.
pub fn blob_mean(class: usize, d: usize, separation: f64) -> Vec<f64> {
    let mut mu = vec![0.0; d];
    mu[class] = separation / std::f64::consts::SQRT_2;
    mu
}

/// Unit-variance Gaussian blobs, one per class, with means from
/// [`blob_mean`]. Requires `d >= rho.len()`.
pub fn synth_blobs(n: usize, d: usize, rho: &[f64], separation: f64, seed: u64) -> Result<Dataset> {
    if !(separation >= 0.0) {
        return Err(Error::invalid("separation must be nonnegative"));
    }
    if d < rho.len() {
        return Err(Error::invalid(format!(
            "blobs need d >= number of classes ({} < {})",
            d,
            rho.len()
        )));
    }
    let counts = class_counts_for(n, rho)?;
    let labels = shuffled_labels(&counts, &mut rng::stream(seed, 0));
    let mut frng = rng::stream(seed, 1);
    let mut features = Array2::zeros((n, d));
    for (m, &y) in labels.iter().enumerate() {
        let mu = blob_mean(y, d, separation);
        for k in 0..d {
            let z: f64 = frng.sample(StandardNormal);
            features[[m, k]] = mu[k] + z;
        }
    }
    Dataset::new(features, labels, rho.len())
}

/// Stratified train/validation/test split.
///
/// Per class: `floor(f_valid * n_c)` validation and `floor(f_test * n_c)`
/// test samples, drawn at random; the rest go to training. Each output keeps
/// the input's row order.
pub fn split_stratified(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) {
        return Err(Error::invalid("split fractions must all be positive"));
    }
    if ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("split fractions must sum to 1"));
    }
    let idx = build_index(ds)?;
    let mut rng = rng::seeded(seed);
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..ds.n_classes() {
        let mut members = idx.members(c).to_vec();
        let n_c = members.len();
        let n_valid = (fv * n_c as f64).floor() as usize;
        let n_test = (fs * n_c as f64).floor() as usize;
        if n_valid == 0 || n_test == 0 || n_valid + n_test >= n_c {
            return Err(Error::invalid(format!(
                "class {c} has {n_c} samples, too few for a three-way split"
            )));
        }
        members.shuffle(&mut rng);
        valid.extend_from_slice(&members[..n_valid]);
        test.extend_from_slice(&members[n_valid..n_valid + n_test]);
        train.extend_from_slice(&members[n_valid + n_test..]);
    }
    for part in [&mut train, &mut valid, &mut test] {
        part.sort_unstable();
    }
    Ok((ds.select(&train)?, ds.select(&valid)?, ds.select(&test)?))
}
