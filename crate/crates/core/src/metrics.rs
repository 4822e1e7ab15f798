//! Pairwise AUCs and their multiclass aggregations.
//!
//! `AUC_{i|j}` scores class `i` against class `j` with column `i` of the
//! score matrix, counting a tie as one half. It is not symmetric in `(i, j)`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::dataset::ClassIndex;
use crate::{Error, Result};

/// `N x N_C` matrix of scores; entry `(m, j)` is `f_j(x_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix(Array2<f64>);

impl ScoreMatrix {
    /// Rejects non-finite entries.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite score {v}")));
        }
        Ok(ScoreMatrix(values))
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn n_samples(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.0.ncols()
    }

    pub fn column(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.column(i)
    }

    /// Column `i` copied into a contiguous vector.
    pub fn column_vec(&self, i: usize) -> Vec<f64> {
        self.0.column(i).to_vec()
    }

    pub(crate) fn check_against(&self, idx: &ClassIndex) -> Result<()> {
        if self.n_samples() != idx.len() || self.n_classes() != idx.n_classes() {
            return Err(Error::shape(format!(
                "score matrix is {}x{} but the index has {} samples and {} classes",
                self.n_samples(),
                self.n_classes(),
                idx.len(),
                idx.n_classes()
            )));
        }
        Ok(())
    }
}

/// `N_C x N_C` matrix of `AUC_{i|j}`; the diagonal is NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct PairAucMatrix(Array2<f64>);

impl PairAucMatrix {
    /// Off-diagonal entries must lie in `[0, 1]`; the diagonal is ignored.
    pub fn new(mut values: Array2<f64>) -> Result<Self> {
        let (r, c) = values.dim();
        if r != c || r < 2 {
            return Err(Error::shape(format!(
                "pair AUC matrix must be square with >= 2 classes, got {r}x{c}"
            )));
        }
        for i in 0..r {
            for j in 0..r {
                if i == j {
                    values[[i, j]] = f64::NAN;
                } else if !(0.0..=1.0).contains(&values[[i, j]]) {
                    return Err(Error::OutOfRange {
                        value: values[[i, j]],
                        lo: 0.0,
                        hi: 1.0,
                    });
                }
            }
        }
        Ok(PairAucMatrix(values))
    }

    /// All off-diagonal entries set to `fill`.
    pub fn filled(n_classes: usize, fill: f64) -> Result<Self> {
        Self::new(Array2::from_elem((n_classes, n_classes), fill))
    }

    pub fn n_classes(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[[i, j]]
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }
}

/// Fraction of (pos, neg) pairs ranked correctly by `col`, ties counting
/// one half. Sort-based, `O((n_pos + n_neg) log(n_pos + n_neg))`.
///
/// The pair count is accumulated exactly in integers (doubled, so a tie adds
/// 1 and a win adds 2) and divided once, so the result is bit-identical to
/// the quadratic definition evaluated the same way.
pub fn pair_auc(col: ArrayView1<'_, f64>, pos: &[usize], neg: &[usize]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("pair_auc needs nonempty positive and negative sets"));
    }
    let mut scored: Vec<(f64, bool)> = pos
        .iter()
        .map(|&m| (col[m], true))
        .chain(neg.iter().map(|&n| (col[n], false)))
        .collect();
    scored.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    let mut twice_correct: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut start = 0;
    while start < scored.len() {
        let v = scored[start].0;
        let mut end = start;
        let (mut p, mut q) = (0u64, 0u64);
        while end < scored.len() && scored[end].0 == v {
            if scored[end].1 {
                p += 1;
            } else {
                q += 1;
            }
            end += 1;
        }
        twice_correct += 2 * p * neg_below + p * q;
        neg_below += q;
        start = end;
    }
    let denom = 2 * pos.len() as u64 * neg.len() as u64;
    Ok(twice_correct as f64 / denom as f64)
}

/// `AUC_{i|j}` for every ordered class pair.
pub fn pair_auc_all(scores: &ScoreMatrix, idx: &ClassIndex) -> Result<PairAucMatrix> {
    scores.check_against(idx)?;
    let c = idx.n_classes();
    let mut out = Array2::from_elem((c, c), f64::NAN);
    for i in 0..c {
        let col = scores.column(i);
        for j in 0..c {
            if i != j {
                out[[i, j]] = pair_auc(col, idx.members(i), idx.members(j))?;
            }
        }
    }
    PairAucMatrix::new(out)
}

/// One-vs-one multiclass AUC (the M metric): unweighted mean of all
/// `N_C (N_C - 1)` pairwise AUCs.
pub fn mauc_ovo(p: &PairAucMatrix) -> f64 {
    let c = p.n_classes();
    let mut sum = 0.0;
    for i in 0..c {
        for j in 0..c {
            if i != j {
                sum += p.get(i, j);
            }
        }
    }
    sum / (c * (c - 1)) as f64
}

/// One-vs-all multiclass AUC expressed through pairwise AUCs:
/// `(1/N_C) sum_i sum_{j != i} p_j / (1 - p_i) * AUC_{i|j}`.
pub fn mauc_ova(p: &PairAucMatrix, prior: &[f64]) -> Result<f64> {
    let c = p.n_classes();
    if prior.len() != c {
        return Err(Error::shape(format!("{} priors for {c} classes", prior.len())));
    }
    if prior.iter().any(|&q| !(q > 0.0)) {
        return Err(Error::invalid("priors must be positive"));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("priors sum to {total}, not 1")));
    }
    if prior.iter().any(|&q| q >= 1.0) {
        return Err(Error::invalid("a prior equal to 1 leaves no negative class"));
    }
    // `1 - p_i` taken as the sum of the other priors.
    let mut sum = 0.0;
    for i in 0..c {
        let (mut row, mut rest) = (0.0, 0.0);
        for j in 0..c {
            if i != j {
                row += prior[j] * p.get(i, j);
                rest += prior[j];
            }
        }
        sum += row / rest;
    }
    Ok(sum / c as f64)
}

/// MAUC of `scores` on the classes of `idx`.
pub fn mauc(scores: &ScoreMatrix, idx: &ClassIndex) -> Result<f64> {
    Ok(mauc_ovo(&pair_auc_all(scores, idx)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairReportRow {
    pub i: usize,
    pub j: usize,
    /// `rho_i * rho_j` with empirical class proportions.
    pub freq: f64,
    pub auc: f64,
}

/// The `k` rarest class pairs (ascending `rho_i rho_j`, ties by `(i, j)`)
/// with their pairwise AUCs.
pub fn pair_report(scores: &ScoreMatrix, idx: &ClassIndex, k: usize) -> Result<Vec<PairReportRow>> {
    if k == 0 {
        return Err(Error::invalid("pair report needs k >= 1"));
    }
    let aucs = pair_auc_all(scores, idx)?;
    let rho = idx.proportions();
    let c = idx.n_classes();
    let mut rows: Vec<PairReportRow> = (0..c)
        .flat_map(|i| (0..c).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| PairReportRow {
            i,
            j,
            freq: rho[i] * rho[j],
            auc: aucs.get(i, j),
        })
        .collect();
    rows.sort_by(|a, b| a.freq.total_cmp(&b.freq).then(a.i.cmp(&b.i)).then(a.j.cmp(&b.j)));
    rows.truncate(k);
    Ok(rows)
}

/// Serialises report rows under the header `i,j,freq,auc`.
pub fn pair_report_csv(rows: &[PairReportRow]) -> String {
    let mut out = String::from("i,j,freq,auc\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.i, r.j, r.freq, r.auc));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn auc_of(pos: &[f64], neg: &[f64]) -> f64 {
        let col: Array1<f64> = pos.iter().chain(neg).copied().collect();
        let p: Vec<usize> = (0..pos.len()).collect();
        let q: Vec<usize> = (pos.len()..pos.len() + neg.len()).collect();
        pair_auc(col.view(), &p, &q).unwrap()
    }

    /// Quadratic definition, same doubled-count arithmetic.
    fn auc_quadratic(col: &[f64], pos: &[usize], neg: &[usize]) -> f64 {
        let mut twice = 0u64;
        for &m in pos {
            for &n in neg {
                if col[m] > col[n] {
                    twice += 2;
                } else if col[m] == col[n] {
                    twice += 1;
                }
            }
        }
        twice as f64 / (2 * pos.len() * neg.len()) as f64
    }

    fn pattern(overrides: &[((usize, usize), f64)]) -> PairAucMatrix {
        let mut m = Array2::from_elem((3, 3), 1.0);
        for &((i, j), v) in overrides {
            m[[i, j]] = v;
        }
        PairAucMatrix::new(m).unwrap()
    }

    #[test]
    fn pair_auc_examples() {
        assert_eq!(auc_of(&[0.9, 0.8], &[0.7, 0.1]), 1.0);
        assert_eq!(auc_of(&[0.5], &[0.5]), 0.5);
        assert_eq!(auc_of(&[0.6, 0.2], &[0.4]), 0.5);
        assert!(pair_auc(array![1.0].view(), &[0], &[]).is_err());
    }

    #[test]
    fn pair_auc_all_examples() {
        let idx = ClassIndex::from_labels(&[0, 0, 1, 1], 2).unwrap();
        let f = ScoreMatrix::new(array![[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.2, 0.8]]).unwrap();
        let p = pair_auc_all(&f, &idx).unwrap();
        assert_eq!((p.get(0, 1), p.get(1, 0)), (1.0, 1.0));

        let idx = ClassIndex::from_labels(&[0, 1, 2, 2, 1], 3).unwrap();
        let f = ScoreMatrix::new(Array2::from_elem((5, 3), 0.3)).unwrap();
        let p = pair_auc_all(&f, &idx).unwrap();
        assert_eq!(mauc_ovo(&p), 0.5);
    }

    #[test]
    fn worked_example_aggregations() {
        let prior = [0.5, 0.45, 0.05];
        let fa = pattern(&[((0, 2), 0.5)]);
        let fb = pattern(&[((0, 1), 0.8)]);
        assert!((mauc_ovo(&fa) - 0.916_666_666_666_666_7).abs() < 1e-12);
        assert!((mauc_ovo(&fb) - 0.966_666_666_666_666_7).abs() < 1e-12);
        assert!((mauc_ova(&fa, &prior).unwrap() - 0.983_333_333_333_333_4).abs() < 1e-12);
        // (1/3) * (0.9 * 0.8 + 0.1 * 1 + 1 + 1) = 0.94 under the p_j / (1 - p_i)
        // weighting.
        assert!((mauc_ova(&fb, &prior).unwrap() - 0.94).abs() < 1e-12);
    }

    #[test]
    fn ova_rejects_degenerate_prior() {
        let p = PairAucMatrix::filled(2, 0.7).unwrap();
        assert!(mauc_ova(&p, &[1.0, 0.0]).is_err());
        assert!(mauc_ova(&p, &[0.5, 0.4]).is_err());
        assert!(mauc_ova(&p, &[0.5]).is_err());
    }

    #[test]
    fn pair_report_order_and_truncation() {
        let labels: Vec<usize> = [vec![0; 10], vec![1; 9], vec![2; 1]].concat();
        let idx = ClassIndex::from_labels(&labels, 3).unwrap();
        let f = ScoreMatrix::new(Array2::from_shape_fn((20, 3), |(m, j)| ((m * 7 + j * 3) % 11) as f64)).unwrap();
        let full = pair_report(&f, &idx, 100).unwrap();
        assert_eq!(full.len(), 6);
        // 0.45 * 0.05 is the rarest product.
        assert_eq!((full[0].i, full[0].j), (1, 2));
        assert_eq!((full[1].i, full[1].j), (2, 1));
        assert!((full[0].freq - 0.0225).abs() < 1e-15);
        assert!(full.windows(2).all(|w| w[0].freq <= w[1].freq));

        let labels: Vec<usize> = (0..21).map(|m| m % 7).collect();
        let idx = ClassIndex::from_labels(&labels, 7).unwrap();
        let f = ScoreMatrix::new(Array2::zeros((21, 7))).unwrap();
        assert_eq!(pair_report(&f, &idx, 5).unwrap().len(), 5);
        assert!(pair_report(&f, &idx, 0).is_err());
        assert!(pair_report_csv(&pair_report(&f, &idx, 2).unwrap()).starts_with("i,j,freq,auc\n"));
    }

    #[test]
    fn sorted_matches_quadratic_with_duplicates() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(42);
        for _ in 0..500 {
            let n = rng.random_range(2..40);
            // Small value alphabet forces many ties.
            let col: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 * 0.25).collect();
            let split = rng.random_range(1..n);
            let pos: Vec<usize> = (0..split).collect();
            let neg: Vec<usize> = (split..n).collect();
            let fast = pair_auc(ndarray::ArrayView1::from(&col), &pos, &neg).unwrap();
            assert_eq!(fast.to_bits(), auc_quadratic(&col, &pos, &neg).to_bits());
        }
    }

    #[test]
    fn pair_auc_all_matches_double_loop() {
        use rand::Rng;
        let mut rng = crate::rng::seeded(3);
        let labels: Vec<usize> = (0..20).map(|m| m % 3).collect();
        let idx = ClassIndex::from_labels(&labels, 3).unwrap();
        let f = Array2::from_shape_simple_fn((20, 3), || rng.random_range(0..5) as f64);
        let p = pair_auc_all(&ScoreMatrix::new(f.clone()).unwrap(), &idx).unwrap();
        for i in 0..3 {
            let col = f.column(i).to_vec();
            for j in 0..3 {
                if i != j {
                    assert_eq!(p.get(i, j), auc_quadratic(&col, idx.members(i), idx.members(j)));
                }
            }
        }
    }

    fn pair_matrix(c: usize) -> impl Strategy<Value = PairAucMatrix> {
        proptest::collection::vec(0.0f64..=1.0, c * c)
            .prop_map(move |v| PairAucMatrix::new(Array2::from_shape_vec((c, c), v).unwrap()).unwrap())
    }

    proptest! {
        #[test]
        fn uniform_prior_ova_equals_ovo(p in (2usize..7).prop_flat_map(pair_matrix)) {
            let c = p.n_classes();
            let prior = vec![1.0 / c as f64; c];
            let ova = mauc_ova(&p, &prior).unwrap();
            prop_assert!((ova - mauc_ovo(&p)).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&mauc_ovo(&p)));
        }

        #[test]
        fn monotone_map_preserves_row(
            vals in proptest::collection::vec(0u8..8, 12),
            shift in -3.0f64..3.0,
        ) {
            let labels: Vec<usize> = (0..12).map(|m| m % 3).collect();
            let idx = ClassIndex::from_labels(&labels, 3).unwrap();
            let f = Array2::from_shape_fn((12, 3), |(m, j)| f64::from(vals[(m + 5 * j) % 12]) / 8.0);
            let mut g = f.clone();
            for v in g.column_mut(1) {
                *v = (3.0 * *v).exp() + shift;
            }
            let a = pair_auc_all(&ScoreMatrix::new(f).unwrap(), &idx).unwrap();
            let b = pair_auc_all(&ScoreMatrix::new(g).unwrap(), &idx).unwrap();
            for j in [0, 2] {
                prop_assert_eq!(a.get(1, j), b.get(1, j));
            }
        }

        #[test]
        fn negation_complements(vals in proptest::collection::vec(0u8..5, 2..30), split in 1usize..29) {
            let n = vals.len();
            let split = split.min(n - 1);
            let col: Vec<f64> = vals.iter().map(|&v| f64::from(v)).collect();
            let neg_col: Vec<f64> = col.iter().map(|v| -v).collect();
            let pos: Vec<usize> = (0..split).collect();
            let neg: Vec<usize> = (split..n).collect();
            let a = pair_auc(ndarray::ArrayView1::from(&col), &pos, &neg).unwrap();
            let b = pair_auc(ndarray::ArrayView1::from(&neg_col), &pos, &neg).unwrap();
            prop_assert_eq!(a + b, 1.0);
        }

        #[test]
        fn perfect_iff_perfect(c in 2usize..6, i in 0usize..6, j in 0usize..6, v in 0.0f64..0.999, w in proptest::collection::vec(0.01f64..1.0, 6)) {
            let (i, j) = (i % c, j % c);
            let total: f64 = w[..c].iter().sum();
            let prior: Vec<f64> = w[..c].iter().map(|x| x / total).collect();
            let ones = PairAucMatrix::filled(c, 1.0).unwrap();
            prop_assert_eq!(mauc_ovo(&ones), 1.0);
            prop_assert!((mauc_ova(&ones, &prior).unwrap() - 1.0).abs() < 1e-12);
            if i != j {
                let mut m = Array2::from_elem((c, c), 1.0);
                m[[i, j]] = v;
                let p = PairAucMatrix::new(m).unwrap();
                prop_assert!(mauc_ovo(&p) < 1.0);
                prop_assert!(mauc_ova(&p, &prior).unwrap() < 1.0 - 1e-12);
            }
        }
    }
}
