//! Linear scorer composed with a softmax: `f(x) = softmax(W x + b)`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand_distr::{Distribution, StandardNormal};

use crate::metrics::ScoreMatrix;
use crate::reference::ScoreGradient;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxModel {
    w: Array2<f64>,
    b: Array1<f64>,
    fit_bias: bool,
}

impl LinearSoftmaxModel {
    pub fn new(w: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        if w.nrows() != b.len() {
            return Err(Error::shape(format!(
                "W has {} rows but b has {} entries",
                w.nrows(),
                b.len()
            )));
        }
        if w.nrows() < 2 || w.ncols() == 0 {
            return Err(Error::invalid("model needs at least 2 classes and 1 feature"));
        }
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("model parameters must be finite"));
        }
        Ok(LinearSoftmaxModel { w, b, fit_bias: true })
    }

    pub fn zeros(n_classes: usize, dim: usize) -> Result<Self> {
        Self::new(Array2::zeros((n_classes, dim)), Array1::zeros(n_classes))
    }

    /// Small Gaussian weights (standard deviation 0.01), zero bias.
    pub fn random_init(n_classes: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, 1);
        let w = Array2::from_shape_simple_fn((n_classes, dim), || {
            0.01 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r)
        });
        Self::new(w, Array1::zeros(n_classes))
    }

    /// Disables the bias term; it is then held at its current value.
    pub fn without_bias(mut self) -> Self {
        self.fit_bias = false;
        self
    }

    pub fn fits_bias(&self) -> bool {
        self.fit_bias
    }

    pub fn n_classes(&self) -> usize {
        self.w.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    pub fn bias(&self) -> ArrayView1<'_, f64> {
        self.b.view()
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Array2<f64>, &mut Array1<f64>) {
        (&mut self.w, &mut self.b)
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(self.b.iter()).all(|v| v.is_finite())
    }

    fn check_features(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::shape(format!(
                "model expects {} features, data has {}",
                self.dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// `X W^T + b`, one row per sample.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_features(x)?;
        Ok(x.dot(&self.w.t()) + &self.b)
    }

    /// Row-wise softmax of the logits, stabilized by the row maximum.
    pub fn score(&self, x: ArrayView2<'_, f64>) -> Result<ScoreMatrix> {
        let mut z = self.logits(x)?;
        for mut row in z.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let s = row.sum();
            row /= s;
        }
        ScoreMatrix::new(z)
    }

    /// Chain rule through the softmax Jacobian:
    /// `dlogits_k = f_k (g_k - <g, f>)` per sample, then
    /// `dW = dlogits^T X` and `db = sum_m dlogits_m`.
    pub fn backprop(&self, x: ArrayView2<'_, f64>, grad: &ScoreGradient) -> Result<(Array2<f64>, Array1<f64>)> {
        let scores = self.score(x)?;
        self.backprop_with_scores(x, &scores, grad)
    }

    /// [`Self::backprop`] with the scores already computed.
    pub fn backprop_with_scores(
        &self,
        x: ArrayView2<'_, f64>,
        scores: &ScoreMatrix,
        grad: &ScoreGradient,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        let f = scores.values();
        let g = grad.values();
        if f.dim() != g.dim() || f.nrows() != x.nrows() || f.ncols() != self.n_classes() {
            return Err(Error::shape(format!(
                "scores {:?}, gradient {:?} and {} samples do not line up",
                f.dim(),
                g.dim(),
                x.nrows()
            )));
        }
        let mut dlogits = Array2::<f64>::zeros(f.dim());
        for ((mut out, fr), gr) in dlogits.rows_mut().into_iter().zip(f.rows()).zip(g.rows()) {
            let inner = fr.dot(&gr);
            out.assign(&(&fr * &(&gr - inner)));
        }
        self.backprop_logits(x, dlogits.view())
    }

    /// Gradient with respect to `(W, b)` given `dR/dlogits`.
    pub fn backprop_logits(
        &self,
        x: ArrayView2<'_, f64>,
        dlogits: ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check_features(x)?;
        if dlogits.dim() != (x.nrows(), self.n_classes()) {
            return Err(Error::shape("logit gradient shape does not match the data"));
        }
        let dw = dlogits.t().dot(&x);
        let db = dlogits.sum_axis(Axis(0));
        Ok((dw, db))
    }

    /// Text form: `N_C d`, then the rows of `W`, then `b`, 17 significant
    /// digits per value.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n_classes(), self.dim());
        let line = |out: &mut String, v: ArrayView1<'_, f64>| {
            let parts: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
            let _ = writeln!(out, "{}", parts.join(" "));
        };
        for row in self.w.rows() {
            line(&mut out, row);
        }
        line(&mut out, self.b.view());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
        let (hl, header) = lines.next().ok_or(Error::Empty)?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(hl, format!("bad dimension {t:?}"))))
            .collect::<Result<_>>()?;
        let &[c, d] = dims.as_slice() else {
            return Err(parse_err(hl, "header must be \"N_C d\"".into()));
        };
        let mut row = |expect: usize| -> Result<Vec<f64>> {
            let (ln, l) = lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                msg: "model file is truncated".into(),
            })?;
            let vals: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| parse_err(ln, format!("bad number {t:?}"))))
                .collect::<Result<_>>()?;
            if vals.len() != expect {
                return Err(parse_err(ln, format!("expected {expect} values, found {}", vals.len())));
            }
            Ok(vals)
        };
        let mut w = Vec::with_capacity(c * d);
        for _ in 0..c {
            w.extend(row(d)?);
        }
        let b = row(c)?;
        if let Some((ln, _)) = lines.next() {
            return Err(parse_err(ln, "trailing content after the bias row".into()));
        }
        let w = Array2::from_shape_vec((c, d), w).map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(w, Array1::from(b))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ClassIndex;
    use crate::kernels::dispatch_fast;
    use crate::surrogates::SurrogateSpec;
    use ndarray::array;

    fn fixture() -> (LinearSoftmaxModel, Array2<f64>, ClassIndex) {
        let m = LinearSoftmaxModel::new(
            array![[0.3, -0.2, 0.5], [-0.4, 0.1, 0.2], [0.05, 0.6, -0.3]],
            array![0.1, -0.05, 0.0],
        )
        .unwrap();
        let x = array![
            [1.0, 0.5, -0.3],
            [0.2, -1.0, 0.8],
            [-0.7, 0.3, 0.1],
            [0.4, 0.9, -1.2],
            [1.5, -0.2, 0.3],
            [-0.1, -0.6, -0.9]
        ];
        (m, x, ClassIndex::from_labels(&[0, 1, 2, 0, 1, 2], 3).unwrap())
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = LinearSoftmaxModel::zeros(4, 3).unwrap();
        let s = m.score(Array2::ones((5, 3)).view()).unwrap();
        assert!(s.values().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn one_sample_by_hand() {
        let m = LinearSoftmaxModel::new(array![[1.0, 0.0], [0.0, 2.0]], array![0.0, 0.5]).unwrap();
        let s = m.score(array![[0.5, 0.25]].view()).unwrap();
        // logits (0.5, 1.0)
        let e0 = 0.5f64.exp();
        let e1 = 1.0f64.exp();
        assert!((s.values()[[0, 0]] - e0 / (e0 + e1)).abs() < 1e-15);
        assert!((s.values()[[0, 1]] - e1 / (e0 + e1)).abs() < 1e-15);
    }

    #[test]
    fn rows_sum_to_one_and_bias_shift_is_invisible() {
        let (m, x, _) = fixture();
        let s = m.score(x.view()).unwrap();
        for row in s.values().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let shifted = LinearSoftmaxModel::new(m.weights().to_owned(), &m.bias() + 7.5).unwrap();
        let t = shifted.score(x.view()).unwrap();
        for (a, b) in s.values().iter().zip(t.values().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_backprops_to_zero() {
        let (m, x, _) = fixture();
        let (dw, db) = m.backprop(x.view(), &ScoreGradient::zeros(6, 3)).unwrap();
        assert!(dw.iter().chain(db.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let (m, x, idx) = fixture();
        let spec = SurrogateSpec::exp(1.0).unwrap();
        let risk = |model: &LinearSoftmaxModel| {
            let s = model.score(x.view()).unwrap();
            dispatch_fast(&s, &idx, &spec, false).unwrap().loss.value
        };
        let s = m.score(x.view()).unwrap();
        let g = dispatch_fast(&s, &idx, &spec, true).unwrap().grad.unwrap();
        let (dw, db) = m.backprop(x.view(), &g).unwrap();
        let h = 1e-6;
        for r in 0..3 {
            for c in 0..3 {
                let mut up = m.clone();
                up.params_mut().0[[r, c]] += h;
                let mut dn = m.clone();
                dn.params_mut().0[[r, c]] -= h;
                let fd = (risk(&up) - risk(&dn)) / (2.0 * h);
                assert!((fd - dw[[r, c]]).abs() <= 1e-5 * dw[[r, c]].abs().max(1e-4));
            }
            let mut up = m.clone();
            up.params_mut().1[r] += h;
            let mut dn = m.clone();
            dn.params_mut().1[r] -= h;
            let fd = (risk(&up) - risk(&dn)) / (2.0 * h);
            assert!((fd - db[r]).abs() <= 1e-5 * db[r].abs().max(1e-4));
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = LinearSoftmaxModel::random_init(3, 4, 9).unwrap();
        let m = LinearSoftmaxModel::new(m.weights().mapv(|v| v * 1e3 + 1.0 / 3.0), array![0.1, 1e-300, -2.5]).unwrap();
        let back = LinearSoftmaxModel::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert!(m.to_text().starts_with("3 4\n"));
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(LinearSoftmaxModel::from_text("").is_err());
        assert!(LinearSoftmaxModel::from_text("2 2\n1 2\n3 4\n").is_err());
        assert!(LinearSoftmaxModel::from_text("2 2\n1 2\n3\n0 0\n").is_err());
        assert!(LinearSoftmaxModel::from_text("2 2\n1 2\n3 4\n0 0\n9\n").is_err());
        assert!(LinearSoftmaxModel::from_text("2 2\n1 x\n3 4\n0 0\n").is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = LinearSoftmaxModel::zeros(2, 3).unwrap();
        assert!(matches!(
            m.score(Array2::zeros((4, 2)).view()),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
