//! Small dense linear-algebra helpers. Matrices are nalgebra; the SVD runs in faer.

use nalgebra::{DMatrix, DVector};

/// Thin SVD with singular values in descending order and a fixed sign
/// convention: the largest-magnitude entry of every left singular vector is
/// positive (the matching right singular vector is flipped with it).
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let (u, s, v_t) = faer_thin_svd(m);

        let k = s.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));

        let mut u_sorted = DMatrix::zeros(u.nrows(), k);
        let mut vt_sorted = DMatrix::zeros(k, v_t.ncols());
        let mut s_sorted = DVector::zeros(k);
        for (dst, &src) in order.iter().enumerate() {
            let mut ucol = u.column(src).into_owned();
            let mut vrow = v_t.row(src).into_owned();
            let pivot = ucol
                .iter()
                .copied()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
                .map(|(_, v)| v)
                .unwrap_or(0.0);
            if pivot < 0.0 {
                ucol.neg_mut();
                vrow.neg_mut();
            }
            u_sorted.set_column(dst, &ucol);
            vt_sorted.set_row(dst, &vrow);
            s_sorted[dst] = s[src];
        }
        Svd {
            u: u_sorted,
            singular_values: s_sorted,
            v_t: vt_sorted,
        }
    }

    /// Sum of the leading `rank` rank-one terms.
    pub fn reconstruct(&self, rank: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.u.nrows(), self.v_t.ncols());
        for i in 0..rank.min(self.singular_values.len()) {
            let term = self.u.column(i) * self.v_t.row(i) * self.singular_values[i];
            out += term;
        }
        out
    }
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    Svd::new(m).singular_values.iter().copied().collect()
}

fn faer_thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return (DMatrix::zeros(r, 0), DVector::zeros(0), DMatrix::zeros(0, c));
    }
    let a = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let svd = a.thin_svd().expect("SVD did not converge");
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let u = DMatrix::from_fn(r, k, |i, j| fu[(i, j)]);
    let s = DVector::from_fn(k, |i, _| fs[i]);
    let v_t = DMatrix::from_fn(k, c, |i, j| fv[(j, i)]);
    (u, s, v_t)
}

/// Number of singular values strictly greater than `tol * sigma_max`.
pub fn numeric_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = singular_values(m);
    let sigma_max = s[0];
    if sigma_max == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * sigma_max).count()
}

/// Numerically stable log-softmax of a slice.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&x| x - lse).collect()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}
