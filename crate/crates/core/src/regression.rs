//! Ordinary least squares on z-scored complexity predictors.
//!
//! The fit uses a column-pivoted QR factorization; standard errors come from
//! the diagonal of `(XᵀX)⁻¹ = P R⁻¹ R⁻ᵀ Pᵀ` and two-sided p-values from
//! Student's t with `N - k - 1` degrees of freedom.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::results::EvalRecord;

pub const INTERCEPT: &str = "Intercept";

/// Predictor names in design-matrix order.
pub const PREDICTORS: [&str; 8] = [
    "|Q|",
    "|Σ|",
    "|Q||Σ|",
    "R",
    "Exp. len.",
    "min(|Q|,|Σ|+1)",
    "H(A)",
    "D",
];

/// Relative threshold on `|R_jj| / |R_00|` below which a pivot counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Standardizes with the sample standard deviation (denominator `N - 1`).
pub fn zscore(column: &[f64], name: &str) -> Result<Vec<f64>> {
    let n = column.len();
    if n < 2 {
        return Err(Error::TooFewRecords { needed: 2, got: n });
    }
    let mean = column.iter().sum::<f64>() / n as f64;
    let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::ConstantColumn(name.to_string()));
    }
    Ok(column.iter().map(|x| (x - mean) / sd).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub column_names: Vec<String>,
}

impl DesignMatrix {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, column_names: Vec<String>) -> Result<Self> {
        if x.nrows() != y.len() || x.ncols() != column_names.len() {
            return Err(Error::Shape(format!(
                "design matrix {}x{} with {} responses and {} names",
                x.nrows(),
                x.ncols(),
                y.len(),
                column_names.len()
            )));
        }
        Ok(DesignMatrix { x, y, column_names })
    }
}

fn raw_predictors(r: &EvalRecord) -> [f64; 8] {
    [
        r.num_states as f64,
        r.alphabet_size as f64,
        r.transitions() as f64,
        r.rank as f64,
        r.expected_length,
        r.rank_bound() as f64,
        r.entropy_bits,
        r.hidden as f64,
    ]
}

fn canonical_order(a: &EvalRecord, b: &EvalRecord) -> std::cmp::Ordering {
    a.automaton_id
        .cmp(&b.automaton_id)
        .then_with(|| a.model_id.cmp(&b.model_id))
        .then_with(|| a.hidden.cmp(&b.hidden))
        .then_with(|| {
            let (x, y) = (raw_predictors(a), raw_predictors(b));
            x.iter()
                .zip(&y)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .then_with(|| a.kl_bits.total_cmp(&b.kl_bits))
}

/// Intercept followed by the eight z-scored predictors; `y` is `kl_bits`.
/// Records are put in a canonical order first, so the result does not depend
/// on input order.
pub fn build_design_matrix(records: &[EvalRecord]) -> Result<DesignMatrix> {
    let needed = PREDICTORS.len() + 2;
    if records.len() < needed {
        return Err(Error::TooFewRecords {
            needed,
            got: records.len(),
        });
    }
    let mut sorted: Vec<&EvalRecord> = records.iter().collect();
    sorted.sort_by(|a, b| canonical_order(a, b));
    if let Some(r) = sorted.iter().find(|r| !r.kl_bits.is_finite()) {
        return Err(Error::Table(format!(
            "non-finite kl_bits for {} / {}",
            r.automaton_id, r.model_id
        )));
    }

    let n = sorted.len();
    let raw: Vec<[f64; 8]> = sorted.iter().map(|r| raw_predictors(r)).collect();
    let mut x = DMatrix::from_element(n, PREDICTORS.len() + 1, 1.0);
    let mut constant = Vec::new();
    for (j, name) in PREDICTORS.iter().enumerate() {
        let col: Vec<f64> = raw.iter().map(|row| row[j]).collect();
        match zscore(&col, name) {
            Ok(z) => x.column_mut(j + 1).copy_from_slice(&z),
            Err(Error::ConstantColumn(c)) => constant.push(c),
            Err(e) => return Err(e),
        }
    }
    if !constant.is_empty() {
        return Err(Error::ConstantColumn(constant.join(", ")));
    }
    let y = DVector::from_iterator(n, sorted.iter().map(|r| r.kl_bits));
    let mut names = vec![INTERCEPT.to_string()];
    names.extend(PREDICTORS.iter().map(|s| s.to_string()));
    DesignMatrix::new(x, y, names)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub column_names: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub r_squared: f64,
    pub n: usize,
    /// Number of predictors, not counting the intercept.
    pub k: usize,
    pub residual_variance: f64,
    pub rss: f64,
}

/// Least-squares fit of `dm.y` on all columns of `dm.x`.
pub fn ols_fit(dm: &DesignMatrix) -> Result<RegressionFit> {
    let (n, p) = dm.x.shape();
    if p == 0 {
        return Err(Error::Shape("design matrix has no columns".into()));
    }
    if n <= p {
        return Err(Error::TooFewRecords {
            needed: p + 1,
            got: n,
        });
    }
    if dm.x.iter().chain(dm.y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Shape("design matrix or response has non-finite entries".into()));
    }

    let a = faer::Mat::<f64>::from_fn(n, p, |i, j| dm.x[(i, j)]);
    let qr = a.col_piv_qr();
    let r = qr.thin_R();
    let perm: Vec<usize> = qr.P().arrays().0.to_vec();

    let r00 = r[(0, 0)].abs();
    let rank = (0..p)
        .take_while(|&j| r00 > 0.0 && r[(j, j)].abs() > RANK_TOL * r00)
        .count();
    if rank < p {
        return Err(Error::RankDeficient(dependent_set(&r, &perm, rank, &dm.column_names)));
    }

    let q = qr.compute_thin_Q();
    let qty: Vec<f64> = (0..p)
        .map(|j| (0..n).map(|i| q[(i, j)] * dm.y[i]).sum())
        .collect();
    let beta_piv = back_substitute(&r, &qty);
    let mut beta = vec![0.0; p];
    for (j, &orig) in perm.iter().enumerate() {
        beta[orig] = beta_piv[j];
    }

    let fitted = &dm.x * DVector::from_column_slice(&beta);
    let mut rss: f64 = (&dm.y - &fitted).iter().map(|e| e * e).sum();
    let y_norm2: f64 = dm.y.iter().map(|v| v * v).sum();
    if rss <= (64.0 * f64::EPSILON).powi(2) * y_norm2 * n as f64 {
        rss = 0.0;
    }
    let df = (n - p) as f64;
    let sigma2 = rss / df;

    // Row norms of R⁻¹ give diag((RᵀR)⁻¹) in pivoted order.
    let rinv = upper_inverse(&r);
    let mut stderr = vec![0.0; p];
    for (j, &orig) in perm.iter().enumerate() {
        let d: f64 = (j..p).map(|k| rinv[j][k] * rinv[j][k]).sum();
        stderr[orig] = (sigma2 * d).sqrt();
    }

    let t_dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Config(e.to_string()))?;
    let mut t_stats = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    for j in 0..p {
        let t = beta[j] / stderr[j];
        t_stats.push(t);
        p_values.push(if stderr[j] == 0.0 {
            0.0
        } else {
            (2.0 * t_dist.sf(t.abs())).clamp(0.0, 1.0)
        });
    }

    let mean_y = dm.y.iter().sum::<f64>() / n as f64;
    let tss: f64 = dm.y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { f64::NAN };

    Ok(RegressionFit {
        column_names: dm.column_names.clone(),
        beta_hat: beta,
        stderr,
        t_stats,
        p_values,
        r_squared,
        n,
        k: p - 1,
        residual_variance: sigma2,
        rss,
    })
}

fn back_substitute(r: &faer::MatRef<'_, f64>, b: &[f64]) -> Vec<f64> {
    let p = b.len();
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|k| r[(i, k)] * x[k]).sum();
        x[i] = (b[i] - s) / r[(i, i)];
    }
    x
}

fn upper_inverse(r: &faer::MatRef<'_, f64>) -> Vec<Vec<f64>> {
    let p = r.ncols();
    let mut inv = vec![vec![0.0; p]; p];
    for c in 0..p {
        let mut e = vec![0.0; p];
        e[c] = 1.0;
        let col = back_substitute(r, &e);
        for i in 0..p {
            inv[i][c] = col[i];
        }
    }
    inv
}

/// The first column dropped by the pivoting together with the kept columns
/// that express it.
fn dependent_set(
    r: &faer::MatRef<'_, f64>,
    perm: &[usize],
    rank: usize,
    names: &[String],
) -> Vec<String> {
    let r11 = faer::Mat::<f64>::from_fn(rank, rank, |i, j| r[(i, j)]);
    let rhs: Vec<f64> = (0..rank).map(|i| r[(i, rank)]).collect();
    let z = back_substitute(&r11.as_ref(), &rhs);
    let scale = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut cols: Vec<usize> = (0..rank)
        .filter(|&i| z[i].abs() > 1e-8 * scale.max(1.0))
        .map(|i| perm[i])
        .collect();
    cols.push(perm[rank]);
    cols.sort_unstable();
    cols.into_iter().map(|c| names[c].clone()).collect()
}

/// Display convention for p-values.
pub fn format_p(p: f64) -> String {
    if p.is_nan() {
        "NA".into()
    } else if p < 0.001 {
        "<0.001".into()
    } else if p < 0.01 {
        "<0.01".into()
    } else if p < 0.05 {
        "<0.05".into()
    } else {
        format!("{p:.2}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport {
    pub text: String,
    pub tsv: String,
}

pub fn regression_report(fit: &RegressionFit) -> RegressionReport {
    let rows: Vec<[String; 4]> = fit
        .column_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            [
                name.clone(),
                format!("{:.3}", fit.beta_hat[j]),
                format!("{:.3}", fit.stderr[j]),
                format_p(fit.p_values[j]),
            ]
        })
        .collect();
    let header = ["", "β̂", "SE", "p"];
    let mut widths = header.map(|h| h.chars().count());
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let pad = |s: &str, w: usize, left: bool| {
        let fill = " ".repeat(w - s.chars().count());
        if left {
            format!("{s}{fill}")
        } else {
            format!("{fill}{s}")
        }
    };
    let mut text = String::new();
    let line = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| pad(c, widths[i], i == 0))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(text, "{}", line(&header.map(String::from)));
    for row in &rows {
        let _ = writeln!(text, "{}", line(row));
    }
    let _ = writeln!(
        text,
        "N = {}, k = {}, R² = {:.4}, σ̂² = {:.4}",
        fit.n, fit.k, fit.r_squared, fit.residual_variance
    );

    let mut tsv = String::from("term\tbeta\tse\tt\tp\tp_display\n");
    for (j, name) in fit.column_names.iter().enumerate() {
        let _ = writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{}\t{}",
            name,
            fit.beta_hat[j],
            fit.stderr[j],
            fit.t_stats[j],
            fit.p_values[j],
            format_p(fit.p_values[j])
        );
    }
    RegressionReport { text, tsv }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand_distr::{Distribution, Normal};

    fn record(q: usize, s: usize, r: usize, d: usize, kl: f64) -> EvalRecord {
        EvalRecord {
            automaton_id: format!("q{q}-s{s}-R{r}"),
            model_id: format!("rnn-D{d}"),
            hidden: d,
            num_states: q,
            alphabet_size: s,
            rank: r,
            expected_length: 1.0 + (q * 7 + s * 3 + r) as f64 % 11.0,
            entropy_bits: 2.0 + ((q * 5 + s * 11 + r * 3) % 13) as f64,
            kl_bits: kl,
            kl_stderr_bits: 0.1,
        }
    }

    fn grid_records(seed: u64) -> Vec<EvalRecord> {
        let mut rng = rng::stream(seed, "grid", 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut out = Vec::new();
        for q in [2, 4, 8] {
            for s in [2, 4, 8] {
                for r in [1, 2, 4].into_iter().filter(|&r| r <= q.min(s + 1)) {
                    for d in [2, 8, 16] {
                        out.push(record(q, s, r, d, 1.0 + 0.1 * q as f64 + noise.sample(&mut rng)));
                    }
                }
            }
        }
        out
    }

    fn simple(x: &[f64], y: &[f64]) -> DesignMatrix {
        let n = x.len();
        let xm = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
        DesignMatrix::new(xm, DVector::from_column_slice(y), vec!["Intercept".into(), "x".into()]).unwrap()
    }

    #[test]
    fn zscore_examples() {
        assert_eq!(zscore(&[1.0, 2.0, 3.0], "x").unwrap(), vec![-1.0, 0.0, 1.0]);
        assert!(matches!(zscore(&[5.0, 5.0, 5.0], "c"), Err(Error::ConstantColumn(c)) if c == "c"));
        let z = zscore(&[0.3, 7.0, -2.0, 11.5, 4.25], "x").unwrap();
        assert_abs_diff_eq!(z.iter().sum::<f64>() / 5.0, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn design_matrix_columns() {
        let recs = grid_records(1);
        let dm = build_design_matrix(&recs).unwrap();
        assert_eq!(dm.x.ncols(), 9);
        assert_eq!(dm.column_names[0], INTERCEPT);
        assert_eq!(&dm.column_names[1..], PREDICTORS.map(String::from).as_slice());
        let n = dm.x.nrows() as f64;
        for j in 1..9 {
            let c = dm.x.column(j);
            let mean = c.sum() / n;
            let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(sd, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn product_column_is_built_from_raw_values() {
        let recs = grid_records(2);
        let dm = build_design_matrix(&recs).unwrap();
        let mut sorted = recs.clone();
        sorted.sort_by(canonical_order);
        let prod: Vec<f64> = sorted.iter().map(|r| (r.num_states * r.alphabet_size) as f64).collect();
        let z = zscore(&prod, "|Q||Σ|").unwrap();
        for (i, v) in z.iter().enumerate() {
            assert_eq!(dm.x[(i, 3)], *v);
        }
    }

    #[test]
    fn constant_predictor_is_named() {
        let recs: Vec<EvalRecord> = grid_records(3).into_iter().filter(|r| r.hidden == 16).collect();
        match build_design_matrix(&recs) {
            Err(Error::ConstantColumn(c)) => assert_eq!(c, "D"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_records() {
        let recs = grid_records(4);
        assert!(matches!(
            build_design_matrix(&recs[..9]),
            Err(Error::TooFewRecords { needed: 10, got: 9 })
        ));
    }

    #[test]
    fn exact_fit_line() {
        let fit = ols_fit(&simple(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0])).unwrap();
        assert_abs_diff_eq!(fit.beta_hat[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.beta_hat[1], 2.0, epsilon = 1e-12);
        assert_eq!(fit.rss, 0.0);
        assert_eq!(fit.stderr, vec![0.0, 0.0]);
        assert_eq!(fit.p_values, vec![0.0, 0.0]);
    }

    #[test]
    fn textbook_simple_regression() {
        // Closed form: slope = Sxy/Sxx, SE(slope) = sqrt(s²/Sxx),
        // SE(intercept) = sqrt(s² (1/n + x̄²/Sxx)).
        let x = [1.0, 2.0, 4.0, 5.0, 7.0, 8.0];
        let y = [1.1, 2.3, 3.9, 5.2, 6.8, 8.4];
        let n = x.len() as f64;
        let xm = x.iter().sum::<f64>() / n;
        let ym = y.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - xm) * (b - ym)).sum();
        let b1 = sxy / sxx;
        let b0 = ym - b1 * xm;
        let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - b0 - b1 * a).powi(2)).sum();
        let s2 = rss / (n - 2.0);
        let fit = ols_fit(&simple(&x, &y)).unwrap();
        assert_abs_diff_eq!(fit.beta_hat[1], b1, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.beta_hat[0], b0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.stderr[1], (s2 / sxx).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(fit.stderr[0], (s2 * (1.0 / n + xm * xm / sxx)).sqrt(), epsilon = 1e-12);
        // Tabulated 0.975 quantile of t with 4 df.
        let dist = StudentsT::new(0.0, 1.0, 4.0).unwrap();
        assert_abs_diff_eq!(2.0 * dist.sf(2.7764451051977987), 0.05, epsilon = 1e-9);
    }

    #[test]
    fn rank_deficiency_names_dependent_columns() {
        let n = 12;
        let x = DMatrix::from_fn(n, 4, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            2 => ((i * 7) % 5) as f64,
            _ => 2.0 * i as f64 - 3.0,
        });
        let y = DVector::from_fn(n, |i, _| (i % 3) as f64);
        let names = ["Intercept", "a", "b", "c"].map(String::from).to_vec();
        match ols_fit(&DesignMatrix::new(x, y, names).unwrap()) {
            Err(Error::RankDeficient(cols)) => {
                assert!(cols.contains(&"c".to_string()) || cols.contains(&"a".to_string()));
                assert!(!cols.contains(&"b".to_string()));
                assert_eq!(cols.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn normal_equations_hold() {
        let dm = build_design_matrix(&grid_records(5)).unwrap();
        let fit = ols_fit(&dm).unwrap();
        let resid = &dm.y - &dm.x * DVector::from_column_slice(&fit.beta_hat);
        let lhs = (dm.x.transpose() * resid).amax();
        let rhs = (dm.x.transpose() * &dm.y).amax();
        assert!(lhs < 1e-8 * rhs, "{lhs} vs {rhs}");
    }

    #[test]
    fn scale_equivariance() {
        let dm = build_design_matrix(&grid_records(6)).unwrap();
        let fit = ols_fit(&dm).unwrap();
        for c in [-3.5, 0.01, 1e4] {
            let mut scaled = dm.clone();
            scaled.y *= c;
            let g = ols_fit(&scaled).unwrap();
            for j in 0..fit.beta_hat.len() {
                assert_abs_diff_eq!(g.beta_hat[j], c * fit.beta_hat[j], epsilon = 1e-10 * c.abs() * (1.0 + fit.beta_hat[j].abs()));
                assert_abs_diff_eq!(g.stderr[j], c.abs() * fit.stderr[j], epsilon = 1e-10 * c.abs() * fit.stderr[j]);
                assert_abs_diff_eq!(g.t_stats[j], c.signum() * fit.t_stats[j], epsilon = 1e-10 * (1.0 + fit.t_stats[j].abs()));
                assert_abs_diff_eq!(g.p_values[j], fit.p_values[j], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn null_rejection_rate() {
        // y independent of X: |t| < 4 essentially always, and about 5% of
        // slope p-values fall below 0.05.
        let normal = Normal::new(0.0, 1.0).unwrap();
        let (reps, n, k) = (200, 500, 8);
        let mut rejections = 0;
        let mut tests = 0;
        let mut large_t_fits = 0;
        for rep in 0..reps {
            let mut rng = rng::stream(11, "null", rep);
            let x = DMatrix::from_fn(n, k + 1, |_, j| if j == 0 { 1.0 } else { normal.sample(&mut rng) });
            let y = DVector::from_fn(n, |_, _| normal.sample(&mut rng));
            let names = (0..=k).map(|j| format!("x{j}")).collect();
            let fit = ols_fit(&DesignMatrix::new(x, y, names).unwrap()).unwrap();
            large_t_fits += (1..=k).any(|j| fit.t_stats[j].abs() >= 4.0) as usize;
            for j in 1..=k {
                rejections += (fit.p_values[j] < 0.05) as usize;
                tests += 1;
            }
        }
        // P(|t| >= 4) per fit is about 5e-4.
        assert!(large_t_fits <= 1, "{large_t_fits} fits with |t| >= 4");
        // 1600 Bernoulli(0.05) trials: sd ≈ 0.0054; allow 4 sd.
        let rate = rejections as f64 / tests as f64;
        assert!((rate - 0.05).abs() < 4.0 * (0.05f64 * 0.95 / tests as f64).sqrt(), "rate {rate}");
    }

    #[test]
    fn coefficient_recovery() {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let beta_star = [1.5, -0.7, 0.0, 2.0, 0.3];
        let (trials, n) = (200, 80);
        let mut covered = 0;
        for t in 0..trials {
            let mut rng = rng::stream(12, "recover", t);
            let x = DMatrix::from_fn(n, 5, |_, j| if j == 0 { 1.0 } else { normal.sample(&mut rng) });
            let y = DVector::from_fn(n, |i, _| {
                (0..5).map(|j| x[(i, j)] * beta_star[j]).sum::<f64>() + 0.5 * normal.sample(&mut rng)
            });
            let names = (0..5).map(|j| format!("x{j}")).collect();
            let fit = ols_fit(&DesignMatrix::new(x, y, names).unwrap()).unwrap();
            if (0..5).all(|j| (fit.beta_hat[j] - beta_star[j]).abs() <= 3.0 * fit.stderr[j]) {
                covered += 1;
            }
        }
        assert!(covered >= 190, "covered {covered}/200");
    }

    #[test]
    fn p_value_display() {
        assert_eq!(format_p(0.0004), "<0.001");
        assert_eq!(format_p(0.26), "0.26");
        assert_eq!(format_p(0.03), "<0.05");
        assert_eq!(format_p(0.005), "<0.01");
        assert_eq!(format_p(0.05), "0.05");
    }

    #[test]
    fn report_layout() {
        let fit = ols_fit(&build_design_matrix(&grid_records(7)).unwrap()).unwrap();
        let rep = regression_report(&fit);
        let lines: Vec<&str> = rep.text.lines().collect();
        assert!(lines[1].starts_with("Intercept"));
        assert!(lines[9].starts_with("D "));
        assert_eq!(rep.tsv.lines().count(), 10);
        assert!(rep.tsv.starts_with("term\tbeta\tse\tt\tp\tp_display\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn permutation_invariance(seed in 0u64..1000, shuffle in 0u64..1000) {
            let recs = grid_records(seed);
            let mut perm = recs.clone();
            perm.shuffle(&mut rng::stream(shuffle, "perm", 0));
            let a = ols_fit(&build_design_matrix(&recs).unwrap()).unwrap();
            let b = ols_fit(&build_design_matrix(&perm).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn zscore_moments(v in proptest::collection::vec(-1e3f64..1e3, 2..40)) {
            prop_assume!(v.iter().any(|x| (x - v[0]).abs() > 1e-6));
            let z = zscore(&v, "x").unwrap();
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            let sd = (z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((sd - 1.0).abs() < 1e-10);
        }
    }
}
