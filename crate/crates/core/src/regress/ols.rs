use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::RegressError;

/// Relative size below which an R diagonal entry marks a dependent column.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// `const` followed by the regressor names.
    pub names: Vec<String>,
    pub coef: Vec<f64>,
    /// HC1 robust standard errors when requested, classical otherwise.
    pub se: Vec<f64>,
    pub r2: f64,
    pub n: usize,
    pub residuals: Vec<f64>,
}

/// Least squares with intercept via Householder QR on unit-scaled columns.
pub fn ols_fit(columns: &[Vec<f64>], names: &[String], y: &[f64], robust: bool) -> Result<OlsFit, RegressError> {
    let n = y.len();
    let p = columns.len() + 1;
    if names.len() != columns.len() {
        return Err(RegressError::Input(format!("{} names for {} columns", names.len(), columns.len())));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(RegressError::Input("column lengths differ from outcome".into()));
    }
    if n <= p {
        return Err(RegressError::Input(format!("need n > p, got n = {n}, p = {p}")));
    }
    let mut all_names = vec!["const".to_string()];
    all_names.extend(names.iter().cloned());

    // Scale each regressor to unit RMS; the intercept stays 1.
    let mut scale = vec![1.0; p];
    for (j, c) in columns.iter().enumerate() {
        let rms = (c.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        scale[j + 1] = if rms > 0.0 { rms } else { 1.0 };
    }
    let x = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] / scale[j] });
    let yv = DVector::from_column_slice(y);

    let qr = x.clone().qr();
    let r = qr.r();
    let q = qr.q();
    let rmax = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let dependent: Vec<String> = (0..p).filter(|&j| r[(j, j)].abs() <= RANK_TOL * rmax).map(|j| all_names[j].clone()).collect();
    if !dependent.is_empty() {
        return Err(RegressError::RankDeficient(dependent));
    }
    let qty = q.transpose() * &yv;
    let beta_s = r.solve_upper_triangular(&qty).ok_or_else(|| RegressError::RankDeficient(vec!["(singular R)".into()]))?;
    let resid = &yv - &x * &beta_s;
    let ssr = resid.norm_squared();
    let mean = yv.mean();
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if !(sst > 0.0) {
        return Err(RegressError::Input("outcome has zero variance".into()));
    }

    let rinv = r.solve_upper_triangular(&DMatrix::identity(p, p)).expect("checked non-singular");
    let cov_s = if robust {
        // (X'X)^-1 X' diag(e^2) X (X'X)^-1 = R^-1 (Q' diag(e^2) Q) R^-T
        let mut qe = q.clone();
        for i in 0..n {
            let e = resid[i];
            qe.row_mut(i).scale_mut(e);
        }
        let meat = qe.transpose() * qe;
        (&rinv * meat * rinv.transpose()) * (n as f64 / (n - p) as f64)
    } else {
        (&rinv * rinv.transpose()) * (ssr / (n - p) as f64)
    };
    let coef: Vec<f64> = (0..p).map(|j| beta_s[j] / scale[j]).collect();
    let se: Vec<f64> = (0..p).map(|j| cov_s[(j, j)].max(0.0).sqrt() / scale[j]).collect();
    Ok(OlsFit { names: all_names, coef, se, r2: 1.0 - ssr / sst, n, residuals: resid.iter().copied().collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn three_points_by_hand() {
        let fit = ols_fit(&[vec![0.0, 1.0, 2.0]], &names(1), &[1.0, 3.0, 5.0], true).unwrap();
        assert!((fit.coef[0] - 1.0).abs() < 1e-12 && (fit.coef[1] - 2.0).abs() < 1e-12, "{:?}", fit.coef);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_linear_fit() {
        let x1: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let x2: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).cos() * 1000.0).collect();
        let y: Vec<f64> = (0..50).map(|i| 0.5 - 3.0 * x1[i] + 0.002 * x2[i]).collect();
        let fit = ols_fit(&[x1, x2], &names(2), &y, true).unwrap();
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-10));
        assert!((fit.coef[2] - 0.002).abs() < 1e-12);
    }

    #[test]
    fn noise_coefficients_within_three_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let fit = ols_fit(&cols, &names(3), &y, true).unwrap();
        for j in 1..4 {
            assert!(fit.coef[j].abs() < 3.0 * fit.se[j], "{} vs {}", fit.coef[j], fit.se[j]);
        }
        let classical = ols_fit(&cols, &names(3), &y, false).unwrap();
        for j in 0..4 {
            assert!((fit.se[j] / classical.se[j] - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn hc1_matches_direct_formula() {
        // Small problem: compare against (X'X)^-1 X' diag(e^2) X (X'X)^-1 * n/(n-p) computed with explicit inverses.
        let x1 = vec![1.0, 2.0, 4.0, 3.0, 7.0, 5.0];
        let y = vec![2.0, 2.5, 5.0, 3.0, 9.0, 4.0];
        let fit = ols_fit(&[x1.clone()], &names(1), &y, true).unwrap();
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { x1[i] });
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        let beta = &xtx_inv * x.transpose() * DVector::from_column_slice(&y);
        let e = DVector::from_column_slice(&y) - &x * &beta;
        let meat = x.transpose() * DMatrix::from_diagonal(&e.map(|v| v * v)) * &x;
        let v = &xtx_inv * meat * &xtx_inv * (6.0 / 4.0);
        for j in 0..2 {
            assert!((fit.coef[j] - beta[j]).abs() < 1e-12);
            assert!((fit.se[j] - v[(j, j)].sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_names_columns() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let y: Vec<f64> = (0..10).map(|i| (i * i) as f64).collect();
        match ols_fit(&[a, b], &names(2), &y, true) {
            Err(RegressError::RankDeficient(cols)) => assert_eq!(cols, vec!["x1".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        assert!(ols_fit(&[vec![1.0, 2.0]], &names(1), &[1.0, 2.0], true).is_err());
    }
}
