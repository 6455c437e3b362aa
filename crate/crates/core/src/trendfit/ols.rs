use super::linalg::{Matrix, Qr};
use super::{FitError, RANK_TOLERANCE};

/// Coefficients, residuals, and classical covariance of a least-squares fit.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `(XᵀX)⁻¹`
    pub xtx_inv: Matrix,
    /// `s² (XᵀX)⁻¹` with `s² = RSS / (N − p)`.
    pub classical_cov: Matrix,
    pub rss: f64,
}

/// Least squares via Householder QR; the normal equations are never formed.
pub fn ols(x: &Matrix, y: &[f64]) -> Result<OlsFit, FitError> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(FitError::LengthMismatch(format!("{n} design rows, {} responses", y.len())));
    }
    if n <= p {
        return Err(FitError::InsufficientObservations { n_obs: n, n_cols: p });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite("response"));
    }
    let qr = Qr::new(x);
    if qr.min_relative_diagonal() <= RANK_TOLERANCE {
        return Err(FitError::RankDeficient);
    }
    let coefficients = qr.solve_least_squares(y);
    let fitted = x.matvec(&coefficients);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let xtx_inv = qr.xtx_inverse();
    let classical_cov = xtx_inv.scale(rss / (n - p) as f64);
    Ok(OlsFit {
        coefficients,
        residuals,
        xtx_inv,
        classical_cov,
        rss,
    })
}

/// `Σ_{t≥2} (e_t − e_{t−1})² / Σ_t e_t²`.
pub fn durbin_watson(residuals: &[f64]) -> Result<f64, FitError> {
    if residuals.len() < 2 {
        return Err(FitError::InsufficientObservations {
            n_obs: residuals.len(),
            n_cols: 1,
        });
    }
    let den: f64 = residuals.iter().map(|e| e * e).sum();
    if den == 0.0 {
        return Err(FitError::ZeroResiduals);
    }
    let num: f64 = residuals.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_design(xs: &[f64]) -> Matrix {
        Matrix::from_columns(&[xs.to_vec(), vec![1.0; xs.len()]])
    }

    #[test]
    fn exact_line() {
        let fit = ols(&line_design(&[0.0, 1.0, 2.0]), &[1.0, 3.0, 5.0]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-14);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-14);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-14));
    }

    #[test]
    fn exact_exponential_after_log() {
        let ys: Vec<f64> = (0..10).map(|t| (0.1 * t as f64 + 2.0).exp().ln()).collect();
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let fit = ols(&line_design(&xs), &ys).unwrap();
        assert!((fit.coefficients[0] - 0.1).abs() < 1e-13);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let xs: Vec<f64> = (0..20).map(|t| t as f64 * 0.7).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 1.3).sin() + 0.2 * x).collect();
        let x = line_design(&xs);
        let fit = ols(&x, &ys).unwrap();
        for v in x.tr_matvec(&fit.residuals) {
            assert!(v.abs() < 1e-12);
        }
        let sum: f64 = fit.residuals.iter().sum();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(
            ols(&line_design(&[0.0, 1.0]), &[1.0, 2.0]).unwrap_err(),
            FitError::InsufficientObservations { n_obs: 2, n_cols: 2 }
        );
        let collinear = Matrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]);
        assert_eq!(ols(&collinear, &[1.0, 2.0, 3.0]).unwrap_err(), FitError::RankDeficient);
        assert!(matches!(ols(&line_design(&[0.0, 1.0, 2.0]), &[1.0]), Err(FitError::LengthMismatch(_))));
    }

    #[test]
    fn durbin_watson_cases() {
        assert_eq!(durbin_watson(&[2.5, 2.5, 2.5]).unwrap(), 0.0);
        assert_eq!(durbin_watson(&[1.0, -1.0, 1.0, -1.0]).unwrap(), 3.0);
        assert_eq!(durbin_watson(&[0.0, 0.0]).unwrap_err(), FitError::ZeroResiduals);
        assert!(durbin_watson(&[1.0]).is_err());
        let e = [0.3, -1.2, 0.4, 2.0, -0.1];
        let flipped: Vec<f64> = e.iter().map(|v| -v).collect();
        assert_eq!(durbin_watson(&e).unwrap(), durbin_watson(&flipped).unwrap());
    }
}
