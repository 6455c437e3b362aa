use super::linalg::{Matrix, Qr};
use super::{FitError, RANK_TOLERANCE};

/// `⌈√N⌉`, computed in integers.
pub fn bartlett_bandwidth(n_obs: usize) -> usize {
    let mut b = (n_obs as f64).sqrt() as usize;
    while b * b < n_obs {
        b += 1;
    }
    while b > 1 && (b - 1) * (b - 1) >= n_obs {
        b -= 1;
    }
    b.max(1)
}

/// `w_j = 1 − j/B` for `j = 0..B`; lag 0 has weight 1.
pub fn bartlett_weights(bandwidth: usize) -> Vec<f64> {
    (0..bandwidth)
        .map(|j| 1.0 - j as f64 / bandwidth as f64)
        .collect()
}

/// Bartlett-kernel HAC sandwich `(XᵀX)⁻¹ Ω (XᵀX)⁻¹`.
///
/// `Ω = Σ_t u_t u_tᵀ + Σ_{j=1}^{B−1} w_j Σ_t (u_t u_{t−j}ᵀ + u_{t−j} u_tᵀ)` with
/// score rows `u_t = x_t e_t`. No degrees-of-freedom correction is applied.
/// Residuals must be in time order.
pub fn hac_covariance(x: &Matrix, residuals: &[f64], bandwidth: usize) -> Result<Matrix, FitError> {
    if bandwidth < 1 {
        return Err(FitError::InvalidBandwidth);
    }
    let (n, p) = (x.rows(), x.cols());
    if residuals.len() != n {
        return Err(FitError::LengthMismatch(format!("{n} design rows, {} residuals", residuals.len())));
    }
    let qr = Qr::new(x);
    if qr.min_relative_diagonal() <= RANK_TOLERANCE {
        return Err(FitError::RankDeficient);
    }
    let bread = qr.xtx_inverse();

    let scores: Vec<Vec<f64>> = (0..n)
        .map(|t| x.row(t).into_iter().map(|v| v * residuals[t]).collect())
        .collect();
    let mut meat = Matrix::zeros(p, p);
    for (lag, w) in bartlett_weights(bandwidth).into_iter().enumerate().take(n) {
        let mut gamma = Matrix::zeros(p, p);
        for t in lag..n {
            let (a, b) = (&scores[t], &scores[t - lag]);
            for i in 0..p {
                for j in 0..p {
                    gamma[(i, j)] += a[i] * b[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..p {
                meat[(i, j)] += if lag == 0 {
                    gamma[(i, j)]
                } else {
                    w * (gamma[(i, j)] + gamma[(j, i)])
                };
            }
        }
    }
    Ok(bread.matmul(&meat).matmul(&bread).symmetrized())
}
