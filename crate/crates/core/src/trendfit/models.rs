use std::fmt;

use log::warn;

use crate::corpus::VolumeSeries;
use crate::metrics::MeanLagPoint;

use super::hac::{bartlett_bandwidth, hac_covariance};
use super::linalg::Matrix;
use super::ols::{durbin_watson, ols};
use super::FitError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `ln n(y) = m y + b`
    LogLinear,
    /// `ln n(y) = m y + μ (y − y0)₊ + b`
    HingeLogLinear,
    /// `v(y) = m y + b`, identity response
    Linear,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LogLinear => "loglinear",
            ModelKind::HingeLogLinear => "hinge",
            ModelKind::Linear => "linear",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `(x)₊ = max(x, 0)`
pub fn hinge(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    /// `m`, `mu`, or `b`.
    pub name: &'static str,
    pub estimate: f64,
    pub classical_se: f64,
    pub hac_se: f64,
    /// `estimate / hac_se`; asymptotically normal, not t-distributed.
    pub t_stat: f64,
}

/// Result of one model fit, parameterized in raw calendar years.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub kind: ModelKind,
    /// Slope, optional hinge coefficient, then intercept.
    pub coefficients: Vec<Coefficient>,
    /// Years actually used, in time order.
    pub years: Vec<i32>,
    /// Transformed response (log volume or mean lag).
    pub response: Vec<f64>,
    pub residuals: Vec<f64>,
    pub classical_cov: Matrix,
    pub hac_cov: Matrix,
    /// `None` when every residual is exactly zero.
    pub durbin_watson: Option<f64>,
    pub n_obs: usize,
    pub bandwidth: usize,
    pub knot: Option<f64>,
    /// Years dropped because the log response was undefined.
    pub excluded_years: Vec<i32>,
}

impl FitResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn slope(&self) -> &Coefficient {
        &self.coefficients[0]
    }

    pub fn hinge(&self) -> Option<&Coefficient> {
        self.coefficient("mu")
    }

    pub fn intercept(&self) -> &Coefficient {
        self.coefficients.last().expect("intercept present")
    }

    /// Model prediction at a (possibly fractional) year on the response scale.
    pub fn predict(&self, year: f64) -> f64 {
        let mut v = self.slope().estimate * year + self.intercept().estimate;
        if let (Some(mu), Some(y0)) = (self.hinge(), self.knot) {
            v += mu.estimate * hinge(year - y0);
        }
        v
    }
}

/// Fits `kind` to `(year, response)` pairs given in time order.
///
/// The year regressor is centered on its mean internally; slopes are
/// unaffected and the intercept and covariances are mapped back to the
/// raw-year parameterization.
pub fn fit_linear_years(
    kind: ModelKind,
    years: &[i32],
    response: &[f64],
    knot: Option<f64>,
) -> Result<FitResult, FitError> {
    if years.len() != response.len() {
        return Err(FitError::LengthMismatch(format!("{} years, {} responses", years.len(), response.len())));
    }
    let n = years.len();
    let center = years.iter().map(|&y| y as f64).sum::<f64>() / n.max(1) as f64;
    let mut columns = vec![years.iter().map(|&y| y as f64 - center).collect::<Vec<_>>()];
    let mut names = vec!["m"];
    if kind == ModelKind::HingeLogLinear {
        let y0 = knot.ok_or(FitError::LengthMismatch("hinge model requires a knot".into()))?;
        columns.push(years.iter().map(|&y| hinge(y as f64 - y0)).collect());
        names.push("mu");
    }
    columns.push(vec![1.0; n]);
    names.push("b");
    let x = Matrix::from_columns(&columns);

    let fit = ols(&x, response)?;
    let bandwidth = bartlett_bandwidth(n);
    let hac = hac_covariance(&x, &fit.residuals, bandwidth)?;

    // raw intercept b = b_c − m·ȳ
    let p = columns.len();
    let mut to_raw = Matrix::identity(p);
    to_raw[(p - 1, 0)] = -center;
    let beta = to_raw.matvec(&fit.coefficients);
    let map = |cov: &Matrix| to_raw.matmul(cov).matmul(&to_raw.transpose()).symmetrized();
    let (classical_cov, hac_cov) = (map(&fit.classical_cov), map(&hac));

    let coefficients = names
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let hac_se = hac_cov[(i, i)].max(0.0).sqrt();
            Coefficient {
                name,
                estimate: beta[i],
                classical_se: classical_cov[(i, i)].max(0.0).sqrt(),
                hac_se,
                t_stat: beta[i] / hac_se,
            }
        })
        .collect();

    Ok(FitResult {
        kind,
        coefficients,
        years: years.to_vec(),
        response: response.to_vec(),
        durbin_watson: durbin_watson(&fit.residuals).ok(),
        residuals: fit.residuals,
        classical_cov,
        hac_cov,
        n_obs: n,
        bandwidth,
        knot: if kind == ModelKind::HingeLogLinear { knot } else { None },
        excluded_years: Vec::new(),
    })
}

fn log_volume(series: &VolumeSeries) -> (Vec<i32>, Vec<f64>, Vec<i32>) {
    let mut years = Vec::new();
    let mut logs = Vec::new();
    let mut excluded = Vec::new();
    for &(y, n) in &series.points {
        if n > 0 {
            years.push(y);
            logs.push((n as f64).ln());
        } else {
            excluded.push(y);
        }
    }
    if !excluded.is_empty() {
        warn!(
            "{}: excluding zero-volume years {:?} from log-linear fit",
            series.entity, excluded
        );
    }
    (years, logs, excluded)
}

/// `ln n(y) = m y + b` on the strictly positive years of `series`.
pub fn fit_volume_loglinear(series: &VolumeSeries) -> Result<FitResult, FitError> {
    let (years, logs, excluded) = log_volume(series);
    if years.len() < 3 {
        return Err(FitError::InsufficientObservations {
            n_obs: years.len(),
            n_cols: 2,
        });
    }
    let mut fit = fit_linear_years(ModelKind::LogLinear, &years, &logs, None)?;
    fit.excluded_years = excluded;
    Ok(fit)
}

/// `ln n(y) = m y + μ (y − y0)₊ + b` with `y0` held fixed.
pub fn fit_volume_hinge(series: &VolumeSeries, knot: f64) -> Result<FitResult, FitError> {
    if !knot.is_finite() {
        return Err(FitError::NonFinite("knot"));
    }
    let (years, logs, excluded) = log_volume(series);
    let mut fit = fit_linear_years(ModelKind::HingeLogLinear, &years, &logs, Some(knot))?;
    let left = years.iter().filter(|&&y| f64::from(y) <= knot).count();
    let right = years.len() - left;
    if left < 2 {
        return Err(FitError::KnotSide { knot, side: "left" });
    }
    if right < 2 {
        return Err(FitError::KnotSide { knot, side: "right" });
    }
    fit.excluded_years = excluded;
    Ok(fit)
}

/// `δ̄(y) = m_δ y + b_δ` on the years with a defined mean lag.
pub fn fit_lag_linear(series: &[MeanLagPoint]) -> Result<FitResult, FitError> {
    if series.len() < 3 {
        return Err(FitError::InsufficientObservations {
            n_obs: series.len(),
            n_cols: 2,
        });
    }
    let years: Vec<i32> = series.iter().map(|p| p.year).collect();
    let lags: Vec<f64> = series.iter().map(|p| p.mean_lag).collect();
    fit_linear_years(ModelKind::Linear, &years, &lags, None)
}

/// Predicted versus observed lag slope under homogeneous keyword growth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyReport {
    pub m_leader: f64,
    pub m_follower: f64,
    /// `(m_leader − m_follower) / m_follower`
    pub predicted: f64,
    pub observed: f64,
    pub observed_hac_se: f64,
    /// `observed − predicted`
    pub difference: f64,
    /// `difference / observed_hac_se`
    pub se_multiples: f64,
}

pub fn slope_consistency(m_leader: f64, m_follower: f64, observed: f64, observed_se: f64) -> Result<ConsistencyReport, FitError> {
    if m_follower == 0.0 {
        return Err(FitError::ZeroSlope);
    }
    let predicted = (m_leader - m_follower) / m_follower;
    let difference = observed - predicted;
    Ok(ConsistencyReport {
        m_leader,
        m_follower,
        predicted,
        observed,
        observed_hac_se: observed_se,
        difference,
        se_multiples: difference / observed_se,
    })
}

pub fn lag_slope_consistency(m_leader: f64, m_follower: f64, lag_fit: &FitResult) -> Result<ConsistencyReport, FitError> {
    let s = lag_fit.slope();
    slope_consistency(m_leader, m_follower, s.estimate, s.hac_se)
}

/// Year where a fitted line crosses zero, `−b/m`.
pub fn zero_crossing_of_fit(fit: &FitResult) -> Result<f64, FitError> {
    let m = fit.slope().estimate;
    if m == 0.0 {
        return Err(FitError::ZeroSlope);
    }
    Ok(-fit.intercept().estimate / m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EntityId;

    fn volume(points: Vec<(i32, u64)>) -> VolumeSeries {
        VolumeSeries {
            entity: EntityId::new("X").unwrap(),
            points,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn hinge_function() {
        assert_eq!(hinge(-2.0), 0.0);
        assert_eq!(hinge(0.0), 0.0);
        assert_eq!(hinge(1.5), 1.5);
    }

    #[test]
    fn linear_lag_exact() {
        let pts: Vec<MeanLagPoint> = (2000..2010)
            .map(|y| MeanLagPoint {
                year: y,
                mean_lag: -0.5 * y as f64 + 1005.5,
                m: 3,
            })
            .collect();
        let fit = fit_lag_linear(&pts).unwrap();
        assert!((fit.slope().estimate + 0.5).abs() < 1e-12);
        assert!(rel(fit.intercept().estimate, 1005.5) < 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-9));
        assert!((zero_crossing_of_fit(&fit).unwrap() - 2011.0).abs() < 1e-9);
    }

    #[test]
    fn constant_lag_has_zero_slope() {
        let pts: Vec<MeanLagPoint> = (1990..1996).map(|y| MeanLagPoint { year: y, mean_lag: 4.0, m: 1 }).collect();
        let fit = fit_lag_linear(&pts).unwrap();
        assert!(fit.slope().estimate.abs() < 1e-12);
        assert_eq!(zero_crossing_of_fit(&fit).unwrap_err(), FitError::ZeroSlope);
        assert!(fit_lag_linear(&pts[..2]).is_err());
    }

    #[test]
    fn zero_volume_year_is_excluded() {
        let pts: Vec<(i32, u64)> = (1980..1990)
            .map(|y| (y, if y == 1980 { 0 } else { (1000.0 * (0.2 * (y - 1980) as f64).exp()).round() as u64 }))
            .collect();
        let fit = fit_volume_loglinear(&volume(pts)).unwrap();
        assert_eq!(fit.excluded_years, vec![1980]);
        assert_eq!(fit.n_obs, 9);
        assert!((fit.slope().estimate - 0.2).abs() < 1e-3);
    }

    #[test]
    fn loglinear_needs_three_positive_years() {
        let fit = fit_volume_loglinear(&volume(vec![(1, 0), (2, 5), (3, 6), (4, 0)]));
        assert!(matches!(fit, Err(FitError::InsufficientObservations { n_obs: 2, .. })));
    }

    #[test]
    fn hinge_knot_after_data_is_rank_deficient() {
        let pts: Vec<(i32, u64)> = (2000..2010).map(|y| (y, 100 + (y - 2000) as u64 * 50)).collect();
        assert_eq!(fit_volume_hinge(&volume(pts.clone()), 2012.5).unwrap_err(), FitError::RankDeficient);
        assert_eq!(fit_volume_hinge(&volume(pts.clone()), 2000.0).unwrap_err(), FitError::RankDeficient);
        assert_eq!(fit_volume_hinge(&volume(pts.clone()), 1990.0).unwrap_err(), FitError::RankDeficient);
        assert!(matches!(
            fit_volume_hinge(&volume(pts), 2008.5),
            Err(FitError::KnotSide { side: "right", .. })
        ));
    }

    #[test]
    fn early_knot_collapses_to_loglinear_with_summed_slope() {
        let (m, mu, y0) = (0.3, -0.1, 1995.0);
        let pts: Vec<(i32, u64)> = (2000..2020)
            .map(|y| {
                let t = f64::from(y);
                (y, (8.0 + m * (t - 2000.0) + mu * hinge(t - y0)).exp().round() as u64)
            })
            .collect();
        let fit = fit_volume_loglinear(&volume(pts.clone())).unwrap();
        assert!((fit.slope().estimate - (m + mu)).abs() < 1e-4, "{}", fit.slope().estimate);
        assert_eq!(fit_volume_hinge(&volume(pts), y0).unwrap_err(), FitError::RankDeficient);
    }

    #[test]
    fn consistency_arithmetic() {
        let r = slope_consistency(0.1047, 0.2935, -0.5964, 0.008).unwrap();
        assert!((r.predicted - (-0.6433)).abs() < 5e-5);
        assert!(r.se_multiples > 5.0 && r.se_multiples < 6.0, "{}", r.se_multiples);
        assert_eq!(slope_consistency(0.2, 0.2, 0.0, 1.0).unwrap().predicted, 0.0);
        assert_eq!(slope_consistency(0.1, 0.0, 0.0, 1.0).unwrap_err(), FitError::ZeroSlope);
    }

    #[test]
    fn year_shift_leaves_slope_inference_unchanged() {
        let years: Vec<i32> = (0..40).collect();
        let resp: Vec<f64> = years
            .iter()
            .map(|&y| 0.3 * y as f64 + (y as f64 * 0.9).sin() + 0.5 * (y as f64 * 0.31).cos())
            .collect();
        let shifted: Vec<i32> = years.iter().map(|y| y + 1962).collect();
        let a = fit_linear_years(ModelKind::Linear, &years, &resp, None).unwrap();
        let b = fit_linear_years(ModelKind::Linear, &shifted, &resp, None).unwrap();
        assert!(rel(a.slope().estimate, b.slope().estimate) < 1e-8);
        assert!(rel(a.slope().hac_se, b.slope().hac_se) < 1e-8);
        assert!(rel(a.slope().t_stat, b.slope().t_stat) < 1e-8);
        assert!(rel(b.intercept().estimate, a.intercept().estimate - 1962.0 * a.slope().estimate) < 1e-8);
    }

    #[test]
    fn t_stat_is_estimate_over_hac_se() {
        let years: Vec<i32> = (1990..2020).collect();
        let resp: Vec<f64> = years.iter().map(|&y| 0.05 * y as f64 + ((y * 7919) % 13) as f64 * 0.01).collect();
        let fit = fit_linear_years(ModelKind::Linear, &years, &resp, None).unwrap();
        for c in &fit.coefficients {
            assert_eq!(c.t_stat, c.estimate / c.hac_se);
        }
        assert_eq!(fit.bandwidth, 6);
        assert!(fit.durbin_watson.is_some());
    }
}
