//! Least-squares growth and lag models with autocorrelation-robust inference.
//!
//! Every fit is ordinary least squares solved through a Householder QR.
//! Standard errors come from a Bartlett-kernel HAC sandwich with bandwidth
//! `⌈√N⌉`; the reported t-statistics are only asymptotically normal.

mod hac;
mod knot;
pub mod linalg;
mod models;
mod ols;

use thiserror::Error;

pub use hac::{bartlett_bandwidth, bartlett_weights, hac_covariance};
pub use knot::{crossing_year, Knot};
pub use linalg::Matrix;
pub use models::{
    fit_lag_linear, fit_linear_years, fit_volume_hinge, fit_volume_loglinear, hinge, lag_slope_consistency,
    slope_consistency, zero_crossing_of_fit, Coefficient, ConsistencyReport, FitResult, ModelKind,
};
pub use ols::{durbin_watson, ols, OlsFit};

/// Relative threshold on `|R_jj| / ‖x_j‖` below which a design is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need more observations than columns: {n_obs} rows for {n_cols} columns")]
    InsufficientObservations { n_obs: usize, n_cols: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("bandwidth must be at least 1")]
    InvalidBandwidth,
    #[error("durbin-watson undefined: residuals are all zero")]
    ZeroResiduals,
    #[error("follower never rises above leader in the overlapping years")]
    NoCrossing,
    #[error("follower is above leader throughout the overlap; crossing precedes the data")]
    CrossingBeforeData,
    #[error("knot {knot} leaves fewer than 2 positive observations on the {side} side")]
    KnotSide { knot: f64, side: &'static str },
    #[error("fitted slope is zero")]
    ZeroSlope,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}
