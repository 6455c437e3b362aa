//! Descriptive metrics over keyword portfolios: shares, total variation
//! distance, entropy, and keyword lag.

use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, EntityId};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{entity} has zero total volume in {year}; share distribution undefined")]
    ZeroVolume { entity: String, year: i32 },
    #[error("distributions are indexed over different keyword lists")]
    KeywordMismatch,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("year {year} outside {entity}'s range {first}..={last}")]
    YearOutOfRange {
        entity: String,
        year: i32,
        first: i32,
        last: i32,
    },
}

/// Tolerance on the unit-sum check for share vectors.
pub const SHARE_SUM_TOLERANCE: f64 = 1e-12;

/// Estimated keyword shares for one entity-year.
#[derive(Debug, Clone, PartialEq)]
pub struct ShareDistribution {
    pub entity: EntityId,
    pub year: i32,
    keywords: Arc<[String]>,
    shares: Vec<f64>,
    /// Total volume backing the estimate.
    pub sample_size: u64,
}

impl ShareDistribution {
    /// Builds a distribution from explicit shares, checking range and unit sum.
    pub fn from_shares(
        entity: EntityId,
        year: i32,
        keywords: Arc<[String]>,
        shares: Vec<f64>,
        sample_size: u64,
    ) -> Result<Self, MetricsError> {
        if shares.len() != keywords.len() {
            return Err(MetricsError::KeywordMismatch);
        }
        if let Some(bad) = shares.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(MetricsError::InvalidDistribution(format!("share {bad} outside [0, 1]")));
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > SHARE_SUM_TOLERANCE {
            return Err(MetricsError::InvalidDistribution(format!("shares sum to {sum}")));
        }
        Ok(Self {
            entity,
            year,
            keywords,
            shares,
            sample_size,
        })
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn share_of(&self, keyword: &str) -> Option<f64> {
        let kw = crate::corpus::canonical_keyword(keyword);
        self.keywords.iter().position(|k| *k == kw).map(|i| self.shares[i])
    }

    fn same_index(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.keywords, &other.keywords) || self.keywords == other.keywords
    }
}

/// `p̂(y,k) = n(y,k) / n(y)` for one entity-year.
pub fn keyword_shares(corpus: &Corpus, entity: &EntityId, year: i32) -> Result<ShareDistribution, MetricsError> {
    let row = year_row(corpus, entity, year)?;
    let total: u64 = row.iter().sum();
    if total == 0 {
        return Err(MetricsError::ZeroVolume {
            entity: entity.to_string(),
            year,
        });
    }
    let n = total as f64;
    Ok(ShareDistribution {
        entity: entity.clone(),
        year,
        keywords: corpus.keyword_list(),
        shares: row.iter().map(|&c| c as f64 / n).collect(),
        sample_size: total,
    })
}

fn year_row<'a>(corpus: &'a Corpus, entity: &EntityId, year: i32) -> Result<&'a [u64], MetricsError> {
    match corpus.year_counts(entity, year)? {
        Some(row) => Ok(row),
        None => {
            let (first, last) = corpus.year_range(entity)?;
            Err(MetricsError::YearOutOfRange {
                entity: entity.to_string(),
                year,
                first,
                last,
            })
        }
    }
}

/// Total variation distance, half the ℓ1 distance between share vectors.
pub fn tvd(p: &ShareDistribution, q: &ShareDistribution) -> Result<f64, MetricsError> {
    if !p.same_index(q) {
        return Err(MetricsError::KeywordMismatch);
    }
    Ok(tvd_unchecked(&p.shares, &q.shares))
}

// Summation runs in keyword order so results never depend on scheduling.
fn tvd_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let l1: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    (0.5 * l1).min(1.0)
}

/// TVD over all (year, year) pairs of two entities.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub entity_row: EntityId,
    pub entity_col: EntityId,
    pub years_row: Vec<i32>,
    pub years_col: Vec<i32>,
    /// Row-major; `None` where either distribution is undefined.
    values: Vec<Option<f64>>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.years_col.len() + j]
    }

    pub fn at_years(&self, year_row: i32, year_col: i32) -> Option<f64> {
        let i = self.years_row.iter().position(|&y| y == year_row)?;
        let j = self.years_col.iter().position(|&y| y == year_col)?;
        self.get(i, j)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.years_row.len(), self.years_col.len())
    }

    /// `(year_row, year_col, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (i32, i32, Option<f64>)> + '_ {
        self.years_row.iter().enumerate().flat_map(move |(i, &yr)| {
            self.years_col
                .iter()
                .enumerate()
                .map(move |(j, &yc)| (yr, yc, self.get(i, j)))
        })
    }
}

fn share_rows(corpus: &Corpus, entity: &EntityId) -> Result<(Vec<i32>, Vec<Option<Vec<f64>>>), MetricsError> {
    let years: Vec<i32> = corpus.years(entity)?.collect();
    let rows = years
        .iter()
        .map(|&y| match keyword_shares(corpus, entity, y) {
            Ok(d) => Ok(Some(d.shares)),
            Err(MetricsError::ZeroVolume { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_, _>>()?;
    Ok((years, rows))
}

/// Pairwise TVD between every year of `entity_row` and every year of `entity_col`.
pub fn tvd_matrix(corpus: &Corpus, entity_row: &EntityId, entity_col: &EntityId) -> Result<DistanceMatrix, MetricsError> {
    let (years_row, rows) = share_rows(corpus, entity_row)?;
    let (years_col, cols) = share_rows(corpus, entity_col)?;
    let values = rows
        .par_iter()
        .flat_map_iter(|r| {
            cols.iter().map(move |c| match (r, c) {
                (Some(p), Some(q)) => Some(tvd_unchecked(p, q)),
                _ => None,
            })
        })
        .collect();
    Ok(DistanceMatrix {
        entity_row: entity_row.clone(),
        entity_col: entity_col.clone(),
        years_row,
        years_col,
        values,
    })
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &ShareDistribution) -> f64 {
    let h: f64 = -p
        .shares
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| s * s.ln())
        .sum::<f64>();
    let max = (p.shares.len() as f64).ln();
    // also maps −0 to +0
    if h > 0.0 { h.min(max) } else { 0.0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropySeries {
    pub entity: EntityId,
    /// `(year, entropy in nats, sample size)`; zero-volume years are omitted.
    pub points: Vec<(i32, f64, u64)>,
}

pub fn entropy_series(corpus: &Corpus, entity: &EntityId) -> Result<EntropySeries, MetricsError> {
    let mut points = Vec::new();
    for year in corpus.years(entity)? {
        match keyword_shares(corpus, entity, year) {
            Ok(d) => points.push((year, entropy(&d), d.sample_size)),
            Err(MetricsError::ZeroVolume { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(EntropySeries {
        entity: entity.clone(),
        points,
    })
}

/// Lag of one keyword at one leader year.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagValue {
    /// `None` when the follower never reaches the leader's count inside its data.
    pub lag: Option<i32>,
    /// The leader's count was zero, so every follower year qualifies.
    pub zero_threshold: bool,
}

impl LagValue {
    pub fn is_defined(&self) -> bool {
        self.lag.is_some()
    }
}

fn keyword_idx(corpus: &Corpus, keyword: &str) -> Result<usize, MetricsError> {
    corpus
        .keyword_index(keyword)
        .ok_or_else(|| CorpusError::UnknownKeyword(keyword.to_string()).into())
}

/// Smallest `δ` in `[first_f − y, last_f − y]` with `follower(y+δ) ≥ leader(y)`.
fn scan_lag(threshold: u64, year: i32, follower_first: i32, follower_counts: impl Iterator<Item = u64>) -> LagValue {
    let lag = follower_counts
        .enumerate()
        .find(|(_, c)| *c >= threshold)
        .map(|(i, _)| follower_first + i as i32 - year);
    LagValue {
        lag,
        zero_threshold: threshold == 0,
    }
}

/// Keyword lag of `follower` behind `leader` at a leader year.
///
/// Negative lags are allowed: the search starts at the follower's first
/// observed year. Feasibility only after the follower's last year is
/// reported as undefined rather than extrapolated.
pub fn lag(
    corpus: &Corpus,
    leader: &EntityId,
    follower: &EntityId,
    keyword: &str,
    year: i32,
) -> Result<LagValue, MetricsError> {
    let k = keyword_idx(corpus, keyword)?;
    let threshold = year_row(corpus, leader, year)?[k];
    let (ff, fl) = corpus.year_range(follower)?;
    let counts = (ff..=fl).map(|fy| corpus.count(follower, fy, k).ok().flatten().unwrap_or(0));
    Ok(scan_lag(threshold, year, ff, counts))
}

/// Lags for every (leader year, keyword).
#[derive(Debug, Clone, PartialEq)]
pub struct LagTable {
    pub leader: EntityId,
    pub follower: EntityId,
    keywords: Arc<[String]>,
    pub years: Vec<i32>,
    /// Row-major `[year][keyword]`.
    values: Vec<LagValue>,
}

/// One point of the keyword-averaged lag series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanLagPoint {
    pub year: i32,
    pub mean_lag: f64,
    /// Number of keywords with a defined lag in this year.
    pub m: usize,
}

impl LagTable {
    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn get(&self, year: i32, keyword: usize) -> Option<LagValue> {
        let y = self.years.iter().position(|&v| v == year)?;
        Some(self.values[y * self.keywords.len() + keyword])
    }

    /// `(keyword, year, value)` ordered by keyword, then year.
    pub fn entries(&self) -> impl Iterator<Item = (&str, i32, LagValue)> + '_ {
        let k = self.keywords.len();
        self.keywords.iter().enumerate().flat_map(move |(ki, kw)| {
            self.years
                .iter()
                .enumerate()
                .map(move |(yi, &y)| (kw.as_str(), y, self.values[yi * k + ki]))
        })
    }

    /// Keyword-averaged lag; years with no defined lag are dropped.
    pub fn mean_lag(&self) -> Vec<MeanLagPoint> {
        let k = self.keywords.len();
        self.years
            .iter()
            .enumerate()
            .filter_map(|(yi, &year)| {
                let row = &self.values[yi * k..(yi + 1) * k];
                let defined: Vec<i32> = row.iter().filter_map(|v| v.lag).collect();
                if defined.is_empty() {
                    return None;
                }
                let sum: f64 = defined.iter().map(|&d| d as f64).sum();
                Some(MeanLagPoint {
                    year,
                    mean_lag: sum / defined.len() as f64,
                    m: defined.len(),
                })
            })
            .collect()
    }
}

pub fn lag_table(corpus: &Corpus, leader: &EntityId, follower: &EntityId) -> Result<LagTable, MetricsError> {
    let years: Vec<i32> = corpus.years(leader)?.collect();
    let (ff, fl) = corpus.year_range(follower)?;
    let k = corpus.n_keywords();
    let follower_rows: Vec<&[u64]> = (ff..=fl)
        .map(|y| corpus.year_counts(follower, y).map(|r| r.expect("in range")))
        .collect::<Result<_, _>>()?;
    let mut values = Vec::with_capacity(years.len() * k);
    for &year in &years {
        let leader_row = year_row(corpus, leader, year)?;
        for (ki, &threshold) in leader_row.iter().enumerate() {
            values.push(scan_lag(threshold, year, ff, follower_rows.iter().map(|r| r[ki])));
        }
    }
    Ok(LagTable {
        leader: leader.clone(),
        follower: follower.clone(),
        keywords: corpus.keyword_list(),
        years,
        values,
    })
}

pub fn mean_lag(corpus: &Corpus, leader: &EntityId, follower: &EntityId) -> Result<Vec<MeanLagPoint>, MetricsError> {
    Ok(lag_table(corpus, leader, follower)?.mean_lag())
}
