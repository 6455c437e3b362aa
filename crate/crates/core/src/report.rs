//! Plot-ready tables and the full report bundle.
//!
//! Every table is a headered CSV preceded by one `#` provenance line carrying
//! the corpus fingerprint and toolkit version. Floats are written with
//! [`fmt_g9`], rows in a fixed order, so identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, EntityId};
use crate::metrics::{self, DistanceMatrix, EntropySeries, LagTable, MeanLagPoint, MetricsError};
use crate::trendfit::{self, ConsistencyReport, FitError, FitResult, Knot};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Keywords reaching this share in any year of an entity enter the share time series.
pub const SHARE_TIMESERIES_THRESHOLD: f64 = 0.12;
/// Keywords reaching this share for either entity enter the single-year bar table.
pub const SHARE_BAR_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid request: {0}")]
    Invalid(String),
}

/// `printf("%.9g")`: nine significant digits, trailing zeros removed,
/// scientific notation when the exponent is below −4 or at least 9.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (8 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn provenance_line(fingerprint: &str) -> String {
    format!("# corpus_sha256={fingerprint} toolkit_version={TOOLKIT_VERSION}\n")
}

/// CSV text builder; fields never contain commas except keywords, which are quoted.
struct Table {
    out: String,
}

impl Table {
    fn new(fingerprint: &str, header: &[&str]) -> Self {
        let mut out = provenance_line(fingerprint);
        out.push_str(&header.join(","));
        out.push('\n');
        Self { out }
    }

    fn row(&mut self, fields: &[String]) {
        let escaped: Vec<String> = fields.iter().map(|f| csv_field(f)).collect();
        let _ = writeln!(self.out, "{}", escaped.join(","));
    }

    fn finish(self) -> String {
        self.out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn opt_g9(v: Option<f64>) -> String {
    v.map(fmt_g9).unwrap_or_default()
}

pub fn volume_table(corpus: &Corpus, entities: &[EntityId]) -> Result<String, ReportError> {
    let mut t = Table::new(&corpus.fingerprint(), &["entity", "year", "total"]);
    for e in entities {
        for (y, n) in corpus.total_volume(e)?.points {
            t.row(&[e.to_string(), y.to_string(), n.to_string()]);
        }
    }
    Ok(t.finish())
}

/// `model,coef_name,estimate,hac_se,t_stat`; labels name each fit.
pub fn fit_table(fingerprint: &str, fits: &[(String, &FitResult)]) -> String {
    let mut t = Table::new(fingerprint, &["model", "coef_name", "estimate", "hac_se", "t_stat"]);
    for (label, fit) in fits {
        for c in &fit.coefficients {
            t.row(&[
                label.clone(),
                c.name.to_string(),
                fmt_g9(c.estimate),
                fmt_g9(c.hac_se),
                fmt_g9(c.t_stat),
            ]);
        }
    }
    t.finish()
}

pub fn tvd_table(fingerprint: &str, m: &DistanceMatrix) -> String {
    let mut t = Table::new(
        fingerprint,
        &["entity_row", "entity_col", "year_row", "year_col", "tvd", "defined"],
    );
    for (yr, yc, v) in m.entries() {
        t.row(&[
            m.entity_row.to_string(),
            m.entity_col.to_string(),
            yr.to_string(),
            yc.to_string(),
            opt_g9(v),
            (v.is_some() as u8).to_string(),
        ]);
    }
    t.finish()
}

pub fn entropy_table(fingerprint: &str, series: &[EntropySeries]) -> String {
    let mut t = Table::new(fingerprint, &["entity", "year", "entropy", "sample_size"]);
    for s in series {
        for &(y, h, n) in &s.points {
            t.row(&[s.entity.to_string(), y.to_string(), fmt_g9(h), n.to_string()]);
        }
    }
    t.finish()
}

pub fn lag_csv(fingerprint: &str, table: &LagTable) -> String {
    let mut t = Table::new(fingerprint, &["keyword", "year", "lag", "defined", "flag_zero_threshold"]);
    for (kw, y, v) in table.entries() {
        t.row(&[
            kw.to_string(),
            y.to_string(),
            v.lag.map(|l| l.to_string()).unwrap_or_default(),
            (v.is_defined() as u8).to_string(),
            (v.zero_threshold as u8).to_string(),
        ]);
    }
    t.finish()
}

pub fn mean_lag_csv(fingerprint: &str, series: &[MeanLagPoint]) -> String {
    let mut t = Table::new(fingerprint, &["year", "mean_lag", "m"]);
    for p in series {
        t.row(&[p.year.to_string(), fmt_g9(p.mean_lag), p.m.to_string()]);
    }
    t.finish()
}

pub fn consistency_csv(fingerprint: &str, r: &ConsistencyReport) -> String {
    let mut t = Table::new(
        fingerprint,
        &["m_leader", "m_follower", "predicted", "observed", "observed_hac_se", "difference", "se_multiples"],
    );
    t.row(&[
        fmt_g9(r.m_leader),
        fmt_g9(r.m_follower),
        fmt_g9(r.predicted),
        fmt_g9(r.observed),
        fmt_g9(r.observed_hac_se),
        fmt_g9(r.difference),
        fmt_g9(r.se_multiples),
    ]);
    t.finish()
}

/// Per-entity keywords whose share reaches `threshold` in at least one year.
pub fn share_timeseries_keywords(corpus: &Corpus, entity: &EntityId, threshold: f64) -> Result<Vec<usize>, ReportError> {
    let mut keep = vec![false; corpus.n_keywords()];
    for y in corpus.years(entity)? {
        if let Some(d) = defined_shares(corpus, entity, y)? {
            for (k, &s) in d.shares().iter().enumerate() {
                keep[k] |= s >= threshold;
            }
        }
    }
    Ok(keep.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k).collect())
}

fn defined_shares(corpus: &Corpus, entity: &EntityId, year: i32) -> Result<Option<metrics::ShareDistribution>, ReportError> {
    match metrics::keyword_shares(corpus, entity, year) {
        Ok(d) => Ok(Some(d)),
        Err(MetricsError::ZeroVolume { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// `entity,keyword,year,share` for keywords passing the per-entity threshold.
pub fn share_timeseries_table(corpus: &Corpus, entities: &[EntityId], threshold: f64) -> Result<String, ReportError> {
    let mut t = Table::new(&corpus.fingerprint(), &["entity", "keyword", "year", "share"]);
    for e in entities {
        let kws = share_timeseries_keywords(corpus, e, threshold)?;
        for &k in &kws {
            for y in corpus.years(e)? {
                if let Some(d) = defined_shares(corpus, e, y)? {
                    t.row(&[e.to_string(), corpus.keywords()[k].clone(), y.to_string(), fmt_g9(d.shares()[k])]);
                }
            }
        }
    }
    Ok(t.finish())
}

/// Latest year in which every entity has positive volume.
pub fn latest_common_year(corpus: &Corpus, entities: &[EntityId]) -> Result<Option<i32>, ReportError> {
    let mut lo = i32::MIN;
    let mut hi = i32::MAX;
    for e in entities {
        let (a, b) = corpus.year_range(e)?;
        lo = lo.max(a);
        hi = hi.min(b);
    }
    for y in (lo..=hi).rev() {
        let mut all = true;
        for e in entities {
            all &= defined_shares(corpus, e, y)?.is_some();
        }
        if all {
            return Ok(Some(y));
        }
    }
    Ok(None)
}

/// `year,keyword,entity,share` at one year for keywords reaching `threshold`
/// in at least one of the entities.
pub fn share_bar_table(corpus: &Corpus, entities: &[EntityId], year: i32, threshold: f64) -> Result<String, ReportError> {
    let mut dists = Vec::new();
    for e in entities {
        let d = defined_shares(corpus, e, year)?.ok_or_else(|| MetricsError::ZeroVolume {
            entity: e.to_string(),
            year,
        })?;
        dists.push(d);
    }
    let mut t = Table::new(&corpus.fingerprint(), &["year", "keyword", "entity", "share"]);
    for (k, kw) in corpus.keywords().iter().enumerate() {
        if dists.iter().any(|d| d.shares()[k] >= threshold) {
            for d in &dists {
                t.row(&[year.to_string(), kw.clone(), d.entity.to_string(), fmt_g9(d.shares()[k])]);
            }
        }
    }
    Ok(t.finish())
}

#[derive(Debug, Clone, Serialize)]
pub struct FitMeta {
    pub label: String,
    pub model: String,
    pub n_obs: usize,
    pub bandwidth: usize,
    pub durbin_watson: Option<f64>,
    pub knot: Option<f64>,
    pub excluded_years: Vec<i32>,
    pub first_year: i32,
    pub last_year: i32,
}

/// Rounds through the 9-significant-digit text form.
fn g9(x: f64) -> f64 {
    fmt_g9(x).parse().unwrap_or(x)
}

impl FitMeta {
    pub fn new(label: &str, fit: &FitResult) -> Self {
        Self {
            label: label.to_string(),
            model: fit.kind.to_string(),
            n_obs: fit.n_obs,
            bandwidth: fit.bandwidth,
            durbin_watson: fit.durbin_watson.map(g9),
            knot: fit.knot.map(g9),
            excluded_years: fit.excluded_years.clone(),
            first_year: *fit.years.first().expect("non-empty fit"),
            last_year: *fit.years.last().expect("non-empty fit"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KnotMeta {
    pub y0: f64,
    pub bracket_start: i32,
    pub bracket_end: i32,
    pub leader_volume: f64,
    pub follower_volume: f64,
}

impl From<&Knot> for KnotMeta {
    fn from(k: &Knot) -> Self {
        Self {
            y0: g9(k.y0),
            bracket_start: k.bracket.0,
            bracket_end: k.bracket.1,
            leader_volume: g9(k.leader_volume),
            follower_volume: g9(k.follower_volume),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageMeta {
    pub name: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Thresholds {
    pub share_timeseries: f64,
    pub share_bar: f64,
}

/// Run-level metadata written as `metadata.toml`.
#[derive(Debug, Clone, Serialize)]
pub struct ReportMeta {
    pub toolkit_version: String,
    pub corpus_sha256: String,
    pub leader: String,
    pub follower: String,
    pub thresholds: Thresholds,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub share_bar_year: Option<i32>,
    pub lag_search: String,
    pub hac: String,
    pub files: Vec<String>,
    pub stages: Vec<StageMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knot: Option<KnotMeta>,
    pub fits: Vec<FitMeta>,
}

#[derive(Debug, Clone)]
pub struct ReportOptions {
    pub share_timeseries_threshold: f64,
    pub share_bar_threshold: f64,
    /// Defaults to the latest year with positive volume for both entities.
    pub share_bar_year: Option<i32>,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            share_timeseries_threshold: SHARE_TIMESERIES_THRESHOLD,
            share_bar_threshold: SHARE_BAR_THRESHOLD,
            share_bar_year: None,
        }
    }
}

/// All report tables keyed by file name, plus metadata.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub files: BTreeMap<String, String>,
    pub metadata: ReportMeta,
    /// Direct results, kept so callers can compare against module calls.
    pub leader_fit: Option<FitResult>,
    pub follower_fit: Option<FitResult>,
    pub lag_fit: Option<FitResult>,
    pub knot: Option<Knot>,
    pub consistency: Option<ConsistencyReport>,
}

impl ReportBundle {
    pub fn metadata_toml(&self) -> String {
        toml::to_string(&self.metadata).expect("metadata serializes")
    }

    /// Writes every table and `metadata.toml` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), ReportError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        std::fs::write(dir.join("metadata.toml"), self.metadata_toml())?;
        Ok(())
    }
}

fn fit_skippable(e: &FitError) -> bool {
    matches!(
        e,
        FitError::InsufficientObservations { .. }
            | FitError::RankDeficient
            | FitError::KnotSide { .. }
            | FitError::NoCrossing
            | FitError::CrossingBeforeData
            | FitError::ZeroSlope
    )
}

struct Stages(Vec<StageMeta>);

impl Stages {
    fn ok(&mut self, name: &str) {
        info!("stage {name}: ok");
        self.0.push(StageMeta {
            name: name.into(),
            status: "ok".into(),
            reason: None,
        });
    }

    fn skip(&mut self, name: &str, reason: String) {
        warn!("stage {name}: skipped ({reason})");
        self.0.push(StageMeta {
            name: name.into(),
            status: "skipped".into(),
            reason: Some(reason),
        });
    }

    /// Records the outcome; data-limited fit failures become skips.
    fn fit<T>(&mut self, name: &str, r: Result<T, FitError>) -> Result<Option<T>, ReportError> {
        match r {
            Ok(v) => {
                self.ok(name);
                Ok(Some(v))
            }
            Err(e) if fit_skippable(&e) => {
                self.skip(name, e.to_string());
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Runs the whole pipeline for one leader/follower pair.
pub fn build_report(
    corpus: &Corpus,
    leader: &EntityId,
    follower: &EntityId,
    opts: &ReportOptions,
) -> Result<ReportBundle, ReportError> {
    if leader == follower {
        return Err(ReportError::Invalid("leader and follower must differ".into()));
    }
    for e in [leader, follower] {
        if !corpus.contains_entity(e) {
            return Err(CorpusError::UnknownEntity(e.to_string()).into());
        }
    }
    info!(
        "report thresholds: share time series {}, share bar {}",
        opts.share_timeseries_threshold, opts.share_bar_threshold
    );
    let fp = corpus.fingerprint();
    let pair = [leader.clone(), follower.clone()];
    let mut files = BTreeMap::new();
    let mut stages = Stages(Vec::new());

    files.insert("volume.csv".to_string(), volume_table(corpus, &pair)?);
    stages.ok("volume");

    let lv = corpus.total_volume(leader)?;
    let fv = corpus.total_volume(follower)?;
    let leader_fit = stages.fit("fit_leader_loglinear", trendfit::fit_volume_loglinear(&lv))?;
    let knot = stages.fit("knot_crossing_year", trendfit::crossing_year(&lv, &fv))?;
    let follower_fit = match &knot {
        Some(k) => stages.fit("fit_follower_hinge", trendfit::fit_volume_hinge(&fv, k.y0))?,
        None => {
            stages.skip("fit_follower_hinge", "no crossing year available for the knot".into());
            None
        }
    };

    for (a, b) in [(leader, leader), (follower, follower), (leader, follower)] {
        let m = metrics::tvd_matrix(corpus, a, b)?;
        files.insert(format!("tvd_{a}_{b}.csv"), tvd_table(&fp, &m));
    }
    stages.ok("tvd");

    let entropy: Vec<EntropySeries> = pair
        .iter()
        .map(|e| metrics::entropy_series(corpus, e))
        .collect::<Result<_, _>>()?;
    files.insert("entropy.csv".to_string(), entropy_table(&fp, &entropy));
    stages.ok("entropy");

    files.insert(
        "shares_timeseries.csv".to_string(),
        share_timeseries_table(corpus, &pair, opts.share_timeseries_threshold)?,
    );
    stages.ok("shares_timeseries");
    let bar_year = match opts.share_bar_year {
        Some(y) => Some(y),
        None => latest_common_year(corpus, &pair)?,
    };
    match bar_year {
        Some(y) => {
            files.insert(
                "shares_bar.csv".to_string(),
                share_bar_table(corpus, &pair, y, opts.share_bar_threshold)?,
            );
            stages.ok("shares_bar");
        }
        None => stages.skip("shares_bar", "no year with positive volume for both entities".into()),
    }

    let lags = metrics::lag_table(corpus, leader, follower)?;
    let mean_lag = lags.mean_lag();
    files.insert("lag.csv".to_string(), lag_csv(&fp, &lags));
    files.insert("mean_lag.csv".to_string(), mean_lag_csv(&fp, &mean_lag));
    stages.ok("lag");
    let lag_fit = stages.fit("fit_lag_linear", trendfit::fit_lag_linear(&mean_lag))?;

    let consistency = match (&leader_fit, &follower_fit, &lag_fit) {
        (Some(l), Some(f), Some(d)) => stages.fit(
            "lag_slope_consistency",
            trendfit::lag_slope_consistency(l.slope().estimate, f.slope().estimate, d),
        )?,
        _ => {
            stages.skip("lag_slope_consistency", "requires leader, follower, and lag fits".into());
            None
        }
    };
    if let Some(c) = &consistency {
        files.insert("consistency.csv".to_string(), consistency_csv(&fp, c));
    }

    let mut labelled: Vec<(String, &FitResult)> = Vec::new();
    if let Some(f) = &leader_fit {
        labelled.push((format!("loglinear:{leader}"), f));
    }
    if let Some(f) = &follower_fit {
        labelled.push((format!("hinge:{follower}"), f));
    }
    if let Some(f) = &lag_fit {
        labelled.push((format!("lag:{leader}-{follower}"), f));
    }
    files.insert("fits.csv".to_string(), fit_table(&fp, &labelled));
    let fits = labelled.iter().map(|(l, f)| FitMeta::new(l, f)).collect();

    let metadata = ReportMeta {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        corpus_sha256: fp,
        leader: leader.to_string(),
        follower: follower.to_string(),
        thresholds: Thresholds {
            share_timeseries: opts.share_timeseries_threshold,
            share_bar: opts.share_bar_threshold,
        },
        share_bar_year: bar_year,
        lag_search: "window [follower_first - y, follower_last - y], negative lags allowed, right-censored lags undefined"
            .into(),
        hac: "bartlett kernel, bandwidth ceil(sqrt(N)), weights 1 - j/B for j < B, no small-sample correction".into(),
        files: files.keys().cloned().collect(),
        stages: stages.0,
        knot: knot.as_ref().map(KnotMeta::from),
        fits,
    };
    Ok(ReportBundle {
        files,
        metadata,
        leader_fit,
        follower_fit,
        lag_fit,
        knot,
        consistency,
    })
}
