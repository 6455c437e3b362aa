//! Keyword × entity × year count harvesting against a pluggable endpoint.
//!
//! Each query is answered from the on-disk cache when possible, otherwise by
//! the transport under a global rate limit and a bounded worker pool. Failed
//! cells are recorded as missing in the provenance log; turning a harvest
//! into a [`Corpus`] requires choosing a [`MissingPolicy`].

mod cache;
mod ratelimit;
mod server;
mod transport;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{canonical_keyword, Corpus, CorpusBuilder, CorpusError, EntityId};

pub use cache::Cache;
pub use ratelimit::RateLimiter;
pub use server::FixtureServer;
pub use transport::{parse_count, FixtureTransport, Transport, TransportError, UrlTemplateTransport};

/// Coverage caveat attached to every harvest.
pub const COVERAGE_NOTE: &str =
    "counts reflect the index's coverage only; non-English publications are not modeled and are likely undercounted";

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("invalid query plan: {0}")]
    InvalidPlan(String),
    #[error("endpoint unreachable: every query failed after retries (last error: {0})")]
    Unreachable(String),
    #[error("{0} cells are missing and the policy is `fail`")]
    MissingCells(usize),
    #[error("could not parse plan: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// One count query; the keyword is stored in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Query {
    pub keyword: String,
    pub entity: String,
    /// Affiliation filter, passed to the endpoint verbatim.
    pub affiliation: String,
    pub year: i32,
}

impl Query {
    pub fn new(keyword: &str, entity: &str, affiliation: &str, year: i32) -> Self {
        Self {
            keyword: canonical_keyword(keyword),
            entity: entity.trim().to_string(),
            affiliation: affiliation.to_string(),
            year,
        }
    }

    /// Field-sorted, normalized text form used for cache addressing.
    pub fn canonical_key(&self) -> String {
        format!(
            "affiliation={}\nentity={}\nkeyword={}\nyear={}",
            self.affiliation,
            self.entity,
            canonical_keyword(&self.keyword),
            self.year
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    Live,
    Cache,
    Fixture,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Live => "LIVE",
            Source::Cache => "CACHE",
            Source::Fixture => "FIXTURE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountResponse {
    pub query: Query,
    pub count: u64,
    /// Seconds since the Unix epoch.
    pub retrieved_at: u64,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityFilter {
    pub name: String,
    /// Opaque affiliation expression, e.g. `AFFILCOUNTRY(China)`.
    #[serde(default)]
    pub affiliation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Endpoint {
    /// Parameterized GET endpoint; see [`UrlTemplateTransport`].
    UrlTemplate {
        template: String,
        #[serde(default)]
        count_pointer: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: f64,
    },
    /// Local count table in the corpus CSV schema.
    Fixture { path: PathBuf },
}

fn default_timeout_secs() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Politeness {
    /// Zero disables rate limiting.
    pub max_requests_per_second: f64,
    pub max_concurrent: usize,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_initial_ms: u64,
    pub backoff_multiplier: f64,
}

impl Default for Politeness {
    fn default() -> Self {
        Self {
            max_requests_per_second: 2.0,
            max_concurrent: 4,
            max_retries: 3,
            backoff_initial_ms: 500,
            backoff_multiplier: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    /// Refuse to build a corpus when any cell is missing.
    #[default]
    Fail,
    /// Treat missing cells as zero; they stay flagged in the provenance log.
    FillZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub keywords: Vec<String>,
    pub entities: Vec<EntityFilter>,
    pub first_year: i32,
    pub last_year: i32,
    pub endpoint: Endpoint,
    #[serde(default)]
    pub politeness: Politeness,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
}

impl QueryPlan {
    pub fn from_toml(text: &str) -> Result<Self, HarvestError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarvestError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), HarvestError> {
        let bad = |m: &str| Err(HarvestError::InvalidPlan(m.to_string()));
        if self.keywords.is_empty() || self.keywords.iter().any(|k| canonical_keyword(k).is_empty()) {
            return bad("keywords must be non-empty");
        }
        if self.entities.is_empty() || self.entities.iter().any(|e| e.name.trim().is_empty()) {
            return bad("entities must be non-empty");
        }
        if self.first_year > self.last_year {
            return bad("first_year after last_year");
        }
        let p = &self.politeness;
        if !(p.max_requests_per_second >= 0.0) || p.max_requests_per_second.is_infinite() {
            return bad("max_requests_per_second must be finite and >= 0");
        }
        if p.max_concurrent == 0 {
            return bad("max_concurrent must be at least 1");
        }
        if !(p.backoff_multiplier >= 1.0) {
            return bad("backoff_multiplier must be >= 1");
        }
        Ok(())
    }

    /// All queries in canonical order: entity, year, keyword.
    pub fn queries(&self) -> Vec<Query> {
        let mut kws: Vec<String> = self.keywords.iter().map(|k| canonical_keyword(k)).collect();
        kws.sort();
        kws.dedup();
        let mut ents: Vec<&EntityFilter> = self.entities.iter().collect();
        ents.sort_by(|a, b| a.name.trim().cmp(b.name.trim()));
        let mut out = Vec::new();
        for e in ents {
            for year in self.first_year..=self.last_year {
                for k in &kws {
                    out.push(Query::new(k, &e.name, &e.affiliation, year));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    Missing(String),
}

/// One provenance row per planned query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProvenanceRow {
    pub query: Query,
    pub count: Option<u64>,
    pub source: Option<Source>,
    pub timestamp: u64,
    pub status: CellStatus,
}

#[derive(Debug, Clone)]
pub struct Harvest {
    pub rows: Vec<ProvenanceRow>,
    /// Number of transport calls made, retries included.
    pub transport_calls: usize,
    pub notes: Vec<String>,
    first_year: i32,
    last_year: i32,
    keywords: Vec<String>,
}

impl Harvest {
    pub fn missing(&self) -> impl Iterator<Item = &ProvenanceRow> {
        self.rows.iter().filter(|r| r.status != CellStatus::Ok)
    }

    /// Builds a corpus; missing cells are handled per `policy`, never silently.
    pub fn to_corpus(&self, policy: MissingPolicy) -> Result<Corpus, HarvestError> {
        let n_missing = self.missing().count();
        if n_missing > 0 && policy == MissingPolicy::Fail {
            return Err(HarvestError::MissingCells(n_missing));
        }
        let mut b = CorpusBuilder::new();
        for k in &self.keywords {
            b.declare_keyword(k)?;
        }
        for r in &self.rows {
            let e = EntityId::new(&r.query.entity)?;
            b.declare_years(e.clone(), self.first_year, self.last_year)?;
            if let Some(c) = r.count.filter(|&c| c > 0) {
                b.insert(e, r.query.year, &r.query.keyword, c)?;
            }
        }
        Ok(b.build()?)
    }

    /// Appends `keyword,entity,year,count,source,timestamp,status` rows,
    /// writing the header only when the file is new or empty.
    pub fn append_provenance(&self, path: impl AsRef<Path>) -> Result<(), HarvestError> {
        let path = path.as_ref();
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = std::io::BufWriter::new(file);
        if fresh {
            writeln!(w, "keyword,entity,year,count,source,timestamp,status")?;
        }
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for r in &self.rows {
            let status = match &r.status {
                CellStatus::Ok => "OK".to_string(),
                CellStatus::Missing(_) => "MISSING".to_string(),
            };
            wtr.write_record([
                r.query.keyword.as_str(),
                r.query.entity.as_str(),
                &r.query.year.to_string(),
                &r.count.map(|c| c.to_string()).unwrap_or_default(),
                r.source.map_or("", Source::as_str),
                &r.timestamp.to_string(),
                &status,
            ])
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Builds the transport named by the plan's endpoint.
pub fn transport_for(plan: &QueryPlan) -> Result<Box<dyn Transport>, HarvestError> {
    match &plan.endpoint {
        Endpoint::UrlTemplate {
            template,
            count_pointer,
            timeout_secs,
        } => Ok(Box::new(UrlTemplateTransport::new(
            template.clone(),
            count_pointer.clone(),
            Duration::from_secs_f64(timeout_secs.max(0.001)),
        ))),
        Endpoint::Fixture { path } => {
            let corpus = Corpus::load(path, &Default::default())?;
            Ok(Box::new(FixtureTransport::from_corpus(&corpus)))
        }
    }
}

/// Runs every query in the plan.
///
/// Transport failures are retried with exponential backoff (each attempt
/// passes through the rate limiter) and end up as missing cells. The run
/// fails only if the plan is invalid or no query succeeded because the
/// endpoint could not be reached.
pub fn execute_plan(plan: &QueryPlan, transport: &dyn Transport, cache: Option<&Cache>) -> Result<Harvest, HarvestError> {
    plan.validate()?;
    let queries = plan.queries();
    let limiter = RateLimiter::new(plan.politeness.max_requests_per_second);
    let calls = AtomicUsize::new(0);
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ProvenanceRow>>> = Mutex::new(vec![None; queries.len()]);
    let last_unreachable: Mutex<Option<String>> = Mutex::new(None);

    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(q) = queries.get(i) else { break };
        let row = run_query(q, plan, transport, cache, &limiter, &calls, &last_unreachable);
        slots.lock().expect("result slots poisoned")[i] = Some(row);
    };
    let workers = plan.politeness.max_concurrent.min(queries.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(worker);
        }
    });

    let rows: Vec<ProvenanceRow> = slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every query answered"))
        .collect();
    let ok = rows.iter().filter(|r| r.status == CellStatus::Ok).count();
    if ok == 0 {
        if let Some(err) = last_unreachable.into_inner().expect("poisoned") {
            return Err(HarvestError::Unreachable(err));
        }
    }
    let transport_calls = calls.load(Ordering::SeqCst);
    info!(
        "harvest complete: {} queries, {} ok, {} missing, {} transport calls",
        rows.len(),
        ok,
        rows.len() - ok,
        transport_calls
    );
    let mut keywords: Vec<String> = plan.keywords.iter().map(|k| canonical_keyword(k)).collect();
    keywords.sort();
    keywords.dedup();
    Ok(Harvest {
        rows,
        transport_calls,
        notes: vec![COVERAGE_NOTE.to_string()],
        first_year: plan.first_year,
        last_year: plan.last_year,
        keywords,
    })
}

fn run_query(
    q: &Query,
    plan: &QueryPlan,
    transport: &dyn Transport,
    cache: Option<&Cache>,
    limiter: &RateLimiter,
    calls: &AtomicUsize,
    last_unreachable: &Mutex<Option<String>>,
) -> ProvenanceRow {
    if let Some(hit) = cache.and_then(|c| c.lookup(q)) {
        return ProvenanceRow {
            query: q.clone(),
            count: Some(hit.count),
            source: Some(Source::Cache),
            timestamp: hit.retrieved_at,
            status: CellStatus::Ok,
        };
    }
    let pol = &plan.politeness;
    let mut backoff = Duration::from_millis(pol.backoff_initial_ms);
    let mut attempt = 0;
    loop {
        limiter.acquire();
        calls.fetch_add(1, Ordering::SeqCst);
        match transport.fetch(q) {
            Ok(count) => {
                let resp = CountResponse {
                    query: q.clone(),
                    count,
                    retrieved_at: now_secs(),
                    source: transport.source(),
                };
                if let Some(c) = cache {
                    if let Err(e) = c.store(&resp) {
                        warn!("could not cache {}: {e}", q.canonical_key().replace('\n', " "));
                    }
                }
                return ProvenanceRow {
                    query: q.clone(),
                    count: Some(count),
                    source: Some(resp.source),
                    timestamp: resp.retrieved_at,
                    status: CellStatus::Ok,
                };
            }
            Err(e) if e.is_retryable() && attempt < pol.max_retries => {
                attempt += 1;
                std::thread::sleep(backoff);
                backoff = backoff.mul_f64(pol.backoff_multiplier);
            }
            Err(e) => {
                warn!(
                    "{} / {} / {}: {e}; recorded as missing",
                    q.entity, q.year, q.keyword
                );
                if e.is_retryable() {
                    *last_unreachable.lock().expect("poisoned") = Some(e.to_string());
                }
                return ProvenanceRow {
                    query: q.clone(),
                    count: None,
                    source: None,
                    timestamp: now_secs(),
                    status: CellStatus::Missing(e.to_string()),
                };
            }
        }
    }
}
