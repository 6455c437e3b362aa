use std::collections::HashMap;
use std::time::Duration;

use thiserror::Error;

use crate::corpus::{canonical_keyword, Corpus};

use super::{Query, Source};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Connection or server-side failure; retried.
    #[error("endpoint unreachable: {0}")]
    Unreachable(String),
    /// The endpoint answered with something that is not a count; not retried.
    #[error("malformed response: {0}")]
    Malformed(String),
    /// The endpoint has no data for the query; not retried.
    #[error("no data for query")]
    NotFound,
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, TransportError::Unreachable(_))
    }
}

/// Anything that can answer "how many results for this query".
pub trait Transport: Send + Sync {
    fn fetch(&self, query: &Query) -> Result<u64, TransportError>;

    /// Tag recorded on fresh responses.
    fn source(&self) -> Source {
        Source::Live
    }
}

/// In-process fixture table keyed by `(entity, year, keyword)`.
#[derive(Debug, Clone, Default)]
pub struct FixtureTransport {
    counts: HashMap<(String, i32, String), u64>,
}

impl FixtureTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, entity: &str, year: i32, keyword: &str, count: u64) {
        self.counts
            .insert((entity.trim().to_string(), year, canonical_keyword(keyword)), count);
    }

    pub fn with(mut self, entity: &str, year: i32, keyword: &str, count: u64) -> Self {
        self.insert(entity, year, keyword, count);
        self
    }

    /// Every cell of a corpus, zeros included.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut t = Self::new();
        for cell in corpus.cells() {
            t.insert(cell.entity.as_str(), cell.year, &cell.keyword, cell.count);
        }
        t
    }

    fn get(&self, entity: &str, year: i32, keyword: &str) -> Option<u64> {
        self.counts
            .get(&(entity.to_string(), year, canonical_keyword(keyword)))
            .copied()
    }
}

impl Transport for FixtureTransport {
    fn fetch(&self, query: &Query) -> Result<u64, TransportError> {
        self.get(&query.entity, query.year, &query.keyword)
            .ok_or(TransportError::NotFound)
    }

    fn source(&self) -> Source {
        Source::Fixture
    }
}

/// GET against a URL template with `{keyword}`, `{entity}`, `{affiliation}`
/// and `{year}` placeholders (values are percent-encoded).
///
/// The body is either a bare integer or a JSON document; in the latter case
/// the count is read at `count_pointer` (RFC 6901, default `/count`).
#[derive(Debug, Clone)]
pub struct UrlTemplateTransport {
    template: String,
    count_pointer: String,
    agent: ureq::Agent,
}

impl UrlTemplateTransport {
    pub fn new(template: impl Into<String>, count_pointer: Option<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            template: template.into(),
            count_pointer: count_pointer.unwrap_or_else(|| "/count".to_string()),
            agent: config.into(),
        }
    }

    pub fn url_for(&self, query: &Query) -> String {
        let enc = |s: &str| url::form_urlencoded::byte_serialize(s.as_bytes()).collect::<String>();
        self.template
            .replace("{keyword}", &enc(&query.keyword))
            .replace("{entity}", &enc(&query.entity))
            .replace("{affiliation}", &enc(&query.affiliation))
            .replace("{year}", &query.year.to_string())
    }
}

/// Parses a count from a bare integer or a JSON body.
pub fn parse_count(body: &str, pointer: &str) -> Result<u64, TransportError> {
    let trimmed = body.trim();
    if let Ok(n) = trimmed.parse::<u64>() {
        return Ok(n);
    }
    let json: serde_json::Value =
        serde_json::from_str(trimmed).map_err(|e| TransportError::Malformed(format!("not a count or JSON: {e}")))?;
    let v = json
        .pointer(pointer)
        .ok_or_else(|| TransportError::Malformed(format!("no value at {pointer}")))?;
    match v {
        serde_json::Value::Number(n) => n
            .as_u64()
            .ok_or_else(|| TransportError::Malformed(format!("count {n} is not a non-negative integer"))),
        serde_json::Value::String(s) => s
            .trim()
            .parse()
            .map_err(|_| TransportError::Malformed(format!("count `{s}` is not a non-negative integer"))),
        other => Err(TransportError::Malformed(format!("count has unexpected type: {other}"))),
    }
}

impl Transport for UrlTemplateTransport {
    fn fetch(&self, query: &Query) -> Result<u64, TransportError> {
        let url = self.url_for(query);
        let mut resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        match status {
            200..=299 => parse_count(&body, &self.count_pointer),
            404 => Err(TransportError::NotFound),
            429 | 500..=599 => Err(TransportError::Unreachable(format!("http status {status}"))),
            _ => Err(TransportError::Malformed(format!("http status {status}"))),
        }
    }
}
