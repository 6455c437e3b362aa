//! Publication-count trend analysis.
//!
//! Ingests `(entity, year, keyword) -> count` tables and computes total
//! volume growth fits, keyword lag, topic-distribution distances, and
//! portfolio entropy, together with HAC standard errors and Durbin-Watson
//! diagnostics. See the `pubtrend` CLI for the report pipeline.

pub mod corpus;
pub mod harvester;
pub mod metrics;
pub mod report;
pub mod synth;
pub mod trendfit;

pub use corpus::{ColumnMapping, Corpus, CorpusBuilder, CorpusError, EntityId, VolumeSeries};
