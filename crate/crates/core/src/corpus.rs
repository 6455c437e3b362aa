//! Publication-count tables indexed by (entity, year, keyword).
//!
//! A [`Corpus`] is immutable once built. Every entity owns a contiguous year
//! range and a dense `years × keywords` block of counts; triples that were
//! never supplied inside that range read as zero.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Errors raised while building, loading, or querying a corpus.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Parse { row: u64, message: String },
    #[error("row {row}: negative count {count}")]
    NegativeCount { row: u64, count: i64 },
    #[error("row {row}: duplicate triple ({entity}, {year}, {keyword})")]
    DuplicateTriple {
        row: u64,
        entity: String,
        year: i32,
        keyword: String,
    },
    #[error("missing column `{0}` in header")]
    MissingColumn(String),
    #[error("input contains no data rows")]
    Empty,
    #[error("entity identifier must be non-empty")]
    InvalidEntity,
    #[error("keyword must be non-empty")]
    InvalidKeyword,
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("unknown keyword `{0}`")]
    UnknownKeyword(String),
    #[error("invalid year range {first}..={last}")]
    InvalidRange { first: i32, last: i32 },
    #[error("range {first}..={last} is disjoint from {entity}'s data {have_first}..={have_last}")]
    DisjointRange {
        entity: String,
        first: i32,
        last: i32,
        have_first: i32,
        have_last: i32,
    },
}

/// Identifier of a compared unit, e.g. a country label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl EntityId {
    pub fn new(name: impl AsRef<str>) -> Result<Self, CorpusError> {
        let trimmed = name.as_ref().trim();
        if trimmed.is_empty() {
            return Err(CorpusError::InvalidEntity);
        }
        Ok(Self(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for EntityId {
    type Error = CorpusError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EntityId> for String {
    fn from(value: EntityId) -> Self {
        value.0
    }
}

/// Canonical keyword form: trimmed and lower-cased.
pub fn canonical_keyword(raw: &str) -> String {
    raw.trim().to_lowercase()
}

/// One observed `(entity, year, keyword) -> count` cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountCell {
    pub entity: EntityId,
    pub year: i32,
    pub keyword: String,
    pub count: u64,
}

/// Column names used when reading a count table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub entity: String,
    pub year: String,
    pub keyword: String,
    pub count: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            entity: "entity".into(),
            year: "year".into(),
            keyword: "keyword".into(),
            count: "count".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct EntityBlock {
    first_year: i32,
    last_year: i32,
    /// Row-major `[year - first_year][keyword]`.
    counts: Vec<u64>,
}

impl EntityBlock {
    fn n_years(&self) -> usize {
        (self.last_year - self.first_year + 1) as usize
    }
}

/// Immutable table of publication counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    keywords: Arc<[String]>,
    entities: BTreeMap<EntityId, EntityBlock>,
}

/// Per-year totals for one entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VolumeSeries {
    pub entity: EntityId,
    pub points: Vec<(i32, u64)>,
}

impl VolumeSeries {
    pub fn get(&self, year: i32) -> Option<u64> {
        self.points
            .binary_search_by_key(&year, |p| p.0)
            .ok()
            .map(|i| self.points[i].1)
    }
}

/// Accumulates cells and rejects duplicates; `build` densifies.
#[derive(Debug, Default, Clone)]
pub struct CorpusBuilder {
    cells: BTreeMap<(EntityId, i32, String), u64>,
    extra_keywords: BTreeSet<String>,
    ranges: BTreeMap<EntityId, (i32, i32)>,
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts one cell. Returns `false` if the triple was already present.
    pub fn insert(&mut self, entity: EntityId, year: i32, keyword: &str, count: u64) -> Result<bool, CorpusError> {
        let keyword = canonical_keyword(keyword);
        if keyword.is_empty() {
            return Err(CorpusError::InvalidKeyword);
        }
        self.widen(&entity, year, year);
        Ok(self.cells.insert((entity, year, keyword), count).is_none())
    }

    /// Registers a keyword even if it never receives a nonzero count.
    pub fn declare_keyword(&mut self, keyword: &str) -> Result<(), CorpusError> {
        let keyword = canonical_keyword(keyword);
        if keyword.is_empty() {
            return Err(CorpusError::InvalidKeyword);
        }
        self.extra_keywords.insert(keyword);
        Ok(())
    }

    /// Extends an entity's year range to cover `first..=last`.
    pub fn declare_years(&mut self, entity: EntityId, first: i32, last: i32) -> Result<(), CorpusError> {
        if first > last {
            return Err(CorpusError::InvalidRange { first, last });
        }
        self.widen(&entity, first, last);
        Ok(())
    }

    fn widen(&mut self, entity: &EntityId, first: i32, last: i32) {
        self.ranges
            .entry(entity.clone())
            .and_modify(|r| {
                r.0 = r.0.min(first);
                r.1 = r.1.max(last);
            })
            .or_insert((first, last));
    }

    pub fn build(self) -> Result<Corpus, CorpusError> {
        if self.ranges.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut kw_set = self.extra_keywords;
        kw_set.extend(self.cells.keys().map(|(_, _, k)| k.clone()));
        if kw_set.is_empty() {
            return Err(CorpusError::Empty);
        }
        let keywords: Vec<String> = kw_set.into_iter().collect();
        let n_kw = keywords.len();
        let mut entities: BTreeMap<EntityId, EntityBlock> = self
            .ranges
            .into_iter()
            .map(|(e, (first, last))| {
                let n_years = (last - first + 1) as usize;
                (
                    e,
                    EntityBlock {
                        first_year: first,
                        last_year: last,
                        counts: vec![0; n_years * n_kw],
                    },
                )
            })
            .collect();
        for ((entity, year, keyword), count) in self.cells {
            let k = keywords.binary_search(&keyword).expect("keyword registered");
            let block = entities.get_mut(&entity).expect("entity registered");
            let y = (year - block.first_year) as usize;
            block.counts[y * n_kw + k] = count;
        }
        Ok(Corpus {
            keywords: keywords.into(),
            entities,
        })
    }
}

impl Corpus {
    /// Reads a headered CSV count table from disk.
    pub fn load(path: impl AsRef<Path>, schema: &ColumnMapping) -> Result<Self, CorpusError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, schema)
    }

    pub fn from_reader<R: Read>(reader: R, schema: &ColumnMapping) -> Result<Self, CorpusError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| CorpusError::Parse {
                row: 1,
                message: e.to_string(),
            })?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
        };
        let (ci_e, ci_y, ci_k, ci_c) = (
            col(&schema.entity)?,
            col(&schema.year)?,
            col(&schema.keyword)?,
            col(&schema.count)?,
        );

        let mut builder = CorpusBuilder::new();
        let mut any = false;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CorpusError::Parse {
                row: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let row = rec.position().map_or(0, |p| p.line());
            let field = |i: usize, what: &str| {
                rec.get(i).ok_or_else(|| CorpusError::Parse {
                    row,
                    message: format!("missing {what} field"),
                })
            };
            let entity = EntityId::new(field(ci_e, "entity")?).map_err(|_| CorpusError::Parse {
                row,
                message: "empty entity".into(),
            })?;
            let year_raw = field(ci_y, "year")?;
            let year: i32 = year_raw.parse().map_err(|_| CorpusError::Parse {
                row,
                message: format!("invalid year `{year_raw}`"),
            })?;
            let keyword = canonical_keyword(field(ci_k, "keyword")?);
            if keyword.is_empty() {
                return Err(CorpusError::Parse {
                    row,
                    message: "empty keyword".into(),
                });
            }
            let count_raw = field(ci_c, "count")?;
            let count: i64 = count_raw.parse().map_err(|_| CorpusError::Parse {
                row,
                message: format!("invalid count `{count_raw}`"),
            })?;
            if count < 0 {
                return Err(CorpusError::NegativeCount { row, count });
            }
            if !builder.insert(entity.clone(), year, &keyword, count as u64)? {
                return Err(CorpusError::DuplicateTriple {
                    row,
                    entity: entity.to_string(),
                    year,
                    keyword,
                });
            }
            any = true;
        }
        if !any {
            return Err(CorpusError::Empty);
        }
        builder.build()
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    /// Shared handle to the keyword list, used to tag derived distributions.
    pub fn keyword_list(&self) -> Arc<[String]> {
        Arc::clone(&self.keywords)
    }

    pub fn n_keywords(&self) -> usize {
        self.keywords.len()
    }

    /// Looks up a keyword after canonicalization.
    pub fn keyword_index(&self, keyword: &str) -> Option<usize> {
        self.keywords.binary_search(&canonical_keyword(keyword)).ok()
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        self.entities.keys()
    }

    pub fn contains_entity(&self, entity: &EntityId) -> bool {
        self.entities.contains_key(entity)
    }

    pub fn year_range(&self, entity: &EntityId) -> Result<(i32, i32), CorpusError> {
        self.block(entity).map(|b| (b.first_year, b.last_year))
    }

    pub fn years(&self, entity: &EntityId) -> Result<std::ops::RangeInclusive<i32>, CorpusError> {
        self.year_range(entity).map(|(a, b)| a..=b)
    }

    fn block(&self, entity: &EntityId) -> Result<&EntityBlock, CorpusError> {
        self.entities
            .get(entity)
            .ok_or_else(|| CorpusError::UnknownEntity(entity.to_string()))
    }

    /// Counts for every keyword in one entity-year, or `None` outside the range.
    pub fn year_counts(&self, entity: &EntityId, year: i32) -> Result<Option<&[u64]>, CorpusError> {
        let b = self.block(entity)?;
        if year < b.first_year || year > b.last_year {
            return Ok(None);
        }
        let k = self.keywords.len();
        let y = (year - b.first_year) as usize;
        Ok(Some(&b.counts[y * k..(y + 1) * k]))
    }

    /// Single cell; years outside the entity's range yield `None`.
    pub fn count(&self, entity: &EntityId, year: i32, keyword: usize) -> Result<Option<u64>, CorpusError> {
        Ok(self.year_counts(entity, year)?.map(|row| row[keyword]))
    }

    /// Sum of all keyword counts per year.
    pub fn total_volume(&self, entity: &EntityId) -> Result<VolumeSeries, CorpusError> {
        let b = self.block(entity)?;
        let k = self.keywords.len();
        let points = (0..b.n_years())
            .map(|y| {
                let total = b.counts[y * k..(y + 1) * k].iter().sum();
                (b.first_year + y as i32, total)
            })
            .collect();
        Ok(VolumeSeries {
            entity: entity.clone(),
            points,
        })
    }

    /// Clips one entity's series to `first..=last`; others are untouched.
    pub fn restrict_years(&self, entity: &EntityId, first: i32, last: i32) -> Result<Corpus, CorpusError> {
        if first > last {
            return Err(CorpusError::InvalidRange { first, last });
        }
        let b = self.block(entity)?;
        if last < b.first_year || first > b.last_year {
            return Err(CorpusError::DisjointRange {
                entity: entity.to_string(),
                first,
                last,
                have_first: b.first_year,
                have_last: b.last_year,
            });
        }
        let lo = first.max(b.first_year);
        let hi = last.min(b.last_year);
        let k = self.keywords.len();
        let start = (lo - b.first_year) as usize * k;
        let end = (hi - b.first_year + 1) as usize * k;
        let clipped = EntityBlock {
            first_year: lo,
            last_year: hi,
            counts: b.counts[start..end].to_vec(),
        };
        let mut out = self.clone();
        out.entities.insert(entity.clone(), clipped);
        Ok(out)
    }

    /// Every cell in canonical order (entity, year, keyword), zeros included.
    pub fn cells(&self) -> impl Iterator<Item = CountCell> + '_ {
        self.entities.iter().flat_map(move |(e, b)| {
            (b.first_year..=b.last_year).flat_map(move |year| {
                let y = (year - b.first_year) as usize;
                let k = self.keywords.len();
                self.keywords.iter().enumerate().map(move |(i, kw)| CountCell {
                    entity: e.clone(),
                    year,
                    keyword: kw.clone(),
                    count: b.counts[y * k + i],
                })
            })
        })
    }

    /// Writes the canonical CSV form.
    ///
    /// Nonzero cells are always written. A zero row is added where it is the
    /// only way to preserve structure on reload: the first keyword at an
    /// entity's boundary years when those years are otherwise empty, and the
    /// first entity's first year for keywords that are zero everywhere.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["entity", "year", "keyword", "count"])
            .map_err(csv_io)?;
        let k = self.keywords.len();
        let mut seen_kw = vec![false; k];
        for b in self.entities.values() {
            for (i, c) in b.counts.iter().enumerate() {
                if *c > 0 {
                    seen_kw[i % k] = true;
                }
            }
        }
        let (first_entity, first_block) = self.entities.iter().next().expect("non-empty corpus");
        for (e, b) in &self.entities {
            for year in b.first_year..=b.last_year {
                let y = (year - b.first_year) as usize;
                let row = &b.counts[y * k..(y + 1) * k];
                let boundary = year == b.first_year || year == b.last_year;
                let empty_boundary = boundary && row.iter().all(|&c| c == 0);
                for (i, &c) in row.iter().enumerate() {
                    let anchor_kw = e == first_entity && year == first_block.first_year && !seen_kw[i];
                    if c > 0 || (empty_boundary && i == 0) || anchor_kw {
                        wtr.write_record([e.as_str(), &year.to_string(), &self.keywords[i], &c.to_string()])
                            .map_err(csv_io)?;
                    }
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// SHA-256 of the canonical CSV, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_string().as_bytes()))
    }
}

fn csv_io(e: csv::Error) -> CorpusError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CorpusError::Io(io),
        other => CorpusError::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
