use std::io::Write;
use std::path::{Path, PathBuf};

use log::warn;
use sha2::{Digest, Sha256};

use super::{CountResponse, Query, Source};

/// One JSON file per canonical query under a directory.
#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, query: &Query) -> PathBuf {
        let digest = Sha256::digest(query.canonical_key().as_bytes());
        self.dir.join(format!("{}.json", hex::encode(digest)))
    }

    /// Returns the stored response tagged as [`Source::Cache`]; unreadable or
    /// mismatched entries are treated as absent.
    pub fn lookup(&self, query: &Query) -> Option<CountResponse> {
        let path = self.path_for(query);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                warn!("cache entry {} unreadable: {e}", path.display());
                return None;
            }
        };
        match serde_json::from_str::<CountResponse>(&text) {
            Ok(resp) if resp.query.canonical_key() == query.canonical_key() => Some(CountResponse {
                source: Source::Cache,
                ..resp
            }),
            Ok(_) => {
                warn!("cache entry {} belongs to a different query; ignoring", path.display());
                None
            }
            Err(e) => {
                warn!("corrupt cache entry {}: {e}", path.display());
                None
            }
        }
    }

    /// Writes via a temporary file and rename, so readers never see a torn entry.
    pub fn store(&self, response: &CountResponse) -> std::io::Result<()> {
        let path = self.path_for(&response.query);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer(&mut tmp, response)?;
        tmp.write_all(b"\n")?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(())
    }
}
