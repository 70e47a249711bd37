//! On-disk cache of conditional density tables, keyed by everything that
//! determines their contents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::container::{read_container, write_container, RawContainer};
use crate::bound::{conditional_pdf_table, BoundConfig, ConditionalPdfTable, GridSpec};
use crate::error::{Error, Result};
use crate::rng::RNG_ALGORITHM;
use crate::CODE_VERSION;

pub const TABLE_MAGIC: &[u8; 8] = b"SCSSBND1";
pub const TABLE_EXTENSION: &str = "scssbnd";
pub const CONTAINER_VERSION: u32 = 1;

/// Everything the table contents depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableKey {
    pub code_version: String,
    pub c: usize,
    pub trials: usize,
    pub grid: GridSpec,
    pub seed: u64,
    pub rng: String,
}

impl TableKey {
    pub fn new(c: usize, cfg: &BoundConfig) -> Self {
        Self {
            code_version: CODE_VERSION.to_string(),
            c,
            trials: cfg.trials,
            grid: cfg.grid,
            seed: cfg.seed,
            rng: RNG_ALGORITHM.to_string(),
        }
    }

    pub fn file_name(&self) -> String {
        let json = serde_json::to_vec(self).expect("key serialises");
        let hash = hex::encode(Sha256::digest(json));
        format!("table-c{}-{}.{TABLE_EXTENSION}", self.c, &hash[..16])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub version: u32,
    pub key: TableKey,
}

pub fn store_table(path: impl AsRef<Path>, key: &TableKey, table: &ConditionalPdfTable) -> Result<()> {
    let header = TableHeader { version: CONTAINER_VERSION, key: key.clone() };
    write_container(path, TABLE_MAGIC, &header, &table.payload())
}

fn open(path: &Path) -> Result<(TableHeader, RawContainer)> {
    let raw = read_container(path, TABLE_MAGIC)?;
    let header: TableHeader = raw.header_as().map_err(|e| Error::Corrupt(format!("table header: {e}")))?;
    if header.version != CONTAINER_VERSION {
        return Err(Error::Corrupt(format!("container version {} is not {CONTAINER_VERSION}", header.version)));
    }
    Ok((header, raw))
}

/// Reads a cached table after checking its digest.
pub fn load_table(path: impl AsRef<Path>) -> Result<(TableHeader, ConditionalPdfTable)> {
    let (header, raw) = open(path.as_ref())?;
    raw.verify()?;
    let table = ConditionalPdfTable::from_payload(header.key.c, &header.key.grid, &raw.payload)?;
    Ok((header, table))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheStatus {
    Hit,
    Miss,
    /// The cached file failed verification and was rebuilt.
    Rebuilt,
}

/// The table for `(c, cfg)`, from `dir` when present and valid, otherwise
/// built and stored.
pub fn cached_table(dir: impl AsRef<Path>, c: usize, cfg: &BoundConfig) -> Result<(ConditionalPdfTable, CacheStatus)> {
    let dir = dir.as_ref();
    let key = TableKey::new(c, cfg);
    let path = dir.join(key.file_name());
    let mut status = CacheStatus::Miss;
    if path.exists() {
        match load_table(&path) {
            Ok((h, t)) if h.key == key => return Ok((t, CacheStatus::Hit)),
            Ok(_) => log::warn!("{}: key mismatch, rebuilding", path.display()),
            Err(e) => log::warn!("{}: {e}, rebuilding", path.display()),
        }
        status = CacheStatus::Rebuilt;
    }
    let table = conditional_pdf_table(c, cfg.trials, &cfg.grid, cfg.seed, cfg.workers)?;
    std::fs::create_dir_all(dir)?;
    store_table(&path, &key, &table)?;
    Ok((table, status))
}

#[derive(Debug, Clone, Serialize)]
pub struct CacheEntry {
    pub path: PathBuf,
    pub bytes: u64,
    pub key: Option<TableKey>,
    /// `None` when the entry verified, else the reason it did not.
    pub problem: Option<String>,
}

fn table_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == TABLE_EXTENSION))
        .collect();
    out.sort();
    Ok(out)
}

/// Cache entries sorted by path, each verified against its digest.
pub fn list(dir: impl AsRef<Path>) -> Result<Vec<CacheEntry>> {
    table_files(dir.as_ref())?
        .into_iter()
        .map(|path| {
            let bytes = std::fs::metadata(&path)?.len();
            let (key, problem) = match open(&path) {
                Ok((h, raw)) => (Some(h.key), raw.verify().err().map(|e| e.to_string())),
                Err(e) => (None, Some(e.to_string())),
            };
            Ok(CacheEntry { path, bytes, key, problem })
        })
        .collect()
}

/// Recomputes the payload digest of one entry.
pub fn verify(path: impl AsRef<Path>) -> Result<()> {
    let (_, raw) = open(path.as_ref())?;
    raw.verify()
}

/// Deletes every table in `dir`; returns how many were removed.
pub fn purge(dir: impl AsRef<Path>) -> Result<usize> {
    let files = table_files(dir.as_ref())?;
    for f in &files {
        std::fs::remove_file(f)?;
    }
    Ok(files.len())
}
