//! Certification record store. Optionally persisted as a JSON-lines
//! snapshot that is rewritten atomically (temp file + rename) on every
//! commit, so a crash leaves either the old or the new state on disk.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use parking_lot::RwLock;
use thiserror::Error;

use crate::codec::{record_from_json, record_to_json, CodecError, Mode};
use crate::model::CertificationRecord;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no record for item `{0}`")]
    NotFound(String),
    #[error("record for `{0}` already exists")]
    Duplicate(String),
    #[error("version conflict: expected {expected}, found {actual}")]
    VersionConflict { expected: u64, actual: u64 },
    #[error("record store I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("record store line {line}: {source}")]
    Decode { line: usize, source: CodecError },
}

#[derive(Debug, Default)]
pub struct RecordStore {
    records: RwLock<BTreeMap<String, CertificationRecord>>,
    path: Option<PathBuf>,
}

/// Reads a JSON-lines file of certification records (strict mode).
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<CertificationRecord>, StoreError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let decoded = record_from_json(line, Mode::Strict)
            .map_err(|source| StoreError::Decode { line: i + 1, source })?;
        out.push(decoded.value);
    }
    Ok(out)
}

/// Writes records as JSON lines via a temporary file and rename.
pub fn write_records<'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a CertificationRecord>,
) -> Result<(), StoreError> {
    let path = path.as_ref();
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        for r in records {
            let line = record_to_json(r);
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl RecordStore {
    pub fn in_memory(records: impl IntoIterator<Item = CertificationRecord>) -> RecordStore {
        RecordStore {
            records: RwLock::new(records.into_iter().map(|r| (r.item.id.clone(), r)).collect()),
            path: None,
        }
    }

    /// Opens (or creates) a persisted store.
    pub fn open(path: impl AsRef<Path>) -> Result<RecordStore, StoreError> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() { read_records(&path)? } else { Vec::new() };
        Ok(RecordStore {
            records: RwLock::new(records.into_iter().map(|r| (r.item.id.clone(), r)).collect()),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.read().is_empty()
    }

    pub fn get(&self, id: &str) -> Option<CertificationRecord> {
        self.records.read().get(id).cloned()
    }

    pub fn snapshot(&self) -> Vec<CertificationRecord> {
        self.records.read().values().cloned().collect()
    }

    pub fn insert(&self, record: CertificationRecord) -> Result<(), StoreError> {
        let mut guard = self.records.write();
        if guard.contains_key(&record.item.id) {
            return Err(StoreError::Duplicate(record.item.id.clone()));
        }
        let id = record.item.id.clone();
        guard.insert(id.clone(), record);
        if let Err(e) = self.persist(&guard) {
            guard.remove(&id);
            return Err(e);
        }
        Ok(())
    }

    /// Replaces the record if its stored version is still `expected`.
    pub fn compare_and_set(
        &self,
        expected: u64,
        record: CertificationRecord,
    ) -> Result<(), StoreError> {
        let id = record.item.id.clone();
        self.update(&id, expected, |_| Ok::<_, StoreError>(record)).map(|_| ())
    }

    /// Runs `f` on the current record while holding the write lock and
    /// commits its result. Nothing is written if the version check or `f`
    /// fails.
    pub fn update<E: From<StoreError>>(
        &self,
        id: &str,
        expected: u64,
        f: impl FnOnce(&CertificationRecord) -> Result<CertificationRecord, E>,
    ) -> Result<CertificationRecord, E> {
        let mut guard = self.records.write();
        let current = guard.get(id).ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        if current.version != expected {
            return Err(StoreError::VersionConflict {
                expected,
                actual: current.version,
            }
            .into());
        }
        let next = f(current)?;
        let previous = guard.insert(id.to_string(), next.clone());
        if let Err(e) = self.persist(&guard) {
            if let Some(p) = previous {
                guard.insert(id.to_string(), p);
            }
            return Err(e.into());
        }
        Ok(next)
    }

    fn persist(&self, records: &BTreeMap<String, CertificationRecord>) -> Result<(), StoreError> {
        match &self.path {
            Some(path) => write_records(path, records.values()),
            None => Ok(()),
        }
    }
}
