//! Append-only, hash-chained audit log.
//!
//! ```text
//! entry_hash[i] = SHA-256(prev_hash[i] ‖ canonical({event_type, index, payload, timestamp}))
//! prev_hash[0]  = "000…0" (64 zeros), prev_hash[i] = entry_hash[i-1]
//! ```
//!
//! On disk, one canonical JSON entry per line. A rotated file starts with
//! the last hash of its predecessor instead of the zero genesis.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::{canonical_value, to_canonical_string};
use crate::clock::Clock;
use crate::model::{rfc3339, HexDigest};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("ledger storage failure: {0}")]
    StorageFailure(#[from] io::Error),
    #[error("ledger is corrupt starting at entry {0}")]
    Corrupt(u64),
    #[error("cannot serialize event payload: {0}")]
    Serialize(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    ItemIngested,
    Certified,
    ReviewSubmitted,
    Overridden,
    ReportExported,
    RegenerationRequested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEntry {
    pub index: u64,
    #[serde(with = "rfc3339")]
    pub timestamp: DateTime<Utc>,
    pub event_type: EventType,
    pub payload: Value,
    pub prev_hash: HexDigest,
    pub entry_hash: HexDigest,
}

impl AuditEntry {
    pub fn compute_hash(
        prev_hash: &HexDigest,
        index: u64,
        timestamp: &DateTime<Utc>,
        event_type: EventType,
        payload: &Value,
    ) -> HexDigest {
        let body = json!({
            "index": index,
            "timestamp": rfc3339::format(timestamp),
            "event_type": event_type,
            "payload": payload,
        });
        let mut hasher = Sha256::new();
        hasher.update(prev_hash.as_str().as_bytes());
        hasher.update(canonical_value(&body).as_bytes());
        HexDigest::parse(&hex::encode(hasher.finalize())).expect("sha256 hex is a valid digest")
    }

    fn recomputed_hash(&self) -> HexDigest {
        AuditEntry::compute_hash(&self.prev_hash, self.index, &self.timestamp, self.event_type, &self.payload)
    }

    pub fn to_line(&self) -> String {
        to_canonical_string(self).expect("entries always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ChainStatus {
    Valid,
    FirstBadIndex(u64),
}

impl ChainStatus {
    pub fn is_valid(self) -> bool {
        self == ChainStatus::Valid
    }
}

/// Verifies a chain that starts at the zero genesis.
pub fn verify_chain(entries: &[AuditEntry]) -> ChainStatus {
    verify_segment(entries, &HexDigest::zero(), 0)
}

/// Verifies a chain segment anchored at `anchor`, whose first entry must
/// carry index `start_index`.
pub fn verify_segment(entries: &[AuditEntry], anchor: &HexDigest, start_index: u64) -> ChainStatus {
    let mut prev = anchor.clone();
    for (pos, entry) in entries.iter().enumerate() {
        let expected_index = start_index + pos as u64;
        let ok = entry.index == expected_index
            && entry.prev_hash == prev
            && entry.entry_hash == entry.recomputed_hash();
        if !ok {
            return ChainStatus::FirstBadIndex(expected_index);
        }
        prev = entry.entry_hash.clone();
    }
    ChainStatus::Valid
}

/// Where a persisted segment is expected to attach.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Anchor {
    Genesis,
    /// Previous file's last hash together with the first index in this file.
    After { hash: HexDigest, start_index: u64 },
    /// Trust the first entry's own `prev_hash` and index.
    SelfAnchored,
}

/// Verifies raw ledger file contents. Every line must be a canonical entry;
/// reported indices are logical (start index + line position).
pub fn verify_bytes(bytes: &[u8], anchor: &Anchor) -> ChainStatus {
    let lines = split_lines(bytes);
    let mut parsed = Vec::with_capacity(lines.len());
    let mut first_bad: Option<usize> = None;
    for (pos, line) in lines.iter().enumerate() {
        match parse_line(line) {
            Some(entry) => parsed.push(entry),
            None => {
                first_bad = Some(pos);
                break;
            }
        }
    }
    let (hash, start) = match anchor {
        Anchor::Genesis => (HexDigest::zero(), 0),
        Anchor::After { hash, start_index } => (hash.clone(), *start_index),
        Anchor::SelfAnchored => match parsed.first() {
            Some(e) => (e.prev_hash.clone(), e.index),
            None => (HexDigest::zero(), 0),
        },
    };
    match verify_segment(&parsed, &hash, start) {
        ChainStatus::FirstBadIndex(i) => ChainStatus::FirstBadIndex(i),
        ChainStatus::Valid => match first_bad {
            Some(pos) => ChainStatus::FirstBadIndex(start + pos as u64),
            None => ChainStatus::Valid,
        },
    }
}

fn split_lines(bytes: &[u8]) -> Vec<&[u8]> {
    let mut lines: Vec<&[u8]> = bytes.split(|b| *b == b'\n').collect();
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

fn parse_line(line: &[u8]) -> Option<AuditEntry> {
    let text = std::str::from_utf8(line).ok()?;
    let entry: AuditEntry = serde_json::from_str(text).ok()?;
    // reject any non-canonical encoding of the same entry
    (entry.to_line() == text).then_some(entry)
}

pub fn read_entries(bytes: &[u8]) -> Result<Vec<AuditEntry>, LedgerError> {
    split_lines(bytes)
        .iter()
        .enumerate()
        .map(|(pos, line)| parse_line(line).ok_or(LedgerError::Corrupt(pos as u64)))
        .collect()
}

pub trait AuditSink {
    fn append(&mut self, event_type: EventType, payload: Value) -> Result<AuditEntry, LedgerError>;
}

/// Single-writer ledger, optionally backed by a file.
pub struct Ledger {
    entries: Vec<AuditEntry>,
    segment_anchor: HexDigest,
    segment_start: u64,
    file: Option<(PathBuf, File)>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("entries", &self.entries.len())
            .field("segment_start", &self.segment_start)
            .field("path", &self.file.as_ref().map(|(p, _)| p))
            .finish()
    }
}

impl Ledger {
    pub fn in_memory(clock: Arc<dyn Clock>) -> Ledger {
        Ledger {
            entries: Vec::new(),
            segment_anchor: HexDigest::zero(),
            segment_start: 0,
            file: None,
            clock,
        }
    }

    /// Opens (or creates) a ledger file and replays it. A torn final line
    /// left by a crash is truncated; any other damage is `Corrupt`.
    pub fn open(path: impl AsRef<Path>, clock: Arc<dyn Clock>) -> Result<Ledger, LedgerError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        let durable_len = match bytes.iter().rposition(|b| *b == b'\n') {
            Some(pos) => pos + 1,
            None => 0,
        };
        if durable_len < bytes.len() {
            file.set_len(durable_len as u64)?;
            file.seek(SeekFrom::End(0))?;
            file.sync_data()?;
            bytes.truncate(durable_len);
        }

        let entries = read_entries(&bytes)?;
        let (anchor, start) = match entries.first() {
            Some(e) => (e.prev_hash.clone(), e.index),
            None => (HexDigest::zero(), 0),
        };
        if let ChainStatus::FirstBadIndex(i) = verify_segment(&entries, &anchor, start) {
            return Err(LedgerError::Corrupt(i));
        }
        Ok(Ledger {
            entries,
            segment_anchor: anchor,
            segment_start: start,
            file: Some((path, file)),
            clock,
        })
    }

    /// Starts a new file that continues the chain from the current tip.
    pub fn rotate(&mut self, new_path: impl AsRef<Path>) -> Result<(), LedgerError> {
        let path = new_path.as_ref().to_path_buf();
        let file = OpenOptions::new().append(true).create_new(true).open(&path)?;
        self.segment_anchor = self.last_hash();
        self.segment_start = self.next_index();
        self.entries.clear();
        self.file = Some((path, file));
        Ok(())
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn next_index(&self) -> u64 {
        self.segment_start + self.entries.len() as u64
    }

    pub fn last_hash(&self) -> HexDigest {
        self.entries
            .last()
            .map(|e| e.entry_hash.clone())
            .unwrap_or_else(|| self.segment_anchor.clone())
    }

    pub fn anchor(&self) -> Anchor {
        if self.segment_start == 0 && self.segment_anchor == HexDigest::zero() {
            Anchor::Genesis
        } else {
            Anchor::After {
                hash: self.segment_anchor.clone(),
                start_index: self.segment_start,
            }
        }
    }

    pub fn verify(&self) -> ChainStatus {
        verify_segment(&self.entries, &self.segment_anchor, self.segment_start)
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn count(&self, event_type: EventType) -> usize {
        self.entries.iter().filter(|e| e.event_type == event_type).count()
    }
}

impl AuditSink for Ledger {
    fn append(&mut self, event_type: EventType, payload: Value) -> Result<AuditEntry, LedgerError> {
        let index = self.next_index();
        let timestamp = self.clock.now();
        let prev_hash = self.last_hash();
        let entry_hash = AuditEntry::compute_hash(&prev_hash, index, &timestamp, event_type, &payload);
        let entry = AuditEntry {
            index,
            timestamp,
            event_type,
            payload,
            prev_hash,
            entry_hash,
        };
        if let Some((_, file)) = self.file.as_mut() {
            let mut line = entry.to_line();
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        self.entries.push(entry.clone());
        Ok(entry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;

    fn clock() -> Arc<dyn Clock> {
        Arc::new(FixedClock::default_instant())
    }

    fn filled(n: usize) -> Ledger {
        let mut ledger = Ledger::in_memory(clock());
        for i in 0..n {
            ledger.append(EventType::Certified, json!({"item_id": format!("q-{i}")})).unwrap();
        }
        ledger
    }

    #[test]
    fn genesis_and_chaining() {
        let ledger = filled(2);
        let e = ledger.entries();
        assert_eq!(e[0].index, 0);
        assert_eq!(e[0].prev_hash, HexDigest::zero());
        assert_eq!(e[1].prev_hash, e[0].entry_hash);
        assert_eq!(verify_chain(e), ChainStatus::Valid);
    }

    #[test]
    fn empty_ledger_is_valid() {
        assert_eq!(verify_chain(&[]), ChainStatus::Valid);
        assert_eq!(verify_bytes(b"", &Anchor::Genesis), ChainStatus::Valid);
    }

    #[test]
    fn hash_matches_an_independent_computation() {
        let ledger = filled(1);
        let e = &ledger.entries()[0];
        let body = r#"{"event_type":"Certified","index":0,"payload":{"item_id":"q-0"},"timestamp":"2025-01-01T00:00:00Z"}"#;
        let mut input = "0".repeat(64);
        input.push_str(body);
        assert_eq!(e.entry_hash.as_str(), hex::encode(Sha256::digest(input.as_bytes())));
    }

    #[test]
    fn payload_tamper_is_detected() {
        let mut entries = filled(100).entries().to_vec();
        assert_eq!(verify_chain(&entries), ChainStatus::Valid);
        entries[1].payload = json!({"item_id": "q-X"});
        assert_eq!(verify_chain(&entries), ChainStatus::FirstBadIndex(1));
    }

    #[test]
    fn byte_flip_in_file_contents() {
        let ledger = filled(3);
        let mut bytes: Vec<u8> = ledger
            .entries()
            .iter()
            .flat_map(|e| format!("{}\n", e.to_line()).into_bytes())
            .collect();
        assert_eq!(verify_bytes(&bytes, &Anchor::Genesis), ChainStatus::Valid);
        let first_len = ledger.entries()[0].to_line().len() + 1;
        let pos = first_len + ledger.entries()[1].to_line().find("q-1").unwrap() + 2;
        bytes[pos] ^= 0x01;
        assert_eq!(verify_bytes(&bytes, &Anchor::Genesis), ChainStatus::FirstBadIndex(1));
    }

    #[test]
    fn reopen_continues_and_truncates_torn_writes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        {
            let mut ledger = Ledger::open(&path, clock()).unwrap();
            ledger.append(EventType::ItemIngested, json!({"n": 1})).unwrap();
            ledger.append(EventType::ItemIngested, json!({"n": 2})).unwrap();
        }
        // simulate a crash halfway through a write
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"entry_hash":"ab"#).unwrap();
        drop(f);

        let mut ledger = Ledger::open(&path, clock()).unwrap();
        assert_eq!(ledger.len(), 2);
        let e = ledger.append(EventType::Certified, json!({"n": 3})).unwrap();
        assert_eq!(e.index, 2);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(verify_bytes(&bytes, &Anchor::Genesis), ChainStatus::Valid);
        assert_eq!(read_entries(&bytes).unwrap().len(), 3);
    }

    #[test]
    fn corrupt_file_refuses_to_open() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("audit.jsonl");
        let ledger = filled(2);
        let mut text: String = ledger.entries().iter().map(|e| format!("{}\n", e.to_line())).collect();
        text = text.replacen("q-0", "q-9", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(Ledger::open(&path, clock()), Err(LedgerError::Corrupt(0))));
    }

    #[test]
    fn rotation_keeps_chain_continuity() {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.jsonl");
        let second = dir.path().join("b.jsonl");
        let mut ledger = Ledger::open(&first, clock()).unwrap();
        ledger.append(EventType::Certified, json!({"n": 0})).unwrap();
        let tip = ledger.append(EventType::Certified, json!({"n": 1})).unwrap();
        ledger.rotate(&second).unwrap();
        let e = ledger.append(EventType::Certified, json!({"n": 2})).unwrap();
        assert_eq!(e.index, 2);
        assert_eq!(e.prev_hash, tip.entry_hash);

        let a = std::fs::read(&first).unwrap();
        let b = std::fs::read(&second).unwrap();
        assert!(verify_bytes(&a, &Anchor::Genesis).is_valid());
        let anchor = Anchor::After { hash: tip.entry_hash.clone(), start_index: 2 };
        assert!(verify_bytes(&b, &anchor).is_valid());
        // without the right anchor the segment does not verify from genesis
        assert_eq!(verify_bytes(&b, &Anchor::Genesis), ChainStatus::FirstBadIndex(0));
        assert!(verify_bytes(&b, &Anchor::SelfAnchored).is_valid());
    }

    #[test]
    fn non_canonical_line_is_rejected() {
        let ledger = filled(1);
        let line = ledger.entries()[0].to_line();
        let spaced = line.replacen(":", ": ", 1);
        assert_eq!(verify_bytes(spaced.as_bytes(), &Anchor::Genesis), ChainStatus::FirstBadIndex(0));
    }
}
