//! Ledger persistence: an append-only record log and checksummed snapshots.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ledger::{EnergyLedger, LedgerEntry, TelemetryRecord};

pub const SNAPSHOT_MAGIC: &str = "offgrid-ledger-snapshot 1";
const SNAPSHOT_PREFIX: &str = "ledger-";
const SNAPSHOT_SUFFIX: &str = ".snap";
pub const MIN_KEEP: usize = 2;

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("{0}")]
    Integrity(String),
    #[error("keep must be at least {MIN_KEEP} (got {0})")]
    InvalidKeep(usize),
}

impl StorageError {
    pub fn name(&self) -> &'static str {
        match self {
            StorageError::Io { .. } => "StorageError",
            StorageError::Integrity(_) => "IntegrityError",
            StorageError::InvalidKeep(_) => "InvalidKeep",
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> StorageError {
    let context = context.into();
    move |source| StorageError::Io { context, source }
}

/// Snapshot files in `dir`, oldest first.
pub fn list_snapshots(dir: &Path) -> Result<Vec<PathBuf>, StorageError> {
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    let listing = match fs::read_dir(dir) {
        Ok(l) => l,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(format!("list {}", dir.display()))(e)),
    };
    for entry in listing {
        let entry = entry.map_err(io_err(format!("list {}", dir.display())))?;
        let name = entry.file_name();
        let Some(index) = name.to_str().and_then(snapshot_index) else {
            continue;
        };
        found.push((index, entry.path()));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

fn snapshot_index(file_name: &str) -> Option<u64> {
    let digits = file_name.strip_prefix(SNAPSHOT_PREFIX)?.strip_suffix(SNAPSHOT_SUFFIX)?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn latest_snapshot(dir: &Path) -> Result<Option<PathBuf>, StorageError> {
    Ok(list_snapshots(dir)?.pop())
}

fn snapshot_body(ledger: &EnergyLedger) -> String {
    format!("{SNAPSHOT_MAGIC}\nentries {}\n{}", ledger.len(), ledger.canonical_lines())
}

/// Writes a complete snapshot next to the existing ones, then deletes the
/// oldest until `keep` remain. The new file is written under a temporary
/// name and renamed into place, so a failed write leaves earlier snapshots
/// untouched.
pub fn snapshot(ledger: &EnergyLedger, dir: &Path, keep: usize) -> Result<PathBuf, StorageError> {
    if keep < MIN_KEEP {
        return Err(StorageError::InvalidKeep(keep));
    }
    fs::create_dir_all(dir).map_err(io_err(format!("create {}", dir.display())))?;
    let existing = list_snapshots(dir)?;
    let next = existing.last().and_then(|p| p.file_name()?.to_str().and_then(snapshot_index)).map_or(1, |i| i + 1);
    let name = format!("{SNAPSHOT_PREFIX}{next:08}{SNAPSHOT_SUFFIX}");
    let path = dir.join(&name);
    let tmp = dir.join(format!(".{name}.tmp"));

    let body = snapshot_body(ledger);
    let checksum = hex::encode(Sha256::digest(body.as_bytes()));
    let write = || -> io::Result<()> {
        let mut f = File::create(&tmp)?;
        f.write_all(body.as_bytes())?;
        writeln!(f, "sha256 {checksum}")?;
        f.sync_all()?;
        fs::rename(&tmp, &path)
    };
    if let Err(e) = write() {
        let _ = fs::remove_file(&tmp);
        return Err(io_err(format!("write {}", path.display()))(e));
    }

    let mut all = list_snapshots(dir)?;
    while all.len() > keep {
        let oldest = all.remove(0);
        fs::remove_file(&oldest).map_err(io_err(format!("remove {}", oldest.display())))?;
    }
    Ok(path)
}

/// Rebuilds a ledger from a snapshot, refusing any file whose checksum,
/// header or entry count does not check out.
pub fn restore(path: &Path) -> Result<EnergyLedger, StorageError> {
    let text = fs::read_to_string(path).map_err(io_err(format!("read {}", path.display())))?;
    let bad = |why: &str| StorageError::Integrity(format!("{}: {why}", path.display()));
    let body_end = text.trim_end_matches('\n').rfind('\n').map(|i| i + 1).ok_or_else(|| bad("no checksum trailer"))?;
    let (body, trailer) = text.split_at(body_end);
    let expected = trailer.trim_end().strip_prefix("sha256 ").ok_or_else(|| bad("no checksum trailer"))?;
    if hex::encode(Sha256::digest(body.as_bytes())) != expected {
        return Err(bad("checksum mismatch"));
    }
    let mut lines = body.lines();
    if lines.next() != Some(SNAPSHOT_MAGIC) {
        return Err(bad("unknown snapshot format"));
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("entries "))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| bad("missing entry count"))?;
    let mut ledger = EnergyLedger::new();
    for line in lines {
        let entry: LedgerEntry = serde_json::from_str(line).map_err(|e| bad(&format!("bad entry: {e}")))?;
        ledger.ingest(entry.record);
    }
    if ledger.len() != count {
        return Err(bad(&format!("header promises {count} entries, found {}", ledger.len())));
    }
    Ok(ledger)
}

/// Append-only log of records, one JSON object per line.
#[derive(Debug)]
pub struct LedgerLog {
    file: File,
    path: PathBuf,
}

impl LedgerLog {
    pub fn open(path: &Path) -> Result<Self, StorageError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(format!("create {}", parent.display())))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(format!("open {}", path.display())))?;
        Ok(Self { file, path: path.to_path_buf() })
    }

    pub fn append(&mut self, record: &TelemetryRecord) -> Result<(), StorageError> {
        let mut line = serde_json::to_string(record).expect("records serialise");
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err(format!("append {}", self.path.display())))
    }

    pub fn sync(&mut self) -> Result<(), StorageError> {
        self.file.sync_data().map_err(io_err(format!("sync {}", self.path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReplayStats {
    pub lines: usize,
    /// The last line was incomplete (interrupted append) and was skipped.
    pub torn_tail: bool,
}

/// Rebuilds a ledger from a log. An incomplete final line is skipped; a bad
/// line anywhere else is an integrity error.
pub fn replay_log(path: &Path) -> Result<(EnergyLedger, ReplayStats), StorageError> {
    let file = File::open(path).map_err(io_err(format!("open {}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut ledger = EnergyLedger::new();
    let mut stats = ReplayStats::default();
    let mut line = String::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line).map_err(io_err(format!("read {}", path.display())))?;
        if n == 0 {
            break;
        }
        stats.lines += 1;
        match serde_json::from_str::<TelemetryRecord>(line.trim_end()) {
            Ok(record) => {
                ledger.ingest(record);
            }
            Err(_) if !line.ends_with('\n') => {
                stats.torn_tail = true;
                break;
            }
            Err(e) => {
                return Err(StorageError::Integrity(format!("{} line {}: {e}", path.display(), stats.lines)));
            }
        }
    }
    Ok((ledger, stats))
}
