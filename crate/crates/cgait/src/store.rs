//! File persistence for the service: one append-only audit JSONL shared by
//! all cases plus a JSON snapshot per case in `cases/` next to it.
//!
//! Audit lines are fsynced before the snapshot is replaced, so a crash can
//! leave the log ahead of a snapshot but never behind it.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use cgait_core::adjudicator::{verify_jsonl, AuditEntry, CaseRecord};
use cgait_core::explain::ExplanationMap;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredCase {
    pub record: CaseRecord,
    pub gradcam: ExplanationMap,
    pub lrp: ExplanationMap,
    pub created_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0}: {1}")]
    Io(PathBuf, io::Error),
    #[error("{0}: {1}")]
    Corrupt(PathBuf, String),
}

pub struct CaseStore {
    log_path: PathBuf,
    cases_dir: PathBuf,
    log: Mutex<File>,
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |e| StoreError::Io(path.to_path_buf(), e)
}

/// Audit lines of one case as stored, plus whether every line of the log parsed.
pub struct CaseAudit {
    pub jsonl: String,
    pub log_intact: bool,
}

impl CaseAudit {
    pub fn verified(&self) -> bool {
        self.log_intact && verify_jsonl(&self.jsonl)
    }
}

impl CaseStore {
    /// Open (creating if needed) the log and load every case snapshot.
    pub fn open(log_path: &Path) -> Result<(CaseStore, BTreeMap<String, StoredCase>), StoreError> {
        let parent = log_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let cases_dir = parent.join("cases");
        fs::create_dir_all(&cases_dir).map_err(io_at(&cases_dir))?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .map_err(io_at(log_path))?;
        let mut cases = BTreeMap::new();
        for entry in fs::read_dir(&cases_dir).map_err(io_at(&cases_dir))? {
            let path = entry.map_err(io_at(&cases_dir))?.path();
            if path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(io_at(&path))?;
            let case: StoredCase =
                serde_json::from_str(&text).map_err(|e| StoreError::Corrupt(path.clone(), e.to_string()))?;
            cases.insert(case.record.case_id.clone(), case);
        }
        let store = CaseStore {
            log_path: log_path.to_path_buf(),
            cases_dir,
            log: Mutex::new(log),
        };
        Ok((store, cases))
    }

    /// Append entries and fsync. The single file handle behind a mutex
    /// serializes writers.
    pub fn append(&self, entries: &[AuditEntry]) -> Result<(), StoreError> {
        if entries.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for e in entries {
            buf.push_str(&e.to_json_line());
            buf.push('\n');
        }
        let mut log = self.log.lock().unwrap();
        log.write_all(buf.as_bytes()).map_err(io_at(&self.log_path))?;
        log.sync_data().map_err(io_at(&self.log_path))
    }

    fn snapshot_path(&self, case_id: &str) -> PathBuf {
        self.cases_dir.join(format!("{case_id}.json"))
    }

    /// Atomically replace the snapshot of `case`.
    pub fn save(&self, case: &StoredCase) -> Result<(), StoreError> {
        let path = self.snapshot_path(&case.record.case_id);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec(case).expect("case serializes");
        let mut f = File::create(&tmp).map_err(io_at(&tmp))?;
        f.write_all(&body).map_err(io_at(&tmp))?;
        f.sync_all().map_err(io_at(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_at(&path))?;
        if let Ok(dir) = File::open(&self.cases_dir) {
            let _ = dir.sync_all();
        }
        Ok(())
    }

    /// Persist a mutation: new audit entries first, then the snapshot.
    pub fn commit(&self, case: &StoredCase, new_entries: &[AuditEntry]) -> Result<(), StoreError> {
        self.append(new_entries)?;
        self.save(case)
    }

    /// The lines of the log belonging to `case_id`, byte for byte.
    pub fn case_audit(&self, case_id: &str) -> Result<CaseAudit, StoreError> {
        // hold the writer lock so no half-written line is observed
        let _guard = self.log.lock().unwrap();
        let text = fs::read_to_string(&self.log_path).map_err(io_at(&self.log_path))?;
        let mut jsonl = String::new();
        let mut log_intact = true;
        for line in text.split_terminator('\n') {
            match serde_json::from_str::<AuditEntry>(line) {
                Ok(e) if e.case_id == case_id => {
                    jsonl.push_str(line);
                    jsonl.push('\n');
                }
                Ok(_) => {}
                Err(_) => log_intact = false,
            }
        }
        Ok(CaseAudit { jsonl, log_intact })
    }

    pub fn log_path(&self) -> &Path {
        &self.log_path
    }
}
