use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

const GENESIS_DOMAIN: &[u8] = b"cgait/audit-chain/v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    CaseCreated,
    ReviewOpened,
    Contested,
    Adjudicated,
    AdjudicationFailed,
    Finalized,
}

/// One line of the audit log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEntry {
    pub case_id: String,
    pub seq: u64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub actor: String,
    pub action: AuditAction,
    pub payload: Value,
    pub prev_hash: String,
    pub hash: String,
}

#[derive(Serialize)]
struct Unsealed<'a> {
    case_id: &'a str,
    seq: u64,
    timestamp: u64,
    actor: &'a str,
    action: AuditAction,
    payload: &'a Value,
    prev_hash: &'a str,
}

/// `prev_hash` of the first entry of every chain.
pub fn genesis_hash() -> String {
    hex::encode(Sha256::digest(GENESIS_DOMAIN))
}

impl AuditEntry {
    fn unsealed(&self) -> Unsealed<'_> {
        Unsealed {
            case_id: &self.case_id,
            seq: self.seq,
            timestamp: self.timestamp,
            actor: &self.actor,
            action: self.action,
            payload: &self.payload,
            prev_hash: &self.prev_hash,
        }
    }

    /// SHA-256 over the previous hash followed by the canonical JSON of
    /// this entry without its own hash. Object keys serialize sorted.
    pub fn compute_hash(&self) -> String {
        let body = serde_json::to_vec(&self.unsealed()).expect("audit entry serializes");
        let mut h = Sha256::new();
        h.update(self.prev_hash.as_bytes());
        h.update(&body);
        hex::encode(h.finalize())
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("audit entry serializes")
    }
}

/// Build and seal the next entry after `chain`.
pub fn next_entry(
    chain: &[AuditEntry],
    case_id: &str,
    timestamp: u64,
    actor: &str,
    action: AuditAction,
    payload: Value,
) -> AuditEntry {
    let (seq, prev_hash) = match chain.last() {
        Some(e) => (e.seq + 1, e.hash.clone()),
        None => (0, genesis_hash()),
    };
    let mut e = AuditEntry {
        case_id: String::from(case_id),
        seq,
        timestamp,
        actor: String::from(actor),
        action,
        payload,
        prev_hash,
        hash: String::new(),
    };
    e.hash = e.compute_hash();
    e
}

/// True when every entry links to its predecessor, sequence numbers count
/// up from 0, one case id is used throughout and every hash recomputes.
pub fn verify_chain(entries: &[AuditEntry]) -> bool {
    let mut prev = genesis_hash();
    for (i, e) in entries.iter().enumerate() {
        if e.seq != i as u64 || e.prev_hash != prev || e.case_id != entries[0].case_id || e.compute_hash() != e.hash {
            return false;
        }
        prev = e.hash.clone();
    }
    true
}

/// Parse a JSONL log. Every line must be the exact canonical rendering of
/// the entry it holds, so no byte can change without detection.
pub fn parse_jsonl(text: &str) -> Option<Vec<AuditEntry>> {
    let mut out = Vec::new();
    for line in text.split_terminator('\n') {
        let e: AuditEntry = serde_json::from_str(line).ok()?;
        if e.to_json_line() != line {
            return None;
        }
        out.push(e);
    }
    Some(out)
}

/// Verify the chain of one case stored as JSONL.
pub fn verify_jsonl(text: &str) -> bool {
    match parse_jsonl(text) {
        Some(entries) => verify_chain(&entries),
        None => false,
    }
}

pub fn to_jsonl(entries: &[AuditEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&e.to_json_line());
        s.push('\n');
    }
    s
}
