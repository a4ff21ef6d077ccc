//! Data directory: one `<subject_id>.txt` recording per subject plus a
//! `labels.csv` manifest with a `subject_id,label` header.

use std::fs;
use std::path::{Path, PathBuf};

use cgait_core::signal::{
    parse_recording, segment_windows, split_dataset, window_count, Channel, DatasetSplit, GaitRecording, SignalError,
    SplitRatios, Window, WINDOW_LEN,
};
use cgait_core::Severity;
use serde::Serialize;

pub const MANIFEST: &str = "labels.csv";
/// Channel fed to the classifier.
pub const ANALYSIS_CHANNEL: Channel = Channel::TotalLeft;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{MANIFEST} line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("subject `{0}` is listed in {MANIFEST} but has no recording")]
    MissingRecording(String),
    #[error("subject `{subject}`: {source}")]
    Signal {
        subject: String,
        #[source]
        source: SignalError,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubjectSummary {
    pub id: String,
    pub label: Severity,
    pub recording_length: usize,
    pub window_count: usize,
}

#[derive(Clone, Debug)]
pub struct Subject {
    pub id: String,
    pub label: Severity,
    pub recording: GaitRecording,
}

impl Subject {
    pub fn summary(&self) -> SubjectSummary {
        SubjectSummary {
            id: self.id.clone(),
            label: self.label,
            recording_length: self.recording.len(),
            window_count: window_count(self.recording.len()),
        }
    }

    pub fn windows(&self) -> Vec<Window> {
        segment_windows(&self.recording, ANALYSIS_CHANNEL).unwrap_or_default()
    }

    pub fn window(&self, index: usize) -> Option<Window> {
        self.windows().into_iter().nth(index)
    }
}

/// Every subject of a data directory, sorted by id.
#[derive(Clone, Debug, Default)]
pub struct DataSet {
    pub subjects: Vec<Subject>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_manifest(dir: &Path) -> Result<Vec<(String, Severity)>, DataError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut out: Vec<(String, Severity)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.eq_ignore_ascii_case("subject_id,label")) {
            continue;
        }
        let bad = |reason: String| DataError::Manifest { line: line_no, reason };
        let (id, label) = line.split_once(',').ok_or_else(|| bad("expected `subject_id,label`".into()))?;
        let id = id.trim();
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(bad(format!("invalid subject id `{id}`")));
        }
        let label: Severity = label.parse().map_err(|e| bad(format!("{e}")))?;
        if out.iter().any(|(s, _)| s == id) {
            return Err(bad(format!("duplicate subject `{id}`")));
        }
        out.push((id.to_string(), label));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

pub fn write_manifest(dir: &Path, entries: &[(String, Severity)]) -> Result<(), DataError> {
    let mut text = String::from("subject_id,label\n");
    for (id, label) in entries {
        text.push_str(&format!("{id},{label}\n"));
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, text).map_err(io_err(&path))
}

impl DataSet {
    pub fn load(dir: &Path) -> Result<DataSet, DataError> {
        let mut subjects = Vec::new();
        for (id, label) in read_manifest(dir)? {
            let path = dir.join(format!("{id}.txt"));
            let text = match fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(DataError::MissingRecording(id)),
                Err(e) => return Err(io_err(&path)(e)),
            };
            let recording = parse_recording(&text, &id, label).map_err(|source| DataError::Signal {
                subject: id.clone(),
                source,
            })?;
            subjects.push(Subject { id, label, recording });
        }
        Ok(DataSet { subjects })
    }

    pub fn subject(&self, id: &str) -> Option<&Subject> {
        self.subjects.iter().find(|s| s.id == id)
    }

    pub fn summaries(&self) -> Vec<SubjectSummary> {
        self.subjects.iter().map(Subject::summary).collect()
    }

    /// All analysis-channel windows; recordings shorter than one window add none.
    pub fn windows(&self) -> Vec<Window> {
        self.subjects.iter().flat_map(Subject::windows).collect()
    }

    pub fn split(&self, seed: u64) -> Result<DatasetSplit, SignalError> {
        split_dataset(self.windows(), SplitRatios::default(), seed)
    }
}

/// Index of a window within its subject's recording.
pub fn window_index(w: &Window) -> usize {
    w.start_frame / WINDOW_LEN
}
