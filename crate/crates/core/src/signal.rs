//! vGRF recordings: parsing, window segmentation, gait events and
//! subject-disjoint dataset partitioning.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::severity::Severity;

/// Sampling rate of the in-shoe force sensors.
pub const SAMPLE_RATE_HZ: f64 = 100.0;
/// Frames per model input window (10 s at 100 Hz).
pub const WINDOW_LEN: usize = 1000;
pub const SENSORS_PER_FOOT: usize = 8;
/// time, L1..L8, R1..R8, total left, total right
pub const COLUMNS: usize = 1 + 2 * SENSORS_PER_FOOT + 2;

const TIME_STEP_TOLERANCE_S: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SignalError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: timestamp does not increase")]
    NonMonotoneTime { line: usize },
    #[error("line {line}: sample interval deviates from {expected_s} s")]
    IrregularSampling { line: usize, expected_s: f64 },
    #[error("line {line}, column {column}: negative force")]
    NegativeForce { line: usize, column: usize },
    #[error("recording contains no samples")]
    EmptyRecording,
    #[error("recording has {len} frames, at least {needed} required")]
    RecordingTooShort { len: usize, needed: usize },
    #[error("fewer than two heel strikes detected")]
    NoStridesDetected,
    #[error("class {class} has {subjects} subjects, at least {needed} required")]
    InsufficientSubjects {
        class: Severity,
        subjects: usize,
        needed: usize,
    },
    #[error("split ratios must be positive and sum to 1")]
    InvalidRatios,
    #[error("window from `{0}` has no label")]
    Unlabeled(String),
    #[error("subject `{0}` has windows with conflicting labels")]
    ConflictingLabels(String),
    #[error("window must hold exactly {WINDOW_LEN} finite values (got {0})")]
    InvalidWindow(usize),
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
}

/// One subject walk: 8 sensors per foot plus the per-foot totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitRecording {
    subject_id: String,
    cohort_label: Severity,
    sample_rate_hz: f64,
    timestamps: Vec<f64>,
    left_sensors: Vec<Vec<f64>>,
    right_sensors: Vec<Vec<f64>>,
    total_left: Vec<f64>,
    total_right: Vec<f64>,
}

impl GaitRecording {
    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn cohort_label(&self) -> Severity {
        self.cohort_label
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn total_left(&self) -> &[f64] {
        &self.total_left
    }

    pub fn total_right(&self) -> &[f64] {
        &self.total_right
    }

    pub fn channel(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::TotalLeft => &self.total_left,
            Channel::TotalRight => &self.total_right,
            Channel::Left(i) => &self.left_sensors[i as usize - 1],
            Channel::Right(i) => &self.right_sensors[i as usize - 1],
        }
    }

    /// Total force channel of one foot.
    pub fn foot_total(&self, foot: Foot) -> &[f64] {
        match foot {
            Foot::Left => &self.total_left,
            Foot::Right => &self.total_right,
        }
    }
}

/// A single force channel of a recording.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    TotalLeft,
    TotalRight,
    /// Left sensor 1..=8
    Left(u8),
    /// Right sensor 1..=8
    Right(u8),
}

impl Channel {
    pub fn all() -> Vec<Channel> {
        let mut v = Vec::with_capacity(2 * SENSORS_PER_FOOT + 2);
        v.extend((1..=SENSORS_PER_FOOT as u8).map(Channel::Left));
        v.extend((1..=SENSORS_PER_FOOT as u8).map(Channel::Right));
        v.push(Channel::TotalLeft);
        v.push(Channel::TotalRight);
        v
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::TotalLeft => f.write_str("total_left"),
            Channel::TotalRight => f.write_str("total_right"),
            Channel::Left(i) => write!(f, "L{i}"),
            Channel::Right(i) => write!(f, "R{i}"),
        }
    }
}

impl FromStr for Channel {
    type Err = SignalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "total_left" | "totalleft" | "left_total" => return Ok(Channel::TotalLeft),
            "total_right" | "totalright" | "right_total" => return Ok(Channel::TotalRight),
            _ => {}
        }
        let bad = || SignalError::UnknownChannel(t.to_string());
        let (side, num) = t.split_at(t.char_indices().nth(1).map_or(t.len(), |(i, _)| i));
        let idx: u8 = num.parse().map_err(|_| bad())?;
        if !(1..=SENSORS_PER_FOOT as u8).contains(&idx) {
            return Err(bad());
        }
        match side {
            "L" | "l" => Ok(Channel::Left(idx)),
            "R" | "r" => Ok(Channel::Right(idx)),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foot {
    Left,
    Right,
}

/// Parse a whitespace-delimited 19-column recording (time, L1-L8, R1-R8,
/// total left, total right), one line per 10 ms sample. Blank lines are skipped.
pub fn parse_recording(
    text: &str,
    subject_id: &str,
    cohort_label: Severity,
) -> Result<GaitRecording, SignalError> {
    let mut timestamps = Vec::new();
    let mut left: Vec<Vec<f64>> = (0..SENSORS_PER_FOOT).map(|_| Vec::new()).collect();
    let mut right: Vec<Vec<f64>> = (0..SENSORS_PER_FOOT).map(|_| Vec::new()).collect();
    let mut total_left = Vec::new();
    let mut total_right = Vec::new();
    let step = 1.0 / SAMPLE_RATE_HZ;
    let mut row = [0.0f64; COLUMNS];

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut n = 0;
        for token in raw.split_whitespace() {
            if n == COLUMNS {
                n += 1;
                break;
            }
            let v: f64 = token.parse().map_err(|_| SignalError::MalformedLine {
                line,
                reason: alloc::format!("non-numeric token `{token}`"),
            })?;
            if !v.is_finite() {
                return Err(SignalError::MalformedLine {
                    line,
                    reason: alloc::format!("non-finite value `{token}`"),
                });
            }
            row[n] = v;
            n += 1;
        }
        if n != COLUMNS {
            let found = raw.split_whitespace().count();
            return Err(SignalError::MalformedLine {
                line,
                reason: alloc::format!("expected {COLUMNS} columns, found {found}"),
            });
        }
        if let Some(col) = row[1..].iter().position(|&v| v < 0.0) {
            return Err(SignalError::NegativeForce {
                line,
                column: col + 2,
            });
        }
        if let Some(&prev) = timestamps.last() {
            let t: f64 = row[0];
            if t <= prev {
                return Err(SignalError::NonMonotoneTime { line });
            }
            if ((t - prev) - step).abs() > TIME_STEP_TOLERANCE_S {
                return Err(SignalError::IrregularSampling {
                    line,
                    expected_s: step,
                });
            }
        }
        timestamps.push(row[0]);
        for s in 0..SENSORS_PER_FOOT {
            left[s].push(row[1 + s]);
            right[s].push(row[1 + SENSORS_PER_FOOT + s]);
        }
        total_left.push(row[COLUMNS - 2]);
        total_right.push(row[COLUMNS - 1]);
    }

    if timestamps.is_empty() {
        return Err(SignalError::EmptyRecording);
    }
    Ok(GaitRecording {
        subject_id: subject_id.into(),
        cohort_label,
        sample_rate_hz: SAMPLE_RATE_HZ,
        timestamps,
        left_sensors: left,
        right_sensors: right,
        total_left,
        total_right,
    })
}

/// Fixed-length single-channel model input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub source_id: String,
    pub start_frame: usize,
    values: Vec<f64>,
    pub label: Option<Severity>,
}

impl Window {
    pub fn new(
        source_id: impl Into<String>,
        start_frame: usize,
        values: Vec<f64>,
        label: Option<Severity>,
    ) -> Result<Window, SignalError> {
        if values.len() != WINDOW_LEN || values.iter().any(|v| !v.is_finite()) {
            return Err(SignalError::InvalidWindow(values.len()));
        }
        Ok(Window {
            source_id: source_id.into(),
            start_frame,
            values,
            label,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Cut a channel into non-overlapping 1000-frame windows; the trailing
/// remainder is dropped.
pub fn segment_windows(rec: &GaitRecording, channel: Channel) -> Result<Vec<Window>, SignalError> {
    let data = rec.channel(channel);
    if data.len() < WINDOW_LEN {
        return Err(SignalError::RecordingTooShort {
            len: data.len(),
            needed: WINDOW_LEN,
        });
    }
    Ok(data
        .chunks_exact(WINDOW_LEN)
        .enumerate()
        .map(|(i, chunk)| Window {
            source_id: rec.subject_id.clone(),
            start_frame: i * WINDOW_LEN,
            values: chunk.to_vec(),
            label: Some(rec.cohort_label),
        })
        .collect())
}

/// Number of windows [`segment_windows`] yields for a recording of `len` frames.
pub fn window_count(len: usize) -> usize {
    len / WINDOW_LEN
}

/// Foot-contact detection settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactConfig {
    /// Force above which the foot counts as loaded.
    pub threshold_n: f64,
    /// Contact state changes shorter than this are ignored.
    pub debounce_s: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            threshold_n: 20.0,
            debounce_s: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitMetrics {
    pub mean_stride_time: f64,
    pub stance_percentage: f64,
    pub swing_percentage: f64,
}

impl GaitMetrics {
    fn from_stance(mean_stride_time: f64, stance_percentage: f64) -> Self {
        GaitMetrics {
            mean_stride_time,
            stance_percentage,
            swing_percentage: 100.0 - stance_percentage,
        }
    }
}

/// Inclusive frame interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: usize,
    pub end: usize,
}

/// Contact phases of one signal. Stance and swing intervals together tile
/// every frame exactly once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitEvents {
    pub heel_strikes: Vec<usize>,
    pub toe_offs: Vec<usize>,
    pub stance: Vec<Interval>,
    pub swing: Vec<Interval>,
}

fn debounced_contact(force: &[f64], fs: f64, cfg: &ContactConfig) -> Vec<bool> {
    let min_run = (math::round(cfg.debounce_s * fs) as usize).max(1);
    let raw: Vec<bool> = force.iter().map(|&f| f > cfg.threshold_n).collect();
    let mut out = Vec::with_capacity(raw.len());
    let mut state = match raw.first() {
        Some(&s) => s,
        None => return out,
    };
    let mut i = 0;
    while i < raw.len() {
        let mut j = i;
        while j < raw.len() && raw[j] == raw[i] {
            j += 1;
        }
        // runs shorter than the debounce keep the previous state
        if raw[i] != state && j - i >= min_run {
            state = raw[i];
        }
        out.extend(std::iter::repeat_n(state, j - i));
        i = j;
    }
    out
}

/// Detect heel strikes (rising threshold crossings) and contact phases.
pub fn gait_events(force: &[f64], sample_rate_hz: f64, cfg: &ContactConfig) -> GaitEvents {
    let contact = debounced_contact(force, sample_rate_hz, cfg);
    let mut ev = GaitEvents {
        heel_strikes: Vec::new(),
        toe_offs: Vec::new(),
        stance: Vec::new(),
        swing: Vec::new(),
    };
    let mut start = 0;
    for t in 1..=contact.len() {
        if t == contact.len() || contact[t] != contact[start] {
            let iv = Interval { start, end: t - 1 };
            if contact[start] {
                ev.stance.push(iv);
            } else {
                ev.swing.push(iv);
            }
            if t < contact.len() {
                if contact[t] {
                    ev.heel_strikes.push(t);
                } else {
                    ev.toe_offs.push(t);
                }
            }
            start = t;
        }
    }
    ev
}

/// Stride time and stance/swing split from one foot's total force.
///
/// Stance percentage is measured over the complete cycles between the first
/// and last heel strike.
pub fn gait_metrics_from_signal(
    force: &[f64],
    sample_rate_hz: f64,
    cfg: &ContactConfig,
) -> Result<GaitMetrics, SignalError> {
    let contact = debounced_contact(force, sample_rate_hz, cfg);
    let ev = gait_events(force, sample_rate_hz, cfg);
    if ev.heel_strikes.len() < 2 {
        return Err(SignalError::NoStridesDetected);
    }
    let first = ev.heel_strikes[0];
    let last = *ev.heel_strikes.last().unwrap();
    let strides = (ev.heel_strikes.len() - 1) as f64;
    let mean_stride_time = (last - first) as f64 / strides / sample_rate_hz;
    let in_contact = contact[first..last].iter().filter(|&&c| c).count();
    let stance = 100.0 * in_contact as f64 / (last - first) as f64;
    Ok(GaitMetrics::from_stance(mean_stride_time, stance))
}

pub fn compute_gait_metrics(
    rec: &GaitRecording,
    foot: Foot,
    cfg: &ContactConfig,
) -> Result<GaitMetrics, SignalError> {
    gait_metrics_from_signal(rec.foot_total(foot), rec.sample_rate_hz, cfg)
}

/// Train/validation/test proportions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
}

/// Map of class -> sorted subject ids, checking every subject has one label.
pub fn subjects_by_class<'a, I>(windows: I) -> Result<BTreeMap<Severity, Vec<String>>, SignalError>
where
    I: IntoIterator<Item = &'a Window>,
{
    let mut label_of: BTreeMap<&str, Severity> = BTreeMap::new();
    for w in windows {
        let label = w.label.ok_or_else(|| SignalError::Unlabeled(w.source_id.clone()))?;
        match label_of.get(w.source_id.as_str()) {
            Some(&l) if l != label => return Err(SignalError::ConflictingLabels(w.source_id.clone())),
            _ => {
                label_of.insert(&w.source_id, label);
            }
        }
    }
    let mut out: BTreeMap<Severity, Vec<String>> = BTreeMap::new();
    for (id, label) in label_of {
        out.entry(label).or_default().push(id.into());
    }
    Ok(out)
}

/// Subject-level stratified split. Subjects of each class are shuffled with
/// `seed` and dealt into train/val/test so no subject appears in two parts.
pub fn split_dataset(
    windows: Vec<Window>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplit, SignalError> {
    let SplitRatios { train, val, test } = ratios;
    if !(train > 0.0 && val > 0.0 && test > 0.0) || ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(SignalError::InvalidRatios);
    }
    let by_class = subjects_by_class(&windows)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut part_of: BTreeMap<String, u8> = BTreeMap::new();
    for (class, mut subjects) in by_class {
        let n = subjects.len();
        if n < 3 {
            return Err(SignalError::InsufficientSubjects {
                class,
                subjects: n,
                needed: 3,
            });
        }
        subjects.shuffle(&mut rng);
        let n_train = (math::round(train * n as f64) as usize).clamp(1, n - 2);
        let n_val = (math::round(val * n as f64) as usize).clamp(1, n - n_train - 1);
        for (i, s) in subjects.into_iter().enumerate() {
            let part = if i < n_train {
                0
            } else if i < n_train + n_val {
                1
            } else {
                2
            };
            part_of.insert(s, part);
        }
    }
    let mut split = DatasetSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for w in windows {
        match part_of[&w.source_id] {
            0 => split.train.push(w),
            1 => split.val.push(w),
            _ => split.test.push(w),
        }
    }
    Ok(split)
}

/// Stratified subject-level k-fold assignment. Returns, for each fold, the
/// indices of the windows held out in that fold.
pub fn subject_kfold(windows: &[Window], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, SignalError> {
    subject_kfold_refs(&windows.iter().collect::<Vec<_>>(), k, seed)
}

pub(crate) fn subject_kfold_refs(
    windows: &[&Window],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, SignalError> {
    let by_class = subjects_by_class(windows.iter().copied())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of: BTreeMap<String, usize> = BTreeMap::new();
    for (class, mut subjects) in by_class {
        if subjects.len() < k {
            return Err(SignalError::InsufficientSubjects {
                class,
                subjects: subjects.len(),
                needed: k,
            });
        }
        subjects.shuffle(&mut rng);
        for (i, s) in subjects.into_iter().enumerate() {
            fold_of.insert(s, i % k);
        }
    }
    let mut folds = alloc::vec![Vec::new(); k];
    for (i, w) in windows.iter().enumerate() {
        folds[fold_of[&w.source_id]].push(i);
    }
    Ok(folds)
}
