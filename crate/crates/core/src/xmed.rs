//! Cross-modal explanation discrepancy: per-timestep gap between two
//! attribution maps, thresholded, merged into regions and summarized as the
//! percentage of timesteps covered.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::explain::ExplanationMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XmedConfig {
    /// A timestep is flagged when the absolute difference is strictly above this.
    pub threshold: f64,
    /// Flagged runs separated by at most this many unflagged points merge.
    pub merge_gap: usize,
    /// Review alert fires when the percentage is strictly above this.
    pub alert_pct: f64,
}

impl Default for XmedConfig {
    fn default() -> Self {
        XmedConfig {
            threshold: 0.5,
            merge_gap: 10,
            alert_pct: 3.0,
        }
    }
}

/// Inclusive index range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", from = "[usize; 2]")]
pub struct Region {
    pub start: usize,
    pub end: usize,
}

impl Region {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t <= self.end
    }
}

impl From<Region> for [usize; 2] {
    fn from(r: Region) -> Self {
        [r.start, r.end]
    }
}

impl From<[usize; 2]> for Region {
    fn from([start, end]: [usize; 2]) -> Self {
        Region { start, end }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub per_point_delta: Vec<f64>,
    pub flagged: Vec<bool>,
    pub regions: Vec<Region>,
    pub discrepancy_percentage: f64,
    pub alert: bool,
    pub threshold_used: f64,
    pub merge_gap_used: usize,
}

/// Compact JSON form embedded in prompts and service payloads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscrepancySummary {
    pub percentage: f64,
    pub regions: Vec<Region>,
    pub alert: bool,
    pub threshold: f64,
    pub merge_gap: usize,
}

impl DiscrepancyReport {
    pub fn summary(&self) -> DiscrepancySummary {
        DiscrepancySummary {
            percentage: self.discrepancy_percentage,
            regions: self.regions.clone(),
            alert: self.alert,
            threshold: self.threshold_used,
            merge_gap: self.merge_gap_used,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum XmedError {
    #[error("maps differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("maps explain different classes")]
    ClassMismatch,
    #[error("no reports in the {0} group")]
    EmptyGroup(&'static str),
}

/// Merge flagged indices into regions; runs separated by at most `gap`
/// unflagged points become one region, the gap included.
pub fn merge_regions(flagged: &[bool], gap: usize) -> Vec<Region> {
    let mut regions: Vec<Region> = Vec::new();
    for (t, _) in flagged.iter().enumerate().filter(|(_, f)| **f) {
        match regions.last_mut() {
            Some(r) if t - r.end - 1 <= gap => r.end = t,
            _ => regions.push(Region { start: t, end: t }),
        }
    }
    regions
}

/// Discrepancy between two raw value sequences.
pub fn discrepancy_values(a: &[f64], b: &[f64], cfg: &XmedConfig) -> Result<DiscrepancyReport, XmedError> {
    if a.len() != b.len() {
        return Err(XmedError::LengthMismatch(a.len(), b.len()));
    }
    let per_point_delta: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    let flagged: Vec<bool> = per_point_delta.iter().map(|&d| d > cfg.threshold).collect();
    let regions = merge_regions(&flagged, cfg.merge_gap);
    let covered: usize = regions.iter().map(Region::len).sum();
    let discrepancy_percentage = if a.is_empty() {
        0.0
    } else {
        100.0 * covered as f64 / a.len() as f64
    };
    Ok(DiscrepancyReport {
        per_point_delta,
        flagged,
        regions,
        discrepancy_percentage,
        alert: discrepancy_percentage > cfg.alert_pct,
        threshold_used: cfg.threshold,
        merge_gap_used: cfg.merge_gap,
    })
}

pub fn compute_discrepancy(
    a: &ExplanationMap,
    b: &ExplanationMap,
    cfg: &XmedConfig,
) -> Result<DiscrepancyReport, XmedError> {
    if a.target_class != b.target_class {
        return Err(XmedError::ClassMismatch);
    }
    discrepancy_values(&a.values, &b.values, cfg)
}

pub fn should_alert(report: &DiscrepancyReport, alert_threshold_pct: f64) -> bool {
    report.discrepancy_percentage > alert_threshold_pct
}

/// Mean percentage over correctly and incorrectly classified cases.
pub fn discrepancy_summary<'a, I>(reports: I) -> Result<(f64, f64), XmedError>
where
    I: IntoIterator<Item = (&'a DiscrepancyReport, bool)>,
{
    let (mut sum_c, mut n_c, mut sum_i, mut n_i) = (0.0, 0usize, 0.0, 0usize);
    for (r, correct) in reports {
        if correct {
            sum_c += r.discrepancy_percentage;
            n_c += 1;
        } else {
            sum_i += r.discrepancy_percentage;
            n_i += 1;
        }
    }
    if n_c == 0 {
        return Err(XmedError::EmptyGroup("correct"));
    }
    if n_i == 0 {
        return Err(XmedError::EmptyGroup("incorrect"));
    }
    Ok((sum_c / n_c as f64, sum_i / n_i as f64))
}
