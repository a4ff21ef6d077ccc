use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

/// Hoehn & Yahr severity classes the classifier distinguishes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    #[serde(rename = "Healthy")]
    Healthy,
    #[serde(rename = "Stage 2")]
    Stage2,
    #[serde(rename = "Stage 2.5")]
    Stage2_5,
    #[serde(rename = "Stage 3")]
    Stage3,
}

pub const NUM_CLASSES: usize = 4;

impl Severity {
    pub const ALL: [Severity; NUM_CLASSES] = [
        Severity::Healthy,
        Severity::Stage2,
        Severity::Stage2_5,
        Severity::Stage3,
    ];

    /// Class index, also the one-byte label code used by the window fixture format.
    pub fn code(self) -> u8 {
        match self {
            Severity::Healthy => 0,
            Severity::Stage2 => 1,
            Severity::Stage2_5 => 2,
            Severity::Stage3 => 3,
        }
    }

    pub fn index(self) -> usize {
        self.code() as usize
    }

    pub fn from_code(code: u8) -> Option<Severity> {
        Severity::ALL.get(code as usize).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            Severity::Healthy => "Healthy",
            Severity::Stage2 => "Stage 2",
            Severity::Stage2_5 => "Stage 2.5",
            Severity::Stage3 => "Stage 3",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown severity label `{0}`")]
pub struct UnknownSeverity(pub alloc::string::String);

impl FromStr for Severity {
    type Err = UnknownSeverity;

    /// Accepts the display labels plus the bare stage numbers used by
    /// the PhysioNet demographics sheet (`0`, `2`, `2.5`, `3`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        let compact: alloc::string::String =
            lower
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| if c == '_' { '.' } else { c })
            .collect();
        let stage = compact.strip_prefix("stage").unwrap_or(&compact);
        match stage {
            "healthy" | "control" | "0" | "co" => Ok(Severity::Healthy),
            "2" | "2.0" => Ok(Severity::Stage2),
            "2.5" => Ok(Severity::Stage2_5),
            "3" | "3.0" => Ok(Severity::Stage3),
            _ => Err(UnknownSeverity(t.into())),
        }
    }
}
