//! Binary window corpus: little-endian `u32` count, then per window a `u32`
//! start frame, a `u8` label code and 1000 `f32` samples.
//!
//! The format stores no subject id and no "unlabeled" marker, so decoding
//! takes the id from the caller and every window comes back labelled.

use alloc::string::String;
use alloc::vec::Vec;

use crate::severity::Severity;
use crate::signal::{Window, WINDOW_LEN};

const RECORD_LEN: usize = 4 + 1 + 4 * WINDOW_LEN;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FixtureError {
    #[error("fixture is truncated")]
    Truncated,
    #[error("fixture has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("window {0}: unknown label code {1}")]
    BadLabel(usize, u8),
    #[error("window {0}: non-finite sample")]
    NonFinite(usize),
    #[error("window {0} has no label")]
    Unlabeled(usize),
    #[error("window {0}: start frame does not fit in u32")]
    StartFrame(usize),
}

pub fn encode_windows(windows: &[Window]) -> Result<Vec<u8>, FixtureError> {
    let mut out = Vec::with_capacity(4 + windows.len() * RECORD_LEN);
    let count = u32::try_from(windows.len()).map_err(|_| FixtureError::StartFrame(usize::MAX))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (i, w) in windows.iter().enumerate() {
        let start = u32::try_from(w.start_frame).map_err(|_| FixtureError::StartFrame(i))?;
        let label = w.label.ok_or(FixtureError::Unlabeled(i))?;
        out.extend_from_slice(&start.to_le_bytes());
        out.push(label.code());
        for &v in w.values() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_windows(bytes: &[u8], source_id: &str) -> Result<Vec<Window>, FixtureError> {
    let head: [u8; 4] = bytes.get(..4).ok_or(FixtureError::Truncated)?.try_into().unwrap();
    let count = u32::from_le_bytes(head) as usize;
    let body = &bytes[4..];
    let need = count.checked_mul(RECORD_LEN).ok_or(FixtureError::Truncated)?;
    if body.len() < need {
        return Err(FixtureError::Truncated);
    }
    if body.len() > need {
        return Err(FixtureError::TrailingBytes(body.len() - need));
    }
    body.chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(i, rec)| {
            let start = u32::from_le_bytes(rec[..4].try_into().unwrap()) as usize;
            let label = Severity::from_code(rec[4]).ok_or(FixtureError::BadLabel(i, rec[4]))?;
            let values: Vec<f64> = rec[5..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            Window::new(String::from(source_id), start, values, Some(label)).map_err(|_| FixtureError::NonFinite(i))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn window(start: usize, label: Severity, v: f64) -> Window {
        Window::new("s", start, vec![v; WINDOW_LEN], Some(label)).unwrap()
    }

    #[test]
    fn layout_and_round_trip() {
        let ws = vec![window(0, Severity::Stage2_5, 1.5), window(1000, Severity::Healthy, -0.25)];
        let bytes = encode_windows(&ws).unwrap();
        assert_eq!(bytes.len(), 4 + 2 * RECORD_LEN);
        assert_eq!(&bytes[..4], &[2, 0, 0, 0]);
        assert_eq!(&bytes[4..9], &[0, 0, 0, 0, 2]);
        assert_eq!(&bytes[9..13], &1.5f32.to_le_bytes());
        assert_eq!(&bytes[4 + RECORD_LEN..9 + RECORD_LEN], &[0xe8, 0x03, 0, 0, 0]);
        assert_eq!(decode_windows(&bytes, "s").unwrap(), ws);
    }

    #[test]
    fn rejects_bad_input() {
        let bytes = encode_windows(&[window(0, Severity::Stage3, 1.0)]).unwrap();
        assert_eq!(decode_windows(&bytes[..bytes.len() - 1], "s"), Err(FixtureError::Truncated));
        assert_eq!(decode_windows(&[1, 0], "s"), Err(FixtureError::Truncated));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(decode_windows(&extra, "s"), Err(FixtureError::TrailingBytes(1)));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert_eq!(decode_windows(&bad, "s"), Err(FixtureError::BadLabel(0, 9)));
        let mut nan = bytes.clone();
        nan[9..13].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(decode_windows(&nan, "s"), Err(FixtureError::NonFinite(0)));
        let unlabeled = Window::new("s", 0, vec![0.0; WINDOW_LEN], None).unwrap();
        assert_eq!(encode_windows(&[unlabeled]), Err(FixtureError::Unlabeled(0)));
    }
}
