use crate::severity::Severity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("response names no severity label")]
pub struct NoDecisionFound;

fn label_at(b: &[u8], i: usize) -> Option<Severity> {
    if i > 0 && b[i - 1].is_ascii_alphanumeric() {
        return None;
    }
    let rest = &b[i..];
    let end_ok = |j: usize| rest.get(j).is_none_or(|c| !c.is_ascii_alphanumeric());
    if rest.starts_with(b"healthy") {
        return end_ok(7).then_some(Severity::Healthy);
    }
    if !rest.starts_with(b"stage") {
        return None;
    }
    let mut j = 5;
    while rest.get(j).is_some_and(|&c| c == b' ' || c == b'-' || c == b'_' || c == b'\t') {
        j += 1;
    }
    let digit_after = |k: usize| rest.get(k).is_some_and(u8::is_ascii_digit);
    match rest.get(j) {
        Some(b'2') if rest.get(j + 1) == Some(&b'.') && rest.get(j + 2) == Some(&b'5') && !digit_after(j + 3) => {
            Some(Severity::Stage2_5)
        }
        Some(b'2') | Some(b'3') => {
            if digit_after(j + 1) || (rest.get(j + 1) == Some(&b'.') && digit_after(j + 2) && rest.get(j + 2) != Some(&b'0')) {
                // "Stage 20", "Stage 2.7": not one of the four labels
                return None;
            }
            Some(if rest[j] == b'2' { Severity::Stage2 } else { Severity::Stage3 })
        }
        _ => None,
    }
}

/// The label mentioned last in `text`. Matching is case-insensitive and
/// prefers "Stage 2.5" over its prefix "Stage 2".
pub fn parse_final_decision(text: &str) -> Result<Severity, NoDecisionFound> {
    let lower = text.to_ascii_lowercase();
    let b = lower.as_bytes();
    (0..b.len()).rev().find_map(|i| label_at(b, i)).ok_or(NoDecisionFound)
}
