//! Readability, numeric grounding, self-correction and the adjudication
//! confusion counts.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::severity::Severity;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("text has no words or no sentences")]
    DegenerateText,
    #[error("the baseline made no errors")]
    NoBaselineErrors,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextStats {
    pub total_words: usize,
    pub total_sentences: usize,
    pub total_syllables: usize,
}

impl TextStats {
    pub fn new(total_words: usize, total_sentences: usize, total_syllables: usize) -> Self {
        TextStats {
            total_words,
            total_sentences,
            total_syllables,
        }
    }
}

fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Vowel-group syllable estimate; at least 1 for any word.
pub fn syllables(word: &str) -> usize {
    let letters: Vec<char> = word
        .chars()
        .filter(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    let mut groups = 0usize;
    let mut prev_vowel = false;
    for &c in &letters {
        let v = is_vowel(c);
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    let n = letters.len();
    if n >= 1 && letters[n - 1] == 'e' {
        let consonant_le = n >= 3 && letters[n - 2] == 'l' && !is_vowel(letters[n - 3]);
        if !consonant_le {
            groups = groups.saturating_sub(1);
        }
    }
    groups.max(1)
}

fn count_sentences(text: &str) -> usize {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    let mut has_word = false;
    let mut in_token_with_alnum = false;
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            in_token_with_alnum = true;
        }
        if c.is_whitespace() {
            has_word |= in_token_with_alnum;
            in_token_with_alnum = false;
        }
        let ends = match c {
            '!' | '?' => true,
            // a '.' inside a token ("65.1", "e.g") does not end a sentence
            '.' => chars.get(i + 1).is_none_or(|n| n.is_whitespace()),
            _ => false,
        };
        if ends {
            if has_word || in_token_with_alnum {
                count += 1;
            }
            has_word = false;
            in_token_with_alnum = false;
        }
    }
    if has_word || in_token_with_alnum {
        count += 1;
    }
    count
}

pub fn text_stats(text: &str) -> TextStats {
    let words: Vec<&str> = text.split_whitespace().filter(|t| is_word(t)).collect();
    TextStats {
        total_words: words.len(),
        total_sentences: count_sentences(text),
        total_syllables: words.iter().map(|w| syllables(w)).sum(),
    }
}

fn ratios(stats: &TextStats) -> Result<(f64, f64), MetricsError> {
    if stats.total_words == 0 || stats.total_sentences == 0 {
        return Err(MetricsError::DegenerateText);
    }
    let w = stats.total_words as f64;
    Ok((w / stats.total_sentences as f64, stats.total_syllables as f64 / w))
}

/// Flesch Reading Ease, unclamped.
pub fn fre(stats: &TextStats) -> Result<f64, MetricsError> {
    let (wps, spw) = ratios(stats)?;
    Ok(206.835 - 1.015 * wps - 84.6 * spw)
}

/// Flesch-Kincaid Grade Level.
pub fn fkgl(stats: &TextStats) -> Result<f64, MetricsError> {
    let (wps, spw) = ratios(stats)?;
    Ok(-15.59 + 0.39 * wps + 11.8 * spw)
}

/// Every number in `text`, in order of appearance. Signs count only at the
/// start of text or after whitespace or '(' so ranges like "2-3" read as two
/// positives. Thousands separators and a trailing '%' are dropped.
pub fn extract_numbers(text: &str) -> Vec<f64> {
    let b = text.as_bytes();
    let digit = |i: usize| b.get(i).is_some_and(u8::is_ascii_digit);
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let sign_ok = i == 0 || b[i - 1].is_ascii_whitespace() || b[i - 1] == b'(';
        let mut j = i;
        let mut buf = String::new();
        if (b[j] == b'-' || b[j] == b'+') && sign_ok && (digit(j + 1) || (b.get(j + 1) == Some(&b'.') && digit(j + 2))) {
            if b[j] == b'-' {
                buf.push('-');
            }
            j += 1;
        }
        let starts = digit(j) || (b[j] == b'.' && digit(j + 1) && !(j > 0 && b[j - 1].is_ascii_digit()));
        if !starts {
            i += 1;
            continue;
        }
        while j < b.len() {
            if b[j].is_ascii_digit() {
                buf.push(b[j] as char);
                j += 1;
            } else if b[j] == b','
                && !buf.contains('.')
                && buf.bytes().any(|c| c.is_ascii_digit())
                && (1..=3).all(|k| digit(j + k))
                && !digit(j + 4)
            {
                j += 1;
            } else {
                break;
            }
        }
        if b.get(j) == Some(&b'.') && digit(j + 1) {
            buf.push('.');
            j += 1;
            while digit(j) {
                buf.push(b[j] as char);
                j += 1;
            }
        }
        if b.get(j) == Some(&b'%') {
            j += 1;
        }
        if let Ok(v) = buf.parse::<f64>() {
            // fold -0 into 0 so matching is plain equality
            out.push(v + 0.0);
        }
        i = j;
    }
    out
}

/// Render numbers so that [`extract_numbers`] reads them back unchanged.
pub fn render_numbers(values: &[f64]) -> String {
    use core::fmt::Write as _;
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{v}");
    }
    s
}

/// Size of the multiset intersection of `a` and `b`.
pub fn multiset_overlap(a: &[f64], b: &[f64]) -> usize {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].total_cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Percentage of explanation numbers found in the inputs, matched as
/// multisets; 100 when the explanation states no numbers.
pub fn clinical_grounding(v_e: &[f64], v_i: &[f64]) -> f64 {
    if v_e.is_empty() {
        return 100.0;
    }
    100.0 * multiset_overlap(v_e, v_i) as f64 / v_e.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationCase {
    pub case_id: String,
    pub truth: Severity,
    pub baseline: Severity,
    pub final_label: Severity,
    pub contested: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSet {
    pub cases: Vec<EvaluationCase>,
}

impl EvaluationSet {
    /// Cases the baseline got wrong.
    pub fn d_err(&self) -> impl Iterator<Item = &EvaluationCase> {
        self.cases.iter().filter(|c| c.baseline != c.truth)
    }
}

/// Percentage of baseline errors whose final label is the true one.
pub fn sca(set: &EvaluationSet) -> Result<f64, MetricsError> {
    let (mut n, mut fixed) = (0usize, 0usize);
    for c in set.d_err() {
        n += 1;
        fixed += usize::from(c.final_label == c.truth);
    }
    if n == 0 {
        return Err(MetricsError::NoBaselineErrors);
    }
    Ok(100.0 * fixed as f64 / n as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationConfusion {
    pub retain_correct: usize,
    pub retain_incorrect: usize,
    pub overturn_correct: usize,
    pub overturn_incorrect: usize,
}

impl AdjudicationConfusion {
    pub fn total(&self) -> usize {
        self.retain_correct + self.retain_incorrect + self.overturn_correct + self.overturn_incorrect
    }
}

/// Retain means the final label equals the baseline; correct/incorrect
/// describes the baseline against the truth.
pub fn adjudication_confusion(set: &EvaluationSet) -> AdjudicationConfusion {
    let mut m = AdjudicationConfusion::default();
    for c in &set.cases {
        let slot = match (c.final_label == c.baseline, c.baseline == c.truth) {
            (true, true) => &mut m.retain_correct,
            (true, false) => &mut m.retain_incorrect,
            (false, true) => &mut m.overturn_correct,
            (false, false) => &mut m.overturn_incorrect,
        };
        *slot += 1;
    }
    m
}

/// Baseline errors overturned to a label that is still wrong. These sit in
/// `overturn_incorrect` but do not count toward [`sca`], so
/// `sca = (overturn_incorrect - misdirected) / |D_err| * 100`.
pub fn misdirected_overturns(set: &EvaluationSet) -> usize {
    set.d_err()
        .filter(|c| c.final_label != c.baseline && c.final_label != c.truth)
        .count()
}

/// One row of the batch evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub fre_mean: f64,
    pub fkgl_mean: f64,
    pub cg_mean_pct: f64,
    pub sca_pct: Option<f64>,
    pub confusion: AdjudicationConfusion,
    pub mean_rt_s: f64,
    pub mean_ot_tokens: f64,
}

impl RunSummary {
    pub const CSV_HEADER: &'static str = "run,fre_mean,fkgl_mean,cg_mean_pct,sca_pct,retain_correct,retain_incorrect,overturn_correct,overturn_incorrect,mean_rt_s,mean_ot_tokens";

    pub fn csv_row(&self) -> String {
        let sca = self.sca_pct.map(|v| alloc::format!("{v:.2}")).unwrap_or_default();
        alloc::format!(
            "{},{:.2},{:.2},{:.2},{},{},{},{},{},{:.3},{:.1}",
            self.run.replace(',', ";"),
            self.fre_mean,
            self.fkgl_mean,
            self.cg_mean_pct,
            sca,
            self.confusion.retain_correct,
            self.confusion.retain_incorrect,
            self.confusion.overturn_correct,
            self.confusion.overturn_incorrect,
            self.mean_rt_s,
            self.mean_ot_tokens
        )
    }
}
