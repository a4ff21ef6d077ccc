use cgait_core::metrics::{fkgl, fre, text_stats, MetricsError, TextStats};
use serde::Deserialize;

#[derive(Deserialize)]
struct Entry {
    text: String,
    words: usize,
    sentences: usize,
    syllables: usize,
    fre: f64,
    fkgl: f64,
}

#[test]
fn reference_counts() {
    let s = TextStats::new(3, 1, 3);
    assert!((fre(&s).unwrap() - 119.19).abs() < 1e-9);
    assert!((fkgl(&s).unwrap() + 2.62).abs() < 1e-9);
}

#[test]
fn hand_counted_corpus() {
    let corpus: Vec<Entry> = serde_json::from_str(include_str!("fixtures/readability_corpus.json")).unwrap();
    assert_eq!(corpus.len(), 10);
    for e in corpus {
        let stats = text_stats(&e.text);
        assert_eq!(stats, TextStats::new(e.words, e.sentences, e.syllables), "{:?}", e.text);
        assert_eq!(fre(&stats).unwrap(), e.fre, "{:?}", e.text);
        assert_eq!(fkgl(&stats).unwrap(), e.fkgl, "{:?}", e.text);
    }
}

#[test]
fn degenerate_text() {
    for t in ["", "   ", "... !!", "-- ?"] {
        assert_eq!(fre(&text_stats(t)), Err(MetricsError::DegenerateText), "{t:?}");
    }
}
