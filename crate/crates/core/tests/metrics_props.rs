use cgait_core::metrics::{
    adjudication_confusion, clinical_grounding, extract_numbers, misdirected_overturns, render_numbers, sca,
    EvaluationCase, EvaluationSet,
};
use cgait_core::Severity;
use proptest::prelude::*;

/// Each explanation number consumes at most one equal input number.
fn grounding_oracle(v_e: &[f64], v_i: &[f64]) -> f64 {
    if v_e.is_empty() {
        return 100.0;
    }
    let mut used = vec![false; v_i.len()];
    let mut hits = 0;
    for e in v_e {
        if let Some(k) = (0..v_i.len()).find(|&k| !used[k] && v_i[k] == *e) {
            used[k] = true;
            hits += 1;
        }
    }
    100.0 * hits as f64 / v_e.len() as f64
}

fn small_numbers() -> impl Strategy<Value = Vec<f64>> {
    // a narrow pool so matches and repeats are common
    prop::collection::vec(prop::sample::select(vec![0.821, 65.1, 34.9, 1.2, 2.0, 7.0, -3.5, 100.0]), 0..12)
}

fn severity() -> impl Strategy<Value = Severity> {
    prop::sample::select(Severity::ALL.to_vec())
}

proptest! {
    #[test]
    fn grounding_matches_oracle(v_e in small_numbers(), v_i in small_numbers()) {
        prop_assert_eq!(clinical_grounding(&v_e, &v_i), grounding_oracle(&v_e, &v_i));
    }

    #[test]
    fn grounding_extremes(v_e in small_numbers(), extra in small_numbers()) {
        let mut superset = v_e.clone();
        superset.extend(extra);
        prop_assert_eq!(clinical_grounding(&v_e, &superset), 100.0);
        if !v_e.is_empty() {
            let disjoint: Vec<f64> = v_e.iter().map(|v| v + 1000.0).collect();
            prop_assert_eq!(clinical_grounding(&v_e, &disjoint), 0.0);
        }
    }

    #[test]
    fn extraction_round_trips(values in prop::collection::vec(-1e6f64..1e6, 0..20)) {
        // canonical values are what the extractor produces from text
        let canon = extract_numbers(&render_numbers(&values));
        prop_assert_eq!(canon.len(), values.len());
        prop_assert_eq!(extract_numbers(&render_numbers(&canon)), canon);
    }

    #[test]
    fn confusion_partitions(cases in prop::collection::vec((severity(), severity(), severity()), 1..60)) {
        let set = EvaluationSet {
            cases: cases
                .iter()
                .enumerate()
                .map(|(i, &(truth, baseline, final_label))| EvaluationCase {
                    case_id: format!("c{i}"),
                    truth,
                    baseline,
                    final_label,
                    contested: false,
                })
                .collect(),
        };
        let m = adjudication_confusion(&set);
        prop_assert_eq!(m.total(), cases.len());
        let errors = set.d_err().count();
        prop_assert_eq!(errors, m.retain_incorrect + m.overturn_incorrect);
        if errors > 0 {
            let fixed = (m.overturn_incorrect - misdirected_overturns(&set)) as f64;
            prop_assert_eq!(sca(&set).unwrap(), 100.0 * fixed / errors as f64);
        } else {
            prop_assert!(sca(&set).is_err());
        }
    }
}
