//! Acceptance suite. Prints one PASS or FAIL line per criterion, then fails
//! if any criterion outside `KNOWN_UNATTAINABLE` failed.
//!
//! Set `CGAIT_PHYSIONET_DIR` to a data directory (recordings plus
//! `labels.csv`) built from the public PhysioNet gait recordings to run the
//! full-data classification criterion.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use cgait::backend::MockBackend;
use cgait::data::DataSet;
use cgait::synth::{synthetic_windows, SynthConfig, PULSE_END, PULSE_START};
use cgait::sweep::{evaluation_set, run_sweep};
use cgait_core::adjudicator::{
    parse_final_decision, to_jsonl, verify_jsonl, AdjudicatorConfig, AdjudicatorError, BackendError, CaseRecord,
    CaseState, ChatBackend, Contestation, ContestationKind, FinalDecision, FinalOutcome, ManualClock, PromptContext,
    WindowRef,
};
use cgait_core::cnn::{
    evaluate, train, ActivationTrace, ArchConfig, LayerSpec, Network, Prediction, Shape, TrainConfig,
};
use cgait_core::explain::{explanation_pair, lrp_relevance, ExplanationMap, GradCamOptions, Method};
use cgait_core::metrics::{
    adjudication_confusion, clinical_grounding, fkgl, fre, misdirected_overturns, sca, text_stats, EvaluationCase,
    EvaluationSet, TextStats,
};
use cgait_core::signal::{split_dataset, GaitMetrics, SplitRatios, Window};
use cgait_core::xmed::{compute_discrepancy, discrepancy_summary, DiscrepancyReport, Region, XmedConfig};
use cgait_core::Severity;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

/// Criteria whose stated tolerance cannot be met by any faithful
/// implementation; their FAIL line is reported but does not fail the run.
const KNOWN_UNATTAINABLE: &[&str] = &[];

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn timed(name: &'static str, limit: Duration, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let t0 = Instant::now();
    let (ok, detail) = f();
    let took = t0.elapsed();
    let in_time = took < limit;
    Verdict {
        name,
        pass: ok && in_time,
        detail: format!(
            "{detail}; {:.1} s of {} s{}",
            took.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { " (over time)" }
        ),
    }
}

// ---------------------------------------------------------------- gradients

const H: f64 = 1e-4;

/// ReLU on/off pattern plus maxpool winners; a finite difference is only
/// valid when both probes keep the base point's pattern.
fn pattern(net: &Network, trace: &ActivationTrace) -> Vec<usize> {
    let mut sig = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        let x = trace.layer_input(i);
        let y = trace.output(i);
        match *layer.spec() {
            LayerSpec::Relu => sig.extend(x.data.iter().map(|&v| usize::from(v > 0.0))),
            LayerSpec::MaxPool1d { pool_size } => {
                let Shape::Seq { channels, len } = x.shape else { unreachable!() };
                let out_len = len / pool_size;
                for c in 0..channels {
                    for t in 0..out_len {
                        let win = &x.data[c * len + t * pool_size..c * len + (t + 1) * pool_size];
                        sig.push(win.iter().position(|&v| v == y.data[c * out_len + t]).unwrap());
                    }
                }
            }
            _ => {}
        }
    }
    sig
}

fn dot(trace: &ActivationTrace, u: &[f64]) -> f64 {
    trace.logits().iter().zip(u).map(|(a, b)| a * b).sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

#[derive(Default)]
struct GradTally {
    checked: usize,
    skipped: usize,
    worst: f64,
    kinds: std::collections::BTreeSet<&'static str>,
}

fn gradient_draw(seed: u64, tally: &mut GradTally) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = rng.random_range(1..5);
    let (specs, len) = common::random_stack(&mut rng, out);
    let mut net = Network::new(specs, seed).unwrap();
    for i in 0..net.layers().len() {
        for b in net.layer_params_mut(i).1 {
            *b = rng.random_range(-0.5..0.5);
        }
    }
    let x = common::random_signal(&mut rng, len, -2.0, 2.0);
    let u: Vec<f64> = (0..out).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mask = rng.random::<u64>();
    let base = net.forward_signal(&x, Some(mask)).unwrap();
    let base_pattern = pattern(&net, &base);
    let grads = net.backward_from(&base, &u).unwrap();
    for l in net.layers() {
        tally.kinds.insert(match l.spec() {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool1d { .. } => "maxpool1d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
        });
    }

    let mut record = |analytic: f64, plus: (f64, Vec<usize>), minus: (f64, Vec<usize>)| {
        if plus.1 != base_pattern || minus.1 != base_pattern {
            tally.skipped += 1;
            return;
        }
        let numeric = (plus.0 - minus.0) / (2.0 * H);
        tally.worst = tally.worst.max(rel_err(analytic, numeric));
        tally.checked += 1;
    };
    for li in 0..net.layers().len() {
        let (nw, nb) = (net.layers()[li].weights().len(), net.layers()[li].biases().len());
        for (is_bias, n) in [(false, nw), (true, nb)] {
            for _ in 0..n.min(10) {
                let j = rng.random_range(0..n);
                let analytic = if is_bias {
                    grads.params[li].biases[j]
                } else {
                    grads.params[li].weights[j]
                };
                let mut at = |delta: f64| {
                    let (w, b) = net.layer_params_mut(li);
                    let p = if is_bias { &mut b[j] } else { &mut w[j] };
                    *p += delta;
                    let t = net.forward_signal(&x, Some(mask)).unwrap();
                    let r = (dot(&t, &u), pattern(&net, &t));
                    let (w, b) = net.layer_params_mut(li);
                    let p = if is_bias { &mut b[j] } else { &mut w[j] };
                    *p -= delta;
                    r
                };
                let plus = at(H);
                let minus = at(-H);
                record(analytic, plus, minus);
            }
        }
    }
    for _ in 0..10 {
        let j = rng.random_range(0..len);
        let probe = |delta: f64| {
            let mut xs = x.clone();
            xs[j] += delta;
            let t = net.forward_signal(&xs, Some(mask)).unwrap();
            (dot(&t, &u), pattern(&net, &t))
        };
        record(grads.input[j], probe(H), probe(-H));
    }
}

fn gradient_correctness() -> (bool, String) {
    const DRAWS: u64 = 120;
    let mut t = GradTally::default();
    for seed in 0..DRAWS {
        gradient_draw(10_000 + seed, &mut t);
    }
    let ok = t.worst < 1e-4 && t.kinds.len() == 6 && t.checked > 0;
    (
        ok,
        format!(
            "{DRAWS} draws, {} checks ({} skipped at ReLU/maxpool kinks), layer kinds {:?}, worst relative error {:.2e}",
            t.checked, t.skipped, t.kinds, t.worst
        ),
    )
}

// --------------------------------------------------------------------- LRP

fn lrp_conservation() -> (bool, String) {
    const DRAWS: u64 = 60;
    let (mut checked, mut small, mut violations, mut worst) = (0usize, 0usize, 0usize, 0.0f64);
    let mut worst_logit = 0.0;
    for seed in 0..DRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + seed);
        let (specs, len) = common::random_stack(&mut rng, 4);
        let mut net = Network::new(specs, seed).unwrap();
        common::zero_biases(&mut net);
        let x = common::random_signal(&mut rng, len, 0.0, 1000.0);
        let trace = net.forward_signal(&x, None).unwrap();
        for target in Severity::ALL {
            let logit = trace.logits()[target.index()];
            if logit.abs() <= 1e-3 {
                small += 1;
                continue;
            }
            let total: f64 = lrp_relevance(&net, &trace, target).unwrap().iter().sum();
            let rel = (total - logit).abs() / logit.abs();
            checked += 1;
            if rel >= 1e-6 {
                violations += 1;
            }
            if rel > worst {
                worst = rel;
                worst_logit = logit;
            }
        }
    }
    (
        violations == 0 && checked > 0,
        format!(
            "{DRAWS} bias-free nets, {checked} target logits checked ({small} with |logit| <= 1e-3 excluded), \
             {violations} at or above 1e-6, worst {worst:.2e} at logit {worst_logit:.3e}"
        ),
    )
}

// ------------------------------------------------------------ XMED oracle

/// Index-counting oracle: flag by threshold, then fill every run of
/// unflagged points lying between two flagged points at most `gap` apart.
fn xmed_oracle(a: &[f64], b: &[f64], threshold: f64, gap: usize) -> (Vec<bool>, Vec<Region>, f64) {
    let n = a.len();
    let flagged: Vec<bool> = (0..n).map(|t| (a[t] - b[t]).abs() > threshold).collect();
    let mut covered = flagged.clone();
    let marks: Vec<usize> = (0..n).filter(|&t| flagged[t]).collect();
    for w in marks.windows(2) {
        if w[1] - w[0] - 1 <= gap {
            for c in &mut covered[w[0]..w[1]] {
                *c = true;
            }
        }
    }
    let mut regions = Vec::new();
    let mut open: Option<usize> = None;
    for t in 0..=n {
        match (open, t < n && covered[t]) {
            (None, true) => open = Some(t),
            (Some(s), false) => {
                regions.push(Region { start: s, end: t - 1 });
                open = None;
            }
            _ => {}
        }
    }
    let count = covered.iter().filter(|&&c| c).count();
    (flagged, regions, 100.0 * count as f64 / n as f64)
}

/// Piecewise-constant map in [0, 1] with runs of random length.
fn blocky_map(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let run = rng.random_range(1..40);
        let v = rng.random_range(0.0..=1.0);
        out.extend(std::iter::repeat_n(v, run.min(n - out.len())));
    }
    out
}

fn xmed_oracle_equivalence() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(30_000);
    let (mut runs, mut mismatches) = (0usize, 0usize);
    for _ in 0..1000 {
        let a = blocky_map(&mut rng, 1000);
        let b = blocky_map(&mut rng, 1000);
        let map = |values: Vec<f64>, method| ExplanationMap {
            method,
            values,
            target_class: Severity::Stage2,
            source_layer: None,
        };
        let (ma, mb) = (map(a.clone(), Method::GradCam), map(b.clone(), Method::Lrp));
        for threshold in [0.1, 0.5, 0.9] {
            for gap in [0, 5, 10] {
                let cfg = XmedConfig {
                    threshold,
                    merge_gap: gap,
                    ..XmedConfig::default()
                };
                let r: DiscrepancyReport = compute_discrepancy(&ma, &mb, &cfg).unwrap();
                let (flags, regions, pct) = xmed_oracle(&a, &b, threshold, gap);
                runs += 1;
                if r.flagged != flags || r.regions != regions || r.discrepancy_percentage != pct {
                    mismatches += 1;
                }
            }
        }
    }
    (
        mismatches == 0,
        format!("1000 map pairs x 3 thresholds x 3 gaps = {runs} comparisons, {mismatches} mismatches"),
    )
}

// ------------------------------------------------------ planted-feature data

mod planted {
    use super::*;

    pub fn arch() -> ArchConfig {
        cgait::cli::small_arch()
    }

    pub fn train_config() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            dropout_rate: 0.2,
            epochs: 60,
            batch_size: 16,
            seed: 7,
            patience: None,
            ..TrainConfig::default()
        }
    }

    pub fn data() -> SynthConfig {
        SynthConfig {
            subjects_per_class: 20,
            windows_per_subject: 5,
            seed: 1,
            ..SynthConfig::default()
        }
    }

    /// Unseen subjects whose pulse amplitude runs from absent to full, so
    /// the model gets some of them wrong.
    pub fn held_out() -> SynthConfig {
        SynthConfig {
            subjects_per_class: 10,
            windows_per_subject: 5,
            seed: 1001,
            pulse_amplitude: 0.0..=2000.0,
            ..SynthConfig::default()
        }
    }
}

struct Planted {
    net: Network,
    test: Vec<Window>,
    train_time: Duration,
}

fn train_planted() -> Planted {
    let t0 = Instant::now();
    let split = split_dataset(synthetic_windows(&planted::data()), SplitRatios::default(), 3).unwrap();
    let tc = planted::train_config();
    let net = planted::arch().build(tc.dropout_rate, tc.seed).unwrap();
    let (net, _) = train(net, &split.train, &split.val, &tc).unwrap();
    Planted {
        net,
        test: split.test,
        train_time: t0.elapsed(),
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

fn localization(p: &Planted) -> (bool, String) {
    let (_, cm) = evaluate(&p.net, &p.test).unwrap();
    let acc = cm.accuracy();
    let lo = PULSE_START - 20;
    let hi = PULSE_END + 20;
    let (mut correct, mut inside) = (0usize, 0usize);
    for w in &p.test {
        let pred = p.net.predict(w.values()).unwrap().predicted_class;
        if Some(pred) != w.label {
            continue;
        }
        correct += 1;
        let (g, l) = explanation_pair(&p.net, w, pred, &GradCamOptions::default()).unwrap();
        if (lo..=hi).contains(&argmax(&g.values)) && (lo..=hi).contains(&argmax(&l.values)) {
            inside += 1;
        }
    }
    let share = inside as f64 / correct.max(1) as f64;
    (
        acc >= 0.95 && share >= 0.90,
        format!(
            "test accuracy {acc:.3} on {} windows; both maxima in frames {lo}-{hi} on {inside}/{correct} correct \
             windows ({:.1}%); training {:.1} s",
            p.test.len(),
            100.0 * share,
            p.train_time.as_secs_f64()
        ),
    )
}

fn xmed_separation(net: &Network, windows: &[Window], source: &str) -> (bool, String) {
    let xmed = XmedConfig::default();
    let reports: Vec<(DiscrepancyReport, bool)> = windows
        .iter()
        .map(|w| {
            let pred = net.predict(w.values()).unwrap().predicted_class;
            let (g, l) = explanation_pair(net, w, pred, &GradCamOptions::default()).unwrap();
            (compute_discrepancy(&g, &l, &xmed).unwrap(), Some(pred) == w.label)
        })
        .collect();
    let wrong = reports.iter().filter(|r| !r.1).count();
    match discrepancy_summary(reports.iter().map(|(r, c)| (r, *c))) {
        Ok((c, i)) => (
            windows.len() >= 30 && i > c,
            format!(
                "{source}: {} windows, {wrong} misclassified; mean discrepancy incorrect {i:.2}% vs correct {c:.2}%",
                windows.len()
            ),
        ),
        Err(e) => (false, format!("{source}: {} windows, {wrong} misclassified; {e}", windows.len())),
    }
}

// ------------------------------------------------- full-data classification

struct RealModel {
    net: Network,
    test: Vec<Window>,
}

fn full_data_classification(p: &Planted, real: &mut Option<RealModel>) -> (bool, String) {
    if let Some(dir) = std::env::var_os("CGAIT_PHYSIONET_DIR") {
        let data = DataSet::load(std::path::Path::new(&dir)).unwrap();
        let split = data.split(0).unwrap();
        let tc = TrainConfig::default();
        let net = ArchConfig::default().build(tc.dropout_rate, tc.seed).unwrap();
        let (net, _) = train(net, &split.train, &split.val, &tc).unwrap();
        let (_, cm) = evaluate(&net, &split.test).unwrap();
        let f1 = cm.report().weighted_avg.f1;
        let detail = format!("weighted F1 {f1:.3} on {} test windows", split.test.len());
        *real = Some(RealModel { net, test: split.test });
        return (f1 >= 0.80, detail);
    }
    let (_, cm) = evaluate(&p.net, &p.test).unwrap();
    let acc = cm.accuracy();
    (
        acc >= 0.95,
        format!("SKIPPED-DATA (CGAIT_PHYSIONET_DIR unset); synthetic-separable fallback accuracy {acc:.3}"),
    )
}

// ------------------------------------------------------------ readability

#[derive(Deserialize)]
struct CorpusEntry {
    text: String,
    words: usize,
    sentences: usize,
    syllables: usize,
    fre: f64,
    fkgl: f64,
}

fn flesch() -> (bool, String) {
    let s = TextStats::new(3, 1, 3);
    let (f, k) = (fre(&s).unwrap(), fkgl(&s).unwrap());
    let mut ok = (f - 119.19).abs() <= 1e-9 && (k + 2.62).abs() <= 1e-9;
    let corpus: Vec<CorpusEntry> =
        serde_json::from_str(include_str!("../../core/tests/fixtures/readability_corpus.json")).unwrap();
    let mut matched = 0;
    for e in &corpus {
        let stats = text_stats(&e.text);
        // hand arithmetic on the hand counts
        let wps = e.words as f64 / e.sentences as f64;
        let spw = e.syllables as f64 / e.words as f64;
        let hand_fre = 206.835 - 1.015 * wps - 84.6 * spw;
        let hand_fkgl = -15.59 + 0.39 * wps + 11.8 * spw;
        if stats == TextStats::new(e.words, e.sentences, e.syllables)
            && fre(&stats) == Ok(hand_fre)
            && fkgl(&stats) == Ok(hand_fkgl)
            && e.fre == hand_fre
            && e.fkgl == hand_fkgl
        {
            matched += 1;
        }
    }
    ok &= corpus.len() == 10 && matched == corpus.len();
    (ok, format!("fre(3,1,3) = {f}, fkgl(3,1,3) = {k}; corpus {matched}/{} exact", corpus.len()))
}

// ----------------------------------------------------------------- CG, SCA

fn grounding_oracle(v_e: &[f64], v_i: &[f64]) -> f64 {
    if v_e.is_empty() {
        return 100.0;
    }
    let mut pool = v_i.to_vec();
    let mut hits = 0;
    for e in v_e {
        if let Some(k) = pool.iter().position(|p| p == e) {
            pool.swap_remove(k);
            hits += 1;
        }
    }
    100.0 * hits as f64 / v_e.len() as f64
}

fn case(id: usize, truth: Severity, baseline: Severity, final_label: Severity) -> EvaluationCase {
    EvaluationCase {
        case_id: format!("c{id}"),
        truth,
        baseline,
        final_label,
        contested: true,
    }
}

fn cg_and_sca() -> (bool, String) {
    let pool = [0.821, 0.462, 62.5, 37.5, 1.12, 7.56, 1.45, 2.0, 2.5, 3.0, 100.0, -4.0];
    let mut rng = ChaCha8Rng::seed_from_u64(40_000);
    let mut mismatches = 0;
    for _ in 0..500 {
        let mut draw = |max: usize| -> Vec<f64> {
            (0..rng.random_range(0..max)).map(|_| pool[rng.random_range(0..pool.len())]).collect()
        };
        let (v_e, v_i) = (draw(10), draw(16));
        if clinical_grounding(&v_e, &v_i) != grounding_oracle(&v_e, &v_i) {
            mismatches += 1;
        }
    }
    use Severity::*;
    let set = EvaluationSet {
        cases: vec![
            case(1, Healthy, Healthy, Healthy),
            case(2, Stage2, Stage2, Stage2),
            case(3, Stage3, Stage3, Stage3),
            case(4, Stage2_5, Stage2_5, Stage2_5),
            case(5, Stage2, Stage2_5, Stage2),
            case(6, Stage3, Stage2, Stage3),
            case(7, Healthy, Stage2, Stage2),
            case(8, Stage2_5, Stage3, Stage3),
            case(9, Stage3, Stage2_5, Stage2_5),
            case(10, Stage2, Healthy, Healthy),
        ],
    };
    let errors = set.d_err().count();
    let value = sca(&set).unwrap();
    (
        mismatches == 0 && errors == 6 && (value - 33.33).abs() <= 0.01,
        format!("500 claim-set pairs, {mismatches} mismatches; sca with {errors} errors, 2 corrected = {value:.4}"),
    )
}

// -------------------------------------------------------------- lifecycle

fn record(clock: &ManualClock, predicted: Severity) -> CaseRecord {
    let mut logits = [0.0; 4];
    logits[predicted.index()] = 2.0;
    let prediction = Prediction::from_logits(&logits).unwrap();
    let mut a = vec![0.0; 1000];
    a[400..440].iter_mut().for_each(|v| *v = 1.0);
    let map = |values: Vec<f64>, method| ExplanationMap {
        method,
        values,
        target_class: predicted,
        source_layer: None,
    };
    let report =
        compute_discrepancy(&map(a, Method::GradCam), &map(vec![0.0; 1000], Method::Lrp), &XmedConfig::default())
            .unwrap();
    let context = PromptContext {
        predicted_class: predicted,
        confidence: prediction.confidence,
        gait_metrics: GaitMetrics {
            mean_stride_time: 1.08,
            stance_percentage: 63.2,
            swing_percentage: 36.8,
        },
        discrepancy_percentage: report.discrepancy_percentage,
        regions: report.regions.clone(),
    };
    let window = WindowRef {
        subject_id: "SynS200".into(),
        window_index: 0,
        start_frame: 0,
    };
    CaseRecord::new("case-a", window, prediction, report, context, clock).unwrap()
}

fn objection(text: &str, kind: ContestationKind) -> Contestation {
    Contestation {
        kind,
        free_text: text.into(),
        author: "clinician".into(),
        timestamp: 0,
    }
}

fn decide(label: &str) -> Result<String, BackendError> {
    Ok(format!("Stride and stance figures were reviewed.\n\nFinal decision: {label}"))
}

#[derive(Deserialize)]
struct ParseCase {
    text: String,
    expected: Option<Severity>,
}

fn lifecycle() -> (bool, String) {
    let cfg = AdjudicatorConfig::default();
    let mut failures: Vec<String> = Vec::new();
    let mut check = |cond: bool, what: &str| {
        if !cond {
            failures.push(what.to_string());
        }
    };

    // review -> justify -> accept
    let clock = ManualClock::new(1_700_000_000_000);
    let mut r = record(&clock, Severity::Stage2);
    check(r.state == CaseState::Predicted, "starts predicted");
    r.begin_review("clinician", &clock).unwrap();
    let m = MockBackend::scripted([decide("Stage 2")]);
    let res = r.adjudicate(&m, &clock, &cfg).unwrap();
    check(!res.overturned && r.state == CaseState::Justified, "justify without contest");
    r.finalize("clinician", FinalDecision::Accept, &clock).unwrap();
    check(
        r.state == CaseState::Finalized(FinalOutcome::Accepted) && r.final_label == Some(Severity::Stage2),
        "accept keeps adjudicated label",
    );
    check(r.verify_audit(), "audit verifies after accept path");

    // review -> justify -> override
    let mut r = record(&clock, Severity::Stage3);
    r.begin_review("clinician", &clock).unwrap();
    r.adjudicate(&MockBackend::scripted([decide("Stage 3")]), &clock, &cfg).unwrap();
    r.finalize("clinician", FinalDecision::Override(Severity::Stage2_5), &clock).unwrap();
    check(
        r.state == CaseState::Finalized(FinalOutcome::Overridden) && r.final_label == Some(Severity::Stage2_5),
        "override sets clinician label",
    );

    // review -> (contest -> justify) x3 -> accept, every contestation kind
    let mut r = record(&clock, Severity::Stage2_5);
    r.begin_review("clinician", &clock).unwrap();
    let m = MockBackend::scripted([decide("Stage 2.5"), decide("Stage 2"), decide("Stage 2")]);
    for (i, kind) in ContestationKind::ALL.into_iter().enumerate() {
        r.contest(objection(&format!("objection {i}"), kind), &clock).unwrap();
        check(r.state == CaseState::Contested, "contest moves to contested");
        r.adjudicate(&m, &clock, &cfg).unwrap();
        check(r.state == CaseState::Justified, "adjudicate after contest justifies");
    }
    check(r.turns.len() == 3 && r.contestations.len() == 3, "three rounds recorded");
    r.finalize("clinician", FinalDecision::Accept, &clock).unwrap();
    check(r.final_label == Some(Severity::Stage2), "accept takes last adjudicated class");
    check(r.verify_audit(), "audit verifies after multi-round path");

    // refused transitions leave the chain untouched
    let mut r = record(&clock, Severity::Healthy);
    let before = r.audit.len();
    check(r.contest(objection("early", ContestationKind::ReasoningFlaw), &clock).is_err(), "contest before review");
    check(
        r.adjudicate(&MockBackend::scripted([decide("Healthy")]), &clock, &cfg).is_err(),
        "adjudicate before review",
    );
    r.begin_review("clinician", &clock).unwrap();
    check(
        matches!(
            r.contest(objection("  ", ContestationKind::FactualError), &clock),
            Err(AdjudicatorError::EmptyContestation)
        ),
        "empty contestation refused",
    );
    check(r.finalize("clinician", FinalDecision::Accept, &clock).is_err(), "finalize before justification");
    check(r.audit.len() == before + 1, "refusals append nothing");

    // parse failure: audited, state unchanged; outage: 3 attempts
    let m = MockBackend::scripted([
        Ok("I cannot decide.".to_string()),
        Err(BackendError::Unavailable("503".into())),
        Err(BackendError::Unavailable("503".into())),
        decide("Stage 3"),
    ]);
    let n = r.audit.len();
    check(
        matches!(r.adjudicate(&m, &clock, &cfg), Err(AdjudicatorError::DecisionParseFailure)),
        "unparseable reply",
    );
    check(r.state == CaseState::UnderReview && r.audit.len() > n, "parse failure audited, state kept");
    let res = r.adjudicate(&m, &clock, &cfg).unwrap();
    check(res.attempts == 3 && res.overturned, "two outages then success");
    r.finalize("clinician", FinalDecision::Accept, &clock).unwrap();
    let frozen = r.audit.len();
    check(
        matches!(r.finalize("clinician", FinalDecision::Accept, &clock), Err(AdjudicatorError::AlreadyFinalized)),
        "finalize twice",
    );
    check(
        r.contest(objection("late", ContestationKind::NormativeConflict), &clock).is_err(),
        "contest after finalize",
    );
    check(r.audit.len() == frozen && r.verify_audit(), "frozen record unchanged");

    // decision parsing fixture
    let fixture: Vec<ParseCase> =
        serde_json::from_str(include_str!("../../core/tests/fixtures/decision_parse.json")).unwrap();
    let parsed = fixture
        .iter()
        .filter(|c| parse_final_decision(&c.text).ok() == c.expected)
        .count();
    let has_longest = fixture.iter().any(|c| c.expected == Some(Severity::Stage2_5) && c.text.contains("Stage 2"));

    // single-byte tamper fuzz over the finished log
    let log = to_jsonl(&r.audit);
    let mut rng = ChaCha8Rng::seed_from_u64(50_000);
    let mut caught = 0;
    for _ in 0..100 {
        let mut bytes = log.clone().into_bytes();
        let i = rng.random_range(0..bytes.len());
        bytes[i] = bytes[i].wrapping_add(rng.random_range(1..=255u8));
        if !std::str::from_utf8(&bytes).is_ok_and(verify_jsonl) {
            caught += 1;
        }
    }
    let ok = failures.is_empty() && verify_jsonl(&log) && parsed == 20 && fixture.len() == 20 && has_longest && caught == 100;
    (
        ok,
        format!(
            "state-machine checks failed: {:?}; parse fixture {parsed}/{}; tampers detected {caught}/100",
            failures,
            fixture.len()
        ),
    )
}

// --------------------------------------------------- confusion accounting

fn confusion_accounting() -> (bool, String) {
    let windows: Vec<Window> = synthetic_windows(&SynthConfig {
        subjects_per_class: 3,
        windows_per_subject: 3,
        seed: 60,
        ..SynthConfig::default()
    })
    .into_iter()
    .take(30)
    .collect();
    // an untrained model makes plenty of baseline errors
    let net = ArchConfig {
        conv_channels: vec![2],
        kernel_size: 3,
        pool_size: 8,
        dense_widths: vec![],
        input_len: 1000,
    }
    .build(0.0, 61)
    .unwrap();
    let retain = MockBackend::retain();
    let truthful: Vec<MockBackend> = Severity::ALL.into_iter().map(MockBackend::fixed).collect();
    let clock = ManualClock::new(0);
    let mut i = 0usize;
    let cases = run_sweep(
        &net,
        &windows,
        &XmedConfig::default(),
        &AdjudicatorConfig::default(),
        &clock,
        |w: &Window| {
            i += 1;
            // every other case the adjudicator names the truth
            if i.is_multiple_of(2) {
                &truthful[w.label.unwrap().index()] as &dyn ChatBackend
            } else {
                &retain as &dyn ChatBackend
            }
        },
    )
    .unwrap();
    let set = evaluation_set(&cases);
    let m = adjudication_confusion(&set);
    let d_err = set.d_err().count();
    let misdirected = misdirected_overturns(&set);
    let value = sca(&set).unwrap();
    let identity = 100.0 * m.overturn_incorrect as f64 / d_err as f64;
    (
        m.total() == 30 && set.cases.len() == 30 && misdirected == 0 && value == identity,
        format!(
            "30 cases: retain correct {} / incorrect {}, overturn correct {} / incorrect {}; |D_err| {d_err}; \
             sca {value} vs overturn_incorrect/|D_err| {identity}",
            m.retain_correct, m.retain_incorrect, m.overturn_correct, m.overturn_incorrect
        ),
    )
}

#[test]
fn acceptance() {
    let mut verdicts = vec![
        timed("gradient-correctness", Duration::from_secs(60), gradient_correctness),
        timed("lrp-conservation", Duration::from_secs(30), lrp_conservation),
    ];
    let mut planted = None;
    verdicts.push(timed("planted-feature-localization", Duration::from_secs(300), || {
        let p = train_planted();
        let out = localization(&p);
        planted = Some(p);
        out
    }));
    let planted = planted.unwrap();
    verdicts.push(timed("xmed-oracle-equivalence", Duration::from_secs(30), xmed_oracle_equivalence));
    let mut real = None;
    verdicts.push(timed("full-data-classification", Duration::from_secs(45 * 60), || {
        full_data_classification(&planted, &mut real)
    }));
    verdicts.push(timed("xmed-separation", Duration::from_secs(300), || match &real {
        Some(r) => xmed_separation(&r.net, &r.test, "PhysioNet test split"),
        None => xmed_separation(
            &planted.net,
            &synthetic_windows(&planted::held_out()),
            "SKIPPED-DATA planted-feature model, held-out subjects",
        ),
    }));
    verdicts.push(timed("flesch-formulas", Duration::from_secs(10), flesch));
    verdicts.push(timed("cg-and-sca-oracles", Duration::from_secs(10), cg_and_sca));
    verdicts.push(timed("adjudication-lifecycle", Duration::from_secs(30), lifecycle));
    verdicts.push(timed("confusion-accounting", Duration::from_secs(60), confusion_accounting));

    println!();
    for v in &verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    let unexpected: Vec<&str> = verdicts
        .iter()
        .filter(|v| !v.pass && !KNOWN_UNATTAINABLE.contains(&v.name))
        .map(|v| v.name)
        .collect();
    assert!(unexpected.is_empty(), "failed: {unexpected:?}");
}
