use proptest::prelude::*;

use super::*;
use crate::dataset::{Source, Split};
use crate::numerics::SplitMix64;

fn record_with_answers(id: &str, answers: Vec<&str>) -> QARecord {
    assert_eq!(answers.len(), ANSWER_COUNT);
    QARecord {
        id: id.into(),
        source: Source::Synthetic,
        image_id: format!("img-{id}"),
        image_size: (100, 100),
        question: "what is it".into(),
        answers: answers.into_iter().map(String::from).collect(),
        ocr: vec![],
        objects: vec![],
        split: Split::Test,
    }
}

fn answers_with_matches(target: &str, k: usize) -> Vec<String> {
    let mut answers: Vec<String> = (0..ANSWER_COUNT - k).map(|i| format!("filler{i}")).collect();
    answers.extend(std::iter::repeat(target.to_string()).take(k));
    answers
}

// ── normalization ────────────────────────────────────────────────────

#[test]
fn normalize_case_and_trim() {
    assert_eq!(normalize_answer(" STOP "), "stop");
}

#[test]
fn normalize_strips_edge_punctuation() {
    assert_eq!(normalize_answer("30."), "30");
}

#[test]
fn normalize_collapses_whitespace() {
    assert_eq!(normalize_answer("a  b"), "a b");
}

// ── accuracy ─────────────────────────────────────────────────────────

#[test]
fn five_matches_give_full_credit() {
    let answers = answers_with_matches("stop", 5);
    assert_eq!(vqa_accuracy("stop", &answers), 1.0);
}

#[test]
fn two_matches_give_two_thirds() {
    let answers = answers_with_matches("go", 2);
    assert_eq!(vqa_accuracy("go", &answers), 2.0 / 3.0);
}

#[test]
fn zero_matches_give_zero() {
    let answers = answers_with_matches("left", 0);
    assert_eq!(vqa_accuracy("left", &answers), 0.0);
}

#[test]
fn scores_come_from_the_four_point_lattice() {
    for k in 0..=ANSWER_COUNT {
        let answers = answers_with_matches("x", k);
        let score = vqa_accuracy("x", &answers);
        let expected = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0][k.min(3)];
        assert_eq!(score, expected, "k={k}");
    }
}

proptest! {
    #[test]
    fn accuracy_invariant_under_answer_permutation(k in 0usize..=10, seed in any::<u64>()) {
        let mut answers = answers_with_matches("stop sign", k);
        let base = vqa_accuracy("stop sign", &answers);
        let mut rng = SplitMix64::new(seed);
        rng.shuffle(&mut answers);
        prop_assert_eq!(vqa_accuracy("stop sign", &answers), base);
    }
}

#[test]
fn official_variant_averages_leave_one_out() {
    // Three matches: one of the ten subsets drops a match (2/3 credit),
    // the other seven keep all three (full credit)... all ten subsets have
    // either 2 or 3 matches: exactly 3 subsets drop one.
    let answers = answers_with_matches("go", 3);
    let expected = (3.0 * (2.0 / 3.0) + 7.0 * 1.0) / 10.0;
    assert_eq!(vqa_accuracy_official("go", &answers), expected);
    // With zero matches both metrics agree.
    assert_eq!(vqa_accuracy_official("go", &answers_with_matches("go", 0)), 0.0);
}

// ── evaluate ─────────────────────────────────────────────────────────

#[test]
fn rigged_perfect_predictions_score_one() {
    let records = vec![
        record_with_answers("a", vec!["x"; 10]),
        record_with_answers("b", vec!["y"; 10]),
    ];
    let mut oracle = |r: &QARecord| r.answers[0].clone();
    let report = evaluate(&mut oracle, &records, Metric::Literal).unwrap();
    assert_eq!(report.overall, 1.0);
}

#[test]
fn mixed_scores_average() {
    let records = vec![
        record_with_answers("a", vec!["x"; 10]),
        record_with_answers("b", vec!["y"; 10]),
    ];
    let mut predictor = |_: &QARecord| "x".to_string();
    let report = evaluate(&mut predictor, &records, Metric::Literal).unwrap();
    assert_eq!(report.overall, 0.5);
}

#[test]
fn by_source_weighted_mean_equals_overall() {
    let mut records = vec![
        record_with_answers("a", vec!["x"; 10]),
        record_with_answers("b", vec!["y"; 10]),
        record_with_answers("c", vec!["x"; 10]),
    ];
    records[1].source = Source::Vqa;
    let mut predictor = |_: &QARecord| "x".to_string();
    let report = evaluate(&mut predictor, &records, Metric::Literal).unwrap();
    let weighted: f64 = report
        .by_source
        .values()
        .map(|c| c.accuracy * c.n as f64)
        .sum::<f64>()
        / report.n as f64;
    assert!((report.overall - weighted).abs() < 1e-12);
}

#[test]
fn empty_split_is_an_error() {
    let mut predictor = |_: &QARecord| String::new();
    assert!(evaluate(&mut predictor, &[], Metric::Literal).is_err());
}

#[test]
fn report_tsv_scales_to_table_style() {
    let records = vec![record_with_answers("a", vec!["x"; 10])];
    let mut oracle = |r: &QARecord| r.answers[0].clone();
    let report = evaluate(&mut oracle, &records, Metric::Literal).unwrap();
    let tsv = report.to_tsv();
    assert!(tsv.contains("overall\t1\t100.00"), "{tsv}");
}

// ── bias probe ───────────────────────────────────────────────────────

fn balanced_probe(words: &[&str], per_word: usize) -> Vec<QARecord> {
    let mut records = Vec::new();
    for word in words {
        for i in 0..per_word {
            records.push(record_with_answers(
                &format!("{word}-{i}"),
                vec![word; 10],
            ));
        }
    }
    records
}

#[test]
fn constant_predictor_has_full_majority_rate() {
    let probe = balanced_probe(&["stop", "go", "left", "right"], 3);
    let mut constant = |_: &QARecord| "stop".to_string();
    let report = probe_bias(&mut constant, &probe, Metric::Literal).unwrap();
    assert_eq!(report.majority_answer, "stop");
    assert_eq!(report.majority_rate, 1.0);
    // A quarter of the probe has "stop" as ground truth.
    assert!((report.accuracy_on_balanced - 0.25).abs() < 1e-12);
}

#[test]
fn perfect_model_majority_rate_is_reciprocal_of_answers() {
    let probe = balanced_probe(&["stop", "go", "left", "right"], 3);
    let mut oracle = |r: &QARecord| r.answers[0].clone();
    let report = probe_bias(&mut oracle, &probe, Metric::Literal).unwrap();
    assert_eq!(report.accuracy_on_balanced, 1.0);
    assert!((report.majority_rate - 0.25).abs() < 1e-12);
}

#[test]
fn unbalanced_probe_rejected_with_counts() {
    let mut probe = balanced_probe(&["stop", "go"], 2);
    probe.push(record_with_answers("extra", vec!["stop"; 10]));
    let mut predictor = |_: &QARecord| "stop".to_string();
    let err = probe_bias(&mut predictor, &probe, Metric::Literal).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("unbalanced"), "{msg}");
    assert!(msg.contains("stop=3") && msg.contains("go=2"), "{msg}");
}

#[test]
fn balance_probe_set_downsamples_to_min_count() {
    let mut probe = balanced_probe(&["stop", "go"], 2);
    probe.push(record_with_answers("extra1", vec!["stop"; 10]));
    probe.push(record_with_answers("extra2", vec!["stop"; 10]));
    let balanced = balance_probe_set(&probe);
    assert_eq!(balanced.len(), 4);
    let mut predictor = |_: &QARecord| "go".to_string();
    assert!(probe_bias(&mut predictor, &balanced, Metric::Literal).is_ok());
}

#[test]
fn canonical_answer_uses_majority_with_lexicographic_ties() {
    let r = record_with_answers(
        "t",
        vec!["b", "b", "b", "a", "a", "a", "c", "c", "d", "e"],
    );
    assert_eq!(canonical_answer(&r), "a");
}
