//! Accuracy scoring and the language-prior bias probe.
//!
//! The accuracy of a prediction against the ten reference answers is
//! `min(matches / 3, 1)`: full credit at three or more exact matches after
//! normalization, partial credit below. Scores aggregate overall, by source
//! dataset, and by question template.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dataset::{normalize_words, QARecord, ANSWER_COUNT};
use crate::model::{Model, ModelError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{message}")]
    Validation { message: String },
}

/// Canonical answer form: lowercase, trimmed, whitespace runs collapsed to
/// one space, ASCII punctuation stripped from both ends of every word.
pub fn normalize_answer(s: &str) -> String {
    normalize_words(s).join(" ")
}

/// Eq.-4 style accuracy of one prediction against the ten reference
/// answers. Always one of {0, 1/3, 2/3, 1}.
pub fn vqa_accuracy(pred: &str, answers: &[String]) -> f64 {
    debug_assert_eq!(answers.len(), ANSWER_COUNT);
    let pred = normalize_answer(pred);
    let matches = answers
        .iter()
        .filter(|a| normalize_answer(a) == pred)
        .count();
    (matches as f64 / 3.0).min(1.0)
}

/// The official ten-choose-nine variant: the mean over the ten leave-one-out
/// subsets of `min(matches_in_nine / 3, 1)`. Offered behind a flag; not the
/// default metric.
pub fn vqa_accuracy_official(pred: &str, answers: &[String]) -> f64 {
    debug_assert_eq!(answers.len(), ANSWER_COUNT);
    let pred = normalize_answer(pred);
    let matched: Vec<bool> = answers
        .iter()
        .map(|a| normalize_answer(a) == pred)
        .collect();
    let total: usize = matched.iter().filter(|&&m| m).count();
    let mut sum = 0.0;
    for leave_out in 0..ANSWER_COUNT {
        let matches = total - usize::from(matched[leave_out]);
        sum += (matches as f64 / 3.0).min(1.0);
    }
    sum / ANSWER_COUNT as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// `min(matches/3, 1)` over all ten answers.
    Literal,
    /// Ten-choose-nine averaging.
    Official,
}

impl Metric {
    pub fn score(self, pred: &str, answers: &[String]) -> f64 {
        match self {
            Metric::Literal => vqa_accuracy(pred, answers),
            Metric::Official => vqa_accuracy_official(pred, answers),
        }
    }
}

/// Anything that can answer a record: the trained model, or a closure in
/// tests.
pub trait Predictor {
    fn predict(&mut self, record: &QARecord) -> Result<String, EvalError>;
}

impl Predictor for Model {
    fn predict(&mut self, record: &QARecord) -> Result<String, EvalError> {
        Ok(self.decode(record)?.text)
    }
}

impl<F> Predictor for F
where
    F: FnMut(&QARecord) -> String,
{
    fn predict(&mut self, record: &QARecord) -> Result<String, EvalError> {
        Ok(self(record))
    }
}

/// One aggregation cell: record count and mean accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub overall: f64,
    pub n: usize,
    pub by_source: BTreeMap<String, Cell>,
    pub by_template: BTreeMap<String, Cell>,
}

impl AccuracyReport {
    /// TSV with one row per cell; accuracies scaled by 100 and printed with
    /// two decimals.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("cell\tn\taccuracy\n");
        out.push_str(&format!(
            "overall\t{}\t{:.2}\n",
            self.n,
            self.overall * 100.0
        ));
        for (name, cell) in &self.by_source {
            out.push_str(&format!(
                "source:{name}\t{}\t{:.2}\n",
                cell.n,
                cell.accuracy * 100.0
            ));
        }
        for (name, cell) in &self.by_template {
            out.push_str(&format!(
                "template:{name}\t{}\t{:.2}\n",
                cell.n,
                cell.accuracy * 100.0
            ));
        }
        out
    }
}

/// Greedy-decodes every record and aggregates mean accuracy overall, by
/// source, and by template tag. Deterministic given the model and records.
pub fn evaluate(
    predictor: &mut impl Predictor,
    records: &[QARecord],
    metric: Metric,
) -> Result<AccuracyReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Validation {
            message: "evaluation split is empty".into(),
        });
    }
    let mut sums: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    let mut template_sums: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    let mut total = 0.0;
    for record in records {
        let pred = predictor.predict(record)?;
        let score = metric.score(&pred, &record.answers);
        total += score;
        let s = sums.entry(record.source.to_string()).or_insert((0, 0.0));
        s.0 += 1;
        s.1 += score;
        let t = template_sums.entry(record.template_tag()).or_insert((0, 0.0));
        t.0 += 1;
        t.1 += score;
    }
    let cellify = |m: BTreeMap<String, (usize, f64)>| {
        m.into_iter()
            .map(|(k, (n, sum))| {
                (
                    k,
                    Cell {
                        n,
                        accuracy: sum / n as f64,
                    },
                )
            })
            .collect()
    };
    Ok(AccuracyReport {
        overall: total / records.len() as f64,
        n: records.len(),
        by_source: cellify(sums),
        by_template: cellify(template_sums),
    })
}

/// Canonical ground-truth answer of a record: the most frequent of its ten
/// normalized answers, ties broken lexicographically.
pub fn canonical_answer(record: &QARecord) -> String {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for answer in &record.answers {
        *counts.entry(normalize_answer(answer)).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .map(|(a, _)| a)
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasProbeReport {
    /// Modal prediction over the probe set (normalized; ties lexicographic).
    pub majority_answer: String,
    /// Fraction of predictions equal to the modal one.
    pub majority_rate: f64,
    /// Mean accuracy on the balanced probe set.
    pub accuracy_on_balanced: f64,
    pub n: usize,
}

/// Downsamples a probe set so every canonical answer appears equally often:
/// records are grouped by answer, sorted by id within groups, and each group
/// is cut to the smallest group size. Deterministic.
pub fn balance_probe_set(records: &[QARecord]) -> Vec<QARecord> {
    let mut groups: BTreeMap<String, Vec<&QARecord>> = BTreeMap::new();
    for r in records {
        groups.entry(canonical_answer(r)).or_default().push(r);
    }
    let min = groups.values().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::new();
    for group in groups.values_mut() {
        group.sort_by(|a, b| a.id.cmp(&b.id));
        out.extend(group.iter().take(min).map(|r| (*r).clone()));
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Measures how often a model emits one dominant answer on a balanced probe
/// set. The probe must be balanced: every candidate answer equally frequent
/// as ground truth.
pub fn probe_bias(
    predictor: &mut impl Predictor,
    records: &[QARecord],
    metric: Metric,
) -> Result<BiasProbeReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Validation {
            message: "probe set is empty".into(),
        });
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(canonical_answer(r)).or_insert(0) += 1;
    }
    let min = counts.values().min().copied().unwrap_or(0);
    let max = counts.values().max().copied().unwrap_or(0);
    if min != max {
        let listing: Vec<String> = counts
            .iter()
            .map(|(answer, n)| format!("{answer}={n}"))
            .collect();
        return Err(EvalError::Validation {
            message: format!("probe set is unbalanced: {}", listing.join(", ")),
        });
    }

    let mut predictions: BTreeMap<String, usize> = BTreeMap::new();
    let mut accuracy_sum = 0.0;
    for record in records {
        let pred = predictor.predict(record)?;
        accuracy_sum += metric.score(&pred, &record.answers);
        *predictions.entry(normalize_answer(&pred)).or_insert(0) += 1;
    }
    let (majority_answer, majority_count) = predictions
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
        .expect("probe set is nonempty");
    Ok(BiasProbeReport {
        majority_answer,
        majority_rate: majority_count as f64 / records.len() as f64,
        accuracy_on_balanced: accuracy_sum / records.len() as f64,
        n: records.len(),
    })
}

#[cfg(test)]
mod tests;
