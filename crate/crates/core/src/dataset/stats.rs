//! Dataset composition statistics: OCR-count histogram, source proportions,
//! and word frequency tables.

use std::collections::BTreeMap;

use super::record::Source;
use super::union::UnionDataset;

pub const DEFAULT_TOP_K: usize = 100;

/// Lowercases, splits on whitespace, and trims ASCII punctuation from both
/// ends of every word. Empty remainders are dropped.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_string())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone)]
pub struct SourceCell {
    pub source: Source,
    pub count: usize,
    /// Fraction of all records; `None` when the dataset is empty.
    pub proportion: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StatsReport {
    pub total: usize,
    /// OCR tokens per record -> number of records.
    pub ocr_count_histogram: BTreeMap<usize, usize>,
    pub sources: Vec<SourceCell>,
    pub proportions_defined: bool,
    pub top_question_words: Vec<(String, usize)>,
    pub top_answer_words: Vec<(String, usize)>,
    pub top_ocr_texts: Vec<(String, usize)>,
}

pub fn compute_stats(union: &UnionDataset, top_k: usize) -> StatsReport {
    let total = union.len();
    let mut histogram = BTreeMap::new();
    let mut question_words: BTreeMap<String, usize> = BTreeMap::new();
    let mut answer_words: BTreeMap<String, usize> = BTreeMap::new();
    let mut ocr_texts: BTreeMap<String, usize> = BTreeMap::new();

    for record in &union.records {
        *histogram.entry(record.ocr.len()).or_insert(0) += 1;
        for word in normalize_words(&record.question) {
            *question_words.entry(word).or_insert(0) += 1;
        }
        for answer in &record.answers {
            for word in normalize_words(answer) {
                *answer_words.entry(word).or_insert(0) += 1;
            }
        }
        for token in &record.ocr {
            for word in normalize_words(&token.text) {
                *ocr_texts.entry(word).or_insert(0) += 1;
            }
        }
    }

    let sources = Source::ALL
        .iter()
        .filter_map(|s| union.counts_by_source.get(s).map(|&c| (*s, c)))
        .map(|(source, count)| SourceCell {
            source,
            count,
            proportion: (total > 0).then(|| count as f64 / total as f64),
        })
        .collect();

    StatsReport {
        total,
        ocr_count_histogram: histogram,
        sources,
        proportions_defined: total > 0,
        top_question_words: top_k_table(question_words, top_k),
        top_answer_words: top_k_table(answer_words, top_k),
        top_ocr_texts: top_k_table(ocr_texts, top_k),
    }
}

fn top_k_table(counts: BTreeMap<String, usize>, k: usize) -> Vec<(String, usize)> {
    let mut table: Vec<(String, usize)> = counts.into_iter().collect();
    // Count descending, lexicographic ascending on ties.
    table.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    table.truncate(k);
    table
}

/// Proportion formatted with one decimal place, e.g. `35.5%`.
pub fn format_proportion(p: f64) -> String {
    format!("{:.1}%", p * 100.0)
}

impl StatsReport {
    /// TSV tables plus a summary block.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str("# summary\n");
        out.push_str(&format!("records\t{}\n", self.total));
        out.push_str(&format!(
            "proportions\t{}\n",
            if self.proportions_defined {
                "defined"
            } else {
                "undefined"
            }
        ));
        out.push_str("\n# sources\nsource\tcount\tproportion\n");
        for cell in &self.sources {
            let prop = cell
                .proportion
                .map(format_proportion)
                .unwrap_or_else(|| "-".to_string());
            out.push_str(&format!("{}\t{}\t{}\n", cell.source, cell.count, prop));
        }
        out.push_str("\n# ocr tokens per record\ntokens\trecords\n");
        for (tokens, records) in &self.ocr_count_histogram {
            out.push_str(&format!("{tokens}\t{records}\n"));
        }
        for (title, table) in [
            ("question words", &self.top_question_words),
            ("answer words", &self.top_answer_words),
            ("ocr texts", &self.top_ocr_texts),
        ] {
            out.push_str(&format!("\n# top {title}\nword\tcount\n"));
            for (word, count) in table {
                out.push_str(&format!("{word}\t{count}\n"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::record::{OcrToken, QARecord, Split, ANSWER_COUNT};

    fn record(id: usize, source: Source, question: &str, ocr: &[&str]) -> QARecord {
        QARecord {
            id: format!("r{id}"),
            source,
            image_id: format!("img{id}"),
            image_size: (100, 100),
            question: question.into(),
            answers: vec!["go".to_string(); ANSWER_COUNT],
            ocr: ocr
                .iter()
                .map(|t| OcrToken {
                    text: t.to_string(),
                    bbox: [0.0, 0.0, 0.1, 0.1],
                    word_vec: None,
                    appearance: None,
                })
                .collect(),
            objects: vec![],
            split: Split::Train,
        }
    }

    fn fixture(counts: [usize; 3]) -> UnionDataset {
        let mut records = Vec::new();
        let mut id = 0;
        for (source, n) in [Source::Textvqa, Source::Stvqa, Source::Vqa]
            .into_iter()
            .zip(counts)
        {
            for _ in 0..n {
                records.push(record(id, source, "what is this", &["sign"]));
                id += 1;
            }
        }
        UnionDataset::from_records(records).unwrap()
    }

    #[test]
    fn empty_dataset_flags_undefined_proportions() {
        let union = UnionDataset::from_records(vec![]).unwrap();
        let report = compute_stats(&union, DEFAULT_TOP_K);
        assert_eq!(report.total, 0);
        assert!(!report.proportions_defined);
        assert!(report.top_question_words.is_empty());
        assert!(report.to_tsv().contains("proportions\tundefined"));
    }

    #[test]
    fn source_proportions_match_published_composition() {
        let union = fixture([355, 240, 405]);
        let report = compute_stats(&union, DEFAULT_TOP_K);
        let formatted: Vec<String> = report
            .sources
            .iter()
            .map(|c| format_proportion(c.proportion.unwrap()))
            .collect();
        assert_eq!(formatted, ["35.5%", "24.0%", "40.5%"]);
    }

    #[test]
    fn question_word_normalization_counts_case_and_punctuation_together() {
        let union = UnionDataset::from_records(vec![record(
            0,
            Source::Textvqa,
            "What what WHAT?",
            &[],
        )])
        .unwrap();
        let report = compute_stats(&union, DEFAULT_TOP_K);
        assert_eq!(report.top_question_words, vec![("what".to_string(), 3)]);
    }

    #[test]
    fn proportions_sum_to_one() {
        let union = fixture([7, 3, 11]);
        let report = compute_stats(&union, DEFAULT_TOP_K);
        let sum: f64 = report
            .sources
            .iter()
            .map(|c| c.proportion.unwrap())
            .sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_strips_edge_punctuation_only() {
        assert_eq!(normalize_words("\"30.\""), vec!["30"]);
        assert_eq!(normalize_words("don't stop!"), vec!["don't", "stop"]);
        assert_eq!(normalize_words("  ... "), Vec::<String>::new());
    }
}
