//! Union-dataset construction: merge text-question and visual-question
//! records into one provenance-tagged collection.

use std::collections::{BTreeMap, HashSet};

use super::record::{QARecord, Source};
use super::DatasetError;

/// Merged, provenance-tagged collection with unique record ids.
#[derive(Debug, Clone)]
pub struct UnionDataset {
    pub records: Vec<QARecord>,
    pub counts_by_source: BTreeMap<Source, usize>,
}

impl UnionDataset {
    /// Wraps an already-merged record list, enforcing id uniqueness.
    pub fn from_records(records: Vec<QARecord>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.id.clone()) {
                return Err(DatasetError::Validation {
                    message: format!("duplicate record id `{}`", r.id),
                });
            }
        }
        let mut counts = BTreeMap::new();
        for r in &records {
            *counts.entry(r.source).or_insert(0) += 1;
        }
        Ok(Self {
            records,
            counts_by_source: counts,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Keeps exactly the records carrying at least one OCR token whose text is
/// nonempty after trimming. Idempotent.
pub fn filter_has_text(records: Vec<QARecord>) -> Vec<QARecord> {
    records
        .into_iter()
        .filter(|r| r.ocr.iter().any(|t| !t.text.trim().is_empty()))
        .collect()
}

/// What `build_union` did beyond plain concatenation.
#[derive(Debug, Default)]
pub struct UnionReport {
    /// Ids that appeared more than once; the first occurrence was kept.
    pub duplicate_ids: Vec<String>,
    /// Visual-side records dropped for lacking OCR text.
    pub visual_dropped: usize,
}

/// `W = Y (union) Z`: concatenates the text-based records with the
/// OCR-bearing visual records, de-duplicating by id (first occurrence wins).
/// The visual side is filtered for OCR text defensively even if the caller
/// already did so.
pub fn build_union(
    text_based: Vec<QARecord>,
    visual: Vec<QARecord>,
) -> (UnionDataset, UnionReport) {
    let mut report = UnionReport::default();
    let visual_before = visual.len();
    let visual = filter_has_text(visual);
    report.visual_dropped = visual_before - visual.len();

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for record in text_based.into_iter().chain(visual) {
        if seen.insert(record.id.clone()) {
            records.push(record);
        } else {
            report.duplicate_ids.push(record.id.clone());
        }
    }
    let union = UnionDataset::from_records(records).expect("ids de-duplicated above");
    (union, report)
}
