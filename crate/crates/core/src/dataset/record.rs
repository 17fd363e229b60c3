//! Canonical question-answer record model.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Per-record ingestion caps: keep the list-order prefix of at most this
/// many OCR tokens / detected objects.
pub const OCR_CAP: usize = 50;
pub const OBJECT_CAP: usize = 100;

/// Number of reference answers per question.
pub const ANSWER_COUNT: usize = 10;

/// Originating dataset of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Textvqa,
    Stvqa,
    Vqa,
    Synthetic,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::Textvqa, Source::Stvqa, Source::Vqa, Source::Synthetic];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Textvqa => "textvqa",
            Source::Stvqa => "stvqa",
            Source::Vqa => "vqa",
            Source::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One unit of detected scene text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    pub text: String,
    /// `(x1, y1, x2, y2)`, normalized to the image so every coordinate lies
    /// in `[0, 1]` with `x1 <= x2` and `y1 <= y2`.
    pub bbox: [f64; 4],
    /// Precomputed word embedding; when absent a deterministic hash-derived
    /// stand-in is generated downstream.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_vec: Option<Vec<f64>>,
    /// Precomputed appearance feature; optional.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appearance: Option<Vec<f64>>,
}

/// One detected visual object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntity {
    pub feature: Vec<f64>,
    pub bbox: [f64; 4],
}

/// One question over one image, with its ten reference answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    pub source: Source,
    pub image_id: String,
    pub image_size: (u32, u32),
    pub question: String,
    pub answers: Vec<String>,
    pub ocr: Vec<OcrToken>,
    pub objects: Vec<ObjectEntity>,
    pub split: Split,
}

impl QARecord {
    /// Aggregation cell for per-template reports: synthetic records carry
    /// their question-template tag as an id suffix (`...-t1`/`-t2`/`-t3`);
    /// everything else falls back to its source name.
    pub fn template_tag(&self) -> String {
        if self.source == Source::Synthetic {
            if let Some(tag) = self.id.rsplit('-').next() {
                if matches!(tag, "t1" | "t2" | "t3") {
                    return tag.to_string();
                }
            }
        }
        self.source.as_str().to_string()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialization cannot fail")
    }
}

pub(crate) fn check_bbox(bbox: &[f64; 4], field: &str) -> Result<(), String> {
    let [x1, y1, x2, y2] = *bbox;
    if bbox.iter().any(|v| !v.is_finite()) {
        return Err(format!("{field}: coordinates must be finite"));
    }
    if x2 < x1 {
        return Err(format!("{field}: x2 < x1 ({x2} < {x1})"));
    }
    if y2 < y1 {
        return Err(format!("{field}: y2 < y1 ({y2} < {y1})"));
    }
    if !(0.0..=1.0).contains(&x1) || !(0.0..=1.0).contains(&x2) {
        return Err(format!("{field}: x range [{x1}, {x2}] outside [0, 1]"));
    }
    if !(0.0..=1.0).contains(&y1) || !(0.0..=1.0).contains(&y2) {
        return Err(format!("{field}: y range [{y1}, {y2}] outside [0, 1]"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_tag_synthetic_suffix() {
        let mut r = minimal_record();
        r.source = Source::Synthetic;
        r.id = "syn-train-00012-t3".into();
        assert_eq!(r.template_tag(), "t3");
    }

    #[test]
    fn template_tag_falls_back_to_source() {
        let r = minimal_record();
        assert_eq!(r.template_tag(), "textvqa");
    }

    #[test]
    fn bbox_ordering_checked() {
        assert!(check_bbox(&[0.5, 0.0, 0.3, 1.0], "bbox").is_err());
        assert!(check_bbox(&[0.5, 0.5, 0.5, 0.5], "bbox").is_ok());
    }

    pub(crate) fn minimal_record() -> QARecord {
        QARecord {
            id: "r1".into(),
            source: Source::Textvqa,
            image_id: "img1".into(),
            image_size: (640, 480),
            question: "what does the sign say".into(),
            answers: vec!["stop".to_string(); ANSWER_COUNT],
            ocr: vec![],
            objects: vec![],
            split: Split::Train,
        }
    }
}
