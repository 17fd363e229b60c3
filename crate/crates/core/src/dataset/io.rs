//! Line-oriented record file reading and writing.
//!
//! The canonical record format is UTF-8 with one JSON object per line, field
//! names exactly matching [`QARecord`]. Strict mode rejects unknown keys and
//! fails on the first malformed line; lenient mode tolerates unknown keys and
//! skips bad lines while collecting a report.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;

use super::record::{check_bbox, QARecord, ANSWER_COUNT, OBJECT_CAP, OCR_CAP};
use super::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Strict,
    Lenient,
}

/// Result of loading a record file.
#[derive(Debug)]
pub struct LoadOutcome {
    pub records: Vec<QARecord>,
    /// `(line number, reason)` for lines skipped in lenient mode.
    pub skipped: Vec<(usize, String)>,
}

const RECORD_KEYS: &[&str] = &[
    "id",
    "source",
    "image_id",
    "image_size",
    "question",
    "answers",
    "ocr",
    "objects",
    "split",
];
const OCR_KEYS: &[&str] = &["text", "bbox", "word_vec", "appearance"];
const OBJECT_KEYS: &[&str] = &["feature", "bbox"];

pub fn load_records(path: &Path, mode: ParseMode) -> Result<LoadOutcome, DatasetError> {
    let contents = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut outcome = LoadOutcome {
        records: Vec::new(),
        skipped: Vec::new(),
    };
    for (idx, line) in contents.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line, mode) {
            Ok(record) => outcome.records.push(record),
            Err(message) => match mode {
                ParseMode::Strict => {
                    return Err(DatasetError::Parse {
                        line: line_no,
                        message,
                    })
                }
                ParseMode::Lenient => outcome.skipped.push((line_no, message)),
            },
        }
    }
    Ok(outcome)
}

pub fn save_records(path: &Path, records: &[QARecord]) -> Result<(), DatasetError> {
    let mut buf = String::new();
    for record in records {
        buf.push_str(&record.to_json_line());
        buf.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(buf.as_bytes())
        .map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn parse_line(line: &str, mode: ParseMode) -> Result<QARecord, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if mode == ParseMode::Strict {
        reject_unknown_keys(&value)?;
    }
    let mut record: QARecord = serde_json::from_value(value).map_err(|e| e.to_string())?;
    validate_record(&mut record)?;
    Ok(record)
}

fn reject_unknown_keys(value: &Value) -> Result<(), String> {
    let obj = value.as_object().ok_or("record must be a JSON object")?;
    for key in obj.keys() {
        if !RECORD_KEYS.contains(&key.as_str()) {
            return Err(format!("unknown key `{key}`"));
        }
    }
    for (list_key, allowed) in [("ocr", OCR_KEYS), ("objects", OBJECT_KEYS)] {
        if let Some(Value::Array(items)) = obj.get(list_key) {
            for (i, item) in items.iter().enumerate() {
                if let Some(o) = item.as_object() {
                    for key in o.keys() {
                        if !allowed.contains(&key.as_str()) {
                            return Err(format!("unknown key `{key}` in {list_key}[{i}]"));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// Enforces record invariants in place: answer padding, question
/// non-emptiness, bbox ordering, finite features, and the ingestion caps.
fn validate_record(record: &mut QARecord) -> Result<(), String> {
    if record.id.is_empty() {
        return Err("id: must be nonempty".into());
    }
    if record.question.trim().is_empty() {
        return Err("question: must be nonempty".into());
    }
    match record.answers.len() {
        0 => return Err("answers: at least one answer required".into()),
        n if n > ANSWER_COUNT => {
            return Err(format!(
                "answers: expected at most {ANSWER_COUNT} entries, got {n}"
            ))
        }
        n => {
            // Cyclic padding up to exactly ten.
            for i in n..ANSWER_COUNT {
                let repeat = record.answers[i % n].clone();
                record.answers.push(repeat);
            }
        }
    }
    record.ocr.truncate(OCR_CAP);
    record.objects.truncate(OBJECT_CAP);
    for (i, token) in record.ocr.iter().enumerate() {
        check_bbox(&token.bbox, &format!("ocr[{i}].bbox"))?;
        check_vec(token.word_vec.as_deref(), &format!("ocr[{i}].word_vec"))?;
        check_vec(token.appearance.as_deref(), &format!("ocr[{i}].appearance"))?;
    }
    for (i, object) in record.objects.iter().enumerate() {
        check_bbox(&object.bbox, &format!("objects[{i}].bbox"))?;
        check_vec(Some(&object.feature), &format!("objects[{i}].feature"))?;
    }
    Ok(())
}

fn check_vec(values: Option<&[f64]>, field: &str) -> Result<(), String> {
    if let Some(vs) = values {
        if !vs.iter().all(|v| v.is_finite()) {
            return Err(format!("{field}: values must be finite"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f
    }

    fn valid_line(id: &str) -> String {
        format!(
            r#"{{"id":"{id}","source":"textvqa","image_id":"img1","image_size":[640,480],"question":"what is this","answers":["a","b","c","d","e","f","g","h","i","j"],"ocr":[{{"text":"stop","bbox":[0.1,0.1,0.4,0.2]}}],"objects":[{{"feature":[0.5,0.25],"bbox":[0.0,0.0,1.0,1.0]}}],"split":"train"}}"#
        )
    }

    #[test]
    fn loads_valid_lines() {
        let f = write_lines(&[&valid_line("a"), &valid_line("b"), &valid_line("c")]);
        let out = load_records(f.path(), ParseMode::Strict).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.skipped.is_empty());
        assert_eq!(out.records[0].ocr[0].text, "stop");
    }

    #[test]
    fn pads_answers_cyclically() {
        let line = r#"{"id":"p","source":"vqa","image_id":"i","image_size":[10,10],"question":"q words","answers":["w","x","y","z"],"ocr":[],"objects":[],"split":"val"}"#;
        let f = write_lines(&[line]);
        let out = load_records(f.path(), ParseMode::Strict).unwrap();
        let answers = &out.records[0].answers;
        assert_eq!(answers.len(), 10);
        assert_eq!(
            answers,
            &["w", "x", "y", "z", "w", "x", "y", "z", "w", "x"]
        );
    }

    #[test]
    fn bad_bbox_names_field_and_line() {
        let line = r#"{"id":"b","source":"stvqa","image_id":"i","image_size":[10,10],"question":"q","answers":["a"],"ocr":[{"text":"t","bbox":[0.9,0.1,0.2,0.2]}],"objects":[],"split":"test"}"#;
        let f = write_lines(&[&valid_line("ok"), line]);
        let err = load_records(f.path(), ParseMode::Strict).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("ocr[0].bbox"), "{msg}");
    }

    #[test]
    fn strict_rejects_unknown_keys() {
        let line = r#"{"id":"u","source":"vqa","image_id":"i","image_size":[10,10],"question":"q","answers":["a"],"ocr":[],"objects":[],"split":"train","extra":1}"#;
        let f = write_lines(&[line]);
        let err = load_records(f.path(), ParseMode::Strict).unwrap_err();
        assert!(err.to_string().contains("unknown key `extra`"));
        // Lenient mode tolerates the same key.
        let out = load_records(f.path(), ParseMode::Lenient).unwrap();
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn lenient_skips_with_report() {
        let f = write_lines(&[&valid_line("ok"), "{not json", &valid_line("ok2")]);
        let out = load_records(f.path(), ParseMode::Lenient).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].0, 2);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_records(Path::new("/nonexistent/records.jsonl"), ParseMode::Strict)
            .unwrap_err();
        assert!(matches!(err, DatasetError::Io { .. }));
    }

    #[test]
    fn caps_applied_in_prefix_order() {
        let mut tokens = Vec::new();
        for i in 0..60 {
            tokens.push(format!(r#"{{"text":"t{i}","bbox":[0.0,0.0,0.1,0.1]}}"#));
        }
        let line = format!(
            r#"{{"id":"c","source":"textvqa","image_id":"i","image_size":[10,10],"question":"q","answers":["a"],"ocr":[{}],"objects":[],"split":"train"}}"#,
            tokens.join(",")
        );
        let f = write_lines(&[&line]);
        let out = load_records(f.path(), ParseMode::Strict).unwrap();
        assert_eq!(out.records[0].ocr.len(), OCR_CAP);
        assert_eq!(out.records[0].ocr[0].text, "t0");
        assert_eq!(out.records[0].ocr[49].text, "t49");
    }

    #[test]
    fn round_trips_through_save() {
        let f = write_lines(&[&valid_line("rt")]);
        let out = load_records(f.path(), ParseMode::Strict).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("saved.jsonl");
        save_records(&path, &out.records).unwrap();
        let again = load_records(&path, ParseMode::Strict).unwrap();
        assert_eq!(out.records, again.records);
    }
}
