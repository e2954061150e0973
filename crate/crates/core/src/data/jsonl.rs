//! JSON-lines readers and writers for captions, decoded candidates,
//! category labels and fixations. Record order follows file order.

use super::{DataError, DataResult};
use crate::gaze::{parse_fixation_line, FixationRecord};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub captions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub image_id: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub image_id: String,
    pub labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mentioned: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ignored: Vec<usize>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> DataResult<Vec<T>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| DataError::BadLine {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> DataResult<()> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec).expect("serializable record"));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_captions(path: &Path) -> DataResult<Vec<CaptionRecord>> {
    read_jsonl(path)
}

pub fn write_captions(path: &Path, records: &[CaptionRecord]) -> DataResult<()> {
    write_jsonl(path, records)
}

pub fn read_candidates(path: &Path) -> DataResult<Vec<CandidateRecord>> {
    read_jsonl(path)
}

pub fn write_candidates(path: &Path, records: &[CandidateRecord]) -> DataResult<()> {
    write_jsonl(path, records)
}

pub fn read_labels(path: &Path) -> DataResult<Vec<LabelRecord>> {
    read_jsonl(path)
}

pub fn write_labels(path: &Path, records: &[LabelRecord]) -> DataResult<()> {
    write_jsonl(path, records)
}

pub fn read_fixations(path: &Path) -> DataResult<Vec<FixationRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_fixation_line(line).map_err(|e| DataError::BadLine {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
