//! Sentence-pair files: `gold<TAB>sentence1<TAB>sentence2[<TAB>subtask]`.

use std::path::Path;

use super::for_each_line;
use crate::error::{Result, RotsError};

/// One well-formed line.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub line: usize,
    pub gold: f64,
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub subtask: Option<String>,
}

/// All well-formed lines of a file plus the number skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFile {
    pub records: Vec<PairRecord>,
    pub skipped: usize,
}

fn parse_line(line: usize, text: &str) -> Option<PairRecord> {
    let fields: Vec<&str> = text.split('\t').collect();
    if !(3..=4).contains(&fields.len()) {
        return None;
    }
    let gold: f64 = fields[0].trim().parse().ok().filter(|g: &f64| g.is_finite())?;
    let tokens = |s: &str| s.split_whitespace().map(str::to_owned).collect::<Vec<_>>();
    let (left, right) = (tokens(fields[1]), tokens(fields[2]));
    if left.is_empty() || right.is_empty() {
        return None;
    }
    let subtask = fields.get(3).map(|s| s.trim().to_owned()).filter(|s| !s.is_empty());
    Some(PairRecord { line, gold, left, right, subtask })
}

/// Reads a pair file, tokenizing sentences on whitespace.
pub fn load_pairs(path: &Path) -> Result<PairFile> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for_each_line(path, |n, text| {
        if text.trim().is_empty() {
            return Ok(());
        }
        match parse_line(n, text) {
            Some(r) => records.push(r),
            None => skipped += 1,
        }
        Ok(())
    })?;
    if records.is_empty() {
        return Err(RotsError::Data(format!("{}: no valid sentence pairs", path.display())));
    }
    Ok(PairFile { records, skipped })
}
