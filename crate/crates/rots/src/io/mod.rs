//! Readers for word vectors, frequency tables, CoNLL-U trees and sentence-pair TSV files.

pub mod conllu;
pub mod frequencies;
pub mod pairs;
pub mod vectors;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Result, RotsError};

/// Calls `f(line_number, line)` for every line, numbering from 1.
pub(crate) fn for_each_line<F>(path: &Path, mut f: F) -> Result<()>
where
    F: FnMut(usize, &str) -> Result<()>,
{
    let file = File::open(path).map_err(|e| RotsError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut buf = String::new();
    let mut n = 0;
    loop {
        buf.clear();
        let read = reader.read_line(&mut buf).map_err(|e| RotsError::io(path, e))?;
        if read == 0 {
            return Ok(());
        }
        n += 1;
        f(n, buf.trim_end_matches(['\n', '\r']))?;
    }
}
