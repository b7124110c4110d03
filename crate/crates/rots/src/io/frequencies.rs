//! Unigram count files: one `token count` pair per line.

use std::path::Path;

use rots_core::FrequencyTable;

use super::for_each_line;
use crate::error::{Result, RotsError};

/// Loads a frequency table and the number of malformed lines skipped.
/// Duplicate tokens add up.
pub fn load_frequencies(path: &Path) -> Result<(FrequencyTable, usize)> {
    let mut table = FrequencyTable::new();
    let mut skipped = 0;
    for_each_line(path, |_, line| {
        let mut fields = line.split_ascii_whitespace();
        match (fields.next(), fields.next().map(str::parse::<u64>), fields.next()) {
            (Some(token), Some(Ok(count)), None) => table.add(token, count),
            (None, ..) => {}
            _ => skipped += 1,
        }
        Ok(())
    })?;
    if table.is_empty() || table.total() == 0 {
        return Err(RotsError::Data(format!("{}: empty frequency table", path.display())));
    }
    Ok((table, skipped))
}
