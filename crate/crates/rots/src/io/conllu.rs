//! Minimal CoNLL-U reader: only ID, FORM and HEAD are used.
//!
//! Multi-word token ranges (`3-4`) and empty nodes (`5.1`) are skipped,
//! comments start with `#`, and a blank line ends a sentence. Structural
//! problems with the heads (cycles, several roots) are not reported here;
//! they surface when a [`ConlluSentence`] is turned into a tree.

use std::path::{Path, PathBuf};

use rots_core::DependencyTree;

use super::for_each_line;
use crate::error::{Result, RotsError};

/// One sentence as read from the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConlluSentence {
    pub forms: Vec<String>,
    /// 1-based HEAD values, 0 for the root.
    pub heads: Vec<usize>,
    /// Line of the first token.
    pub line: usize,
}

impl ConlluSentence {
    /// Converts to a validated tree with 0-based heads.
    pub fn to_tree(&self) -> rots_core::Result<DependencyTree> {
        let heads = self.heads.iter().map(|&h| h.checked_sub(1)).collect();
        DependencyTree::new(self.forms.clone(), heads)
    }
}

fn parse_err(path: &Path, line: usize, message: String) -> RotsError {
    RotsError::Parse { path: PathBuf::from(path), line, message }
}

/// Reads every sentence of a CoNLL-U file. Errors on an empty file and on
/// malformed token lines, with their line numbers.
pub fn read_conllu(path: &Path) -> Result<Vec<ConlluSentence>> {
    let mut sentences = Vec::new();
    let mut current: Option<ConlluSentence> = None;
    for_each_line(path, |n, line| {
        if line.trim().is_empty() {
            if let Some(s) = current.take() {
                sentences.push(s);
            }
            return Ok(());
        }
        if line.starts_with('#') {
            return Ok(());
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 7 {
            return Err(parse_err(path, n, format!("expected at least 7 tab-separated columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            return Ok(());
        }
        let id: usize = cols[0].parse().map_err(|_| parse_err(path, n, format!("bad ID {:?}", cols[0])))?;
        let head: usize = cols[6].parse().map_err(|_| parse_err(path, n, format!("bad HEAD {:?}", cols[6])))?;
        let s = current.get_or_insert_with(|| ConlluSentence { forms: Vec::new(), heads: Vec::new(), line: n });
        if id != s.forms.len() + 1 {
            return Err(parse_err(path, n, format!("ID {id} out of sequence, expected {}", s.forms.len() + 1)));
        }
        s.forms.push(cols[1].to_owned());
        s.heads.push(head);
        Ok(())
    })?;
    if let Some(s) = current {
        sentences.push(s);
    }
    if sentences.is_empty() {
        return Err(RotsError::Data(format!("{}: no sentences", path.display())));
    }
    Ok(sentences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn skips_ranges_and_empty_nodes() {
        let f = file(
            "# text = Don't go\n1-2\tDon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tDo\t_\t_\t_\t_\t3\t_\t_\t_\n\
             2\tn't\t_\t_\t_\t_\t3\t_\t_\t_\n3\tgo\t_\t_\t_\t_\t0\t_\t_\t_\n3.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n\n\
             1\tHi\t_\t_\t_\t_\t0\t_\t_\t_\n",
        );
        let s = read_conllu(f.path()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].forms, ["Do", "n't", "go"]);
        assert_eq!(s[0].heads, [3, 3, 0]);
        assert_eq!(s[0].line, 3);
        let t = s[0].to_tree().unwrap();
        assert_eq!(t.root(), 2);
    }

    #[test]
    fn reports_line_numbers() {
        let f = file("1\ta\t_\t_\t_\t_\t0\t_\t_\t_\n2\tb\t_\t_\t_\t_\tx\t_\t_\t_\n");
        match read_conllu(f.path()) {
            Err(RotsError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cycle_is_a_tree_error() {
        let f = file("1\ta\t_\t_\t_\t_\t2\t_\t_\t_\n2\tb\t_\t_\t_\t_\t1\t_\t_\t_\n");
        let s = read_conllu(f.path()).unwrap();
        assert!(s[0].to_tree().is_err());
    }

    #[test]
    fn empty_file() {
        assert!(read_conllu(file("").path()).is_err());
    }
}
