//! Text word-vector files in the word2vec/fastText/GloVe layout.
//!
//! Each data line is `token c1 ... cd`. An optional first line `N d` is a
//! header. Lines whose component count differs from the dimension, or
//! whose components do not parse as finite numbers, are skipped and counted.

use std::collections::HashSet;
use std::path::Path;

use rots_core::embeddings::Insert;
use rots_core::preprocess::VocabMoments;
use rots_core::EmbeddingStore;

use super::for_each_line;
use crate::error::{Result, RotsError};

/// Counters gathered while reading a vector file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VectorFileStats {
    /// `(N, d)` from the header line, if present.
    pub header: Option<(usize, usize)>,
    /// Well-formed data lines.
    pub valid: usize,
    pub skipped: usize,
    /// Later occurrences of an already-seen token.
    pub duplicates: usize,
}

/// Result of [`load_vectors_filtered`].
#[derive(Debug, Clone)]
pub struct FilteredVectors {
    pub store: EmbeddingStore,
    /// Moments over every distinct token in the file, if requested.
    pub moments: Option<VocabMoments>,
    pub stats: VectorFileStats,
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_ascii_whitespace();
    let n = it.next()?.parse().ok()?;
    let d = it.next()?.parse().ok()?;
    it.next().is_none().then_some((n, d))
}

fn parse_components(fields: std::str::SplitAsciiWhitespace<'_>, out: &mut Vec<f64>) -> bool {
    out.clear();
    for f in fields {
        match f.parse::<f64>() {
            Ok(x) if x.is_finite() => out.push(x),
            _ => return false,
        }
    }
    true
}

/// Loads every vector of the file.
pub fn load_vectors(path: &Path, expected_dim: Option<usize>) -> Result<(EmbeddingStore, VectorFileStats)> {
    let out = scan(path, expected_dim, |_| true, false)?;
    Ok((out.store, out.stats))
}

/// Keeps only tokens accepted by `keep`, optionally accumulating moments
/// over the whole vocabulary so that vocabulary-level converters can be
/// fitted without holding every vector in memory.
pub fn load_vectors_filtered<F>(
    path: &Path,
    expected_dim: Option<usize>,
    keep: F,
    with_moments: bool,
) -> Result<FilteredVectors>
where
    F: Fn(&str) -> bool,
{
    scan(path, expected_dim, keep, with_moments)
}

fn scan<F>(path: &Path, expected_dim: Option<usize>, keep: F, with_moments: bool) -> Result<FilteredVectors>
where
    F: Fn(&str) -> bool,
{
    let mut stats = VectorFileStats::default();
    let mut dim: Option<usize> = None;
    let mut store: Option<EmbeddingStore> = None;
    let mut moments: Option<VocabMoments> = None;
    let mut seen: HashSet<String> = HashSet::new();
    let mut comps = Vec::new();

    for_each_line(path, |n, line| {
        if n == 1 {
            if let Some(h) = parse_header(line) {
                stats.header = Some(h);
                dim = Some(h.1);
                return Ok(());
            }
        }
        let mut fields = line.split_ascii_whitespace();
        let Some(token) = fields.next() else {
            stats.skipped += 1;
            return Ok(());
        };
        if !parse_components(fields, &mut comps) || comps.is_empty() {
            stats.skipped += 1;
            return Ok(());
        }
        let d = *dim.get_or_insert(comps.len());
        if comps.len() != d {
            stats.skipped += 1;
            return Ok(());
        }
        if let Some(e) = expected_dim {
            if e != d {
                return Err(RotsError::Data(format!(
                    "{}: vectors have dimension {d}, expected {e}",
                    path.display()
                )));
            }
        }
        stats.valid += 1;
        let store = store.get_or_insert_with(|| EmbeddingStore::new(d));
        if with_moments {
            if !seen.insert(token.to_owned()) {
                stats.duplicates += 1;
                return Ok(());
            }
            moments.get_or_insert_with(|| VocabMoments::new(d)).accumulate(&comps);
            if keep(token) {
                store.insert(token, &comps)?;
            }
        } else if keep(token) && store.insert(token, &comps)? == Insert::Duplicate {
            stats.duplicates += 1;
        }
        Ok(())
    })?;

    match store {
        Some(store) if stats.valid > 0 => Ok(FilteredVectors { store, moments, stats }),
        _ => Err(RotsError::Data(format!("{}: no valid vector lines", path.display()))),
    }
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
    fn header_and_lines() {
        let f = file("2 3\na 1 0 0\nb 0 1 0\n");
        let (s, st) = load_vectors(f.path(), None).unwrap();
        assert_eq!((s.dim(), s.count()), (3, 2));
        assert_eq!(st.header, Some((2, 3)));
    }

    #[test]
    fn no_header() {
        let f = file("x 0.5 0.5\n");
        let (s, _) = load_vectors(f.path(), None).unwrap();
        assert_eq!((s.dim(), s.count()), (2, 1));
    }

    #[test]
    fn first_occurrence_wins() {
        let f = file("a 1 0 0\na 9 9 9\n");
        let (s, st) = load_vectors(f.path(), None).unwrap();
        assert_eq!(s.count(), 1);
        assert_eq!(s.lookup("a").unwrap(), &[1.0, 0.0, 0.0]);
        assert_eq!(st.duplicates, 1);
    }

    #[test]
    fn mismatched_lines_skipped() {
        let f = file("a 1 0 0\nb 1 0\nc 1 x 0\nd 0 0 1 \n");
        let (s, st) = load_vectors(f.path(), None).unwrap();
        assert_eq!(s.count(), 2);
        assert_eq!(st.skipped, 2);
    }

    #[test]
    fn errors() {
        let f = file("a 1 0 0\n");
        assert!(load_vectors(f.path(), Some(2)).is_err());
        let empty = file("");
        assert!(load_vectors(empty.path(), None).is_err());
        assert!(load_vectors(Path::new("/nonexistent/vectors.vec"), None).is_err());
    }

    #[test]
    fn filtered_with_moments() {
        let f = file("a 1 0\nb 0 2\nc 3 3\na 5 5\n");
        let out = load_vectors_filtered(f.path(), None, |t| t == "b", true).unwrap();
        assert_eq!(out.store.count(), 1);
        let m = out.moments.unwrap();
        assert_eq!(m.count(), 3);
        let mean = m.mean();
        assert!((mean[0] - 4.0 / 3.0).abs() < 1e-15 && (mean[1] - 5.0 / 3.0).abs() < 1e-15);
    }
}
