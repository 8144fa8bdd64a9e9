//! Strict N-Triples ingestion.

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use preemptql_core::ntriples::parse_line;
use preemptql_core::TripleStore;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

/// Reads a whole N-Triples stream. The first bad line aborts the load.
pub fn load_ntriples(reader: impl BufRead) -> Result<TripleStore, LoadError> {
    let mut triples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| LoadError::Syntax { line: i + 1, message: e.to_string() })?;
        match parse_line(&line) {
            Ok(Some(t)) => triples.push(t),
            Ok(None) => {}
            Err(e) => return Err(LoadError::Syntax { line: i + 1, message: e.to_string() }),
        }
    }
    Ok(TripleStore::from_triples(triples))
}

pub fn load_file(path: &Path) -> Result<TripleStore, LoadError> {
    let file = File::open(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
    load_ntriples(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_duplicate_input() {
        assert!(load_ntriples("".as_bytes()).unwrap().is_empty());
        let twice = "<a> <b> <c> .\n<a> <b> <c> .\n";
        assert_eq!(load_ntriples(twice.as_bytes()).unwrap().len(), 1);
    }

    #[test]
    fn bad_line_is_named() {
        let lines = ["# header", "<a> <b> <c> .", "", "<a> <b> \"x\"@en .", "<a> <b> oops ."];
        let text = lines.join("\n");
        let bad = lines.iter().position(|l| l.contains("oops")).unwrap() + 1;
        match load_ntriples(text.as_bytes()) {
            Err(LoadError::Syntax { line, .. }) => assert_eq!(line, bad),
            other => panic!("{other:?}"),
        }
    }
}
