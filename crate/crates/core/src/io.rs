//! JSON Lines storage for tree corpora: one `{"n": .., "tri": [[..], ..]}`
//! object per line, `tri` holding the lower triangle row by row.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmatrix::FMatrix;

#[derive(Serialize, Deserialize)]
struct Record {
    n: usize,
    tri: Vec<Vec<u8>>,
}

pub fn to_json_line(f: &FMatrix) -> String {
    serde_json::to_string(&Record { n: f.n(), tri: f.lower_rows() }).expect("plain data serialises")
}

/// Parses one line; `line` is only used for error messages.
pub fn parse_json_line(text: &str, line: usize) -> Result<FMatrix> {
    let rec: Record = serde_json::from_str(text).map_err(|e| Error::Parse { line, message: e.to_string() })?;
    if rec.tri.len() + 1 != rec.n {
        return Err(Error::Parse {
            line,
            message: format!("n = {} but {} rows given (expected {})", rec.n, rec.tri.len(), rec.n.saturating_sub(1)),
        });
    }
    FMatrix::from_lower_rows(&rec.tri).map_err(|e| Error::Parse { line, message: e.to_string() })
}

/// Streams matrices from a JSONL source, skipping blank lines. Line
/// numbers in errors are 1-based.
pub fn read_corpus<R: BufRead>(reader: R) -> impl Iterator<Item = Result<FMatrix>> {
    reader.lines().enumerate().filter_map(|(k, line)| match line {
        Err(e) => Some(Err(Error::Io(e))),
        Ok(text) if text.trim().is_empty() => None,
        Ok(text) => Some(parse_json_line(&text, k + 1)),
    })
}

pub fn read_corpus_all<R: BufRead>(reader: R) -> Result<Vec<FMatrix>> {
    read_corpus(reader).collect()
}

pub fn write_corpus<'a, W: Write>(mut writer: W, corpus: impl IntoIterator<Item = &'a FMatrix>) -> Result<()> {
    for f in corpus {
        writeln!(writer, "{}", to_json_line(f))?;
    }
    writer.flush()?;
    Ok(())
}
