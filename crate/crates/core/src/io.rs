//! JSON-lines helpers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parses one value per non-blank line; errors name the line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line)
            .map_err(|e| Error::InvalidInput(format!("line {}: {e}", i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    read_jsonl(BufReader::new(f))
}

pub fn write_jsonl<T: Serialize, W: Write>(mut w: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl_file<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_jsonl(BufWriter::new(File::create(path)?), items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Method, ScoreRecord};

    #[test]
    fn round_trip_and_line_errors() {
        let recs = vec![
            ScoreRecord::new("a", Method::Pac, 0.25, "f").unwrap(),
            ScoreRecord::new("b", Method::Ppl, -3.0, "f").unwrap(),
        ];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.ends_with('\n'));
        let back: Vec<ScoreRecord> = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, recs);
        let err = read_jsonl::<ScoreRecord, _>("\n{\"id\":1}\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
