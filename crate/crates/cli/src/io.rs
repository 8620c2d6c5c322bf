//! Line-oriented input and output. Inputs are read in fixed-size chunks so a
//! command never holds more than one chunk of a corpus in memory.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use spangec::annotation::check_no_markers;
use spangec::{tokenize, TokenSeq};

use crate::error::CliError;

pub const CHUNK_LINES: usize = 4096;

/// A file (or `-` for stdin) read as numbered lines.
pub struct LineSource {
    path: PathBuf,
    reader: Box<dyn BufRead>,
    next_line: usize,
}

impl LineSource {
    pub fn open(path: &Path) -> Result<Self, CliError> {
        let reader: Box<dyn BufRead> = if path.as_os_str() == "-" {
            Box::new(BufReader::new(io::stdin()))
        } else {
            Box::new(BufReader::new(
                File::open(path).map_err(|e| CliError::io(path, e))?,
            ))
        };
        Ok(LineSource {
            path: path.to_path_buf(),
            reader,
            next_line: 1,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Up to `CHUNK_LINES` lines; empty at end of input. Line numbers are
    /// 1-based.
    pub fn next_chunk(&mut self) -> Result<Vec<(usize, String)>, CliError> {
        let mut chunk = Vec::new();
        while chunk.len() < CHUNK_LINES {
            let mut line = String::new();
            let n = self
                .reader
                .read_line(&mut line)
                .map_err(|e| CliError::at_line(&self.path, self.next_line, e))?;
            if n == 0 {
                break;
            }
            if line.ends_with('\n') {
                line.pop();
                if line.ends_with('\r') {
                    line.pop();
                }
            }
            chunk.push((self.next_line, line));
            self.next_line += 1;
        }
        Ok(chunk)
    }
}

pub fn create_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) if p.as_os_str() != "-" => {
            let f = File::create(p).map_err(|e| CliError::io(p, e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        _ => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

pub fn write_err(e: io::Error) -> CliError {
    if e.kind() == io::ErrorKind::BrokenPipe {
        return CliError::Closed;
    }
    CliError::Data(format!("write failed: {e}"))
}

/// A tokenized sentence free of reserved marker tokens.
pub fn parse_sentence(path: &Path, line_no: usize, text: &str) -> Result<TokenSeq, CliError> {
    let tokens = tokenize(text);
    check_no_markers(&tokens).map_err(|e| CliError::at_line(path, line_no, e))?;
    Ok(tokens)
}

/// `source<TAB>target`.
pub fn parse_pair(path: &Path, line_no: usize, line: &str) -> Result<(TokenSeq, TokenSeq), CliError> {
    let mut fields = line.split('\t');
    match (fields.next(), fields.next(), fields.next()) {
        (Some(s), Some(t), None) => Ok((
            parse_sentence(path, line_no, s)?,
            parse_sentence(path, line_no, t)?,
        )),
        _ => Err(CliError::at_line(
            path,
            line_no,
            "expected exactly one tab between source and target",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_parsing() {
        let p = Path::new("x.tsv");
        let (s, t) = parse_pair(p, 1, "a b\ta c").unwrap();
        assert_eq!((s.len(), t.len()), (2, 2));
        let (s, t) = parse_pair(p, 1, "\t").unwrap();
        assert!(s.is_empty() && t.is_empty());
        let err = parse_pair(p, 7, "no tab here").unwrap_err();
        assert!(err.to_string().contains("x.tsv:7"));
        assert!(parse_pair(p, 1, "a\tb\tc").is_err());
        assert!(parse_pair(p, 1, "a <s1> b\tb").is_err());
    }

    #[test]
    fn chunks_strip_line_endings() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"a b\r\nc\n\nd").unwrap();
        let mut src = LineSource::open(f.path()).unwrap();
        let chunk = src.next_chunk().unwrap();
        let lines: Vec<&str> = chunk.iter().map(|(_, l)| l.as_str()).collect();
        assert_eq!(lines, ["a b", "c", "", "d"]);
        assert_eq!(chunk[3].0, 4);
        assert!(src.next_chunk().unwrap().is_empty());
    }
}
