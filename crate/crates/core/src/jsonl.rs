//! Line-oriented JSON reading and writing.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::document::Document;

/// A single unreadable line. The stream continues past it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}{}: {message}", id.as_ref().map(|i| format!(" (id {i})")).unwrap_or_default())]
pub struct RecordError {
    /// 1-based line number in the input.
    pub line: u64,
    pub id: Option<String>,
    pub message: String,
}

/// Something whose record-level invariants can be checked after parsing.
pub trait Record: DeserializeOwned {
    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

impl Record for Document {
    fn check(&self) -> Result<(), String> {
        self.validate()
    }
}

/// Iterator over the records of a JSONL stream. Blank lines are ignored.
pub struct JsonlReader<R, T> {
    inner: R,
    line: u64,
    buf: String,
    _marker: PhantomData<T>,
}

impl<R: BufRead, T: Record> JsonlReader<R, T> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            line: 0,
            buf: String::new(),
            _marker: PhantomData,
        }
    }
}

impl<T: Record> JsonlReader<BufReader<File>, T> {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead, T: Record> Iterator for JsonlReader<R, T> {
    type Item = Result<T, RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line += 1;
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    return Some(Err(RecordError {
                        line: self.line,
                        id: None,
                        message: e.to_string(),
                    }))
                }
            }
            let trimmed = self.buf.trim_end_matches(['\n', '\r']);
            if trimmed.trim().is_empty() {
                continue;
            }
            return Some(parse_line(trimmed, self.line));
        }
    }
}

fn parse_line<T: Record>(line: &str, line_no: u64) -> Result<T, RecordError> {
    match serde_json::from_str::<T>(line) {
        Ok(record) => record.check().map(|_| record).map_err(|message| RecordError {
            line: line_no,
            id: sniff_id(line),
            message,
        }),
        Err(e) => Err(RecordError {
            line: line_no,
            id: sniff_id(line),
            message: e.to_string(),
        }),
    }
}

// Best effort: pull an "id" out of a record that failed typed parsing.
fn sniff_id(line: &str) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(line).ok()?;
    match value.get("id").or_else(|| value.get("sample_id"))? {
        serde_json::Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

pub fn read_documents(path: impl AsRef<Path>) -> io::Result<JsonlReader<BufReader<File>, Document>> {
    JsonlReader::open(path)
}

/// Buffered JSONL writer, one compact object per line.
pub struct JsonlWriter<W: Write> {
    inner: BufWriter<W>,
    written: u64,
}

impl JsonlWriter<File> {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self::new(File::create(path)?))
    }
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(inner: W) -> Self {
        Self {
            inner: BufWriter::new(inner),
            written: 0,
        }
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> io::Result<()> {
        serde_json::to_writer(&mut self.inner, record)?;
        self.inner.write_all(b"\n")?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::Lang;

    #[test]
    fn reads_records_and_reports_bad_lines() {
        let input = concat!(
            r#"{"id":"a","text":"hi","source":"Webtext","lang":"en","meta":{}}"#,
            "\n\n",
            r#"{"id":"b","text":"x","source":"Webtext","lang":"klingon"}"#,
            "\n",
            "not json\n",
            r#"{"id":"","text":"x","source":"Webtext","lang":"en"}"#,
            "\n",
            r#"{"id":"c","text":"中文","source":"Book","lang":"zh"}"#,
        );
        let out: Vec<_> = JsonlReader::<_, Document>::new(input.as_bytes()).collect();
        assert_eq!(out.len(), 5);
        assert_eq!(out[0].as_ref().unwrap().id, "a");
        let err = out[1].as_ref().unwrap_err();
        assert_eq!((err.line, err.id.as_deref()), (3, Some("b")));
        assert_eq!(out[2].as_ref().unwrap_err().id, None);
        assert_eq!(out[3].as_ref().unwrap_err().message, "empty id");
        let last = out[4].as_ref().unwrap();
        assert_eq!(last.lang, Lang::Zh);
        assert!(last.meta.is_empty());
    }

    #[test]
    fn writer_emits_one_line_per_record() {
        let mut buf = Vec::new();
        {
            let mut w = JsonlWriter::new(&mut buf);
            w.write(&Document::new("1", "a\nb", "Math", Lang::En)).unwrap();
            w.write(&Document::new("2", "c", "Math", Lang::Other)).unwrap();
            assert_eq!(w.written(), 2);
            w.finish().unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: Vec<_> = JsonlReader::<_, Document>::new(text.as_bytes())
            .map(Result::unwrap)
            .collect();
        assert_eq!(back[0].text, "a\nb");
    }
}
