//! Record-level grammar shared by the text loader, the saver and schema inference.
//!
//! A record is a line split on the separator. A field starting with `"` is quoted: it
//! ends at the next lone `"`, `""` inside it stands for one quote, and it may span
//! lines. An empty unquoted field is a missing value; `""` is a present empty string.

use std::io::{self, BufRead, Write};

#[derive(Clone, Copy, Debug)]
struct Field {
    start: usize,
    end: usize,
    quoted: bool,
}

/// Unescaped fields of one record.
#[derive(Default, Debug)]
pub(crate) struct Record {
    buf: Vec<u8>,
    fields: Vec<Field>,
}

impl Record {
    pub(crate) fn len(&self) -> usize {
        self.fields.len()
    }

    /// Field bytes and whether the field was quoted.
    pub(crate) fn field(&self, i: usize) -> (&[u8], bool) {
        let f = self.fields[i];
        (&self.buf[f.start..f.end], f.quoted)
    }

    fn clear(&mut self) {
        self.buf.clear();
        self.fields.clear();
    }
}

enum Split {
    Done,
    OpenQuote,
    Bad(&'static str),
}

fn strip_eol(line: &[u8]) -> &[u8] {
    let line = line.strip_suffix(b"\n").unwrap_or(line);
    line.strip_suffix(b"\r").unwrap_or(line)
}

fn split(line: &[u8], sep: u8, rec: &mut Record) -> Split {
    let data = strip_eol(line);
    rec.clear();
    let mut i = 0;
    loop {
        if i < data.len() && data[i] == b'"' {
            i += 1;
            let start = rec.buf.len();
            loop {
                if i >= data.len() {
                    return Split::OpenQuote;
                }
                let b = data[i];
                if b == b'"' {
                    if data.get(i + 1) == Some(&b'"') {
                        rec.buf.push(b'"');
                        i += 2;
                    } else {
                        i += 1;
                        break;
                    }
                } else {
                    rec.buf.push(b);
                    i += 1;
                }
            }
            rec.fields.push(Field {
                start,
                end: rec.buf.len(),
                quoted: true,
            });
            if i == data.len() {
                return Split::Done;
            }
            if data[i] != sep {
                return Split::Bad("unexpected character after closing quote");
            }
            i += 1;
        } else {
            let end = data[i..].iter().position(|&b| b == sep).map_or(data.len(), |p| i + p);
            let start = rec.buf.len();
            rec.buf.extend_from_slice(&data[i..end]);
            rec.fields.push(Field {
                start,
                end: rec.buf.len(),
                quoted: false,
            });
            if end == data.len() {
                return Split::Done;
            }
            i = end + 1;
        }
    }
}

pub(crate) enum ReadOutcome {
    Record,
    Malformed(&'static str),
    Eof,
}

/// Buffers start at this size so typical rows never grow them; longer lines grow them
/// to the longest line seen.
const INITIAL_LINE_CAPACITY: usize = 4096;

/// Streams records from a reader, holding one record in memory at a time.
pub(crate) struct RecordReader<R> {
    inner: R,
    sep: u8,
    line: Vec<u8>,
    pub(crate) record: Record,
    lines: u64,
    bytes: u64,
    record_line: u64,
}

impl<R: BufRead> RecordReader<R> {
    pub(crate) fn new(inner: R, sep: u8) -> Self {
        RecordReader {
            inner,
            sep,
            line: Vec::with_capacity(INITIAL_LINE_CAPACITY),
            record: Record {
                buf: Vec::with_capacity(INITIAL_LINE_CAPACITY),
                fields: Vec::with_capacity(64),
            },
            lines: 0,
            bytes: 0,
            record_line: 0,
        }
    }

    /// Physical lines consumed so far.
    pub(crate) fn lines(&self) -> u64 {
        self.lines
    }

    pub(crate) fn bytes(&self) -> u64 {
        self.bytes
    }

    /// 1-based line on which the last record started.
    pub(crate) fn record_line(&self) -> u64 {
        self.record_line
    }

    pub(crate) fn next_record(&mut self) -> io::Result<ReadOutcome> {
        self.line.clear();
        let n = self.inner.read_until(b'\n', &mut self.line)?;
        if n == 0 {
            return Ok(ReadOutcome::Eof);
        }
        self.lines += 1;
        self.bytes += n as u64;
        self.record_line = self.lines;
        loop {
            match split(&self.line, self.sep, &mut self.record) {
                Split::Done => return Ok(ReadOutcome::Record),
                Split::Bad(msg) => return Ok(ReadOutcome::Malformed(msg)),
                Split::OpenQuote => {
                    let n = self.inner.read_until(b'\n', &mut self.line)?;
                    if n == 0 {
                        return Ok(ReadOutcome::Malformed("unterminated quoted field"));
                    }
                    self.lines += 1;
                    self.bytes += n as u64;
                }
            }
        }
    }
}

/// Writes `s` as one field, quoting it when it is empty or contains the separator, a
/// quote or a line break.
pub(crate) fn write_quoted(out: &mut Vec<u8>, s: &[u8], sep: u8) {
    let needs = s.is_empty() || s.iter().any(|&b| b == sep || b == b'"' || b == b'\n' || b == b'\r');
    if !needs {
        out.extend_from_slice(s);
        return;
    }
    out.push(b'"');
    for &b in s {
        if b == b'"' {
            out.push(b'"');
        }
        out.push(b);
    }
    out.push(b'"');
}

/// Shortest decimal text that parses back to the same `f32`; NaN is written as nothing.
pub(crate) fn write_f32(out: &mut Vec<u8>, x: f32) {
    if x.is_nan() {
        return;
    }
    let _ = write!(out, "{x:?}");
    if out.ends_with(b".0") {
        out.truncate(out.len() - 2);
    }
}

pub(crate) fn write_f64(out: &mut Vec<u8>, x: f64) {
    if x.is_nan() {
        return;
    }
    let _ = write!(out, "{x:?}");
    if out.ends_with(b".0") {
        out.truncate(out.len() - 2);
    }
}
