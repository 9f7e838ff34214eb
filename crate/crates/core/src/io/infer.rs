use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use super::text::{separator_byte, BadLinePolicy, LoaderColumn, TextLoaderConfig};
use super::tsv::{ReadOutcome, RecordReader};
use crate::error::{Error, Result};
use crate::types::ColumnType;

/// Narrowest type seen so far for one field. Ordered by widening: I4 ⊂ R4 ⊂ Text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Empty,
    I4,
    R4,
    Text,
}

fn classify(field: &[u8], quoted: bool) -> Kind {
    let Ok(s) = std::str::from_utf8(field) else {
        return Kind::Text;
    };
    let t = s.trim();
    if t.is_empty() {
        return if quoted { Kind::Text } else { Kind::Empty };
    }
    if t.parse::<i32>().is_ok() {
        Kind::I4
    } else if t.parse::<f32>().is_ok() && !t.eq_ignore_ascii_case("nan") && !t.contains("inf") {
        Kind::R4
    } else {
        Kind::Text
    }
}

/// Samples up to `sample_rows` records and picks, per field, the narrowest of I4, R4 and
/// Text consistent with every sampled value. Fields with only empty values are I4.
///
/// The first record is taken as a header when some field is non-numeric in it but
/// numeric in every later sampled record.
pub fn infer_schema(path: impl AsRef<Path>, separator: char, sample_rows: usize) -> Result<TextLoaderConfig> {
    if sample_rows == 0 {
        return Err(Error::invalid_argument("sample size must be at least 1"));
    }
    let sep = separator_byte(separator)?;
    let file = File::open(path.as_ref())?;
    let mut reader = RecordReader::new(BufReader::new(file), sep);

    let mut first: Option<(Vec<String>, Vec<Kind>)> = None;
    let mut rest: Vec<Kind> = Vec::new();
    let mut sampled = 0;
    while sampled <= sample_rows {
        match reader.next_record()? {
            ReadOutcome::Eof => break,
            ReadOutcome::Malformed(_) => continue,
            ReadOutcome::Record => {}
        }
        let rec = &reader.record;
        let kinds: Vec<Kind> = (0..rec.len()).map(|i| {
            let (f, q) = rec.field(i);
            classify(f, q)
        }).collect();
        if first.is_none() {
            let names = (0..rec.len())
                .map(|i| String::from_utf8_lossy(rec.field(i).0).into_owned())
                .collect();
            first = Some((names, kinds));
        } else {
            if rest.len() < kinds.len() {
                rest.resize(kinds.len(), Kind::Empty);
            }
            for (r, k) in rest.iter_mut().zip(kinds) {
                *r = (*r).max(k);
            }
        }
        sampled += 1;
    }
    let Some((names, head)) = first else {
        return Err(Error::input("cannot infer a schema from an empty file"));
    };

    let has_header = head
        .iter()
        .enumerate()
        .any(|(i, &k)| k == Kind::Text && matches!(rest.get(i), Some(Kind::I4 | Kind::R4)));
    let width = head.len().max(rest.len());
    let mut columns = Vec::with_capacity(width);
    for i in 0..width {
        let mut kind = rest.get(i).copied().unwrap_or(Kind::Empty);
        if !has_header {
            kind = kind.max(head.get(i).copied().unwrap_or(Kind::Empty));
        }
        let ty = match kind {
            Kind::Empty | Kind::I4 => ColumnType::I4,
            Kind::R4 => ColumnType::R4,
            Kind::Text => ColumnType::TEXT,
        };
        let name = match names.get(i) {
            Some(n) if has_header && !n.is_empty() => n.clone(),
            _ => format!("Column{i}"),
        };
        columns.push(LoaderColumn::new(name, ty, i));
    }
    Ok(TextLoaderConfig {
        separator,
        has_header,
        on_bad_line: BadLinePolicy::Error,
        columns,
    })
}
