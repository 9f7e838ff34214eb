use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::cell::{parse_cell, parse_range_item, start_range, write_cell};
use super::tsv::{write_quoted, ReadOutcome, RecordReader};
use crate::dataview::{ActiveColumns, CursorState, DataView, RowCursor};
use crate::error::{Error, ErrorKind, Result};
use crate::schema::{Column, Schema};
use crate::types::ColumnType;
use crate::value::{AnyGetter, ColumnValue, Getter, Value};

const READ_BUFFER: usize = 1 << 16;

/// What to do with a line that cannot be split into enough fields.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BadLinePolicy {
    #[default]
    Error,
    Skip,
}

/// Where a column's values come from: one field, or an inclusive range of fields
/// forming a fixed-size vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSource {
    Index(usize),
    Range([usize; 2]),
}

impl FieldSource {
    fn last(&self) -> usize {
        match *self {
            FieldSource::Index(i) => i,
            FieldSource::Range([_, b]) => b,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoaderColumn {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
    pub source: FieldSource,
}

impl LoaderColumn {
    pub fn new(name: impl Into<String>, ty: ColumnType, source: usize) -> Self {
        LoaderColumn {
            name: name.into(),
            ty,
            source: FieldSource::Index(source),
        }
    }

    pub fn range(name: impl Into<String>, ty: ColumnType, first: usize, last: usize) -> Self {
        LoaderColumn {
            name: name.into(),
            ty,
            source: FieldSource::Range([first, last]),
        }
    }
}

fn tab() -> char {
    '\t'
}

/// How to turn delimited text lines into rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextLoaderConfig {
    #[serde(default = "tab")]
    pub separator: char,
    #[serde(default)]
    pub has_header: bool,
    #[serde(default)]
    pub on_bad_line: BadLinePolicy,
    pub columns: Vec<LoaderColumn>,
}

impl TextLoaderConfig {
    pub fn new(columns: Vec<LoaderColumn>) -> Self {
        TextLoaderConfig {
            separator: '\t',
            has_header: false,
            on_bad_line: BadLinePolicy::Error,
            columns,
        }
    }

    pub fn schema(&self) -> Schema {
        self.columns.iter().map(|c| Column::new(c.name.clone(), c.ty)).collect()
    }

    /// Checks the separator and that every range maps onto a vector of its length.
    pub fn validate(&self) -> Result<()> {
        separator_byte(self.separator)?;
        for c in &self.columns {
            if let FieldSource::Range([a, b]) = c.source {
                if a > b {
                    return Err(Error::schema(format!("column '{}' has an empty field range {a}..{b}", c.name)));
                }
                let n = b - a + 1;
                if c.ty.value_count() != Some(n) || !c.ty.is_vector() {
                    return Err(Error::schema(format!(
                        "column '{}' reads fields {a}..{b} and must be a vector of size {n}, not {}",
                        c.name, c.ty
                    )));
                }
            }
        }
        Ok(())
    }

    fn required_fields(&self) -> usize {
        self.columns.iter().map(|c| c.source.last() + 1).max().unwrap_or(0)
    }
}

pub(crate) fn separator_byte(sep: char) -> Result<u8> {
    if !sep.is_ascii() || matches!(sep, '"' | '\n' | '\r') {
        return Err(Error::invalid_argument(format!("unsupported separator {sep:?}")));
    }
    Ok(sep as u8)
}

/// Counters shared by every cursor of one loader.
#[derive(Debug, Default)]
pub struct LoaderStats {
    lines_read: AtomicU64,
    bytes_read: AtomicU64,
    rows: AtomicU64,
    warnings: AtomicU64,
    skipped: AtomicU64,
}

impl LoaderStats {
    pub fn lines_read(&self) -> u64 {
        self.lines_read.load(Ordering::Relaxed)
    }
    pub fn bytes_read(&self) -> u64 {
        self.bytes_read.load(Ordering::Relaxed)
    }
    /// Rows produced across all cursors.
    pub fn rows(&self) -> u64 {
        self.rows.load(Ordering::Relaxed)
    }
    /// Fields that failed to parse and were replaced by missing values.
    pub fn warnings(&self) -> u64 {
        self.warnings.load(Ordering::Relaxed)
    }
    pub fn skipped_lines(&self) -> u64 {
        self.skipped.load(Ordering::Relaxed)
    }
}

/// A delimited text file as a [`DataView`]. Every cursor streams the file with its own
/// handle; nothing is read when the loader is built.
#[derive(Debug)]
pub struct TextLoader {
    path: PathBuf,
    config: Arc<TextLoaderConfig>,
    schema: Arc<Schema>,
    stats: Arc<LoaderStats>,
}

/// Opens `path` as a lazy view. Only the file's existence is checked here.
pub fn load_text(path: impl AsRef<Path>, config: TextLoaderConfig) -> Result<TextLoader> {
    config.validate()?;
    let path = path.as_ref().to_path_buf();
    std::fs::metadata(&path)?;
    Ok(TextLoader {
        schema: Arc::new(config.schema()),
        config: Arc::new(config),
        path,
        stats: Arc::new(LoaderStats::default()),
    })
}

impl TextLoader {
    pub fn stats(&self) -> &Arc<LoaderStats> {
        &self.stats
    }

    pub fn config(&self) -> &TextLoaderConfig {
        &self.config
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl DataView for TextLoader {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn get_row_cursor(&self, active: &ActiveColumns) -> Result<Box<dyn RowCursor>> {
        active.check_len(&self.schema)?;
        let file = File::open(&self.path)?;
        let sep = separator_byte(self.config.separator)?;
        let slots = self.schema.columns().iter().map(|c| Value::missing_for(&c.ty)).collect();
        Ok(Box::new(TextCursor {
            schema: self.schema.clone(),
            config: self.config.clone(),
            active: active.clone(),
            active_cols: active.indices().collect(),
            reader: RecordReader::new(BufReader::with_capacity(READ_BUFFER, file), sep),
            header_pending: self.config.has_header,
            required: self.config.required_fields(),
            slots: Arc::new(Mutex::new(slots)),
            pos: crate::dataview::RowPos::new(),
            next_row: 0,
            stats: self.stats.clone(),
            seen_lines: 0,
            seen_bytes: 0,
        }))
    }
}

struct TextCursor {
    schema: Arc<Schema>,
    config: Arc<TextLoaderConfig>,
    active: ActiveColumns,
    active_cols: Vec<usize>,
    reader: RecordReader<BufReader<File>>,
    header_pending: bool,
    required: usize,
    slots: Arc<Mutex<Vec<Value>>>,
    pos: Arc<crate::dataview::RowPos>,
    next_row: i64,
    stats: Arc<LoaderStats>,
    seen_lines: u64,
    seen_bytes: u64,
}

impl TextCursor {
    fn sync_stats(&mut self) {
        let lines = self.reader.lines();
        let bytes = self.reader.bytes();
        self.stats.lines_read.fetch_add(lines - self.seen_lines, Ordering::Relaxed);
        self.stats.bytes_read.fetch_add(bytes - self.seen_bytes, Ordering::Relaxed);
        self.seen_lines = lines;
        self.seen_bytes = bytes;
    }

    fn bad_line(&mut self, message: String) -> Result<()> {
        match self.config.on_bad_line {
            BadLinePolicy::Skip => {
                self.stats.skipped.fetch_add(1, Ordering::Relaxed);
                Ok(())
            }
            BadLinePolicy::Error => {
                self.pos.set_done();
                Err(ErrorKind::Parse {
                    line: self.reader.record_line(),
                    message,
                }
                .into())
            }
        }
    }

    fn parse_active(&mut self) -> u64 {
        let mut warnings = 0;
        let rec = &self.reader.record;
        let mut slots = self.slots.lock().expect("row lock");
        for &c in &self.active_cols {
            let col = &self.config.columns[c];
            let dst = &mut slots[c];
            match col.source {
                FieldSource::Index(i) => {
                    let (f, q) = rec.field(i);
                    if !parse_cell(&col.ty, f, q, dst) {
                        warnings += 1;
                    }
                }
                FieldSource::Range([a, b]) => {
                    start_range(dst, b - a + 1);
                    for (k, i) in (a..=b).enumerate() {
                        let (f, q) = rec.field(i);
                        if !parse_range_item(f, q, dst, k) {
                            warnings += 1;
                        }
                    }
                }
            }
        }
        warnings
    }
}

impl RowCursor for TextCursor {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn state(&self) -> CursorState {
        self.pos.state()
    }

    fn position(&self) -> i64 {
        self.pos.position()
    }

    fn move_next(&mut self) -> Result<bool> {
        if self.pos.state() == CursorState::Done {
            return Err(crate::dataview::advanced_after_done());
        }
        loop {
            let outcome = self.reader.next_record();
            self.sync_stats();
            match outcome? {
                ReadOutcome::Eof => {
                    self.pos.set_done();
                    return Ok(false);
                }
                ReadOutcome::Malformed(msg) => {
                    if std::mem::take(&mut self.header_pending) {
                        continue;
                    }
                    self.bad_line(msg.to_string())?;
                }
                ReadOutcome::Record => {
                    if std::mem::take(&mut self.header_pending) {
                        continue;
                    }
                    let n = self.reader.record.len();
                    if n < self.required {
                        self.bad_line(format!("expected at least {} fields, found {n}", self.required))?;
                        continue;
                    }
                    let warnings = self.parse_active();
                    if warnings > 0 {
                        self.stats.warnings.fetch_add(warnings, Ordering::Relaxed);
                    }
                    self.stats.rows.fetch_add(1, Ordering::Relaxed);
                    self.pos.set(self.next_row);
                    self.next_row += 1;
                    return Ok(true);
                }
            }
        }
    }

    fn is_active(&self, col: usize) -> bool {
        self.active.is_active(col)
    }

    fn get_any_getter(&mut self, col: usize) -> Result<AnyGetter> {
        let ty = self.schema.column(col)?.ty;
        let slots = self.slots.clone();
        let pos = self.pos.clone();
        Ok(crate::dispatch_type!(ty, T => slot_getter::<T>(slots, col, pos)))
    }
}

fn slot_getter<T: ColumnValue>(
    slots: Arc<Mutex<Vec<Value>>>,
    col: usize,
    pos: Arc<crate::dataview::RowPos>,
) -> AnyGetter {
    T::into_any_getter(Getter::new(move |dst: &mut T| {
        pos.row()?;
        let slots = slots.lock().expect("row lock");
        let v = T::from_value(&slots[col]).ok_or_else(|| Error::contract("parsed value type"))?;
        dst.clone_from(v);
        Ok(())
    }))
}

/// Result of writing a view as text.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TextSaveSummary {
    pub rows: u64,
    pub bytes: u64,
    /// Loader configuration that reads the written file back.
    pub loader: TextLoaderConfig,
}

/// Writes every column of `view` as delimited text with a header line.
pub fn save_text(view: &dyn DataView, path: impl AsRef<Path>, separator: char) -> Result<TextSaveSummary> {
    let all: Vec<usize> = (0..view.schema().len()).collect();
    save_text_columns(view, &all, path, separator)
}

/// Writes the given columns of `view`, in the given order, as delimited text with a
/// header line.
pub fn save_text_columns(
    view: &dyn DataView,
    columns: &[usize],
    path: impl AsRef<Path>,
    separator: char,
) -> Result<TextSaveSummary> {
    let sep = separator_byte(separator)?;
    let schema: Schema = columns
        .iter()
        .map(|&c| view.schema().column(c).cloned())
        .collect::<Result<_>>()?;
    let mut cursor = view.cursor(columns)?;
    let mut getters = columns.iter().map(|&c| cursor.get_getter_dyn(c)).collect::<Result<Vec<_>>>()?;
    let mut values: Vec<Value> = schema.columns().iter().map(|c| Value::missing_for(&c.ty)).collect();

    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path)?);
    let mut line = Vec::new();
    for (i, c) in schema.columns().iter().enumerate() {
        if i > 0 {
            line.push(sep);
        }
        write_quoted(&mut line, c.name.as_bytes(), sep);
    }
    line.push(b'\n');
    out.write_all(&line)?;
    let mut bytes = line.len() as u64;
    let mut rows = 0;
    let mut cell = Vec::new();
    while cursor.move_next()? {
        line.clear();
        for (i, (g, v)) in getters.iter_mut().zip(values.iter_mut()).enumerate() {
            if i > 0 {
                line.push(sep);
            }
            g.fill_value(v)?;
            cell.clear();
            if write_cell(v, &mut cell) {
                let text = matches!(v, Value::Text(_)) || v.type_name().starts_with("Vector");
                if text {
                    write_quoted(&mut line, &cell, sep);
                } else {
                    line.extend_from_slice(&cell);
                }
            }
        }
        line.push(b'\n');
        out.write_all(&line)?;
        bytes += line.len() as u64;
        rows += 1;
    }
    out.flush()?;
    let loader = TextLoaderConfig {
        separator,
        has_header: true,
        on_bad_line: BadLinePolicy::Error,
        columns: schema
            .columns()
            .iter()
            .enumerate()
            .map(|(i, c)| LoaderColumn::new(c.name.clone(), c.ty, i))
            .collect(),
    };
    Ok(TextSaveSummary { rows, bytes, loader })
}
