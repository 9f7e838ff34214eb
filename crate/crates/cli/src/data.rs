use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use dvml::io::{infer_schema, load_binary, load_text, LoaderColumn, TextLoaderConfig, MAGIC};
use dvml::{ColumnType, DataView, Result, Schema};

const SAMPLE_ROWS: usize = 1000;

fn is_binary(path: &Path) -> Result<bool> {
    let mut head = [0u8; 6];
    let mut f = File::open(path)?;
    let mut n = 0;
    while n < head.len() {
        match f.read(&mut head[n..])? {
            0 => break,
            k => n += k,
        }
    }
    Ok(n == head.len() && head == MAGIC[..6])
}

/// Fields consumed by each column when laid out positionally, or `None` if some
/// column has no fixed width.
fn widths(schema: &Schema) -> Option<Vec<usize>> {
    schema
        .columns()
        .iter()
        .map(|c| match c.ty {
            ColumnType::Scalar(_) => Some(1),
            ColumnType::Vector { size, .. } => size.map(|n| n.get() as usize),
        })
        .collect()
}

/// Loader config that reads `schema` from consecutive fields, vectors spanning one
/// field per slot.
fn positional(schema: &Schema, widths: &[usize]) -> TextLoaderConfig {
    let mut first = 0;
    let mut cols = Vec::new();
    for (c, &w) in schema.columns().iter().zip(widths) {
        cols.push(match c.ty {
            ColumnType::Scalar(_) => LoaderColumn::new(c.name.clone(), c.ty, first),
            _ => LoaderColumn::range(c.name.clone(), c.ty, first, first + w - 1),
        });
        first += w;
    }
    TextLoaderConfig::new(cols)
}

fn is_blank(path: &Path) -> Result<bool> {
    Ok(std::fs::read(path)?.iter().all(u8::is_ascii_whitespace))
}

/// Opens a data file. Binary tables are recognized by their magic bytes; anything
/// else is read as tab-separated text with an inferred layout.
///
/// When `expected` is given, text columns are aligned with it: by name when the file
/// has a header, otherwise by position when the field counts agree. Aligned columns
/// take the expected types.
pub fn open(path: &Path, expected: Option<&Schema>) -> Result<Arc<dyn DataView>> {
    if is_binary(path)? {
        return Ok(Arc::new(load_binary(path)?));
    }
    let widths = expected.and_then(widths);
    if let (Some(schema), Some(w)) = (expected, &widths) {
        if is_blank(path)? {
            return Ok(Arc::new(load_text(path, positional(schema, w))?));
        }
    }
    let mut config = infer_schema(path, '\t', SAMPLE_ROWS)?;
    if let Some(schema) = expected {
        if config.has_header {
            for col in &mut config.columns {
                if let Some(i) = schema.resolve(&col.name) {
                    col.ty = schema.columns()[i].ty;
                }
            }
        } else if let Some(w) = widths.filter(|w| w.iter().sum::<usize>() == config.columns.len()) {
            config = positional(schema, &w);
        }
    }
    Ok(Arc::new(load_text(path, config)?))
}
