//! Lazy, immutable, schematized data views and the cursors that scan them.
//!
//! A [`DataView`] describes data; it never holds a scan position. Scanning happens
//! through a [`RowCursor`] opened with a set of active columns. Values are read through
//! [`Getter`]s acquired from the cursor once and then called per row.
//!
//! Building views never touches source data; only advancing a cursor does, and only
//! the work needed for the active columns is performed.

mod cache;
mod context;
mod cursor_set;
mod mapped;
mod memory;
mod zipped;

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

pub use cache::{CachedView, DEFAULT_CACHE_LIMIT};
pub use context::ExecContext;
pub use cursor_set::{consolidate, split_by_skipping, SetInfo, DEFAULT_BATCH_SIZE};
pub use mapped::{MappedView, RowMapper};
pub use memory::{InMemoryView, InMemoryViewBuilder};
pub use zipped::ZipView;

use crate::error::{Error, ErrorKind, Result};
use crate::schema::Schema;
use crate::value::{AnyGetter, ColumnValue, Getter};

/// An immutable, lazily evaluated table.
pub trait DataView: Send + Sync {
    fn schema(&self) -> &Arc<Schema>;

    /// Row count when it is known without scanning.
    fn row_count(&self) -> Option<u64> {
        None
    }

    /// Opens a cursor positioned before the first row. No source data is read until the
    /// cursor is advanced.
    fn get_row_cursor(&self, active: &ActiveColumns) -> Result<Box<dyn RowCursor>>;

    /// Opens `n` cursors that together produce every row exactly once. Rows are split
    /// into batches of `batch_size`; batch `b` goes to cursor `b % n`.
    fn get_row_cursor_set(
        &self,
        active: &ActiveColumns,
        n: usize,
        batch_size: usize,
    ) -> Result<Vec<Box<dyn RowCursor>>> {
        split_by_skipping(self, active, n, batch_size)
    }

    /// False for sources that can only be scanned once. Multi-pass consumers cache
    /// such views first.
    fn can_rescan(&self) -> bool {
        true
    }
}

impl<'a> dyn DataView + 'a {
    /// Opens a cursor over the given column indices.
    pub fn cursor(&self, columns: &[usize]) -> Result<Box<dyn RowCursor>> {
        let active = ActiveColumns::from_indices(self.schema().len(), columns.iter().copied())?;
        self.get_row_cursor(&active)
    }

    /// Opens a cursor set over the given column indices.
    pub fn cursor_set(&self, columns: &[usize], n: usize) -> Result<Vec<Box<dyn RowCursor>>> {
        let active = ActiveColumns::from_indices(self.schema().len(), columns.iter().copied())?;
        self.get_row_cursor_set(&active, n, DEFAULT_BATCH_SIZE)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CursorState {
    NotStarted,
    Active,
    Done,
}

/// A forward-only window over the rows of a view.
pub trait RowCursor: Send {
    fn schema(&self) -> &Arc<Schema>;

    fn state(&self) -> CursorState;

    /// Index of the current row in the source order; -1 before the first advance.
    fn position(&self) -> i64;

    /// Advances to the next row. Returns `false` once the rows are exhausted; calling
    /// again after that is a contract violation.
    fn move_next(&mut self) -> Result<bool>;

    fn is_active(&self, col: usize) -> bool;

    /// Type-erased getter for an active column. Implementations may assume the column
    /// index is in range and active; [`check_getter`] does that for callers.
    fn get_any_getter(&mut self, col: usize) -> Result<AnyGetter>;

    /// Membership in a cursor set, if this cursor came from one.
    fn set_info(&self) -> Option<SetInfo> {
        None
    }
}

impl<'a> dyn RowCursor + 'a {
    /// Typed getter for `col`. Fails when the column is inactive or its type does not
    /// match `T`; these checks are not repeated per call.
    pub fn get_getter<T: ColumnValue>(&mut self, col: usize) -> Result<Getter<T>> {
        check_getter(self.schema(), col, |c| self.is_active(c))?;
        let column = self.schema().column(col)?;
        if !T::matches(&column.ty) {
            return Err(ErrorKind::TypeMismatch {
                column: column.name.clone(),
                actual: column.ty.to_string(),
                requested: T::NAME.to_string(),
            }
            .into());
        }
        let any = self.get_any_getter(col)?;
        T::from_any_getter(any).ok_or_else(|| Error::contract("cursor returned a getter of the wrong type"))
    }

    /// Type-erased getter after the same checks as [`get_getter`](Self::get_getter).
    pub fn get_getter_dyn(&mut self, col: usize) -> Result<AnyGetter> {
        check_getter(self.schema(), col, |c| self.is_active(c))?;
        self.get_any_getter(col)
    }
}

/// Range and activity check shared by cursor implementations.
pub fn check_getter(schema: &Schema, col: usize, is_active: impl Fn(usize) -> bool) -> Result<()> {
    if col >= schema.len() {
        return Err(ErrorKind::InvalidColumn {
            index: col,
            len: schema.len(),
        }
        .into());
    }
    if !is_active(col) {
        return Err(ErrorKind::InactiveColumn(col).into());
    }
    Ok(())
}

/// The set of columns a cursor must be able to produce.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveColumns {
    flags: Vec<bool>,
}

impl ActiveColumns {
    pub fn none(len: usize) -> Self {
        ActiveColumns {
            flags: vec![false; len],
        }
    }

    pub fn all(len: usize) -> Self {
        ActiveColumns {
            flags: vec![true; len],
        }
    }

    pub fn from_indices(len: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut a = ActiveColumns::none(len);
        for i in indices {
            if i >= len {
                return Err(ErrorKind::InvalidColumn { index: i, len }.into());
            }
            a.flags[i] = true;
        }
        Ok(a)
    }

    /// Number of schema columns this set ranges over.
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.flags.iter().any(|&f| f)
    }

    #[inline]
    pub fn is_active(&self, i: usize) -> bool {
        self.flags.get(i).copied().unwrap_or(false)
    }

    pub fn set(&mut self, i: usize) {
        self.flags[i] = true;
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i)
    }

    pub(crate) fn check_len(&self, schema: &Schema) -> Result<()> {
        if self.flags.len() != schema.len() {
            return Err(Error::invalid_argument(format!(
                "active set ranges over {} columns but the schema has {}",
                self.flags.len(),
                schema.len()
            )));
        }
        Ok(())
    }
}

const POS_DONE: i64 = i64::MIN;

/// Row position shared between a source cursor and its getters.
///
/// Getters check it on every call so that reading before the first advance or after
/// the end reports a contract violation.
#[derive(Debug)]
pub(crate) struct RowPos(AtomicI64);

impl RowPos {
    pub(crate) fn new() -> Arc<Self> {
        Arc::new(RowPos(AtomicI64::new(-1)))
    }

    #[inline]
    pub(crate) fn raw(&self) -> i64 {
        self.0.load(Ordering::Relaxed)
    }

    #[inline]
    pub(crate) fn set(&self, row: i64) {
        self.0.store(row, Ordering::Relaxed)
    }

    pub(crate) fn set_done(&self) {
        self.0.store(POS_DONE, Ordering::Relaxed)
    }

    /// Current row, or a contract violation when there is none.
    #[inline]
    pub(crate) fn row(&self) -> Result<usize> {
        let p = self.raw();
        if p >= 0 {
            Ok(p as usize)
        } else {
            Err(not_on_row(p))
        }
    }

    pub(crate) fn state(&self) -> CursorState {
        match self.raw() {
            -1 => CursorState::NotStarted,
            POS_DONE => CursorState::Done,
            _ => CursorState::Active,
        }
    }

    pub(crate) fn position(&self) -> i64 {
        match self.raw() {
            POS_DONE => -1,
            p => p,
        }
    }
}

#[cold]
fn not_on_row(p: i64) -> Error {
    if p == POS_DONE {
        Error::contract("getter called after the cursor finished")
    } else {
        Error::contract("getter called before the first move_next")
    }
}

#[cold]
pub(crate) fn advanced_after_done() -> Error {
    Error::contract("move_next called after the cursor finished")
}

/// Collects every active column of every row into memory. Meant for tests and small
/// views.
pub fn collect_rows(view: &dyn DataView, columns: &[usize]) -> Result<Vec<Vec<crate::value::Value>>> {
    let mut cursor = view.cursor(columns)?;
    let mut getters = columns
        .iter()
        .map(|&c| cursor.get_getter_dyn(c))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    while cursor.move_next()? {
        let mut row = Vec::with_capacity(columns.len());
        for (g, &c) in getters.iter_mut().zip(columns) {
            let mut v = crate::value::Value::missing_for(&view.schema().column(c)?.ty);
            g.fill_value(&mut v)?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Counts rows with an empty active set.
pub fn count_rows(view: &dyn DataView) -> Result<u64> {
    let mut cursor = view.get_row_cursor(&ActiveColumns::none(view.schema().len()))?;
    let mut n = 0;
    while cursor.move_next()? {
        n += 1;
    }
    Ok(n)
}
