use std::any::Any;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::{advanced_after_done, ActiveColumns, CursorState, DataView, RowCursor, RowPos};
use crate::dispatch_type;
use crate::error::{Error, Result};
use crate::schema::{Column, Schema};
use crate::value::{AnyGetter, ColumnValue, ColumnVec, Getter, Value};

pub(crate) type ColumnData = Arc<dyn Any + Send + Sync>;

/// Moves a column into the type-erased storage used by [`InMemoryView`].
pub(crate) fn column_data(ty: &crate::types::ColumnType, data: ColumnVec) -> ColumnData {
    dispatch_type!(*ty, T => Arc::new(take_vec::<T>(data)) as ColumnData)
}

/// A view over columns held in memory. Row count is known up front.
#[derive(Clone)]
pub struct InMemoryView {
    schema: Arc<Schema>,
    columns: Arc<Vec<ColumnData>>,
    rows: usize,
    rows_read: Arc<AtomicU64>,
}

impl std::fmt::Debug for InMemoryView {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InMemoryView")
            .field("schema", &self.schema.to_string())
            .field("rows", &self.rows)
            .finish()
    }
}

#[derive(Default)]
pub struct InMemoryViewBuilder {
    columns: Vec<Column>,
    data: Vec<ColumnData>,
    lens: Vec<usize>,
    error: Option<Error>,
}

impl InMemoryViewBuilder {
    pub fn column<T: ColumnValue>(mut self, name: &str, ty: crate::types::ColumnType, values: Vec<T>) -> Self {
        if self.error.is_none() {
            if !T::matches(&ty) {
                self.error = Some(Error::schema(format!(
                    "column '{name}' declared {ty} but given {} values",
                    T::NAME
                )));
            } else if let Err(e) = check_sizes(name, &ty, &values) {
                self.error = Some(e);
            }
        }
        self.columns.push(Column::new(name, ty));
        self.lens.push(values.len());
        self.data.push(Arc::new(values));
        self
    }

    pub fn build(self) -> Result<InMemoryView> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let rows = self.lens.first().copied().unwrap_or(0);
        if let Some((i, &n)) = self.lens.iter().enumerate().find(|(_, &n)| n != rows) {
            return Err(Error::schema(format!(
                "column '{}' has {n} rows, expected {rows}",
                self.columns[i].name
            )));
        }
        Ok(InMemoryView {
            schema: Arc::new(Schema::new(self.columns)),
            columns: Arc::new(self.data),
            rows,
            rows_read: Arc::new(AtomicU64::new(0)),
        })
    }
}

fn check_sizes<T: ColumnValue>(name: &str, ty: &crate::types::ColumnType, values: &[T]) -> Result<()> {
    if let crate::types::ColumnType::Vector { size: Some(n), .. } = ty {
        let n = n.get() as usize;
        for v in values {
            let len = v.vector_len().unwrap_or(n);
            if len != n {
                return Err(Error::shape(format!(
                    "column '{name}' is {ty} but holds a vector of length {len}"
                )));
            }
        }
    }
    Ok(())
}

impl InMemoryView {
    pub fn builder() -> InMemoryViewBuilder {
        InMemoryViewBuilder::default()
    }

    /// Builds a view from typed columns.
    pub fn from_columns(schema: Schema, columns: Vec<ColumnVec>) -> Result<InMemoryView> {
        if schema.len() != columns.len() {
            return Err(Error::schema(format!(
                "{} columns of data for a schema of {}",
                columns.len(),
                schema.len()
            )));
        }
        let mut b = InMemoryView::builder();
        for (c, data) in schema.columns().iter().zip(columns) {
            b = dispatch_type!(c.ty, T => {
                let values: Vec<T> = match T::column_vec(&data) {
                    Some(_) => take_vec::<T>(data),
                    None => return Err(Error::schema(format!("data for column '{}' does not match type {}", c.name, c.ty))),
                };
                b.column(&c.name, c.ty, values)
            });
        }
        b.build()
    }

    /// Builds a view from rows of dynamic values.
    pub fn from_rows(schema: Schema, rows: Vec<Vec<Value>>) -> Result<InMemoryView> {
        let mut cols: Vec<ColumnVec> = schema.columns().iter().map(|c| ColumnVec::for_type(&c.ty)).collect();
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::schema(format!("row {r} has {} values, expected {}", row.len(), schema.len())));
            }
            for (col, v) in cols.iter_mut().zip(row) {
                col.push_value(v)?;
            }
        }
        InMemoryView::from_columns(schema, cols)
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Total rows produced by all cursors over this view so far.
    pub fn rows_read(&self) -> u64 {
        self.rows_read.load(Ordering::Relaxed)
    }

    pub fn into_arc(self) -> Arc<dyn DataView> {
        Arc::new(self)
    }
}

fn take_vec<T: ColumnValue>(mut data: ColumnVec) -> Vec<T> {
    std::mem::take(T::column_vec_mut(&mut data).expect("checked by caller"))
}

impl DataView for InMemoryView {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn row_count(&self) -> Option<u64> {
        Some(self.rows as u64)
    }

    fn get_row_cursor(&self, active: &ActiveColumns) -> Result<Box<dyn RowCursor>> {
        active.check_len(&self.schema)?;
        Ok(Box::new(MemCursor {
            schema: self.schema.clone(),
            columns: self.columns.clone(),
            rows: self.rows,
            active: active.clone(),
            pos: RowPos::new(),
            rows_read: self.rows_read.clone(),
        }))
    }
}

struct MemCursor {
    schema: Arc<Schema>,
    columns: Arc<Vec<ColumnData>>,
    rows: usize,
    active: ActiveColumns,
    pos: Arc<RowPos>,
    rows_read: Arc<AtomicU64>,
}

impl RowCursor for MemCursor {
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
            return Err(advanced_after_done());
        }
        let next = self.pos.raw() + 1;
        if (next as usize) < self.rows {
            self.pos.set(next);
            self.rows_read.fetch_add(1, Ordering::Relaxed);
            Ok(true)
        } else {
            self.pos.set_done();
            Ok(false)
        }
    }

    fn is_active(&self, col: usize) -> bool {
        self.active.is_active(col)
    }

    fn get_any_getter(&mut self, col: usize) -> Result<AnyGetter> {
        let ty = self.schema.column(col)?.ty;
        let data = self.columns[col].clone();
        let pos = self.pos.clone();
        Ok(dispatch_type!(ty, T => typed_getter::<T>(data, pos)))
    }
}

pub(crate) fn typed_getter<T: ColumnValue>(data: ColumnData, pos: Arc<RowPos>) -> AnyGetter {
    let data: Arc<Vec<T>> = data.downcast().expect("column data matches its schema type");
    T::into_any_getter(Getter::new(move |dst: &mut T| {
        let r = pos.row()?;
        dst.clone_from(&data[r]);
        Ok(())
    }))
}
