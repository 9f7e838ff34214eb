use std::sync::{Arc, Mutex};

use super::memory::{column_data, typed_getter, ColumnData};
use super::{advanced_after_done, ActiveColumns, CursorState, DataView, RowCursor, RowPos};
use crate::dispatch_type;
use crate::error::{Error, ErrorKind, Result};
use crate::schema::Schema;
use crate::value::{AnyGetter, ColumnValue, ColumnVec, Getter};

/// Default budget for materialized columns: 1 GiB.
pub const DEFAULT_CACHE_LIMIT: usize = 1 << 30;

/// A view that materializes its input's columns on the first complete scan.
///
/// The first cursor to finish a scan commits the columns it had active; later cursors
/// needing only committed columns read memory and never touch the input. A cursor that
/// needs an uncommitted column runs a supplementary pass over the input for just the
/// missing columns. Partial scans commit nothing.
pub struct CachedView {
    input: Arc<dyn DataView>,
    limit: usize,
    store: Arc<Mutex<Store>>,
}

struct Store {
    rows: Option<usize>,
    columns: Vec<Option<ColumnData>>,
    bytes: usize,
}

impl CachedView {
    pub fn new(input: Arc<dyn DataView>) -> Self {
        CachedView::with_limit(input, DEFAULT_CACHE_LIMIT)
    }

    /// Cache that fails a filling scan with a resource-limit error once the
    /// materialized data would exceed `limit` bytes.
    pub fn with_limit(input: Arc<dyn DataView>, limit: usize) -> Self {
        let n = input.schema().len();
        CachedView {
            input,
            limit,
            store: Arc::new(Mutex::new(Store {
                rows: None,
                columns: vec![None; n],
                bytes: 0,
            })),
        }
    }

    /// Approximate bytes held by committed columns.
    pub fn cached_bytes(&self) -> usize {
        self.store.lock().expect("cache lock").bytes
    }

    pub fn is_materialized(&self, col: usize) -> bool {
        let store = self.store.lock().expect("cache lock");
        store.rows.is_some() && store.columns.get(col).is_some_and(|c| c.is_some())
    }
}

impl DataView for CachedView {
    fn schema(&self) -> &Arc<Schema> {
        self.input.schema()
    }

    fn row_count(&self) -> Option<u64> {
        let rows = self.store.lock().expect("cache lock").rows;
        rows.map(|r| r as u64).or_else(|| self.input.row_count())
    }

    fn get_row_cursor(&self, active: &ActiveColumns) -> Result<Box<dyn RowCursor>> {
        let schema = self.input.schema().clone();
        active.check_len(&schema)?;
        let store = self.store.lock().expect("cache lock");
        let cached: Vec<Option<ColumnData>> = (0..schema.len())
            .map(|c| if active.is_active(c) { store.columns[c].clone() } else { None })
            .collect();
        let missing: Vec<usize> = active.indices().filter(|&c| cached[c].is_none()).collect();
        let known_rows = store.rows;
        let base_bytes = store.bytes;
        drop(store);

        if let (Some(rows), true) = (known_rows, missing.is_empty()) {
            return Ok(Box::new(ReadCursor {
                schema,
                cached,
                rows,
                pos: RowPos::new(),
            }));
        }

        let up = ActiveColumns::from_indices(schema.len(), missing.iter().copied())?;
        let mut input = self.input.get_row_cursor(&up)?;
        let mut fill = Vec::with_capacity(missing.len());
        let mut slot_of = vec![None; schema.len()];
        for (slot, &c) in missing.iter().enumerate() {
            fill.push(input.get_getter_dyn(c)?);
            slot_of[c] = Some(slot);
        }
        let building = missing.iter().map(|&c| ColumnVec::for_type(&schema.columns()[c].ty)).collect();
        Ok(Box::new(FillingCursor {
            schema,
            active: active.clone(),
            input,
            pos: RowPos::new(),
            rows: 0,
            cached,
            missing,
            slot_of,
            fill,
            building: Arc::new(Mutex::new(building)),
            bytes: base_bytes,
            limit: self.limit,
            store: self.store.clone(),
        }))
    }
}

struct ReadCursor {
    schema: Arc<Schema>,
    cached: Vec<Option<ColumnData>>,
    rows: usize,
    pos: Arc<RowPos>,
}

impl RowCursor for ReadCursor {
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
            Ok(true)
        } else {
            self.pos.set_done();
            Ok(false)
        }
    }

    fn is_active(&self, col: usize) -> bool {
        self.cached.get(col).is_some_and(|c| c.is_some())
    }

    fn get_any_getter(&mut self, col: usize) -> Result<AnyGetter> {
        let ty = self.schema.column(col)?.ty;
        let data = self.cached[col].clone().ok_or(ErrorKind::InactiveColumn(col))?;
        let pos = self.pos.clone();
        Ok(dispatch_type!(ty, T => typed_getter::<T>(data, pos)))
    }
}

struct FillingCursor {
    schema: Arc<Schema>,
    active: ActiveColumns,
    input: Box<dyn RowCursor>,
    pos: Arc<RowPos>,
    rows: usize,
    cached: Vec<Option<ColumnData>>,
    missing: Vec<usize>,
    slot_of: Vec<Option<usize>>,
    fill: Vec<AnyGetter>,
    building: Arc<Mutex<Vec<ColumnVec>>>,
    bytes: usize,
    limit: usize,
    store: Arc<Mutex<Store>>,
}

impl FillingCursor {
    fn commit(&mut self) -> Result<()> {
        let mut built = std::mem::take(&mut *self.building.lock().expect("cache lock"));
        let mut store = self.store.lock().expect("cache lock");
        if let Some(r) = store.rows {
            if r != self.rows {
                return Err(Error::corruption(format!(
                    "cached input produced {} rows after an earlier scan produced {r}",
                    self.rows
                )));
            }
        }
        store.rows = Some(self.rows);
        for (slot, &c) in self.missing.iter().enumerate() {
            if store.columns[c].is_none() {
                let data = std::mem::replace(&mut built[slot], ColumnVec::Bool(Vec::new()));
                store.bytes += data.approx_bytes(self.rows);
                store.columns[c] = Some(column_data(&self.schema.columns()[c].ty, data));
            }
        }
        Ok(())
    }
}

impl RowCursor for FillingCursor {
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
        if !self.input.move_next()? {
            self.pos.set_done();
            self.commit()?;
            return Ok(false);
        }
        let row = self.rows;
        {
            let mut building = self.building.lock().expect("cache lock");
            for (g, col) in self.fill.iter_mut().zip(building.iter_mut()) {
                g.fill_into(col, row)?;
                self.bytes += col.value_bytes(row);
            }
        }
        if self.bytes > self.limit {
            self.pos.set_done();
            return Err(ErrorKind::ResourceLimit(format!(
                "cache needs more than its limit of {} bytes",
                self.limit
            ))
            .into());
        }
        self.rows += 1;
        self.pos.set(row as i64);
        Ok(true)
    }

    fn is_active(&self, col: usize) -> bool {
        self.active.is_active(col)
    }

    fn get_any_getter(&mut self, col: usize) -> Result<AnyGetter> {
        let ty = self.schema.column(col)?.ty;
        let pos = self.pos.clone();
        if let Some(data) = self.cached[col].clone() {
            return Ok(dispatch_type!(ty, T => typed_getter::<T>(data, pos)));
        }
        let slot = self.slot_of[col].ok_or(ErrorKind::InactiveColumn(col))?;
        let building = self.building.clone();
        Ok(dispatch_type!(ty, T => building_getter::<T>(building, slot, pos)))
    }
}

fn building_getter<T: ColumnValue>(building: Arc<Mutex<Vec<ColumnVec>>>, slot: usize, pos: Arc<RowPos>) -> AnyGetter {
    T::into_any_getter(Getter::new(move |dst: &mut T| {
        let row = pos.row()?;
        let building = building.lock().expect("cache lock");
        let col = T::column_vec(&building[slot]).ok_or_else(|| Error::contract("cache column type"))?;
        dst.clone_from(&col[row]);
        Ok(())
    }))
}
