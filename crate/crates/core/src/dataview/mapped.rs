use std::sync::Arc;

use super::{ActiveColumns, CursorState, DataView, RowCursor, SetInfo};
use crate::error::Result;
use crate::schema::{Column, Schema};
use crate::value::AnyGetter;

/// Per-row computation of appended columns from input columns.
///
/// Output `i` lands at schema index `input_len + i`. A mapper is shared by every cursor
/// of its view, so any per-cursor state lives inside the getters it builds.
pub trait RowMapper: Send + Sync {
    fn output_columns(&self) -> &[Column];

    /// Input columns that output `output` reads.
    fn dependencies(&self, output: usize) -> Vec<usize>;

    /// Getter for output `output`. Every dependency is active on `input`.
    fn make_getter(&self, input: &mut dyn RowCursor, output: usize) -> Result<AnyGetter>;
}

/// A view that passes its input through and appends the columns of a [`RowMapper`].
///
/// Opening a cursor activates upstream only the pass-through columns requested plus
/// the dependencies of the requested outputs.
#[derive(Clone)]
pub struct MappedView {
    input: Arc<dyn DataView>,
    mapper: Arc<dyn RowMapper>,
    schema: Arc<Schema>,
}

impl MappedView {
    pub fn new(input: Arc<dyn DataView>, mapper: Arc<dyn RowMapper>) -> Self {
        let schema = Arc::new(input.schema().appended(mapper.output_columns().iter().cloned()));
        MappedView { input, mapper, schema }
    }

    pub fn input(&self) -> &Arc<dyn DataView> {
        &self.input
    }

    fn upstream_active(&self, active: &ActiveColumns) -> Result<ActiveColumns> {
        active.check_len(&self.schema)?;
        let n_in = self.input.schema().len();
        let mut up = ActiveColumns::none(n_in);
        for c in active.indices() {
            if c < n_in {
                up.set(c);
            } else {
                for d in self.mapper.dependencies(c - n_in) {
                    up.set(d);
                }
            }
        }
        Ok(up)
    }

    fn wrap(&self, input: Box<dyn RowCursor>, active: &ActiveColumns) -> Box<dyn RowCursor> {
        Box::new(MappedCursor {
            input,
            mapper: self.mapper.clone(),
            schema: self.schema.clone(),
            active: active.clone(),
            n_in: self.input.schema().len(),
        })
    }
}

impl DataView for MappedView {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn row_count(&self) -> Option<u64> {
        self.input.row_count()
    }

    fn get_row_cursor(&self, active: &ActiveColumns) -> Result<Box<dyn RowCursor>> {
        let up = self.upstream_active(active)?;
        Ok(self.wrap(self.input.get_row_cursor(&up)?, active))
    }

    fn get_row_cursor_set(
        &self,
        active: &ActiveColumns,
        n: usize,
        batch_size: usize,
    ) -> Result<Vec<Box<dyn RowCursor>>> {
        let up = self.upstream_active(active)?;
        Ok(self
            .input
            .get_row_cursor_set(&up, n, batch_size)?
            .into_iter()
            .map(|c| self.wrap(c, active))
            .collect())
    }

    fn can_rescan(&self) -> bool {
        self.input.can_rescan()
    }
}

struct MappedCursor {
    input: Box<dyn RowCursor>,
    mapper: Arc<dyn RowMapper>,
    schema: Arc<Schema>,
    active: ActiveColumns,
    n_in: usize,
}

impl RowCursor for MappedCursor {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn state(&self) -> CursorState {
        self.input.state()
    }

    fn position(&self) -> i64 {
        self.input.position()
    }

    fn move_next(&mut self) -> Result<bool> {
        self.input.move_next()
    }

    fn is_active(&self, col: usize) -> bool {
        self.active.is_active(col)
    }

    fn get_any_getter(&mut self, col: usize) -> Result<AnyGetter> {
        if col < self.n_in {
            self.input.get_any_getter(col)
        } else {
            self.mapper.make_getter(&mut *self.input, col - self.n_in)
        }
    }

    fn set_info(&self) -> Option<SetInfo> {
        self.input.set_info()
    }
}

#[cfg(test)]
mod tests {
    use super::super::{collect_rows, consolidate, InMemoryView};
    use super::*;
    use crate::types::ColumnType;
    use crate::value::{ColumnValue, Getter, Value};

    struct Double;

    impl RowMapper for Double {
        fn output_columns(&self) -> &[Column] {
            static COLS: std::sync::OnceLock<Vec<Column>> = std::sync::OnceLock::new();
            COLS.get_or_init(|| vec![Column::new("y", ColumnType::R4)])
        }
        fn dependencies(&self, _: usize) -> Vec<usize> {
            vec![1]
        }
        fn make_getter(&self, input: &mut dyn RowCursor, _: usize) -> Result<AnyGetter> {
            let mut x = input.get_getter::<f32>(1)?;
            Ok(f32::into_any_getter(Getter::new(move |d: &mut f32| {
                x.get(d)?;
                *d *= 2.0;
                Ok(())
            })))
        }
    }

    fn view(rows: usize) -> (InMemoryView, MappedView) {
        let src = InMemoryView::builder()
            .column("a", ColumnType::I4, (0..rows as i32).collect())
            .column("x", ColumnType::R4, (0..rows).map(|i| i as f32).collect())
            .build()
            .unwrap();
        let m = MappedView::new(Arc::new(src.clone()), Arc::new(Double));
        (src, m)
    }

    #[test]
    fn appends_and_passes_through() {
        let (_, m) = view(3);
        assert_eq!(m.schema().len(), 3);
        let rows = collect_rows(&m, &[0, 2]).unwrap();
        assert_eq!(rows[2], vec![Value::I4(2), Value::R4(4.0)]);
    }

    #[test]
    fn only_dependencies_are_activated() {
        let (_, m) = view(3);
        let c = m.get_row_cursor(&ActiveColumns::from_indices(3, [2]).unwrap()).unwrap();
        let up = m.upstream_active(&ActiveColumns::from_indices(3, [2]).unwrap()).unwrap();
        assert_eq!(up.indices().collect::<Vec<_>>(), vec![1]);
        assert!(!c.is_active(0));
    }

    #[test]
    fn cursor_set_through_mapper() {
        let (_, m) = view(500);
        let serial = collect_rows(&m, &[0, 2]).unwrap();
        let active = ActiveColumns::from_indices(3, [0, 2]).unwrap();
        let mut c = consolidate(m.get_row_cursor_set(&active, 3, 16).unwrap()).unwrap();
        let mut g = c.get_getter::<f32>(2).unwrap();
        let mut i = 0;
        while c.move_next().unwrap() {
            let mut y = 0.0;
            g.get(&mut y).unwrap();
            assert_eq!(Value::R4(y), serial[i][1]);
            i += 1;
        }
        assert_eq!(i, 500);
    }
}
