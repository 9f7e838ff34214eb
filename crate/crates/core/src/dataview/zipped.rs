use std::sync::Arc;

use super::{advanced_after_done, ActiveColumns, CursorState, DataView, RowCursor, SetInfo};
use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::value::AnyGetter;

/// Row-aligned horizontal join: the columns of `left` followed by those of `right`.
///
/// Both inputs must produce the same number of rows in the same order, which holds when
/// they are derived from one source. A length mismatch is reported when a scan reaches
/// it.
#[derive(Clone)]
pub struct ZipView {
    left: Arc<dyn DataView>,
    right: Arc<dyn DataView>,
    schema: Arc<Schema>,
}

impl ZipView {
    pub fn new(left: Arc<dyn DataView>, right: Arc<dyn DataView>) -> Result<Self> {
        if let (Some(a), Some(b)) = (left.row_count(), right.row_count()) {
            if a != b {
                return Err(Error::shape(format!("cannot zip views of {a} and {b} rows")));
            }
        }
        let schema = Arc::new(left.schema().appended(right.schema().columns().iter().cloned()));
        Ok(ZipView { left, right, schema })
    }

    fn split(&self, active: &ActiveColumns) -> Result<(ActiveColumns, ActiveColumns)> {
        active.check_len(&self.schema)?;
        let nl = self.left.schema().len();
        let l = ActiveColumns::from_indices(nl, active.indices().filter(|&c| c < nl))?;
        let r = ActiveColumns::from_indices(
            self.right.schema().len(),
            active.indices().filter(|&c| c >= nl).map(|c| c - nl),
        )?;
        Ok((l, r))
    }
}

impl DataView for ZipView {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn row_count(&self) -> Option<u64> {
        self.left.row_count().or(self.right.row_count())
    }

    fn get_row_cursor(&self, active: &ActiveColumns) -> Result<Box<dyn RowCursor>> {
        let (l, r) = self.split(active)?;
        Ok(Box::new(ZipCursor {
            left: self.left.get_row_cursor(&l)?,
            right: self.right.get_row_cursor(&r)?,
            schema: self.schema.clone(),
            n_left: self.left.schema().len(),
            info: None,
        }))
    }

    fn get_row_cursor_set(
        &self,
        active: &ActiveColumns,
        n: usize,
        batch_size: usize,
    ) -> Result<Vec<Box<dyn RowCursor>>> {
        let (l, r) = self.split(active)?;
        let left = self.left.get_row_cursor_set(&l, n, batch_size)?;
        let right = self.right.get_row_cursor_set(&r, n, batch_size)?;
        Ok(left
            .into_iter()
            .zip(right)
            .map(|(left, right)| {
                let info = left.set_info();
                Box::new(ZipCursor {
                    left,
                    right,
                    schema: self.schema.clone(),
                    n_left: self.left.schema().len(),
                    info,
                }) as Box<dyn RowCursor>
            })
            .collect())
    }

    fn can_rescan(&self) -> bool {
        self.left.can_rescan() && self.right.can_rescan()
    }
}

struct ZipCursor {
    left: Box<dyn RowCursor>,
    right: Box<dyn RowCursor>,
    schema: Arc<Schema>,
    n_left: usize,
    info: Option<SetInfo>,
}

impl RowCursor for ZipCursor {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn state(&self) -> CursorState {
        self.left.state()
    }

    fn position(&self) -> i64 {
        self.left.position()
    }

    fn move_next(&mut self) -> Result<bool> {
        if self.left.state() == CursorState::Done {
            return Err(advanced_after_done());
        }
        let a = self.left.move_next()?;
        let b = self.right.move_next()?;
        if a != b || (a && self.left.position() != self.right.position()) {
            return Err(Error::shape("zipped views are not row-aligned"));
        }
        Ok(a)
    }

    fn is_active(&self, col: usize) -> bool {
        if col < self.n_left {
            self.left.is_active(col)
        } else {
            self.right.is_active(col - self.n_left)
        }
    }

    fn get_any_getter(&mut self, col: usize) -> Result<AnyGetter> {
        if col < self.n_left {
            self.left.get_any_getter(col)
        } else {
            self.right.get_any_getter(col - self.n_left)
        }
    }

    fn set_info(&self) -> Option<SetInfo> {
        self.info
    }
}
