use super::{consolidate, ActiveColumns, DataView, RowCursor, DEFAULT_BATCH_SIZE};
use crate::error::Result;

/// Scan parallelism shared by trainers, evaluators and savers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecContext {
    /// Cursor-set size used for scans; 1 scans serially on the calling thread.
    pub threads: usize,
    pub batch_size: usize,
}

impl Default for ExecContext {
    fn default() -> Self {
        ExecContext {
            threads: 1,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

impl ExecContext {
    pub fn with_threads(threads: usize) -> Self {
        ExecContext {
            threads: threads.max(1),
            ..Default::default()
        }
    }

    /// Opens a cursor whose rows arrive in serial order; with more than one thread the
    /// scan runs as a consolidated cursor set.
    pub fn open(&self, view: &dyn DataView, active: &ActiveColumns) -> Result<Box<dyn RowCursor>> {
        if self.threads <= 1 {
            view.get_row_cursor(active)
        } else {
            consolidate(view.get_row_cursor_set(active, self.threads, self.batch_size)?)
        }
    }

    /// Like [`open`](Self::open) over a list of column indices.
    pub fn open_columns(&self, view: &dyn DataView, columns: &[usize]) -> Result<Box<dyn RowCursor>> {
        let active = ActiveColumns::from_indices(view.schema().len(), columns.iter().copied())?;
        self.open(view, &active)
    }
}
