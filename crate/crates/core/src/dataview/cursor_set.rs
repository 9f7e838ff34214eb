//! Parallel scans: splitting a view into a cursor set and consolidating the set back
//! into one cursor with serial row order.
//!
//! Rows are grouped into batches of `batch_size` consecutive rows; batch `b` belongs to
//! member `b % n`. The consolidator drives every member on its own thread, copies the
//! active columns into batch buffers and emits the batches by sequence number, so its
//! output is identical to a serial scan for any `n`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;

use super::{advanced_after_done, ActiveColumns, CursorState, DataView, RowCursor, RowPos};
use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::types::ColumnType;
use crate::value::{AnyGetter, ColumnValue, ColumnVec, Getter};

pub const DEFAULT_BATCH_SIZE: usize = 64;

/// Batches each worker may have in flight ahead of the consolidator.
const WORKER_QUEUE: usize = 2;

/// Membership of a cursor in a cursor set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SetInfo {
    pub set_id: u64,
    pub index: usize,
    pub count: usize,
    pub batch_size: usize,
}

static NEXT_SET_ID: AtomicU64 = AtomicU64::new(1);

/// Generic splitter: every member opens its own cursor over `view` and skips the rows
/// of batches assigned to other members. Skipping a row costs only the advance since
/// getters are never called for it.
pub fn split_by_skipping<V: DataView + ?Sized>(
    view: &V,
    active: &ActiveColumns,
    n: usize,
    batch_size: usize,
) -> Result<Vec<Box<dyn RowCursor>>> {
    if n == 0 {
        return Err(Error::invalid_argument("cursor set size must be at least 1"));
    }
    if batch_size == 0 {
        return Err(Error::invalid_argument("batch size must be at least 1"));
    }
    let set_id = NEXT_SET_ID.fetch_add(1, Ordering::Relaxed);
    (0..n)
        .map(|index| {
            let inner = view.get_row_cursor(active)?;
            Ok(Box::new(SkippingCursor {
                inner,
                info: SetInfo {
                    set_id,
                    index,
                    count: n,
                    batch_size,
                },
                done: false,
            }) as Box<dyn RowCursor>)
        })
        .collect()
}

struct SkippingCursor {
    inner: Box<dyn RowCursor>,
    info: SetInfo,
    done: bool,
}

impl RowCursor for SkippingCursor {
    fn schema(&self) -> &Arc<Schema> {
        self.inner.schema()
    }

    fn state(&self) -> CursorState {
        if self.done {
            CursorState::Done
        } else {
            self.inner.state()
        }
    }

    fn position(&self) -> i64 {
        if self.done {
            -1
        } else {
            self.inner.position()
        }
    }

    fn move_next(&mut self) -> Result<bool> {
        if self.done {
            return Err(advanced_after_done());
        }
        loop {
            if !self.inner.move_next()? {
                self.done = true;
                return Ok(false);
            }
            let batch = self.inner.position() as usize / self.info.batch_size;
            if batch % self.info.count == self.info.index {
                return Ok(true);
            }
        }
    }

    fn is_active(&self, col: usize) -> bool {
        self.inner.is_active(col)
    }

    fn get_any_getter(&mut self, col: usize) -> Result<AnyGetter> {
        self.inner.get_any_getter(col)
    }

    fn set_info(&self) -> Option<SetInfo> {
        Some(self.info)
    }
}

/// Merges a cursor set into one cursor whose rows come out in serial order.
///
/// A single cursor is returned unchanged. Cursors from different sets, or an incomplete
/// set, are rejected.
pub fn consolidate(mut cursors: Vec<Box<dyn RowCursor>>) -> Result<Box<dyn RowCursor>> {
    if cursors.is_empty() {
        return Err(Error::invalid_argument("cannot consolidate an empty cursor set"));
    }
    if cursors.len() == 1 {
        return Ok(cursors.pop().expect("one cursor"));
    }
    let infos = cursors
        .iter()
        .map(|c| {
            c.set_info()
                .ok_or_else(|| Error::invalid_argument("cursor does not belong to a cursor set"))
        })
        .collect::<Result<Vec<_>>>()?;
    let first = infos[0];
    if infos.iter().any(|i| i.set_id != first.set_id) {
        return Err(Error::invalid_argument("cursors come from different cursor sets"));
    }
    if first.count != cursors.len() {
        return Err(Error::invalid_argument(format!(
            "cursor set has {} members but {} were given",
            first.count,
            cursors.len()
        )));
    }
    let mut seen = vec![false; first.count];
    for i in &infos {
        if std::mem::replace(&mut seen[i.index], true) {
            return Err(Error::invalid_argument("cursor set member given twice"));
        }
    }
    if cursors.iter().any(|c| c.state() != CursorState::NotStarted) {
        return Err(Error::invalid_argument("cursor set members were already advanced"));
    }
    cursors.sort_by_key(|c| c.set_info().map(|i| i.index));

    let schema = cursors[0].schema().clone();
    let active: Vec<usize> = (0..schema.len()).filter(|&c| cursors[0].is_active(c)).collect();
    let mut slot_of = vec![None; schema.len()];
    for (slot, &c) in active.iter().enumerate() {
        slot_of[c] = Some(slot);
    }
    let types: Vec<ColumnType> = active.iter().map(|&c| schema.columns()[c].ty).collect();
    Ok(Box::new(ConsolidatedCursor {
        schema,
        slot_of,
        types,
        active,
        pending: Some(cursors),
        workers: Vec::new(),
        shared: Arc::new(Shared {
            current: Mutex::new(Batch::placeholder()),
            row: RowPos::new(),
        }),
        next_seq: 0,
        row_in_batch: 0,
        position: -1,
        state: CursorState::NotStarted,
    }))
}

struct Batch {
    seq: u64,
    rows: usize,
    positions: Vec<i64>,
    cols: Vec<ColumnVec>,
}

impl Batch {
    fn placeholder() -> Batch {
        Batch {
            seq: u64::MAX,
            rows: 0,
            positions: Vec::new(),
            cols: Vec::new(),
        }
    }

    fn new(types: &[ColumnType]) -> Batch {
        Batch {
            seq: 0,
            rows: 0,
            positions: Vec::new(),
            cols: types.iter().map(ColumnVec::for_type).collect(),
        }
    }
}

struct Shared {
    current: Mutex<Batch>,
    /// Row index within the current batch.
    row: Arc<RowPos>,
}

struct Worker {
    rx: Receiver<Result<Batch>>,
    recycle: SyncSender<Batch>,
}

struct ConsolidatedCursor {
    schema: Arc<Schema>,
    slot_of: Vec<Option<usize>>,
    types: Vec<ColumnType>,
    active: Vec<usize>,
    pending: Option<Vec<Box<dyn RowCursor>>>,
    workers: Vec<Worker>,
    shared: Arc<Shared>,
    next_seq: u64,
    row_in_batch: usize,
    position: i64,
    state: CursorState,
}

impl ConsolidatedCursor {
    fn start(&mut self) -> Result<()> {
        let members = self.pending.take().expect("started once");
        for (k, member) in members.into_iter().enumerate() {
            let (tx, rx) = mpsc::sync_channel(WORKER_QUEUE);
            let (recycle_tx, recycle_rx) = mpsc::sync_channel(WORKER_QUEUE + 2);
            let active = self.active.clone();
            let types = self.types.clone();
            thread::Builder::new()
                .name(format!("dvml-cursor-{k}"))
                .spawn(move || run_worker(member, active, types, tx, recycle_rx))
                .map_err(Error::from)?;
            self.workers.push(Worker {
                rx,
                recycle: recycle_tx,
            });
        }
        Ok(())
    }

    fn finish(&mut self) {
        self.state = CursorState::Done;
        self.position = -1;
        self.shared.row.set_done();
        self.workers.clear();
    }
}

fn run_worker(
    mut cursor: Box<dyn RowCursor>,
    active: Vec<usize>,
    types: Vec<ColumnType>,
    tx: SyncSender<Result<Batch>>,
    recycle: Receiver<Batch>,
) {
    let mut getters = match active
        .iter()
        .map(|&c| cursor.get_getter_dyn(c))
        .collect::<Result<Vec<_>>>()
    {
        Ok(g) => g,
        Err(e) => {
            let _ = tx.send(Err(e));
            return;
        }
    };
    let batch_size = cursor.set_info().map_or(usize::MAX, |i| i.batch_size) as u64;
    let mut batch: Option<Batch> = None;
    loop {
        match cursor.move_next() {
            Err(e) => {
                let _ = tx.send(Err(e));
                return;
            }
            Ok(false) => {
                if let Some(b) = batch.take() {
                    let _ = tx.send(Ok(b));
                }
                return;
            }
            Ok(true) => {}
        }
        let pos = cursor.position();
        let seq = pos as u64 / batch_size;
        if batch.as_ref().is_none_or(|b| b.seq != seq) {
            if let Some(b) = batch.take() {
                if tx.send(Ok(b)).is_err() {
                    return;
                }
            }
            let mut b = match recycle.try_recv() {
                Ok(b) => b,
                Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => Batch::new(&types),
            };
            b.seq = seq;
            b.rows = 0;
            b.positions.clear();
            batch = Some(b);
        }
        let b = batch.as_mut().expect("batch started");
        for (g, col) in getters.iter_mut().zip(b.cols.iter_mut()) {
            if let Err(e) = g.fill_into(col, b.rows) {
                let _ = tx.send(Err(e));
                return;
            }
        }
        b.positions.push(pos);
        b.rows += 1;
    }
}

impl RowCursor for ConsolidatedCursor {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn state(&self) -> CursorState {
        self.state
    }

    fn position(&self) -> i64 {
        self.position
    }

    fn move_next(&mut self) -> Result<bool> {
        match self.state {
            CursorState::Done => return Err(advanced_after_done()),
            CursorState::NotStarted => {
                self.start()?;
                self.state = CursorState::Active;
                self.row_in_batch = usize::MAX;
            }
            CursorState::Active => {}
        }
        let next = self.row_in_batch.wrapping_add(1);
        {
            let current = self.shared.current.lock().expect("batch lock");
            if next < current.rows {
                self.row_in_batch = next;
                self.position = current.positions[next];
                self.shared.row.set(next as i64);
                return Ok(true);
            }
        }
        let n = self.workers.len() as u64;
        let worker = &self.workers[(self.next_seq % n) as usize];
        let batch = match worker.rx.recv() {
            Err(_) => {
                self.finish();
                return Ok(false);
            }
            Ok(Err(e)) => {
                self.finish();
                return Err(e);
            }
            Ok(Ok(b)) => b,
        };
        if batch.seq != self.next_seq {
            self.finish();
            return Err(Error::contract(format!(
                "consolidator expected batch {} but received {}",
                self.next_seq, batch.seq
            )));
        }
        let old = std::mem::replace(&mut *self.shared.current.lock().expect("batch lock"), batch);
        if old.seq != u64::MAX {
            let _ = self.workers[(old.seq % n) as usize].recycle.try_send(old);
        }
        self.next_seq += 1;
        self.row_in_batch = 0;
        let current = self.shared.current.lock().expect("batch lock");
        self.position = current.positions[0];
        self.shared.row.set(0);
        Ok(true)
    }

    fn is_active(&self, col: usize) -> bool {
        self.slot_of.get(col).is_some_and(|s| s.is_some())
    }

    fn get_any_getter(&mut self, col: usize) -> Result<AnyGetter> {
        let slot = self.slot_of[col].ok_or(crate::error::ErrorKind::InactiveColumn(col))?;
        let ty = self.types[slot];
        let shared = self.shared.clone();
        Ok(crate::dispatch_type!(ty, T => batch_getter::<T>(shared, slot)))
    }
}

fn batch_getter<T: ColumnValue>(shared: Arc<Shared>, slot: usize) -> AnyGetter {
    T::into_any_getter(Getter::new(move |dst: &mut T| {
        let row = shared.row.row()?;
        let batch = shared.current.lock().expect("batch lock");
        let col = T::column_vec(&batch.cols[slot]).ok_or_else(|| Error::contract("batch column type"))?;
        dst.clone_from(&col[row]);
        Ok(())
    }))
}
