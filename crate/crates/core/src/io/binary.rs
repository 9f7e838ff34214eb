//! Chunked columnar binary tables. The layout is specified in `docs/binary-format.md`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use serde::Serialize;

use crate::dataview::{advanced_after_done, ActiveColumns, CursorState, DataView, RowCursor, RowPos};
use crate::error::{Error, ErrorKind, Result};
use crate::schema::{Column, Schema};
use crate::text::Text;
use crate::types::{ColumnType, ItemKind};
use crate::value::{AnyGetter, ColumnValue, ColumnVec, Getter, Item};
use crate::vbuffer::VBuffer;

pub const MAGIC: [u8; 8] = *b"DVBIN\0\x01\0";
pub const DEFAULT_CHUNK_ROWS: usize = 1 << 16;

const FLAG_RAW: u8 = 0;
const FLAG_DEFLATE: u8 = 1;
const DIR_ENTRY_BYTES: u64 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinaryOptions {
    pub chunk_rows: usize,
    /// Deflate chunks that shrink under compression.
    pub compress: bool,
}

impl Default for BinaryOptions {
    fn default() -> Self {
        BinaryOptions {
            chunk_rows: DEFAULT_CHUNK_ROWS,
            compress: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BinarySaveSummary {
    pub rows: u64,
    pub bytes: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ChunkEntry {
    offset: u64,
    length: u64,
    rows: u32,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let Some(end) = end else {
            return Err(Error::corruption("chunk ends before its values do"));
        };
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Little-endian encoding of one item.
trait BinItem: Item {
    fn put(&self, out: &mut Vec<u8>);
    fn get_into(r: &mut Cursor<'_>, dst: &mut Self) -> Result<()>;
}

impl BinItem for bool {
    fn put(&self, out: &mut Vec<u8>) {
        out.push(*self as u8);
    }
    fn get_into(r: &mut Cursor<'_>, dst: &mut Self) -> Result<()> {
        *dst = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(Error::corruption(format!("invalid boolean byte {b}"))),
        };
        Ok(())
    }
}

impl BinItem for i32 {
    fn put(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get_into(r: &mut Cursor<'_>, dst: &mut Self) -> Result<()> {
        *dst = r.u32()? as i32;
        Ok(())
    }
}

impl BinItem for f32 {
    fn put(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bits().to_le_bytes());
    }
    fn get_into(r: &mut Cursor<'_>, dst: &mut Self) -> Result<()> {
        *dst = f32::from_bits(r.u32()?);
        Ok(())
    }
}

impl BinItem for f64 {
    fn put(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_bits().to_le_bytes());
    }
    fn get_into(r: &mut Cursor<'_>, dst: &mut Self) -> Result<()> {
        *dst = f64::from_bits(r.u64()?);
        Ok(())
    }
}

impl BinItem for Text {
    fn put(&self, out: &mut Vec<u8>) {
        if self.is_missing() {
            out.extend_from_slice(&u32::MAX.to_le_bytes());
        } else {
            out.extend_from_slice(&(self.as_str().len() as u32).to_le_bytes());
            out.extend_from_slice(self.as_str().as_bytes());
        }
    }
    fn get_into(r: &mut Cursor<'_>, dst: &mut Self) -> Result<()> {
        let n = r.u32()?;
        if n == u32::MAX {
            dst.set_missing();
            return Ok(());
        }
        let bytes = r.take(n as usize)?;
        let s = std::str::from_utf8(bytes).map_err(|_| Error::corruption("text value is not UTF-8"))?;
        dst.set(s);
        Ok(())
    }
}

/// Encoding of one column value: items as above; vectors as representation byte,
/// length, stored count, indices when sparse, then the stored items.
trait BinValue: ColumnValue {
    fn put(&self, out: &mut Vec<u8>);
    fn get_into(r: &mut Cursor<'_>, dst: &mut Self) -> Result<()>;
}

macro_rules! scalar_bin {
    ($($t:ty),*) => {$(
        impl BinValue for $t {
            fn put(&self, out: &mut Vec<u8>) {
                BinItem::put(self, out)
            }
            fn get_into(r: &mut Cursor<'_>, dst: &mut Self) -> Result<()> {
                <$t as BinItem>::get_into(r, dst)
            }
        }
    )*};
}

scalar_bin!(bool, i32, f32, f64, Text);

impl<T: BinItem> BinValue for VBuffer<T>
where
    VBuffer<T>: ColumnValue,
{
    fn put(&self, out: &mut Vec<u8>) {
        out.push(if self.is_dense() { 0 } else { 1 });
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.count() as u32).to_le_bytes());
        if let Some(indices) = self.indices() {
            for i in indices {
                out.extend_from_slice(&i.to_le_bytes());
            }
        }
        for v in self.values() {
            v.put(out);
        }
    }

    fn get_into(r: &mut Cursor<'_>, dst: &mut Self) -> Result<()> {
        let repr = r.u8()?;
        let len = r.u32()? as usize;
        let count = r.u32()? as usize;
        match repr {
            0 => {
                if count != len {
                    return Err(Error::corruption("dense vector count differs from its length"));
                }
                dst.start_dense(len);
                for _ in 0..count {
                    let mut x = T::default();
                    T::get_into(r, &mut x)?;
                    dst.push_dense(x);
                }
            }
            1 => {
                if count > len {
                    return Err(Error::corruption("sparse vector stores more values than its length"));
                }
                let idx = r.take(count * 4)?;
                dst.start_sparse(len);
                let mut last: Option<u32> = None;
                for k in 0..count {
                    let i = u32::from_le_bytes(idx[k * 4..k * 4 + 4].try_into().expect("4 bytes"));
                    if i as usize >= len || last.is_some_and(|l| l >= i) {
                        return Err(Error::corruption("sparse vector indices out of order or range"));
                    }
                    last = Some(i);
                    let mut x = T::default();
                    T::get_into(r, &mut x)?;
                    dst.push_sparse(i as usize, x);
                }
            }
            b => return Err(Error::corruption(format!("invalid vector representation byte {b}"))),
        }
        Ok(())
    }
}

fn encode_column<T: BinValue>(col: &ColumnVec, rows: usize, out: &mut Vec<u8>) {
    let values = T::column_vec(col).expect("buffer matches column type");
    for v in &values[..rows] {
        v.put(out);
    }
}

fn decode_column<T: BinValue>(data: &[u8], rows: usize, col: &mut ColumnVec) -> Result<()> {
    let values = T::column_vec_mut(col).expect("buffer matches column type");
    let mut r = Cursor { data, pos: 0 };
    for i in 0..rows {
        if i < values.len() {
            T::get_into(&mut r, &mut values[i])?;
        } else {
            let mut x = T::default();
            T::get_into(&mut r, &mut x)?;
            values.push(x);
        }
    }
    values.truncate(rows);
    if r.pos != data.len() {
        return Err(Error::corruption("chunk holds trailing bytes"));
    }
    Ok(())
}

fn put_type(out: &mut Vec<u8>, ty: &ColumnType) {
    out.push(ty.item().tag());
    match ty {
        ColumnType::Scalar(_) => {
            out.push(0);
            out.extend_from_slice(&0u32.to_le_bytes());
        }
        ColumnType::Vector { size, .. } => {
            out.push(1);
            out.extend_from_slice(&size.map_or(0, |s| s.get()).to_le_bytes());
        }
    }
}

fn part_path(path: &Path) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(".part");
    PathBuf::from(s)
}

/// Writes `view` as a binary table with default options.
pub fn save_binary(view: &dyn DataView, path: impl AsRef<Path>) -> Result<BinarySaveSummary> {
    save_binary_with(view, path, &BinaryOptions::default())
}

/// Streams `view` into a binary table. Chunk data goes to a sibling `.part` file first
/// so that only one chunk per column is held in memory.
pub fn save_binary_with(view: &dyn DataView, path: impl AsRef<Path>, options: &BinaryOptions) -> Result<BinarySaveSummary> {
    if options.chunk_rows == 0 || options.chunk_rows > u32::MAX as usize {
        return Err(Error::invalid_argument("chunk size must be in 1..=2^32-1 rows"));
    }
    let path = path.as_ref();
    let schema = view.schema().clone();
    let all: Vec<usize> = (0..schema.len()).collect();
    let mut cursor = view.cursor(&all)?;
    let mut getters = all.iter().map(|&c| cursor.get_getter_dyn(c)).collect::<Result<Vec<_>>>()?;
    let mut bufs: Vec<ColumnVec> = schema.columns().iter().map(|c| ColumnVec::for_type(&c.ty)).collect();

    let part = part_path(path);
    let result = (|| {
        let mut data = BufWriter::new(File::create(&part)?);
        let mut written = 0u64;
        let mut dir: Vec<Vec<ChunkEntry>> = vec![Vec::new(); schema.len()];
        let mut rows = 0u64;
        let mut in_chunk = 0usize;
        let mut raw = Vec::new();
        let mut packed = Vec::new();
        let mut flush = |n: usize, bufs: &[ColumnVec], dir: &mut Vec<Vec<ChunkEntry>>, data: &mut BufWriter<File>| -> Result<()> {
            for (c, col) in schema.columns().iter().enumerate() {
                raw.clear();
                crate::dispatch_type!(col.ty, T => encode_column::<T>(&bufs[c], n, &mut raw));
                packed.clear();
                let mut flag = FLAG_RAW;
                if options.compress {
                    let mut enc = DeflateEncoder::new(std::mem::take(&mut packed), Compression::default());
                    enc.write_all(&raw)?;
                    packed = enc.finish()?;
                    if packed.len() < raw.len() {
                        flag = FLAG_DEFLATE;
                    }
                }
                let payload = if flag == FLAG_DEFLATE { &packed } else { &raw };
                data.write_all(&[flag])?;
                data.write_all(payload)?;
                let length = 1 + payload.len() as u64;
                dir[c].push(ChunkEntry {
                    offset: written,
                    length,
                    rows: n as u32,
                });
                written += length;
            }
            Ok(())
        };
        while cursor.move_next()? {
            for (g, b) in getters.iter_mut().zip(bufs.iter_mut()) {
                g.fill_into(b, in_chunk)?;
            }
            in_chunk += 1;
            rows += 1;
            if in_chunk == options.chunk_rows {
                flush(in_chunk, &bufs, &mut dir, &mut data)?;
                in_chunk = 0;
            }
        }
        if in_chunk > 0 {
            flush(in_chunk, &bufs, &mut dir, &mut data)?;
        }
        data.flush()?;
        drop(data);

        let chunks = dir.first().map_or(0, |d| d.len());
        let mut header = Vec::new();
        header.extend_from_slice(&MAGIC);
        header.extend_from_slice(&(schema.len() as u32).to_le_bytes());
        for c in schema.columns() {
            header.extend_from_slice(&(c.name.len() as u16).to_le_bytes());
            header.extend_from_slice(c.name.as_bytes());
            put_type(&mut header, &c.ty);
        }
        header.extend_from_slice(&rows.to_le_bytes());
        header.extend_from_slice(&(options.chunk_rows as u32).to_le_bytes());
        header.extend_from_slice(&(chunks as u32).to_le_bytes());
        let base = header.len() as u64 + DIR_ENTRY_BYTES * (schema.len() * chunks) as u64;
        for col in &dir {
            for e in col {
                header.extend_from_slice(&(base + e.offset).to_le_bytes());
                header.extend_from_slice(&e.length.to_le_bytes());
                header.extend_from_slice(&e.rows.to_le_bytes());
            }
        }
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&header)?;
        std::io::copy(&mut File::open(&part)?, &mut out)?;
        out.flush()?;
        Ok(BinarySaveSummary {
            rows,
            bytes: base + written,
        })
    })();
    let _ = std::fs::remove_file(&part);
    result
}

/// A binary table opened for reading. Only the header and chunk directory are read at
/// open; each cursor reads just the chunks of its active columns.
#[derive(Debug)]
pub struct BinaryTable {
    path: PathBuf,
    schema: Arc<Schema>,
    rows: u64,
    dir: Arc<Vec<Vec<ChunkEntry>>>,
    bytes_read: Arc<AtomicU64>,
}

struct Counted<R> {
    inner: R,
    n: u64,
}

impl<R: Read> Read for Counted<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.n += n as u64;
        Ok(n)
    }
}

fn read_exact_or_corrupt<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::corruption("file ends inside its header"),
        _ => e.into(),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0; 4];
    read_exact_or_corrupt(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0; 8];
    read_exact_or_corrupt(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Opens a binary table, validating its header and chunk directory.
pub fn load_binary(path: impl AsRef<Path>) -> Result<BinaryTable> {
    let path = path.as_ref().to_path_buf();
    let file = File::open(&path)?;
    let file_len = file.metadata()?.len();
    let mut r = Counted {
        inner: BufReader::with_capacity(8192, file),
        n: 0,
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("file is too short to be a binary table"))?;
    if magic[..6] != MAGIC[..6] || magic[7] != 0 {
        return Err(Error::format("not a binary table (bad magic)"));
    }
    if magic[6] != MAGIC[6] {
        return Err(Error::format(format!(
            "unsupported binary table version {} (this build reads version {})",
            magic[6], MAGIC[6]
        )));
    }
    let ncols = read_u32(&mut r)? as usize;
    let mut columns = Vec::with_capacity(ncols.min(1 << 16));
    for _ in 0..ncols {
        let mut len = [0u8; 2];
        read_exact_or_corrupt(&mut r, &mut len)?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact_or_corrupt(&mut r, &mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::corruption("column name is not UTF-8"))?;
        let mut t = [0u8; 2];
        read_exact_or_corrupt(&mut r, &mut t)?;
        let size = read_u32(&mut r)?;
        let item = ItemKind::from_tag(t[0]).ok_or_else(|| Error::corruption(format!("unknown item tag {}", t[0])))?;
        let ty = match (t[1], size) {
            (0, _) => ColumnType::Scalar(item),
            (1, 0) => ColumnType::var_vector(item),
            (1, n) => ColumnType::vector(item, n as usize)?,
            (b, _) => return Err(Error::corruption(format!("invalid vector flag {b}"))),
        };
        columns.push(Column::new(name, ty));
    }
    let rows = read_u64(&mut r)?;
    let _chunk_rows = read_u32(&mut r)?;
    let chunks = read_u32(&mut r)? as usize;
    let mut dir = Vec::with_capacity(ncols);
    for _ in 0..ncols {
        let mut col = Vec::with_capacity(chunks.min(1 << 20));
        for _ in 0..chunks {
            let offset = read_u64(&mut r)?;
            let length = read_u64(&mut r)?;
            let rows = read_u32(&mut r)?;
            col.push(ChunkEntry { offset, length, rows });
        }
        dir.push(col);
    }
    let header_len = r.n;
    for col in &dir {
        let mut total = 0u64;
        let mut prev_end = header_len;
        for (k, e) in col.iter().enumerate() {
            if e.offset < prev_end && k > 0 || e.offset < header_len {
                return Err(Error::corruption("chunk directory offsets are not increasing"));
            }
            if e.length == 0 || e.offset.saturating_add(e.length) > file_len {
                return Err(Error::corruption("chunk extends past the end of the file"));
            }
            if e.rows != dir[0][k].rows {
                return Err(Error::corruption("columns disagree on chunk row counts"));
            }
            prev_end = e.offset + e.length;
            total += e.rows as u64;
        }
        if total != rows {
            return Err(Error::corruption(format!("chunks hold {total} rows but the header says {rows}")));
        }
    }
    Ok(BinaryTable {
        path,
        schema: Arc::new(Schema::new(columns)),
        rows,
        dir: Arc::new(dir),
        bytes_read: Arc::new(AtomicU64::new(header_len)),
    })
}

impl BinaryTable {
    /// Bytes read from the file so far, header included.
    pub fn bytes_read(&self) -> u64 {
        self.bytes_read.load(Ordering::Relaxed)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl DataView for BinaryTable {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn row_count(&self) -> Option<u64> {
        Some(self.rows)
    }

    fn get_row_cursor(&self, active: &ActiveColumns) -> Result<Box<dyn RowCursor>> {
        active.check_len(&self.schema)?;
        let active_cols: Vec<usize> = active.indices().collect();
        let file = if active_cols.is_empty() { None } else { Some(File::open(&self.path)?) };
        let mut slot_of = vec![None; self.schema.len()];
        for (s, &c) in active_cols.iter().enumerate() {
            slot_of[c] = Some(s);
        }
        let decoded = active_cols
            .iter()
            .map(|&c| ColumnVec::for_type(&self.schema.columns()[c].ty))
            .collect();
        Ok(Box::new(BinaryCursor {
            schema: self.schema.clone(),
            active_cols,
            slot_of,
            file,
            dir: self.dir.clone(),
            rows: self.rows,
            next_chunk: 0,
            chunk_end: 0,
            shared: Arc::new(Mutex::new(Decoded {
                start: 0,
                cols: decoded,
            })),
            pos: RowPos::new(),
            raw: Vec::new(),
            inflated: Vec::new(),
            bytes_read: self.bytes_read.clone(),
        }))
    }
}

struct Decoded {
    start: u64,
    cols: Vec<ColumnVec>,
}

struct BinaryCursor {
    schema: Arc<Schema>,
    active_cols: Vec<usize>,
    slot_of: Vec<Option<usize>>,
    file: Option<File>,
    dir: Arc<Vec<Vec<ChunkEntry>>>,
    rows: u64,
    next_chunk: usize,
    chunk_end: u64,
    shared: Arc<Mutex<Decoded>>,
    pos: Arc<RowPos>,
    raw: Vec<u8>,
    inflated: Vec<u8>,
    bytes_read: Arc<AtomicU64>,
}

impl BinaryCursor {
    fn load_chunk(&mut self, start: u64) -> Result<()> {
        let k = self.next_chunk;
        let mut shared = self.shared.lock().expect("chunk lock");
        shared.start = start;
        for (slot, &c) in self.active_cols.iter().enumerate() {
            let e = self.dir[c][k];
            let file = self.file.as_mut().expect("file open when columns are active");
            file.seek(SeekFrom::Start(e.offset))?;
            self.raw.resize(e.length as usize, 0);
            file.read_exact(&mut self.raw).map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::corruption("truncated chunk"),
                _ => e.into(),
            })?;
            self.bytes_read.fetch_add(e.length, Ordering::Relaxed);
            let payload = match self.raw[0] {
                FLAG_RAW => &self.raw[1..],
                FLAG_DEFLATE => {
                    self.inflated.clear();
                    DeflateDecoder::new(&self.raw[1..])
                        .read_to_end(&mut self.inflated)
                        .map_err(|_| Error::corruption("chunk does not inflate"))?;
                    &self.inflated[..]
                }
                f => return Err(Error::corruption(format!("unknown chunk flag {f}"))),
            };
            let ty = self.schema.columns()[c].ty;
            crate::dispatch_type!(ty, T => decode_column::<T>(payload, e.rows as usize, &mut shared.cols[slot]))?;
        }
        self.chunk_end = start + self.dir.first().map_or(0, |d| d[k].rows as u64);
        self.next_chunk += 1;
        Ok(())
    }
}

impl RowCursor for BinaryCursor {
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
        let next = (self.pos.raw() + 1) as u64;
        if next >= self.rows {
            self.pos.set_done();
            return Ok(false);
        }
        if next >= self.chunk_end {
            if self.active_cols.is_empty() {
                self.chunk_end = self.rows;
            } else if let Err(e) = self.load_chunk(next) {
                self.pos.set_done();
                return Err(e);
            }
        }
        self.pos.set(next as i64);
        Ok(true)
    }

    fn is_active(&self, col: usize) -> bool {
        self.slot_of.get(col).is_some_and(|s| s.is_some())
    }

    fn get_any_getter(&mut self, col: usize) -> Result<AnyGetter> {
        let slot = self.slot_of[col].ok_or(ErrorKind::InactiveColumn(col))?;
        let ty = self.schema.columns()[col].ty;
        let shared = self.shared.clone();
        let pos = self.pos.clone();
        Ok(crate::dispatch_type!(ty, T => chunk_getter::<T>(shared, slot, pos)))
    }
}

fn chunk_getter<T: ColumnValue>(shared: Arc<Mutex<Decoded>>, slot: usize, pos: Arc<RowPos>) -> AnyGetter {
    T::into_any_getter(Getter::new(move |dst: &mut T| {
        let row = pos.row()? as u64;
        let d = shared.lock().expect("chunk lock");
        let col = T::column_vec(&d.cols[slot]).ok_or_else(|| Error::contract("chunk column type"))?;
        dst.clone_from(&col[(row - d.start) as usize]);
        Ok(())
    }))
}
