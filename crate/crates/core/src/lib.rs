//! Streaming machine-learning pipelines over lazy, schematized data views.
//!
//! Data flows through [`DataView`]s: immutable descriptions of tables whose rows are
//! produced on demand by forward-only cursors. Loaders, transforms and learners compose
//! views; nothing is read until a cursor advances.

pub mod error;
pub mod schema;
pub mod text;
pub mod types;
pub mod value;
pub mod vbuffer;

pub mod bench;
pub mod dataview;
pub mod evaluate;
pub mod graph;
pub mod io;
pub mod learners;
pub mod pipeline;
pub mod transforms;

pub use dataview::{ActiveColumns, DataView, ExecContext, RowCursor};
pub use error::{Error, ErrorKind, Result};
pub use schema::{Column, Schema};
pub use text::Text;
pub use types::{ColumnType, ItemKind};
pub use value::{AnyGetter, ColumnValue, ColumnVec, Getter, Item, Value};
pub use vbuffer::VBuffer;
