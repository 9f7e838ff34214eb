//! Loaders that expose files as data views and savers that write views out.

mod binary;
mod cell;
mod infer;
mod text;
mod tsv;

pub use binary::{
    load_binary, save_binary, save_binary_with, BinaryOptions, BinarySaveSummary, BinaryTable, DEFAULT_CHUNK_ROWS,
    MAGIC,
};
pub use infer::infer_schema;
pub use text::{
    load_text, save_text, save_text_columns, BadLinePolicy, FieldSource, LoaderColumn, LoaderStats, TextLoader, TextLoaderConfig,
    TextSaveSummary,
};
