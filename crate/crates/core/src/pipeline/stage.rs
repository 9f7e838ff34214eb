use std::sync::Arc;

use super::params::{ParamReader, ParamWriter};
use crate::dataview::{DataView, ExecContext};
use crate::error::Result;
use crate::schema::Schema;

/// A fitted, immutable pipeline stage: a pure function of its state and the input row.
pub trait Transformer: Send + Sync {
    /// Stable operator id; also the key used to load the stage from an archive.
    fn op_id(&self) -> &'static str;

    /// Schema of [`apply`](Self::apply)'s result, computed without touching data.
    fn output_schema(&self, input: &Schema) -> Result<Schema>;

    /// Lazily composes this stage over `input`.
    fn apply(&self, input: Arc<dyn DataView>) -> Result<Arc<dyn DataView>>;

    fn save_params(&self, w: &mut ParamWriter);
}

/// An unfitted pipeline stage.
pub trait Estimator: Send + Sync {
    fn op_id(&self) -> &'static str;

    /// Schema the fitted stage will produce for `input`, computed without touching data.
    fn output_schema(&self, input: &Schema) -> Result<Schema>;

    /// False for stages whose fit reads no data.
    fn is_trainable(&self) -> bool;

    fn fit(&self, input: &Arc<dyn DataView>, ctx: &ExecContext) -> Result<Arc<dyn Transformer>>;
}

/// Reconstructs a transformer from its saved params.
pub type TransformerLoader = fn(&ParamReader) -> Result<Arc<dyn Transformer>>;
