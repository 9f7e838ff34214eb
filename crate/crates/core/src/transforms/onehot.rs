use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::hash::slot;
use super::{require_column, stateless_estimator, ColumnPairs, FnMapper};
use crate::dataview::DataView;
use crate::error::{Error, Result};
use crate::pipeline::{ParamReader, ParamWriter, Transformer};
use crate::schema::{Column, Schema};
use crate::text::Text;
use crate::types::{ColumnType, ItemKind};
use crate::value::{ColumnValue, Getter};
use crate::vbuffer::VBuffer;

pub(super) const OP: &str = "transform.hash_onehot";

pub(crate) fn check_bits(op: &str, bits: u32) -> Result<()> {
    if !(1..=30).contains(&bits) {
        return Err(Error::params(op, format!("hash_bits must be in 1..=30, got {bits}")));
    }
    Ok(())
}

/// Maps each text value to a one-hot `Vector<R4, 2^hash_bits>` at its hash slot.
/// Missing and empty values map to the zero vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashOneHot {
    #[serde(flatten)]
    pub pairs: ColumnPairs,
    pub hash_bits: u32,
}

impl HashOneHot {
    pub fn new(pairs: ColumnPairs, hash_bits: u32) -> Result<Self> {
        let h = HashOneHot { pairs, hash_bits };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        self.pairs.validate(OP)?;
        check_bits(OP, self.hash_bits)
    }

    pub fn load(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        let h = HashOneHot {
            pairs: ColumnPairs::load(r)?,
            hash_bits: r.u32("hash_bits")?,
        };
        h.validate().map_err(|e| Error::corruption(e.to_string()))?;
        Ok(Arc::new(h))
    }

    fn plan(&self, schema: &Schema) -> Result<FnMapper> {
        self.validate()?;
        let bits = self.hash_bits;
        let dim = 1usize << bits;
        let out_ty = ColumnType::vector(ItemKind::R4, dim)?;
        let mut m = FnMapper::default();
        for (name, out) in self.pairs.pairs() {
            let (c, _) = require_column(schema, name, OP, "Text", |t| *t == ColumnType::TEXT)?;
            m.push(Column::new(out, out_ty), vec![c], move |cur| {
                let mut g = cur.get_getter::<Text>(c)?;
                let mut t = Text::default();
                Ok(VBuffer::<f32>::into_any_getter(Getter::new(move |dst: &mut VBuffer<f32>| {
                    g.get(&mut t)?;
                    dst.start_sparse(dim);
                    if !t.as_str().is_empty() {
                        dst.push_sparse(slot(t.as_str().as_bytes(), bits) as usize, 1.0);
                    }
                    Ok(())
                })))
            });
        }
        Ok(m)
    }
}

impl Transformer for HashOneHot {
    fn op_id(&self) -> &'static str {
        OP
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        Ok(self.plan(input)?.output_schema(input))
    }

    fn apply(&self, input: Arc<dyn DataView>) -> Result<Arc<dyn DataView>> {
        Ok(self.plan(input.schema())?.apply(input))
    }

    fn save_params(&self, w: &mut ParamWriter) {
        self.pairs.save(w);
        w.u32("hash_bits", self.hash_bits);
    }
}

stateless_estimator!(HashOneHot);
