use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{stateless_estimator, FnMapper};
use crate::dataview::{DataView, RowCursor};
use crate::error::{Error, Result};
use crate::pipeline::{ParamReader, ParamWriter, Transformer};
use crate::schema::{Column, Schema};
use crate::types::{ColumnType, ItemKind};
use crate::value::{AnyGetter, ColumnValue, Getter, Item};
use crate::vbuffer::VBuffer;

pub(super) const OP: &str = "transform.concat";

/// Concatenates scalar and vector columns of one item kind into a vector column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concat {
    pub inputs: Vec<String>,
    pub output: String,
}

impl Concat {
    pub fn new(inputs: &[&str], output: &str) -> Result<Self> {
        let c = Concat {
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            output: output.to_string(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::params(OP, "at least one input column is required"));
        }
        Ok(())
    }

    pub fn load(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        Ok(Arc::new(Concat {
            inputs: r.strs("inputs")?.to_vec(),
            output: r.str("output")?.to_string(),
        }))
    }

    fn plan(&self, schema: &Schema) -> Result<FnMapper> {
        self.validate()?;
        let mut cols = Vec::with_capacity(self.inputs.len());
        let mut kind: Option<ItemKind> = None;
        let mut size = Some(0usize);
        for name in &self.inputs {
            let index = schema.require(name)?;
            let ty = schema.column(index)?.ty;
            match kind {
                None => kind = Some(ty.item()),
                Some(k) if k != ty.item() => {
                    return Err(Error::schema(format!(
                        "{OP}: cannot concatenate {} column '{name}' with {} columns",
                        ty.item().name(),
                        k.name()
                    )))
                }
                _ => {}
            }
            size = size.zip(ty.value_count()).map(|(a, b)| a + b);
            cols.push((index, ty));
        }
        let kind = kind.expect("inputs are non-empty");
        let out_ty = match size {
            Some(n) => ColumnType::vector(kind, n)?,
            None => ColumnType::var_vector(kind),
        };
        let deps: Vec<usize> = cols.iter().map(|c| c.0).collect();
        let mut m = FnMapper::default();
        m.push(Column::new(&self.output, out_ty), deps, move |cur| match kind {
            ItemKind::Bool => concat_getter::<bool>(cur, &cols),
            ItemKind::I4 => concat_getter::<i32>(cur, &cols),
            ItemKind::R4 => concat_getter::<f32>(cur, &cols),
            ItemKind::R8 => concat_getter::<f64>(cur, &cols),
            ItemKind::Text => concat_getter::<crate::text::Text>(cur, &cols),
        });
        Ok(m)
    }
}

enum Part<T: Item> {
    Scalar(Getter<T>, T),
    Vector(Getter<VBuffer<T>>, VBuffer<T>),
}

fn concat_getter<T: Item>(cur: &mut dyn RowCursor, cols: &[(usize, ColumnType)]) -> Result<AnyGetter>
where
    VBuffer<T>: ColumnValue,
{
    let mut parts = cols
        .iter()
        .map(|&(c, ty)| {
            Ok(if ty.is_vector() {
                Part::Vector(cur.get_getter::<VBuffer<T>>(c)?, VBuffer::default())
            } else {
                Part::Scalar(cur.get_getter::<T>(c)?, T::default())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VBuffer::<T>::into_any_getter(Getter::new(move |dst: &mut VBuffer<T>| {
        let mut len = 0;
        for p in parts.iter_mut() {
            match p {
                Part::Scalar(g, v) => {
                    g.get(v)?;
                    len += 1;
                }
                Part::Vector(g, v) => {
                    g.get(v)?;
                    len += v.len();
                }
            }
        }
        dst.start_sparse(len);
        let mut offset = 0;
        for p in parts.iter() {
            match p {
                Part::Scalar(_, v) => {
                    if !v.is_default() {
                        dst.push_sparse(offset, v.clone());
                    }
                    offset += 1;
                }
                Part::Vector(_, v) => {
                    for (i, x) in v.iter_stored() {
                        if !x.is_default() {
                            dst.push_sparse(offset + i, x.clone());
                        }
                    }
                    offset += v.len();
                }
            }
        }
        dst.finish_auto();
        Ok(())
    })))
}

impl Transformer for Concat {
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
        w.strs("inputs", &self.inputs).str("output", &self.output);
    }
}

stateless_estimator!(Concat);
