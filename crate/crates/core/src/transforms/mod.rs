//! Column transforms: each appends its outputs to the input view, hiding same-named
//! input columns.

mod concat;
mod hash;
mod numeric;
mod onehot;
mod text;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use concat::Concat;
pub use hash::{murmur3_32, HASH_SEED};
pub use numeric::{MinMaxModel, MinMaxNormalizer, MissingHandler, MissingHandlerModel};
pub use onehot::HashOneHot;
pub use text::{
    char_ngram_indices, normalize_into, tokenize_into, word_ngram_indices, FeaturizeText, L2Normalize, NGramHash,
    NGramMode, NGramSpec, NormalizeText, Tokenize,
};

use crate::dataview::{DataView, MappedView, RowCursor, RowMapper};
use crate::error::{Error, Result};
use crate::pipeline::{ParamReader, ParamWriter, TransformerLoader};
use crate::schema::{Column, Schema};
use crate::types::ColumnType;
use crate::value::{AnyGetter, Item, I4_MISSING};

/// Archive loaders for every transform, keyed by op id.
pub(crate) const LOADERS: &[(&str, TransformerLoader)] = &[
    (concat::OP, Concat::load),
    (numeric::MISSING_OP, MissingHandlerModel::load),
    (numeric::MINMAX_OP, MinMaxModel::load),
    (onehot::OP, HashOneHot::load),
    (text::NORMALIZE_OP, NormalizeText::load),
    (text::TOKENIZE_OP, Tokenize::load),
    (text::NGRAM_OP, NGramHash::load),
    (text::L2_OP, L2Normalize::load),
    (text::FEATURIZE_OP, FeaturizeText::load),
];

/// Input columns and the names their outputs take. Outputs default to the input names.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnPairs {
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
}

impl ColumnPairs {
    pub fn same(columns: &[&str]) -> Self {
        ColumnPairs {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            outputs: Vec::new(),
        }
    }

    pub fn renamed(pairs: &[(&str, &str)]) -> Self {
        ColumnPairs {
            columns: pairs.iter().map(|p| p.0.to_string()).collect(),
            outputs: pairs.iter().map(|p| p.1.to_string()).collect(),
        }
    }

    pub(crate) fn validate(&self, op: &str) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::params(op, "at least one column is required"));
        }
        if !self.outputs.is_empty() && self.outputs.len() != self.columns.len() {
            return Err(Error::params(
                op,
                format!("{} columns but {} outputs", self.columns.len(), self.outputs.len()),
            ));
        }
        Ok(())
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.columns.iter().enumerate().map(|(i, c)| {
            let out = self.outputs.get(i).unwrap_or(c);
            (c.as_str(), out.as_str())
        })
    }

    pub(crate) fn save(&self, w: &mut ParamWriter) {
        let outputs: Vec<String> = self.pairs().map(|(_, o)| o.to_string()).collect();
        w.strs("columns", &self.columns).strs("outputs", &outputs);
    }

    pub(crate) fn load(r: &ParamReader) -> Result<Self> {
        let pairs = ColumnPairs {
            columns: r.strs("columns")?.to_vec(),
            outputs: r.strs("outputs")?.to_vec(),
        };
        if pairs.outputs.len() != pairs.columns.len() {
            return Err(Error::corruption("column and output lists differ in length"));
        }
        Ok(pairs)
    }
}

type MakeGetter = Box<dyn Fn(&mut dyn RowCursor) -> Result<AnyGetter> + Send + Sync>;

/// A [`RowMapper`] assembled from per-output getter factories.
#[derive(Default)]
pub(crate) struct FnMapper {
    columns: Vec<Column>,
    deps: Vec<Vec<usize>>,
    makers: Vec<MakeGetter>,
}

impl FnMapper {
    pub(crate) fn push(
        &mut self,
        column: Column,
        deps: Vec<usize>,
        make: impl Fn(&mut dyn RowCursor) -> Result<AnyGetter> + Send + Sync + 'static,
    ) {
        self.columns.push(column);
        self.deps.push(deps);
        self.makers.push(Box::new(make));
    }

    pub(crate) fn output_schema(&self, input: &Schema) -> Schema {
        input.appended(self.columns.iter().cloned())
    }

    pub(crate) fn apply(self, input: Arc<dyn DataView>) -> Arc<dyn DataView> {
        Arc::new(MappedView::new(input, Arc::new(self)))
    }
}

impl RowMapper for FnMapper {
    fn output_columns(&self) -> &[Column] {
        &self.columns
    }

    fn dependencies(&self, output: usize) -> Vec<usize> {
        self.deps[output].clone()
    }

    fn make_getter(&self, input: &mut dyn RowCursor, output: usize) -> Result<AnyGetter> {
        (self.makers[output])(input)
    }
}

/// Resolves `name` and checks its type, reporting `what` the operator expected.
pub(crate) fn require_column(
    schema: &Schema,
    name: &str,
    op: &str,
    what: &str,
    accept: impl Fn(&ColumnType) -> bool,
) -> Result<(usize, ColumnType)> {
    let index = schema.require(name)?;
    let ty = schema.column(index)?.ty;
    if !accept(&ty) {
        return Err(Error::schema(format!("{op}: column '{name}' has type {ty}, expected {what}")));
    }
    Ok((index, ty))
}

/// Items a numeric transform reads and writes. Missing values map to NaN and back.
pub(crate) trait NumItem: Item + Copy {
    fn to_f64(self) -> f64;
    fn from_f64(v: f64) -> Self;
}

impl NumItem for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl NumItem for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl NumItem for i32 {
    #[inline]
    fn to_f64(self) -> f64 {
        if self == I4_MISSING {
            f64::NAN
        } else {
            self as f64
        }
    }
    #[inline]
    fn from_f64(v: f64) -> Self {
        if v.is_nan() {
            I4_MISSING
        } else {
            v.round().clamp(i32::MIN as f64 + 1.0, i32::MAX as f64) as i32
        }
    }
}

/// Implements [`Estimator`](crate::pipeline::Estimator) for a stateless transform by
/// returning a clone of itself from `fit`.
macro_rules! stateless_estimator {
    ($t:ty) => {
        impl $crate::pipeline::Estimator for $t {
            fn op_id(&self) -> &'static str {
                <$t as $crate::pipeline::Transformer>::op_id(self)
            }
            fn output_schema(&self, input: &$crate::schema::Schema) -> $crate::error::Result<$crate::schema::Schema> {
                <$t as $crate::pipeline::Transformer>::output_schema(self, input)
            }
            fn is_trainable(&self) -> bool {
                false
            }
            fn fit(
                &self,
                _input: &std::sync::Arc<dyn $crate::dataview::DataView>,
                _ctx: &$crate::dataview::ExecContext,
            ) -> $crate::error::Result<std::sync::Arc<dyn $crate::pipeline::Transformer>> {
                Ok(std::sync::Arc::new(self.clone()))
            }
        }
    };
}
pub(crate) use stateless_estimator;
