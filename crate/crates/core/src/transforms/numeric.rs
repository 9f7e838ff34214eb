//! Trainable per-slot numeric transforms: mean imputation and min-max scaling.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{require_column, ColumnPairs, FnMapper, NumItem};
use crate::dataview::{DataView, ExecContext, RowCursor};
use crate::error::{Error, Result};
use crate::pipeline::{Estimator, ParamReader, ParamWriter, Transformer};
use crate::schema::{Column, Schema};
use crate::types::{ColumnType, ItemKind};
use crate::value::{AnyGetter, ColumnValue, Getter};
use crate::vbuffer::VBuffer;

pub(super) const MISSING_OP: &str = "transform.missing_handler";
pub(super) const MINMAX_OP: &str = "transform.minmax";

fn is_numeric(ty: &ColumnType) -> bool {
    ty.item().is_numeric()
}

/// Resolves every input of `pairs` as a numeric column.
fn resolve(schema: &Schema, pairs: &ColumnPairs, op: &str) -> Result<Vec<(usize, ColumnType)>> {
    pairs.validate(op)?;
    pairs
        .pairs()
        .map(|(c, _)| require_column(schema, c, op, "a numeric scalar or vector", is_numeric))
        .collect()
}

type DenseReader = Box<dyn FnMut(&mut Vec<f64>) -> Result<()> + Send>;

/// Reads the current row of a numeric column as dense f64 slots, missing as NaN.
fn dense_reader(cur: &mut dyn RowCursor, col: usize, ty: ColumnType) -> Result<DenseReader> {
    fn scalar<T: NumItem>(cur: &mut dyn RowCursor, col: usize) -> Result<DenseReader> {
        let mut g = cur.get_getter::<T>(col)?;
        let mut x = T::default();
        Ok(Box::new(move |out| {
            g.get(&mut x)?;
            out.clear();
            out.push(x.to_f64());
            Ok(())
        }))
    }
    fn vector<T: NumItem>(cur: &mut dyn RowCursor, col: usize) -> Result<DenseReader>
    where
        VBuffer<T>: ColumnValue,
    {
        let mut g = cur.get_getter::<VBuffer<T>>(col)?;
        let mut v = VBuffer::default();
        Ok(Box::new(move |out| {
            g.get(&mut v)?;
            dense_f64(&v, out);
            Ok(())
        }))
    }
    match ty {
        ColumnType::Scalar(ItemKind::I4) => scalar::<i32>(cur, col),
        ColumnType::Scalar(ItemKind::R4) => scalar::<f32>(cur, col),
        ColumnType::Scalar(ItemKind::R8) => scalar::<f64>(cur, col),
        ColumnType::Vector { item: ItemKind::I4, .. } => vector::<i32>(cur, col),
        ColumnType::Vector { item: ItemKind::R4, .. } => vector::<f32>(cur, col),
        ColumnType::Vector { item: ItemKind::R8, .. } => vector::<f64>(cur, col),
        _ => Err(Error::schema(format!("column {col} of type {ty} is not numeric"))),
    }
}

fn dense_f64<T: NumItem>(v: &VBuffer<T>, out: &mut Vec<f64>) {
    out.clear();
    if v.is_dense() {
        out.extend(v.values().iter().map(|x| x.to_f64()));
    } else {
        out.resize(v.len(), 0.0);
        for (i, x) in v.iter_stored() {
            out[i] = x.to_f64();
        }
    }
}

/// Per-slot aggregates over non-missing values.
#[derive(Clone, Debug, Default)]
struct SlotStats {
    sum: Vec<f64>,
    count: Vec<u64>,
    min: Vec<f64>,
    max: Vec<f64>,
}

impl SlotStats {
    fn with_slots(n: usize) -> Self {
        let mut s = SlotStats::default();
        s.grow(n);
        s
    }

    fn grow(&mut self, n: usize) {
        if self.sum.len() < n {
            self.sum.resize(n, 0.0);
            self.count.resize(n, 0);
            self.min.resize(n, f64::INFINITY);
            self.max.resize(n, f64::NEG_INFINITY);
        }
    }

    fn add(&mut self, row: &[f64]) {
        self.grow(row.len());
        for (i, &x) in row.iter().enumerate() {
            if !x.is_nan() {
                self.sum[i] += x;
                self.count[i] += 1;
                self.min[i] = self.min[i].min(x);
                self.max[i] = self.max[i].max(x);
            }
        }
    }

    fn means(&self) -> Vec<f64> {
        self.sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect()
    }

    /// Min and max per slot; NaN for slots with no values.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let pick = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(&self.count)
                .map(|(&x, &n)| if n == 0 { f64::NAN } else { x })
                .collect()
        };
        (pick(&self.min), pick(&self.max))
    }
}

/// One data pass accumulating slot statistics for each column.
fn scan(view: &dyn DataView, ctx: &ExecContext, cols: &[(usize, ColumnType)]) -> Result<Vec<SlotStats>> {
    let indices: Vec<usize> = cols.iter().map(|c| c.0).collect();
    let mut cur = ctx.open_columns(view, &indices)?;
    let mut readers = cols
        .iter()
        .map(|&(c, ty)| dense_reader(&mut *cur, c, ty))
        .collect::<Result<Vec<_>>>()?;
    let mut stats: Vec<SlotStats> = cols
        .iter()
        .map(|(_, ty)| SlotStats::with_slots(ty.value_count().unwrap_or(0)))
        .collect();
    let mut row = Vec::new();
    while cur.move_next()? {
        for (r, s) in readers.iter_mut().zip(&mut stats) {
            r(&mut row)?;
            s.add(&row);
        }
    }
    Ok(stats)
}

/// Checks a fitted slot table against the column it is applied to.
fn check_slots(op: &str, name: &str, ty: &ColumnType, slots: usize) -> Result<()> {
    match ty.value_count() {
        Some(n) if n != slots => Err(Error::shape(format!(
            "{op}: column '{name}' has {n} slots but the transform was fitted on {slots}"
        ))),
        _ => Ok(()),
    }
}

/// Replaces missing numeric values with the per-slot mean of the training data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MissingHandler {
    pub pairs: ColumnPairs,
}

impl MissingHandler {
    pub fn new(pairs: ColumnPairs) -> Self {
        MissingHandler { pairs }
    }
}

impl Estimator for MissingHandler {
    fn op_id(&self) -> &'static str {
        MISSING_OP
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        let cols = resolve(input, &self.pairs, MISSING_OP)?;
        Ok(input.appended(self.pairs.pairs().zip(cols).map(|((_, out), (_, ty))| Column::new(out, ty))))
    }

    fn is_trainable(&self) -> bool {
        true
    }

    fn fit(&self, input: &Arc<dyn DataView>, ctx: &ExecContext) -> Result<Arc<dyn Transformer>> {
        let cols = resolve(input.schema(), &self.pairs, MISSING_OP)?;
        let stats = scan(&**input, ctx, &cols)?;
        Ok(Arc::new(MissingHandlerModel {
            pairs: self.pairs.clone(),
            means: stats.iter().map(SlotStats::means).collect(),
        }))
    }
}

/// Fitted [`MissingHandler`].
#[derive(Clone, Debug, PartialEq)]
pub struct MissingHandlerModel {
    pairs: ColumnPairs,
    means: Vec<Vec<f64>>,
}

impl MissingHandlerModel {
    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn load(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        let pairs = ColumnPairs::load(r)?;
        let means = (0..pairs.columns.len())
            .map(|k| r.f64s(&format!("means.{k}")).map(<[f64]>::to_vec))
            .collect::<Result<_>>()?;
        Ok(Arc::new(MissingHandlerModel { pairs, means }))
    }

    fn plan(&self, schema: &Schema) -> Result<FnMapper> {
        let cols = resolve(schema, &self.pairs, MISSING_OP)?;
        let mut m = FnMapper::default();
        for (((name, out), (c, ty)), means) in self.pairs.pairs().zip(cols).zip(&self.means) {
            if !ty.is_vector() || ty.is_known_size_vector() {
                check_slots(MISSING_OP, name, &ty, means.len())?;
            }
            let means = Arc::new(means.clone());
            m.push(Column::new(out, ty), vec![c], move |cur| impute_getter(cur, c, ty, means.clone()));
        }
        Ok(m)
    }
}

fn impute_getter(cur: &mut dyn RowCursor, col: usize, ty: ColumnType, means: Arc<Vec<f64>>) -> Result<AnyGetter> {
    fn scalar<T: NumItem>(cur: &mut dyn RowCursor, col: usize, means: Arc<Vec<f64>>) -> Result<AnyGetter> {
        let mut g = cur.get_getter::<T>(col)?;
        let fill = T::from_f64(means.first().copied().unwrap_or(0.0));
        Ok(T::into_any_getter(Getter::new(move |dst: &mut T| {
            g.get(dst)?;
            if dst.to_f64().is_nan() {
                *dst = fill;
            }
            Ok(())
        })))
    }
    fn vector<T: NumItem>(cur: &mut dyn RowCursor, col: usize, means: Arc<Vec<f64>>) -> Result<AnyGetter>
    where
        VBuffer<T>: ColumnValue,
    {
        let mut g = cur.get_getter::<VBuffer<T>>(col)?;
        Ok(VBuffer::<T>::into_any_getter(Getter::new(move |dst: &mut VBuffer<T>| {
            g.get(dst)?;
            dst.for_each_stored_mut(|i, x| {
                if x.to_f64().is_nan() {
                    *x = T::from_f64(means.get(i).copied().unwrap_or(0.0));
                }
            });
            Ok(())
        })))
    }
    match ty {
        ColumnType::Scalar(ItemKind::I4) => scalar::<i32>(cur, col, means),
        ColumnType::Scalar(ItemKind::R4) => scalar::<f32>(cur, col, means),
        ColumnType::Scalar(ItemKind::R8) => scalar::<f64>(cur, col, means),
        ColumnType::Vector { item: ItemKind::I4, .. } => vector::<i32>(cur, col, means),
        ColumnType::Vector { item: ItemKind::R4, .. } => vector::<f32>(cur, col, means),
        ColumnType::Vector { item: ItemKind::R8, .. } => vector::<f64>(cur, col, means),
        _ => Err(Error::schema(format!("column {col} of type {ty} is not numeric"))),
    }
}

impl Transformer for MissingHandlerModel {
    fn op_id(&self) -> &'static str {
        MISSING_OP
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        Ok(self.plan(input)?.output_schema(input))
    }

    fn apply(&self, input: Arc<dyn DataView>) -> Result<Arc<dyn DataView>> {
        Ok(self.plan(input.schema())?.apply(input))
    }

    fn save_params(&self, w: &mut ParamWriter) {
        self.pairs.save(w);
        for (k, m) in self.means.iter().enumerate() {
            w.f64s(&format!("means.{k}"), m);
        }
    }
}

/// Rescales each numeric slot to `[0, 1]` using the training minimum and maximum.
/// Integer inputs produce `R4` outputs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MinMaxNormalizer {
    pub pairs: ColumnPairs,
}

impl MinMaxNormalizer {
    pub fn new(pairs: ColumnPairs) -> Self {
        MinMaxNormalizer { pairs }
    }
}

fn scaled_type(ty: ColumnType) -> ColumnType {
    let item = if ty.item() == ItemKind::R8 { ItemKind::R8 } else { ItemKind::R4 };
    match ty {
        ColumnType::Scalar(_) => ColumnType::Scalar(item),
        ColumnType::Vector { size, .. } => ColumnType::Vector { item, size },
    }
}

impl Estimator for MinMaxNormalizer {
    fn op_id(&self) -> &'static str {
        MINMAX_OP
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        let cols = resolve(input, &self.pairs, MINMAX_OP)?;
        Ok(input.appended(
            self.pairs
                .pairs()
                .zip(cols)
                .map(|((_, out), (_, ty))| Column::new(out, scaled_type(ty))),
        ))
    }

    fn is_trainable(&self) -> bool {
        true
    }

    fn fit(&self, input: &Arc<dyn DataView>, ctx: &ExecContext) -> Result<Arc<dyn Transformer>> {
        let cols = resolve(input.schema(), &self.pairs, MINMAX_OP)?;
        let stats = scan(&**input, ctx, &cols)?;
        let (mins, maxs) = stats.iter().map(SlotStats::bounds).unzip();
        Ok(Arc::new(MinMaxModel {
            pairs: self.pairs.clone(),
            mins,
            maxs,
        }))
    }
}

/// Fitted [`MinMaxNormalizer`].
#[derive(Clone, Debug, PartialEq)]
pub struct MinMaxModel {
    pairs: ColumnPairs,
    mins: Vec<Vec<f64>>,
    maxs: Vec<Vec<f64>>,
}

/// Affine map of one slot; `scale == 0` marks a degenerate slot mapped to 0.
#[derive(Clone, Copy, Debug)]
struct Affine {
    min: f64,
    scale: f64,
}

impl Affine {
    fn new(min: f64, max: f64) -> Self {
        if min.is_nan() || max.is_nan() || max <= min {
            Affine { min: 0.0, scale: 0.0 }
        } else {
            Affine {
                min,
                scale: max - min,
            }
        }
    }

    #[inline]
    fn map(self, x: f64) -> f64 {
        if x.is_nan() {
            x
        } else if self.scale == 0.0 {
            0.0
        } else {
            (x - self.min) / self.scale
        }
    }
}

const DEGENERATE: Affine = Affine { min: 0.0, scale: 0.0 };

impl MinMaxModel {
    pub fn bounds(&self, column: usize) -> (&[f64], &[f64]) {
        (&self.mins[column], &self.maxs[column])
    }

    pub fn load(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        let pairs = ColumnPairs::load(r)?;
        let mut mins = Vec::new();
        let mut maxs = Vec::new();
        for k in 0..pairs.columns.len() {
            let lo = r.f64s(&format!("min.{k}"))?;
            let hi = r.f64s(&format!("max.{k}"))?;
            if lo.len() != hi.len() {
                return Err(Error::corruption("min and max tables differ in length"));
            }
            mins.push(lo.to_vec());
            maxs.push(hi.to_vec());
        }
        Ok(Arc::new(MinMaxModel { pairs, mins, maxs }))
    }

    fn plan(&self, schema: &Schema) -> Result<FnMapper> {
        let cols = resolve(schema, &self.pairs, MINMAX_OP)?;
        let mut m = FnMapper::default();
        for (k, ((name, out), (c, ty))) in self.pairs.pairs().zip(cols).enumerate() {
            if !ty.is_vector() || ty.is_known_size_vector() {
                check_slots(MINMAX_OP, name, &ty, self.mins[k].len())?;
            }
            let maps: Arc<Vec<Affine>> = Arc::new(
                self.mins[k]
                    .iter()
                    .zip(&self.maxs[k])
                    .map(|(&lo, &hi)| Affine::new(lo, hi))
                    .collect(),
            );
            m.push(Column::new(out, scaled_type(ty)), vec![c], move |cur| {
                scale_getter(cur, c, ty, maps.clone())
            });
        }
        Ok(m)
    }
}

fn scale_getter(cur: &mut dyn RowCursor, col: usize, ty: ColumnType, maps: Arc<Vec<Affine>>) -> Result<AnyGetter> {
    fn scalar<T: NumItem, U: NumItem>(cur: &mut dyn RowCursor, col: usize, maps: Arc<Vec<Affine>>) -> Result<AnyGetter> {
        let mut g = cur.get_getter::<T>(col)?;
        let map = maps.first().copied().unwrap_or(DEGENERATE);
        let mut x = T::default();
        Ok(U::into_any_getter(Getter::new(move |dst: &mut U| {
            g.get(&mut x)?;
            *dst = U::from_f64(map.map(x.to_f64()));
            Ok(())
        })))
    }
    fn vector<T: NumItem, U: NumItem>(cur: &mut dyn RowCursor, col: usize, maps: Arc<Vec<Affine>>) -> Result<AnyGetter>
    where
        VBuffer<T>: ColumnValue,
        VBuffer<U>: ColumnValue,
    {
        let mut g = cur.get_getter::<VBuffer<T>>(col)?;
        let mut src = VBuffer::default();
        let mut dense = Vec::new();
        Ok(VBuffer::<U>::into_any_getter(Getter::new(move |dst: &mut VBuffer<U>| {
            g.get(&mut src)?;
            dense_f64(&src, &mut dense);
            dst.start_dense(dense.len());
            for (i, &x) in dense.iter().enumerate() {
                let map = maps.get(i).copied().unwrap_or(DEGENERATE);
                dst.push_dense(U::from_f64(map.map(x)));
            }
            dst.finish_auto();
            Ok(())
        })))
    }
    match ty {
        ColumnType::Scalar(ItemKind::I4) => scalar::<i32, f32>(cur, col, maps),
        ColumnType::Scalar(ItemKind::R4) => scalar::<f32, f32>(cur, col, maps),
        ColumnType::Scalar(ItemKind::R8) => scalar::<f64, f64>(cur, col, maps),
        ColumnType::Vector { item: ItemKind::I4, .. } => vector::<i32, f32>(cur, col, maps),
        ColumnType::Vector { item: ItemKind::R4, .. } => vector::<f32, f32>(cur, col, maps),
        ColumnType::Vector { item: ItemKind::R8, .. } => vector::<f64, f64>(cur, col, maps),
        _ => Err(Error::schema(format!("column {col} of type {ty} is not numeric"))),
    }
}

impl Transformer for MinMaxModel {
    fn op_id(&self) -> &'static str {
        MINMAX_OP
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        Ok(self.plan(input)?.output_schema(input))
    }

    fn apply(&self, input: Arc<dyn DataView>) -> Result<Arc<dyn DataView>> {
        Ok(self.plan(input.schema())?.apply(input))
    }

    fn save_params(&self, w: &mut ParamWriter) {
        self.pairs.save(w);
        for k in 0..self.mins.len() {
            w.f64s(&format!("min.{k}"), &self.mins[k]);
            w.f64s(&format!("max.{k}"), &self.maxs[k]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataview::{collect_rows, InMemoryView};
    use crate::value::Value;
    use proptest::prelude::*;

    fn column(values: Vec<f32>) -> Arc<dyn DataView> {
        InMemoryView::builder().column("x", ColumnType::R4, values).build().unwrap().into_arc()
    }

    fn fit_apply(est: &dyn Estimator, train: Arc<dyn DataView>, test: Arc<dyn DataView>) -> Vec<Value> {
        let model = est.fit(&train, &ExecContext::default()).unwrap();
        let out = model.apply(test).unwrap();
        let last = out.schema().len() - 1;
        collect_rows(&*out, &[last]).unwrap().into_iter().map(|mut r| r.remove(0)).collect()
    }

    #[test]
    fn mean_imputation() {
        let est = MissingHandler::new(ColumnPairs::same(&["x"]));
        let out = fit_apply(&est, column(vec![1.0, f32::NAN, 3.0]), column(vec![f32::NAN, 7.0]));
        assert_eq!(out, vec![Value::R4(2.0), Value::R4(7.0)]);
    }

    #[test]
    fn imputation_without_missing_is_identity() {
        let est = MissingHandler::new(ColumnPairs::same(&["x"]));
        let data = vec![1.5, -2.0, 3.25];
        let out = fit_apply(&est, column(data.clone()), column(data.clone()));
        assert_eq!(out, data.into_iter().map(Value::R4).collect::<Vec<_>>());
    }

    #[test]
    fn all_missing_slot_becomes_zero() {
        let est = MissingHandler::new(ColumnPairs::same(&["x"]));
        let out = fit_apply(&est, column(vec![f32::NAN]), column(vec![f32::NAN]));
        assert_eq!(out, vec![Value::R4(0.0)]);
    }

    #[test]
    fn text_column_is_a_type_error() {
        let s = Schema::new(vec![Column::new("x", ColumnType::TEXT)]);
        let err = MissingHandler::new(ColumnPairs::same(&["x"])).output_schema(&s).unwrap_err();
        assert!(matches!(err.kind(), crate::error::ErrorKind::Schema(_)));
        assert!(MinMaxNormalizer::new(ColumnPairs::same(&["x"])).output_schema(&s).is_err());
    }

    #[test]
    fn minmax_examples() {
        let est = MinMaxNormalizer::new(ColumnPairs::same(&["x"]));
        assert_eq!(fit_apply(&est, column(vec![0.0, 10.0]), column(vec![5.0])), vec![Value::R4(0.5)]);
        assert_eq!(
            fit_apply(&est, column(vec![4.0, 4.0]), column(vec![4.0, 9.0])),
            vec![Value::R4(0.0), Value::R4(0.0)]
        );
        let out = fit_apply(&est, column(vec![0.0, 1.0]), column(vec![f32::NAN]));
        assert!(matches!(out[0], Value::R4(x) if x.is_nan()));
    }

    #[test]
    fn params_round_trip() {
        let train = column(vec![1.0, f32::NAN, 3.0]);
        for est in [
            Box::new(MissingHandler::new(ColumnPairs::same(&["x"]))) as Box<dyn Estimator>,
            Box::new(MinMaxNormalizer::new(ColumnPairs::renamed(&[("x", "y")]))),
        ] {
            let model = est.fit(&train, &ExecContext::default()).unwrap();
            let mut w = ParamWriter::new();
            model.save_params(&mut w);
            let r = ParamReader::parse(&w.finish()).unwrap();
            let loaded = if model.op_id() == MISSING_OP {
                MissingHandlerModel::load(&r).unwrap()
            } else {
                MinMaxModel::load(&r).unwrap()
            };
            let a = collect_rows(&*model.apply(train.clone()).unwrap(), &[1]).unwrap();
            let b = collect_rows(&*loaded.apply(train.clone()).unwrap(), &[1]).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x[0].bit_eq(&y[0])));
        }
    }

    fn vec_view(rows: &[Vec<f32>], sparse: bool) -> Arc<dyn DataView> {
        let n = rows[0].len();
        let values = rows
            .iter()
            .map(|r| {
                let v = VBuffer::dense(r.clone());
                if sparse {
                    v.sparsify()
                } else {
                    v
                }
            })
            .collect();
        InMemoryView::builder()
            .column("v", ColumnType::vector(ItemKind::R4, n).unwrap(), values)
            .build()
            .unwrap()
            .into_arc()
    }

    fn dense_rows(view: &dyn DataView) -> Vec<Vec<f32>> {
        let last = view.schema().len() - 1;
        collect_rows(view, &[last])
            .unwrap()
            .into_iter()
            .map(|r| match &r[0] {
                Value::VecR4(v) => v.to_dense_vec(),
                v => panic!("{v:?}"),
            })
            .collect()
    }

    fn masked_rows() -> impl Strategy<Value = Vec<Vec<f32>>> {
        (1usize..5).prop_flat_map(|slots| {
            proptest::collection::vec(
                proptest::collection::vec(prop_oneof![1 => Just(f32::NAN), 1 => Just(0.0f32), 3 => -50.0f32..50.0], slots),
                1..30,
            )
        })
    }

    proptest! {
        #[test]
        fn means_match_two_pass_oracle(rows in masked_rows(), sparse in any::<bool>()) {
            let view = vec_view(&rows, sparse);
            let est = MissingHandler::new(ColumnPairs::same(&["v"]));
            let model = est.fit(&view, &ExecContext::default()).unwrap();
            let out = dense_rows(&*model.apply(view.clone()).unwrap());
            let slots = rows[0].len();
            for s in 0..slots {
                let present: Vec<f64> = rows.iter().map(|r| r[s]).filter(|x| !x.is_nan()).map(f64::from).collect();
                let mean = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
                for (r, o) in rows.iter().zip(&out) {
                    let expected = if r[s].is_nan() { mean as f32 } else { r[s] };
                    prop_assert!((o[s] - expected).abs() <= 1e-5 * (1.0 + expected.abs()), "{} vs {}", o[s], expected);
                }
            }
        }

        #[test]
        fn minmax_matches_scan_oracle(rows in masked_rows(), sparse in any::<bool>()) {
            let view = vec_view(&rows, sparse);
            let est = MinMaxNormalizer::new(ColumnPairs::same(&["v"]));
            let model = est.fit(&view, &ExecContext::default()).unwrap();
            let out = dense_rows(&*model.apply(view.clone()).unwrap());
            for s in 0..rows[0].len() {
                let present: Vec<f32> = rows.iter().map(|r| r[s]).filter(|x| !x.is_nan()).collect();
                let lo = present.iter().copied().fold(f32::INFINITY, f32::min);
                let hi = present.iter().copied().fold(f32::NEG_INFINITY, f32::max);
                for (r, o) in rows.iter().zip(&out) {
                    if r[s].is_nan() {
                        prop_assert!(o[s].is_nan());
                        continue;
                    }
                    prop_assert!((0.0..=1.0).contains(&o[s]));
                    let expected = if hi > lo { (r[s] - lo) / (hi - lo) } else { 0.0 };
                    prop_assert!((o[s] - expected).abs() < 1e-5);
                }
            }
        }
    }
}
