//! Single-row synchronous scoring over a fitted model.
//!
//! The engine composes the model over a one-row feed view and keeps that cursor open
//! for its whole life. Each prediction copies the example into the feed, advances the
//! cursor once and reads the outputs, so it goes through the same getters as batch
//! scoring.

use std::sync::{Arc, Mutex};

use super::model::PipelineModel;
use crate::dataview::{check_getter, ActiveColumns, CursorState, DataView, RowCursor};
use crate::dispatch_type;
use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::value::{AnyGetter, ColumnValue, Getter, Value};

struct Feed {
    row: Mutex<Vec<Value>>,
    active: Mutex<Option<ActiveColumns>>,
}

/// A view whose single current row is whatever was last written to the feed. Its
/// cursors never end.
struct FeedView {
    schema: Arc<Schema>,
    feed: Arc<Feed>,
}

impl DataView for FeedView {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn get_row_cursor(&self, active: &ActiveColumns) -> Result<Box<dyn RowCursor>> {
        *self.feed.active.lock().unwrap() = Some(active.clone());
        Ok(Box::new(FeedCursor {
            schema: self.schema.clone(),
            feed: self.feed.clone(),
            active: active.clone(),
            position: -1,
        }))
    }

    fn can_rescan(&self) -> bool {
        false
    }
}

struct FeedCursor {
    schema: Arc<Schema>,
    feed: Arc<Feed>,
    active: ActiveColumns,
    position: i64,
}

impl RowCursor for FeedCursor {
    fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    fn state(&self) -> CursorState {
        if self.position < 0 {
            CursorState::NotStarted
        } else {
            CursorState::Active
        }
    }

    fn position(&self) -> i64 {
        self.position
    }

    fn move_next(&mut self) -> Result<bool> {
        self.position += 1;
        Ok(true)
    }

    fn is_active(&self, col: usize) -> bool {
        self.active.is_active(col)
    }

    fn get_any_getter(&mut self, col: usize) -> Result<AnyGetter> {
        check_getter(&self.schema, col, |c| self.active.is_active(c))?;
        let ty = self.schema.column(col)?.ty;
        Ok(dispatch_type!(ty, T => feed_getter::<T>(self.feed.clone(), col)))
    }
}

fn feed_getter<T: ColumnValue>(feed: Arc<Feed>, col: usize) -> AnyGetter {
    T::into_any_getter(Getter::new(move |dst: &mut T| {
        let row = feed.row.lock().unwrap();
        let src = T::from_value(&row[col]).ok_or_else(|| Error::contract("feed value has the wrong type"))?;
        dst.clone_from(src);
        Ok(())
    }))
}

/// One input record for a [`PredictionEngine`]. Unset fields are absent; fields the
/// model does not read may stay unset.
#[derive(Clone, Debug)]
pub struct Example {
    schema: Arc<Schema>,
    values: Vec<Option<Value>>,
}

impl Example {
    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    /// Sets field `name`, reusing the previous value's buffers when possible.
    pub fn set(&mut self, name: &str, value: &Value) -> Result<()> {
        let col = self
            .schema
            .resolve(name)
            .ok_or_else(|| Error::input(format!("example has no field '{name}'")))?;
        let ty = &self.schema.column(col)?.ty;
        if !value.fits(ty) {
            return Err(Error::input(format!(
                "field '{name}' has type {ty} but got a {} value",
                value.type_name()
            )));
        }
        match &mut self.values[col] {
            Some(dst) => value.assign_to(dst),
            slot => *slot = Some(value.clone()),
        }
        Ok(())
    }

    pub fn unset(&mut self, name: &str) {
        if let Some(col) = self.schema.resolve(name) {
            self.values[col] = None;
        }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values[self.schema.resolve(name)?].as_ref()
    }
}

/// Output record of a [`PredictionEngine`].
#[derive(Clone, Debug)]
pub struct Prediction {
    names: Arc<[String]>,
    values: Vec<Value>,
}

impl Prediction {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }
}

/// Scores one example at a time. Holds reusable buffers, so it is meant for a single
/// thread; create one engine per thread.
pub struct PredictionEngine {
    feed: Arc<Feed>,
    cursor: Box<dyn RowCursor>,
    getters: Vec<AnyGetter>,
    names: Arc<[String]>,
    input: Arc<Schema>,
    required: Vec<usize>,
}

impl PredictionEngine {
    /// Engine producing the model's prediction columns for examples shaped like
    /// `input`.
    pub fn new(model: &PipelineModel, input: &Schema) -> Result<Self> {
        let out = model.output_schema_for(input)?;
        let cols = model.prediction_columns();
        let names: Vec<String> = cols.iter().map(|&c| out.columns()[c].name.clone()).collect();
        Self::with_outputs(model, input, &names.iter().map(String::as_str).collect::<Vec<_>>())
    }

    /// Engine producing the named output columns. Hidden columns cannot be requested.
    pub fn with_outputs(model: &PipelineModel, input: &Schema, outputs: &[&str]) -> Result<Self> {
        let input = Arc::new(input.clone());
        let feed = Arc::new(Feed {
            row: Mutex::new(input.columns().iter().map(|c| Value::missing_for(&c.ty)).collect()),
            active: Mutex::new(None),
        });
        let view: Arc<dyn DataView> = Arc::new(FeedView {
            schema: input.clone(),
            feed: feed.clone(),
        });
        let scored = model.transform(view)?;
        let cols = outputs
            .iter()
            .map(|n| scored.schema().require(n))
            .collect::<Result<Vec<_>>>()?;
        let mut cursor = scored.cursor(&cols)?;
        let getters = cols
            .iter()
            .map(|&c| cursor.get_getter_dyn(c))
            .collect::<Result<Vec<_>>>()?;
        let required = feed
            .active
            .lock()
            .unwrap()
            .as_ref()
            .map(|a| a.indices().collect())
            .unwrap_or_default();
        Ok(PredictionEngine {
            feed,
            cursor,
            getters,
            names: outputs.iter().map(|s| s.to_string()).collect(),
            input,
            required,
        })
    }

    /// An empty example with this engine's input schema.
    pub fn example(&self) -> Example {
        Example {
            schema: self.input.clone(),
            values: vec![None; self.input.len()],
        }
    }

    /// Input fields the model actually reads.
    pub fn required_fields(&self) -> impl Iterator<Item = &str> {
        self.required.iter().map(|&c| self.input.columns()[c].name.as_str())
    }

    /// An output record with this engine's columns, for reuse across calls.
    pub fn prediction(&self) -> Prediction {
        let out = self.cursor.schema();
        Prediction {
            names: self.names.clone(),
            values: self
                .names
                .iter()
                .map(|n| Value::missing_for(&out.columns()[out.resolve(n).unwrap()].ty))
                .collect(),
        }
    }

    /// Scores `example` into `out`. With a reused `out` and unchanged value shapes this
    /// allocates nothing.
    pub fn predict_into(&mut self, example: &Example, out: &mut Prediction) -> Result<()> {
        if !Arc::ptr_eq(&example.schema, &self.input) && *example.schema != *self.input {
            return Err(Error::input("example schema differs from the engine's input schema"));
        }
        {
            let mut row = self.feed.row.lock().unwrap();
            for &c in &self.required {
                match &example.values[c] {
                    Some(v) => v.assign_to(&mut row[c]),
                    None => {
                        return Err(Error::input(format!(
                            "example is missing field '{}'",
                            self.input.columns()[c].name
                        )))
                    }
                }
            }
        }
        self.cursor.move_next()?;
        for (g, v) in self.getters.iter_mut().zip(&mut out.values) {
            g.fill_value(v)?;
        }
        Ok(())
    }

    pub fn predict(&mut self, example: &Example) -> Result<Prediction> {
        let mut out = self.prediction();
        self.predict_into(example, &mut out)?;
        Ok(out)
    }
}
