use std::sync::Arc;

use super::update::{sigmoid, LinearState};
use super::{feature_column, AVG_PERCEPTRON, OGD_REGRESSOR, SGD_LOGISTIC};
use crate::dataview::{DataView, RowCursor};
use crate::error::{Error, Result};
use crate::pipeline::{ParamReader, ParamWriter, Transformer};
use crate::schema::{Column, Schema};
use crate::transforms::FnMapper;
use crate::types::ColumnType;
use crate::value::{AnyGetter, ColumnValue, Getter};
use crate::vbuffer::VBuffer;

pub const SCORE_COLUMN: &str = "Score";
pub const PROBABILITY_COLUMN: &str = "Probability";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Binary,
    Regression,
}

/// A fitted linear scorer. Appends `Score = w·x + b`, and for binary tasks
/// `Probability = 1 / (1 + e^-Score)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    op: &'static str,
    task: Task,
    feature_column: String,
    state: Arc<LinearState>,
}

impl LinearModel {
    pub fn new(op: &'static str, task: Task, feature_column: &str, state: LinearState) -> Self {
        LinearModel {
            op,
            task,
            feature_column: feature_column.to_string(),
            state: Arc::new(state),
        }
    }

    pub fn state(&self) -> &LinearState {
        &self.state
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn feature_column(&self) -> &str {
        &self.feature_column
    }

    fn load_as(op: &'static str, task: Task, r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        let weights = r.f32s("weights")?.to_vec();
        let bias = r.f32("bias")?;
        if weights.is_empty() {
            return Err(Error::corruption("linear model has no weights"));
        }
        Ok(Arc::new(LinearModel::new(
            op,
            task,
            r.str("feature_column")?,
            LinearState { weights, bias },
        )))
    }

    pub fn load_perceptron(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        Self::load_as(AVG_PERCEPTRON, Task::Binary, r)
    }

    pub fn load_logistic(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        Self::load_as(SGD_LOGISTIC, Task::Binary, r)
    }

    pub fn load_regressor(r: &ParamReader) -> Result<Arc<dyn Transformer>> {
        Self::load_as(OGD_REGRESSOR, Task::Regression, r)
    }

    fn plan(&self, schema: &Schema) -> Result<FnMapper> {
        let (f, dim) = feature_column(schema, &self.feature_column, self.op)?;
        if dim != self.state.weights.len() {
            return Err(Error::shape(format!(
                "{}: feature column '{}' has {dim} slots but the model has {} weights",
                self.op,
                self.feature_column,
                self.state.weights.len()
            )));
        }
        let mut m = FnMapper::default();
        let state = self.state.clone();
        m.push(Column::new(SCORE_COLUMN, ColumnType::R4), vec![f], move |cur| {
            score_getter(cur, f, state.clone(), false)
        });
        if self.task == Task::Binary {
            let state = self.state.clone();
            m.push(Column::new(PROBABILITY_COLUMN, ColumnType::R4), vec![f], move |cur| {
                score_getter(cur, f, state.clone(), true)
            });
        }
        Ok(m)
    }
}

fn score_getter(cur: &mut dyn RowCursor, f: usize, state: Arc<LinearState>, probability: bool) -> Result<AnyGetter> {
    let mut g = cur.get_getter::<VBuffer<f32>>(f)?;
    let mut x = VBuffer::default();
    Ok(f32::into_any_getter(Getter::new(move |dst: &mut f32| {
        g.get(&mut x)?;
        let s = state.score(&x);
        *dst = if probability { sigmoid(s) as f32 } else { s as f32 };
        Ok(())
    })))
}

impl Transformer for LinearModel {
    fn op_id(&self) -> &'static str {
        self.op
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        Ok(self.plan(input)?.output_schema(input))
    }

    fn apply(&self, input: Arc<dyn DataView>) -> Result<Arc<dyn DataView>> {
        Ok(self.plan(input.schema())?.apply(input))
    }

    fn save_params(&self, w: &mut ParamWriter) {
        w.str("feature_column", &self.feature_column)
            .f32s("weights", &self.state.weights)
            .f32("bias", self.state.bias);
    }
}
