use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::stage::{Estimator, Transformer};
use crate::dataview::{DataView, ExecContext};
use crate::error::{Error, ErrorKind, Result};
use crate::schema::Schema;

fn validation(stage: usize, op: &str, err: Error) -> Error {
    ErrorKind::Validation {
        stage,
        op: op.to_string(),
        message: err.to_string(),
    }
    .into()
}

/// A chain of estimators, each consuming the view produced by the ones before it.
#[derive(Clone, Default)]
pub struct Pipeline {
    stages: Vec<Arc<dyn Estimator>>,
}

impl Pipeline {
    pub fn new() -> Self {
        Pipeline::default()
    }

    pub fn append(mut self, stage: impl Estimator + 'static) -> Self {
        self.stages.push(Arc::new(stage));
        self
    }

    pub fn push(&mut self, stage: Arc<dyn Estimator>) {
        self.stages.push(stage);
    }

    pub fn stages(&self) -> &[Arc<dyn Estimator>] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Schema after each stage, computed without reading data. Errors name the
    /// failing stage.
    pub fn validate(&self, input: &Schema) -> Result<Vec<Schema>> {
        let mut out = Vec::with_capacity(self.stages.len());
        let mut schema = input.clone();
        for (k, stage) in self.stages.iter().enumerate() {
            schema = stage.output_schema(&schema).map_err(|e| validation(k, stage.op_id(), e))?;
            out.push(schema.clone());
        }
        Ok(out)
    }

    pub fn fit(&self, data: Arc<dyn DataView>, ctx: &ExecContext) -> Result<PipelineModel> {
        self.fit_with_report(data, ctx).map(|(m, _)| m)
    }

    /// Fits every stage in order. The whole chain is validated before the first
    /// data pass; stages that are not trainable read no data.
    pub fn fit_with_report(&self, data: Arc<dyn DataView>, ctx: &ExecContext) -> Result<(PipelineModel, FitReport)> {
        let input_schema = data.schema().clone();
        let schemas = self.validate(&input_schema)?;
        let started = Instant::now();
        let mut stages = Vec::with_capacity(self.stages.len());
        let mut reports = Vec::with_capacity(self.stages.len());
        let mut current = data;
        for (k, est) in self.stages.iter().enumerate() {
            let t0 = Instant::now();
            let fitted = est.fit(&current, ctx)?;
            let seconds = t0.elapsed().as_secs_f64();
            current = fitted.apply(current)?;
            if **current.schema() != schemas[k] {
                return Err(Error::contract(format!(
                    "stage {k} ({}) produced a schema that differs from its declared output",
                    est.op_id()
                )));
            }
            reports.push(StageReport {
                stage: k,
                op: est.op_id().to_string(),
                trainable: est.is_trainable(),
                seconds,
            });
            stages.push(fitted);
        }
        let model = PipelineModel::from_parts(input_schema, stages)?;
        let report = FitReport {
            stages: reports,
            seconds: started.elapsed().as_secs_f64(),
        };
        Ok((model, report))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageReport {
    pub stage: usize,
    pub op: String,
    pub trainable: bool,
    pub seconds: f64,
}

/// Wall time of a fit, overall and per stage.
#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub stages: Vec<StageReport>,
    pub seconds: f64,
}

/// Fitted transformers plus the schemas they were fitted against.
#[derive(Clone)]
pub struct PipelineModel {
    input_schema: Arc<Schema>,
    stages: Vec<Arc<dyn Transformer>>,
    schemas: Vec<Schema>,
}

impl PipelineModel {
    /// Builds a model from fitted stages, deriving each stage's output schema.
    pub fn from_parts(input_schema: Arc<Schema>, stages: Vec<Arc<dyn Transformer>>) -> Result<Self> {
        let schemas = propagate(&input_schema, &stages)?;
        Ok(PipelineModel {
            input_schema,
            stages,
            schemas,
        })
    }

    /// Schema of the training data.
    pub fn input_schema(&self) -> &Arc<Schema> {
        &self.input_schema
    }

    /// Schema produced on the training data.
    pub fn output_schema(&self) -> &Schema {
        self.schemas.last().unwrap_or(&self.input_schema)
    }

    /// Schema after each stage on the training data.
    pub fn stage_schemas(&self) -> &[Schema] {
        &self.schemas
    }

    pub fn stages(&self) -> &[Arc<dyn Transformer>] {
        &self.stages
    }

    /// Output schema for an arbitrary input schema, without reading data.
    pub fn output_schema_for(&self, input: &Schema) -> Result<Schema> {
        Ok(propagate(input, &self.stages)?.pop().unwrap_or_else(|| input.clone()))
    }

    /// Lazily applies every stage to `view`. Schema errors are raised before any row
    /// is read.
    pub fn transform(&self, view: Arc<dyn DataView>) -> Result<Arc<dyn DataView>> {
        propagate(view.schema(), &self.stages)?;
        self.stages.iter().try_fold(view, |v, t| t.apply(v))
    }

    /// Visible columns appended by the final stage; what a prediction reports.
    pub fn prediction_columns(&self) -> Vec<usize> {
        let out = self.output_schema();
        let before = match self.schemas.len() {
            0 | 1 => self.input_schema.len(),
            n => self.schemas[n - 2].len(),
        };
        (before..out.len()).filter(|&i| !out.is_hidden(i)).collect()
    }
}

fn propagate(input: &Schema, stages: &[Arc<dyn Transformer>]) -> Result<Vec<Schema>> {
    let mut out = Vec::with_capacity(stages.len());
    let mut schema = input.clone();
    for (k, t) in stages.iter().enumerate() {
        schema = t.output_schema(&schema).map_err(|e| validation(k, t.op_id(), e))?;
        out.push(schema.clone());
    }
    Ok(out)
}

impl std::fmt::Debug for PipelineModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PipelineModel")
            .field("stages", &self.stages.iter().map(|s| s.op_id()).collect::<Vec<_>>())
            .field("output_schema", &self.output_schema().to_string())
            .finish()
    }
}
