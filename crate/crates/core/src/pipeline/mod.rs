//! Chains of estimators, fitted models, model archives and single-row prediction.

mod archive;
mod engine;
mod model;
mod params;
mod stage;
#[cfg(test)]
mod tests;

pub use archive::{loadable_ops, loader_for, ARCHIVE_FORMAT, ARCHIVE_VERSION};
pub use engine::{Example, Prediction, PredictionEngine};
pub use model::{FitReport, Pipeline, PipelineModel, StageReport};
pub use params::{ParamReader, ParamWriter, PARAMS_VERSION};
pub use stage::{Estimator, Transformer, TransformerLoader};
