//! Online linear learners. Each trains in one streaming pass per epoch and produces a
//! [`LinearModel`] that appends `Score` (and `Probability` for classifiers).

mod model;
mod update;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use model::{LinearModel, Task, PROBABILITY_COLUMN, SCORE_COLUMN};
pub use update::{LinearState, LogisticState, PerceptronState, RegressionState};

use crate::dataview::{CachedView, DataView, ExecContext, RowCursor};
use crate::error::{Error, Result};
use crate::pipeline::{Estimator, Transformer};
use crate::schema::Schema;
use crate::types::{ColumnType, ItemKind};
use crate::value::{Getter, I4_MISSING};
use crate::vbuffer::VBuffer;

/// Rows held back by the pseudo-shuffle.
pub const SHUFFLE_WINDOW: usize = 10_000;

pub const AVG_PERCEPTRON: &str = "learner.avg_perceptron";
pub const SGD_LOGISTIC: &str = "learner.sgd_logistic";
pub const OGD_REGRESSOR: &str = "learner.ogd_regressor";

pub(crate) const LOADERS: &[(&str, crate::pipeline::TransformerLoader)] = &[
    (AVG_PERCEPTRON, LinearModel::load_perceptron),
    (SGD_LOGISTIC, LinearModel::load_logistic),
    (OGD_REGRESSOR, LinearModel::load_regressor),
];

fn default_features() -> String {
    "Features".into()
}
fn default_label() -> String {
    "Label".into()
}
fn default_epochs() -> u32 {
    10
}
fn default_rate() -> f32 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    #[serde(default = "default_features")]
    pub feature_column: String,
    #[serde(default = "default_label")]
    pub label_column: String,
    #[serde(default = "default_epochs")]
    pub epochs: u32,
    #[serde(default = "default_rate")]
    pub learning_rate: f32,
    /// When set, each epoch visits rows through a windowed pseudo-shuffle seeded with
    /// this value; otherwise rows are visited in view order.
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            feature_column: default_features(),
            label_column: default_label(),
            epochs: default_epochs(),
            learning_rate: default_rate(),
            shuffle_seed: None,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self, op: &str) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::params(op, "epochs must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::params(op, "learning_rate must be a positive number"));
        }
        Ok(())
    }
}

/// Which update rule a [`LinearLearner`] runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    AveragedPerceptron,
    SgdLogistic,
    OgdRegressor,
}

impl Algorithm {
    pub fn op_id(self) -> &'static str {
        match self {
            Algorithm::AveragedPerceptron => AVG_PERCEPTRON,
            Algorithm::SgdLogistic => SGD_LOGISTIC,
            Algorithm::OgdRegressor => OGD_REGRESSOR,
        }
    }

    pub fn task(self) -> Task {
        match self {
            Algorithm::OgdRegressor => Task::Regression,
            _ => Task::Binary,
        }
    }
}

/// An online linear learner: the estimator behind every `learner.*` operator.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLearner {
    pub algorithm: Algorithm,
    pub config: LearnerConfig,
}

impl LinearLearner {
    pub fn new(algorithm: Algorithm, config: LearnerConfig) -> Result<Self> {
        config.validate(algorithm.op_id())?;
        Ok(LinearLearner { algorithm, config })
    }

    pub fn averaged_perceptron(config: LearnerConfig) -> Result<Self> {
        Self::new(Algorithm::AveragedPerceptron, config)
    }

    pub fn sgd_logistic(config: LearnerConfig) -> Result<Self> {
        Self::new(Algorithm::SgdLogistic, config)
    }

    pub fn ogd_regressor(config: LearnerConfig) -> Result<Self> {
        Self::new(Algorithm::OgdRegressor, config)
    }

    /// Feature index and dimension, and label index, after type checks.
    fn columns(&self, schema: &Schema) -> Result<(usize, usize, usize)> {
        let op = self.algorithm.op_id();
        let (f, dim) = feature_column(schema, &self.config.feature_column, op)?;
        let l = schema.require(&self.config.label_column)?;
        let lty = schema.column(l)?.ty;
        let ok = match self.algorithm.task() {
            Task::Binary => matches!(lty, ColumnType::Scalar(k) if k == ItemKind::Bool || k.is_numeric()),
            Task::Regression => matches!(lty, ColumnType::Scalar(k) if k.is_numeric()),
        };
        if !ok {
            return Err(Error::schema(format!(
                "{op}: label column '{}' has type {lty}, expected a numeric{} scalar",
                self.config.label_column,
                if self.algorithm.task() == Task::Binary { " or Bool" } else { "" }
            )));
        }
        Ok((f, dim, l))
    }

    fn model(&self, state: LinearState) -> LinearModel {
        LinearModel::new(self.algorithm.op_id(), self.algorithm.task(), &self.config.feature_column, state)
    }

    /// Runs every epoch and returns the trained weights.
    pub fn train(&self, input: &Arc<dyn DataView>, ctx: &ExecContext) -> Result<LinearState> {
        let (f, dim, l) = self.columns(input.schema())?;
        let view: Arc<dyn DataView> = if self.config.epochs > 1 && !input.can_rescan() {
            Arc::new(CachedView::new(input.clone()))
        } else {
            input.clone()
        };
        let rate = self.config.learning_rate;
        let mut rng = self.config.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
        match self.algorithm {
            Algorithm::AveragedPerceptron => {
                let mut s = PerceptronState::new(dim, rate);
                for _ in 0..self.config.epochs {
                    scan_epoch(&*view, ctx, f, l, rng.as_mut(), |x, y| {
                        s.step(x, binary_label(y)?);
                        Ok(())
                    })?;
                }
                Ok(s.averaged())
            }
            Algorithm::SgdLogistic => {
                let mut s = LogisticState::new(dim, rate);
                for _ in 0..self.config.epochs {
                    scan_epoch(&*view, ctx, f, l, rng.as_mut(), |x, y| {
                        s.step(x, binary_label(y)?);
                        Ok(())
                    })?;
                }
                Ok(s.state)
            }
            Algorithm::OgdRegressor => {
                let mut s = RegressionState::new(dim, rate);
                for _ in 0..self.config.epochs {
                    scan_epoch(&*view, ctx, f, l, rng.as_mut(), |x, y| {
                        s.step(x, y);
                        Ok(())
                    })?;
                }
                Ok(s.state)
            }
        }
    }
}

impl Estimator for LinearLearner {
    fn op_id(&self) -> &'static str {
        self.algorithm.op_id()
    }

    fn output_schema(&self, input: &Schema) -> Result<Schema> {
        let (_, dim, _) = self.columns(input)?;
        self.model(LinearState::zeros(dim)).output_schema(input)
    }

    fn is_trainable(&self) -> bool {
        true
    }

    fn fit(&self, input: &Arc<dyn DataView>, ctx: &ExecContext) -> Result<Arc<dyn Transformer>> {
        let state = self.train(input, ctx)?;
        Ok(Arc::new(self.model(state)))
    }
}

/// Resolves a fixed-size `R4` vector column.
pub(crate) fn feature_column(schema: &Schema, name: &str, op: &str) -> Result<(usize, usize)> {
    let f = schema.require(name)?;
    match schema.column(f)?.ty {
        ColumnType::Vector {
            item: ItemKind::R4,
            size: Some(n),
        } => Ok((f, n.get() as usize)),
        ColumnType::Vector { size: None, .. } => Err(Error::shape(format!(
            "{op}: feature column '{name}' has variable length; learners need a fixed size"
        ))),
        ty => Err(Error::schema(format!(
            "{op}: feature column '{name}' has type {ty}, expected Vector<R4,n>"
        ))),
    }
}

fn binary_label(y: f64) -> Result<bool> {
    if y == 1.0 {
        Ok(true)
    } else if y == 0.0 {
        Ok(false)
    } else {
        Err(Error::training(format!("binary label must be 0 or 1, got {y}")))
    }
}

type LabelReader = Box<dyn FnMut() -> Result<f64> + Send>;

/// Reads a scalar label as f64; missing values read as NaN.
pub(crate) fn label_reader(cur: &mut dyn RowCursor, col: usize) -> Result<LabelReader> {
    fn boxed<T: crate::value::ColumnValue>(mut g: Getter<T>, f: fn(&T) -> f64) -> LabelReader {
        let mut v = T::default();
        Box::new(move || {
            g.get(&mut v)?;
            Ok(f(&v))
        })
    }
    Ok(match cur.schema().column(col)?.ty {
        ColumnType::Scalar(ItemKind::Bool) => boxed(cur.get_getter::<bool>(col)?, |&b| b as u8 as f64),
        ColumnType::Scalar(ItemKind::I4) => boxed(cur.get_getter::<i32>(col)?, |&v| {
            if v == I4_MISSING {
                f64::NAN
            } else {
                v as f64
            }
        }),
        ColumnType::Scalar(ItemKind::R4) => boxed(cur.get_getter::<f32>(col)?, |&v| v as f64),
        ColumnType::Scalar(ItemKind::R8) => boxed(cur.get_getter::<f64>(col)?, |&v| v),
        ty => return Err(Error::schema(format!("label column has type {ty}, expected a scalar number"))),
    })
}

/// One pass over the view calling `visit(features, label)` for every row with a
/// present label. Rows go through a windowed shuffle when `rng` is set.
fn scan_epoch(
    view: &dyn DataView,
    ctx: &ExecContext,
    features: usize,
    label: usize,
    rng: Option<&mut ChaCha8Rng>,
    mut visit: impl FnMut(&VBuffer<f32>, f64) -> Result<()>,
) -> Result<()> {
    let mut cur = ctx.open_columns(view, &[features, label])?;
    let mut gx = cur.get_getter::<VBuffer<f32>>(features)?;
    let mut gy = label_reader(&mut *cur, label)?;
    let mut x = VBuffer::default();
    let mut row = 0u64;
    let mut done = false;
    let mut read = |x: &mut VBuffer<f32>| -> Result<Option<f64>> {
        loop {
            if done || !cur.move_next()? {
                done = true;
                return Ok(None);
            }
            row += 1;
            let y = gy()?;
            if y.is_nan() {
                continue;
            }
            gx.get(x)?;
            if x.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::training(format!("non-finite feature value in row {}", row - 1)));
            }
            return Ok(Some(y));
        }
    };
    let Some(rng) = rng else {
        while let Some(y) = read(&mut x)? {
            visit(&x, y)?;
        }
        return Ok(());
    };
    let mut window: Vec<(VBuffer<f32>, f64)> = Vec::new();
    while window.len() < SHUFFLE_WINDOW {
        let mut buf = VBuffer::default();
        match read(&mut buf)? {
            Some(y) => window.push((buf, y)),
            None => break,
        }
    }
    while let Some(y) = read(&mut x)? {
        let j = rng.gen_range(0..window.len());
        visit(&window[j].0, window[j].1)?;
        std::mem::swap(&mut window[j].0, &mut x);
        window[j].1 = y;
    }
    while !window.is_empty() {
        let j = rng.gen_range(0..window.len());
        let (x, y) = window.swap_remove(j);
        visit(&x, y)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataview::{collect_rows, InMemoryView};
    use crate::value::Value;
    use rand::Rng;

    pub(crate) fn labeled(xs: &[Vec<f32>], ys: &[f32]) -> Arc<dyn DataView> {
        let dim = xs[0].len();
        InMemoryView::builder()
            .column(
                "Features",
                ColumnType::vector(ItemKind::R4, dim).unwrap(),
                xs.iter().map(|x| VBuffer::dense(x.clone())).collect(),
            )
            .column("Label", ColumnType::R4, ys.to_vec())
            .build()
            .unwrap()
            .into_arc()
    }

    fn scores(model: &dyn Transformer, view: Arc<dyn DataView>) -> Vec<f32> {
        let out = model.apply(view).unwrap();
        let s = out.schema().require(SCORE_COLUMN).unwrap();
        collect_rows(&*out, &[s])
            .unwrap()
            .into_iter()
            .map(|r| match r[0] {
                Value::R4(v) => v,
                _ => unreachable!(),
            })
            .collect()
    }

    /// 200 points separated by the line x + y = 0 with margin 1.
    fn separable(seed: u64) -> (Vec<Vec<f32>>, Vec<f32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        while xs.len() < 200 {
            let p: [f32; 2] = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let d = (p[0] + p[1]) / 2f32.sqrt();
            if d.abs() < 1.0 {
                continue;
            }
            xs.push(p.to_vec());
            ys.push(if d > 0.0 { 1.0 } else { 0.0 });
        }
        (xs, ys)
    }

    #[test]
    fn perceptron_separates_blobs() {
        let (xs, ys) = separable(7);
        let view = labeled(&xs, &ys);
        let learner = LinearLearner::averaged_perceptron(LearnerConfig {
            epochs: 10,
            learning_rate: 1.0,
            ..Default::default()
        })
        .unwrap();
        let model = learner.fit(&view, &ExecContext::default()).unwrap();
        let s = scores(&*model, view);
        // independent scoring pass: sign of score against label
        let correct = s.iter().zip(&ys).filter(|(s, y)| (**s > 0.0) == (**y == 1.0)).count();
        assert_eq!(correct, 200);
    }

    #[test]
    fn ogd_fits_exact_line() {
        let xs: Vec<Vec<f32>> = (0..50).map(|i| vec![i as f32 / 50.0]).collect();
        let ys: Vec<f32> = xs.iter().map(|x| 3.0 * x[0]).collect();
        let view = labeled(&xs, &ys);
        let learner = LinearLearner::ogd_regressor(LearnerConfig {
            epochs: 50,
            learning_rate: 0.05,
            ..Default::default()
        })
        .unwrap();
        let model = learner.fit(&view, &ExecContext::default()).unwrap();
        let s = scores(&*model, view);
        let mse = s.iter().zip(&ys).map(|(a, b)| ((a - b) as f64).powi(2)).sum::<f64>() / ys.len() as f64;
        assert!(mse.sqrt() < 0.01, "rms {}", mse.sqrt());
    }

    #[test]
    fn variable_length_features_rejected() {
        let view = InMemoryView::builder()
            .column("Features", ColumnType::var_vector(ItemKind::R4), vec![VBuffer::dense(vec![1.0f32])])
            .column("Label", ColumnType::R4, vec![1.0f32])
            .build()
            .unwrap()
            .into_arc();
        let err = LinearLearner::sgd_logistic(LearnerConfig::default())
            .unwrap()
            .output_schema(view.schema())
            .unwrap_err();
        assert!(matches!(err.kind(), crate::error::ErrorKind::Shape(_)));
    }

    #[test]
    fn non_finite_feature_is_training_error() {
        let view = labeled(&[vec![f32::INFINITY]], &[1.0]);
        let err = LinearLearner::sgd_logistic(LearnerConfig::default())
            .unwrap()
            .fit(&view, &ExecContext::default())
            .err()
            .unwrap();
        assert!(matches!(err.kind(), crate::error::ErrorKind::Training(_)));
    }

    #[test]
    fn missing_labels_are_skipped() {
        let view = labeled(&[vec![1.0], vec![1.0]], &[f32::NAN, 1.0]);
        let cfg = LearnerConfig {
            epochs: 1,
            learning_rate: 0.1,
            ..Default::default()
        };
        let s = LinearLearner::sgd_logistic(cfg).unwrap().train(&view, &ExecContext::default()).unwrap();
        assert_eq!(s.weights, vec![0.05]);
    }

    #[test]
    fn shuffled_training_is_reproducible_and_thread_independent() {
        let xs: Vec<Vec<f32>> = (0..25_000).map(|i| vec![(i % 17) as f32 - 8.0, (i % 5) as f32]).collect();
        let ys: Vec<f32> = xs.iter().map(|x| (x[0] + 0.3 * x[1] > 0.0) as u8 as f32).collect();
        let view = labeled(&xs, &ys);
        let cfg = LearnerConfig {
            epochs: 2,
            shuffle_seed: Some(42),
            ..Default::default()
        };
        let learner = LinearLearner::averaged_perceptron(cfg).unwrap();
        let a = learner.train(&view, &ExecContext::default()).unwrap();
        let b = learner.train(&view, &ExecContext::with_threads(4)).unwrap();
        let unshuffled = LinearLearner::averaged_perceptron(LearnerConfig {
            epochs: 2,
            ..Default::default()
        })
        .unwrap()
        .train(&view, &ExecContext::default())
        .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, unshuffled);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = LearnerConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(LinearLearner::sgd_logistic(cfg).is_err());
        let cfg = LearnerConfig {
            learning_rate: -1.0,
            ..Default::default()
        };
        assert!(LinearLearner::sgd_logistic(cfg).is_err());
    }
}
