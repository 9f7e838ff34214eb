//! The built-in operators.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use super::registry::{OpDef, OpKind, Operator, ParamSpec, ParamType, PortSchemas, PortSpec};
use super::{Var, VarType};
use crate::dataview::{DataView, ExecContext, ZipView};
use crate::error::{Error, Result};
use crate::evaluate::{evaluate_binary, evaluate_regression, EvalColumns};
use crate::io::{infer_schema, load_binary, load_text, save_binary, save_text, LoaderStats, TextLoaderConfig};
use crate::learners::{LearnerConfig, LinearLearner};
use crate::pipeline::{Estimator, PipelineModel};
use crate::transforms::{
    ColumnPairs, Concat, FeaturizeText, HashOneHot, L2Normalize, MinMaxNormalizer, MissingHandler, NGramHash,
    NormalizeText, Tokenize,
};

use ParamType as P;

fn parse<T: DeserializeOwned>(op: &str, params: &Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(params.clone())).map_err(|e| Error::params(op, e.to_string()))
}

fn outputs(pairs: impl IntoIterator<Item = (&'static str, Var)>) -> BTreeMap<String, Var> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn data(inputs: &BTreeMap<String, Var>, port: &str) -> Result<Arc<dyn DataView>> {
    match inputs.get(port) {
        Some(Var::Data(d)) => Ok(d.clone()),
        _ => Err(Error::contract(format!("port '{port}' needs a dataview"))),
    }
}

fn model(inputs: &BTreeMap<String, Var>, port: &str) -> Result<Option<Arc<PipelineModel>>> {
    match inputs.get(port) {
        Some(Var::Model(m)) => Ok(Some(m.clone())),
        None => Ok(None),
        _ => Err(Error::contract(format!("port '{port}' needs a model"))),
    }
}

fn path(inputs: &BTreeMap<String, Var>, port: &str) -> Result<PathBuf> {
    match inputs.get(port) {
        Some(Var::Path(p)) => Ok(p.clone()),
        _ => Err(Error::contract(format!("port '{port}' needs a path"))),
    }
}

fn separator(op: &str, params: &Map<String, Value>) -> Result<char> {
    let s = params["separator"].as_str().unwrap_or_default();
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(Error::params(op, format!("separator must be a single character, got {s:?}"))),
    }
}

/// Fits an estimator on its `data` input and appends the fitted stage to the incoming
/// `model`, so a chain of these nodes builds the same model as a pipeline fit.
struct EstimatorOp(Arc<dyn Estimator>);

impl Operator for EstimatorOp {
    fn check(&self, inputs: &PortSchemas) -> Result<PortSchemas> {
        let out = match inputs.get("data").cloned().flatten() {
            Some(s) => Some(Arc::new(self.0.output_schema(&s)?)),
            None => None,
        };
        Ok(BTreeMap::from([("data".to_string(), out)]))
    }

    fn run(&self, inputs: &BTreeMap<String, Var>, ctx: &ExecContext) -> Result<BTreeMap<String, Var>> {
        let input = data(inputs, "data")?;
        let fitted = self.0.fit(&input, ctx)?;
        let output = fitted.apply(input.clone())?;
        let combined = match model(inputs, "model")? {
            Some(upstream) => {
                if upstream.output_schema() != &**input.schema() {
                    return Err(Error::dataflow(
                        "the incoming model does not produce the incoming dataview's schema",
                    ));
                }
                let mut stages = upstream.stages().to_vec();
                stages.push(fitted);
                PipelineModel::from_parts(upstream.input_schema().clone(), stages)?
            }
            None => PipelineModel::from_parts(input.schema().clone(), vec![fitted])?,
        };
        Ok(outputs([("data", Var::Data(output)), ("model", Var::Model(Arc::new(combined)))]))
    }
}

const STAGE_INPUTS: &[PortSpec] = &[
    PortSpec::new("data", VarType::Dataview),
    PortSpec::optional("model", VarType::Model),
];
const STAGE_OUTPUTS: &[PortSpec] = &[PortSpec::new("data", VarType::Dataview), PortSpec::new("model", VarType::Model)];

fn stage_def(
    id: &'static str,
    kind: OpKind,
    description: &'static str,
    params: Vec<ParamSpec>,
    build: super::registry::OpBuilder,
) -> OpDef {
    OpDef {
        id,
        kind,
        description,
        params,
        inputs: STAGE_INPUTS.to_vec(),
        outputs: STAGE_OUTPUTS.to_vec(),
        build,
    }
}

fn pair_params() -> Vec<ParamSpec> {
    vec![
        ParamSpec::required("columns", P::StringArray, "Input column names."),
        ParamSpec::optional(
            "outputs",
            P::StringArray,
            json!([]),
            "Output column names, one per input; empty reuses the input names.",
        ),
    ]
}

fn pairs(op: &str, params: &Map<String, Value>) -> Result<ColumnPairs> {
    let p: ColumnPairs = parse(op, params)?;
    p.validate(op)?;
    Ok(p)
}

fn estimator(e: impl Estimator + 'static) -> Result<Arc<dyn Operator>> {
    Ok(Arc::new(EstimatorOp(Arc::new(e))))
}

fn hash_bits_param() -> ParamSpec {
    ParamSpec::required("hash_bits", P::Integer, "Number of hash bits; the output has 2^hash_bits slots.")
}

fn transform_ops() -> Vec<OpDef> {
    vec![
        stage_def(
            "transform.concat",
            OpKind::Transform,
            "Concatenates columns of one item kind into a vector column.",
            vec![
                ParamSpec::required("inputs", P::StringArray, "Columns to concatenate, in order."),
                ParamSpec::required("output", P::String, "Name of the concatenated column."),
            ],
            |p| {
                let c: Concat = parse("transform.concat", p)?;
                c.validate()?;
                estimator(c)
            },
        ),
        stage_def(
            "transform.missing_handler",
            OpKind::Transform,
            "Replaces missing numeric values with the per-slot training mean.",
            pair_params(),
            |p| estimator(MissingHandler::new(pairs("transform.missing_handler", p)?)),
        ),
        stage_def(
            "transform.minmax",
            OpKind::Transform,
            "Rescales numeric values to [0, 1] using training minima and maxima.",
            pair_params(),
            |p| estimator(MinMaxNormalizer::new(pairs("transform.minmax", p)?)),
        ),
        stage_def(
            "transform.hash_onehot",
            OpKind::Transform,
            "One-hot encodes text values at their hash slot.",
            [pair_params(), vec![hash_bits_param()]].concat(),
            |p| {
                let h: HashOneHot = parse("transform.hash_onehot", p)?;
                h.validate()?;
                estimator(h)
            },
        ),
        stage_def(
            "transform.normalize_text",
            OpKind::Transform,
            "Lowercases text and replaces punctuation with spaces.",
            pair_params(),
            |p| estimator(NormalizeText::new(pairs("transform.normalize_text", p)?)),
        ),
        stage_def(
            "transform.tokenize",
            OpKind::Transform,
            "Splits text on whitespace into a vector of tokens.",
            pair_params(),
            |p| estimator(Tokenize::new(pairs("transform.tokenize", p)?)),
        ),
        stage_def(
            "transform.ngram_hash",
            OpKind::Transform,
            "Counts hashed word n-grams of token vectors or character n-grams of text.",
            [
                pair_params(),
                vec![
                    ParamSpec::required("mode", P::String, "\"word\" or \"char\"."),
                    ParamSpec::required("lengths", P::IntegerArray, "N-gram lengths to count."),
                    hash_bits_param(),
                ],
            ]
            .concat(),
            |p| {
                let h: NGramHash = parse("transform.ngram_hash", p)?;
                h.validate()?;
                estimator(h)
            },
        ),
        stage_def(
            "transform.l2_normalize",
            OpKind::Transform,
            "Scales numeric vectors to unit Euclidean norm.",
            pair_params(),
            |p| estimator(L2Normalize::new(pairs("transform.l2_normalize", p)?)),
        ),
        stage_def(
            "transform.featurize_text",
            OpKind::Transform,
            "Normalizes and tokenizes text, then emits L2-normalized hashed word and character n-gram counts.",
            [
                pair_params(),
                vec![
                    ParamSpec::optional("word_ngram_lengths", P::IntegerArray, json!([]), "Word n-gram lengths."),
                    ParamSpec::optional("char_ngram_lengths", P::IntegerArray, json!([]), "Character n-gram lengths."),
                    hash_bits_param(),
                ],
            ]
            .concat(),
            |p| {
                let f: FeaturizeText = parse("transform.featurize_text", p)?;
                f.validate()?;
                estimator(f)
            },
        ),
    ]
}

fn learner_params() -> Vec<ParamSpec> {
    let d = serde_json::to_value(LearnerConfig::default()).expect("configs serialize");
    vec![
        ParamSpec::optional("feature_column", P::String, d["feature_column"].clone(), "Vector<R4> feature column."),
        ParamSpec::optional("label_column", P::String, d["label_column"].clone(), "Scalar label column."),
        ParamSpec::optional("epochs", P::Integer, d["epochs"].clone(), "Passes over the training data."),
        ParamSpec::optional("learning_rate", P::Number, d["learning_rate"].clone(), "Step size."),
        ParamSpec::optional(
            "shuffle_seed",
            P::Integer,
            Value::Null,
            "Seed for a windowed shuffle of each pass; unset keeps file order.",
        ),
    ]
}

fn learner_ops() -> Vec<OpDef> {
    vec![
        stage_def(
            crate::learners::AVG_PERCEPTRON,
            OpKind::Learner,
            "Averaged perceptron binary classifier.",
            learner_params(),
            |p| estimator(LinearLearner::averaged_perceptron(parse(crate::learners::AVG_PERCEPTRON, p)?)?),
        ),
        stage_def(
            crate::learners::SGD_LOGISTIC,
            OpKind::Learner,
            "Logistic regression trained by stochastic gradient descent.",
            learner_params(),
            |p| estimator(LinearLearner::sgd_logistic(parse(crate::learners::SGD_LOGISTIC, p)?)?),
        ),
        stage_def(
            crate::learners::OGD_REGRESSOR,
            OpKind::Learner,
            "Least-squares linear regression trained by online gradient descent.",
            learner_params(),
            |p| estimator(LinearLearner::ogd_regressor(parse(crate::learners::OGD_REGRESSOR, p)?)?),
        ),
    ]
}

/// Lazy text loader; records the stats of every view it opens.
struct TextLoaderOp {
    config: Option<TextLoaderConfig>,
    separator: char,
    sample_rows: usize,
    on_bad_line: crate::io::BadLinePolicy,
    stats: Mutex<Vec<Arc<LoaderStats>>>,
}

impl Operator for TextLoaderOp {
    fn check(&self, _: &PortSchemas) -> Result<PortSchemas> {
        let schema = self.config.as_ref().map(|c| Arc::new(c.schema()));
        Ok(BTreeMap::from([("data".to_string(), schema)]))
    }

    fn run(&self, inputs: &BTreeMap<String, Var>, _: &ExecContext) -> Result<BTreeMap<String, Var>> {
        let p = path(inputs, "path")?;
        let config = match &self.config {
            Some(c) => c.clone(),
            None => {
                let mut c = infer_schema(&p, self.separator, self.sample_rows)?;
                c.on_bad_line = self.on_bad_line;
                c
            }
        };
        let loader = load_text(&p, config)?;
        self.stats.lock().unwrap().push(loader.stats().clone());
        Ok(outputs([("data", Var::Data(Arc::new(loader)))]))
    }

    fn counters(&self) -> BTreeMap<String, u64> {
        let stats = self.stats.lock().unwrap();
        BTreeMap::from([
            ("rows_read".to_string(), stats.iter().map(|s| s.rows()).sum()),
            ("bytes_read".to_string(), stats.iter().map(|s| s.bytes_read()).sum()),
        ])
    }
}

fn build_text_loader(p: &Map<String, Value>) -> Result<Arc<dyn Operator>> {
    const OP: &str = "loader.text";
    let separator = separator(OP, p)?;
    let on_bad_line: crate::io::BadLinePolicy =
        serde_json::from_value(p["on_bad_line"].clone()).map_err(|e| Error::params(OP, e.to_string()))?;
    let sample_rows = p["sample_rows"].as_u64().unwrap_or(0) as usize;
    if sample_rows == 0 {
        return Err(Error::params(OP, "sample_rows must be positive"));
    }
    let config = if p["columns"].is_null() {
        None
    } else {
        let c = TextLoaderConfig {
            separator,
            has_header: p["has_header"].as_bool().unwrap_or(false),
            on_bad_line,
            columns: serde_json::from_value(p["columns"].clone()).map_err(|e| Error::params(OP, e.to_string()))?,
        };
        c.validate()?;
        Some(c)
    };
    Ok(Arc::new(TextLoaderOp {
        config,
        separator,
        sample_rows,
        on_bad_line,
        stats: Mutex::new(Vec::new()),
    }))
}

/// Operators whose work is a plain function of their inputs.
struct FnOp {
    check: fn(&PortSchemas) -> Result<PortSchemas>,
    run: Box<dyn Fn(&BTreeMap<String, Var>, &ExecContext) -> Result<BTreeMap<String, Var>> + Send + Sync>,
}

impl Operator for FnOp {
    fn check(&self, inputs: &PortSchemas) -> Result<PortSchemas> {
        (self.check)(inputs)
    }

    fn run(&self, inputs: &BTreeMap<String, Var>, ctx: &ExecContext) -> Result<BTreeMap<String, Var>> {
        (self.run)(inputs, ctx)
    }
}

fn fn_op(
    check: fn(&PortSchemas) -> Result<PortSchemas>,
    run: impl Fn(&BTreeMap<String, Var>, &ExecContext) -> Result<BTreeMap<String, Var>> + Send + Sync + 'static,
) -> Result<Arc<dyn Operator>> {
    Ok(Arc::new(FnOp {
        check,
        run: Box::new(run),
    }))
}

fn no_schemas(_: &PortSchemas) -> Result<PortSchemas> {
    Ok(PortSchemas::new())
}

fn unknown_data(_: &PortSchemas) -> Result<PortSchemas> {
    Ok(BTreeMap::from([("data".to_string(), None)]))
}

fn require_columns(inputs: &PortSchemas, names: &[&str]) -> Result<()> {
    if let Some(Some(s)) = inputs.get("data") {
        for n in names {
            if s.resolve(n).is_none() {
                return Err(Error::schema(format!("evaluator needs column '{n}', which the input does not have")));
            }
        }
    }
    Ok(())
}

fn io_ops() -> Vec<OpDef> {
    let path_in = || vec![PortSpec::new("path", VarType::Path)];
    let data_out = || vec![PortSpec::new("data", VarType::Dataview)];
    let path_out = || vec![PortSpec::new("path", VarType::Path)];
    vec![
        OpDef {
            id: "loader.text",
            kind: OpKind::Loader,
            description: "Lazily reads a delimited text file. Without columns the schema is inferred from a sample.",
            params: vec![
                ParamSpec::optional(
                    "columns",
                    P::ObjectArray,
                    Value::Null,
                    "Column list of {name, type, source}; unset infers the schema.",
                ),
                ParamSpec::optional("separator", P::String, json!("\t"), "Field separator."),
                ParamSpec::optional("has_header", P::Boolean, json!(false), "Skip the first line."),
                ParamSpec::optional("on_bad_line", P::String, json!("error"), "\"error\" or \"skip\"."),
                ParamSpec::optional("sample_rows", P::Integer, json!(1000), "Rows sampled when inferring."),
            ],
            inputs: path_in(),
            outputs: data_out(),
            build: build_text_loader,
        },
        OpDef {
            id: "loader.binary",
            kind: OpKind::Loader,
            description: "Opens a columnar binary table.",
            params: vec![],
            inputs: path_in(),
            outputs: data_out(),
            build: |_| {
                fn_op(unknown_data, |i, _| {
                    Ok(outputs([("data", Var::Data(Arc::new(load_binary(path(i, "path")?)?)))]))
                })
            },
        },
        OpDef {
            id: "saver.text",
            kind: OpKind::Saver,
            description: "Writes a dataview as delimited text with a header line.",
            params: vec![ParamSpec::optional("separator", P::String, json!("\t"), "Field separator.")],
            inputs: vec![PortSpec::new("data", VarType::Dataview), PortSpec::new("path", VarType::Path)],
            outputs: path_out(),
            build: |p| {
                let sep = separator("saver.text", p)?;
                fn_op(no_schemas, move |i, _| {
                    let dst = path(i, "path")?;
                    save_text(&*data(i, "data")?, &dst, sep)?;
                    Ok(outputs([("path", Var::Path(dst))]))
                })
            },
        },
        OpDef {
            id: "saver.binary",
            kind: OpKind::Saver,
            description: "Writes a dataview as a columnar binary table.",
            params: vec![],
            inputs: vec![PortSpec::new("data", VarType::Dataview), PortSpec::new("path", VarType::Path)],
            outputs: path_out(),
            build: |_| {
                fn_op(no_schemas, |i, _| {
                    let dst = path(i, "path")?;
                    save_binary(&*data(i, "data")?, &dst)?;
                    Ok(outputs([("path", Var::Path(dst))]))
                })
            },
        },
        OpDef {
            id: "model.save",
            kind: OpKind::Saver,
            description: "Writes a fitted model archive.",
            params: vec![],
            inputs: vec![PortSpec::new("model", VarType::Model), PortSpec::new("path", VarType::Path)],
            outputs: path_out(),
            build: |_| {
                fn_op(no_schemas, |i, _| {
                    let dst = path(i, "path")?;
                    model(i, "model")?
                        .ok_or_else(|| Error::contract("model port unbound"))?
                        .save(&dst)?;
                    Ok(outputs([("path", Var::Path(dst))]))
                })
            },
        },
        OpDef {
            id: "model.load",
            kind: OpKind::Loader,
            description: "Reads a fitted model archive.",
            params: vec![],
            inputs: path_in(),
            outputs: vec![PortSpec::new("model", VarType::Model)],
            build: |_| {
                fn_op(no_schemas, |i, _| {
                    let m = PipelineModel::load(path(i, "path")?)?;
                    Ok(outputs([("model", Var::Model(Arc::new(m)))]))
                })
            },
        },
        OpDef {
            id: "model.apply",
            kind: OpKind::Transform,
            description: "Lazily scores a dataview with a fitted model.",
            params: vec![],
            inputs: vec![PortSpec::new("model", VarType::Model), PortSpec::new("data", VarType::Dataview)],
            outputs: data_out(),
            build: |_| {
                fn_op(unknown_data, |i, _| {
                    let m = model(i, "model")?.ok_or_else(|| Error::contract("model port unbound"))?;
                    Ok(outputs([("data", Var::Data(m.transform(data(i, "data")?)?))]))
                })
            },
        },
        OpDef {
            id: "data.zip",
            kind: OpKind::Transform,
            description: "Joins two row-aligned dataviews side by side.",
            params: vec![],
            inputs: vec![PortSpec::new("left", VarType::Dataview), PortSpec::new("right", VarType::Dataview)],
            outputs: data_out(),
            build: |_| {
                fn_op(
                    |i| {
                        let s = match (i.get("left").cloned().flatten(), i.get("right").cloned().flatten()) {
                            (Some(l), Some(r)) => Some(Arc::new(l.appended(r.columns().iter().cloned()))),
                            _ => None,
                        };
                        Ok(BTreeMap::from([("data".to_string(), s)]))
                    },
                    |i, _| {
                        let z = ZipView::new(data(i, "left")?, data(i, "right")?)?;
                        Ok(outputs([("data", Var::Data(Arc::new(z)))]))
                    },
                )
            },
        },
    ]
}

fn evaluator_ops() -> Vec<OpDef> {
    let d = EvalColumns::default();
    let label = || ParamSpec::optional("label", P::String, json!(d.label), "Label column.");
    let score = || ParamSpec::optional("score", P::String, json!(d.score), "Score column.");
    vec![
        OpDef {
            id: "evaluate.binary",
            kind: OpKind::Evaluator,
            description: "Accuracy, log-loss and AUC of a scored binary dataview.",
            params: vec![
                label(),
                score(),
                ParamSpec::optional("probability", P::String, json!(d.probability), "Probability column."),
            ],
            inputs: vec![PortSpec::new("data", VarType::Dataview)],
            outputs: vec![PortSpec::new("report", VarType::Report)],
            build: |p| {
                let cols: EvalColumns = parse("evaluate.binary", p)?;
                let c = cols.clone();
                Ok(Arc::new(EvalOp {
                    check: Box::new(move |i| require_columns(i, &[&c.label, &c.score, &c.probability])),
                    run: Box::new(move |v, ctx| evaluate_binary(v, &cols, ctx)),
                }))
            },
        },
        OpDef {
            id: "evaluate.regression",
            kind: OpKind::Evaluator,
            description: "Root mean squared error of a scored regression dataview.",
            params: vec![label(), score()],
            inputs: vec![PortSpec::new("data", VarType::Dataview)],
            outputs: vec![PortSpec::new("report", VarType::Report)],
            build: |p| {
                let cols: EvalColumns = parse("evaluate.regression", p)?;
                let c = cols.clone();
                Ok(Arc::new(EvalOp {
                    check: Box::new(move |i| require_columns(i, &[&c.label, &c.score])),
                    run: Box::new(move |v, ctx| evaluate_regression(v, &cols, ctx)),
                }))
            },
        },
    ]
}

type EvalCheck = Box<dyn Fn(&PortSchemas) -> Result<()> + Send + Sync>;
type EvalRun = Box<dyn Fn(&dyn DataView, &ExecContext) -> Result<crate::evaluate::EvaluationReport> + Send + Sync>;

struct EvalOp {
    check: EvalCheck,
    run: EvalRun,
}

impl Operator for EvalOp {
    fn check(&self, inputs: &PortSchemas) -> Result<PortSchemas> {
        (self.check)(inputs)?;
        Ok(PortSchemas::new())
    }

    fn run(&self, inputs: &BTreeMap<String, Var>, ctx: &ExecContext) -> Result<BTreeMap<String, Var>> {
        let report = (self.run)(&*data(inputs, "data")?, ctx)?;
        Ok(outputs([("report", Var::Report(report))]))
    }
}

pub(super) fn standard_ops() -> Vec<OpDef> {
    let mut ops = io_ops();
    ops.extend(transform_ops());
    ops.extend(learner_ops());
    ops.extend(evaluator_ops());
    ops
}
