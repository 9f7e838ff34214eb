//! Command-line front end. Every command prints one JSON document on stdout; errors go
//! to stderr. Exit status is 0 on success, 2 for validation errors (bad graphs, params,
//! schemas or arguments) and 3 for failures while running.

mod data;
mod train;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use dvml::bench;
use dvml::evaluate::{evaluate_binary, evaluate_regression, EvalColumns};
use dvml::graph::{run_graph, validate_graph, Graph, Registry, Var, VarType};
use dvml::io::{infer_schema, save_text_columns};
use dvml::pipeline::PipelineModel;
use dvml::{DataView, Error, ExecContext, Result, Value};
use serde_json::json;

#[derive(Parser)]
#[command(name = "dvml", version, about = "Train, apply and evaluate streaming ML pipelines")]
struct Cli {
    /// Worker threads for parallel scans [default: available cores]
    #[arg(long, global = true, env = "DVML_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Binary,
    Regression,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Getters,
    Streaming,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a chain pipeline graph over a data file and save the model
    Train {
        #[arg(long)]
        pipeline: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Shuffle seed given to every learner
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a data file with a saved model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "tsv")]
        format: Format,
    },
    /// Score a labeled data file and print metrics
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
    },
    /// Infer a loader configuration for a delimited text file
    Schema {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "\t")]
        sep: char,
        #[arg(long, default_value_t = 1000)]
        sample: usize,
    },
    /// Run an operator graph
    GraphRun {
        #[arg(long)]
        graph: PathBuf,
        /// Graph input binding, `name=path`; model inputs are read from archives and
        /// dataview inputs from data files
        #[arg(long = "bind", value_name = "NAME=PATH")]
        bind: Vec<String>,
    },
    /// Run a built-in benchmark
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        rows: Option<u64>,
    },
    /// Print the operator manifest
    Manifest,
}

fn context(threads: Option<usize>) -> ExecContext {
    let n = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    ExecContext::with_threads(n)
}

fn scored(model: &Path, data: &Path) -> Result<(PipelineModel, Arc<dyn DataView>)> {
    let model = PipelineModel::load(model)?;
    let input = data::open(data, Some(model.input_schema()))?;
    let out = model.transform(input)?;
    Ok((model, out))
}

fn predict(model: &Path, data: &Path, out: &Path, format: Format) -> Result<serde_json::Value> {
    let (model, scored) = scored(model, data)?;
    let cols = model.prediction_columns();
    let names: Vec<&str> = cols.iter().map(|&c| scored.schema().columns()[c].name.as_str()).collect();
    let rows = match format {
        Format::Tsv => save_text_columns(&*scored, &cols, out, '\t')?.rows,
        Format::Json => {
            let mut w = BufWriter::new(File::create(out)?);
            let mut cur = scored.cursor(&cols)?;
            let mut getters = cols.iter().map(|&c| cur.get_getter_dyn(c)).collect::<Result<Vec<_>>>()?;
            let mut values: Vec<Value> = cols
                .iter()
                .map(|&c| Value::missing_for(&scored.schema().columns()[c].ty))
                .collect();
            let mut rows = 0u64;
            while cur.move_next()? {
                let mut obj = serde_json::Map::new();
                for ((g, v), name) in getters.iter_mut().zip(&mut values).zip(&names) {
                    g.fill_value(v)?;
                    obj.insert(name.to_string(), v.to_json());
                }
                serde_json::to_writer(&mut w, &obj)?;
                w.write_all(b"\n")?;
                rows += 1;
            }
            w.flush()?;
            rows
        }
    };
    Ok(json!({ "rows": rows, "columns": names, "out": out.display().to_string() }))
}

fn eval(model: &Path, data: &Path, task: Task, ctx: &ExecContext) -> Result<serde_json::Value> {
    let (_, scored) = scored(model, data)?;
    let cols = EvalColumns::default();
    let report = match task {
        Task::Binary => evaluate_binary(&*scored, &cols, ctx)?,
        Task::Regression => evaluate_regression(&*scored, &cols, ctx)?,
    };
    Ok(serde_json::to_value(report)?)
}

fn graph_run(graph: &Path, binds: &[String], ctx: &ExecContext) -> Result<serde_json::Value> {
    let graph = Graph::from_json(&std::fs::read_to_string(graph)?)?;
    let validated = validate_graph(&graph, &Registry::standard())?;
    let mut bindings = BTreeMap::new();
    for b in binds {
        let (name, path) = b
            .split_once('=')
            .ok_or_else(|| Error::invalid_argument(format!("binding '{b}' is not of the form name=path")))?;
        let path = PathBuf::from(path);
        let var = match validated.graph().inputs.get(name) {
            Some(VarType::Path) => Var::Path(path),
            Some(VarType::Model) => Var::Model(Arc::new(PipelineModel::load(&path)?)),
            Some(VarType::Dataview) => Var::Data(data::open(&path, None)?),
            Some(VarType::Report) => {
                return Err(Error::invalid_argument(format!("input '{name}' is a report and cannot be bound from a file")))
            }
            None => return Err(Error::dataflow(format!("'{name}' is not a graph input"))),
        };
        if bindings.insert(name.to_string(), var).is_some() {
            return Err(Error::invalid_argument(format!("'{name}' is bound more than once")));
        }
    }
    Ok(run_graph(&validated, bindings, ctx)?.summary())
}

fn bench(suite: Suite, rows: Option<u64>, ctx: &ExecContext) -> Result<serde_json::Value> {
    match suite {
        Suite::Getters => {
            let report = bench::getters::run(rows.unwrap_or(1_000_000) as usize, 3, 7)?;
            Ok(serde_json::to_value(report)?)
        }
        Suite::Streaming => {
            let dir = std::env::temp_dir().join(format!("dvml-bench-{}", std::process::id()));
            std::fs::create_dir_all(&dir)?;
            let report = bench::streaming::run(rows.unwrap_or(500_000), &dir, ctx);
            let _ = std::fs::remove_dir_all(&dir);
            Ok(serde_json::to_value(report?)?)
        }
    }
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let ctx = context(cli.threads);
    match cli.command {
        Command::Train {
            pipeline,
            data,
            out,
            seed,
        } => train::run(&pipeline, &data, &out, seed, &ctx),
        Command::Predict {
            model,
            data,
            out,
            format,
        } => predict(&model, &data, &out, format),
        Command::Eval { model, data, task } => eval(&model, &data, task, &ctx),
        Command::Schema { data, sep, sample } => Ok(serde_json::to_value(infer_schema(&data, sep, sample)?)?),
        Command::GraphRun { graph, bind } => graph_run(&graph, &bind, &ctx),
        Command::Bench { suite, rows } => bench(suite, rows, &ctx),
        Command::Manifest => Ok(serde_json::from_str(&Registry::standard().manifest().to_json())?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            let text = serde_json::to_string_pretty(&out).expect("values always serialize");
            // a closed stdout (say, piped into `head`) is not a failure of the command
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
