//! Operator graphs described in JSON.
//!
//! Every runnable operator is registered with its parameter schema and typed ports;
//! the machine-readable manifest is generated from that registry. A graph wires
//! operator instances together through named, single-assignment variables and is
//! validated as a whole before anything runs.

mod ops;
mod registry;
mod runner;
mod validate;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use registry::{Manifest, OpDef, OpKind, Operator, ParamSpec, ParamType, PortSpec, Registry, MANIFEST_VERSION};
pub use runner::{run_graph, NodeReport, RunOutput, RunReport};
pub use validate::{validate_graph, ValidatedGraph};

use crate::dataview::DataView;
use crate::evaluate::EvaluationReport;
use crate::pipeline::PipelineModel;

pub const GRAPH_VERSION: u32 = 1;

fn graph_version() -> u32 {
    GRAPH_VERSION
}

/// Kinds of value a graph variable can hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarType {
    Dataview,
    Model,
    Report,
    Path,
}

impl std::fmt::Display for VarType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VarType::Dataview => "dataview",
            VarType::Model => "model",
            VarType::Report => "report",
            VarType::Path => "path",
        })
    }
}

/// A graph as written in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Graph {
    #[serde(default = "graph_version")]
    pub version: u32,
    /// Variables supplied by the caller, with their types.
    #[serde(default)]
    pub inputs: BTreeMap<String, VarType>,
    /// Variables returned by a run. Defaults to every node output no node reads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<String>>,
    pub nodes: Vec<NodeSpec>,
}

/// One operator instance: its params and the variables bound to its ports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub op: String,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
}

impl Graph {
    pub fn from_json(s: &str) -> crate::error::Result<Graph> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graphs always serialize")
    }
}

/// The value of a graph variable.
#[derive(Clone)]
pub enum Var {
    Data(Arc<dyn DataView>),
    Model(Arc<PipelineModel>),
    Report(EvaluationReport),
    Path(PathBuf),
}

impl Var {
    pub fn var_type(&self) -> VarType {
        match self {
            Var::Data(_) => VarType::Dataview,
            Var::Model(_) => VarType::Model,
            Var::Report(_) => VarType::Report,
            Var::Path(_) => VarType::Path,
        }
    }

    /// JSON summary used when reporting run outputs.
    pub fn summary(&self) -> serde_json::Value {
        match self {
            Var::Data(v) => serde_json::json!({ "type": "dataview", "schema": &**v.schema() }),
            Var::Model(m) => serde_json::json!({
                "type": "model",
                "stages": m.stages().iter().map(|s| s.op_id()).collect::<Vec<_>>(),
            }),
            Var::Report(r) => serde_json::to_value(r).expect("reports always serialize"),
            Var::Path(p) => serde_json::Value::String(p.display().to_string()),
        }
    }
}

impl std::fmt::Debug for Var {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.summary())
    }
}
