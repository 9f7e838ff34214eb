//! `dvml train`: runs a chain graph and saves the fitted model.
//!
//! A chain is one loader reading the graph's single path input, followed by transform
//! and learner nodes that each read the previous node's `data` output. The command
//! threads each stage's model into the next and appends a save node, so the graph
//! itself only describes the data flow.

use std::collections::BTreeMap;
use std::path::Path;

use dvml::graph::{run_graph, validate_graph, Graph, NodeSpec, OpKind, Registry, Var, VarType};
use dvml::{Error, ExecContext, Result};
use serde_json::{json, Value};

const OUT_VAR: &str = "__out";
const SAVED_VAR: &str = "__saved";
const SAVE_NODE: &str = "__save";

fn chain_error(msg: impl std::fmt::Display) -> Error {
    Error::dataflow(format!("train expects a chain pipeline: {msg}"))
}

/// Rewrites a chain graph into one that also saves the final model. Returns the graph
/// and the name of its data path input.
fn into_training_graph(mut g: Graph, registry: &Registry, seed: Option<u64>) -> Result<(Graph, String)> {
    let mut paths = g.inputs.iter().filter(|(_, t)| **t == VarType::Path);
    let data_var = match (paths.next(), paths.next()) {
        (Some((name, _)), None) if g.inputs.len() == 1 => name.clone(),
        _ => return Err(chain_error("the graph must declare exactly one input, of type path")),
    };
    let Some((loader, stages)) = g.nodes.split_first_mut() else {
        return Err(chain_error("the graph has no nodes"));
    };
    let kind = |n: &NodeSpec| registry.get(&n.op).map(|d| d.kind);
    if kind(loader) != Some(OpKind::Loader) || loader.inputs.get("path") != Some(&data_var) {
        return Err(chain_error(format!("the first node must be a loader reading '{data_var}'")));
    }
    if stages.is_empty() {
        return Err(chain_error("there are no transform or learner nodes"));
    }
    let mut prev_data = loader
        .outputs
        .get("data")
        .cloned()
        .ok_or_else(|| chain_error(format!("node '{}' does not bind its data output", loader.id)))?;
    let mut prev_model: Option<String> = None;
    for node in stages.iter_mut() {
        match kind(node) {
            Some(OpKind::Transform | OpKind::Learner) => {}
            Some(_) => return Err(chain_error(format!("node '{}' ({}) is not a transform or learner", node.id, node.op))),
            None => continue, // reported as an unknown operator by validation
        }
        if node.inputs.get("data") != Some(&prev_data) {
            return Err(chain_error(format!("node '{}' must read '{prev_data}'", node.id)));
        }
        if node.inputs.contains_key("model") {
            return Err(chain_error(format!("node '{}' binds its model input; models are chained automatically", node.id)));
        }
        if let Some(m) = &prev_model {
            node.inputs.insert("model".into(), m.clone());
        }
        let model = node
            .outputs
            .entry("model".into())
            .or_insert_with(|| format!("__model_{}", node.id))
            .clone();
        prev_model = Some(model);
        prev_data = node.outputs.get("data").cloned().unwrap_or_default();
        if let (Some(seed), Some(OpKind::Learner)) = (seed, kind(node)) {
            node.params.insert("shuffle_seed".into(), json!(seed));
        }
    }
    g.nodes.push(NodeSpec {
        id: SAVE_NODE.into(),
        op: "model.save".into(),
        params: Default::default(),
        inputs: BTreeMap::from([
            ("model".into(), prev_model.expect("stages is non-empty")),
            ("path".into(), OUT_VAR.into()),
        ]),
        outputs: BTreeMap::from([("path".into(), SAVED_VAR.into())]),
    });
    g.inputs.insert(OUT_VAR.into(), VarType::Path);
    g.outputs = Some(vec![SAVED_VAR.into()]);
    Ok((g, data_var))
}

pub fn run(pipeline: &Path, data: &Path, out: &Path, seed: Option<u64>, ctx: &ExecContext) -> Result<Value> {
    let graph = Graph::from_json(&std::fs::read_to_string(pipeline)?)?;
    let registry = Registry::standard();
    let (graph, data_var) = into_training_graph(graph, &registry, seed)?;
    let validated = validate_graph(&graph, &registry)?;
    let bindings = BTreeMap::from([
        (data_var, Var::Path(data.to_path_buf())),
        (OUT_VAR.to_string(), Var::Path(out.to_path_buf())),
    ]);
    let result = run_graph(&validated, bindings, ctx)?;
    let report = &result.report;
    let rows_seen: u64 = report.nodes.iter().filter_map(|n| n.counters.get("rows_read")).sum();
    let stages: Vec<Value> = report
        .nodes
        .iter()
        .filter(|n| n.id != SAVE_NODE)
        .map(|n| json!({ "id": n.id, "op": n.op, "seconds": n.seconds }))
        .collect();
    Ok(json!({
        "model": out.display().to_string(),
        "rows_seen": rows_seen,
        "seconds": report.seconds,
        "threads": ctx.threads,
        "stages": stages,
    }))
}
