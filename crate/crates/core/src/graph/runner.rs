use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::registry::PortSchemas;
use super::validate::ValidatedGraph;
use super::Var;
use crate::dataview::ExecContext;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct NodeReport {
    pub id: String,
    pub op: String,
    pub executions: u32,
    pub seconds: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub counters: BTreeMap<String, u64>,
}

/// Per-node execution counts and timings of one run, in execution order.
#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub nodes: Vec<NodeReport>,
    pub seconds: f64,
}

pub struct RunOutput {
    /// Values of the graph's output variables.
    pub outputs: BTreeMap<String, Var>,
    pub report: RunReport,
}

impl RunOutput {
    /// Output summaries keyed by variable name, plus the run report.
    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "outputs": self.outputs.iter().map(|(k, v)| (k.clone(), v.summary())).collect::<serde_json::Map<_, _>>(),
            "report": &self.report,
        })
    }
}

/// Runs a validated graph. `bindings` must supply every declared graph input with a
/// value of its declared type.
///
/// Before any node runs, dataview schemas are propagated through the whole graph so
/// schema errors surface before data is read. Nodes then run once each in
/// [`ValidatedGraph::order`]; dataviews stay lazy until a learner, evaluator or saver
/// consumes them. Failures name the node.
pub fn run_graph(graph: &ValidatedGraph, bindings: BTreeMap<String, Var>, ctx: &ExecContext) -> Result<RunOutput> {
    let g = &graph.graph;
    for (name, ty) in &g.inputs {
        match bindings.get(name) {
            None => return Err(Error::dataflow(format!("graph input '{name}' is not bound"))),
            Some(v) if v.var_type() != *ty => {
                return Err(Error::dataflow(format!(
                    "graph input '{name}' is a {ty} but was bound to a {}",
                    v.var_type()
                )))
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = bindings.keys().find(|k| !g.inputs.contains_key(*k)) {
        return Err(Error::dataflow(format!("'{extra}' is not a graph input")));
    }

    let mut schemas: BTreeMap<String, Option<Arc<crate::schema::Schema>>> = bindings
        .iter()
        .filter_map(|(k, v)| match v {
            Var::Data(d) => Some((k.clone(), Some(d.schema().clone()))),
            _ => None,
        })
        .collect();
    for &i in &graph.order {
        let node = &g.nodes[i];
        let inputs: PortSchemas = node
            .inputs
            .iter()
            .filter_map(|(port, var)| schemas.get(var).map(|s| (port.clone(), s.clone())))
            .collect();
        let out = graph.operators[i].check(&inputs).map_err(|e| e.in_node(&node.id))?;
        for (port, var) in &node.outputs {
            if let Some(s) = out.get(port) {
                schemas.insert(var.clone(), s.clone());
            }
        }
    }

    let started = Instant::now();
    let mut vars = bindings;
    let mut reports = Vec::with_capacity(graph.order.len());
    let mut executions = vec![0u32; g.nodes.len()];
    for &i in &graph.order {
        let node = &g.nodes[i];
        let inputs: BTreeMap<String, Var> = node
            .inputs
            .iter()
            .map(|(port, var)| (port.clone(), vars[var].clone()))
            .collect();
        let t0 = Instant::now();
        executions[i] += 1;
        let mut out = graph.operators[i].run(&inputs, ctx).map_err(|e| e.in_node(&node.id))?;
        for (port, var) in &node.outputs {
            let v = out
                .remove(port)
                .ok_or_else(|| Error::contract(format!("{} produced no '{port}' output", node.op)).in_node(&node.id))?;
            vars.insert(var.clone(), v);
        }
        reports.push(NodeReport {
            id: node.id.clone(),
            op: node.op.clone(),
            executions: executions[i],
            seconds: t0.elapsed().as_secs_f64(),
            counters: BTreeMap::new(),
        });
    }
    for (r, &i) in reports.iter_mut().zip(&graph.order) {
        r.counters = graph.operators[i].counters();
    }
    let outputs = graph
        .outputs
        .iter()
        .map(|name| (name.clone(), vars[name].clone()))
        .collect();
    Ok(RunOutput {
        outputs,
        report: RunReport {
            nodes: reports,
            seconds: started.elapsed().as_secs_f64(),
        },
    })
}
