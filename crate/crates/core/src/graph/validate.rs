use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::registry::{Operator, Registry};
use super::{Graph, VarType, GRAPH_VERSION};
use crate::error::{Error, ErrorKind, Result};

/// A graph that passed [`validate_graph`]: operators built, variables typed and nodes
/// in execution order.
pub struct ValidatedGraph {
    pub(super) graph: Graph,
    pub(super) operators: Vec<Arc<dyn Operator>>,
    /// Node indices in execution order.
    pub(super) order: Vec<usize>,
    pub(super) var_types: BTreeMap<String, VarType>,
    pub(super) outputs: Vec<String>,
}

impl ValidatedGraph {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Node ids in execution order.
    pub fn order(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(|&i| self.graph.nodes[i].id.as_str())
    }

    pub fn var_type(&self, name: &str) -> Option<VarType> {
        self.var_types.get(name).copied()
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }
}

/// Checks a graph without running it: operator ids, params, port bindings, variable
/// types, single assignment, declared outputs and acyclicity. Ready nodes are ordered
/// by their position in the graph.
pub fn validate_graph(graph: &Graph, registry: &Registry) -> Result<ValidatedGraph> {
    if graph.version != GRAPH_VERSION {
        return Err(ErrorKind::Version {
            found: graph.version,
            supported: GRAPH_VERSION,
        }
        .into());
    }
    let mut ids = BTreeSet::new();
    for node in &graph.nodes {
        if node.id.is_empty() {
            return Err(Error::dataflow("node ids must be non-empty"));
        }
        if !ids.insert(node.id.as_str()) {
            return Err(Error::dataflow(format!("node id '{}' is used more than once", node.id)));
        }
    }

    let mut operators = Vec::with_capacity(graph.nodes.len());
    for node in &graph.nodes {
        let def = registry
            .get(&node.op)
            .ok_or_else(|| Error::from(ErrorKind::UnknownOperator(node.op.clone())).in_node(&node.id))?;
        for port in node.inputs.keys() {
            if def.input(port).is_none() {
                return Err(Error::dataflow(format!("{} has no input port '{port}'", def.id)).in_node(&node.id));
            }
        }
        for port in &def.inputs {
            if !port.optional && !node.inputs.contains_key(port.name) {
                return Err(Error::dataflow(format!("input port '{}' is not bound", port.name)).in_node(&node.id));
            }
        }
        for port in node.outputs.keys() {
            if def.output(port).is_none() {
                return Err(Error::dataflow(format!("{} has no output port '{port}'", def.id)).in_node(&node.id));
            }
        }
        operators.push(def.instantiate(&node.params).map_err(|e| e.in_node(&node.id))?);
    }

    // writers of every variable, with the type they write
    let mut writers: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    let mut var_types: BTreeMap<String, VarType> = BTreeMap::new();
    for (name, ty) in &graph.inputs {
        writers.entry(name).or_default().push("<input>".to_string());
        var_types.insert(name.clone(), *ty);
    }
    for node in &graph.nodes {
        let def = registry.get(&node.op).expect("checked above");
        for (port, var) in &node.outputs {
            writers.entry(var).or_default().push(node.id.clone());
            var_types.insert(var.clone(), def.output(port).expect("checked above").ty);
        }
    }
    if let Some((var, w)) = writers.iter().find(|(_, w)| w.len() > 1) {
        return Err(ErrorKind::SingleAssignment {
            variable: var.to_string(),
            writers: w.clone(),
        }
        .into());
    }

    let producer: BTreeMap<&str, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .flat_map(|(i, n)| n.outputs.values().map(move |v| (v.as_str(), i)))
        .collect();
    let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); graph.nodes.len()];
    let mut read = BTreeSet::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        let def = registry.get(&node.op).expect("checked above");
        for (port, var) in &node.inputs {
            let want = def.input(port).expect("checked above").ty;
            let Some(&have) = var_types.get(var) else {
                return Err(Error::dataflow(format!("variable '{var}' is read but never written")).in_node(&node.id));
            };
            if have != want {
                return Err(Error::dataflow(format!(
                    "input port '{port}' expects a {want} but variable '{var}' holds a {have}"
                ))
                .in_node(&node.id));
            }
            if let Some(&p) = producer.get(var.as_str()) {
                deps[i].insert(p);
            }
            read.insert(var.as_str());
        }
    }

    let outputs = match &graph.outputs {
        Some(outs) => {
            for v in outs {
                if !var_types.contains_key(v) {
                    return Err(Error::dataflow(format!("graph output '{v}' is never written")));
                }
            }
            outs.clone()
        }
        None => producer.keys().filter(|v| !read.contains(*v)).map(|v| v.to_string()).collect(),
    };

    let order = topo_order(&deps).map_err(|cycle| {
        Error::from(ErrorKind::Cycle(cycle.into_iter().map(|i| graph.nodes[i].id.clone()).collect()))
    })?;

    Ok(ValidatedGraph {
        graph: graph.clone(),
        operators,
        order,
        var_types,
        outputs,
    })
}

/// Kahn's algorithm taking the lowest ready index first. On failure returns the nodes
/// that lie on a cycle or between cycles.
fn topo_order(deps: &[BTreeSet<usize>]) -> std::result::Result<Vec<usize>, Vec<usize>> {
    let n = deps.len();
    let mut pending: Vec<usize> = deps.iter().map(BTreeSet::len).collect();
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, d) in deps.iter().enumerate() {
        for &p in d {
            users[p].push(i);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &u in &users[i] {
            pending[u] -= 1;
            if pending[u] == 0 {
                ready.insert(u);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Peel off stuck nodes that feed nothing stuck; what remains sits on cycles.
    let mut stuck: BTreeSet<usize> = (0..n).filter(|&i| pending[i] > 0).collect();
    loop {
        let leaf = stuck.iter().copied().find(|&i| !users[i].iter().any(|u| stuck.contains(u)));
        match leaf {
            Some(i) => {
                stuck.remove(&i);
            }
            None => break,
        }
    }
    Err(stuck.into_iter().collect())
}
