use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{Map, Value};

use super::{Var, VarType};
use crate::dataview::ExecContext;
use crate::error::{Error, ErrorKind, Result};
use crate::schema::Schema;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Loader,
    Transform,
    Learner,
    Evaluator,
    Saver,
}

/// JSON type of an operator parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
    StringArray,
    IntegerArray,
    ObjectArray,
}

impl ParamType {
    fn accepts(self, v: &Value) -> bool {
        let int = |v: &Value| v.is_i64() || v.is_u64();
        match self {
            ParamType::String => v.is_string(),
            ParamType::Integer => int(v),
            ParamType::Number => v.is_number(),
            ParamType::Boolean => v.is_boolean(),
            ParamType::StringArray => v.as_array().is_some_and(|a| a.iter().all(Value::is_string)),
            ParamType::IntegerArray => v.as_array().is_some_and(|a| a.iter().all(int)),
            ParamType::ObjectArray => v.as_array().is_some_and(|a| a.iter().all(Value::is_object)),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    #[serde(rename = "type")]
    pub ty: ParamType,
    pub required: bool,
    /// Value used when the param is omitted; `null` means "unset".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    pub description: &'static str,
}

impl ParamSpec {
    pub fn required(name: &'static str, ty: ParamType, description: &'static str) -> Self {
        ParamSpec {
            name,
            ty,
            required: true,
            default: None,
            description,
        }
    }

    pub fn optional(name: &'static str, ty: ParamType, default: Value, description: &'static str) -> Self {
        ParamSpec {
            name,
            ty,
            required: false,
            default: Some(default),
            description,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PortSpec {
    pub name: &'static str,
    #[serde(rename = "type")]
    pub ty: VarType,
    pub optional: bool,
}

impl PortSpec {
    pub const fn new(name: &'static str, ty: VarType) -> Self {
        PortSpec {
            name,
            ty,
            optional: false,
        }
    }

    pub const fn optional(name: &'static str, ty: VarType) -> Self {
        PortSpec {
            name,
            ty,
            optional: true,
        }
    }
}

/// Dataview schemas by port name; `None` where the schema is only known at run time.
pub type PortSchemas = BTreeMap<String, Option<Arc<Schema>>>;

/// A configured operator instance.
pub trait Operator: Send + Sync {
    /// Schemas of the dataview outputs, derived without reading data.
    fn check(&self, inputs: &PortSchemas) -> Result<PortSchemas>;

    /// Produces values for the output ports. Only bound outputs are kept.
    fn run(&self, inputs: &BTreeMap<String, Var>, ctx: &ExecContext) -> Result<BTreeMap<String, Var>>;

    /// Counters reported after the run, such as rows read by a loader.
    fn counters(&self) -> BTreeMap<String, u64> {
        BTreeMap::new()
    }
}

pub type OpBuilder = fn(&Map<String, Value>) -> Result<Arc<dyn Operator>>;

/// A registered operator: its documentation, parameter schema, ports and builder.
#[derive(Clone, Serialize)]
pub struct OpDef {
    pub id: &'static str,
    pub kind: OpKind,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
    pub inputs: Vec<PortSpec>,
    pub outputs: Vec<PortSpec>,
    #[serde(skip)]
    pub build: OpBuilder,
}

impl OpDef {
    pub fn input(&self, name: &str) -> Option<&PortSpec> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&PortSpec> {
        self.outputs.iter().find(|p| p.name == name)
    }

    /// Checks `params` against the declared schema and fills in defaults.
    pub fn resolve_params(&self, params: &Map<String, Value>) -> Result<Map<String, Value>> {
        let target = || self.id.to_string();
        for name in params.keys() {
            if !self.params.iter().any(|p| p.name == name) {
                return Err(Error::params(target(), format!("unknown parameter '{name}'")));
            }
        }
        let mut out = Map::new();
        for spec in &self.params {
            match params.get(spec.name) {
                Some(Value::Null) if !spec.required && spec.default == Some(Value::Null) => {
                    out.insert(spec.name.to_string(), Value::Null);
                }
                Some(v) if spec.ty.accepts(v) => {
                    out.insert(spec.name.to_string(), v.clone());
                }
                Some(v) => {
                    return Err(Error::params(
                        target(),
                        format!("parameter '{}' must be {:?}, got {v}", spec.name, spec.ty),
                    ))
                }
                None if spec.required => {
                    return Err(Error::params(target(), format!("missing required parameter '{}'", spec.name)))
                }
                None => {
                    out.insert(spec.name.to_string(), spec.default.clone().unwrap_or(Value::Null));
                }
            }
        }
        Ok(out)
    }

    /// Validates `params` and builds an operator instance.
    pub fn instantiate(&self, params: &Map<String, Value>) -> Result<Arc<dyn Operator>> {
        let resolved = self.resolve_params(params)?;
        (self.build)(&resolved).map_err(|e| match e.into_kind() {
            k @ ErrorKind::Params { .. } => k.into(),
            k => Error::params(self.id, Error::from(k).to_string()),
        })
    }
}

/// Operators by id.
#[derive(Clone, Default)]
pub struct Registry {
    ops: BTreeMap<&'static str, OpDef>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    /// Every built-in operator.
    pub fn standard() -> Self {
        let mut r = Registry::new();
        for def in super::ops::standard_ops() {
            r.register(def).expect("built-in operator ids are unique");
        }
        r
    }

    pub fn register(&mut self, def: OpDef) -> Result<()> {
        if self.ops.contains_key(def.id) {
            return Err(ErrorKind::Registry(format!("operator '{}' is already registered", def.id)).into());
        }
        self.ops.insert(def.id, def);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&OpDef> {
        self.ops.get(id)
    }

    /// Registered operators sorted by id.
    pub fn ops(&self) -> impl Iterator<Item = &OpDef> {
        self.ops.values()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn manifest(&self) -> Manifest<'_> {
        Manifest {
            version: MANIFEST_VERSION,
            operators: self.ops.values().collect(),
        }
    }
}

/// Machine-readable description of every registered operator, sorted by id.
#[derive(Serialize)]
pub struct Manifest<'a> {
    pub version: u32,
    pub operators: Vec<&'a OpDef>,
}

impl Manifest<'_> {
    /// Pretty JSON with object keys sorted, so parsing and re-printing is lossless.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("manifests always serialize");
        let mut s = serde_json::to_string_pretty(&v).expect("values always serialize");
        s.push('\n');
        s
    }
}
