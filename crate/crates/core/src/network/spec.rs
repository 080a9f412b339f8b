//! Network definition documents and their validated, evaluation-ready form.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::param::{ParamError, ParamId, ParamKind, ParamSpec, DEFAULT_BINS_PER_SIDE};
use crate::score::ParamRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Object,
    #[default]
    Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum UnitKind {
    Above {
        feature: String,
        param: String,
    },
    Below {
        feature: String,
        param: String,
    },
    And {
        inputs: Vec<String>,
    },
    Or {
        inputs: Vec<String>,
    },
    Smooth {
        input: String,
        param: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scan_margin: Option<u32>,
    },
    Mono {
        input: String,
        param: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scan_margin: Option<u32>,
    },
    Count {
        input: String,
        param: String,
    },
    Fraction {
        feature: String,
        cut: f64,
        param: String,
    },
    Region {
        mask: String,
        x0: String,
        x1: String,
        y0: String,
        y1: String,
        param: String,
    },
}

impl UnitKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            UnitKind::Above { .. } => "above",
            UnitKind::Below { .. } => "below",
            UnitKind::And { .. } => "and",
            UnitKind::Or { .. } => "or",
            UnitKind::Smooth { .. } => "smooth",
            UnitKind::Mono { .. } => "mono",
            UnitKind::Count { .. } => "count",
            UnitKind::Fraction { .. } => "fraction",
            UnitKind::Region { .. } => "region",
        }
    }

    fn params(&self) -> Vec<(&'static str, &str)> {
        match self {
            UnitKind::Above { param, .. }
            | UnitKind::Below { param, .. }
            | UnitKind::Fraction { param, .. } => vec![("param", param)],
            UnitKind::Smooth { param, .. }
            | UnitKind::Mono { param, .. }
            | UnitKind::Count { param, .. } => vec![("param", param)],
            UnitKind::Region {
                x0,
                x1,
                y0,
                y1,
                param,
                ..
            } => vec![
                ("x0", x0),
                ("x1", x1),
                ("y0", y0),
                ("y1", y1),
                ("param", param),
            ],
            UnitKind::And { .. } | UnitKind::Or { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitDoc {
    pub id: String,
    #[serde(default)]
    pub scope: Scope,
    #[serde(flatten)]
    pub kind: UnitKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutputDoc {
    One(String),
    Many(Vec<String>),
}

/// The on-disk network definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    #[serde(default = "default_bins")]
    pub bins_per_side: u32,
    pub params: IndexMap<String, ParamSpec>,
    pub units: Vec<UnitDoc>,
    pub output: OutputDoc,
    /// Values used for features missing from a frame. Features without a
    /// declared default must be present.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub defaults: BTreeMap<String, f64>,
}

fn default_bins() -> u32 {
    DEFAULT_BINS_PER_SIDE
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("malformed network document: {0}")]
    Syntax(String),
    #[error("unit #{index} ({id}): {msg}")]
    Unit { index: usize, id: String, msg: String },
    #[error("unit {unit}: unknown unit type `{ty}`")]
    UnknownType { unit: String, ty: String },
    #[error("duplicate unit id `{0}`")]
    DuplicateUnit(String),
    #[error("unit {unit}: {field} references unknown parameter `{param}`")]
    UnknownParam {
        unit: String,
        field: &'static str,
        param: String,
    },
    #[error("unit {unit}: input `{input}` is not a unit")]
    UnknownInput { unit: String, input: String },
    #[error("parameter `{param}` is referenced by {n} units; each parameter must belong to exactly one unit")]
    ParamSharing { param: String, n: usize },
    #[error("parameter `{0}` is not referenced by any unit")]
    UnusedParam(String),
    #[error("parameter `{param}`: {source}")]
    BadParam {
        param: String,
        #[source]
        source: ParamError,
    },
    #[error("unit {unit}: {field} must be an integer parameter with value and lower bound >= {min}")]
    ParamKindMismatch {
        unit: String,
        field: &'static str,
        min: f64,
    },
    #[error("wiring cycle through units: {0}")]
    Cycle(String),
    #[error("unit {unit}: {msg}")]
    Scope { unit: String, msg: String },
    #[error("network must have exactly one output unit, got {0}")]
    Outputs(usize),
    #[error("output `{0}` is not a unit")]
    UnknownOutput(String),
    #[error("gate {0} has no inputs")]
    EmptyGate(String),
    #[error("unknown parameter `{0}`")]
    NoSuchParam(String),
    #[error("value {value} for parameter `{param}` is outside [{lo}, {hi}]")]
    SubstituteOutOfBounds {
        param: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

/// Resolved unit operation with unit and parameter references turned into indices.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Op {
    Above { feature: String, param: ParamId },
    Below { feature: String, param: ParamId },
    And { inputs: Vec<usize> },
    Or { inputs: Vec<usize> },
    Smooth { input: usize, param: ParamId, scan_margin: Option<u32> },
    Mono { input: usize, param: ParamId, scan_margin: Option<u32> },
    Count { input: usize, param: ParamId },
    Fraction { feature: String, cut: f64, param: ParamId },
    Region { mask: String, bounds: [ParamId; 4], param: ParamId },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Unit {
    pub id: String,
    pub scope: Scope,
    pub op: Op,
}

/// A validated network: acyclic wiring, consistent scopes, one output, and
/// every parameter owned by exactly one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    doc: NetworkDoc,
    pub(crate) units: Vec<Unit>,
    pub(crate) object_order: Vec<usize>,
    pub(crate) frame_order: Vec<usize>,
    pub(crate) output: usize,
    pub(crate) temporal_slots: Vec<Option<usize>>,
    param_owner: Vec<usize>,
}

/// Parse and validate a network document.
pub fn parse_network(text: &str) -> Result<NetworkSpec, NetworkError> {
    let raw: serde_json::Value =
        serde_json::from_str(text).map_err(|e| NetworkError::Syntax(e.to_string()))?;
    // parse units one at a time so errors can name the offending unit
    if let Some(units) = raw.get("units").and_then(|u| u.as_array()) {
        for (index, u) in units.iter().enumerate() {
            let id = u
                .get("id")
                .and_then(|v| v.as_str())
                .unwrap_or("?")
                .to_string();
            if let Some(ty) = u.get("type").and_then(|t| t.as_str()) {
                const KNOWN: [&str; 9] = [
                    "above", "below", "and", "or", "smooth", "mono", "count", "fraction", "region",
                ];
                if !KNOWN.contains(&ty) {
                    return Err(NetworkError::UnknownType {
                        unit: id,
                        ty: ty.to_string(),
                    });
                }
            }
            if let Err(e) = serde_json::from_value::<UnitDoc>(u.clone()) {
                return Err(NetworkError::Unit {
                    index,
                    id,
                    msg: e.to_string(),
                });
            }
        }
    }
    let doc: NetworkDoc =
        serde_json::from_value(raw).map_err(|e| NetworkError::Syntax(e.to_string()))?;
    NetworkSpec::from_doc(doc)
}

impl NetworkSpec {
    pub fn from_doc(doc: NetworkDoc) -> Result<Self, NetworkError> {
        for (name, p) in &doc.params {
            p.validate().map_err(|source| NetworkError::BadParam {
                param: name.clone(),
                source,
            })?;
        }

        let mut index_of: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, u) in doc.units.iter().enumerate() {
            if index_of.insert(u.id.as_str(), i).is_some() {
                return Err(NetworkError::DuplicateUnit(u.id.clone()));
            }
        }

        let mut owners: Vec<Vec<usize>> = vec![Vec::new(); doc.params.len()];
        let mut units = Vec::with_capacity(doc.units.len());
        for (i, u) in doc.units.iter().enumerate() {
            let pid = |field: &'static str, name: &str| -> Result<ParamId, NetworkError> {
                doc.params
                    .get_index_of(name)
                    .map(|ix| ParamId(ix as u32))
                    .ok_or_else(|| NetworkError::UnknownParam {
                        unit: u.id.clone(),
                        field,
                        param: name.to_string(),
                    })
            };
            for (field, name) in u.kind.params() {
                owners[pid(field, name)?.index()].push(i);
            }
            let input = |name: &str| -> Result<usize, NetworkError> {
                index_of
                    .get(name)
                    .copied()
                    .ok_or_else(|| NetworkError::UnknownInput {
                        unit: u.id.clone(),
                        input: name.to_string(),
                    })
            };
            let integer = |field: &'static str, id: ParamId, min: f64| -> Result<(), NetworkError> {
                let p = &doc.params[id.index()];
                if p.kind != ParamKind::Integer || p.value < min || p.lo < min {
                    return Err(NetworkError::ParamKindMismatch {
                        unit: u.id.clone(),
                        field,
                        min,
                    });
                }
                Ok(())
            };
            let op = match &u.kind {
                UnitKind::Above { feature, param } => Op::Above {
                    feature: feature.clone(),
                    param: pid("param", param)?,
                },
                UnitKind::Below { feature, param } => Op::Below {
                    feature: feature.clone(),
                    param: pid("param", param)?,
                },
                UnitKind::And { inputs } | UnitKind::Or { inputs } => {
                    if inputs.is_empty() {
                        return Err(NetworkError::EmptyGate(u.id.clone()));
                    }
                    let ix = inputs.iter().map(|n| input(n)).collect::<Result<Vec<_>, _>>()?;
                    if matches!(u.kind, UnitKind::And { .. }) {
                        Op::And { inputs: ix }
                    } else {
                        Op::Or { inputs: ix }
                    }
                }
                UnitKind::Smooth {
                    input: inp,
                    param,
                    scan_margin,
                }
                | UnitKind::Mono {
                    input: inp,
                    param,
                    scan_margin,
                } => {
                    let id = pid("param", param)?;
                    integer("param", id, 1.0)?;
                    if matches!(u.kind, UnitKind::Smooth { .. }) {
                        Op::Smooth {
                            input: input(inp)?,
                            param: id,
                            scan_margin: *scan_margin,
                        }
                    } else {
                        Op::Mono {
                            input: input(inp)?,
                            param: id,
                            scan_margin: *scan_margin,
                        }
                    }
                }
                UnitKind::Count { input: inp, param } => {
                    let id = pid("param", param)?;
                    integer("param", id, 1.0)?;
                    Op::Count {
                        input: input(inp)?,
                        param: id,
                    }
                }
                UnitKind::Fraction {
                    feature,
                    cut,
                    param,
                } => Op::Fraction {
                    feature: feature.clone(),
                    cut: *cut,
                    param: pid("param", param)?,
                },
                UnitKind::Region {
                    mask,
                    x0,
                    x1,
                    y0,
                    y1,
                    param,
                } => {
                    let bounds = [
                        pid("x0", x0)?,
                        pid("x1", x1)?,
                        pid("y0", y0)?,
                        pid("y1", y1)?,
                    ];
                    for (field, id) in ["x0", "x1", "y0", "y1"].into_iter().zip(bounds) {
                        integer(field, id, 0.0)?;
                    }
                    let v = |k: usize| doc.params[bounds[k].index()].value;
                    if v(0) >= v(1) || v(2) >= v(3) {
                        return Err(NetworkError::Scope {
                            unit: u.id.clone(),
                            msg: "region bounds must satisfy x0 < x1 and y0 < y1".into(),
                        });
                    }
                    Op::Region {
                        mask: mask.clone(),
                        bounds,
                        param: pid("param", param)?,
                    }
                }
            };
            units.push(Unit {
                id: u.id.clone(),
                scope: u.scope,
                op,
            });
        }

        for (ix, (name, _)) in doc.params.iter().enumerate() {
            match owners[ix].len() {
                0 => return Err(NetworkError::UnusedParam(name.clone())),
                1 => {}
                n => {
                    return Err(NetworkError::ParamSharing {
                        param: name.clone(),
                        n,
                    })
                }
            }
        }
        let param_owner = owners.into_iter().map(|o| o[0]).collect();

        check_scopes(&units)?;
        let order = topo_order(&units)?;

        let outputs: Vec<&String> = match &doc.output {
            OutputDoc::One(o) => vec![o],
            OutputDoc::Many(v) => v.iter().collect(),
        };
        if outputs.len() != 1 {
            return Err(NetworkError::Outputs(outputs.len()));
        }
        let output = *index_of
            .get(outputs[0].as_str())
            .ok_or_else(|| NetworkError::UnknownOutput(outputs[0].clone()))?;
        if units[output].scope != Scope::Frame {
            return Err(NetworkError::Scope {
                unit: units[output].id.clone(),
                msg: "the output unit must be frame-level".into(),
            });
        }

        let (object_order, frame_order): (Vec<usize>, Vec<usize>) =
            order.into_iter().partition(|&i| units[i].scope == Scope::Object);
        let mut next = 0;
        let temporal_slots = units
            .iter()
            .map(|u| match u.op {
                Op::Smooth { .. } | Op::Mono { .. } => {
                    next += 1;
                    Some(next - 1)
                }
                _ => None,
            })
            .collect();

        Ok(NetworkSpec {
            doc,
            units,
            object_order,
            frame_order,
            output,
            temporal_slots,
            param_owner,
        })
    }

    pub fn doc(&self) -> &NetworkDoc {
        &self.doc
    }

    pub fn into_doc(self) -> NetworkDoc {
        self.doc
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.doc).expect("network serializes");
        s.push('\n');
        s
    }

    pub fn bins_per_side(&self) -> u32 {
        self.doc.bins_per_side
    }

    pub fn params(&self) -> &IndexMap<String, ParamSpec> {
        &self.doc.params
    }

    pub fn param(&self, id: ParamId) -> &ParamSpec {
        &self.doc.params[id.index()]
    }

    pub fn param_name(&self, id: ParamId) -> &str {
        self.doc
            .params
            .get_index(id.index())
            .map(|(k, _)| k.as_str())
            .unwrap_or("?")
    }

    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.doc.params.get_index_of(name).map(|i| ParamId(i as u32))
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.doc.params.len()).map(|i| ParamId(i as u32))
    }

    pub(crate) fn param_ref(&self, id: ParamId) -> ParamRef<'_> {
        ParamRef::new(id, self.param(id), self.doc.bins_per_side)
    }

    /// Id of the unit owning a parameter.
    pub fn owner_of(&self, id: ParamId) -> &str {
        &self.units[self.param_owner[id.index()]].id
    }

    pub fn unit_ids(&self) -> impl Iterator<Item = &str> {
        self.units.iter().map(|u| u.id.as_str())
    }

    pub fn unit_type(&self, id: &str) -> Option<&'static str> {
        self.doc
            .units
            .iter()
            .find(|u| u.id == id)
            .map(|u| u.kind.type_name())
    }

    pub fn output_unit(&self) -> &str {
        &self.units[self.output].id
    }

    pub fn temporal_unit_count(&self) -> usize {
        self.temporal_slots.iter().flatten().count()
    }

    /// Copy of the network with one parameter's value replaced.
    /// Integer parameters are rounded to the nearest whole number.
    pub fn substitute_param(&self, name: &str, value: f64) -> Result<NetworkSpec, NetworkError> {
        let id = self
            .param_id(name)
            .ok_or_else(|| NetworkError::NoSuchParam(name.to_string()))?;
        self.substitute(id, value)
    }

    pub fn substitute(&self, id: ParamId, value: f64) -> Result<NetworkSpec, NetworkError> {
        let (name, p) = self
            .doc
            .params
            .get_index(id.index())
            .ok_or_else(|| NetworkError::NoSuchParam(format!("#{}", id.0)))?;
        let v = p.snap(value);
        if !p.in_bounds(v) || !v.is_finite() {
            return Err(NetworkError::SubstituteOutOfBounds {
                param: name.clone(),
                value,
                lo: p.lo,
                hi: p.hi,
            });
        }
        let mut spec = p.clone();
        spec.value = v;
        self.with_param_spec(id, spec)
    }

    /// Copy of the network with a parameter's whole spec (value and tolerances) replaced.
    pub fn with_param_spec(&self, id: ParamId, spec: ParamSpec) -> Result<NetworkSpec, NetworkError> {
        let mut doc = self.doc.clone();
        let (name, slot) = doc
            .params
            .get_index_mut(id.index())
            .ok_or_else(|| NetworkError::NoSuchParam(format!("#{}", id.0)))?;
        spec.validate().map_err(|source| NetworkError::BadParam {
            param: name.clone(),
            source,
        })?;
        *slot = spec;
        NetworkSpec::from_doc(doc)
    }

    pub fn with_bins_per_side(&self, bins: u32) -> NetworkSpec {
        let mut out = self.clone();
        out.doc.bins_per_side = bins.max(1);
        out
    }

    /// Feature names read by object-level units and by frame-level units.
    pub fn features(&self) -> (BTreeSet<&str>, BTreeSet<&str>) {
        let mut obj = BTreeSet::new();
        let mut frame = BTreeSet::new();
        for u in &self.units {
            let f = match &u.op {
                Op::Above { feature, .. } | Op::Below { feature, .. } => feature.as_str(),
                Op::Fraction { feature, .. } => feature.as_str(),
                _ => continue,
            };
            if u.scope == Scope::Object {
                obj.insert(f);
            } else {
                frame.insert(f);
            }
        }
        (obj, frame)
    }
}

fn check_scopes(units: &[Unit]) -> Result<(), NetworkError> {
    for u in units {
        let bad = |msg: &str| {
            Err(NetworkError::Scope {
                unit: u.id.clone(),
                msg: msg.to_string(),
            })
        };
        match (&u.op, u.scope) {
            (Op::Above { .. } | Op::Below { .. }, _) => {}
            (Op::And { inputs } | Op::Or { inputs }, scope) => {
                if inputs.iter().any(|&i| units[i].scope != scope) {
                    return bad(if scope == Scope::Object {
                        "object-level gates cannot consume frame-level outputs"
                    } else {
                        "frame-level gates need frame-level inputs; aggregate object outputs with a count unit"
                    });
                }
            }
            (Op::Count { input, .. }, Scope::Frame) => {
                if units[*input].scope != Scope::Object {
                    return bad("count units aggregate an object-level input");
                }
            }
            (Op::Smooth { input, .. } | Op::Mono { input, .. }, Scope::Frame) => {
                if units[*input].scope != Scope::Frame {
                    return bad("temporal units need a frame-level input");
                }
            }
            (Op::Fraction { .. } | Op::Region { .. }, Scope::Frame) => {}
            (_, Scope::Object) => return bad("only thresholds and gates can be object-level"),
        }
    }
    Ok(())
}

fn topo_order(units: &[Unit]) -> Result<Vec<usize>, NetworkError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    fn inputs(op: &Op) -> &[usize] {
        match op {
            Op::And { inputs } | Op::Or { inputs } => inputs,
            Op::Smooth { input, .. } | Op::Mono { input, .. } | Op::Count { input, .. } => {
                std::slice::from_ref(input)
            }
            _ => &[],
        }
    }
    fn visit(
        i: usize,
        units: &[Unit],
        marks: &mut [Mark],
        stack: &mut Vec<usize>,
        out: &mut Vec<usize>,
    ) -> Result<(), NetworkError> {
        match marks[i] {
            Mark::Done => return Ok(()),
            Mark::Active => {
                let start = stack.iter().position(|&s| s == i).unwrap_or(0);
                let mut names: Vec<&str> = stack[start..].iter().map(|&s| units[s].id.as_str()).collect();
                names.push(&units[i].id);
                return Err(NetworkError::Cycle(names.join(" -> ")));
            }
            Mark::New => {}
        }
        marks[i] = Mark::Active;
        stack.push(i);
        for &j in inputs(&units[i].op) {
            visit(j, units, marks, stack, out)?;
        }
        stack.pop();
        marks[i] = Mark::Done;
        out.push(i);
        Ok(())
    }
    let mut marks = vec![Mark::New; units.len()];
    let mut out = Vec::with_capacity(units.len());
    let mut stack = Vec::new();
    for i in 0..units.len() {
        visit(i, units, &mut marks, &mut stack, &mut out)?;
    }
    Ok(out)
}
