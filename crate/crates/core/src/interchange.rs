//! JSON interchange format for audited instances.
//!
//! ```text
//! {
//!   "features":  ["E", "D", "S", "H"],
//!   "open":      ["E", "D"],
//!   "private":   ["S", "H"],
//!   "sensitive": {"feature": "S", "value": true},
//!   "labels":    [0, 1],
//!   "model":     {"kind": "formula" | "tree" | "threshold", "body": ...}
//! }
//! ```
//!
//! Formula bodies are nested nodes: `{"op": "and"|"or", "args": [..]}`,
//! `{"op": "not", "args": [node]}`, `{"op": "var", "name": "D"}`,
//! `{"op": "const", "value": true}`. A formula maps `false` to `labels[0]`
//! and `true` to `labels[1]`.
//!
//! Tree bodies are either an integer leaf label or
//! `{"test": "D", "if_true": node, "if_false": node}`.
//!
//! Threshold bodies are a list of layers, each a list of units
//! `{"weights": [int, ..], "bias": int}`; a unit fires iff the weighted sum of
//! its inputs is at least `bias`. The first layer reads the features in
//! declaration order, later layers read the previous layer's outputs. The
//! final layer has `labels.len() - 1` units and the decision is
//! `labels[number of firing final units]`.
//!
//! Unknown keys are rejected everywhere.

use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::error::{ModelError, ParseError};
use crate::model::{
    DecisionLabel, DecisionModel, FeatureSpace, Formula, ModelKind, ProfilePartition,
    ThresholdNetwork, ThresholdUnit, Tree,
};

/// A validated feature space, partition and model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub space: FeatureSpace,
    pub partition: ProfilePartition,
    pub model: DecisionModel,
}

impl Instance {
    pub fn new(space: FeatureSpace, partition: ProfilePartition, model: DecisionModel) -> Self {
        Instance {
            space,
            partition,
            model,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    features: Vec<String>,
    open: Vec<String>,
    private: Vec<String>,
    sensitive: RawSensitive,
    labels: Vec<u32>,
    model: RawModel,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSensitive {
    feature: String,
    value: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: String,
    body: Value,
}

fn schema(location: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Schema {
        location: location.into(),
        message: message.into(),
    }
}

fn invalid(location: impl Into<String>, source: ModelError) -> ParseError {
    ParseError::Invalid {
        location: location.into(),
        source,
    }
}

pub fn parse_model(document: &str) -> Result<Instance, ParseError> {
    let raw: RawDocument = serde_json::from_str(document).map_err(|e| {
        schema(
            format!("line {}, column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;

    let space =
        FeatureSpace::new(raw.features.iter().cloned()).map_err(|e| invalid("features", e))?;
    let lookup = |name: &str, location: String| {
        space
            .index_of(name)
            .ok_or_else(|| ParseError::DanglingFeature {
                location,
                name: name.to_string(),
            })
    };

    let mut seen = vec![false; space.len()];
    let mut open = Vec::with_capacity(raw.open.len());
    for (i, name) in raw.open.iter().enumerate() {
        let f = lookup(name, format!("open[{i}]"))?;
        if std::mem::replace(&mut seen[f], true) {
            return Err(invalid(
                format!("open[{i}]"),
                ModelError::DuplicateFeature(name.clone()),
            ));
        }
        open.push(f);
    }
    for (i, name) in raw.private.iter().enumerate() {
        let f = lookup(name, format!("private[{i}]"))?;
        if std::mem::replace(&mut seen[f], true) {
            return Err(schema(
                format!("private[{i}]"),
                format!("feature `{name}` listed twice across open/private"),
            ));
        }
    }
    if let Some(f) = seen.iter().position(|s| !s) {
        return Err(schema(
            "open/private",
            format!("feature `{}` is in neither profile", space.name(f)),
        ));
    }

    let sensitive = lookup(&raw.sensitive.feature, "sensitive.feature".into())?;
    let partition = ProfilePartition::new(&space, &open, sensitive, raw.sensitive.value)
        .map_err(|e| invalid("sensitive.feature", e))?;

    let labels: Vec<DecisionLabel> = raw.labels.iter().copied().map(DecisionLabel).collect();
    let kind = match raw.model.kind.as_str() {
        "formula" => ModelKind::Formula(parse_formula(&raw.model.body, "model.body", &space)?),
        "tree" => ModelKind::Tree(parse_tree(&raw.model.body, "model.body", &space)?),
        "threshold" => ModelKind::Threshold(parse_network(&raw.model.body, "model.body")?),
        other => {
            return Err(schema(
                "model.kind",
                format!("unknown model kind `{other}` (expected formula, tree or threshold)"),
            ))
        }
    };
    let model = DecisionModel::new(&space, kind, labels).map_err(|e| invalid("model", e))?;
    Ok(Instance::new(space, partition, model))
}

fn object<'a>(
    v: &'a Value,
    at: &str,
    allowed: &[&str],
) -> Result<&'a Map<String, Value>, ParseError> {
    let obj = v
        .as_object()
        .ok_or_else(|| schema(at, "expected an object"))?;
    if let Some(k) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(schema(at, format!("unknown key `{k}`")));
    }
    Ok(obj)
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, at: &str) -> Result<&'a Value, ParseError> {
    obj.get(key)
        .ok_or_else(|| schema(at, format!("missing key `{key}`")))
}

fn parse_formula(v: &Value, at: &str, space: &FeatureSpace) -> Result<Formula, ParseError> {
    let op = v
        .get("op")
        .and_then(Value::as_str)
        .ok_or_else(|| schema(at, "formula node needs a string `op`"))?;
    match op {
        "var" => {
            let obj = object(v, at, &["op", "name"])?;
            let name = field(obj, "name", at)?
                .as_str()
                .ok_or_else(|| schema(format!("{at}.name"), "expected a string"))?;
            let f = space
                .index_of(name)
                .ok_or_else(|| ParseError::DanglingFeature {
                    location: format!("{at}.name"),
                    name: name.to_string(),
                })?;
            Ok(Formula::Var(f))
        }
        "const" => {
            let obj = object(v, at, &["op", "value"])?;
            let b = field(obj, "value", at)?
                .as_bool()
                .ok_or_else(|| schema(format!("{at}.value"), "expected a boolean"))?;
            Ok(Formula::Const(b))
        }
        "not" | "and" | "or" => {
            let obj = object(v, at, &["op", "args"])?;
            let args = field(obj, "args", at)?
                .as_array()
                .ok_or_else(|| schema(format!("{at}.args"), "expected a list"))?;
            let parsed = args
                .iter()
                .enumerate()
                .map(|(i, a)| parse_formula(a, &format!("{at}.args[{i}]"), space))
                .collect::<Result<Vec<_>, _>>()?;
            match op {
                "not" => {
                    let [inner]: [Formula; 1] = parsed.try_into().map_err(|_| {
                        schema(format!("{at}.args"), "`not` takes exactly one argument")
                    })?;
                    Ok(Formula::not(inner))
                }
                _ if parsed.is_empty() => {
                    Err(invalid(format!("{at}.args"), ModelError::EmptyConnective))
                }
                "and" => Ok(Formula::And(parsed)),
                _ => Ok(Formula::Or(parsed)),
            }
        }
        other => Err(schema(
            format!("{at}.op"),
            format!("unknown operator `{other}`"),
        )),
    }
}

fn parse_tree(v: &Value, at: &str, space: &FeatureSpace) -> Result<Tree, ParseError> {
    if let Some(n) = v.as_u64() {
        let label = u32::try_from(n).map_err(|_| schema(at, "leaf label out of range"))?;
        return Ok(Tree::Leaf(DecisionLabel(label)));
    }
    let obj = object(v, at, &["test", "if_true", "if_false"])
        .map_err(|_| schema(at, "expected a non-negative integer leaf or a test node"))?;
    let name = field(obj, "test", at)?
        .as_str()
        .ok_or_else(|| schema(format!("{at}.test"), "expected a feature name"))?;
    let test = space
        .index_of(name)
        .ok_or_else(|| ParseError::DanglingFeature {
            location: format!("{at}.test"),
            name: name.to_string(),
        })?;
    let t = parse_tree(field(obj, "if_true", at)?, &format!("{at}.if_true"), space)?;
    let f = parse_tree(
        field(obj, "if_false", at)?,
        &format!("{at}.if_false"),
        space,
    )?;
    Ok(Tree::node(test, t, f))
}

fn parse_network(v: &Value, at: &str) -> Result<ThresholdNetwork, ParseError> {
    let layers = v
        .as_array()
        .ok_or_else(|| schema(at, "expected a list of layers"))?;
    let mut out = Vec::with_capacity(layers.len());
    for (li, layer) in layers.iter().enumerate() {
        let lat = format!("{at}[{li}]");
        let units = layer
            .as_array()
            .ok_or_else(|| schema(&lat, "expected a list of units"))?;
        let mut parsed = Vec::with_capacity(units.len());
        for (ui, unit) in units.iter().enumerate() {
            let uat = format!("{lat}[{ui}]");
            let obj = object(unit, &uat, &["weights", "bias"])?;
            let weights = field(obj, "weights", &uat)?
                .as_array()
                .ok_or_else(|| schema(format!("{uat}.weights"), "expected a list of integers"))?
                .iter()
                .enumerate()
                .map(|(wi, w)| {
                    w.as_i64().ok_or_else(|| {
                        schema(format!("{uat}.weights[{wi}]"), "expected an integer")
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let bias = field(obj, "bias", &uat)?
                .as_i64()
                .ok_or_else(|| schema(format!("{uat}.bias"), "expected an integer"))?;
            parsed.push(ThresholdUnit { weights, bias });
        }
        out.push(parsed);
    }
    Ok(ThresholdNetwork { layers: out })
}

/// Renders an instance as an interchange document (pretty-printed JSON).
pub fn serialize(instance: &Instance) -> String {
    let space = &instance.space;
    let p = &instance.partition;
    let names = |it: &mut dyn Iterator<Item = usize>| -> Vec<Value> {
        it.map(|f| Value::String(space.name(f).to_string()))
            .collect()
    };
    let body = match instance.model.kind() {
        ModelKind::Formula(f) => ("formula", formula_json(f, space)),
        ModelKind::Tree(t) => ("tree", tree_json(t, space)),
        ModelKind::Threshold(net) => (
            "threshold",
            Value::Array(
                net.layers
                    .iter()
                    .map(|layer| {
                        Value::Array(
                            layer
                                .iter()
                                .map(|u| json!({"weights": u.weights, "bias": u.bias}))
                                .collect(),
                        )
                    })
                    .collect(),
            ),
        ),
    };
    let doc = json!({
        "features": space.names(),
        "open": names(&mut p.open_features()),
        "private": names(&mut p.private_features()),
        "sensitive": {"feature": space.name(p.sensitive()), "value": p.protected_value()},
        "labels": instance.model.labels().iter().map(|d| d.0).collect::<Vec<_>>(),
        "model": {"kind": body.0, "body": body.1},
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("json values always serialize");
    s.push('\n');
    s
}

fn formula_json(f: &Formula, space: &FeatureSpace) -> Value {
    match f {
        Formula::Const(b) => json!({"op": "const", "value": b}),
        Formula::Var(i) => json!({"op": "var", "name": space.name(*i)}),
        Formula::Not(inner) => json!({"op": "not", "args": [formula_json(inner, space)]}),
        Formula::And(args) => {
            json!({"op": "and", "args": args.iter().map(|a| formula_json(a, space)).collect::<Vec<_>>()})
        }
        Formula::Or(args) => {
            json!({"op": "or", "args": args.iter().map(|a| formula_json(a, space)).collect::<Vec<_>>()})
        }
    }
}

fn tree_json(t: &Tree, space: &FeatureSpace) -> Value {
    match t {
        Tree::Leaf(d) => json!(d.0),
        Tree::Node {
            test,
            if_true,
            if_false,
        } => json!({
            "test": space.name(*test),
            "if_true": tree_json(if_true, space),
            "if_false": tree_json(if_false, space),
        }),
    }
}

/// The tutoring example as an interchange document.
pub const TUTOR_DOCUMENT: &str = r#"{
  "features": ["E", "D", "S", "H"],
  "open": ["E", "D"],
  "private": ["S", "H"],
  "sensitive": {"feature": "S", "value": true},
  "labels": [0, 1],
  "model": {
    "kind": "formula",
    "body": {"op": "or", "args": [
      {"op": "and", "args": [
        {"op": "var", "name": "D"},
        {"op": "or", "args": [{"op": "var", "name": "E"}, {"op": "var", "name": "H"}]}
      ]},
      {"op": "var", "name": "S"}
    ]}
  }
}
"#;
