//! Relational paths, variables and dependencies.
//!
//! A relational path is an alternating walk over the schema's entity and
//! relationship classes. Two triples are disallowed because they can never
//! reach a fresh instance under bridge burning:
//!
//! * `[E, R, E]` unless `E` fills at least two slots of `R`;
//! * `[R, E, R]` unless `E` participates in `R` with cardinality `Many`
//!   (or fills two slots of `R`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{RcmError, Result};
use crate::schema::{
    canonical_json, finish_report, validate_schema, Cardinality, ItemKind, Schema,
    ValidationReport, Violation, ViolationCode,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationalPath(Vec<String>);

impl RelationalPath {
    /// Wraps `items` without checking validity; see [`is_valid_path`].
    pub fn new<S: Into<String>>(items: impl IntoIterator<Item = S>) -> Self {
        RelationalPath(items.into_iter().map(Into::into).collect())
    }

    pub fn items(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The perspective: the path's first item class.
    pub fn first(&self) -> &str {
        &self.0[0]
    }

    /// The terminal item class.
    pub fn last(&self) -> &str {
        &self.0[self.0.len() - 1]
    }

    pub fn is_prefix_of(&self, other: &RelationalPath) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

impl fmt::Display for RelationalPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationalVariable {
    pub path: RelationalPath,
    pub attribute: String,
}

impl RelationalVariable {
    pub fn new(path: RelationalPath, attribute: impl Into<String>) -> Self {
        RelationalVariable {
            path,
            attribute: attribute.into(),
        }
    }
}

impl fmt::Display for RelationalVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.path, self.attribute)
    }
}

/// Parses the bracket syntax `[USER, REACTS, POST].Engagement`. Names are
/// case-sensitive; whitespace around names is ignored.
impl FromStr for RelationalVariable {
    type Err = RcmError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |why: &str| RcmError::Parse(format!("relational variable `{s}`: {why}"));
        let s = s.trim();
        let rest = s.strip_prefix('[').ok_or_else(|| bad("expected `[`"))?;
        let close = rest.find(']').ok_or_else(|| bad("expected `]`"))?;
        let items: Vec<String> = rest[..close]
            .split(',')
            .map(|i| i.trim().to_string())
            .collect();
        if items.iter().any(String::is_empty) {
            return Err(bad("empty item class name"));
        }
        let attribute = rest[close + 1..]
            .trim_start()
            .strip_prefix('.')
            .ok_or_else(|| bad("expected `.attribute` after `]`"))?
            .trim();
        if attribute.is_empty() {
            return Err(bad("empty attribute name"));
        }
        Ok(RelationalVariable::new(RelationalPath(items), attribute))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EffectAttribute {
    pub class: String,
    pub attribute: String,
}

/// `[I_j, ..., I_k].X -> [I_j].Y`
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationalDependency {
    pub cause: RelationalVariable,
    pub effect: EffectAttribute,
}

impl RelationalDependency {
    pub fn new(cause: RelationalVariable, effect_attribute: impl Into<String>) -> Self {
        let class = cause.path.first().to_string();
        RelationalDependency {
            cause,
            effect: EffectAttribute {
                class,
                attribute: effect_attribute.into(),
            },
        }
    }

    /// The effect as a length-one relational variable.
    pub fn effect_variable(&self) -> RelationalVariable {
        RelationalVariable::new(
            RelationalPath(vec![self.effect.class.clone()]),
            self.effect.attribute.clone(),
        )
    }
}

impl fmt::Display for RelationalDependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.cause, self.effect_variable())
    }
}

/// Parses `[P, R, U].Sentiment -> [P].Engagement`.
impl FromStr for RelationalDependency {
    type Err = RcmError;

    fn from_str(s: &str) -> Result<Self> {
        let (cause, effect) = s
            .split_once("->")
            .ok_or_else(|| RcmError::Parse(format!("dependency `{s}`: expected `->`")))?;
        let cause: RelationalVariable = cause.parse()?;
        let effect: RelationalVariable = effect.parse()?;
        if effect.path.len() != 1 {
            return Err(RcmError::Parse(format!(
                "dependency `{s}`: effect path must have a single item"
            )));
        }
        Ok(RelationalDependency {
            cause,
            effect: EffectAttribute {
                class: effect.path.first().to_string(),
                attribute: effect.attribute,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationalModel {
    pub schema: Schema,
    #[serde(default)]
    pub dependencies: Vec<RelationalDependency>,
    #[serde(default, rename = "hop_threshold", skip_serializing_if = "Option::is_none")]
    pub hop_threshold_hint: Option<usize>,
}

impl RelationalModel {
    pub fn new(schema: Schema, dependencies: Vec<RelationalDependency>) -> Self {
        RelationalModel {
            schema,
            dependencies,
            hop_threshold_hint: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| RcmError::Parse(e.to_string()))
    }

    pub fn to_canonical_json(&self) -> String {
        canonical_json(self)
    }

    /// Schema violations plus dependency well-formedness.
    pub fn validate(&self) -> ValidationReport {
        let mut report = validate_schema(&self.schema);
        let mut seen = BTreeSet::new();
        for d in &self.dependencies {
            if !seen.insert(d) {
                report.push(Violation::new(
                    ViolationCode::DuplicateDependency,
                    format!("dependency {d} declared twice"),
                ));
            }
            match is_valid_path(&self.schema, d.cause.path.items()) {
                Err(e) => {
                    report.push(Violation::new(ViolationCode::InvalidPath, format!("{d}: {e}")));
                    continue;
                }
                Ok(PathValidity::Invalid(why)) => {
                    report.push(Violation::new(ViolationCode::InvalidPath, format!("{d}: {why}")));
                    continue;
                }
                Ok(PathValidity::Valid) => {}
            }
            if !self.schema.has_attribute(d.cause.path.last(), &d.cause.attribute) {
                report.push(Violation::new(
                    ViolationCode::UnknownAttribute,
                    format!("{d}: `{}` has no attribute `{}`", d.cause.path.last(), d.cause.attribute),
                ));
            }
            if d.effect.class != d.cause.path.first() {
                report.push(Violation::new(
                    ViolationCode::EffectMismatch,
                    format!("{d}: effect class must equal the cause path's first item"),
                ));
            } else if !self.schema.has_attribute(&d.effect.class, &d.effect.attribute) {
                report.push(Violation::new(
                    ViolationCode::UnknownAttribute,
                    format!("{d}: `{}` has no attribute `{}`", d.effect.class, d.effect.attribute),
                ));
            }
            if d.cause.path.len() == 1 && d.cause.attribute == d.effect.attribute {
                report.push(Violation::new(
                    ViolationCode::SelfLoop,
                    format!("{d}: an attribute cannot cause itself on the same instance"),
                ));
            }
        }
        finish_report(report)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        match report.first() {
            None => Ok(()),
            Some(v) => Err(RcmError::InvalidModel(format!("{}: {}", v.code, v.message))),
        }
    }

    pub fn is_cyclic(&self) -> bool {
        !detect_model_cycles(self).is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathValidity {
    Valid,
    /// Description of the first violated invariant.
    Invalid(String),
}

impl PathValidity {
    pub fn is_valid(&self) -> bool {
        matches!(self, PathValidity::Valid)
    }
}

pub fn is_valid_path<S: AsRef<str>>(schema: &Schema, items: &[S]) -> Result<PathValidity> {
    if items.is_empty() {
        return Err(RcmError::Precondition("relational path must be nonempty".into()));
    }
    let kinds = items
        .iter()
        .map(|i| schema.require_kind(i.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    for i in 1..items.len() {
        let (a, b) = (items[i - 1].as_ref(), items[i].as_ref());
        if kinds[i - 1] == kinds[i] {
            return Ok(PathValidity::Invalid(format!(
                "items {} and {} (`{a}`, `{b}`) do not alternate entity/relationship",
                i - 1,
                i
            )));
        }
        if !crate::schema::classes_adjacent(schema, a, b)? {
            return Ok(PathValidity::Invalid(format!(
                "`{a}` and `{b}` are not adjacent in the schema"
            )));
        }
    }
    for i in 2..items.len() {
        if let Some(why) = triple_violation(
            schema,
            items[i - 2].as_ref(),
            items[i - 1].as_ref(),
            items[i].as_ref(),
            kinds[i - 1],
        ) {
            return Ok(PathValidity::Invalid(format!("at items {}..={i}: {why}", i - 2)));
        }
    }
    Ok(PathValidity::Valid)
}

fn triple_violation(schema: &Schema, a: &str, mid: &str, c: &str, mid_kind: ItemKind) -> Option<String> {
    if a != c {
        return None;
    }
    match mid_kind {
        ItemKind::Relationship => {
            (schema.slot_count(mid, a) < 2).then(|| {
                format!("[{a}, {mid}, {a}] returns to the burned instance; `{a}` fills only one slot of `{mid}`")
            })
        }
        ItemKind::Entity => {
            let many = schema.card(a, mid) == Some(Cardinality::Many);
            (!many && schema.slot_count(a, mid) < 2).then(|| {
                format!("[{a}, {mid}, {a}] requires `{mid}` to participate in `{a}` with cardinality many")
            })
        }
    }
}

/// Every valid path from `perspective` with at most `h + 1` items, sorted by
/// item sequence.
pub fn enumerate_paths(schema: &Schema, perspective: &str, h: usize) -> Result<Vec<RelationalPath>> {
    schema.require_kind(perspective)?;
    let mut out = Vec::new();
    let mut stack = vec![vec![perspective.to_string()]];
    while let Some(path) = stack.pop() {
        if path.len() < h + 1 {
            let last = path.last().expect("nonempty");
            let last_kind = schema.kind_of(last).expect("resolved");
            for next in schema.neighbors(last) {
                if path.len() >= 2 {
                    let a = &path[path.len() - 2];
                    if triple_violation(schema, a, last, next, last_kind).is_some() {
                        continue;
                    }
                }
                let mut p = path.clone();
                p.push(next.to_string());
                stack.push(p);
            }
        }
        out.push(RelationalPath(path));
    }
    out.sort();
    Ok(out)
}

/// All valid paths obtained by joining `original` and `extension` at an
/// admissible pivot, keeping those with at most `h + 1` items.
///
/// A pivot of size `m` is admissible when the last `m` items of `original`,
/// reversed, equal the first `m` items of `extension`; the candidate drops the
/// last `m - 1` items of `original` and the first `m` items of `extension`.
pub fn extend(
    schema: &Schema,
    original: &RelationalPath,
    extension: &RelationalPath,
    h: usize,
) -> Result<Vec<RelationalPath>> {
    if original.is_empty() || extension.is_empty() {
        return Err(RcmError::Precondition("extend needs nonempty paths".into()));
    }
    if original.last() != extension.first() {
        return Err(RcmError::Precondition(format!(
            "cannot extend {original} with {extension}: endpoint classes differ"
        )));
    }
    let (o, e) = (original.items(), extension.items());
    let mut out = BTreeSet::new();
    for m in 1..=o.len().min(e.len()) {
        if (0..m).any(|i| o[o.len() - 1 - i] != e[i]) {
            // Longer pivots cannot match once a shorter one fails.
            break;
        }
        let len = o.len() - (m - 1) + e.len() - m;
        if len > h + 1 {
            continue;
        }
        let candidate: Vec<String> = o[..o.len() - (m - 1)]
            .iter()
            .chain(&e[m..])
            .cloned()
            .collect();
        if is_valid_path(schema, &candidate)?.is_valid() {
            out.insert(RelationalPath(candidate));
        }
    }
    Ok(out.into_iter().collect())
}

/// Elementary cycles of the class-level dependency graph, whose nodes are
/// `(class, attribute)` pairs and whose edges are dependencies. Each cycle is
/// listed starting at its smallest node; the list is sorted.
pub fn detect_model_cycles(model: &RelationalModel) -> Vec<Vec<RelationalDependency>> {
    let mut node_ids: BTreeMap<(String, String), usize> = BTreeMap::new();
    for d in &model.dependencies {
        node_ids.entry((d.cause.path.last().to_string(), d.cause.attribute.clone())).or_default();
        node_ids.entry((d.effect.class.clone(), d.effect.attribute.clone())).or_default();
    }
    for (i, v) in node_ids.values_mut().enumerate() {
        *v = i;
    }
    let n = node_ids.len();
    // adjacency: node -> [(target, dependency index)]
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (di, d) in model.dependencies.iter().enumerate() {
        let u = node_ids[&(d.cause.path.last().to_string(), d.cause.attribute.clone())];
        let v = node_ids[&(d.effect.class.clone(), d.effect.attribute.clone())];
        adj[u].push((v, di));
    }

    let mut cycles: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        let mut on_path = vec![false; n];
        on_path[start] = true;
        let mut deps = Vec::new();
        collect_cycles(start, start, &adj, &mut on_path, &mut deps, &mut cycles);
    }
    let mut out: Vec<Vec<RelationalDependency>> = cycles
        .into_iter()
        .map(|c| c.into_iter().map(|i| model.dependencies[i].clone()).collect())
        .collect();
    out.sort();
    out
}

fn collect_cycles(
    start: usize,
    at: usize,
    adj: &[Vec<(usize, usize)>],
    on_path: &mut [bool],
    deps: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    for &(next, dep) in &adj[at] {
        if next == start {
            deps.push(dep);
            out.push(deps.clone());
            deps.pop();
        } else if next > start && !on_path[next] {
            on_path[next] = true;
            deps.push(dep);
            collect_cycles(start, next, adj, on_path, deps, out);
            deps.pop();
            on_path[next] = false;
        }
    }
}
