//! Grounding a relational model on a skeleton.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{RcmError, Result};
use crate::paths::RelationalModel;
use crate::schema::canonical_json;
use crate::separation::{DiGraph, SccIndex, SeparationContext, SeparationQuery, SeparationResult, Walk};
use crate::skeleton::{validate_skeleton, ClassTable, Skeleton, SkeletonIndex, Traversal};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeNode {
    pub instance: String,
    pub attribute: String,
}

impl AttributeNode {
    pub fn new(instance: impl Into<String>, attribute: impl Into<String>) -> Self {
        AttributeNode { instance: instance.into(), attribute: attribute.into() }
    }
}

impl fmt::Display for AttributeNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.instance, self.attribute)
    }
}

impl std::str::FromStr for AttributeNode {
    type Err = RcmError;

    /// Parses `instance.attribute`, splitting at the last dot.
    fn from_str(s: &str) -> Result<Self> {
        let (i, a) = s
            .trim()
            .rsplit_once('.')
            .ok_or_else(|| RcmError::Parse(format!("expected `instance.attribute`, got `{s}`")))?;
        if i.is_empty() || a.is_empty() {
            return Err(RcmError::Parse(format!("expected `instance.attribute`, got `{s}`")));
        }
        Ok(AttributeNode::new(i, a))
    }
}

/// Nodes are kept sorted; edges refer to node positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundGraph {
    nodes: Vec<AttributeNode>,
    graph: DiGraph,
}

#[derive(Serialize, Deserialize)]
struct GroundGraphJson {
    nodes: Vec<AttributeNode>,
    edges: Vec<(AttributeNode, AttributeNode)>,
}

impl GroundGraph {
    /// Builds a graph from explicit nodes and edges; edge endpoints are added
    /// as nodes when missing.
    pub fn from_parts(
        nodes: impl IntoIterator<Item = AttributeNode>,
        edges: impl IntoIterator<Item = (AttributeNode, AttributeNode)>,
    ) -> Self {
        let edges: Vec<_> = edges.into_iter().collect();
        let mut all: BTreeSet<AttributeNode> = nodes.into_iter().collect();
        for (a, b) in &edges {
            all.insert(a.clone());
            all.insert(b.clone());
        }
        let nodes: Vec<AttributeNode> = all.into_iter().collect();
        let mut graph = DiGraph::new(nodes.len());
        for (a, b) in &edges {
            let ia = nodes.binary_search(a).unwrap();
            let ib = nodes.binary_search(b).unwrap();
            graph.add_edge(ia, ib);
        }
        GroundGraph { nodes, graph }
    }

    pub fn nodes(&self) -> &[AttributeNode] {
        &self.nodes
    }

    pub fn node_index(&self, node: &AttributeNode) -> Option<usize> {
        self.nodes.binary_search(node).ok()
    }

    pub fn graph(&self) -> &DiGraph {
        &self.graph
    }

    /// Edges in sorted order.
    pub fn edges(&self) -> Vec<(&AttributeNode, &AttributeNode)> {
        self.graph.edges().into_iter().map(|(a, b)| (&self.nodes[a], &self.nodes[b])).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.graph.edge_count()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        let (Ok(a), Ok(b)) = (from.parse(), to.parse()) else {
            return false;
        };
        match (self.node_index(&a), self.node_index(&b)) {
            (Some(a), Some(b)) => self.graph.has_edge(a, b),
            _ => false,
        }
    }

    pub fn is_cyclic(&self) -> bool {
        self.graph.is_cyclic()
    }

    pub fn scc(&self) -> SccIndex {
        crate::separation::scc(&self.graph)
    }

    pub fn export_dot(&self) -> String {
        let mut out = String::from("digraph gg {\n");
        let mut lines: Vec<String> = self
            .edges()
            .into_iter()
            .map(|(a, b)| format!("  {} -> {};\n", quote(&a.to_string()), quote(&b.to_string())))
            .collect();
        lines.sort();
        lines.into_iter().for_each(|l| out.push_str(&l));
        let isolated: Vec<&AttributeNode> = (0..self.nodes.len())
            .filter(|&v| self.graph.succ(v).is_empty() && self.graph.pred(v).is_empty())
            .map(|v| &self.nodes[v])
            .collect();
        for n in isolated {
            out.push_str(&format!("  {};\n", quote(&n.to_string())));
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        canonical_json(&GroundGraphJson {
            nodes: self.nodes.clone(),
            edges: self.edges().into_iter().map(|(a, b)| (a.clone(), b.clone())).collect(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: GroundGraphJson = serde_json::from_str(text).map_err(|e| RcmError::Parse(e.to_string()))?;
        Ok(GroundGraph::from_parts(j.nodes, j.edges))
    }

    /// Separation between sets of attribute nodes.
    pub fn separated(
        &self,
        x: &BTreeSet<AttributeNode>,
        y: &BTreeSet<AttributeNode>,
        z: &BTreeSet<AttributeNode>,
        mode: crate::separation::Mode,
    ) -> Result<SeparationResult> {
        let ids = |s: &BTreeSet<AttributeNode>| {
            s.iter()
                .map(|n| self.node_index(n).ok_or_else(|| RcmError::UnknownName(n.to_string())))
                .collect::<Result<BTreeSet<usize>>>()
        };
        let q = SeparationQuery { x: ids(x)?, y: ids(y)?, z: ids(z)?, mode };
        SeparationContext::new(&self.graph).query(&q)
    }

    pub fn render_walk(&self, walk: &Walk) -> String {
        walk.render(|v| self.nodes[v].to_string())
    }
}

pub(crate) fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// A model compiled against a class table, for grounding many skeletons.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub table: ClassTable,
    /// Attribute names per class id.
    pub attributes: Vec<Vec<String>>,
    pub dependencies: Vec<CompiledDependency>,
}

#[derive(Debug, Clone)]
pub struct CompiledDependency {
    pub path: Vec<u32>,
    pub cause_attr: usize,
    pub effect_attr: usize,
}

impl CompiledModel {
    pub fn new(model: &RelationalModel) -> Result<Self> {
        model.ensure_valid()?;
        let table = ClassTable::from_schema(&model.schema);
        let attributes: Vec<Vec<String>> = (0..table.len())
            .map(|c| model.schema.attributes_of(table.name(c as u32)).unwrap_or(&[]).to_vec())
            .collect();
        let attr = |class: u32, name: &str| attributes[class as usize].iter().position(|a| a == name).unwrap();
        let dependencies = model
            .dependencies
            .iter()
            .map(|d| {
                let path: Vec<u32> = d.cause.path.items().iter().map(|c| table.id(c).unwrap()).collect();
                CompiledDependency {
                    cause_attr: attr(*path.last().unwrap(), &d.cause.attribute),
                    effect_attr: attr(path[0], &d.effect.attribute),
                    path,
                }
            })
            .collect();
        Ok(CompiledModel { table, attributes, dependencies })
    }

    pub fn attribute_id(&self, class: u32, name: &str) -> Option<usize> {
        self.attributes[class as usize].iter().position(|a| a == name)
    }
}

/// Ground graph over numeric items: node `attr_base[item] + k` is attribute
/// `k` of `item`.
#[derive(Debug, Clone)]
pub struct NumericGround {
    pub graph: DiGraph,
    pub attr_base: Vec<usize>,
}

impl NumericGround {
    pub fn node(&self, item: u32, attr: usize) -> usize {
        self.attr_base[item as usize] + attr
    }
}

pub fn ground_index(model: &CompiledModel, index: &SkeletonIndex) -> NumericGround {
    let mut attr_base = Vec::with_capacity(index.len());
    let mut n = 0;
    for item in 0..index.len() as u32 {
        attr_base.push(n);
        n += model.attributes[index.class_of(item) as usize].len();
    }
    let mut graph = DiGraph::new(n);
    let mut t = Traversal::default();
    let mut terminal = Vec::new();
    for d in &model.dependencies {
        for &base in index.items_of_class(d.path[0]) {
            index.terminal_set_into(&d.path, base, &mut t, &mut terminal);
            for &k in &terminal {
                graph.add_edge(attr_base[k as usize] + d.cause_attr, attr_base[base as usize] + d.effect_attr);
            }
        }
    }
    NumericGround { graph, attr_base }
}

/// Applies every dependency of `model` to every instance of `skeleton`.
pub fn ground(model: &RelationalModel, skeleton: &Skeleton) -> Result<GroundGraph> {
    let report = validate_skeleton(&model.schema, skeleton, false);
    if let Some(v) = report.first() {
        return Err(RcmError::InvalidSkeleton(format!("{}: {}", v.code, v.message)));
    }
    let compiled = CompiledModel::new(model)?;
    let index = SkeletonIndex::from_skeleton(&compiled.table, skeleton)?;
    let numeric = ground_index(&compiled, &index);
    let mut label = BTreeMap::new();
    for item in 0..index.len() as u32 {
        let name = index.name(&compiled.table, item);
        for (k, a) in compiled.attributes[index.class_of(item) as usize].iter().enumerate() {
            label.insert(numeric.node(item, k), AttributeNode::new(name.clone(), a.clone()));
        }
    }
    Ok(GroundGraph::from_parts(
        label.values().cloned(),
        numeric.graph.edges().into_iter().map(|(a, b)| (label[&a].clone(), label[&b].clone())),
    ))
}

pub fn is_cyclic(gg: &GroundGraph) -> bool {
    gg.is_cyclic()
}

pub fn export_dot(gg: &GroundGraph) -> String {
    gg.export_dot()
}
