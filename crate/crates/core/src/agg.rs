//! Abstract ground graphs: class-level graphs over relational variables and
//! their intersections, from one perspective and up to a hop threshold.
//!
//! Relational-variable edges come from extending each effect path with the
//! dependency's cause path. Two variables with the same terminal class and
//! attribute get an intersection node when some small skeleton makes their
//! terminal sets overlap; the node inherits both constituents' edges.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{RcmError, Result};
use crate::groundgraph::quote;
use crate::paths::{detect_model_cycles, enumerate_paths, extend, RelationalModel, RelationalPath, RelationalVariable};
use crate::schema::{canonical_json, EntityClass, RelationshipClass, Schema};
use crate::separation::{DiGraph, Mode, SeparationContext, SeparationResult, Walk};
use crate::skeleton::{ClassTable, CompactSkeleton, SkeletonEnumerator, Traversal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggMode {
    /// Requires an acyclic model; queried with d-separation.
    Acyclic,
    /// Any model; queried with σ-separation.
    Sigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AggNodeKind {
    Relvar,
    Intersection,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AggNode {
    pub kind: AggNodeKind,
    pub primary: RelationalVariable,
    pub secondary: Option<RelationalVariable>,
}

impl AggNode {
    pub fn relvar(v: RelationalVariable) -> Self {
        AggNode { kind: AggNodeKind::Relvar, primary: v, secondary: None }
    }

    /// The unordered pair `{a, b}`, stored with the smaller path first.
    pub fn intersection(a: RelationalVariable, b: RelationalVariable) -> Self {
        let (p, s) = if a <= b { (a, b) } else { (b, a) };
        AggNode { kind: AggNodeKind::Intersection, primary: p, secondary: Some(s) }
    }

    pub fn is_intersection(&self) -> bool {
        self.kind == AggNodeKind::Intersection
    }

    /// The relational variables this node stands for.
    pub fn constituents(&self) -> impl Iterator<Item = &RelationalVariable> {
        std::iter::once(&self.primary).chain(self.secondary.as_ref())
    }
}

impl fmt::Display for AggNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.secondary {
            Some(s) => write!(f, "{} ∩ {}", self.primary, s),
            None => write!(f, "{}", self.primary),
        }
    }
}

/// Bounds for the existential skeleton search that decides intersections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggOptions {
    /// Largest number of instances per entity class in searched skeletons.
    pub intersection_max_per_entity: usize,
    /// Stop after examining this many skeletons; undecided pairs are treated
    /// as non-intersecting.
    pub intersection_skeleton_limit: Option<usize>,
}

impl Default for AggOptions {
    fn default() -> Self {
        AggOptions { intersection_max_per_entity: 3, intersection_skeleton_limit: Some(2_000_000) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigmaAgg {
    perspective: String,
    hop: usize,
    mode: AggMode,
    nodes: Vec<AggNode>,
    graph: DiGraph,
    rv_edges: BTreeSet<(usize, usize)>,
    iv_edges: BTreeSet<(usize, usize)>,
    /// Skeletons in which each intersection was found, keyed by node index.
    witnesses: BTreeMap<usize, crate::skeleton::Skeleton>,
    search_exhausted: bool,
}

#[derive(Serialize)]
struct AggJson<'a> {
    perspective: &'a str,
    hop: usize,
    mode: AggMode,
    nodes: Vec<String>,
    rv_edges: Vec<(String, String)>,
    iv_edges: Vec<(String, String)>,
}

impl SigmaAgg {
    pub fn perspective(&self) -> &str {
        &self.perspective
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn mode(&self) -> AggMode {
        self.mode
    }

    /// Nodes in canonical order: relational variables, then intersections.
    pub fn nodes(&self) -> &[AggNode] {
        &self.nodes
    }

    pub fn graph(&self) -> &DiGraph {
        &self.graph
    }

    pub fn node_index(&self, node: &AggNode) -> Option<usize> {
        self.nodes.binary_search(node).ok()
    }

    pub fn rv_index(&self, v: &RelationalVariable) -> Option<usize> {
        self.node_index(&AggNode::relvar(v.clone()))
    }

    pub fn relational_variables(&self) -> impl Iterator<Item = &RelationalVariable> {
        self.nodes.iter().filter(|n| !n.is_intersection()).map(|n| &n.primary)
    }

    pub fn intersections(&self) -> impl Iterator<Item = &AggNode> {
        self.nodes.iter().filter(|n| n.is_intersection())
    }

    /// A skeleton exhibiting the overlap behind an intersection node.
    pub fn intersection_witness(&self, node: &AggNode) -> Option<&crate::skeleton::Skeleton> {
        self.witnesses.get(&self.node_index(node)?)
    }

    /// Whether the intersection search examined its whole bounded space
    /// rather than stopping at the skeleton limit.
    pub fn intersection_search_exhausted(&self) -> bool {
        self.search_exhausted
    }

    fn pairs(&self, set: &BTreeSet<(usize, usize)>) -> Vec<(&AggNode, &AggNode)> {
        set.iter().map(|&(a, b)| (&self.nodes[a], &self.nodes[b])).collect()
    }

    pub fn rv_edges(&self) -> Vec<(&AggNode, &AggNode)> {
        self.pairs(&self.rv_edges)
    }

    pub fn iv_edges(&self) -> Vec<(&AggNode, &AggNode)> {
        self.pairs(&self.iv_edges)
    }

    pub fn edge_count(&self) -> usize {
        self.rv_edges.len() + self.iv_edges.len()
    }

    /// Whether the edge `from -> to` exists between two nodes given in
    /// display form (`[A, B].X` or `[A].X ∩ [B].X`).
    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        let find = |s: &str| self.nodes.iter().position(|n| n.to_string() == normalize_label(s));
        match (find(from), find(to)) {
            (Some(a), Some(b)) => self.graph.has_edge(a, b),
            _ => false,
        }
    }

    pub fn is_cyclic(&self) -> bool {
        self.graph.is_cyclic()
    }

    pub fn export_dot(&self) -> String {
        let mut out = String::from("digraph agg {\n");
        let mut lines: Vec<String> = self
            .graph
            .edges()
            .into_iter()
            .map(|(a, b)| format!("  {} -> {};\n", quote(&self.nodes[a].to_string()), quote(&self.nodes[b].to_string())))
            .collect();
        lines.sort();
        lines.into_iter().for_each(|l| out.push_str(&l));
        let mut isolated: Vec<String> = (0..self.nodes.len())
            .filter(|&v| self.graph.succ(v).is_empty() && self.graph.pred(v).is_empty())
            .map(|v| format!("  {};\n", quote(&self.nodes[v].to_string())))
            .collect();
        isolated.sort();
        isolated.into_iter().for_each(|l| out.push_str(&l));
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        let render = |set: &BTreeSet<(usize, usize)>| {
            let mut v: Vec<(String, String)> =
                set.iter().map(|&(a, b)| (self.nodes[a].to_string(), self.nodes[b].to_string())).collect();
            v.sort();
            v
        };
        canonical_json(&AggJson {
            perspective: &self.perspective,
            hop: self.hop,
            mode: self.mode,
            nodes: self.nodes.iter().map(|n| n.to_string()).collect(),
            rv_edges: render(&self.rv_edges),
            iv_edges: render(&self.iv_edges),
        })
    }

    pub fn render_walk(&self, walk: &Walk) -> String {
        walk.render(|v| self.nodes[v].to_string())
    }
}

fn normalize_label(s: &str) -> String {
    s.split('∩')
        .map(|part| match part.trim().parse::<RelationalVariable>() {
            Ok(v) => v.to_string(),
            Err(_) => part.trim().to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ∩ ")
}

pub fn build_agg(model: &RelationalModel, perspective: &str, h: usize, mode: AggMode) -> Result<SigmaAgg> {
    build_agg_with(model, perspective, h, mode, &AggOptions::default())
}

pub fn build_agg_with(
    model: &RelationalModel,
    perspective: &str,
    h: usize,
    mode: AggMode,
    options: &AggOptions,
) -> Result<SigmaAgg> {
    model.ensure_valid()?;
    if mode == AggMode::Acyclic && !detect_model_cycles(model).is_empty() {
        return Err(RcmError::CyclicModel);
    }
    let schema = &model.schema;
    let paths = enumerate_paths(schema, perspective, h)?;
    let mut rvs: Vec<RelationalVariable> = Vec::new();
    for p in &paths {
        for a in schema.attributes_of(p.last()).unwrap_or(&[]) {
            rvs.push(RelationalVariable::new(p.clone(), a.clone()));
        }
    }
    rvs.sort();

    let mut rv_edges: BTreeSet<(RelationalVariable, RelationalVariable)> = BTreeSet::new();
    for d in &model.dependencies {
        let effect_class = d.cause.path.first();
        for pj in paths.iter().filter(|p| p.last() == effect_class) {
            for pk in extend(schema, pj, &d.cause.path, h)? {
                rv_edges.insert((
                    RelationalVariable::new(pk, d.cause.attribute.clone()),
                    RelationalVariable::new(pj.clone(), d.effect.attribute.clone()),
                ));
            }
        }
    }

    let mut candidates = Vec::new();
    for (i, a) in rvs.iter().enumerate() {
        for b in &rvs[i + 1..] {
            if syntactic_candidate(a, b) {
                candidates.push((a.clone(), b.clone()));
            }
        }
    }
    let search = search_intersections(schema, perspective, &candidates, options);

    let mut nodes: Vec<AggNode> = rvs.iter().cloned().map(AggNode::relvar).collect();
    let mut intersections = Vec::new();
    for ((a, b), found) in candidates.iter().zip(&search.found) {
        if found.is_some() {
            intersections.push(AggNode::intersection(a.clone(), b.clone()));
        }
    }
    nodes.extend(intersections.iter().cloned());
    nodes.sort();
    let index = |n: &AggNode| nodes.binary_search(n).expect("node present");

    let mut graph = DiGraph::new(nodes.len());
    let mut rv_idx = BTreeSet::new();
    for (a, b) in &rv_edges {
        let e = (index(&AggNode::relvar(a.clone())), index(&AggNode::relvar(b.clone())));
        graph.add_edge(e.0, e.1);
        rv_idx.insert(e);
    }
    let mut iv_idx = BTreeSet::new();
    for node in &intersections {
        let i = index(node);
        for c in node.constituents() {
            let ci = index(&AggNode::relvar(c.clone()));
            for &(a, b) in &rv_idx {
                if b == ci {
                    iv_idx.insert((a, i));
                }
                if a == ci {
                    iv_idx.insert((i, b));
                }
            }
        }
    }
    for &(a, b) in &iv_idx {
        graph.add_edge(a, b);
    }

    let mut witnesses = BTreeMap::new();
    for ((a, b), found) in candidates.iter().zip(search.found) {
        if let Some(sk) = found {
            witnesses.insert(index(&AggNode::intersection(a.clone(), b.clone())), sk);
        }
    }
    Ok(SigmaAgg {
        perspective: perspective.to_string(),
        hop: h,
        mode,
        nodes,
        graph,
        rv_edges: rv_idx,
        iv_edges: iv_idx,
        witnesses,
        search_exhausted: search.exhausted,
    })
}

/// Same perspective, terminal class and attribute; distinct paths, neither a
/// prefix of the other.
fn syntactic_candidate(a: &RelationalVariable, b: &RelationalVariable) -> bool {
    a.path.first() == b.path.first()
        && a.path.last() == b.path.last()
        && a.attribute == b.attribute
        && a.path != b.path
        && !a.path.is_prefix_of(&b.path)
        && !b.path.is_prefix_of(&a.path)
}

/// Whether some skeleton, within the default search bound, has a base
/// instance from which the terminal sets of `a` and `b` overlap.
pub fn intersectable(schema: &Schema, a: &RelationalVariable, b: &RelationalVariable) -> Result<bool> {
    intersectable_with(schema, a, b, &AggOptions::default())
}

pub fn intersectable_with(
    schema: &Schema,
    a: &RelationalVariable,
    b: &RelationalVariable,
    options: &AggOptions,
) -> Result<bool> {
    for v in [a, b] {
        if !crate::paths::is_valid_path(schema, v.path.items())?.is_valid() {
            return Err(RcmError::UnknownVariable(v.to_string()));
        }
    }
    if !syntactic_candidate(a, b) {
        return Ok(false);
    }
    let pair = [(a.clone(), b.clone())];
    Ok(search_intersections(schema, a.path.first(), &pair, options).found[0].is_some())
}

struct IntersectionSearch {
    found: Vec<Option<crate::skeleton::Skeleton>>,
    exhausted: bool,
}

/// The schema cut down to the classes the paths visit, plus any entity class
/// a kept relationship class needs for its slots. Terminal sets along the
/// paths never touch the dropped classes.
fn restrict_schema(schema: &Schema, paths: &[&RelationalPath]) -> Schema {
    let used: BTreeSet<&str> = paths.iter().flat_map(|p| p.items().iter().map(String::as_str)).collect();
    let relationships: Vec<RelationshipClass> =
        schema.relationships.iter().filter(|r| used.contains(r.name.as_str())).cloned().collect();
    let mut entity_names: BTreeSet<&str> = used.clone();
    for r in &relationships {
        entity_names.extend(r.participants.iter().map(|p| p.entity.as_str()));
    }
    let entities: Vec<EntityClass> =
        schema.entities.iter().filter(|e| entity_names.contains(e.name.as_str())).cloned().collect();
    Schema { entities, relationships }
}

fn search_intersections(
    schema: &Schema,
    perspective: &str,
    candidates: &[(RelationalVariable, RelationalVariable)],
    options: &AggOptions,
) -> IntersectionSearch {
    let mut found: Vec<Option<crate::skeleton::Skeleton>> = vec![None; candidates.len()];
    if candidates.is_empty() {
        return IntersectionSearch { found, exhausted: true };
    }
    let paths: Vec<&RelationalPath> = candidates.iter().flat_map(|(a, b)| [&a.path, &b.path]).collect();
    let sub = restrict_schema(schema, &paths);
    let enumerator = SkeletonEnumerator::new(&sub, options.intersection_max_per_entity).dedup(false);
    let table: ClassTable = enumerator.table().clone();
    let ids = |p: &RelationalPath| -> Vec<u32> { p.items().iter().map(|c| table.id(c).expect("restricted")).collect() };
    let pairs: Vec<(Vec<u32>, Vec<u32>)> = candidates.iter().map(|(a, b)| (ids(&a.path), ids(&b.path))).collect();
    let base_class = table.id(perspective).expect("perspective kept");

    let mut open: Vec<usize> = (0..candidates.len()).collect();
    let mut t = Traversal::default();
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    let mut exhausted = true;
    for (examined, sk) in enumerator.enumerate() {
        if options.intersection_skeleton_limit.is_some_and(|l| examined >= l) {
            exhausted = false;
            break;
        }
        let index = sk.index(&table);
        open.retain(|&c| {
            let (pa, pb) = &pairs[c];
            for &b in index.items_of_class(base_class) {
                index.terminal_set_into(pa, b, &mut t, &mut ta);
                if ta.is_empty() {
                    continue;
                }
                index.terminal_set_into(pb, b, &mut t, &mut tb);
                if ta.iter().any(|i| tb.binary_search(i).is_ok()) {
                    found[c] = Some(to_named(&table, &sk));
                    return false;
                }
            }
            true
        });
        if open.is_empty() {
            break;
        }
    }
    IntersectionSearch { found, exhausted: exhausted || open.is_empty() }
}

fn to_named(table: &ClassTable, sk: &CompactSkeleton) -> crate::skeleton::Skeleton {
    sk.to_skeleton(table)
}

/// A set of relational variables together with the intersection nodes that
/// have one of them as a constituent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedSet {
    pub base: BTreeSet<RelationalVariable>,
    pub augmented: BTreeSet<AggNode>,
}

pub fn augment(agg: &SigmaAgg, base: &BTreeSet<RelationalVariable>) -> Result<AugmentedSet> {
    let mut augmented = BTreeSet::new();
    for v in base {
        if agg.rv_index(v).is_none() {
            return Err(RcmError::UnknownVariable(v.to_string()));
        }
        augmented.insert(AggNode::relvar(v.clone()));
    }
    for n in agg.intersections() {
        if n.constituents().any(|c| base.contains(c)) {
            augmented.insert(n.clone());
        }
    }
    Ok(AugmentedSet { base: base.clone(), augmented })
}

/// Relational separation of `x` and `y` given `z`, decided on the augmented
/// sets. Mode d needs an AGG built in acyclic mode.
pub fn relational_separated(
    agg: &SigmaAgg,
    x: &BTreeSet<RelationalVariable>,
    y: &BTreeSet<RelationalVariable>,
    z: &BTreeSet<RelationalVariable>,
    mode: Mode,
) -> Result<SeparationResult> {
    if mode == Mode::D && agg.mode != AggMode::Acyclic {
        return Err(RcmError::ModeMismatch("d-separation needs an AGG built in acyclic mode".into()));
    }
    if x.is_empty() || y.is_empty() {
        return Err(RcmError::InvalidQuery("x and y must be nonempty".into()));
    }
    if !x.is_disjoint(y) || !x.is_disjoint(z) || !y.is_disjoint(z) {
        return Err(RcmError::InvalidQuery("x, y and z must be pairwise disjoint".into()));
    }
    for v in x.iter().chain(y).chain(z) {
        if v.path.first() != agg.perspective {
            return Err(RcmError::InvalidQuery(format!("{v} is not from perspective {}", agg.perspective)));
        }
    }
    let (xa, ya, za) = (augment(agg, x)?, augment(agg, y)?, augment(agg, z)?);
    let ctx = SeparationContext::new(&agg.graph);
    Ok(separate_augmented(&ctx, agg, &xa.augmented, &ya.augmented, &za.augmented, mode))
}

/// Runs the engine on node sets that may overlap: conditioned nodes leave
/// `x` and `y`, an emptied side is separated, and a shared node connects.
pub(crate) fn separate_augmented(
    ctx: &SeparationContext<'_>,
    agg: &SigmaAgg,
    x: &BTreeSet<AggNode>,
    y: &BTreeSet<AggNode>,
    z: &BTreeSet<AggNode>,
    mode: Mode,
) -> SeparationResult {
    let n = agg.nodes.len();
    let mask = |s: &BTreeSet<AggNode>| {
        let mut m = vec![false; n];
        for node in s {
            m[agg.node_index(node).expect("augmented node present")] = true;
        }
        m
    };
    let in_z = mask(z);
    let mut in_x = mask(x);
    let mut in_y = mask(y);
    for v in 0..n {
        if in_z[v] {
            in_x[v] = false;
            in_y[v] = false;
        }
    }
    if !in_x.iter().any(|&b| b) || !in_y.iter().any(|&b| b) {
        return SeparationResult { separated: true, witness: None };
    }
    if let Some(v) = (0..n).find(|&v| in_x[v] && in_y[v]) {
        return SeparationResult { separated: false, witness: Some(Walk { nodes: vec![v], forward: vec![] }) };
    }
    ctx.search(&in_x, &in_y, &in_z, mode, true)
}
