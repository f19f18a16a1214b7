//! Brute-force checks, independent of the production engines where it
//! matters.
//!
//! * [`walk_enumeration_separated`] enumerates walks and classifies each by
//!   the blocking conditions, computing components and ancestors from a
//!   transitive closure rather than reusing the engine's.
//! * [`verify_abstraction`] compares AGG verdicts with ground-graph verdicts
//!   over every enumerated skeleton and base instance.
//! * [`check_lemma1`] and [`reproduce_counterexample`] search skeletons for
//!   realizations of AGG nodes and for the counterexample's connection.
//!
//! All skeleton searches are bounded; a clean report is evidence within the
//! bound, not a proof.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::agg::{build_agg_with, relational_separated, AggMode, AggNode, AggOptions, SigmaAgg};
use crate::error::{RcmError, Result};
use crate::fixtures;
use crate::groundgraph::{ground_index, CompiledModel, NumericGround};
use crate::paths::{detect_model_cycles, is_valid_path, RelationalModel, RelationalVariable};
use crate::schema::{canonical_json, Schema};
use crate::separation::{DiGraph, Mode, SeparationContext, SeparationQuery, Walk};
use crate::skeleton::{ClassTable, CompactSkeleton, Skeleton, SkeletonEnumerator, SkeletonIndex, Traversal};

pub const DEFAULT_STATE_LIMIT: usize = 50_000_000;

/// The walk oracle's state cap: `RCM_STATE_LIMIT` if set, else
/// [`DEFAULT_STATE_LIMIT`].
pub fn state_limit() -> usize {
    std::env::var("RCM_STATE_LIMIT")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_STATE_LIMIT)
}

/// Reachability closure, components and ancestors by brute force.
struct Closure {
    reach: Vec<Vec<bool>>,
}

impl Closure {
    fn new(g: &DiGraph) -> Self {
        let n = g.node_count();
        let mut reach = vec![vec![false; n]; n];
        for (s, row) in reach.iter_mut().enumerate() {
            let mut stack = vec![s];
            row[s] = true;
            while let Some(v) = stack.pop() {
                for &w in g.succ(v) {
                    if !row[w] {
                        row[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        Closure { reach }
    }

    fn same_component(&self, a: usize, b: usize) -> bool {
        self.reach[a][b] && self.reach[b][a]
    }

    fn ancestors_of(&self, set: &BTreeSet<usize>) -> Vec<bool> {
        (0..self.reach.len()).map(|u| set.iter().any(|&c| self.reach[u][c])).collect()
    }
}

/// Blocking status of one walk, by the definitions: an endpoint in `z`
/// blocks; a collider outside the ancestors of `z` blocks; a conditioned
/// non-collider blocks in mode d, and in mode σ only if it points to a walk
/// neighbour in another strongly connected component.
pub fn walk_is_blocked(g: &DiGraph, walk: &Walk, z: &BTreeSet<usize>, mode: Mode) -> bool {
    let closure = Closure::new(g);
    let an = closure.ancestors_of(z);
    blocked_with(&closure, &an, walk, z, mode)
}

fn blocked_with(closure: &Closure, an: &[bool], walk: &Walk, z: &BTreeSet<usize>, mode: Mode) -> bool {
    let v = &walk.nodes;
    if z.contains(&v[0]) || z.contains(v.last().unwrap()) {
        return true;
    }
    (1..v.len().saturating_sub(1)).any(|i| interior_blocked(closure, an, z, mode, v[i - 1], v[i], v[i + 1], walk.forward[i - 1], walk.forward[i]))
}

#[allow(clippy::too_many_arguments)]
fn interior_blocked(
    closure: &Closure,
    an: &[bool],
    z: &BTreeSet<usize>,
    mode: Mode,
    prev: usize,
    v: usize,
    next: usize,
    into_v: bool,
    out_of_v: bool,
) -> bool {
    let collider = into_v && !out_of_v;
    if collider {
        return !an[v];
    }
    if !z.contains(&v) {
        return false;
    }
    match mode {
        Mode::D => true,
        Mode::Sigma => {
            let points_back = !into_v && !closure.same_component(v, prev);
            let points_on = out_of_v && !closure.same_component(v, next);
            points_back || points_on
        }
    }
}

/// Separation by enumerating walks from `x`. Walks never repeat a
/// `(node, arrival)` state, where the arrival records the direction of the
/// incoming edge and, for edges leaving the node, whether the previous node
/// shares its component: cutting the loop between two equal states keeps an
/// open walk open, so this loses no verdicts.
pub fn walk_enumeration_separated(g: &DiGraph, q: &SeparationQuery) -> Result<bool> {
    walk_enumeration_separated_with_limit(g, q, state_limit())
}

pub fn walk_enumeration_separated_with_limit(g: &DiGraph, q: &SeparationQuery, limit: usize) -> Result<bool> {
    q.check()?;
    let n = g.node_count();
    if q.x.iter().chain(&q.y).chain(&q.z).any(|&v| v >= n) {
        return Err(RcmError::InvalidQuery("node outside the graph".into()));
    }
    Ok(find_open_walk(g, q, limit)?.is_none())
}

/// An open walk between `q.x` and `q.y`, if any.
pub fn find_open_walk(g: &DiGraph, q: &SeparationQuery, limit: usize) -> Result<Option<Walk>> {
    let closure = Closure::new(g);
    let an = closure.ancestors_of(&q.z);
    let mut search = WalkSearch {
        g,
        q,
        closure: &closure,
        an: &an,
        on_walk: vec![[false; 4]; g.node_count()],
        nodes: Vec::new(),
        forward: Vec::new(),
        visited: 0,
        limit,
    };
    for &x in &q.x {
        search.nodes.push(x);
        search.on_walk[x][0] = true;
        if search.dfs()? {
            return Ok(Some(Walk { nodes: search.nodes, forward: search.forward }));
        }
        search.on_walk[x][0] = false;
        search.nodes.pop();
    }
    Ok(None)
}

struct WalkSearch<'a> {
    g: &'a DiGraph,
    q: &'a SeparationQuery,
    closure: &'a Closure,
    an: &'a [bool],
    on_walk: Vec<[bool; 4]>,
    nodes: Vec<usize>,
    forward: Vec<bool>,
    visited: usize,
    limit: usize,
}

impl WalkSearch<'_> {
    /// Arrival class of the last node given the last step.
    fn arrival(&self, from: usize, to: usize, forward: bool) -> usize {
        if forward {
            1
        } else if self.closure.same_component(to, from) {
            2
        } else {
            3
        }
    }

    /// On success the walk is left in `nodes`/`forward`.
    fn dfs(&mut self) -> Result<bool> {
        self.visited += 1;
        if self.visited > self.limit {
            return Err(RcmError::StateLimitExceeded { needed: self.visited, limit: self.limit });
        }
        let v = *self.nodes.last().unwrap();
        let steps: Vec<(usize, bool)> = self
            .g
            .succ(v)
            .iter()
            .map(|&w| (w, true))
            .chain(self.g.pred(v).iter().map(|&w| (w, false)))
            .collect();
        for (w, fwd) in steps {
            if self.nodes.len() >= 2 {
                let prev = self.nodes[self.nodes.len() - 2];
                let into_v = *self.forward.last().unwrap();
                if interior_blocked(self.closure, self.an, &self.q.z, self.q.mode, prev, v, w, into_v, fwd) {
                    continue;
                }
            }
            let state = self.arrival(v, w, fwd);
            if self.on_walk[w][state] {
                continue;
            }
            self.nodes.push(w);
            self.forward.push(fwd);
            if self.q.y.contains(&w) {
                let walk = Walk { nodes: self.nodes.clone(), forward: self.forward.clone() };
                if !blocked_with(self.closure, self.an, &walk, &self.q.z, self.q.mode) {
                    return Ok(true);
                }
            } else {
                self.on_walk[w][state] = true;
                if self.dfs()? {
                    return Ok(true);
                }
                self.on_walk[w][state] = false;
            }
            self.nodes.pop();
            self.forward.pop();
        }
        Ok(false)
    }
}

/// One representative of every isomorphism class of loop-free directed
/// graphs on `n` nodes, in increasing order of their canonical adjacency
/// code.
pub fn digraph_classes(n: usize) -> Vec<DiGraph> {
    assert!(n <= 6, "exhaustive generation is limited to six nodes");
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    let perms = permutations(n);
    // bit position of pair (a, b) under each permutation
    let bit_of = |a: usize, b: usize| pairs.iter().position(|&p| p == (a, b)).unwrap();
    let mapped: Vec<Vec<usize>> =
        perms.iter().map(|p| pairs.iter().map(|&(a, b)| bit_of(p[a], p[b])).collect()).collect();
    let total = 1u64 << pairs.len();
    let mut codes: Vec<u64> = (0..total)
        .into_par_iter()
        .filter(|&code| {
            mapped.iter().all(|m| {
                let mut image = 0u64;
                for (i, &bit) in m.iter().enumerate() {
                    if code >> i & 1 == 1 {
                        image |= 1 << bit;
                    }
                }
                image >= code
            })
        })
        .collect();
    codes.sort_unstable();
    codes
        .into_iter()
        .map(|code| DiGraph::from_edges(n, pairs.iter().enumerate().filter(|(i, _)| code >> i & 1 == 1).map(|(_, &p)| p)))
        .collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// A seeded random graph on `n` nodes; each ordered pair becomes an edge with
/// probability `p`. With `acyclic`, only pairs `a < b` under a random node
/// order are considered.
pub fn random_digraph(n: usize, p: f64, acyclic: bool, rng: &mut impl Rng) -> DiGraph {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut g = DiGraph::new(n);
    for a in 0..n {
        for b in 0..n {
            if a == b || (acyclic && a >= b) {
                continue;
            }
            if rng.random::<f64>() < p {
                g.add_edge(order[a], order[b]);
            }
        }
    }
    g
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small seeded model: two or three entity classes with one attribute
/// each, one or two binary relationships, and up to three dependencies whose
/// cause paths have at most `max_path_items` items.
pub fn random_model(seed: u64, max_path_items: usize) -> RelationalModel {
    use crate::paths::{enumerate_paths, RelationalDependency};
    use crate::schema::{Cardinality, EntityClass, Participant, RelationshipClass};

    let mut rng = seeded_rng(seed);
    let n_entities = rng.random_range(2..=3);
    let entities: Vec<EntityClass> = (1..=n_entities)
        .map(|i| EntityClass { name: format!("E{i}"), attributes: vec![format!("A{i}")] })
        .collect();
    let card = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { Cardinality::Many } else { Cardinality::One };
    let n_rel = rng.random_range(1..=2);
    let relationships = (1..=n_rel)
        .map(|i| {
            let a = rng.random_range(0..n_entities);
            let b = (a + rng.random_range(1..n_entities)) % n_entities;
            RelationshipClass {
                name: format!("R{i}"),
                participants: vec![
                    Participant { entity: entities[a].name.clone(), cardinality: card(&mut rng) },
                    Participant { entity: entities[b].name.clone(), cardinality: card(&mut rng) },
                ],
                attributes: vec![],
            }
        })
        .collect();
    let schema = Schema { entities, relationships };
    let mut deps = BTreeSet::new();
    for _ in 0..rng.random_range(1..=3) {
        let start = &schema.entities[rng.random_range(0..n_entities)];
        let paths: Vec<_> = enumerate_paths(&schema, &start.name, max_path_items.saturating_sub(1))
            .unwrap_or_default()
            .into_iter()
            .filter(|p| p.len() > 1 && schema.entity(p.last()).is_some())
            .collect();
        if paths.is_empty() {
            continue;
        }
        let path = paths[rng.random_range(0..paths.len())].clone();
        let attr = schema.entity(path.last()).unwrap().attributes[0].clone();
        deps.insert(RelationalDependency::new(RelationalVariable::new(path, attr), start.attributes[0].clone()));
    }
    RelationalModel::new(schema, deps.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOptions {
    pub max_per_entity: usize,
    /// Largest conditioning set in the query sweep.
    pub max_z: usize,
    pub require_min_degree_2: bool,
    /// Worker threads; 0 uses the global pool.
    pub jobs: usize,
    /// Stop after this many skeletons and mark the report incomplete.
    pub max_skeletons: Option<usize>,
    pub agg: AggOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            max_per_entity: 3,
            max_z: 2,
            require_min_degree_2: true,
            jobs: 0,
            max_skeletons: None,
            agg: AggOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryRecord {
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub z: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Disagreement {
    pub query: QueryRecord,
    pub agg_verdict: String,
    pub ground_verdict: String,
    /// Smallest enumerated skeleton behind the ground verdict, when one
    /// exhibits a connection.
    pub skeleton: Option<Skeleton>,
    pub base: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub theorem: String,
    pub model: String,
    pub perspective: String,
    pub hop: usize,
    pub mode: Mode,
    pub max_per_entity: usize,
    pub max_z: usize,
    pub min_degree_2: bool,
    pub skeletons: usize,
    pub bases: usize,
    pub queries: usize,
    pub agreements: usize,
    pub soundness_disagreements: Vec<Disagreement>,
    pub completeness_disagreements: Vec<Disagreement>,
    pub completeness_evidence: String,
    /// False when a resource cap stopped the sweep early.
    pub complete: bool,
    pub note: String,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        canonical_json(self)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {} (bounded check, up to {} instances per entity class)", self.theorem, self.max_per_entity);
        let _ = writeln!(s, "model          {}", self.model);
        let _ = writeln!(s, "perspective    {}  hop {}  mode {}", self.perspective, self.hop, self.mode);
        let _ = writeln!(s, "skeletons      {}{}", self.skeletons, if self.complete { "" } else { " (stopped at cap)" });
        let _ = writeln!(s, "bases          {}", self.bases);
        let _ = writeln!(s, "queries        {} (|X| = |Y| = 1, |Z| <= {})", self.queries, self.max_z);
        let _ = writeln!(s, "agreements     {}", self.agreements);
        let _ = writeln!(s, "soundness      {} disagreements", self.soundness_disagreements.len());
        let _ = writeln!(
            s,
            "completeness   {} disagreements ({})",
            self.completeness_disagreements.len(),
            self.completeness_evidence
        );
        for (label, list) in [("soundness", &self.soundness_disagreements), ("completeness", &self.completeness_disagreements)] {
            for d in list {
                let _ = writeln!(
                    s,
                    "  {label}: {} vs {} given {{{}}}: agg {}, ground {}",
                    d.query.x.join(", "),
                    d.query.y.join(", "),
                    d.query.z.join(", "),
                    d.agg_verdict,
                    d.ground_verdict
                );
            }
        }
        s
    }
}

fn verdict(separated: bool) -> String {
    if separated { "separated" } else { "connected" }.to_string()
}

struct Sweep {
    rvs: Vec<RelationalVariable>,
    /// (x, y, z) as indices into `rvs`.
    queries: Vec<(usize, usize, Vec<usize>)>,
}

impl Sweep {
    fn new(agg: &SigmaAgg, max_z: usize) -> Self {
        let rvs: Vec<RelationalVariable> = agg.relational_variables().cloned().collect();
        let mut queries = Vec::new();
        for x in 0..rvs.len() {
            for y in x + 1..rvs.len() {
                let rest: Vec<usize> = (0..rvs.len()).filter(|&i| i != x && i != y).collect();
                for z in subsets_up_to(&rest, max_z) {
                    queries.push((x, y, z));
                }
            }
        }
        Sweep { rvs, queries }
    }

    fn record(&self, q: &(usize, usize, Vec<usize>)) -> QueryRecord {
        QueryRecord {
            x: vec![self.rvs[q.0].to_string()],
            y: vec![self.rvs[q.1].to_string()],
            z: q.2.iter().map(|&i| self.rvs[i].to_string()).collect(),
        }
    }
}

fn subsets_up_to(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![(Vec::new(), 0usize)];
    for _ in 0..k {
        let mut next = Vec::new();
        for (s, start) in frontier {
            for (i, &item) in items.iter().enumerate().skip(start) {
                let mut t: Vec<usize> = s.clone();
                t.push(item);
                out.push(t.clone());
                next.push((t, i + 1));
            }
        }
        frontier = next;
    }
    out
}

/// Ground-level sets of a relational variable from one base: the attribute
/// nodes of its terminal set.
struct Instantiation<'a> {
    compiled: &'a CompiledModel,
    paths: Vec<Vec<u32>>,
    attrs: Vec<usize>,
}

impl<'a> Instantiation<'a> {
    fn new(compiled: &'a CompiledModel, rvs: &[RelationalVariable]) -> Self {
        let table = &compiled.table;
        let paths: Vec<Vec<u32>> =
            rvs.iter().map(|v| v.path.items().iter().map(|c| table.id(c).expect("class")).collect()).collect();
        let attrs = rvs
            .iter()
            .zip(&paths)
            .map(|(v, p)| compiled.attribute_id(*p.last().unwrap(), &v.attribute).expect("attribute"))
            .collect();
        Instantiation { compiled, paths, attrs }
    }

    fn nodes(&self, index: &SkeletonIndex, ground: &NumericGround, base: u32, t: &mut Traversal) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.paths.len());
        let mut items = Vec::new();
        for (p, &a) in self.paths.iter().zip(&self.attrs) {
            index.terminal_set_into(p, base, t, &mut items);
            out.push(items.iter().map(|&i| ground.node(i, a)).collect());
        }
        let _ = self.compiled;
        out
    }
}

/// Ground verdict for node sets that may overlap.
fn ground_separated(ctx: &SeparationContext<'_>, x: &[usize], y: &[usize], z: &[usize], mode: Mode, scratch: &mut [Vec<bool>; 3]) -> bool {
    let n = ctx.graph().node_count();
    for m in scratch.iter_mut() {
        m.clear();
        m.resize(n, false);
    }
    let [in_x, in_y, in_z] = scratch;
    z.iter().for_each(|&v| in_z[v] = true);
    x.iter().filter(|&&v| !in_z[v]).for_each(|&v| in_x[v] = true);
    y.iter().filter(|&&v| !in_z[v]).for_each(|&v| in_y[v] = true);
    if !in_x.iter().any(|&b| b) || !in_y.iter().any(|&b| b) {
        return true;
    }
    if (0..n).any(|v| in_x[v] && in_y[v]) {
        return false;
    }
    ctx.search(in_x, in_y, in_z, mode, false).separated
}

fn build_for_mode(model: &RelationalModel, perspective: &str, h: usize, mode: Mode, options: &AggOptions) -> Result<SigmaAgg> {
    let agg_mode = match mode {
        Mode::D => AggMode::Acyclic,
        Mode::Sigma => AggMode::Sigma,
    };
    build_agg_with(model, perspective, h, agg_mode, options)
}

fn collect_skeletons(schema: &Schema, max_per_entity: usize, min_degree_2: bool, cap: Option<usize>) -> (Vec<CompactSkeleton>, bool) {
    let mut it = SkeletonEnumerator::new(schema, max_per_entity).min_degree_2(min_degree_2);
    let mut out = Vec::new();
    for sk in it.by_ref() {
        if cap.is_some_and(|c| out.len() >= c) {
            return (out, false);
        }
        out.push(sk);
    }
    (out, true)
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Compares AGG verdicts with ground verdicts for every query in the sweep:
/// single-variable `X` and `Y`, conditioning sets up to `max_z`.
pub fn verify_abstraction(
    model: &RelationalModel,
    model_name: &str,
    perspective: &str,
    h: usize,
    mode: Mode,
    options: &VerifyOptions,
) -> Result<VerificationReport> {
    model.ensure_valid()?;
    let agg = build_for_mode(model, perspective, h, mode, &options.agg)?;
    let sweep = Sweep::new(&agg, options.max_z);
    let agg_verdicts: Vec<bool> = sweep
        .queries
        .iter()
        .map(|(x, y, z)| {
            let one = |i: usize| [sweep.rvs[i].clone()].into_iter().collect::<BTreeSet<_>>();
            let zs: BTreeSet<_> = z.iter().map(|&i| sweep.rvs[i].clone()).collect();
            relational_separated(&agg, &one(*x), &one(*y), &zs, mode).map(|r| r.separated)
        })
        .collect::<Result<_>>()?;

    let compiled = CompiledModel::new(model)?;
    let (skeletons, complete) =
        collect_skeletons(&model.schema, options.max_per_entity, options.require_min_degree_2, options.max_skeletons);
    let inst = Instantiation::new(&compiled, &sweep.rvs);
    let base_class = compiled.table.id(perspective).ok_or_else(|| RcmError::UnknownName(perspective.into()))?;

    // per skeleton: bases checked and, per query, the first connecting base
    let per_skeleton: Vec<(usize, Vec<Option<u32>>)> = with_pool(options.jobs, || {
        skeletons
            .par_iter()
            .map(|sk| {
                let index = sk.index(&compiled.table);
                let ground = ground_index(&compiled, &index);
                let ctx = SeparationContext::new(&ground.graph);
                let mut t = Traversal::default();
                let mut scratch = [Vec::new(), Vec::new(), Vec::new()];
                let mut zbuf = Vec::new();
                let bases = index.items_of_class(base_class);
                let mut connected: Vec<Option<u32>> = vec![None; sweep.queries.len()];
                for &b in bases {
                    let sets = inst.nodes(&index, &ground, b, &mut t);
                    for (qi, (x, y, z)) in sweep.queries.iter().enumerate() {
                        if connected[qi].is_some() {
                            continue;
                        }
                        zbuf.clear();
                        for &zi in z {
                            zbuf.extend_from_slice(&sets[zi]);
                        }
                        if !ground_separated(&ctx, &sets[*x], &sets[*y], &zbuf, mode, &mut scratch) {
                            connected[qi] = Some(b);
                        }
                    }
                }
                (bases.len(), connected)
            })
            .collect()
    });

    let mut witness: Vec<Option<(usize, usize, u32)>> = vec![None; sweep.queries.len()];
    let mut bases = 0;
    for (si, (nb, connected)) in per_skeleton.iter().enumerate() {
        bases += nb;
        for (qi, c) in connected.iter().enumerate() {
            if let Some(b) = c {
                let size = skeletons[si].instance_count();
                if witness[qi].is_none_or(|(s, _, _)| size < s) {
                    witness[qi] = Some((size, si, *b));
                }
            }
        }
    }

    let mut soundness = Vec::new();
    let mut completeness = Vec::new();
    for (qi, q) in sweep.queries.iter().enumerate() {
        let agg_sep = agg_verdicts[qi];
        let ground_sep = witness[qi].is_none();
        if agg_sep == ground_sep {
            continue;
        }
        let (skeleton, base) = match witness[qi] {
            Some((_, si, b)) => {
                let sk = &skeletons[si];
                let index = sk.index(&compiled.table);
                (Some(sk.to_skeleton(&compiled.table)), Some(index.name(&compiled.table, b)))
            }
            None => (None, None),
        };
        let d = Disagreement {
            query: sweep.record(q),
            agg_verdict: verdict(agg_sep),
            ground_verdict: verdict(ground_sep),
            skeleton,
            base,
        };
        if agg_sep {
            soundness.push(d);
        } else {
            completeness.push(d);
        }
    }
    let disagreements = soundness.len() + completeness.len();
    Ok(VerificationReport {
        theorem: match mode {
            Mode::D => "relational d-separation on the AGG".into(),
            Mode::Sigma => "relational sigma-separation on the sigma-AGG".into(),
        },
        model: model_name.to_string(),
        perspective: perspective.to_string(),
        hop: h,
        mode,
        max_per_entity: options.max_per_entity,
        max_z: options.max_z,
        min_degree_2: options.require_min_degree_2,
        skeletons: skeletons.len(),
        bases,
        queries: sweep.queries.len(),
        agreements: sweep.queries.len() - disagreements,
        soundness_disagreements: soundness,
        completeness_disagreements: completeness,
        completeness_evidence: "bounded evidence".into(),
        complete,
        note: format!(
            "skeletons enumerated up to {} instances per entity class; the quantifier over all skeletons is only checked within this bound",
            options.max_per_entity
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Realization {
    pub node: String,
    pub realized: bool,
    pub skeleton: Option<Skeleton>,
    pub base: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Lemma1Report {
    pub model: String,
    pub perspective: String,
    pub hop: usize,
    pub max_per_entity: usize,
    pub min_degree_2: bool,
    pub skeletons: usize,
    pub nodes: Vec<Realization>,
    pub unrealized: Vec<String>,
    pub complete: bool,
}

impl Lemma1Report {
    pub fn to_json(&self) -> String {
        canonical_json(self)
    }

    pub fn realization(&self, node: &str) -> Option<&Realization> {
        self.nodes.iter().find(|r| r.node == node)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lemma1Options {
    pub max_per_entity: usize,
    pub require_min_degree_2: bool,
    /// Only search for these nodes (display form); all nodes when empty.
    pub targets: Vec<String>,
    pub max_skeletons: Option<usize>,
    pub agg: AggOptions,
}

impl Default for Lemma1Options {
    fn default() -> Self {
        Lemma1Options {
            max_per_entity: 3,
            require_min_degree_2: true,
            targets: Vec::new(),
            max_skeletons: None,
            agg: AggOptions::default(),
        }
    }
}

/// For each AGG node, searches enumerated skeletons for a base instance from
/// which the node is non-empty: a relational variable with a non-empty
/// terminal set, or an intersection whose two terminal sets overlap.
pub fn check_lemma1(
    model: &RelationalModel,
    model_name: &str,
    perspective: &str,
    h: usize,
    options: &Lemma1Options,
) -> Result<Lemma1Report> {
    model.ensure_valid()?;
    if !detect_model_cycles(model).is_empty() {
        return Err(RcmError::CyclicModel);
    }
    let agg = build_agg_with(model, perspective, h, AggMode::Acyclic, &options.agg)?;
    let targets: Vec<&AggNode> = agg
        .nodes()
        .iter()
        .filter(|n| options.targets.is_empty() || options.targets.iter().any(|t| *t == n.to_string()))
        .collect();
    for t in &options.targets {
        if !targets.iter().any(|n| n.to_string() == *t) {
            return Err(RcmError::UnknownVariable(t.clone()));
        }
    }
    let table = ClassTable::from_schema(&model.schema);
    let ids = |v: &RelationalVariable| -> Vec<u32> { v.path.items().iter().map(|c| table.id(c).unwrap()).collect() };
    let paths: Vec<Vec<Vec<u32>>> = targets.iter().map(|n| n.constituents().map(ids).collect()).collect();
    let base_class = table.id(perspective).unwrap();

    let mut found: Vec<Option<(Skeleton, String)>> = vec![None; targets.len()];
    let mut open: Vec<usize> = (0..targets.len()).collect();
    let mut t = Traversal::default();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut examined = 0;
    let mut complete = true;
    let it = SkeletonEnumerator::new(&model.schema, options.max_per_entity).min_degree_2(options.require_min_degree_2);
    for sk in it {
        if open.is_empty() {
            break;
        }
        if options.max_skeletons.is_some_and(|m| examined >= m) {
            complete = false;
            break;
        }
        examined += 1;
        let index = sk.index(&table);
        open.retain(|&ti| {
            for &base in index.items_of_class(base_class) {
                let p = &paths[ti];
                index.terminal_set_into(&p[0], base, &mut t, &mut a);
                let hit = match p.get(1) {
                    None => !a.is_empty(),
                    Some(q) => {
                        index.terminal_set_into(q, base, &mut t, &mut b);
                        a.iter().any(|i| b.binary_search(i).is_ok())
                    }
                };
                if hit {
                    found[ti] = Some((sk.to_skeleton(&table), index.name(&table, base)));
                    return false;
                }
            }
            true
        });
    }
    let nodes: Vec<Realization> = targets
        .iter()
        .zip(found)
        .map(|(n, f)| Realization {
            node: n.to_string(),
            realized: f.is_some(),
            base: f.as_ref().map(|(_, b)| b.clone()),
            skeleton: f.map(|(s, _)| s),
        })
        .collect();
    let unrealized = nodes.iter().filter(|r| !r.realized).map(|r| r.node.clone()).collect();
    Ok(Lemma1Report {
        model: model_name.to_string(),
        perspective: perspective.to_string(),
        hop: h,
        max_per_entity: options.max_per_entity,
        min_degree_2: options.require_min_degree_2,
        skeletons: examined,
        nodes,
        unrealized,
        complete,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CounterexampleReport {
    pub max_per_entity: usize,
    pub paths_valid: bool,
    /// The AGG d-connects `P.X` and `S'.Z` given `Q.Y`.
    pub claim1: bool,
    pub claim1_witness: Option<String>,
    /// No enumerated skeleton d-connects them from any base.
    pub claim2: bool,
    pub claim2_counterexample: Option<Skeleton>,
    pub skeletons: usize,
    /// Skeletons left by the minimum-degree filter.
    pub filtered_skeletons: usize,
}

impl CounterexampleReport {
    pub fn to_json(&self) -> String {
        canonical_json(self)
    }
}

/// Builds the five-class, all-one counterexample model and checks both of
/// its claims within the skeleton bound.
pub fn reproduce_counterexample(max_per_entity: usize) -> Result<CounterexampleReport> {
    let model = fixtures::lee_counterexample();
    let v = fixtures::lee_variables();
    let schema = &model.schema;
    let mut paths_valid = true;
    for var in [&v.p_x, &v.q_y, &v.s_z, &v.s_prime_z] {
        paths_valid &= is_valid_path(schema, var.path.items())?.is_valid();
    }
    let agg = build_agg_with(&model, "E1", 6, AggMode::Acyclic, &AggOptions::default())?;
    let one = |v: &RelationalVariable| [v.clone()].into_iter().collect::<BTreeSet<_>>();
    let r = relational_separated(&agg, &one(&v.p_x), &one(&v.s_prime_z), &one(&v.q_y), Mode::D)?;
    let claim1_witness = r.witness.as_ref().map(|w| agg.render_walk(w));

    let compiled = CompiledModel::new(&model)?;
    let rvs = [v.p_x.clone(), v.s_prime_z.clone(), v.q_y.clone()];
    let inst = Instantiation::new(&compiled, &rvs);
    let base_class = compiled.table.id("E1").unwrap();
    let (skeletons, _) = collect_skeletons(schema, max_per_entity, false, None);
    let connected: Vec<bool> = skeletons
        .par_iter()
        .map(|sk| {
            let index = sk.index(&compiled.table);
            let ground = ground_index(&compiled, &index);
            let ctx = SeparationContext::new(&ground.graph);
            let mut t = Traversal::default();
            let mut scratch = [Vec::new(), Vec::new(), Vec::new()];
            index.items_of_class(base_class).iter().any(|&b| {
                let sets = inst.nodes(&index, &ground, b, &mut t);
                !ground_separated(&ctx, &sets[0], &sets[1], &sets[2], Mode::D, &mut scratch)
            })
        })
        .collect();
    let first = connected.iter().position(|&c| c);
    let filtered = SkeletonEnumerator::new(schema, max_per_entity).min_degree_2(true).count();
    Ok(CounterexampleReport {
        max_per_entity,
        paths_valid,
        claim1: !r.separated,
        claim1_witness,
        claim2: first.is_none(),
        claim2_counterexample: first.map(|i| skeletons[i].to_skeleton(&compiled.table)),
        skeletons: skeletons.len(),
        filtered_skeletons: filtered,
    })
}

/// Audits AGG edges against ground edges over enumerated skeletons. An AGG
/// node stands for the attribute nodes of its terminal set from a base, or
/// for the overlap of both constituents' sets for an intersection. An AGG
/// edge is realized when some ground edge joins the two sets; a ground edge
/// between two relational variables' sets is covered when some AGG edge joins
/// nodes standing for its endpoints.
pub fn audit_agg_edges(
    model: &RelationalModel,
    agg: &SigmaAgg,
    max_per_entity: usize,
    require_min_degree_2: bool,
) -> Result<EdgeAudit> {
    let compiled = CompiledModel::new(model)?;
    let rvs: Vec<RelationalVariable> = agg.relational_variables().cloned().collect();
    let inst = Instantiation::new(&compiled, &rvs);
    let base_class = compiled
        .table
        .id(agg.perspective())
        .ok_or_else(|| RcmError::UnknownName(agg.perspective().into()))?;
    let rv_pos = |v: &RelationalVariable| rvs.iter().position(|r| r == v).unwrap();
    let members: Vec<Vec<usize>> = agg.nodes().iter().map(|n| n.constituents().map(rv_pos).collect()).collect();
    let edges = agg.graph().edges();
    let mut realized = vec![false; edges.len()];
    let mut uncovered: BTreeMap<(String, String), Skeleton> = BTreeMap::new();
    let mut t = Traversal::default();
    for sk in SkeletonEnumerator::new(&model.schema, max_per_entity).min_degree_2(require_min_degree_2) {
        let index = sk.index(&compiled.table);
        let ground = ground_index(&compiled, &index);
        for &b in index.items_of_class(base_class) {
            let sets: Vec<BTreeSet<usize>> =
                inst.nodes(&index, &ground, b, &mut t).into_iter().map(|v| v.into_iter().collect()).collect();
            let stands_for = |node: usize, g: usize| members[node].iter().all(|&m| sets[m].contains(&g));
            for (k, &(a, c)) in edges.iter().enumerate() {
                if realized[k] {
                    continue;
                }
                let from: Vec<usize> = sets[members[a][0]].iter().copied().filter(|&g| stands_for(a, g)).collect();
                realized[k] = from.iter().any(|&u| ground.graph.succ(u).iter().any(|&w| stands_for(c, w)));
            }
            for (i, si) in sets.iter().enumerate() {
                for &u in si {
                    for &w in ground.graph.succ(u) {
                        for (j, sj) in sets.iter().enumerate() {
                            if i == j || !sj.contains(&w) {
                                continue;
                            }
                            let covered = edges.iter().any(|&(a, c)| stands_for(a, u) && stands_for(c, w));
                            if !covered {
                                uncovered
                                    .entry((rvs[i].to_string(), rvs[j].to_string()))
                                    .or_insert_with(|| sk.to_skeleton(&compiled.table));
                            }
                        }
                    }
                }
            }
        }
    }
    let label = |i: usize| agg.nodes()[i].to_string();
    let unrealized = edges
        .iter()
        .zip(&realized)
        .filter(|(_, r)| !**r)
        .map(|(&(a, c), _)| (label(a), label(c)))
        .collect();
    Ok(EdgeAudit { unrealized_edges: unrealized, uncovered_ground_edges: uncovered })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeAudit {
    /// AGG edges with no ground counterpart.
    pub unrealized_edges: Vec<(String, String)>,
    /// Pairs of variables joined by a ground edge that no AGG edge between
    /// their covering nodes accounts for.
    pub uncovered_ground_edges: BTreeMap<(String, String), Skeleton>,
}
