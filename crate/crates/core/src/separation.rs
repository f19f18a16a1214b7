//! Strongly connected components, ancestors, and d-/σ-separation on
//! directed graphs that may contain cycles.
//!
//! Both separations are answered by one breadth-first search over states
//! `(node, how the walk arrived)`, applying the blocking rules of the chosen
//! mode at every interior node.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{RcmError, Result};

/// A simple directed graph on nodes `0..n`. Parallel edges collapse.
#[derive(Debug, Clone, Default)]
pub struct DiGraph {
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
}

impl DiGraph {
    pub fn new(n: usize) -> Self {
        DiGraph { succ: vec![Vec::new(); n], pred: vec![Vec::new(); n] }
    }

    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut g = DiGraph::new(n);
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn add_node(&mut self) -> usize {
        self.succ.push(Vec::new());
        self.pred.push(Vec::new());
        self.succ.len() - 1
    }

    /// Adds `a -> b`; returns false if the edge was already present.
    pub fn add_edge(&mut self, a: usize, b: usize) -> bool {
        if self.succ[a].contains(&b) {
            return false;
        }
        self.succ[a].push(b);
        self.pred[b].push(a);
        true
    }

    pub fn node_count(&self) -> usize {
        self.succ.len()
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn succ(&self, v: usize) -> &[usize] {
        &self.succ[v]
    }

    pub fn pred(&self, v: usize) -> &[usize] {
        &self.pred[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.succ[a].contains(&b)
    }

    /// All edges, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .succ
            .iter()
            .enumerate()
            .flat_map(|(a, bs)| bs.iter().map(move |&b| (a, b)))
            .collect();
        out.sort_unstable();
        out
    }

    pub fn is_cyclic(&self) -> bool {
        let scc = scc(self);
        (0..self.node_count()).any(|v| self.succ[v].contains(&v))
            || scc.component_count() < self.node_count()
    }
}

impl PartialEq for DiGraph {
    fn eq(&self, other: &Self) -> bool {
        self.node_count() == other.node_count() && self.edges() == other.edges()
    }
}

impl Eq for DiGraph {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SccIndex {
    component_of: Vec<usize>,
    count: usize,
}

impl SccIndex {
    pub fn component_of(&self, v: usize) -> usize {
        self.component_of[v]
    }

    pub fn component_count(&self) -> usize {
        self.count
    }

    pub fn same(&self, a: usize, b: usize) -> bool {
        self.component_of[a] == self.component_of[b]
    }

    /// Components as sorted node lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut comps = vec![Vec::new(); self.count];
        for (v, &c) in self.component_of.iter().enumerate() {
            comps[c].push(v);
        }
        comps.sort();
        comps
    }
}

/// Tarjan's algorithm, iterative.
pub fn scc(g: &DiGraph) -> SccIndex {
    const UNSEEN: usize = usize::MAX;
    let n = g.node_count();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut component_of = vec![UNSEEN; n];
    let mut count = 0;
    let mut next = 0;
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        while let Some(&mut (v, ref mut i)) = call.last_mut() {
            if *i == 0 {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = g.succ(v).get(*i) {
                *i += 1;
                if index[w] == UNSEEN {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                while let Some(w) = stack.pop() {
                    on_stack[w] = false;
                    component_of[w] = count;
                    if w == v {
                        break;
                    }
                }
                count += 1;
            }
        }
    }
    SccIndex { component_of, count }
}

/// Reflexive ancestors of `targets`.
pub fn ancestors(g: &DiGraph, targets: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mask = ancestor_mask(g, targets.iter().copied());
    (0..g.node_count()).filter(|&v| mask[v]).collect()
}

pub(crate) fn ancestor_mask(g: &DiGraph, targets: impl IntoIterator<Item = usize>) -> Vec<bool> {
    let mut seen = vec![false; g.node_count()];
    let mut queue: Vec<usize> = Vec::new();
    for t in targets {
        if !seen[t] {
            seen[t] = true;
            queue.push(t);
        }
    }
    while let Some(v) = queue.pop() {
        for &u in g.pred(v) {
            if !seen[u] {
                seen[u] = true;
                queue.push(u);
            }
        }
    }
    seen
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    D,
    Sigma,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::D => "d",
            Mode::Sigma => "sigma",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = RcmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d" => Ok(Mode::D),
            "sigma" | "σ" => Ok(Mode::Sigma),
            other => Err(RcmError::Parse(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparationQuery {
    pub x: BTreeSet<usize>,
    pub y: BTreeSet<usize>,
    pub z: BTreeSet<usize>,
    pub mode: Mode,
}

impl SeparationQuery {
    pub fn new(
        x: impl IntoIterator<Item = usize>,
        y: impl IntoIterator<Item = usize>,
        z: impl IntoIterator<Item = usize>,
        mode: Mode,
    ) -> Result<Self> {
        let q = SeparationQuery {
            x: x.into_iter().collect(),
            y: y.into_iter().collect(),
            z: z.into_iter().collect(),
            mode,
        };
        q.check()?;
        Ok(q)
    }

    pub fn check(&self) -> Result<()> {
        if self.x.is_empty() || self.y.is_empty() {
            return Err(RcmError::InvalidQuery("x and y must be nonempty".into()));
        }
        if !self.x.is_disjoint(&self.y) || !self.x.is_disjoint(&self.z) || !self.y.is_disjoint(&self.z) {
            return Err(RcmError::InvalidQuery("x, y and z must be pairwise disjoint".into()));
        }
        Ok(())
    }

    fn check_in(&self, g: &DiGraph) -> Result<()> {
        self.check()?;
        let n = g.node_count();
        match self.x.iter().chain(&self.y).chain(&self.z).find(|&&v| v >= n) {
            Some(v) => Err(RcmError::InvalidQuery(format!("node {v} is not in the graph"))),
            None => Ok(()),
        }
    }
}

/// A walk `nodes[0] - nodes[1] - ...`; `forward[i]` tells whether the step
/// uses the edge `nodes[i] -> nodes[i+1]` (else `nodes[i+1] -> nodes[i]`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Walk {
    pub nodes: Vec<usize>,
    pub forward: Vec<bool>,
}

impl Walk {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Renders the walk with node labels, e.g. `a -> b <- c`.
    pub fn render(&self, label: impl Fn(usize) -> String) -> String {
        let mut s = label(self.nodes[0]);
        for (i, &f) in self.forward.iter().enumerate() {
            s.push_str(if f { " -> " } else { " <- " });
            s.push_str(&label(self.nodes[i + 1]));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub separated: bool,
    pub witness: Option<Walk>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
enum Arrival {
    Start = 0,
    /// Arrived along an edge pointing into the node.
    Head = 1,
    /// Arrived along an edge leaving the node, whose other end shares the
    /// node's component.
    TailSame = 2,
    /// As `TailSame`, but the other end lies in another component.
    TailOther = 3,
}

/// Reusable per-graph data for answering many queries.
#[derive(Debug, Clone)]
pub struct SeparationContext<'g> {
    graph: &'g DiGraph,
    scc: SccIndex,
}

impl<'g> SeparationContext<'g> {
    pub fn new(graph: &'g DiGraph) -> Self {
        SeparationContext { graph, scc: scc(graph) }
    }

    pub fn graph(&self) -> &DiGraph {
        self.graph
    }

    pub fn scc(&self) -> &SccIndex {
        &self.scc
    }

    pub fn query(&self, q: &SeparationQuery) -> Result<SeparationResult> {
        q.check_in(self.graph)?;
        let n = self.graph.node_count();
        let mut in_x = vec![false; n];
        let mut in_y = vec![false; n];
        let mut in_z = vec![false; n];
        q.x.iter().for_each(|&v| in_x[v] = true);
        q.y.iter().for_each(|&v| in_y[v] = true);
        q.z.iter().for_each(|&v| in_z[v] = true);
        Ok(self.search(&in_x, &in_y, &in_z, q.mode, true))
    }

    /// Core search over boolean node masks; the sets need not be disjoint
    /// here, callers guarantee it.
    pub(crate) fn search(
        &self,
        in_x: &[bool],
        in_y: &[bool],
        in_z: &[bool],
        mode: Mode,
        want_witness: bool,
    ) -> SeparationResult {
        let g = self.graph;
        let n = g.node_count();
        let an_z = ancestor_mask(g, (0..n).filter(|&v| in_z[v]));
        let state = |v: usize, a: Arrival| v * 4 + a as usize;
        let mut parent = vec![usize::MAX; n * 4];
        let mut seen = vec![false; n * 4];
        let mut queue = VecDeque::new();
        for v in (0..n).filter(|&v| in_x[v]) {
            let s = state(v, Arrival::Start);
            seen[s] = true;
            queue.push_back(s);
        }
        let mut found = None;
        'bfs: while let Some(s) = queue.pop_front() {
            let v = s / 4;
            let arrival = match s % 4 {
                0 => Arrival::Start,
                1 => Arrival::Head,
                2 => Arrival::TailSame,
                _ => Arrival::TailOther,
            };
            let conditioned = in_z[v] && arrival != Arrival::Start;
            // leave along v -> w: v is a non-collider pointing at w
            for &w in g.succ(v) {
                let ok = !conditioned
                    || (mode == Mode::Sigma && self.scc.same(v, w) && arrival != Arrival::TailOther);
                if ok {
                    let t = state(w, Arrival::Head);
                    if !seen[t] {
                        seen[t] = true;
                        parent[t] = s;
                        if in_y[w] {
                            found = Some(t);
                            break 'bfs;
                        }
                        queue.push_back(t);
                    }
                }
            }
            // leave along v <- w
            for &w in g.pred(v) {
                let ok = match arrival {
                    Arrival::Start => true,
                    Arrival::Head => an_z[v],
                    Arrival::TailSame => !in_z[v] || mode == Mode::Sigma,
                    Arrival::TailOther => !in_z[v],
                };
                if ok {
                    let a = if self.scc.same(v, w) { Arrival::TailSame } else { Arrival::TailOther };
                    let t = state(w, a);
                    if !seen[t] {
                        seen[t] = true;
                        parent[t] = s;
                        if in_y[w] {
                            found = Some(t);
                            break 'bfs;
                        }
                        queue.push_back(t);
                    }
                }
            }
        }
        let Some(end) = found else {
            return SeparationResult { separated: true, witness: None };
        };
        if !want_witness {
            return SeparationResult { separated: false, witness: None };
        }
        let mut states = vec![end];
        while parent[*states.last().unwrap()] != usize::MAX {
            states.push(parent[*states.last().unwrap()]);
        }
        states.reverse();
        let nodes: Vec<usize> = states.iter().map(|s| s / 4).collect();
        let forward = states[1..].iter().map(|s| s % 4 == Arrival::Head as usize).collect();
        SeparationResult { separated: false, witness: Some(Walk { nodes, forward }) }
    }
}

/// Def.-1 style d-separation; the query's mode must be `D`.
pub fn d_separated(g: &DiGraph, q: &SeparationQuery) -> Result<SeparationResult> {
    if q.mode != Mode::D {
        return Err(RcmError::ModeMismatch("d_separated needs a query in mode d".into()));
    }
    SeparationContext::new(g).query(q)
}

/// σ-separation; the query's mode must be `Sigma`.
pub fn sigma_separated(g: &DiGraph, q: &SeparationQuery) -> Result<SeparationResult> {
    if q.mode != Mode::Sigma {
        return Err(RcmError::ModeMismatch("sigma_separated needs a query in mode sigma".into()));
    }
    SeparationContext::new(g).query(q)
}

/// Verdict only, in whichever mode the query names.
pub fn blocked_status_search(g: &DiGraph, q: &SeparationQuery) -> Result<bool> {
    q.check_in(g)?;
    let ctx = SeparationContext::new(g);
    let n = g.node_count();
    let mask = |s: &BTreeSet<usize>| {
        let mut m = vec![false; n];
        s.iter().for_each(|&v| m[v] = true);
        m
    };
    Ok(ctx.search(&mask(&q.x), &mask(&q.y), &mask(&q.z), q.mode, false).separated)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    // Alice.S=0 Bob.S=1 P1.E=2 P2.E=3 M1.Pref=4
    fn fig2b() -> DiGraph {
        DiGraph::from_edges(5, [(0, 2), (1, 2), (0, 3), (2, 4), (3, 4)])
    }

    fn fig3a() -> DiGraph {
        let mut g = fig2b();
        for (a, b) in [(2, 0), (2, 1), (3, 0)] {
            g.add_edge(a, b);
        }
        g
    }

    #[test]
    fn scc_examples() {
        assert_eq!(scc(&fig2b()).component_count(), 5);
        let comps = scc(&fig3a()).components();
        assert_eq!(comps, vec![vec![0, 1, 2, 3], vec![4]]);
        let two = DiGraph::from_edges(2, [(0, 1), (1, 0)]);
        assert_eq!(scc(&two).component_count(), 1);
        assert!(!fig2b().is_cyclic());
        assert!(fig3a().is_cyclic());
        assert!(!DiGraph::new(1).is_cyclic());
    }

    #[test]
    fn ancestor_examples() {
        let g = fig2b();
        assert!(ancestors(&g, &set(&[])).is_empty());
        assert_eq!(ancestors(&g, &set(&[4])), set(&[0, 1, 2, 3, 4]));
        assert_eq!(ancestors(&DiGraph::new(3), &set(&[1])), set(&[1]));
    }

    #[test]
    fn fig2b_queries() {
        let g = fig2b();
        let q = SeparationQuery::new([1], [4], [2], Mode::D).unwrap();
        let r = d_separated(&g, &q).unwrap();
        assert!(!r.separated);
        let w = r.witness.unwrap();
        assert_eq!(w.nodes, vec![1, 2, 0, 3, 4]);
        assert_eq!(w.forward, vec![true, false, true, true]);

        let q = SeparationQuery::new([1], [4], [2, 0], Mode::D).unwrap();
        assert!(d_separated(&g, &q).unwrap().separated);
    }

    #[test]
    fn fig3a_queries() {
        let g = fig3a();
        let q = SeparationQuery::new([1], [4], [2, 3], Mode::Sigma).unwrap();
        assert!(sigma_separated(&g, &q).unwrap().separated);
        let q = SeparationQuery::new([1], [0], [2], Mode::Sigma).unwrap();
        assert!(!sigma_separated(&g, &q).unwrap().separated);
        // d also connects them, but only through the collider Bob -> P1 <- Alice
        let q = SeparationQuery::new([1], [0], [2], Mode::D).unwrap();
        let w = d_separated(&g, &q).unwrap().witness.unwrap();
        assert_eq!(w.forward, vec![true, false]);
        let fork = DiGraph::from_edges(3, [(0, 1), (0, 2), (1, 0), (2, 0)]);
        let q = SeparationQuery::new([1], [2], [0], Mode::Sigma).unwrap();
        assert!(!sigma_separated(&fork, &q).unwrap().separated);
    }

    #[test]
    fn unreachable_is_separated() {
        let g = DiGraph::from_edges(4, [(0, 1), (2, 3)]);
        let q = SeparationQuery::new([0], [3], [], Mode::D).unwrap();
        assert!(blocked_status_search(&g, &q).unwrap());
    }

    #[test]
    fn query_invariants() {
        assert!(SeparationQuery::new([0], [1], [0], Mode::D).is_err());
        assert!(SeparationQuery::new([], [1], [], Mode::D).is_err());
        assert!(SeparationQuery::new([0], [0], [], Mode::D).is_err());
        let q = SeparationQuery::new([0], [1], [], Mode::Sigma).unwrap();
        assert!(matches!(d_separated(&fig2b(), &q), Err(RcmError::ModeMismatch(_))));
        let q = SeparationQuery::new([0], [9], [], Mode::D).unwrap();
        assert!(d_separated(&fig2b(), &q).is_err());
    }
}
