use std::collections::{BTreeMap, HashSet};

use super::canon::canonical_code_compact;
use super::index::ClassTable;
use super::{cartesian, RelationshipInstance, Skeleton, SkeletonIndex};
use crate::error::{RcmError, Result};
use crate::schema::{Cardinality, Schema};

/// A skeleton in numeric form: instance counts per entity class and, for
/// each relationship instance, its class (index among relationship classes)
/// and participants (index within their entity class).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CompactSkeleton {
    pub counts: Vec<u8>,
    pub tuples: Vec<(u16, Vec<u8>)>,
}

impl CompactSkeleton {
    /// Numeric form of a skeleton whose classes all belong to the schema
    /// behind `table`.
    pub fn from_skeleton(table: &ClassTable, skeleton: &Skeleton) -> Result<Self> {
        let mut counts = vec![0u8; table.n_entities()];
        let mut local = BTreeMap::new();
        for (class, ids) in &skeleton.entities {
            let c = table
                .id(class)
                .filter(|&c| table.is_entity(c))
                .ok_or_else(|| RcmError::InvalidSkeleton(format!("unknown entity class `{class}`")))?;
            if ids.len() > u8::MAX as usize {
                return Err(RcmError::InvalidSkeleton(format!("too many instances of `{class}`")));
            }
            counts[c as usize] = ids.len() as u8;
            for (i, id) in ids.iter().enumerate() {
                local.insert(id.as_str(), (c, i as u8));
            }
        }
        let mut tuples = Vec::new();
        for inst in &skeleton.relationships {
            let c = table
                .id(&inst.class)
                .filter(|&c| !table.is_entity(c))
                .ok_or_else(|| RcmError::InvalidSkeleton(format!("unknown relationship class `{}`", inst.class)))?;
            let r = c as usize - table.n_entities();
            let slots = table.rel_slots(r);
            if slots.len() != inst.participants.len() {
                return Err(RcmError::InvalidSkeleton(format!("arity mismatch in {}", inst.id())));
            }
            let mut locals = Vec::new();
            for (p, &(e, _)) in inst.participants.iter().zip(slots) {
                match local.get(p.as_str()) {
                    Some(&(pc, l)) if pc == e => locals.push(l),
                    _ => return Err(RcmError::InvalidSkeleton(format!("bad participant `{p}` in {}", inst.id()))),
                }
            }
            tuples.push((r as u16, locals));
        }
        Ok(CompactSkeleton { counts, tuples })
    }

    pub fn to_skeleton(&self, table: &ClassTable) -> Skeleton {
        let id = |class: u32, local: u8| format!("{}_{}", table.name(class), local as u32 + 1);
        let entities = self
            .counts
            .iter()
            .enumerate()
            .map(|(c, &n)| (table.name(c as u32).to_string(), (0..n).map(|l| id(c as u32, l)).collect()))
            .collect();
        let relationships = self
            .tuples
            .iter()
            .map(|(r, locals)| {
                let slots = table.rel_slots(*r as usize);
                RelationshipInstance {
                    class: table.name((table.n_entities() + *r as usize) as u32).to_string(),
                    participants: slots.iter().zip(locals).map(|(&(e, _), &l)| id(e, l)).collect(),
                }
            })
            .collect();
        Skeleton { entities, relationships }
    }

    pub fn index(&self, table: &ClassTable) -> SkeletonIndex {
        SkeletonIndex::from_compact(table, self)
    }

    pub fn instance_count(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum::<usize>() + self.tuples.len()
    }
}

struct Candidate {
    rel: u16,
    locals: Vec<u8>,
    /// Global entity numbers of the distinct participants.
    members: Vec<usize>,
    /// Positions in the cardinality-one usage table this tuple occupies.
    one_keys: Vec<usize>,
}

/// Depth-first search over subsets of candidate relationship instances for
/// one vector of entity counts. Each candidate is first excluded, then
/// included.
struct SubsetSearch {
    counts: Vec<u8>,
    candidates: Vec<Candidate>,
    used: Vec<bool>,
    degree: Vec<u32>,
    remaining: Vec<u32>,
    min_degree_2: bool,
    stack: Vec<bool>,
    at_leaf: bool,
}

impl SubsetSearch {
    fn new(table: &ClassTable, counts: Vec<u8>, min_degree_2: bool) -> Option<Self> {
        let mut offset = Vec::with_capacity(counts.len());
        let mut total = 0usize;
        for &n in &counts {
            offset.push(total);
            total += n as usize;
        }
        let mut candidates = Vec::new();
        let mut one_base = 0usize;
        // static cap on each entity's achievable degree
        let mut cap = vec![0u32; total];
        for r in 0..table.n_relationships() {
            let slots = table.rel_slots(r);
            let dims: Vec<usize> = slots.iter().map(|&(e, _)| counts[e as usize] as usize).collect();
            let mut slot_base = Vec::with_capacity(slots.len());
            for (s, &(e, card)) in slots.iter().enumerate() {
                slot_base.push(one_base);
                if card == Cardinality::One {
                    one_base += dims[s];
                    for l in 0..dims[s] {
                        cap[offset[e as usize] + l] += 1;
                    }
                }
            }
            for t in cartesian(&dims) {
                let mut members: Vec<usize> = slots.iter().zip(&t).map(|(&(e, _), &l)| offset[e as usize] + l).collect();
                let n = members.len();
                members.sort_unstable();
                members.dedup();
                if members.len() != n {
                    continue;
                }
                let one_keys = slots
                    .iter()
                    .enumerate()
                    .filter(|(_, &(_, card))| card == Cardinality::One)
                    .map(|(s, _)| slot_base[s] + t[s])
                    .collect();
                for (s, &(e, card)) in slots.iter().enumerate() {
                    if card == Cardinality::Many {
                        cap[offset[e as usize] + t[s]] += 1;
                    }
                }
                candidates.push(Candidate {
                    rel: r as u16,
                    locals: t.iter().map(|&l| l as u8).collect(),
                    members,
                    one_keys,
                });
            }
        }
        let mut remaining = vec![0u32; total];
        for c in &candidates {
            for &m in &c.members {
                remaining[m] += 1;
            }
        }
        if min_degree_2 && (cap.iter().any(|&c| c < 2) || remaining.iter().any(|&r| r < 2)) {
            return None;
        }
        Some(SubsetSearch {
            counts,
            candidates,
            used: vec![false; one_base],
            degree: vec![0; total],
            remaining,
            min_degree_2,
            stack: Vec::new(),
            at_leaf: false,
        })
    }

    fn apply(&mut self, i: usize, include: bool) -> bool {
        let c = &self.candidates[i];
        if include {
            if c.one_keys.iter().any(|&k| self.used[k]) {
                return false;
            }
            for &k in &c.one_keys {
                self.used[k] = true;
            }
            for &m in &c.members {
                self.degree[m] += 1;
                self.remaining[m] -= 1;
            }
            true
        } else {
            for &m in &c.members {
                self.remaining[m] -= 1;
            }
            if self.min_degree_2 && c.members.iter().any(|&m| self.degree[m] + self.remaining[m] < 2) {
                for &m in &c.members {
                    self.remaining[m] += 1;
                }
                return false;
            }
            true
        }
    }

    fn undo(&mut self, i: usize, include: bool) {
        let c = &self.candidates[i];
        if include {
            for &k in &c.one_keys {
                self.used[k] = false;
            }
            for &m in &c.members {
                self.degree[m] -= 1;
            }
        }
        for &m in &c.members {
            self.remaining[m] += 1;
        }
    }

    fn backtrack(&mut self) -> bool {
        while let Some(included) = self.stack.pop() {
            let i = self.stack.len();
            self.undo(i, included);
            if !included && self.apply(i, true) {
                self.stack.push(true);
                return true;
            }
        }
        false
    }

    fn next_leaf(&mut self) -> bool {
        if self.at_leaf && !self.backtrack() {
            return false;
        }
        while self.stack.len() < self.candidates.len() {
            let i = self.stack.len();
            if self.apply(i, false) {
                self.stack.push(false);
            } else if self.apply(i, true) {
                self.stack.push(true);
            } else if !self.backtrack() {
                return false;
            }
        }
        self.at_leaf = true;
        true
    }

    fn current(&self) -> CompactSkeleton {
        let tuples = self
            .stack
            .iter()
            .enumerate()
            .filter(|(_, &inc)| inc)
            .map(|(i, _)| (self.candidates[i].rel, self.candidates[i].locals.clone()))
            .collect();
        CompactSkeleton { counts: self.counts.clone(), tuples }
    }
}

/// Streams skeletons with `1..=max` instances per entity class. Count
/// vectors are visited by total size, then lexicographically.
pub struct SkeletonEnumerator {
    table: ClassTable,
    min_degree_2: bool,
    dedup: bool,
    count_vectors: Vec<Vec<u8>>,
    next_vector: usize,
    search: Option<SubsetSearch>,
    seen: HashSet<Vec<u32>>,
}

impl SkeletonEnumerator {
    pub fn new(schema: &Schema, max_per_entity: usize) -> Self {
        let table = ClassTable::from_schema(schema);
        let max = max_per_entity.min(u8::MAX as usize) as u8;
        let mut count_vectors: Vec<Vec<u8>> = if max == 0 {
            Vec::new()
        } else {
            cartesian(&vec![max as usize; table.n_entities()])
                .into_iter()
                .map(|v| v.into_iter().map(|c| c as u8 + 1).collect())
                .collect()
        };
        count_vectors.sort_by_key(|v| (v.iter().map(|&c| c as u32).sum::<u32>(), v.clone()));
        SkeletonEnumerator {
            table,
            min_degree_2: false,
            dedup: true,
            count_vectors,
            next_vector: 0,
            search: None,
            seen: HashSet::new(),
        }
    }

    /// Keep only skeletons in which every entity instance has degree at
    /// least two.
    pub fn min_degree_2(mut self, on: bool) -> Self {
        self.min_degree_2 = on;
        self
    }

    /// Emit one representative per isomorphism class (default) or every
    /// labelled skeleton.
    pub fn dedup(mut self, on: bool) -> Self {
        self.dedup = on;
        self
    }

    pub fn table(&self) -> &ClassTable {
        &self.table
    }
}

impl Iterator for SkeletonEnumerator {
    type Item = CompactSkeleton;

    fn next(&mut self) -> Option<CompactSkeleton> {
        loop {
            let Some(search) = self.search.as_mut() else {
                let counts = self.count_vectors.get(self.next_vector)?.clone();
                self.next_vector += 1;
                self.search = SubsetSearch::new(&self.table, counts, self.min_degree_2);
                self.seen.clear();
                continue;
            };
            if !search.next_leaf() {
                self.search = None;
                continue;
            }
            if self.min_degree_2 && search.degree.iter().any(|&d| d < 2) {
                continue;
            }
            let sk = search.current();
            if self.dedup && !self.seen.insert(canonical_code_compact(&self.table, &sk)) {
                continue;
            }
            return Some(sk);
        }
    }
}
