use std::collections::{BTreeSet, HashMap};

use super::{CompactSkeleton, Skeleton};
use crate::error::{RcmError, Result};
use crate::schema::{Cardinality, Schema};

/// Dense numbering of item classes: entity classes first, then relationship
/// classes.
#[derive(Debug, Clone)]
pub struct ClassTable {
    names: Vec<String>,
    n_entities: usize,
    rel_slots: Vec<Vec<(u32, Cardinality)>>,
    lookup: HashMap<String, u32>,
}

impl ClassTable {
    pub fn from_schema(schema: &Schema) -> Self {
        let mut names: Vec<String> = schema.entities.iter().map(|e| e.name.clone()).collect();
        let n_entities = names.len();
        names.extend(schema.relationships.iter().map(|r| r.name.clone()));
        let lookup: HashMap<String, u32> = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        let rel_slots = schema
            .relationships
            .iter()
            .map(|r| {
                r.participants
                    .iter()
                    .map(|p| (lookup.get(&p.entity).copied().unwrap_or(u32::MAX), p.cardinality))
                    .collect()
            })
            .collect();
        ClassTable { names, n_entities, rel_slots, lookup }
    }

    /// Classes as they appear in a skeleton alone; slot metadata is left
    /// empty.
    pub fn from_skeleton(skeleton: &Skeleton) -> Self {
        let mut names: Vec<String> = skeleton.entities.keys().cloned().collect();
        let n_entities = names.len();
        let rels: BTreeSet<&String> = skeleton.relationships.iter().map(|r| &r.class).collect();
        names.extend(rels.into_iter().cloned());
        let lookup = names.iter().enumerate().map(|(i, n)| (n.clone(), i as u32)).collect();
        let rel_slots = vec![Vec::new(); names.len() - n_entities];
        ClassTable { names, n_entities, rel_slots, lookup }
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn is_entity(&self, id: u32) -> bool {
        (id as usize) < self.n_entities
    }

    /// Slots of the `r`-th relationship class (class id `n_entities + r`).
    pub fn rel_slots(&self, r: usize) -> &[(u32, Cardinality)] {
        &self.rel_slots[r]
    }

    pub fn n_relationships(&self) -> usize {
        self.names.len() - self.n_entities
    }
}

/// A skeleton with numbered items and adjacency lists. Entity items come
/// first, grouped by class.
#[derive(Debug, Clone)]
pub struct SkeletonIndex {
    item_class: Vec<u32>,
    item_local: Vec<u32>,
    adj: Vec<Vec<u32>>,
    class_items: Vec<Vec<u32>>,
    names: Option<Vec<String>>,
    lookup: HashMap<String, u32>,
}

/// Reusable marks for [`SkeletonIndex::terminal_set_into`].
#[derive(Debug, Default)]
pub struct Traversal {
    stamp: Vec<u32>,
    epoch: u32,
    layer: Vec<u32>,
    next: Vec<u32>,
}

impl Traversal {
    fn reset(&mut self, n: usize) {
        if self.stamp.len() < n {
            self.stamp.resize(n, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }
}

impl SkeletonIndex {
    fn empty(table: &ClassTable) -> Self {
        SkeletonIndex {
            item_class: Vec::new(),
            item_local: Vec::new(),
            adj: Vec::new(),
            class_items: vec![Vec::new(); table.len()],
            names: None,
            lookup: HashMap::new(),
        }
    }

    fn push_item(&mut self, class: u32) -> u32 {
        let id = self.item_class.len() as u32;
        self.item_local.push(self.class_items[class as usize].len() as u32);
        self.item_class.push(class);
        self.class_items[class as usize].push(id);
        self.adj.push(Vec::new());
        id
    }

    fn link(&mut self, rel: u32, participants: &[u32]) {
        for &p in participants {
            self.adj[rel as usize].push(p);
            if self.adj[p as usize].last() != Some(&rel) {
                self.adj[p as usize].push(rel);
            }
        }
    }

    pub fn from_skeleton(table: &ClassTable, skeleton: &Skeleton) -> Result<Self> {
        let mut index = Self::empty(table);
        let mut names = Vec::new();
        for (class, ids) in &skeleton.entities {
            let c = table
                .id(class)
                .filter(|&c| table.is_entity(c))
                .ok_or_else(|| RcmError::InvalidSkeleton(format!("unknown entity class `{class}`")))?;
            for id in ids {
                let item = index.push_item(c);
                if index.lookup.insert(id.clone(), item).is_some() {
                    return Err(RcmError::InvalidSkeleton(format!("duplicate instance id `{id}`")));
                }
                names.push(id.clone());
            }
        }
        for inst in &skeleton.relationships {
            let c = table
                .id(&inst.class)
                .filter(|&c| !table.is_entity(c))
                .ok_or_else(|| RcmError::InvalidSkeleton(format!("unknown relationship class `{}`", inst.class)))?;
            let parts = inst
                .participants
                .iter()
                .map(|p| {
                    index
                        .lookup
                        .get(p)
                        .copied()
                        .ok_or_else(|| RcmError::InvalidSkeleton(format!("unknown participant `{p}`")))
                })
                .collect::<Result<Vec<u32>>>()?;
            let item = index.push_item(c);
            let name = inst.id();
            if index.lookup.insert(name.clone(), item).is_some() {
                return Err(RcmError::InvalidSkeleton(format!("duplicate relationship instance {name}")));
            }
            names.push(name);
            index.link(item, &parts);
        }
        index.names = Some(names);
        Ok(index)
    }

    pub fn from_compact(table: &ClassTable, c: &CompactSkeleton) -> Self {
        let mut index = Self::empty(table);
        let mut offset = Vec::with_capacity(c.counts.len());
        for (class, &n) in c.counts.iter().enumerate() {
            offset.push(index.item_class.len() as u32);
            for _ in 0..n {
                index.push_item(class as u32);
            }
        }
        let mut parts = Vec::new();
        for (r, locals) in &c.tuples {
            let slots = table.rel_slots(*r as usize);
            parts.clear();
            parts.extend(slots.iter().zip(locals).map(|(&(e, _), &l)| offset[e as usize] + l as u32));
            let item = index.push_item((table.n_entities() + *r as usize) as u32);
            index.link(item, &parts);
        }
        index
    }

    pub fn len(&self) -> usize {
        self.item_class.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_class.is_empty()
    }

    pub fn class_of(&self, item: u32) -> u32 {
        self.item_class[item as usize]
    }

    pub fn items_of_class(&self, class: u32) -> &[u32] {
        self.class_items.get(class as usize).map_or(&[], Vec::as_slice)
    }

    /// Neighbours of an item: participants of a relationship instance in slot
    /// order, or the relationship instances an entity takes part in.
    pub fn adj(&self, item: u32) -> &[u32] {
        &self.adj[item as usize]
    }

    pub fn item_by_name(&self, table: &ClassTable, name: &str) -> Option<u32> {
        match &self.names {
            Some(_) => self.lookup.get(name).copied(),
            None => (0..self.len() as u32).find(|&i| self.name(table, i) == name),
        }
    }

    /// Instance id. Items of an enumerated skeleton are named `CLASS_k`.
    pub fn name(&self, table: &ClassTable, item: u32) -> String {
        if let Some(names) = &self.names {
            return names[item as usize].clone();
        }
        let class = self.class_of(item);
        if table.is_entity(class) {
            format!("{}_{}", table.name(class), self.item_local[item as usize] + 1)
        } else {
            let parts: Vec<String> = self.adj(item).iter().map(|&p| self.name(table, p)).collect();
            format!("{}({})", table.name(class), parts.join(","))
        }
    }

    /// Terminal set of `path` (class ids) from `base`, sorted.
    pub fn terminal_set(&self, path: &[u32], base: u32) -> Vec<u32> {
        let mut t = Traversal::default();
        let mut out = Vec::new();
        self.terminal_set_into(path, base, &mut t, &mut out);
        out
    }

    /// Bridge-burning traversal: an instance reached at any earlier step is
    /// never entered again.
    pub fn terminal_set_into(&self, path: &[u32], base: u32, t: &mut Traversal, out: &mut Vec<u32>) {
        out.clear();
        if path.first() != Some(&self.class_of(base)) {
            return;
        }
        t.reset(self.len());
        let epoch = t.epoch;
        t.stamp[base as usize] = epoch;
        t.layer.clear();
        t.layer.push(base);
        for &class in &path[1..] {
            t.next.clear();
            for &i in &t.layer {
                for &j in &self.adj[i as usize] {
                    if self.item_class[j as usize] == class && t.stamp[j as usize] != epoch {
                        t.stamp[j as usize] = epoch;
                        t.next.push(j);
                    }
                }
            }
            std::mem::swap(&mut t.layer, &mut t.next);
            if t.layer.is_empty() {
                return;
            }
        }
        out.extend_from_slice(&t.layer);
        out.sort_unstable();
    }
}
