//! Canonical labelling of skeletons, used to drop isomorphic duplicates.
//!
//! Entity instances are coloured by iterated refinement of their incidence
//! signatures. Colours only depend on structure, so the ordered cells they
//! induce are invariant; the code is the minimum over all orderings within
//! cells.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use super::index::ClassTable;
use super::{CompactSkeleton, Skeleton};
use crate::error::Result;
use crate::schema::Schema;

fn hash_of<T: Hash>(value: &T) -> u64 {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    h.finish()
}

/// A code equal for two skeletons iff they are equal up to renaming
/// instances within each entity class.
pub fn canonical_code(schema: &Schema, skeleton: &Skeleton) -> Result<Vec<u32>> {
    let table = ClassTable::from_schema(schema);
    let compact = CompactSkeleton::from_skeleton(&table, skeleton)?;
    Ok(canonical_code_compact(&table, &compact))
}

pub(crate) fn canonical_code_compact(table: &ClassTable, sk: &CompactSkeleton) -> Vec<u32> {
    let n_classes = sk.counts.len();
    let mut offset = Vec::with_capacity(n_classes);
    let mut class_of = Vec::new();
    for (c, &n) in sk.counts.iter().enumerate() {
        offset.push(class_of.len());
        class_of.extend(std::iter::repeat_n(c, n as usize));
    }
    let total = class_of.len();
    let global: Vec<Vec<usize>> = sk
        .tuples
        .iter()
        .map(|(r, locals)| {
            let slots = table.rel_slots(*r as usize);
            slots.iter().zip(locals).map(|(&(e, _), &l)| offset[e as usize] + l as usize).collect()
        })
        .collect();
    let mut incidence: Vec<Vec<(usize, usize)>> = vec![Vec::new(); total];
    for (t, members) in global.iter().enumerate() {
        for (slot, &g) in members.iter().enumerate() {
            incidence[g].push((t, slot));
        }
    }

    let mut color: Vec<u64> = class_of.iter().map(|&c| hash_of(&c)).collect();
    let mut distinct = count_distinct(&color);
    for _ in 0..total.max(1) {
        let next: Vec<u64> = (0..total)
            .map(|g| {
                let mut sig: Vec<(u16, usize, Vec<(usize, u64)>)> = incidence[g]
                    .iter()
                    .map(|&(t, slot)| {
                        let others = global[t]
                            .iter()
                            .enumerate()
                            .filter(|&(s, _)| s != slot)
                            .map(|(s, &o)| (s, color[o]))
                            .collect();
                        (sk.tuples[t].0, slot, others)
                    })
                    .collect();
                sig.sort_unstable();
                hash_of(&(color[g], sig))
            })
            .collect();
        let d = count_distinct(&next);
        color = next;
        if d == distinct {
            break;
        }
        distinct = d;
    }

    // Ordered cells per class; each ordering maps global instance -> new local.
    let mut cells_per_class: Vec<Vec<Vec<usize>>> = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let mut members: Vec<usize> = (offset[c]..offset[c] + sk.counts[c] as usize).collect();
        members.sort_by_key(|&g| color[g]);
        let mut cells: Vec<Vec<usize>> = Vec::new();
        for g in members {
            match cells.last_mut() {
                Some(cell) if color[cell[0]] == color[g] => cell.push(g),
                _ => cells.push(vec![g]),
            }
        }
        cells_per_class.push(cells);
    }
    let mut cells: Vec<Vec<usize>> = cells_per_class.into_iter().flatten().collect();
    for cell in &mut cells {
        cell.sort_unstable();
    }

    let mut relabel = vec![0u8; total];
    let mut best: Option<Vec<u32>> = None;
    let mut code = Vec::new();
    let mut rows: Vec<Vec<u32>> = Vec::with_capacity(global.len());
    loop {
        let mut next_local = vec![0u8; n_classes];
        for cell in &cells {
            for &g in cell {
                let c = class_of[g];
                relabel[g] = next_local[c];
                next_local[c] += 1;
            }
        }
        rows.clear();
        for (t, members) in global.iter().enumerate() {
            let mut row = Vec::with_capacity(members.len() + 1);
            row.push(sk.tuples[t].0 as u32);
            row.extend(members.iter().map(|&g| relabel[g] as u32));
            rows.push(row);
        }
        rows.sort_unstable();
        code.clear();
        code.extend(sk.counts.iter().map(|&c| c as u32));
        code.push(u32::MAX);
        for row in &rows {
            code.extend_from_slice(row);
        }
        if best.as_ref().is_none_or(|b| code < *b) {
            best = Some(code.clone());
        }
        if !next_arrangement(&mut cells) {
            break;
        }
    }
    best.unwrap_or_default()
}

fn count_distinct(colors: &[u64]) -> usize {
    let mut v = colors.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// Advances the cells like an odometer of lexicographic permutations.
fn next_arrangement(cells: &mut [Vec<usize>]) -> bool {
    for cell in cells.iter_mut().rev() {
        if next_permutation(cell) {
            return true;
        }
        // wrapped around to the sorted arrangement; carry
    }
    false
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::skeleton::RelationshipInstance;

    #[test]
    fn renaming_preserves_code() {
        let schema = fixtures::user_media_schema();
        let a = fixtures::alice_bob_skeleton();
        let mut b = a.clone();
        b.entities.insert("USER".into(), vec!["Bob".into(), "Alice".into()]);
        b.relationships.reverse();
        assert_eq!(canonical_code(&schema, &a).unwrap(), canonical_code(&schema, &b).unwrap());

        let mut c = a.clone();
        c.relationships.retain(|r| r.participants != ["Bob", "P1"]);
        c.relationships.push(RelationshipInstance {
            class: "REACTS".into(),
            participants: vec!["Bob".into(), "P2".into()],
        });
        // Bob now reacts to the post Alice also reacts to: still isomorphic
        assert_eq!(canonical_code(&schema, &a).unwrap(), canonical_code(&schema, &c).unwrap());

        let mut d = a.clone();
        d.relationships.retain(|r| r.participants != ["Alice", "P2"]);
        assert_ne!(canonical_code(&schema, &a).unwrap(), canonical_code(&schema, &d).unwrap());
    }

    #[test]
    fn permutation_odometer_visits_all() {
        let mut cells = vec![vec![0, 1, 2], vec![3, 4]];
        let mut n = 1;
        while next_arrangement(&mut cells) {
            n += 1;
        }
        assert_eq!(n, 12);
        assert_eq!(cells, vec![vec![0, 1, 2], vec![3, 4]]);
    }
}
