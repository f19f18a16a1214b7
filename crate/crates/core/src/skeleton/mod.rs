//! Relational skeletons: concrete instantiations of a schema.

mod canon;
mod enumerate;
mod index;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RcmError, Result};
use crate::paths::RelationalPath;
use crate::schema::{
    canonical_json, finish_report, Cardinality, Schema, ValidationReport, Violation, ViolationCode,
};

pub use canon::canonical_code;
pub use enumerate::{CompactSkeleton, SkeletonEnumerator};
pub use index::{ClassTable, SkeletonIndex, Traversal};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationshipInstance {
    pub class: String,
    pub participants: Vec<String>,
}

impl RelationshipInstance {
    /// Relationship instances have no declared id; they are named
    /// `CLASS(p1,p2,...)`.
    pub fn id(&self) -> String {
        format!("{}({})", self.class, self.participants.join(","))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skeleton {
    #[serde(default)]
    pub entities: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub relationships: Vec<RelationshipInstance>,
}

impl Skeleton {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| RcmError::Parse(e.to_string()))
    }

    pub fn to_canonical_json(&self) -> String {
        canonical_json(self)
    }

    pub fn instance_count(&self) -> usize {
        self.entities.values().map(Vec::len).sum::<usize>() + self.relationships.len()
    }

    /// Entity class of an entity instance id.
    pub fn class_of(&self, instance: &str) -> Option<&str> {
        self.entities
            .iter()
            .find(|(_, ids)| ids.iter().any(|i| i == instance))
            .map(|(c, _)| c.as_str())
    }

    /// Number of relationship instances `instance` participates in.
    pub fn degree(&self, instance: &str) -> usize {
        self.relationships
            .iter()
            .filter(|r| r.participants.iter().any(|p| p == instance))
            .count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminalSet {
    pub instances: BTreeSet<String>,
}

/// Checks every skeleton invariant against `schema`. With
/// `require_min_degree_2`, every entity instance must also participate in at
/// least two relationship instances.
pub fn validate_skeleton(schema: &Schema, skeleton: &Skeleton, require_min_degree_2: bool) -> ValidationReport {
    let mut report = Vec::new();
    let mut owner: HashMap<&str, &str> = HashMap::new();
    for (class, ids) in &skeleton.entities {
        if schema.entity(class).is_none() {
            report.push(Violation::new(
                ViolationCode::UnknownClass,
                format!("skeleton lists instances of unknown entity class `{class}`"),
            ));
        }
        for id in ids {
            if let Some(prev) = owner.insert(id, class) {
                report.push(Violation::new(
                    ViolationCode::DuplicateInstance,
                    format!("instance id `{id}` used by `{prev}` and `{class}`"),
                ));
            }
        }
    }

    let mut seen = HashSet::new();
    let mut one_slots: HashMap<(&str, usize, &str), usize> = HashMap::new();
    for inst in &skeleton.relationships {
        let Some(rc) = schema.relationship(&inst.class) else {
            report.push(Violation::new(
                ViolationCode::UnknownClass,
                format!("relationship instance {} has unknown class", inst.id()),
            ));
            continue;
        };
        if !seen.insert(inst) {
            report.push(Violation::new(
                ViolationCode::DuplicateRelationshipInstance,
                format!("relationship instance {} listed twice", inst.id()),
            ));
            continue;
        }
        if rc.participants.len() != inst.participants.len() {
            report.push(Violation::new(
                ViolationCode::ArityMismatch,
                format!(
                    "{} has {} participants; `{}` expects {}",
                    inst.id(),
                    inst.participants.len(),
                    rc.name,
                    rc.participants.len()
                ),
            ));
            continue;
        }
        for (slot, (p, id)) in rc.participants.iter().zip(&inst.participants).enumerate() {
            if owner.get(id.as_str()) != Some(&p.entity.as_str()) {
                report.push(Violation::new(
                    ViolationCode::UnknownInstance,
                    format!("{}: `{id}` is not an instance of `{}`", inst.id(), p.entity),
                ));
            } else if p.cardinality == Cardinality::One {
                *one_slots.entry((rc.name.as_str(), slot, id.as_str())).or_default() += 1;
            }
        }
    }
    for ((rel, slot, id), count) in one_slots {
        if count > 1 {
            report.push(Violation::new(
                ViolationCode::CardinalityViolation,
                format!("`{id}` fills slot {slot} of `{rel}` {count} times; cardinality is one"),
            ));
        }
    }

    if require_min_degree_2 {
        let mut degree: HashMap<&str, usize> = HashMap::new();
        for inst in &skeleton.relationships {
            let distinct: BTreeSet<&str> = inst.participants.iter().map(String::as_str).collect();
            for id in distinct {
                *degree.entry(id).or_default() += 1;
            }
        }
        for ids in skeleton.entities.values() {
            for id in ids {
                let d = degree.get(id.as_str()).copied().unwrap_or(0);
                if d < 2 {
                    report.push(Violation::new(
                        ViolationCode::LowDegree,
                        format!("`{id}` has degree {d}; minimum degree 2 required"),
                    ));
                }
            }
        }
    }
    finish_report(report)
}

/// Instances reached from `base` along `path`, never revisiting an instance
/// reached at an earlier step (bridge burning).
pub fn terminal_set(skeleton: &Skeleton, path: &RelationalPath, base: &str) -> Result<TerminalSet> {
    let table = ClassTable::from_skeleton(skeleton);
    let index = SkeletonIndex::from_skeleton(&table, skeleton)?;
    let base_item = index
        .item_by_name(&table, base)
        .ok_or_else(|| RcmError::UnknownInstance(base.to_string()))?;
    let first = table.id(path.first());
    if first != Some(index.class_of(base_item)) {
        return Err(RcmError::Precondition(format!(
            "base `{base}` is not an instance of `{}`",
            path.first()
        )));
    }
    let Some(classes) = path.items().iter().map(|c| table.id(c)).collect::<Option<Vec<_>>>() else {
        // a class with no instances: nothing is reachable past it
        return Ok(TerminalSet::default());
    };
    let items = index.terminal_set(&classes, base_item);
    Ok(TerminalSet {
        instances: items.into_iter().map(|i| index.name(&table, i)).collect(),
    })
}

/// Every skeleton with between one and `max_per_entity` instances per entity
/// class, up to instance renaming, in deterministic order.
pub fn enumerate_skeletons(
    schema: &Schema,
    max_per_entity: usize,
    require_min_degree_2: bool,
) -> impl Iterator<Item = Skeleton> + '_ {
    let table = ClassTable::from_schema(schema);
    SkeletonEnumerator::new(schema, max_per_entity)
        .min_degree_2(require_min_degree_2)
        .map(move |c| c.to_skeleton(&table))
}

/// A seeded random skeleton. Each candidate relationship instance is drawn
/// with probability `density`, skipping any that would break a cardinality
/// constraint; candidates are visited in shuffled order.
pub fn random_skeleton(
    schema: &Schema,
    sizes: &BTreeMap<String, usize>,
    density: f64,
    seed: u64,
) -> Result<Skeleton> {
    if !(0.0..=1.0).contains(&density) {
        return Err(RcmError::Precondition(format!("density {density} is outside [0, 1]")));
    }
    for class in sizes.keys() {
        if schema.entity(class).is_none() {
            return Err(RcmError::InfeasibleSizes(format!("`{class}` is not an entity class")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entities = BTreeMap::new();
    for e in &schema.entities {
        let n = sizes.get(&e.name).copied().unwrap_or(0);
        let ids = (1..=n).map(|i| format!("{}_{i}", e.name)).collect();
        entities.insert(e.name.clone(), ids);
    }

    let mut relationships = Vec::new();
    for rc in &schema.relationships {
        let slot_ids: Vec<&Vec<String>> = rc.participants.iter().map(|p| &entities[&p.entity]).collect();
        let mut candidates = cartesian(&slot_ids.iter().map(|v| v.len()).collect::<Vec<_>>());
        candidates.retain(|t| {
            let names: Vec<&str> = t.iter().enumerate().map(|(s, &i)| slot_ids[s][i].as_str()).collect();
            let distinct: BTreeSet<&str> = names.iter().copied().collect();
            distinct.len() == names.len()
        });
        candidates.shuffle(&mut rng);
        let mut used: HashSet<(usize, usize)> = HashSet::new();
        let mut chosen = Vec::new();
        for t in candidates {
            let keep = rng.random::<f64>() < density;
            let free = t.iter().enumerate().all(|(s, &i)| {
                rc.participants[s].cardinality == Cardinality::Many || !used.contains(&(s, i))
            });
            if keep && free {
                for (s, &i) in t.iter().enumerate() {
                    if rc.participants[s].cardinality == Cardinality::One {
                        used.insert((s, i));
                    }
                }
                chosen.push(t);
            }
        }
        chosen.sort();
        relationships.extend(chosen.into_iter().map(|t| RelationshipInstance {
            class: rc.name.clone(),
            participants: t.iter().enumerate().map(|(s, &i)| slot_ids[s][i].clone()).collect(),
        }));
    }
    Ok(Skeleton { entities, relationships })
}

/// All tuples `t` with `t[i] < dims[i]`, in lexicographic order.
pub(crate) fn cartesian(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &d in dims {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..d).map(move |i| {
                    let mut t = prefix.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn p(items: &[&str]) -> RelationalPath {
        RelationalPath::new(items.iter().copied())
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn alice_bob_validation() {
        let schema = fixtures::user_media_schema();
        let sk = fixtures::alice_bob_skeleton();
        assert!(validate_skeleton(&schema, &sk, false).is_empty());
        let strict = validate_skeleton(&schema, &sk, true);
        assert!(strict.iter().all(|v| v.code == ViolationCode::LowDegree));
        assert!(strict.iter().any(|v| v.message.contains("`Bob` has degree 1")));
    }

    #[test]
    fn cardinality_one_is_enforced() {
        let schema = fixtures::user_media_schema();
        let mut sk = fixtures::alice_bob_skeleton();
        sk.entities.get_mut("MEDIA").unwrap().push("M2".into());
        sk.relationships.push(RelationshipInstance {
            class: "CREATES".into(),
            participants: vec!["M2".into(), "P1".into()],
        });
        let report = validate_skeleton(&schema, &sk, false);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].code, ViolationCode::CardinalityViolation);
    }

    #[test]
    fn structural_violations() {
        let schema = fixtures::user_media_schema();
        let mut sk = fixtures::alice_bob_skeleton();
        sk.relationships.push(sk.relationships[0].clone());
        sk.relationships.push(RelationshipInstance {
            class: "REACTS".into(),
            participants: vec!["P1".into(), "Alice".into()],
        });
        sk.relationships.push(RelationshipInstance { class: "LIKES".into(), participants: vec![] });
        sk.entities.insert("GHOST".into(), vec!["Alice".into()]);
        let codes: BTreeSet<_> = validate_skeleton(&schema, &sk, false).into_iter().map(|v| v.code).collect();
        let expected: BTreeSet<_> = [
            ViolationCode::UnknownClass,
            ViolationCode::DuplicateInstance,
            ViolationCode::DuplicateRelationshipInstance,
            ViolationCode::UnknownInstance,
        ]
        .into_iter()
        .collect();
        assert_eq!(codes, expected);
    }

    #[test]
    fn terminal_set_examples() {
        let sk = fixtures::alice_bob_skeleton();
        let t = terminal_set(&sk, &p(&["USER", "REACTS", "POST"]), "Alice").unwrap();
        assert_eq!(t.instances, set(&["P1", "P2"]));
        let t = terminal_set(&sk, &p(&["USER"]), "Bob").unwrap();
        assert_eq!(t.instances, set(&["Bob"]));
        let t = terminal_set(&sk, &p(&["USER", "REACTS", "POST", "REACTS", "USER"]), "Alice").unwrap();
        assert_eq!(t.instances, set(&["Bob"]));
        let t = terminal_set(&sk, &p(&["USER", "REACTS", "POST", "CREATES", "MEDIA", "CREATES", "POST"]), "Bob")
            .unwrap();
        assert_eq!(t.instances, set(&["P2"]));
        let t = terminal_set(&sk, &p(&["USER", "REACTS"]), "Bob").unwrap();
        assert_eq!(t.instances, set(&["REACTS(Bob,P1)"]));
        assert!(matches!(
            terminal_set(&sk, &p(&["POST", "REACTS", "USER"]), "Alice"),
            Err(RcmError::Precondition(_))
        ));
        assert!(matches!(
            terminal_set(&sk, &p(&["USER"]), "Carol"),
            Err(RcmError::UnknownInstance(_))
        ));
    }

    #[test]
    fn burning_covers_all_earlier_layers() {
        // e1 - r1 - e2 - r2 - e3 - r3 - e4 - r1 closes a loop back to e2.
        let model = fixtures::lee_counterexample();
        let mut entities = BTreeMap::new();
        for c in ["E1", "E2", "E3", "E4", "E5"] {
            entities.insert(c.to_string(), vec![c.to_lowercase()]);
        }
        let rel = |c: &str, ps: &[&str]| RelationshipInstance {
            class: c.into(),
            participants: ps.iter().map(|s| s.to_string()).collect(),
        };
        let sk = Skeleton {
            entities,
            relationships: vec![
                rel("R1", &["e1", "e2", "e4"]),
                rel("R2", &["e2", "e3"]),
                rel("R3", &["e3", "e4", "e5"]),
            ],
        };
        assert!(validate_skeleton(&model.schema, &sk, false).is_empty());
        let d1 = &model.dependencies[0].cause.path;
        assert!(terminal_set(&sk, d1, "e2").unwrap().instances.is_empty());
    }

    #[test]
    fn enumeration_examples() {
        let schema = fixtures::user_media_schema();
        let one: Vec<Skeleton> = enumerate_skeletons(&schema, 1, false).collect();
        assert!(one.iter().any(|s| s.relationships.len() == 2 && s.instance_count() == 5));
        // 1 user, 1 post, 1 media; REACTS present or not, CREATES present or not
        assert_eq!(one.len(), 4);

        let fig = fixtures::alice_bob_skeleton();
        let target = canonical_code(&schema, &fig).unwrap();
        let found = enumerate_skeletons(&schema, 2, false)
            .any(|s| canonical_code(&schema, &s).unwrap() == target);
        assert!(found);
    }

    #[test]
    fn min_degree_filter_on_one_to_one_is_empty() {
        use crate::schema::{EntityClass, Participant, RelationshipClass};
        let schema = Schema {
            entities: vec![
                EntityClass { name: "A".into(), attributes: vec![] },
                EntityClass { name: "B".into(), attributes: vec![] },
            ],
            relationships: vec![RelationshipClass {
                name: "R".into(),
                participants: vec![
                    Participant { entity: "A".into(), cardinality: Cardinality::One },
                    Participant { entity: "B".into(), cardinality: Cardinality::One },
                ],
                attributes: vec![],
            }],
        };
        assert_eq!(enumerate_skeletons(&schema, 1, true).count(), 0);
        assert_eq!(enumerate_skeletons(&schema, 3, true).count(), 0);
        assert!(enumerate_skeletons(&schema, 1, false).count() > 0);
    }

    #[test]
    fn enumeration_is_deduplicated_and_valid() {
        let schema = fixtures::user_media_schema();
        let all: Vec<Skeleton> = enumerate_skeletons(&schema, 2, false).collect();
        let codes: HashSet<Vec<u32>> = all.iter().map(|s| canonical_code(&schema, s).unwrap()).collect();
        assert_eq!(codes.len(), all.len());
        for s in &all {
            assert!(validate_skeleton(&schema, s, false).is_empty());
        }
    }

    #[test]
    fn random_skeleton_contract() {
        let schema = fixtures::user_media_schema();
        let sizes: BTreeMap<String, usize> =
            [("USER", 3), ("POST", 3), ("MEDIA", 1)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let a = random_skeleton(&schema, &sizes, 0.5, 7).unwrap();
        let b = random_skeleton(&schema, &sizes, 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert!(validate_skeleton(&schema, &a, false).is_empty());

        let empty = random_skeleton(&schema, &sizes, 0.0, 7).unwrap();
        assert!(empty.relationships.is_empty());

        let full = random_skeleton(&schema, &sizes, 1.0, 7).unwrap();
        assert!(validate_skeleton(&schema, &full, false).is_empty());
        // every user reacts to every post; each post has its single creator
        assert_eq!(full.relationships.len(), 9 + 3);

        let mut bad = sizes.clone();
        bad.insert("GHOST".into(), 1);
        assert!(matches!(random_skeleton(&schema, &bad, 0.5, 1), Err(RcmError::InfeasibleSizes(_))));
        assert!(matches!(random_skeleton(&schema, &sizes, 1.5, 1), Err(RcmError::Precondition(_))));
    }

    #[test]
    fn json_shape() {
        let sk = fixtures::alice_bob_skeleton();
        let text = sk.to_canonical_json();
        assert!(text.contains("\"class\": \"REACTS\""));
        assert_eq!(Skeleton::from_json(&text).unwrap(), sk);
    }
}
