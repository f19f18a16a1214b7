//! Relational schemas: entity classes, relationship classes, attributes and
//! per-participant cardinalities.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{RcmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cardinality {
    /// Each entity instance fills this slot in at most one relationship instance.
    One,
    Many,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityClass {
    pub name: String,
    #[serde(default)]
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub entity: String,
    pub cardinality: Cardinality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationshipClass {
    pub name: String,
    pub participants: Vec<Participant>,
    #[serde(default)]
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ItemKind {
    Entity,
    Relationship,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default)]
    pub entities: Vec<EntityClass>,
    #[serde(default)]
    pub relationships: Vec<RelationshipClass>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    EmptyName,
    DuplicateName,
    DuplicateAttribute,
    UnknownEntity,
    TooFewParticipants,
    // skeleton-level codes
    UnknownClass,
    DuplicateInstance,
    UnknownInstance,
    ArityMismatch,
    DuplicateRelationshipInstance,
    CardinalityViolation,
    LowDegree,
    // model-level codes
    InvalidPath,
    UnknownAttribute,
    EffectMismatch,
    SelfLoop,
    DuplicateDependency,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::EmptyName => "EMPTY_NAME",
            ViolationCode::DuplicateName => "DUPLICATE_NAME",
            ViolationCode::DuplicateAttribute => "DUPLICATE_ATTRIBUTE",
            ViolationCode::UnknownEntity => "UNKNOWN_ENTITY",
            ViolationCode::TooFewParticipants => "TOO_FEW_PARTICIPANTS",
            ViolationCode::UnknownClass => "UNKNOWN_CLASS",
            ViolationCode::DuplicateInstance => "DUPLICATE_INSTANCE",
            ViolationCode::UnknownInstance => "UNKNOWN_INSTANCE",
            ViolationCode::ArityMismatch => "ARITY_MISMATCH",
            ViolationCode::DuplicateRelationshipInstance => "DUPLICATE_RELATIONSHIP_INSTANCE",
            ViolationCode::CardinalityViolation => "CARDINALITY_VIOLATION",
            ViolationCode::LowDegree => "LOW_DEGREE",
            ViolationCode::InvalidPath => "INVALID_PATH",
            ViolationCode::UnknownAttribute => "UNKNOWN_ATTRIBUTE",
            ViolationCode::EffectMismatch => "EFFECT_MISMATCH",
            ViolationCode::SelfLoop => "SELF_LOOP",
            ViolationCode::DuplicateDependency => "DUPLICATE_DEPENDENCY",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single broken invariant. Reports are sorted, so validation output does
/// not depend on declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

impl Violation {
    pub fn new(code: ViolationCode, message: impl Into<String>) -> Self {
        Violation {
            code,
            message: message.into(),
        }
    }
}

pub type ValidationReport = Vec<Violation>;

pub(crate) fn finish_report(mut report: ValidationReport) -> ValidationReport {
    report.sort();
    report.dedup();
    report
}

pub fn validate_schema(schema: &Schema) -> ValidationReport {
    let mut report = Vec::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let entity_names: BTreeSet<&str> = schema.entities.iter().map(|e| e.name.as_str()).collect();

    let names = schema
        .entities
        .iter()
        .map(|e| e.name.as_str())
        .chain(schema.relationships.iter().map(|r| r.name.as_str()));
    for name in names {
        if name.is_empty() {
            report.push(Violation::new(ViolationCode::EmptyName, "item class with empty name"));
        }
        *seen.entry(name).or_default() += 1;
    }
    for (name, count) in seen {
        if count > 1 && !name.is_empty() {
            report.push(Violation::new(
                ViolationCode::DuplicateName,
                format!("class name `{name}` declared {count} times"),
            ));
        }
    }

    let mut check_attributes = |owner: &str, attributes: &[String]| {
        let mut attrs = BTreeSet::new();
        for a in attributes {
            if a.is_empty() {
                report.push(Violation::new(
                    ViolationCode::EmptyName,
                    format!("class `{owner}` has an attribute with empty name"),
                ));
            }
            if !attrs.insert(a.as_str()) {
                report.push(Violation::new(
                    ViolationCode::DuplicateAttribute,
                    format!("attribute `{a}` repeated on class `{owner}`"),
                ));
            }
        }
    };
    for e in &schema.entities {
        check_attributes(&e.name, &e.attributes);
    }
    for r in &schema.relationships {
        check_attributes(&r.name, &r.attributes);
    }

    for r in &schema.relationships {
        if r.participants.len() < 2 {
            report.push(Violation::new(
                ViolationCode::TooFewParticipants,
                format!(
                    "relationship `{}` has {} participant(s); at least 2 required",
                    r.name,
                    r.participants.len()
                ),
            ));
        }
        for p in &r.participants {
            if !entity_names.contains(p.entity.as_str()) {
                report.push(Violation::new(
                    ViolationCode::UnknownEntity,
                    format!("relationship `{}` names unknown entity `{}`", r.name, p.entity),
                ));
            }
        }
    }
    finish_report(report)
}

impl Schema {
    pub fn from_json(text: &str) -> Result<Schema> {
        serde_json::from_str(text).map_err(|e| RcmError::Parse(e.to_string()))
    }

    /// Canonical form: keys sorted, two-space indentation, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        canonical_json(self)
    }

    pub fn entity(&self, name: &str) -> Option<&EntityClass> {
        self.entities.iter().find(|e| e.name == name)
    }

    pub fn relationship(&self, name: &str) -> Option<&RelationshipClass> {
        self.relationships.iter().find(|r| r.name == name)
    }

    pub fn kind_of(&self, name: &str) -> Option<ItemKind> {
        if self.entity(name).is_some() {
            Some(ItemKind::Entity)
        } else if self.relationship(name).is_some() {
            Some(ItemKind::Relationship)
        } else {
            None
        }
    }

    pub fn require_kind(&self, name: &str) -> Result<ItemKind> {
        self.kind_of(name)
            .ok_or_else(|| RcmError::UnknownName(name.to_string()))
    }

    pub fn attributes_of(&self, name: &str) -> Option<&[String]> {
        if let Some(e) = self.entity(name) {
            Some(&e.attributes)
        } else {
            self.relationship(name).map(|r| r.attributes.as_slice())
        }
    }

    pub fn has_attribute(&self, class: &str, attribute: &str) -> bool {
        self.attributes_of(class)
            .is_some_and(|attrs| attrs.iter().any(|a| a == attribute))
    }

    /// Number of participant slots of `relationship` filled by `entity`.
    pub fn slot_count(&self, relationship: &str, entity: &str) -> usize {
        self.relationship(relationship).map_or(0, |r| {
            r.participants.iter().filter(|p| p.entity == entity).count()
        })
    }

    /// `card(R, E)`: `Many` if any slot of `entity` in `relationship` is `Many`.
    pub fn card(&self, relationship: &str, entity: &str) -> Option<Cardinality> {
        let r = self.relationship(relationship)?;
        let mut slots = r.participants.iter().filter(|p| p.entity == entity).peekable();
        slots.peek()?;
        if slots.any(|p| p.cardinality == Cardinality::Many) {
            Some(Cardinality::Many)
        } else {
            Some(Cardinality::One)
        }
    }

    /// All item-class names, entities first, in declaration order.
    pub fn item_classes(&self) -> impl Iterator<Item = &str> {
        self.entities
            .iter()
            .map(|e| e.name.as_str())
            .chain(self.relationships.iter().map(|r| r.name.as_str()))
    }

    /// Classes adjacent to `name`, sorted.
    pub fn neighbors(&self, name: &str) -> Vec<&str> {
        let mut out: Vec<&str> = match self.kind_of(name) {
            Some(ItemKind::Entity) => self
                .relationships
                .iter()
                .filter(|r| r.participants.iter().any(|p| p.entity == name))
                .map(|r| r.name.as_str())
                .collect(),
            Some(ItemKind::Relationship) => self
                .relationship(name)
                .map(|r| r.participants.iter().map(|p| p.entity.as_str()).collect())
                .unwrap_or_default(),
            None => Vec::new(),
        };
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// True iff exactly one of `a`, `b` is a relationship class and the other
/// participates in it.
pub fn classes_adjacent(schema: &Schema, a: &str, b: &str) -> Result<bool> {
    let ka = schema.require_kind(a)?;
    let kb = schema.require_kind(b)?;
    Ok(match (ka, kb) {
        (ItemKind::Entity, ItemKind::Relationship) => schema.slot_count(b, a) > 0,
        (ItemKind::Relationship, ItemKind::Entity) => schema.slot_count(a, b) > 0,
        _ => false,
    })
}

pub(crate) fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json::Value keeps object keys in a BTreeMap, which sorts them.
    let v = serde_json::to_value(value).expect("serializable value");
    let mut s = serde_json::to_string_pretty(&v).expect("serializable value");
    s.push('\n');
    s
}
