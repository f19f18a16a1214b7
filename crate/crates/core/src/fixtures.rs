//! Built-in example models and skeletons.
//!
//! * `user-media-acyclic`: users react to posts created by media; a user's
//!   sentiment drives post engagement, which drives media preference.
//! * `user-media-cyclic`: the same model with engagement feeding back into
//!   the sentiment of reacting users.
//! * `alice-bob`: two users, two posts and one media instance.
//! * `lee-counterexample`: five entity classes joined by one binary and two
//!   ternary relationships, all one-to-one, on which abstract d-separation
//!   reports a connection that no ground graph exhibits.

use std::collections::BTreeMap;

use crate::paths::{RelationalDependency, RelationalModel, RelationalPath, RelationalVariable};
use crate::schema::{Cardinality, EntityClass, Participant, RelationshipClass, Schema};
use crate::skeleton::{RelationshipInstance, Skeleton};

pub const MODEL_NAMES: &[&str] = &["user-media-acyclic", "user-media-cyclic", "lee-counterexample"];
pub const SKELETON_NAMES: &[&str] = &["alice-bob"];

pub fn model(name: &str) -> Option<RelationalModel> {
    match name {
        "user-media-acyclic" => Some(user_media_acyclic()),
        "user-media-cyclic" => Some(user_media_cyclic()),
        "lee-counterexample" => Some(lee_counterexample()),
        _ => None,
    }
}

pub fn skeleton(name: &str) -> Option<Skeleton> {
    match name {
        "alice-bob" => Some(alice_bob_skeleton()),
        _ => None,
    }
}

fn entity(name: &str, attributes: &[&str]) -> EntityClass {
    EntityClass {
        name: name.into(),
        attributes: attributes.iter().map(|a| a.to_string()).collect(),
    }
}

fn relationship(name: &str, participants: &[(&str, Cardinality)]) -> RelationshipClass {
    RelationshipClass {
        name: name.into(),
        participants: participants
            .iter()
            .map(|(e, c)| Participant {
                entity: e.to_string(),
                cardinality: *c,
            })
            .collect(),
        attributes: vec![],
    }
}

fn dep(s: &str) -> RelationalDependency {
    s.parse().expect("fixture dependency parses")
}

pub fn user_media_schema() -> Schema {
    use Cardinality::*;
    Schema {
        entities: vec![
            entity("USER", &["Sentiment"]),
            entity("POST", &["Engagement"]),
            entity("MEDIA", &["Preference"]),
        ],
        relationships: vec![
            relationship("REACTS", &[("USER", Many), ("POST", Many)]),
            relationship("CREATES", &[("MEDIA", Many), ("POST", One)]),
        ],
    }
}

pub fn user_media_acyclic() -> RelationalModel {
    let mut m = RelationalModel::new(
        user_media_schema(),
        vec![
            dep("[POST, REACTS, USER].Sentiment -> [POST].Engagement"),
            dep("[MEDIA, CREATES, POST].Engagement -> [MEDIA].Preference"),
        ],
    );
    m.hop_threshold_hint = Some(6);
    m
}

pub fn user_media_cyclic() -> RelationalModel {
    let mut m = user_media_acyclic();
    m.dependencies
        .push(dep("[USER, REACTS, POST].Engagement -> [USER].Sentiment"));
    m
}

pub fn alice_bob_skeleton() -> Skeleton {
    let mut entities = BTreeMap::new();
    entities.insert("USER".to_string(), vec!["Alice".to_string(), "Bob".to_string()]);
    entities.insert("POST".to_string(), vec!["P1".to_string(), "P2".to_string()]);
    entities.insert("MEDIA".to_string(), vec!["M1".to_string()]);
    let rel = |class: &str, a: &str, b: &str| RelationshipInstance {
        class: class.into(),
        participants: vec![a.into(), b.into()],
    };
    Skeleton {
        entities,
        relationships: vec![
            rel("REACTS", "Alice", "P1"),
            rel("REACTS", "Bob", "P1"),
            rel("REACTS", "Alice", "P2"),
            rel("CREATES", "M1", "P1"),
            rel("CREATES", "M1", "P2"),
        ],
    }
}

pub fn lee_schema(cardinality: Cardinality) -> Schema {
    let c = cardinality;
    Schema {
        entities: vec![
            entity("E1", &[]),
            entity("E2", &["Y"]),
            entity("E3", &["X"]),
            entity("E4", &[]),
            entity("E5", &["Z"]),
        ],
        relationships: vec![
            relationship("R1", &[("E1", c), ("E2", c), ("E4", c)]),
            relationship("R2", &[("E2", c), ("E3", c)]),
            relationship("R3", &[("E3", c), ("E4", c), ("E5", c)]),
        ],
    }
}

fn lee_model_on(schema: Schema) -> RelationalModel {
    let mut m = RelationalModel::new(
        schema,
        vec![
            dep("[E2, R2, E3, R3, E4, R1, E2, R2, E3].X -> [E2].Y"),
            dep("[E2, R2, E3, R3, E5].Z -> [E2].Y"),
        ],
    );
    m.hop_threshold_hint = Some(6);
    m
}

pub fn lee_counterexample() -> RelationalModel {
    lee_model_on(lee_schema(Cardinality::One))
}

/// The counterexample model with every cardinality relaxed to many.
pub fn lee_counterexample_many() -> RelationalModel {
    lee_model_on(lee_schema(Cardinality::Many))
}

/// The four variables `P.X`, `Q.Y`, `S.Z`, `S'.Z` from perspective `E1`.
pub struct LeeVariables {
    pub p_x: RelationalVariable,
    pub q_y: RelationalVariable,
    pub s_z: RelationalVariable,
    pub s_prime_z: RelationalVariable,
}

pub fn lee_variables() -> LeeVariables {
    let v = |items: &[&str], attr: &str| RelationalVariable::new(RelationalPath::new(items.iter().copied()), attr);
    LeeVariables {
        p_x: v(&["E1", "R1", "E2", "R2", "E3"], "X"),
        q_y: v(&["E1", "R1", "E4", "R3", "E3", "R2", "E2"], "Y"),
        s_z: v(&["E1", "R1", "E4", "R3", "E5"], "Z"),
        s_prime_z: v(&["E1", "R1", "E2", "R2", "E3", "R3", "E5"], "Z"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::is_valid_path;

    #[test]
    fn fixtures_are_valid() {
        for name in MODEL_NAMES {
            assert!(model(name).unwrap().validate().is_empty(), "{name}");
        }
        assert!(lee_counterexample_many().validate().is_empty());
    }

    #[test]
    fn lee_paths_are_valid() {
        let s = lee_schema(Cardinality::One);
        let v = lee_variables();
        for var in [&v.p_x, &v.q_y, &v.s_z, &v.s_prime_z] {
            assert!(is_valid_path(&s, var.path.items()).unwrap().is_valid(), "{var}");
            assert!(s.has_attribute(var.path.last(), &var.attribute));
        }
    }
}
