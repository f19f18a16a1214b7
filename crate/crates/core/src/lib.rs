//! Relational causal models with feedback loops: schemas, relational paths,
//! skeletons, ground graphs, d- and sigma-separation, and abstract ground
//! graphs that answer separation queries at the class level.

pub mod agg;
pub mod error;
pub mod fixtures;
pub mod groundgraph;
pub mod oracle;
pub mod paths;
pub mod schema;
pub mod separation;
pub mod skeleton;

pub use agg::{
    augment, build_agg, build_agg_with, intersectable, relational_separated, AggMode, AggNode, AggNodeKind, AggOptions,
    AugmentedSet, SigmaAgg,
};
pub use error::{RcmError, Result};
pub use groundgraph::{ground, AttributeNode, GroundGraph};
pub use paths::{
    detect_model_cycles, enumerate_paths, extend, is_valid_path, EffectAttribute, PathValidity,
    RelationalDependency, RelationalModel, RelationalPath, RelationalVariable,
};
pub use schema::{
    classes_adjacent, validate_schema, Cardinality, EntityClass, ItemKind, Participant, RelationshipClass,
    Schema, ValidationReport, Violation, ViolationCode,
};
pub use skeleton::{
    enumerate_skeletons, random_skeleton, terminal_set, validate_skeleton, RelationshipInstance, Skeleton,
    TerminalSet,
};
pub use separation::{
    ancestors, blocked_status_search, d_separated, scc, sigma_separated, DiGraph, Mode, SccIndex,
    SeparationQuery, SeparationResult, Walk,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/skeletons.md")]
    mod skeletons {}
    #[doc = include_str!("../../../book/src/ground.md")]
    mod ground {}
    #[doc = include_str!("../../../book/src/separation.md")]
    mod separation {}
    #[doc = include_str!("../../../book/src/agg.md")]
    mod agg {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
