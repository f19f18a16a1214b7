//! AGG construction checked against ground graphs of enumerated skeletons.

use std::collections::BTreeSet;

use rcm_core::oracle::{
    audit_agg_edges, check_lemma1, random_model, verify_abstraction, Lemma1Options, VerifyOptions,
};
use rcm_core::skeleton::SkeletonEnumerator;
use rcm_core::*;

fn rv(s: &str) -> RelationalVariable {
    s.parse().unwrap()
}

fn set(items: &[&str]) -> BTreeSet<RelationalVariable> {
    items.iter().map(|s| rv(s)).collect()
}

#[test]
fn edges_match_ground_graphs() {
    for model in [fixtures::user_media_acyclic(), fixtures::user_media_cyclic()] {
        for perspective in ["USER", "POST", "MEDIA"] {
            let agg = build_agg(&model, perspective, 6, AggMode::Sigma).unwrap();
            let audit = audit_agg_edges(&model, &agg, 3, true).unwrap();
            assert!(audit.unrealized_edges.is_empty(), "{perspective}: {:?}", audit.unrealized_edges);
            assert!(
                audit.uncovered_ground_edges.is_empty(),
                "{perspective}: {:?}",
                audit.uncovered_ground_edges.keys()
            );
        }
    }
}

#[test]
fn modes_agree_on_acyclic_models() {
    let model = fixtures::user_media_acyclic();
    let a = build_agg(&model, "USER", 6, AggMode::Acyclic).unwrap();
    let s = build_agg(&model, "USER", 6, AggMode::Sigma).unwrap();
    assert_eq!(a.graph(), s.graph());
    assert_eq!(a.nodes(), s.nodes());
    let rvs: Vec<_> = a.relational_variables().cloned().collect();
    for x in &rvs {
        for y in &rvs {
            if x >= y {
                continue;
            }
            for z in rvs.iter().filter(|z| *z != x && *z != y) {
                let one = |v: &RelationalVariable| [v.clone()].into_iter().collect::<BTreeSet<_>>();
                let d = relational_separated(&a, &one(x), &one(y), &one(z), Mode::D).unwrap();
                let sigma = relational_separated(&s, &one(x), &one(y), &one(z), Mode::Sigma).unwrap();
                assert_eq!(d.separated, sigma.separated, "{x} vs {y} given {z}");
            }
        }
    }
}

#[test]
fn acyclic_model_verifies_in_mode_d() {
    let model = fixtures::user_media_acyclic();
    let report = verify_abstraction(&model, "user-media-acyclic", "USER", 6, Mode::D, &VerifyOptions::default()).unwrap();
    assert!(report.complete);
    assert_eq!(report.queries, 165);
    assert!(report.soundness_disagreements.is_empty(), "{}", report.to_table());
}

#[test]
fn verification_is_deterministic_across_worker_counts() {
    let model = fixtures::user_media_cyclic();
    let run = |jobs| {
        let options = VerifyOptions { jobs, ..Default::default() };
        verify_abstraction(&model, "user-media-cyclic", "USER", 6, Mode::Sigma, &options).unwrap().to_json()
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(4));
}

#[test]
fn skeleton_cap_marks_report_incomplete() {
    let model = fixtures::user_media_cyclic();
    let options = VerifyOptions { max_skeletons: Some(3), ..Default::default() };
    let report = verify_abstraction(&model, "m", "USER", 6, Mode::Sigma, &options).unwrap();
    assert!(!report.complete);
    assert_eq!(report.skeletons, 3);
}

// Fig. 3(b) query with the intersection-augmented conditioning set, checked
// directly against every enumerated ground graph.
#[test]
fn sigma_query_matches_ground_graphs() {
    let model = fixtures::user_media_cyclic();
    let agg = build_agg(&model, "USER", 6, AggMode::Sigma).unwrap();
    let x = set(&["[USER].Sentiment"]);
    let y = set(&["[USER, REACTS, POST, CREATES, MEDIA].Preference"]);
    let z = set(&["[USER, REACTS, POST].Engagement", "[USER, REACTS, POST, REACTS, USER].Sentiment"]);
    let abstract_verdict = relational_separated(&agg, &x, &y, &z, Mode::Sigma).unwrap().separated;

    let table_schema = model.schema.clone();
    let enumerator = SkeletonEnumerator::new(&table_schema, 3).min_degree_2(true);
    let table = enumerator.table().clone();
    let mut any_connected = false;
    for compact in enumerator {
        let sk = compact.to_skeleton(&table);
        let gg = ground(&model, &sk).unwrap();
        for base in &sk.entities["USER"] {
            let nodes = |vars: &BTreeSet<RelationalVariable>| -> BTreeSet<AttributeNode> {
                vars.iter()
                    .flat_map(|v| {
                        terminal_set(&sk, &v.path, base).unwrap().instances.into_iter().map(|i| AttributeNode {
                            instance: i,
                            attribute: v.attribute.clone(),
                        })
                    })
                    .collect()
            };
            let zs = nodes(&z);
            let xs: BTreeSet<_> = nodes(&x).difference(&zs).cloned().collect();
            let ys: BTreeSet<_> = nodes(&y).difference(&zs).cloned().collect();
            if xs.is_empty() || ys.is_empty() {
                continue;
            }
            if !xs.is_disjoint(&ys) || !gg.separated(&xs, &ys, &zs, Mode::Sigma).unwrap().separated {
                any_connected = true;
            }
        }
    }
    assert_eq!(abstract_verdict, !any_connected);
}

#[test]
fn lemma1_realizes_every_node_of_the_user_media_agg() {
    let report =
        check_lemma1(&fixtures::user_media_acyclic(), "user-media-acyclic", "USER", 6, &Lemma1Options::default())
            .unwrap();
    assert!(report.unrealized.is_empty(), "{:?}", report.unrealized);
    assert_eq!(report.nodes.len(), 7);
}

#[test]
fn lemma1_many_cardinalities_realize_the_overlap() {
    let v = fixtures::lee_variables();
    let overlap = AggNode::intersection(v.s_z.clone(), v.s_prime_z.clone()).to_string();
    let options = Lemma1Options {
        targets: vec![v.s_prime_z.to_string(), overlap.clone()],
        ..Default::default()
    };
    let report = check_lemma1(&fixtures::lee_counterexample_many(), "lee-many", "E1", 6, &options).unwrap();
    assert!(report.unrealized.is_empty(), "{:?}", report.unrealized);
    let witness = report.realization(&overlap).unwrap().skeleton.clone().unwrap();
    let schema = fixtures::lee_schema(Cardinality::Many);
    assert!(validate_skeleton(&schema, &witness, true).is_empty());
}

#[test]
fn lemma1_rejects_cyclic_models() {
    let r = check_lemma1(&fixtures::user_media_cyclic(), "m", "USER", 6, &Lemma1Options::default());
    assert!(matches!(r, Err(RcmError::CyclicModel)));
}

#[test]
fn one_to_one_counterexample_leaves_no_filtered_skeletons() {
    let schema = fixtures::lee_schema(Cardinality::One);
    assert_eq!(SkeletonEnumerator::new(&schema, 3).min_degree_2(true).count(), 0);
    assert!(SkeletonEnumerator::new(&schema, 1).next().is_some());
}

#[test]
fn agg_cyclicity_tracks_model_cyclicity() {
    let mut cyclic = 0;
    for seed in 0..200 {
        let model = random_model(seed, 5);
        model.ensure_valid().unwrap();
        let agg_cyclic = model
            .schema
            .entities
            .iter()
            .any(|e| build_agg(&model, &e.name, 8, AggMode::Sigma).unwrap().is_cyclic());
        assert_eq!(agg_cyclic, model.is_cyclic(), "seed {seed}: {}", model.to_canonical_json());
        cyclic += model.is_cyclic() as usize;
    }
    assert!(cyclic > 50 && cyclic < 150, "{cyclic}");
}

#[test]
fn acyclic_random_models_have_acyclic_aggs_from_every_perspective() {
    for seed in 0..200 {
        let model = random_model(seed, 5);
        if model.is_cyclic() {
            continue;
        }
        for e in &model.schema.entities {
            let agg = build_agg(&model, &e.name, 6, AggMode::Acyclic).unwrap();
            assert!(!agg.is_cyclic());
        }
    }
}

#[test]
fn ground_cyclicity_follows_the_model() {
    for (model, cyclic) in [(fixtures::user_media_acyclic(), false), (fixtures::user_media_cyclic(), true)] {
        let enumerator = SkeletonEnumerator::new(&model.schema, 2);
        let table = enumerator.table().clone();
        let mut saw_cycle = false;
        for compact in enumerator {
            let gg = ground(&model, &compact.to_skeleton(&table)).unwrap();
            if !cyclic {
                assert!(!gg.is_cyclic());
            }
            saw_cycle |= gg.is_cyclic();
        }
        assert_eq!(saw_cycle, cyclic);
    }
}

// With four instances per class the completeness direction agrees, and the
// only soundness disagreements come from ground walks through instances
// more than h hops from the base; a larger h removes them.
#[test]
fn four_instances_per_class() {
    let model = fixtures::user_media_cyclic();
    let options = VerifyOptions { max_per_entity: 4, ..Default::default() };
    let r = verify_abstraction(&model, "m", "USER", 6, Mode::Sigma, &options).unwrap();
    assert!(r.completeness_disagreements.is_empty(), "{}", r.to_table());
    assert!(!r.soundness_disagreements.is_empty());
    let far = "[USER, REACTS, POST, REACTS, USER, REACTS, POST].Engagement";
    assert!(r.soundness_disagreements.iter().all(|d| d.query.z.iter().any(|z| z == far)));

    let options = VerifyOptions { max_per_entity: 4, max_z: 1, ..Default::default() };
    let r = verify_abstraction(&model, "m", "USER", 8, Mode::Sigma, &options).unwrap();
    assert!(r.soundness_disagreements.is_empty(), "{}", r.to_table());
}
