//! Plan/oracle equivalence: every plan the enumerator produces must compute
//! exactly the naive-Datalog result, on hand-built fragments and on random
//! graphs, in every mode.

use std::collections::BTreeSet;

use rqe_core::bench::{instantiate_all, Bindings};
use rqe_core::cost::CostModel;
use rqe_core::enumerate::{enumerate, exhaustive_plans};
use rqe_core::exec::{datalog_oracle, execute, seeded_closure_oracle, transitive_closure_oracle};
use rqe_core::fixtures;
use rqe_core::graph::{build_catalog, Direction, PropertyGraph};
use rqe_core::ir::parse_program;
use rqe_core::relation::{Relation, Value};
use rqe_core::rules::RuleSet;

/// Both sides sorted by the same column order for comparison.
fn normalize(rel: &Relation) -> BTreeSet<Vec<Value>> {
    let mut names = rel.schema.clone();
    names.sort();
    rel.project_names(&names).tuples.into_iter().collect()
}

/// Aligns plan output (named columns, sorted) with the oracle's positional
/// answer columns via the program's answer head, then checks set equality of
/// every enumerated root plan's result.
fn plan_matches_oracle(text: &str, g: &PropertyGraph, label: &str) {
    let catalog = build_catalog(g);
    let cost = CostModel::default();
    let program = parse_program(text).unwrap();
    let oracle = datalog_oracle(&program, g);
    let head_vars: Vec<String> = program.answer_rules()[0]
        .head
        .vars()
        .map(|v| v.to_string())
        .collect();
    let oracle_named = Relation::with_tuples(head_vars.clone(), oracle.tuples.clone());
    let result = exhaustive_plans(&program, &catalog, &cost, RuleSet::optimized())
        .unwrap_or_else(|e| panic!("{label}: enumeration failed: {e}"));
    for (i, rp) in result.root_plans.iter().enumerate() {
        let (rel, _) = execute(&rp.plan, g)
            .unwrap_or_else(|e| panic!("{label}: plan {i} failed: {e}"));
        let got = normalize(&rel);
        let want = normalize(&oracle_named);
        assert_eq!(
            got.len(),
            want.len(),
            "{label}: plan {i} (seeded={}) cardinality mismatch",
            rp.used_seeding
        );
        assert_eq!(got, want, "{label}: plan {i} (seeded={})", rp.used_seeding);
    }
}

#[test]
fn query2_all_plans_match_oracle_on_fig1() {
    let g = fixtures::fig1_fragment();
    plan_matches_oracle(fixtures::QUERY2_TEXT, &g, "query2/fig1");
}

#[test]
fn query1_all_plans_match_oracle_on_fig1() {
    let g = fixtures::fig1_fragment();
    plan_matches_oracle(fixtures::QUERY1_TEXT, &g, "query1/fig1");
}

#[test]
fn query1_witness_pair_in_every_mode() {
    let g = fixtures::fig1_fragment();
    let catalog = build_catalog(&g);
    let cost = CostModel::default();
    let program = parse_program(fixtures::QUERY1_TEXT).unwrap();
    for rules in [RuleSet::unoptimized(), RuleSet::waveguide(), RuleSet::optimized()] {
        let result = enumerate(&program, &catalog, &cost, rules).unwrap();
        let (rel, _) = execute(&result.best, &g).unwrap();
        // Output schema is the sorted head (w, z).
        let witness = vec![Value::Id(fixtures::P1), Value::Id(fixtures::P3)];
        assert!(
            rel.project_names(&["w".into(), "z".into()]).tuples.contains(&witness),
            "missing (p1, p3)"
        );
    }
}

#[test]
fn queries_3_and_4_match_oracle_on_labeled_graphs() {
    let g = fixtures::random_graph(11, 90, 4);
    // Rename labels to what the queries expect by regenerating with the
    // fixture labels; random_graph uses l0..l3 so rebuild query text instead.
    let q3 = fixtures::QUERY3_TEXT
        .replace("\"lx\"", "\"l0\"")
        .replace("\"ly\"", "\"l1\"")
        .replace("\"lz\"", "\"l2\"");
    plan_matches_oracle(&q3, &g, "query3/random");
    let q4 = fixtures::QUERY4_TEXT
        .replace("\"lv\"", "\"l0\"")
        .replace("\"lw\"", "\"l1\"")
        .replace("\"ly\"", "\"l2\"")
        .replace("\"lz\"", "\"l3\"");
    plan_matches_oracle(&q4, &g, "query4/random");
}

#[test]
fn templates_match_oracle_on_random_graphs() {
    let bindings = Bindings::parse("l1 = l0\nl2 = l1\nl3 = l2\nc1 = 3\n").unwrap();
    for seed in [0u64, 1, 2] {
        let g = fixtures::random_graph(seed, 80, 3);
        for (name, text) in instantiate_all(&bindings).unwrap() {
            plan_matches_oracle(&text, &g, &format!("{name}/seed{seed}"));
        }
    }
}

#[test]
fn fixpoints_terminate_and_match_closure_oracle_on_cycles() {
    for seed in 0..5u64 {
        let g = fixtures::random_graph(seed, 60, 2);
        let catalog = build_catalog(&g);
        let cost = CostModel::default();
        // Plain closure: the unseeded plan equals brute-force TC.
        let program = parse_program(
            "R(s,t) :- E(s,e,t), P(e,\"label\",\"l0\").\nAns(x,y) :- R+(x,y).",
        )
        .unwrap();
        let result = enumerate(&program, &catalog, &cost, RuleSet::unoptimized()).unwrap();
        let (rel, metrics) = execute(&result.best, &g).unwrap();
        let base = g.scan_label("l0", Direction::Forward);
        let tc = transitive_closure_oracle(&base);
        assert_eq!(normalize(&rel).len(), tc.len(), "seed {seed}");
        assert!(metrics.fixpoint_iterations.values().all(|&i| i >= 1));
    }
}

#[test]
fn seeded_closure_law_holds() {
    // join(R, seeded_closure(T, seed(R), fwd)) restricted to R equals
    // join(R, TC(T) + identity): every seeding tuple joins something.
    for seed in 0..5u64 {
        let g = fixtures::random_graph(seed + 20, 70, 2);
        let r = g.scan_label("l0", Direction::Forward);
        let t = g.scan_label("l1", Direction::Forward);
        let seed_set: BTreeSet<Value> = r.tuples.iter().map(|tup| tup[1]).collect();
        let seeded = seeded_closure_oracle(&t, &seed_set, Direction::Forward);
        // Every seed value appears as a source in the seeded closure.
        let sources: BTreeSet<Value> = seeded.tuples.iter().map(|tup| tup[0]).collect();
        for s in &seed_set {
            assert!(sources.contains(s), "seed {s} lost");
        }
        // Restriction law against full TC plus identity.
        let tc = transitive_closure_oracle(&t);
        for tup in &seeded.tuples {
            let identity = tup[0] == tup[1] && seed_set.contains(&tup[0]);
            assert!(identity || tc.tuples.contains(tup));
        }
    }
}

#[test]
fn seeded_and_unseeded_plans_agree_on_query2() {
    for seed in 0..6u64 {
        let g = fixtures::random_graph(seed + 40, 100, 2);
        let text = fixtures::QUERY2_TEXT
            .replace("\"owns\"", "\"l0\"")
            .replace("\"transaction\"", "\"l1\"");
        plan_matches_oracle(&text, &g, &format!("query2/random{seed}"));
    }
}

#[test]
fn metrics_seeded_processes_fewer_tuples_on_selective_instance() {
    let g = fixtures::seeding_benefit_instance(20, 50, 5);
    let catalog = build_catalog(&g);
    let cost = CostModel::default();
    let program = parse_program(fixtures::SEEDING_BENEFIT_QUERY).unwrap();
    let unopt = enumerate(&program, &catalog, &cost, RuleSet::unoptimized()).unwrap();
    let opt = enumerate(&program, &catalog, &cost, RuleSet::optimized()).unwrap();
    let (r1, m1) = execute(&unopt.best, &g).unwrap();
    let (r2, m2) = execute(&opt.best, &g).unwrap();
    assert_eq!(normalize(&r1), normalize(&r2));
    assert!(
        m2.tuples_processed <= m1.tuples_processed,
        "seeded {} vs unseeded {}",
        m2.tuples_processed,
        m1.tuples_processed
    );
}

#[test]
fn memo_entries_compute_their_own_subqueries() {
    // Every memo entry's plan, executed, equals the naive evaluation of the
    // sub-query it is keyed by.
    use rqe_core::exec::subquery_oracle;
    for seed in [0u64, 3] {
        let g = fixtures::random_graph(seed + 60, 80, 3);
        let catalog = build_catalog(&g);
        let cost = CostModel::default();
        let text = "R(s,t) :- E(s,e,t), P(e,\"label\",\"l0\").\n\
                    S(s,t) :- E(s,e,t), P(e,\"label\",\"l1\").\n\
                    T(s,t) :- E(s,e,t), P(e,\"label\",\"l2\").\n\
                    Ans(x,y) :- R+(x,y), S+(x,y), T(x,y).";
        let program = parse_program(text).unwrap();
        let result = enumerate(&program, &catalog, &cost, RuleSet::optimized()).unwrap();
        let mut checked = 0;
        for (_, entry) in result.memo.iter() {
            let recomputed = cost.estimate_cost(&catalog, &entry.plan).unwrap();
            assert!((recomputed - entry.cost).abs() < 1e-9, "stored cost is stale");
            let (rel, _) = execute(&entry.plan, &g).unwrap();
            let want = subquery_oracle(&entry.query, &program, &g);
            assert_eq!(
                normalize(&rel),
                normalize(&want),
                "memo entry for {} diverges (seed {seed})",
                entry.query
            );
            checked += 1;
        }
        assert!(checked >= 5, "expected several memo entries, saw {checked}");
    }
}

#[test]
fn seeded_query2_plan_has_one_fixpoint_group() {
    // The classic exterior-seeded plan runs exactly one fixpoint.
    let g = fixtures::fig1_fragment();
    let catalog = build_catalog(&g);
    let cost = CostModel::default();
    let program = parse_program(fixtures::QUERY2_TEXT).unwrap();
    let result = exhaustive_plans(&program, &catalog, &cost, RuleSet::optimized()).unwrap();
    let seeded = result.root_plans.iter().find(|p| p.used_seeding).unwrap();
    assert_eq!(seeded.plan.flow_groups().unwrap().fixpoint_count(), 1);
}

#[test]
fn seeded_query4_plan_orders_interior_groups_before_exterior() {
    use rqe_core::plan::OpKind;
    let g = fixtures::query4_fragment();
    let catalog = build_catalog(&g);
    let cost = CostModel::default();
    let program = parse_program(fixtures::QUERY4_TEXT).unwrap();
    let result = exhaustive_plans(&program, &catalog, &cost, RuleSet::optimized()).unwrap();
    let seeded = result.root_plans.iter().find(|p| p.used_seeding).unwrap();
    let groups = seeded.plan.flow_groups().unwrap();
    let fixpoint_positions: Vec<usize> = groups
        .groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.fixpoint)
        .map(|(i, _)| i)
        .collect();
    assert_eq!(fixpoint_positions.len(), 3, "two interior groups plus the exterior one");
    // The exterior fixpoint seeds from the highest-numbered stacking buffer
    // and must come topologically after both interior groups.
    let stacking: Vec<_> = seeded
        .plan
        .ops
        .values()
        .filter_map(|k| match k {
            OpKind::BufferWrite { buffer, child }
                if matches!(seeded.plan.op(*child), OpKind::Join { .. }) =>
            {
                Some(*buffer)
            }
            _ => None,
        })
        .collect();
    assert_eq!(stacking.len(), 2, "stacking buffers after the two interior joins");
    let last_stack = *stacking.iter().max().unwrap();
    // Find the fixpoint group fed by a seed projection over that buffer.
    let reads_last_stack: Vec<rqe_core::plan::OpId> = seeded
        .plan
        .ops
        .iter()
        .filter_map(|(id, k)| match k {
            OpKind::BufferRead { buffer } if *buffer == last_stack => Some(*id),
            _ => None,
        })
        .collect();
    let exterior_group = groups
        .groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.fixpoint)
        .find(|(_, g)| {
            g.ops.iter().any(|op| match seeded.plan.op(*op) {
                OpKind::Union { children } => children.iter().any(|c| {
                    // identity branch: dedup(project(read(last_stack)))
                    if let OpKind::Dedup { child } = seeded.plan.op(*c) {
                        if let OpKind::Project { child: inner, .. } = seeded.plan.op(*child) {
                            return reads_last_stack.contains(inner);
                        }
                    }
                    false
                }),
                _ => false,
            })
        })
        .map(|(i, _)| i)
        .expect("exterior fixpoint group found");
    for &p in &fixpoint_positions {
        if p != exterior_group {
            assert!(p < exterior_group, "interior group must precede the exterior group");
        }
    }
}

#[test]
fn cost_model_ranks_seeded_plan_first_when_seed_is_tiny() {
    // The catalog numbers of the constructed instance make the seeding
    // relation far smaller than the closure base; the estimated costs must
    // order the seeded plan ahead of the full-closure plan.
    let g = fixtures::seeding_benefit_instance(20, 50, 5);
    let catalog = build_catalog(&g);
    let cost = CostModel::default();
    let program = parse_program(fixtures::SEEDING_BENEFIT_QUERY).unwrap();
    let result = exhaustive_plans(&program, &catalog, &cost, RuleSet::optimized()).unwrap();
    let seeded = result.root_plans.iter().find(|p| p.used_seeding).unwrap();
    let unseeded = result.root_plans.iter().find(|p| !p.used_seeding).unwrap();
    assert!(
        seeded.cost < unseeded.cost,
        "seeded {} must undercut unseeded {}",
        seeded.cost,
        unseeded.cost
    );
}

#[test]
fn closure_plan_on_trivial_bases() {
    // Single edge: the closure is exactly that pair. Empty base: empty.
    let cost = CostModel::default();
    let text = "R(s,t) :- E(s,e,t), P(e,\"label\",\"only\").\nAns(x,y) :- R+(x,y).";
    let program = parse_program(text).unwrap();

    let single = rqe_core::graph::ingest_rdf(vec![("a", "only", "b")]);
    let catalog = build_catalog(&single);
    let result = enumerate(&program, &catalog, &cost, RuleSet::unoptimized()).unwrap();
    let (rel, metrics) = execute(&result.best, &single).unwrap();
    assert_eq!(rel.len(), 1);
    assert!(metrics.fixpoint_iterations.values().all(|&i| i == 2), "one growth, one check");

    let empty = rqe_core::graph::ingest_rdf(vec![("a", "other", "b")]);
    let catalog = build_catalog(&empty);
    let result = enumerate(&program, &catalog, &cost, RuleSet::unoptimized()).unwrap();
    let (rel, metrics) = execute(&result.best, &empty).unwrap();
    assert!(rel.is_empty());
    assert!(metrics.fixpoint_iterations.values().all(|&i| i == 1), "fixpoint after one pass");
}

#[test]
fn no_stray_dedups_in_rule_plans() {
    // Every dedup in an enumerated plan either lies on a buffer cycle (the
    // fixpoint delta detector) or injects seeds into a fixpoint union.
    use rqe_core::plan::OpKind;
    let g = fixtures::random_graph(9, 80, 4);
    let catalog = build_catalog(&g);
    let cost = CostModel::default();
    for text in [
        fixtures::QUERY2_TEXT,
        fixtures::QUERY3_TEXT,
        fixtures::QUERY4_TEXT,
        fixtures::PCC2_QUERY,
    ] {
        let text = text
            .replace("\"owns\"", "\"l0\"")
            .replace("\"transaction\"", "\"l1\"")
            .replace("\"lx\"", "\"l0\"")
            .replace("\"ly\"", "\"l1\"")
            .replace("\"lz\"", "\"l2\"")
            .replace("\"lv\"", "\"l3\"")
            .replace("\"lw\"", "\"l0\"")
            .replace("\"r\"", "\"l0\"")
            .replace("\"s\"", "\"l1\"");
        let program = parse_program(&text).unwrap();
        let result = exhaustive_plans(&program, &catalog, &cost, RuleSet::optimized()).unwrap();
        for rp in &result.root_plans {
            let groups = rp.plan.flow_groups().unwrap();
            for group in groups.groups.iter().filter(|g| !g.fixpoint) {
                // A dedup outside every cycle must feed a fixpoint union.
                for &op in &group.ops {
                    if !matches!(rp.plan.op(op), OpKind::Dedup { .. }) {
                        continue;
                    }
                    let feeds_fixpoint_union = rp.plan.ops.iter().any(|(id, kind)| {
                        matches!(kind, OpKind::Union { children } if children.contains(&op))
                            && groups
                                .groups
                                .iter()
                                .any(|g| g.fixpoint && g.ops.contains(id))
                    });
                    assert!(feeds_fixpoint_union, "stray dedup {op} in plan");
                }
            }
        }
    }
}
