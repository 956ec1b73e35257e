//! Top-down plan enumeration with memoization.
//!
//! A global stack holds partial plans; each plan carries its own stack of
//! pending abstractions, giving a depth-first order over sub-problems. The
//! top plan either is concrete (cost it, memoize the best plan per canonical
//! signature, count a leaf), or its top abstraction resolves through the
//! memo table, or the enumeration rules expand it and the generated
//! fragments are pushed above it. Every fragment therefore completes exactly
//! once, which is what the plan-count accounting measures.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use thiserror::Error;

use crate::canon::canonicalize;
use crate::cost::CostModel;
use crate::graph::Catalog;
use crate::ir::{join_graph, parse_program, Program, QueryError, SubQuery};
use crate::plan::{PlanError, PlanGraph};
use crate::rules::{apply_rules, EnumContext, RuleSet};

#[derive(Debug, Error)]
pub enum EnumError {
    #[error("no enumeration rule applies to sub-query `{0}`")]
    NoRuleApplies(String),
    #[error("the answer rule's join graph is disconnected")]
    DisconnectedQuery,
    #[error("answer predicate `{0}` has no rules")]
    NoAnswerRule(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// Best plan and cost per canonical sub-query signature. Stored plans are
/// abstraction-free; the canonical variable map supports renaming a stored
/// plan into any isomorphic use site.
#[derive(Debug, Default)]
pub struct MemoTable {
    entries: HashMap<Vec<u8>, MemoEntry>,
}

#[derive(Debug, Clone)]
pub struct MemoEntry {
    pub plan: PlanGraph,
    pub cost: f64,
    pub canon_map: BTreeMap<String, u32>,
    /// The sub-query this entry solves, as first encountered.
    pub query: SubQuery,
}

impl MemoTable {
    pub fn get(&self, sig: &[u8]) -> Option<&MemoEntry> {
        self.entries.get(sig)
    }

    /// Keeps the cheaper plan; ties keep the first seen.
    fn offer(&mut self, sig: Vec<u8>, entry: MemoEntry) {
        match self.entries.get_mut(&sig) {
            Some(existing) if entry.cost < existing.cost => *existing = entry,
            Some(_) => {}
            None => {
                self.entries.insert(sig, entry);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u8>, &MemoEntry)> {
        self.entries.iter()
    }
}

#[derive(Debug, Clone, Default)]
pub struct EnumStats {
    /// Concrete plans produced (cost-model calls while memoizing).
    pub leaf_count: u64,
    pub rule_applications: BTreeMap<&'static str, u64>,
    pub peak_stack_depth: usize,
    pub opt_ms: f64,
}

impl EnumStats {
    /// Flat machine-readable lines, `stat.<name>=<value>`.
    pub fn report_lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("stat.leaf_count={}", self.leaf_count),
            format!("stat.peak_stack_depth={}", self.peak_stack_depth),
            format!("stat.opt_ms={:.3}", self.opt_ms),
        ];
        for (rule, n) in &self.rule_applications {
            out.push(format!("stat.rule.{rule}={n}"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RootPlan {
    pub plan: PlanGraph,
    pub cost: f64,
    pub used_seeding: bool,
}

#[derive(Debug)]
pub struct Enumeration {
    pub best: PlanGraph,
    pub best_cost: f64,
    pub stats: EnumStats,
    /// All concrete root plans, populated in exhaustive mode only.
    pub root_plans: Vec<RootPlan>,
    pub memo: MemoTable,
}

struct Pending {
    plan: PlanGraph,
    sig: Vec<u8>,
    /// Canonical variable assignment of the sub-query this plan solves.
    canon_map: BTreeMap<String, u32>,
    query: SubQuery,
}

/// The root sub-query: the answer rule's body, or a one-atom query over the
/// answer predicate when several rules define it.
pub fn root_query(program: &Program) -> Result<SubQuery, EnumError> {
    let rules = program.answer_rules();
    match rules.len() {
        0 => Err(EnumError::NoAnswerRule(program.answer.clone())),
        1 => Ok(SubQuery::from_rule(rules[0])),
        _ => {
            let head: Vec<String> = rules[0].head.vars().map(|v| v.to_string()).collect();
            let atom = crate::ir::Atom {
                predicate: program.answer.clone(),
                terms: rules[0].head.terms.clone(),
                closure: false,
            };
            Ok(SubQuery::new(head, vec![atom], vec![]))
        }
    }
}

pub fn enumerate(
    program: &Program,
    catalog: &Catalog,
    cost: &CostModel,
    rules: RuleSet,
) -> Result<Enumeration, EnumError> {
    enumerate_inner(program, catalog, cost, rules, false)
}

/// Like [`enumerate`] but retains every concrete plan for the root problem;
/// strict sub-problems keep best-only entries.
pub fn exhaustive_plans(
    program: &Program,
    catalog: &Catalog,
    cost: &CostModel,
    rules: RuleSet,
) -> Result<Enumeration, EnumError> {
    enumerate_inner(program, catalog, cost, rules, true)
}

fn enumerate_inner(
    program: &Program,
    catalog: &Catalog,
    cost: &CostModel,
    rules: RuleSet,
    exhaustive: bool,
) -> Result<Enumeration, EnumError> {
    let started = Instant::now();
    let root = root_query(program)?;
    if !join_graph(&root.body).is_connected() {
        return Err(EnumError::DisconnectedQuery);
    }
    let ctx = EnumContext { program, catalog, cost, rules };
    let (root_sig, root_map) = canonicalize(&root);

    let mut memo = MemoTable::default();
    let mut stats = EnumStats::default();
    let mut root_plans: Vec<RootPlan> = Vec::new();
    let mut stack: Vec<Pending> = vec![Pending {
        plan: PlanGraph::bare_abstraction(root.clone()),
        sig: root_sig.clone(),
        canon_map: root_map,
        query: root.clone(),
    }];

    while let Some(pending) = stack.pop() {
        stats.peak_stack_depth = stats.peak_stack_depth.max(stack.len() + 1);
        if !pending.plan.has_abstractions() {
            let plan_cost = cost
                .estimate_cost(catalog, &pending.plan)
                .map_err(EnumError::Plan)?;
            stats.leaf_count += 1;
            if exhaustive && pending.sig == root_sig {
                root_plans.push(RootPlan {
                    plan: pending.plan.clone(),
                    cost: plan_cost,
                    used_seeding: pending.plan.used_seeding,
                });
            }
            memo.offer(
                pending.sig,
                MemoEntry {
                    plan: pending.plan,
                    cost: plan_cost,
                    canon_map: pending.canon_map,
                    query: pending.query,
                },
            );
            continue;
        }

        let abs_id = *pending.plan.abstractions.last().unwrap();
        let query = pending
            .plan
            .abstraction_query(abs_id)
            .cloned()
            .ok_or(PlanError::NotAnAbstraction(abs_id))?;
        let (sig, query_map) = canonicalize(&query);

        if let Some(entry) = memo.get(&sig) {
            // A bare abstraction whose solution is already memoized adds
            // nothing: the memo holds its answer.
            if pending.sig == sig && pending.plan.ops.len() == 1 {
                continue;
            }
            let rename = rename_for(&query, &query_map, entry);
            let renamed = entry.plan.with_renamed_output(&rename);
            let next = pending.plan.substitute(abs_id, &renamed)?;
            stack.push(Pending {
                plan: next,
                sig: pending.sig,
                canon_map: pending.canon_map,
                query: pending.query,
            });
        } else {
            let fragments = apply_rules(&query, &ctx);
            if fragments.is_empty() {
                return Err(EnumError::NoRuleApplies(query.to_string()));
            }
            stack.push(pending);
            for (rule, fragment) in fragments {
                *stats.rule_applications.entry(rule.as_str()).or_insert(0) += 1;
                stack.push(Pending {
                    plan: fragment,
                    sig: sig.clone(),
                    canon_map: query_map.clone(),
                    query: query.clone(),
                });
            }
        }
    }

    stats.opt_ms = started.elapsed().as_secs_f64() * 1e3;
    let entry = memo
        .get(&root_sig)
        .ok_or_else(|| EnumError::NoRuleApplies(root.to_string()))?;
    Ok(Enumeration {
        best: entry.plan.clone(),
        best_cost: entry.cost,
        stats,
        root_plans,
        memo,
    })
}

/// Builds the output renaming from a memoized plan's head variables to the
/// use site's head variables by matching canonical indices.
fn rename_for(
    query: &SubQuery,
    query_map: &BTreeMap<String, u32>,
    entry: &MemoEntry,
) -> Vec<(String, String)> {
    let by_index: BTreeMap<u32, &String> =
        entry.canon_map.iter().map(|(v, i)| (*i, v)).collect();
    query
        .head
        .iter()
        .filter_map(|h| {
            let idx = query_map.get(h)?;
            let from = by_index.get(idx)?;
            Some(((*from).clone(), h.clone()))
        })
        .collect()
}

/// Parses and enumerates in one step, mainly for tests and the CLI.
pub fn enumerate_text(
    text: &str,
    catalog: &Catalog,
    cost: &CostModel,
    rules: RuleSet,
) -> Result<(Program, Enumeration), EnumError> {
    let program = parse_program(text)?;
    let result = enumerate(&program, catalog, cost, rules)?;
    Ok((program, result))
}

// ---------------------------------------------------------------------------
// Plan-count analysis
// ---------------------------------------------------------------------------

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Predicted number of concrete plans for an `n`-term star query: the
/// summation forms `n + Σ C(n,k)(2^(k-1) - 1)` (non-recursive) and
/// `2n + Σ C(n,k)(2^k - 1)` (recursive, all rules enabled).
pub fn predicted_plan_count(n: u64, recursive: bool) -> u128 {
    assert!(n >= 2, "plan-count analysis needs n >= 2");
    let mut sum: u128 = 0;
    for k in 2..=n {
        let per_subset: u128 = if recursive {
            (1u128 << k) - 1
        } else {
            (1u128 << (k - 1)) - 1
        };
        sum += binomial(n, k) * per_subset;
    }
    let singles = if recursive { 2 * n as u128 } else { n as u128 };
    singles + sum
}

/// The closed form `(3^n - 2^(n+1) + 2n + 1) / 2` for the non-recursive
/// star; agrees with the summation form.
pub fn unseeded_count_closed_form(n: u64) -> u128 {
    assert!(n >= 2);
    let numerator = 3u128.pow(n as u32) - (1u128 << (n + 1)) + 2 * n as u128 + 1;
    numerator / 2
}

// ---------------------------------------------------------------------------
// Query-shape generators
// ---------------------------------------------------------------------------

fn base_definitions(n: u64) -> String {
    (1..=n)
        .map(|i| format!("E{i}(s, t) :- E(s, e, t), P(e, \"label\", \"l{i}\").\n"))
        .collect()
}

/// `n` distinct base predicates sharing one central variable; the recursive
/// variant marks every atom as a closure. The join graph is a clique.
pub fn make_star_query(n: u64, recursive: bool) -> Program {
    assert!(n >= 2);
    let marker = if recursive { "+" } else { "" };
    let head: Vec<String> = std::iter::once("c".to_string())
        .chain((1..=n).map(|i| format!("x{i}")))
        .collect();
    let body: Vec<String> = (1..=n).map(|i| format!("E{i}{marker}(c, x{i})")).collect();
    let text = format!(
        "{}Ans({}) :- {}.",
        base_definitions(n),
        head.join(", "),
        body.join(", ")
    );
    parse_program(&text).expect("star query is well formed")
}

/// `n` terms in a chain pattern.
pub fn make_chain_query(n: u64, recursive: bool) -> Program {
    assert!(n >= 1);
    let marker = if recursive { "+" } else { "" };
    let head: Vec<String> = (0..=n).map(|i| format!("x{i}")).collect();
    let body: Vec<String> =
        (1..=n).map(|i| format!("E{i}{marker}(x{}, x{})", i - 1, i)).collect();
    let text = format!(
        "{}Ans({}) :- {}.",
        base_definitions(n),
        head.join(", "),
        body.join(", ")
    );
    parse_program(&text).expect("chain query is well formed")
}

/// `n` terms in a cycle; the recursive variant marks the first atom as a
/// closure, generalizing the connected-components templates.
pub fn make_ccc_query(n: u64, recursive: bool) -> Program {
    assert!(n >= 2);
    let head: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
    let body: Vec<String> = (0..n)
        .map(|i| {
            let marker = if recursive && i == 0 { "+" } else { "" };
            format!("E{}{marker}(x{}, x{})", i + 1, i, (i + 1) % n)
        })
        .collect();
    let text = format!(
        "{}Ans({}) :- {}.",
        base_definitions(n),
        head.join(", "),
        body.join(", ")
    );
    parse_program(&text).expect("cycle query is well formed")
}
