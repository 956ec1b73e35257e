//! Plan execution with set semantics and semi-naive fixpoints.
//!
//! Flow groups evaluate in topological order. Acyclic groups are plain
//! bottom-up set operations. A fixpoint group runs semi-naive iteration: the
//! buffer accumulates a total, each iteration feeds only the previous delta
//! through the recursive branch, the dedup subtracts everything already
//! seen, and the loop stops when the delta is empty.
//!
//! Tuple accounting follows the "total tuples processed" rule: only the
//! generating operators (edge/property scans and joins) contribute their
//! output counts; union, projection, selection, rename, dedup and buffer
//! traffic only forward tuples.
//!
//! This module also hosts the brute-force oracles (naive transitive closure,
//! seeded closure by definition, naive bottom-up Datalog) that the test
//! suites compare the engine against.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::Instant;

use thiserror::Error;

use crate::graph::{Dictionary, PropertyGraph};
use crate::ir::{Atom, Constant, Program, Rule, SubQuery, Term, EDGE_PRED, PROP_PRED};
use crate::plan::{BufId, OpId, OpKind, PlanGraph};
use crate::relation::{Relation, Tuple, Value};

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("plan contains an unresolved abstraction at {0}")]
    UnresolvedAbstraction(OpId),
    #[error("malformed plan: {0}")]
    Malformed(String),
    #[error("execution exceeded the time limit")]
    Timeout,
}

/// Per-execution accounting.
#[derive(Debug, Clone, Default)]
pub struct EvalMetrics {
    /// c(p): summed output counts of generating operators.
    pub tuples_processed: u64,
    pub per_op: BTreeMap<OpId, u64>,
    pub fixpoint_iterations: BTreeMap<BufId, u64>,
    pub exec_ms: f64,
    /// Filled by the caller that ran the optimizer.
    pub opt_ms: f64,
}

pub fn count_results(rel: &Relation) -> u64 {
    rel.len() as u64
}

pub fn execute(plan: &PlanGraph, g: &PropertyGraph) -> Result<(Relation, EvalMetrics), ExecError> {
    execute_with_deadline(plan, g, None)
}

pub fn execute_with_deadline(
    plan: &PlanGraph,
    g: &PropertyGraph,
    deadline: Option<Instant>,
) -> Result<(Relation, EvalMetrics), ExecError> {
    let start = Instant::now();
    if let Some(id) = plan.abstractions.first() {
        return Err(ExecError::UnresolvedAbstraction(*id));
    }
    let schemas = plan.schemas().map_err(|e| ExecError::Malformed(e.to_string()))?;
    let groups = plan.flow_groups().map_err(|e| ExecError::Malformed(e.to_string()))?;
    let mut metrics = EvalMetrics::default();
    let mut outputs: BTreeMap<OpId, Relation> = BTreeMap::new();
    let mut buffers: BTreeMap<BufId, Relation> = BTreeMap::new();

    for group in &groups.groups {
        check_deadline(deadline)?;
        if !group.fixpoint {
            debug_assert_eq!(group.ops.len(), 1);
            let id = group.ops[0];
            let rel = eval_op(plan, g, id, &outputs, &buffers, None, &mut metrics)?;
            if let OpKind::BufferWrite { buffer, .. } = plan.op(id) {
                buffers.insert(*buffer, rel.clone());
            }
            outputs.insert(id, rel);
            continue;
        }
        run_fixpoint(plan, g, group, &schemas, &mut outputs, &mut buffers, deadline, &mut metrics)?;
    }

    let result = outputs
        .get(&plan.root)
        .cloned()
        .ok_or_else(|| ExecError::Malformed("root produced no output".into()))?;
    metrics.exec_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((result, metrics))
}

#[allow(clippy::too_many_arguments)]
fn run_fixpoint(
    plan: &PlanGraph,
    g: &PropertyGraph,
    group: &crate::plan::FlowGroup,
    schemas: &BTreeMap<OpId, Vec<String>>,
    outputs: &mut BTreeMap<OpId, Relation>,
    buffers: &mut BTreeMap<BufId, Relation>,
    deadline: Option<Instant>,
    metrics: &mut EvalMetrics,
) -> Result<(), ExecError> {
    let members: BTreeSet<OpId> = group.ops.iter().copied().collect();
    let writes: Vec<OpId> = group
        .ops
        .iter()
        .copied()
        .filter(|id| matches!(plan.op(*id), OpKind::BufferWrite { .. }))
        .collect();
    if writes.len() != 1 {
        return Err(ExecError::Malformed(format!(
            "fixpoint group must contain exactly one buffer write, found {}",
            writes.len()
        )));
    }
    let write_id = writes[0];
    let (buffer, write_child) = match plan.op(write_id) {
        OpKind::BufferWrite { buffer, child } => (*buffer, *child),
        _ => unreachable!(),
    };
    // Internal evaluation order: the group's flow edges minus the edges out
    // of the buffer write form a DAG from the in-group reads to the write.
    let order = fixpoint_order(plan, &members, write_id)?;
    let schema = schemas[&write_child].clone();

    let mut total = Relation::new(schema.clone());
    let mut delta = Relation::new(schema.clone());
    let mut dedup_seen: BTreeMap<OpId, HashSet<Tuple>> = BTreeMap::new();
    let max_iters = (g.vertex_count() as u64 + 2).pow(2) + 2;
    let mut iterations: u64 = 0;
    loop {
        check_deadline(deadline)?;
        let mut scratch: BTreeMap<OpId, Relation> = BTreeMap::new();
        for &id in &order {
            let rel = match plan.op(id) {
                OpKind::BufferRead { buffer: b } if *b == buffer => delta.clone(),
                _ => {
                    let r = eval_op_with(
                        plan,
                        g,
                        id,
                        &|child| {
                            scratch
                                .get(&child)
                                .or_else(|| outputs.get(&child))
                                .cloned()
                                .ok_or_else(|| {
                                    ExecError::Malformed(format!("missing input for {child}"))
                                })
                        },
                        buffers,
                        Some(&mut dedup_seen),
                        metrics,
                    )?;
                    r
                }
            };
            scratch.insert(id, rel);
        }
        let produced = scratch[&write_child].clone();
        let new_delta = produced.difference(&total.tuples);
        iterations += 1;
        if iterations > max_iters {
            return Err(ExecError::Malformed("fixpoint failed to terminate".into()));
        }
        total.tuples.extend(new_delta.tuples.iter().cloned());
        let done = new_delta.is_empty();
        delta = new_delta;
        if done {
            break;
        }
    }
    metrics.fixpoint_iterations.insert(buffer, iterations);
    buffers.insert(buffer, total.clone());
    for &id in &members {
        outputs.insert(id, total.clone());
    }
    Ok(())
}

/// Shared with the cost model, which walks fixpoint bodies the same way.
pub(crate) fn fixpoint_order_for_estimation(
    plan: &PlanGraph,
    members: &BTreeSet<OpId>,
    write_id: OpId,
) -> Result<Vec<OpId>, String> {
    fixpoint_order(plan, members, write_id).map_err(|e| e.to_string())
}

/// Topological order of a fixpoint group's members once the buffer-write's
/// outgoing (cycle-closing) edges are removed.
fn fixpoint_order(
    plan: &PlanGraph,
    members: &BTreeSet<OpId>,
    write_id: OpId,
) -> Result<Vec<OpId>, ExecError> {
    let mut indegree: BTreeMap<OpId, usize> = members.iter().map(|&m| (m, 0)).collect();
    let mut edges: Vec<(OpId, OpId)> = Vec::new();
    for &id in members {
        for c in plan.op(id).children() {
            if members.contains(&c) && c != write_id {
                edges.push((c, id));
                *indegree.get_mut(&id).unwrap() += 1;
            }
        }
    }
    let mut ready: Vec<OpId> =
        members.iter().copied().filter(|m| indegree[m] == 0).collect();
    let mut order = Vec::new();
    while let Some(id) = ready.pop() {
        order.push(id);
        for &(from, to) in &edges {
            if from == id {
                let d = indegree.get_mut(&to).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(to);
                }
            }
        }
        ready.sort();
    }
    if order.len() != members.len() {
        return Err(ExecError::Malformed("fixpoint group is not a simple cycle".into()));
    }
    Ok(order)
}

fn eval_op(
    plan: &PlanGraph,
    g: &PropertyGraph,
    id: OpId,
    outputs: &BTreeMap<OpId, Relation>,
    buffers: &BTreeMap<BufId, Relation>,
    dedup_seen: Option<&mut BTreeMap<OpId, HashSet<Tuple>>>,
    metrics: &mut EvalMetrics,
) -> Result<Relation, ExecError> {
    eval_op_with(
        plan,
        g,
        id,
        &|child| {
            outputs
                .get(&child)
                .cloned()
                .ok_or_else(|| ExecError::Malformed(format!("missing input for {child}")))
        },
        buffers,
        dedup_seen,
        metrics,
    )
}

fn eval_op_with(
    plan: &PlanGraph,
    g: &PropertyGraph,
    id: OpId,
    input: &dyn Fn(OpId) -> Result<Relation, ExecError>,
    buffers: &BTreeMap<BufId, Relation>,
    dedup_seen: Option<&mut BTreeMap<OpId, HashSet<Tuple>>>,
    metrics: &mut EvalMetrics,
) -> Result<Relation, ExecError> {
    let require = |rel: &Relation, col: &str| -> Result<(), ExecError> {
        if rel.col(col).is_none() {
            return Err(ExecError::Malformed(format!(
                "operator {id} references missing column `{col}` (schema {:?})",
                rel.schema
            )));
        }
        Ok(())
    };
    let out = match plan.op(id) {
        OpKind::ScanE { vars } => {
            scan_triples(vars, g.edges.iter().map(|&(s, e, t)| {
                [Value::Id(s), Value::Id(e), Value::Id(t)]
            }))
        }
        OpKind::ScanP { vars } => {
            scan_triples(vars, g.props.iter().map(|&(o, k, v)| {
                [Value::Id(o), Value::Str(k), v]
            }))
        }
        OpKind::Join { preds, left, right } => {
            let (l, r) = (input(*left)?, input(*right)?);
            for (lc, rc) in preds {
                require(&l, lc)?;
                require(&r, rc)?;
            }
            l.join(&r, preds)
        }
        OpKind::Project { cols, child } => {
            let rel = input(*child)?;
            for (src, _) in cols {
                require(&rel, src)?;
            }
            rel.project(cols)
        }
        OpKind::Rename { map, child } => input(*child)?.rename(map),
        OpKind::Select { filters, child } => {
            let rel = input(*child)?;
            for (col, _) in filters {
                require(&rel, col)?;
            }
            select(&rel, filters, &g.dict)
        }
        OpKind::Union { children } => {
            let mut acc: Option<Relation> = None;
            for c in children {
                let rel = input(*c)?;
                match &mut acc {
                    None => acc = Some(rel),
                    Some(a) => a.union_in_place(&rel),
                }
            }
            acc.ok_or_else(|| ExecError::Malformed("empty union".into()))?
        }
        OpKind::BufferWrite { child, .. } => input(*child)?,
        OpKind::BufferRead { buffer } => buffers
            .get(buffer)
            .cloned()
            .ok_or_else(|| ExecError::Malformed(format!("read of unwritten buffer {buffer}")))?,
        OpKind::Dedup { child } => {
            let rel = input(*child)?;
            match dedup_seen {
                Some(seen) => {
                    let state = seen.entry(id).or_default();
                    let fresh = rel.difference(state);
                    state.extend(fresh.tuples.iter().cloned());
                    fresh
                }
                // Outside a cycle the subtraction state is void; sets are
                // already duplicate-free.
                None => rel,
            }
        }
        OpKind::Abstraction { .. } => return Err(ExecError::UnresolvedAbstraction(id)),
    };
    if matches!(
        plan.op(id),
        OpKind::ScanE { .. } | OpKind::ScanP { .. } | OpKind::Join { .. }
    ) {
        metrics.tuples_processed += out.len() as u64;
        *metrics.per_op.entry(id).or_insert(0) += out.len() as u64;
    }
    Ok(out)
}

/// Binds a triple source to three names; repeated names filter for equality
/// and collapse into one column.
fn scan_triples<I: Iterator<Item = [Value; 3]>>(vars: &[String; 3], triples: I) -> Relation {
    let mut schema: Vec<String> = Vec::new();
    let mut keep: Vec<usize> = Vec::new();
    for (i, v) in vars.iter().enumerate() {
        if !schema.contains(v) {
            schema.push(v.clone());
            keep.push(i);
        }
    }
    let mut out = Relation::new(schema);
    'next: for t in triples {
        for i in 0..3 {
            for j in i + 1..3 {
                if vars[i] == vars[j] && t[i] != t[j] {
                    continue 'next;
                }
            }
        }
        out.tuples.insert(keep.iter().map(|&i| t[i]).collect());
    }
    out
}

pub fn const_matches(v: &Value, c: &Constant, dict: &Dictionary) -> bool {
    match (v, c) {
        (Value::Int(a), Constant::Int(b)) => a == b,
        (Value::Id(a), Constant::Int(b)) => *b >= 0 && *a == *b as u64,
        (Value::Str(r), Constant::Str(s)) => dict.lookup(s) == Some(*r),
        _ => false,
    }
}

fn select(rel: &Relation, filters: &[(String, Constant)], dict: &Dictionary) -> Relation {
    let cols: Vec<(usize, &Constant)> = filters
        .iter()
        .map(|(name, c)| (rel.col(name).expect("select column"), c))
        .collect();
    let tuples = rel
        .tuples
        .iter()
        .filter(|t| cols.iter().all(|(i, c)| const_matches(&t[*i], c, dict)))
        .cloned()
        .collect();
    Relation { schema: rel.schema.clone(), tuples }
}

fn check_deadline(deadline: Option<Instant>) -> Result<(), ExecError> {
    if let Some(d) = deadline {
        if Instant::now() > d {
            return Err(ExecError::Timeout);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Oracles
// ---------------------------------------------------------------------------

/// Exact transitive closure by naive iteration to fixpoint.
pub fn transitive_closure_oracle(base: &Relation) -> Relation {
    assert_eq!(base.schema.len(), 2, "closure oracle needs a binary relation");
    let mut tc: HashSet<(Value, Value)> =
        base.tuples.iter().map(|t| (t[0], t[1])).collect();
    loop {
        let mut added = false;
        let snapshot: Vec<(Value, Value)> = tc.iter().copied().collect();
        for &(a, b) in &snapshot {
            for t in &base.tuples {
                if t[0] == b && tc.insert((a, t[1])) {
                    added = true;
                }
            }
        }
        if !added {
            break;
        }
    }
    Relation::with_tuples(base.schema.clone(), tc.into_iter().map(|(a, b)| vec![a, b]))
}

/// Paths restricted to start (forward) or end (reverse) at seed nodes, plus
/// the identity pairs over the seed.
pub fn seeded_closure_oracle(
    base: &Relation,
    seed: &BTreeSet<Value>,
    dir: crate::graph::Direction,
) -> Relation {
    let tc = transitive_closure_oracle(base);
    let mut out = Relation::new(base.schema.clone());
    for t in &tc.tuples {
        let anchor = match dir {
            crate::graph::Direction::Forward => t[0],
            crate::graph::Direction::Reverse => t[1],
        };
        if seed.contains(&anchor) {
            out.tuples.insert(t.clone());
        }
    }
    for &s in seed {
        out.tuples.insert(vec![s, s]);
    }
    out
}

/// Naive bottom-up evaluation of a program, stratified by the closure
/// marker: predicates evaluate in dependency order and closure atoms read
/// the exact transitive closure of their base predicate.
pub fn datalog_oracle(p: &Program, g: &PropertyGraph) -> Relation {
    let rels = evaluate_all_predicates(p, g);
    rels[&p.answer].clone()
}

/// Evaluates a conjunctive sub-query against a program's predicates by the
/// same naive semantics, projecting to the sub-query head.
pub fn subquery_oracle(q: &SubQuery, p: &Program, g: &PropertyGraph) -> Relation {
    let rels = evaluate_all_predicates(p, g);
    let mut tc_cache: BTreeMap<String, Relation> = BTreeMap::new();
    let rel = eval_conjunction(&q.body, &q.filters, p, g, &rels, &mut tc_cache);
    rel.project_names(&q.head)
}

fn evaluate_all_predicates(p: &Program, g: &PropertyGraph) -> BTreeMap<String, Relation> {
    let mut order: Vec<String> = Vec::new();
    let mut done: BTreeSet<String> = BTreeSet::new();
    fn visit(
        p: &Program,
        pred: &str,
        done: &mut BTreeSet<String>,
        order: &mut Vec<String>,
    ) {
        if done.contains(pred) {
            return;
        }
        done.insert(pred.to_string());
        for rule in p.rules_for(pred) {
            for atom in &rule.body {
                if !atom.is_extensional() {
                    visit(p, &atom.predicate, done, order);
                }
            }
        }
        order.push(pred.to_string());
    }
    for pred in p.by_predicate.keys() {
        visit(p, pred, &mut done, &mut order);
    }

    let mut rels: BTreeMap<String, Relation> = BTreeMap::new();
    let mut tc_cache: BTreeMap<String, Relation> = BTreeMap::new();
    for pred in order {
        let rules = p.rules_for(&pred);
        let arity = rules[0].head.terms.len();
        let schema: Vec<String> = (0..arity).map(|i| format!("c{i}")).collect();
        let mut acc = Relation::new(schema.clone());
        for rule in rules {
            let rel = eval_rule(rule, p, g, &rels, &mut tc_cache);
            acc.tuples.extend(rel.tuples);
        }
        rels.insert(pred, acc);
    }
    rels
}

fn eval_rule(
    rule: &Rule,
    p: &Program,
    g: &PropertyGraph,
    rels: &BTreeMap<String, Relation>,
    tc_cache: &mut BTreeMap<String, Relation>,
) -> Relation {
    let joined = eval_conjunction(&rule.body, &rule.filters, p, g, rels, tc_cache);
    // Project to the head terms, positionally.
    let cols: Vec<(String, String)> = rule
        .head
        .terms
        .iter()
        .enumerate()
        .map(|(i, t)| match t {
            Term::Var(v) => (v.clone(), format!("c{i}")),
            Term::Const(_) => unreachable!("constants rejected in rule heads"),
        })
        .collect();
    joined.project(&cols)
}

fn eval_conjunction(
    body: &[Atom],
    filters: &[crate::ir::Filter],
    p: &Program,
    g: &PropertyGraph,
    rels: &BTreeMap<String, Relation>,
    tc_cache: &mut BTreeMap<String, Relation>,
) -> Relation {
    let mut acc: Option<Relation> = None;
    for atom in body {
        let rel = atom_relation(atom, p, g, rels, tc_cache);
        acc = Some(match acc {
            None => rel,
            Some(a) => {
                let shared: Vec<(String, String)> = a
                    .schema
                    .iter()
                    .filter(|c| rel.schema.contains(c))
                    .map(|c| (c.clone(), c.clone()))
                    .collect();
                a.join(&rel, &shared)
            }
        });
    }
    let mut out = acc.expect("non-empty body");
    let preds: Vec<(String, Constant)> =
        filters.iter().map(|f| (f.var.clone(), f.value.clone())).collect();
    if !preds.is_empty() {
        out = select(&out, &preds, &g.dict);
    }
    out
}

fn atom_relation(
    atom: &Atom,
    p: &Program,
    g: &PropertyGraph,
    rels: &BTreeMap<String, Relation>,
    tc_cache: &mut BTreeMap<String, Relation>,
) -> Relation {
    let base: Relation = if atom.predicate == EDGE_PRED {
        Relation::with_tuples(
            vec!["c0".into(), "c1".into(), "c2".into()],
            g.edges.iter().map(|&(s, e, t)| vec![Value::Id(s), Value::Id(e), Value::Id(t)]),
        )
    } else if atom.predicate == PROP_PRED {
        Relation::with_tuples(
            vec!["c0".into(), "c1".into(), "c2".into()],
            g.props.iter().map(|&(o, k, v)| vec![Value::Id(o), Value::Str(k), v]),
        )
    } else if atom.closure {
        tc_cache
            .entry(atom.predicate.clone())
            .or_insert_with(|| transitive_closure_oracle(&rels[&atom.predicate]))
            .clone()
    } else {
        rels[&atom.predicate].clone()
    };
    let _ = p;
    bind_terms(&base, atom, &g.dict)
}

/// Binds a positional relation to an atom's terms: constants filter and drop
/// their column, repeated variables filter for equality and collapse.
fn bind_terms(base: &Relation, atom: &Atom, dict: &Dictionary) -> Relation {
    let mut schema: Vec<String> = Vec::new();
    let mut keep: Vec<usize> = Vec::new();
    for (i, t) in atom.terms.iter().enumerate() {
        if let Term::Var(v) = t {
            if !schema.contains(v) {
                schema.push(v.clone());
                keep.push(i);
            }
        }
    }
    let mut out = Relation::new(schema);
    'next: for row in &base.tuples {
        for (i, t) in atom.terms.iter().enumerate() {
            match t {
                Term::Const(c) => {
                    if !const_matches(&row[i], c, dict) {
                        continue 'next;
                    }
                }
                Term::Var(v) => {
                    for (j, u) in atom.terms.iter().enumerate().take(i) {
                        if let Term::Var(w) = u {
                            if w == v && row[i] != row[j] {
                                continue 'next;
                            }
                        }
                    }
                }
            }
        }
        out.tuples.insert(keep.iter().map(|&i| row[i]).collect());
    }
    out
}
