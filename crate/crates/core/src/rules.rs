//! Enumeration rules.
//!
//! Each rule takes an abstraction's conjunctive query and constructs zero or
//! more plan fragments for it:
//!
//! - leaf rules compile scans (an `E` atom joined with its constant-valued
//!   `P` atoms), unfold single-rule predicates, and union multi-rule ones;
//! - the closure rule builds the unseeded fixpoint over a closure atom;
//! - the join rule emits one plan per connected-complement pair of the
//!   body's join graph, with no commuted duplicates;
//! - the seeding rule splits a closure-bearing query into a seeding query
//!   and one seeded fixpoint per closure, stacking interior closures in
//!   ascending cardinality order and seeding exterior closures from the
//!   final stacking buffer.
//!
//! Seeded fixpoints inject identity tuples over their seed, so every tuple
//! of the seeding relation joins with at least one closure pair.

use std::collections::{BTreeMap, BTreeSet};

use crate::cost::CostModel;
use crate::graph::{Catalog, Direction};
use crate::ir::{
    classify_closures, join_graph, Atom, Constant, Filter, JoinGraph, Program, Rule, SubQuery,
    Term,
};
use crate::plan::{OpId, OpKind, PlanGraph};

/// Which enumeration rules are enabled. The leaf, union and unseeded-closure
/// rules are always on so every query has at least one plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleSet {
    pub join: bool,
    pub seed: bool,
    /// Off restricts the seeding rule to exterior-only partitions.
    pub seed_interior: bool,
    pub seed_stacking: bool,
}

impl RuleSet {
    pub fn unoptimized() -> Self {
        RuleSet { join: true, seed: false, seed_interior: false, seed_stacking: false }
    }

    /// Exterior-only seeding, no interior seeding or stacking.
    pub fn waveguide() -> Self {
        RuleSet { join: true, seed: true, seed_interior: false, seed_stacking: false }
    }

    pub fn optimized() -> Self {
        RuleSet { join: true, seed: true, seed_interior: true, seed_stacking: true }
    }

    pub fn set_config(&mut self, key: &str, value: &str) -> Result<(), String> {
        let on = match value {
            "on" | "true" | "1" => true,
            "off" | "false" | "0" => false,
            other => return Err(format!("`{other}` is not on/off")),
        };
        let key = key.strip_prefix("rules.").unwrap_or(key);
        match key {
            "join" => self.join = on,
            "seed" => {
                self.seed = on;
                if on {
                    self.seed_interior = true;
                    self.seed_stacking = true;
                }
            }
            "seed.interior" => self.seed_interior = on,
            "seed.stacking" => self.seed_stacking = on,
            other => return Err(format!("unknown rule `{other}`")),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RuleName {
    Leaf,
    Union,
    Closure,
    Join,
    Seed,
}

impl RuleName {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleName::Leaf => "leaf",
            RuleName::Union => "union",
            RuleName::Closure => "closure",
            RuleName::Join => "join",
            RuleName::Seed => "seed",
        }
    }
}

pub struct EnumContext<'a> {
    pub program: &'a Program,
    pub catalog: &'a Catalog,
    pub cost: &'a CostModel,
    pub rules: RuleSet,
}

/// Applies every enabled rule to a sub-query, in a fixed order.
pub fn apply_rules(q: &SubQuery, ctx: &EnumContext) -> Vec<(RuleName, PlanGraph)> {
    let mut out = Vec::new();
    if let Some(f) = try_scan_fragment(q) {
        out.push((RuleName::Leaf, f));
    } else if q.body.len() == 1 {
        let atom = &q.body[0];
        if atom.closure {
            if let Some(f) = apply_closure_rule(q) {
                out.push((RuleName::Closure, f));
            }
        } else if !atom.is_extensional() {
            let defs = ctx.program.rules_for(&atom.predicate);
            match defs.len() {
                0 => {}
                1 => {
                    if let Some(f) = unfold_fragment(q, atom, defs[0]) {
                        out.push((RuleName::Leaf, f));
                    }
                }
                _ => {
                    if let Some(f) = union_fragment(q, atom, &defs) {
                        out.push((RuleName::Union, f));
                    }
                }
            }
        }
    }
    let scannable = out.iter().any(|(r, _)| *r == RuleName::Leaf) && q.body.len() >= 2;
    if ctx.rules.join && q.body.len() >= 2 && !scannable {
        for p in apply_join_rule(q) {
            out.push((RuleName::Join, p));
        }
    }
    if ctx.rules.seed && q.body.iter().any(|a| a.closure) {
        if let Some(p) = apply_seeding_rule(q, ctx) {
            out.push((RuleName::Seed, p));
        }
    }
    out
}

fn fresh_var(base: &str, used: &mut BTreeSet<String>) -> String {
    let mut i = 1;
    loop {
        let cand = format!("{base}#{i}");
        if used.insert(cand.clone()) {
            return cand;
        }
        i += 1;
    }
}

fn all_vars(q: &SubQuery) -> BTreeSet<String> {
    let mut used = q.body_vars();
    used.extend(q.head.iter().cloned());
    used.extend(q.filters.iter().map(|f| f.var.clone()));
    used
}

// ---------------------------------------------------------------------------
// Leaf rules
// ---------------------------------------------------------------------------

/// Compiles a body made of extensional atoms in the scan pattern (at most
/// one `E` atom plus property atoms hanging off it) straight to scans,
/// selections and joins.
fn try_scan_fragment(q: &SubQuery) -> Option<PlanGraph> {
    if q.body.is_empty() || !q.body.iter().all(|a| a.is_extensional() && !a.closure) {
        return None;
    }
    let edge_count = q.body.iter().filter(|a| a.predicate == crate::ir::EDGE_PRED).count();
    if edge_count > 1 || (edge_count == 0 && q.body.len() > 1) {
        return None;
    }
    let mut ordered: Vec<&Atom> = q.body.iter().filter(|a| a.predicate == "E").collect();
    ordered.extend(q.body.iter().filter(|a| a.predicate == "P"));

    let mut p = PlanGraph::new();
    let mut used = all_vars(q);
    let mut current: Option<(OpId, BTreeSet<String>)> = None;
    for atom in ordered {
        let mut filters: Vec<(String, Constant)> = Vec::new();
        let mut names: Vec<String> = Vec::new();
        for t in &atom.terms {
            match t {
                Term::Var(v) => names.push(v.clone()),
                Term::Const(c) => {
                    let name = fresh_var("c", &mut used);
                    filters.push((name.clone(), c.clone()));
                    names.push(name);
                }
            }
        }
        let vars: [String; 3] = [names[0].clone(), names[1].clone(), names[2].clone()];
        let scan = if atom.predicate == crate::ir::EDGE_PRED {
            p.add(OpKind::ScanE { vars })
        } else {
            p.add(OpKind::ScanP { vars })
        };
        let top =
            if filters.is_empty() { scan } else { p.add(OpKind::Select { filters, child: scan }) };
        let schema: BTreeSet<String> = names.into_iter().collect();
        current = Some(match current {
            None => (top, schema),
            Some((acc, acc_schema)) => {
                let shared: Vec<(String, String)> = acc_schema
                    .intersection(&schema)
                    .map(|v| (v.clone(), v.clone()))
                    .collect();
                if shared.is_empty() {
                    return None;
                }
                let j = p.add(OpKind::Join { preds: shared, left: acc, right: top });
                (j, acc_schema.union(&schema).cloned().collect())
            }
        });
    }
    let (mut top, schema) = current?;
    if !q.head.iter().all(|h| schema.contains(h)) {
        return None;
    }
    if !q.filters.is_empty() {
        let filters = q.filters.iter().map(|f| (f.var.clone(), f.value.clone())).collect();
        top = p.add(OpKind::Select { filters, child: top });
    }
    let cols = q.head.iter().map(|h| (h.clone(), h.clone())).collect();
    let root = p.add(OpKind::Project { cols, child: top });
    p.root = root;
    Some(p)
}

/// Instantiates a rule body for a call atom: head variables map to the
/// atom's terms (constants become filters on fresh variables) and all other
/// body variables are freshened.
fn instantiate_rule(atom: &Atom, rule: &Rule, used: &mut BTreeSet<String>) -> SubQuery {
    let mut map: BTreeMap<String, Term> = BTreeMap::new();
    let mut filters: Vec<Filter> = Vec::new();
    for (hv, term) in rule.head.terms.iter().zip(atom.terms.iter()) {
        let hv = hv.as_var().expect("rule heads contain only variables");
        match term {
            Term::Var(v) => {
                map.insert(hv.to_string(), Term::Var(v.clone()));
            }
            Term::Const(c) => {
                let v = fresh_var(hv, used);
                filters.push(Filter { var: v.clone(), value: c.clone() });
                map.insert(hv.to_string(), Term::Var(v));
            }
        }
    }
    let mut rename = |v: &str, map: &mut BTreeMap<String, Term>| -> Term {
        if let Some(t) = map.get(v) {
            return t.clone();
        }
        let t = Term::Var(fresh_var(v, used));
        map.insert(v.to_string(), t.clone());
        t
    };
    let body: Vec<Atom> = rule
        .body
        .iter()
        .map(|a| Atom {
            predicate: a.predicate.clone(),
            closure: a.closure,
            terms: a
                .terms
                .iter()
                .map(|t| match t {
                    Term::Var(v) => rename(v, &mut map),
                    Term::Const(c) => Term::Const(c.clone()),
                })
                .collect(),
        })
        .collect();
    for f in &rule.filters {
        let var = match rename(&f.var, &mut map) {
            Term::Var(v) => v,
            Term::Const(_) => unreachable!(),
        };
        filters.push(Filter { var, value: f.value.clone() });
    }
    let head: Vec<String> = atom.vars().map(|v| v.to_string()).collect();
    let mut q = SubQuery::new(head, body, filters);
    // Filter variables introduced for constant call terms must stay in the
    // head's namespace; they are already part of the body.
    q.head.sort();
    q
}

/// Single-rule predicate: inline the definition when it is a plain scan,
/// otherwise hand the unfolded body back as a new sub-problem.
fn unfold_fragment(q: &SubQuery, atom: &Atom, rule: &Rule) -> Option<PlanGraph> {
    let mut used = all_vars(q);
    let mut unfolded = instantiate_rule(atom, rule, &mut used);
    unfolded.filters.extend(q.filters.iter().cloned());
    let direct = SubQuery::new(q.head.clone(), unfolded.body.clone(), unfolded.filters.clone());
    if let Some(f) = try_scan_fragment(&direct) {
        return Some(f);
    }
    let mut p = PlanGraph::new();
    let abs = p.add_abstraction(unfolded);
    let cols = q.head.iter().map(|h| (h.clone(), h.clone())).collect();
    let root = p.add(OpKind::Project { cols, child: abs });
    p.root = root;
    Some(p)
}

/// Multi-rule predicate: union over one abstraction per defining rule.
fn union_fragment(q: &SubQuery, atom: &Atom, defs: &[&Rule]) -> Option<PlanGraph> {
    let mut p = PlanGraph::new();
    let mut children = Vec::new();
    for rule in defs {
        let mut used = all_vars(q);
        let branch = instantiate_rule(atom, rule, &mut used);
        children.push(p.add_abstraction(branch));
    }
    let mut top = p.add(OpKind::Union { children });
    if !q.filters.is_empty() {
        let filters = q.filters.iter().map(|f| (f.var.clone(), f.value.clone())).collect();
        top = p.add(OpKind::Select { filters, child: top });
    }
    let cols = q.head.iter().map(|h| (h.clone(), h.clone())).collect();
    let root = p.add(OpKind::Project { cols, child: top });
    p.root = root;
    Some(p)
}

// ---------------------------------------------------------------------------
// Unseeded closure rule
// ---------------------------------------------------------------------------

/// Fixpoint plan for a single closure atom: buffer `b` accumulates
/// `base ∪ (b ⋈ base)` behind a dedup until nothing new arrives.
pub fn apply_closure_rule(q: &SubQuery) -> Option<PlanGraph> {
    if q.body.len() != 1 || !q.body[0].closure {
        return None;
    }
    let atom = &q.body[0];
    let vars: Vec<String> = atom.vars().map(|v| v.to_string()).collect();
    if vars.len() != 2 || vars[0] == vars[1] {
        return None;
    }
    let (u, v) = (vars[0].clone(), vars[1].clone());
    let mut used = all_vars(q);
    let m = fresh_var(&v, &mut used);

    let base = SubQuery::new(
        vec![u.clone(), v.clone()],
        vec![Atom { predicate: atom.predicate.clone(), closure: false, terms: atom.terms.clone() }],
        vec![],
    );
    let step_base = SubQuery::new(
        vec![m.clone(), v.clone()],
        vec![Atom {
            predicate: atom.predicate.clone(),
            closure: false,
            terms: vec![Term::Var(m.clone()), Term::Var(v.clone())],
        }],
        vec![],
    );

    let mut p = PlanGraph::new();
    let b = p.fresh_buffer();
    let abs_base = p.add_abstraction(base);
    let read = p.add(OpKind::BufferRead { buffer: b });
    let renamed = p.add(OpKind::Rename { map: vec![(v.clone(), m.clone())], child: read });
    let abs_step = p.add_abstraction(step_base);
    let join = p.add(OpKind::Join {
        preds: vec![(m.clone(), m.clone())],
        left: renamed,
        right: abs_step,
    });
    let step = p.add(OpKind::Project {
        cols: vec![(u.clone(), u.clone()), (v.clone(), v.clone())],
        child: join,
    });
    let union = p.add(OpKind::Union { children: vec![abs_base, step] });
    let dedup = p.add(OpKind::Dedup { child: union });
    let _write = p.add(OpKind::BufferWrite { buffer: b, child: dedup });
    let mut top = p.add(OpKind::BufferRead { buffer: b });
    if !q.filters.is_empty() {
        let filters = q.filters.iter().map(|f| (f.var.clone(), f.value.clone())).collect();
        top = p.add(OpKind::Select { filters, child: top });
    }
    let cols = q.head.iter().map(|h| (h.clone(), h.clone())).collect();
    let root = p.add(OpKind::Project { cols, child: top });
    p.root = root;
    Some(p)
}

// ---------------------------------------------------------------------------
// Join rule
// ---------------------------------------------------------------------------

/// All connected-complement pairs of the join graph, one orientation per
/// symmetric pair (the side containing atom 0), in ascending mask order.
pub fn ccp_pairs(jg: &JoinGraph) -> Vec<(u64, u64)> {
    let n = jg.n;
    assert!(n <= 16, "connected-pair enumeration limited to 16 atoms");
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    let full = (1u64 << n) - 1;
    for mask in 1..full {
        if mask & 1 == 0 {
            continue;
        }
        let comp = full & !mask;
        if jg.connected_subset(mask)
            && jg.connected_subset(comp)
            && !jg.cut_vars(mask, comp).is_empty()
        {
            out.push((mask, comp));
        }
    }
    out
}

fn mask_atoms(q: &SubQuery, mask: u64) -> Vec<Atom> {
    q.body
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, a)| a.clone())
        .collect()
}

fn sub_query_for_side(q: &SubQuery, side: u64, cut: &BTreeSet<String>, take_filters: bool) -> SubQuery {
    let atoms = mask_atoms(q, side);
    let vars: BTreeSet<String> =
        atoms.iter().flat_map(|a| a.vars().map(|v| v.to_string())).collect();
    let head: Vec<String> = vars
        .iter()
        .filter(|v| cut.contains(*v) || q.head.contains(*v))
        .cloned()
        .collect();
    let filters = if take_filters {
        q.filters.iter().filter(|f| vars.contains(&f.var)).cloned().collect()
    } else {
        Vec::new()
    };
    SubQuery::new(head, atoms, filters)
}

/// One plan per connected-complement pair: a join of two abstractions on the
/// cut variables, projected back to the query head.
pub fn apply_join_rule(q: &SubQuery) -> Vec<PlanGraph> {
    if q.body.len() < 2 {
        return Vec::new();
    }
    let jg = join_graph(&q.body);
    if !jg.is_connected() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (t_mask, u_mask) in ccp_pairs(&jg) {
        let cut = jg.cut_vars(t_mask, u_mask);
        let qt = sub_query_for_side(q, t_mask, &cut, true);
        // Filters whose variable appears on both sides apply once, on the
        // first side.
        let qu = {
            let mut qu = sub_query_for_side(q, u_mask, &cut, true);
            qu.filters.retain(|f| !qt.filters.contains(f));
            qu
        };
        let mut p = PlanGraph::new();
        let left = p.add_abstraction(qt);
        let right = p.add_abstraction(qu);
        let preds = cut.iter().map(|v| (v.clone(), v.clone())).collect();
        let join = p.add(OpKind::Join { preds, left, right });
        let cols = q.head.iter().map(|h| (h.clone(), h.clone())).collect();
        let root = p.add(OpKind::Project { cols, child: join });
        p.root = root;
        out.push(p);
    }
    out
}

// ---------------------------------------------------------------------------
// Seeding rule
// ---------------------------------------------------------------------------

/// How one closure atom participates in a seeded plan.
#[derive(Debug, Clone)]
pub struct SeededClosure {
    pub body_index: usize,
    /// 0 frees the source endpoint, 1 the target.
    pub freed_pos: usize,
    /// Original freed variable: the closure relation's far column.
    pub far_var: String,
    /// Fresh variable standing in for the freed endpoint inside the seeding
    /// query: the closure relation's seed column.
    pub seed_var: String,
    pub base_predicate: String,
    pub interior: bool,
}

impl SeededClosure {
    pub fn direction(&self) -> Direction {
        expansion_direction(self.freed_pos)
    }
}

/// A seed bound at the base's target position expands forward (paths start
/// at seed nodes); bound at the source position it expands in reverse.
pub fn expansion_direction(freed_pos: usize) -> Direction {
    if freed_pos == 1 {
        Direction::Forward
    } else {
        Direction::Reverse
    }
}

/// Interior closures in ascending estimated-closure-cardinality order, ties
/// broken by the atom's serialized key.
pub fn order_interior_closures(
    interior: &[usize],
    body: &[Atom],
    ctx: &EnumContext,
) -> Vec<usize> {
    let mut keyed: Vec<(f64, String, usize)> = interior
        .iter()
        .map(|&i| {
            let mut base = body[i].clone();
            base.closure = false;
            let est = ctx.cost.estimate_closure(ctx.catalog, ctx.program, &base);
            (est, body[i].sort_key(), i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

/// Picks which endpoint of an interior closure to free: the source if the
/// seeding query stays connected, else the target, else the closure cannot
/// be seeded. The connectivity test sees non-recursive atoms, exterior
/// bases, already-freed bases, and the remaining interior closures with the
/// endpoint at `assumed_pos` freed (their own choice is still open).
pub fn choose_free_variable(
    body: &[Atom],
    closure_idx: usize,
    non_recursive: &[usize],
    exterior: &[usize],
    processed: &BTreeMap<usize, usize>,
    remaining: &[usize],
) -> Option<usize> {
    choose_free_variable_assuming(body, closure_idx, non_recursive, exterior, processed, remaining, 0)
}

fn choose_free_variable_assuming(
    body: &[Atom],
    closure_idx: usize,
    non_recursive: &[usize],
    exterior: &[usize],
    processed: &BTreeMap<usize, usize>,
    remaining: &[usize],
    assumed_pos: usize,
) -> Option<usize> {
    let used: BTreeSet<String> =
        body.iter().flat_map(|a| a.vars().map(|v| v.to_string())).collect();
    for candidate in [0usize, 1usize] {
        let mut used = used.clone();
        let mut test_atoms: Vec<Atom> = Vec::new();
        for &i in non_recursive {
            test_atoms.push(body[i].clone());
        }
        for &i in exterior {
            let mut a = body[i].clone();
            a.closure = false;
            test_atoms.push(a);
        }
        for (&i, &pos) in processed {
            test_atoms.push(freed_base(&body[i], pos, &mut used));
        }
        test_atoms.push(freed_base(&body[closure_idx], candidate, &mut used));
        for &i in remaining {
            test_atoms.push(freed_base(&body[i], assumed_pos, &mut used));
        }
        if join_graph(&test_atoms).is_connected() {
            return Some(candidate);
        }
    }
    None
}

fn freed_base(atom: &Atom, pos: usize, used: &mut BTreeSet<String>) -> Atom {
    let mut a = atom.clone();
    a.closure = false;
    let old = a.terms[pos].as_var().expect("closure endpoints are variables").to_string();
    a.terms[pos] = Term::Var(fresh_var(&old, used));
    a
}

/// Builds the seeding query: non-recursive atoms plus every closure's base
/// with its freed endpoint renamed fresh; the head keeps the original head
/// variables still present, any freed variable another atom retained, and
/// all the fresh seed variables. Returns the closure bookkeeping alongside.
pub fn build_seeding_query(
    q: &SubQuery,
    ctx: &EnumContext,
) -> Option<(SubQuery, Vec<SeededClosure>)> {
    if !q.body.iter().any(|a| a.closure) {
        return None;
    }
    let jg = join_graph(&q.body);
    if !jg.is_connected() {
        return None;
    }
    let part = classify_closures(&q.body, &q.filters).ok()?;
    if !ctx.rules.seed_interior && !part.interior.is_empty() {
        return None;
    }
    let interior = order_interior_closures(&part.interior, &q.body, ctx);

    // The per-closure test must assume something about the closures not yet
    // processed; if the default source-freed assumption dead-ends, retry
    // under the target-freed assumption before declaring the query
    // unseedable.
    let mut choices: BTreeMap<usize, usize> = BTreeMap::new();
    'assumption: for assumed_pos in [0usize, 1usize] {
        choices.clear();
        for (k, &ci) in interior.iter().enumerate() {
            match choose_free_variable_assuming(
                &q.body,
                ci,
                &part.non_recursive,
                &part.exterior,
                &choices,
                &interior[k + 1..],
                assumed_pos,
            ) {
                Some(pos) => {
                    choices.insert(ci, pos);
                }
                None if assumed_pos == 0 => continue 'assumption,
                None => return None,
            }
        }
        break;
    }
    if choices.len() != interior.len() {
        return None;
    }
    let mut closures: Vec<SeededClosure> = Vec::new();
    let mut used = all_vars(q);
    let occurs_elsewhere = |v: &str, except: usize| -> bool {
        q.body
            .iter()
            .enumerate()
            .any(|(j, other)| j != except && other.vars().any(|w| w == v))
            || q.filters.iter().any(|f| f.var == v)
    };
    for &ci in interior.iter() {
        let pos = choices[&ci];
        let far = q.body[ci].terms[pos].as_var().unwrap().to_string();
        let seed_var = fresh_var(&far, &mut used);
        closures.push(SeededClosure {
            body_index: ci,
            freed_pos: pos,
            far_var: far,
            seed_var,
            base_predicate: q.body[ci].predicate.clone(),
            interior: true,
        });
    }
    for &xi in &part.exterior {
        let vars: Vec<&str> = q.body[xi].vars().collect();
        let pos = if occurs_elsewhere(vars[0], xi) { 1 } else { 0 };
        let far = vars[pos].to_string();
        let seed_var = fresh_var(&far, &mut used);
        closures.push(SeededClosure {
            body_index: xi,
            freed_pos: pos,
            far_var: far,
            seed_var,
            base_predicate: q.body[xi].predicate.clone(),
            interior: false,
        });
    }

    let mut qs_body: Vec<Atom> = part.non_recursive.iter().map(|&i| q.body[i].clone()).collect();
    for c in &closures {
        let mut base = q.body[c.body_index].clone();
        base.closure = false;
        base.terms[c.freed_pos] = Term::Var(c.seed_var.clone());
        qs_body.push(base);
    }
    if !join_graph(&qs_body).is_connected() {
        return None;
    }
    let qs_vars: BTreeSet<String> =
        qs_body.iter().flat_map(|a| a.vars().map(|v| v.to_string())).collect();
    let far_vars: BTreeSet<&String> = closures.iter().map(|c| &c.far_var).collect();
    let mut head: Vec<String> = qs_vars
        .iter()
        .filter(|v| q.head.contains(*v) || far_vars.contains(*v))
        .cloned()
        .collect();
    head.extend(closures.iter().map(|c| c.seed_var.clone()));
    let filters: Vec<Filter> =
        q.filters.iter().filter(|f| qs_vars.contains(&f.var)).cloned().collect();
    Some((SubQuery::new(head, qs_body, filters), closures))
}

/// The seeding rule: at most one plan per query. The seeding query fills a
/// buffer; interior closures attach in stacking order, each one seeded from
/// the preceding stacking buffer; exterior closures seed from the final
/// stacking buffer; the reconnection joins equate seed columns with the
/// fresh variables and far columns with their consuming variables.
pub fn apply_seeding_rule(q: &SubQuery, ctx: &EnumContext) -> Option<PlanGraph> {
    let (qs, closures) = build_seeding_query(q, ctx)?;
    let mut used = all_vars(q);
    for c in &closures {
        used.insert(c.seed_var.clone());
    }

    let mut p = PlanGraph::new();
    p.used_seeding = true;
    let mut abstractions: Vec<OpId> = Vec::new();

    let abs_qs = p.add(OpKind::Abstraction { query: qs.clone() });
    let b1 = p.fresh_buffer();
    p.add(OpKind::BufferWrite { buffer: b1, child: abs_qs });

    enum Chain {
        Buf(crate::plan::BufId),
        Op(OpId),
    }
    let mut chain = Chain::Buf(b1);
    let mut chain_schema: BTreeSet<String> = qs.head.iter().cloned().collect();
    let mut exterior_seed_buf = b1;

    let n = closures.len();
    for (idx, c) in closures.iter().enumerate() {
        let remaining = n - idx - 1;
        let seed_buf = if c.interior {
            if ctx.rules.seed_stacking {
                match chain {
                    Chain::Buf(b) => b,
                    Chain::Op(_) => b1,
                }
            } else {
                b1
            }
        } else {
            exterior_seed_buf
        };

        // Seeded fixpoint group over its own buffer.
        let bf = p.fresh_buffer();
        let seed_read = p.add(OpKind::BufferRead { buffer: seed_buf });
        let identity_cols = match c.direction() {
            Direction::Forward => vec![
                (c.seed_var.clone(), c.seed_var.clone()),
                (c.seed_var.clone(), c.far_var.clone()),
            ],
            Direction::Reverse => vec![
                (c.seed_var.clone(), c.far_var.clone()),
                (c.seed_var.clone(), c.seed_var.clone()),
            ],
        };
        let identity = p.add(OpKind::Project { cols: identity_cols, child: seed_read });
        let identity = p.add(OpKind::Dedup { child: identity });

        let mid = fresh_var(&c.far_var, &mut used);
        let step_query = match c.direction() {
            Direction::Forward => SubQuery::new(
                vec![mid.clone(), c.far_var.clone()],
                vec![Atom {
                    predicate: c.base_predicate.clone(),
                    closure: false,
                    terms: vec![Term::Var(mid.clone()), Term::Var(c.far_var.clone())],
                }],
                vec![],
            ),
            Direction::Reverse => SubQuery::new(
                vec![c.far_var.clone(), mid.clone()],
                vec![Atom {
                    predicate: c.base_predicate.clone(),
                    closure: false,
                    terms: vec![Term::Var(c.far_var.clone()), Term::Var(mid.clone())],
                }],
                vec![],
            ),
        };
        let step_abs = p.add(OpKind::Abstraction { query: step_query });
        abstractions.push(step_abs);
        let loop_read = p.add(OpKind::BufferRead { buffer: bf });
        let loop_renamed = p.add(OpKind::Rename {
            map: vec![(c.far_var.clone(), mid.clone())],
            child: loop_read,
        });
        let expansion = p.add(OpKind::Join {
            preds: vec![(mid.clone(), mid.clone())],
            left: loop_renamed,
            right: step_abs,
        });
        let expansion_cols = match c.direction() {
            Direction::Forward => vec![
                (c.seed_var.clone(), c.seed_var.clone()),
                (c.far_var.clone(), c.far_var.clone()),
            ],
            Direction::Reverse => vec![
                (c.far_var.clone(), c.far_var.clone()),
                (c.seed_var.clone(), c.seed_var.clone()),
            ],
        };
        let expansion = p.add(OpKind::Project { cols: expansion_cols, child: expansion });
        let union = p.add(OpKind::Union { children: vec![identity, expansion] });
        let dedup = p.add(OpKind::Dedup { child: union });
        p.add(OpKind::BufferWrite { buffer: bf, child: dedup });

        // Reconnect with the chain.
        let mut closure_out = p.add(OpKind::BufferRead { buffer: bf });
        let far_filters: Vec<(String, Constant)> = q
            .filters
            .iter()
            .filter(|f| f.var == c.far_var && !chain_schema.contains(&c.far_var))
            .map(|f| (f.var.clone(), f.value.clone()))
            .collect();
        if !far_filters.is_empty() {
            closure_out = p.add(OpKind::Select { filters: far_filters, child: closure_out });
        }
        let chain_op = match chain {
            Chain::Buf(b) => p.add(OpKind::BufferRead { buffer: b }),
            Chain::Op(o) => o,
        };
        let mut preds = vec![(c.seed_var.clone(), c.seed_var.clone())];
        if chain_schema.contains(&c.far_var) {
            preds.push((c.far_var.clone(), c.far_var.clone()));
        }
        let join = p.add(OpKind::Join { preds, left: chain_op, right: closure_out });
        chain_schema.insert(c.far_var.clone());

        if remaining > 0 && c.interior && ctx.rules.seed_stacking {
            let bnext = p.fresh_buffer();
            p.add(OpKind::BufferWrite { buffer: bnext, child: join });
            chain = Chain::Buf(bnext);
            exterior_seed_buf = bnext;
        } else {
            chain = Chain::Op(join);
        }
    }

    let top = match chain {
        Chain::Op(o) => o,
        Chain::Buf(b) => p.add(OpKind::BufferRead { buffer: b }),
    };
    let cols = q.head.iter().map(|h| (h.clone(), h.clone())).collect();
    let root = p.add(OpKind::Project { cols, child: top });
    p.root = root;

    abstractions.reverse();
    abstractions.push(abs_qs);
    p.abstractions = abstractions;
    Some(p)
}
