//! Graph-structured logical query plans.
//!
//! A plan is a directed graph over eleven operator kinds. Buffers (written by
//! exactly one `BufferWrite`, read by any number of `BufferRead`s) are the
//! only mechanism for multi-consumer sharing and for the cyclic tuple flow
//! that drives fixpoint evaluation; every tuple-flow cycle must pass through
//! a `Dedup` so fixpoints terminate on cyclic data. `Abstraction` operators
//! embed unsolved sub-queries and are the unit of work during enumeration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use crate::ir::{Constant, SubQuery};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpId(pub u32);

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BufId(pub u32);

impl fmt::Display for BufId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    /// Reads the edge set `E` as `(src, edge, dst)` bound to the given names.
    ScanE { vars: [String; 3] },
    /// Reads the property set `P` as `(obj, key, value)`.
    ScanP { vars: [String; 3] },
    Join { preds: Vec<(String, String)>, left: OpId, right: OpId },
    /// Projection with aliasing: `(source column, output name)` pairs. A
    /// source may appear twice, which duplicates the column.
    Project { cols: Vec<(String, String)>, child: OpId },
    Rename { map: Vec<(String, String)>, child: OpId },
    Select { filters: Vec<(String, Constant)>, child: OpId },
    Union { children: Vec<OpId> },
    BufferWrite { buffer: BufId, child: OpId },
    BufferRead { buffer: BufId },
    Dedup { child: OpId },
    Abstraction { query: SubQuery },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::ScanE { .. } => "scan_e",
            OpKind::ScanP { .. } => "scan_p",
            OpKind::Join { .. } => "join",
            OpKind::Project { .. } => "project",
            OpKind::Rename { .. } => "rename",
            OpKind::Select { .. } => "select",
            OpKind::Union { .. } => "union",
            OpKind::BufferWrite { .. } => "buffer_write",
            OpKind::BufferRead { .. } => "buffer_read",
            OpKind::Dedup { .. } => "dedup",
            OpKind::Abstraction { .. } => "abstraction",
        }
    }

    pub fn children(&self) -> Vec<OpId> {
        match self {
            OpKind::Join { left, right, .. } => vec![*left, *right],
            OpKind::Project { child, .. }
            | OpKind::Rename { child, .. }
            | OpKind::Select { child, .. }
            | OpKind::BufferWrite { child, .. }
            | OpKind::Dedup { child } => vec![*child],
            OpKind::Union { children } => children.clone(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("operator {0} is not the top abstraction")]
    NotTopAbstraction(OpId),
    #[error("operator {0} is not an abstraction")]
    NotAnAbstraction(OpId),
    #[error("replacement plan still contains abstractions")]
    ReplacementHasAbstractions,
    #[error("schema mismatch: replacement provides {provided:?}, abstraction needs {needed:?}")]
    SchemaMismatch { provided: Vec<String>, needed: Vec<String> },
    #[error("plan is malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MissingWriter(BufId),
    MultipleWriters(BufId),
    NoReader(BufId),
    OperatorCycleWithoutBuffer,
    CycleWithoutDedup,
    Unreachable(OpId),
    EmptyJoinPredicates(OpId),
    EmptySelect(OpId),
    UnknownColumn { op: OpId, column: String },
    UnionSchemaMismatch(OpId),
    UnresolvableSchema(OpId),
    DuplicateColumns(OpId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingWriter(b) => write!(f, "buffer {b} has no writer"),
            Violation::MultipleWriters(b) => write!(f, "buffer {b} has multiple writers"),
            Violation::NoReader(b) => write!(f, "buffer {b} has no reader"),
            Violation::OperatorCycleWithoutBuffer => {
                write!(f, "direct operator cycle that avoids buffers")
            }
            Violation::CycleWithoutDedup => write!(f, "tuple-flow cycle without a dedup"),
            Violation::Unreachable(o) => write!(f, "operator {o} unreachable from root"),
            Violation::EmptyJoinPredicates(o) => write!(f, "join {o} has no join predicates"),
            Violation::EmptySelect(o) => write!(f, "select {o} has no filter predicates"),
            Violation::UnknownColumn { op, column } => {
                write!(f, "operator {op} references unknown column {column}")
            }
            Violation::UnionSchemaMismatch(o) => write!(f, "union {o} children schemas differ"),
            Violation::UnresolvableSchema(o) => write!(f, "operator {o} schema unresolvable"),
            Violation::DuplicateColumns(o) => write!(f, "operator {o} output has duplicate columns"),
        }
    }
}

/// Strongly connected components of the tuple-flow graph in evaluation
/// order. Components containing a buffer cycle are fixpoint groups.
#[derive(Debug, Clone)]
pub struct FlowGroups {
    pub groups: Vec<FlowGroup>,
}

#[derive(Debug, Clone)]
pub struct FlowGroup {
    pub ops: Vec<OpId>,
    pub fixpoint: bool,
}

impl FlowGroups {
    pub fn fixpoint_count(&self) -> usize {
        self.groups.iter().filter(|g| g.fixpoint).count()
    }
}

#[derive(Debug, Clone, Default)]
pub struct PlanGraph {
    pub ops: BTreeMap<OpId, OpKind>,
    pub root: OpId,
    /// Pending abstractions; the top (last) is processed next.
    pub abstractions: Vec<OpId>,
    pub used_seeding: bool,
    next_op: u32,
    next_buf: u32,
}

impl PlanGraph {
    pub fn new() -> Self {
        PlanGraph::default()
    }

    /// The initial plan: a single abstraction over a query.
    pub fn bare_abstraction(query: SubQuery) -> Self {
        let mut p = PlanGraph::new();
        let id = p.add(OpKind::Abstraction { query });
        p.root = id;
        p.abstractions.push(id);
        p
    }

    pub fn add(&mut self, kind: OpKind) -> OpId {
        let id = OpId(self.next_op);
        self.next_op += 1;
        self.ops.insert(id, kind);
        id
    }

    pub fn add_abstraction(&mut self, query: SubQuery) -> OpId {
        let id = self.add(OpKind::Abstraction { query });
        self.abstractions.push(id);
        id
    }

    pub fn fresh_buffer(&mut self) -> BufId {
        let id = BufId(self.next_buf);
        self.next_buf += 1;
        id
    }

    pub fn has_abstractions(&self) -> bool {
        !self.abstractions.is_empty()
    }

    pub fn op(&self, id: OpId) -> &OpKind {
        &self.ops[&id]
    }

    pub fn abstraction_query(&self, id: OpId) -> Option<&SubQuery> {
        match self.ops.get(&id) {
            Some(OpKind::Abstraction { query }) => Some(query),
            _ => None,
        }
    }

    fn buffer_writers(&self) -> BTreeMap<BufId, Vec<OpId>> {
        let mut w: BTreeMap<BufId, Vec<OpId>> = BTreeMap::new();
        for (&id, kind) in &self.ops {
            if let OpKind::BufferWrite { buffer, .. } = kind {
                w.entry(*buffer).or_default().push(id);
            }
        }
        w
    }

    fn buffer_readers(&self) -> BTreeMap<BufId, Vec<OpId>> {
        let mut r: BTreeMap<BufId, Vec<OpId>> = BTreeMap::new();
        for (&id, kind) in &self.ops {
            if let OpKind::BufferRead { buffer } = kind {
                r.entry(*buffer).or_default().push(id);
            }
        }
        r
    }

    /// Output schema per operator. Cycles resolve through the acyclic branch
    /// of the union feeding each buffer; anything left unresolved is a
    /// malformed plan.
    pub fn schemas(&self) -> Result<BTreeMap<OpId, Vec<String>>, PlanError> {
        let writers = self.buffer_writers();
        let mut memo: BTreeMap<OpId, Vec<String>> = BTreeMap::new();
        // Iterate to a fixpoint; each pass resolves what it can.
        loop {
            let before = memo.len();
            for &id in self.ops.keys() {
                if !memo.contains_key(&id) {
                    let mut visiting = BTreeSet::new();
                    let _ = self.try_schema(id, &writers, &mut memo, &mut visiting);
                }
            }
            if memo.len() == self.ops.len() {
                return Ok(memo);
            }
            if memo.len() == before {
                let missing = self.ops.keys().find(|id| !memo.contains_key(id)).unwrap();
                return Err(PlanError::Malformed(format!("schema unresolvable at {missing}")));
            }
        }
    }

    fn try_schema(
        &self,
        id: OpId,
        writers: &BTreeMap<BufId, Vec<OpId>>,
        memo: &mut BTreeMap<OpId, Vec<String>>,
        visiting: &mut BTreeSet<OpId>,
    ) -> Option<Vec<String>> {
        if let Some(s) = memo.get(&id) {
            return Some(s.clone());
        }
        if !visiting.insert(id) {
            return None;
        }
        let result = match &self.ops[&id] {
            OpKind::ScanE { vars } | OpKind::ScanP { vars } => {
                let mut s = Vec::new();
                for v in vars {
                    if !s.contains(v) {
                        s.push(v.clone());
                    }
                }
                Some(s)
            }
            OpKind::Abstraction { query } => Some(query.head.clone()),
            OpKind::Join { preds, left, right } => {
                let l = self.try_schema(*left, writers, memo, visiting)?;
                let r = self.try_schema(*right, writers, memo, visiting)?;
                let dropped: BTreeSet<&String> = preds.iter().map(|(_, rc)| rc).collect();
                let mut s = l;
                for c in &r {
                    if !dropped.contains(c) {
                        s.push(c.clone());
                    }
                }
                Some(s)
            }
            OpKind::Project { cols, child } => {
                self.try_schema(*child, writers, memo, visiting)?;
                Some(cols.iter().map(|(_, out)| out.clone()).collect())
            }
            OpKind::Rename { map, child } => {
                let c = self.try_schema(*child, writers, memo, visiting)?;
                Some(
                    c.iter()
                        .map(|col| {
                            map.iter()
                                .find(|(old, _)| old == col)
                                .map(|(_, new)| new.clone())
                                .unwrap_or_else(|| col.clone())
                        })
                        .collect(),
                )
            }
            OpKind::Select { child, .. }
            | OpKind::Dedup { child }
            | OpKind::BufferWrite { child, .. } => {
                self.try_schema(*child, writers, memo, visiting)
            }
            OpKind::Union { children } => {
                let mut found = None;
                for c in children {
                    if let Some(s) = self.try_schema(*c, writers, memo, visiting) {
                        found = Some(s);
                        break;
                    }
                }
                found
            }
            OpKind::BufferRead { buffer } => {
                let ws = writers.get(buffer)?;
                let w = *ws.first()?;
                match &self.ops[&w] {
                    OpKind::BufferWrite { child, .. } => {
                        self.try_schema(*child, writers, memo, visiting)
                    }
                    _ => None,
                }
            }
        };
        visiting.remove(&id);
        if let Some(s) = &result {
            memo.insert(id, s.clone());
        }
        result
    }

    /// Tuple-flow edges: child to parent, plus buffer write to every read.
    fn flow_edges(&self) -> Vec<(OpId, OpId)> {
        let readers = self.buffer_readers();
        let mut edges = Vec::new();
        for (&id, kind) in &self.ops {
            for c in kind.children() {
                edges.push((c, id));
            }
            if let OpKind::BufferWrite { buffer, .. } = kind {
                for &r in readers.get(buffer).map(|v| v.as_slice()).unwrap_or(&[]) {
                    edges.push((id, r));
                }
            }
        }
        edges
    }

    /// Checks every structural invariant and returns all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let writers = self.buffer_writers();
        let readers = self.buffer_readers();
        for (&b, w) in &writers {
            if w.len() > 1 {
                out.push(Violation::MultipleWriters(b));
            }
            if !readers.contains_key(&b) {
                out.push(Violation::NoReader(b));
            }
        }
        for &b in readers.keys() {
            if !writers.contains_key(&b) {
                out.push(Violation::MissingWriter(b));
            }
        }

        // Direct operator cycles (child edges only) must not exist.
        if has_cycle(self.ops.keys().copied(), |id| self.ops[&id].children()) {
            out.push(Violation::OperatorCycleWithoutBuffer);
        }

        // Every tuple-flow cycle passes through a dedup: dropping dedups
        // must leave the flow graph acyclic.
        let flow = self.flow_edges();
        let keep: BTreeSet<OpId> = self
            .ops
            .iter()
            .filter(|(_, k)| !matches!(k, OpKind::Dedup { .. }))
            .map(|(&id, _)| id)
            .collect();
        let filtered: BTreeMap<OpId, Vec<OpId>> = keep
            .iter()
            .map(|&id| {
                (
                    id,
                    flow.iter()
                        .filter(|(a, b)| *a == id && keep.contains(b))
                        .map(|(_, b)| *b)
                        .collect(),
                )
            })
            .collect();
        if has_cycle(keep.iter().copied(), |id| filtered[&id].clone()) {
            out.push(Violation::CycleWithoutDedup);
        }

        // Reachability from the root over child edges plus read-to-write.
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            if let Some(kind) = self.ops.get(&id) {
                stack.extend(kind.children());
                if let OpKind::BufferRead { buffer } = kind {
                    if let Some(ws) = writers.get(buffer) {
                        stack.extend(ws.iter().copied());
                    }
                }
            }
        }
        for &id in self.ops.keys() {
            if !seen.contains(&id) {
                out.push(Violation::Unreachable(id));
            }
        }

        // Local operator constraints and column references.
        let schemas = match self.schemas() {
            Ok(s) => s,
            Err(_) => {
                if let Some(&id) = self.ops.keys().next() {
                    out.push(Violation::UnresolvableSchema(id));
                }
                return out;
            }
        };
        for (&id, kind) in &self.ops {
            let schema = &schemas[&id];
            let mut uniq: BTreeSet<&String> = BTreeSet::new();
            if !schema.iter().all(|c| uniq.insert(c)) {
                out.push(Violation::DuplicateColumns(id));
            }
            match kind {
                OpKind::Join { preds, left, right } => {
                    if preds.is_empty() {
                        out.push(Violation::EmptyJoinPredicates(id));
                    }
                    for (l, r) in preds {
                        if !schemas[left].contains(l) {
                            out.push(Violation::UnknownColumn { op: id, column: l.clone() });
                        }
                        if !schemas[right].contains(r) {
                            out.push(Violation::UnknownColumn { op: id, column: r.clone() });
                        }
                    }
                }
                OpKind::Select { filters, child } => {
                    if filters.is_empty() {
                        out.push(Violation::EmptySelect(id));
                    }
                    for (c, _) in filters {
                        if !schemas[child].contains(c) {
                            out.push(Violation::UnknownColumn { op: id, column: c.clone() });
                        }
                    }
                }
                OpKind::Project { cols, child } => {
                    for (src, _) in cols {
                        if !schemas[child].contains(src) {
                            out.push(Violation::UnknownColumn { op: id, column: src.clone() });
                        }
                    }
                }
                OpKind::Union { children } => {
                    let first: BTreeSet<&String> = schema.iter().collect();
                    for c in children {
                        let cs: BTreeSet<&String> = schemas[c].iter().collect();
                        if cs != first {
                            out.push(Violation::UnionSchemaMismatch(id));
                            break;
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// SCCs of the tuple-flow graph in evaluation order; a component is a
    /// fixpoint group exactly when it contains a buffer cycle.
    pub fn flow_groups(&self) -> Result<FlowGroups, PlanError> {
        let ids: Vec<OpId> = self.ops.keys().copied().collect();
        let index: BTreeMap<OpId, usize> =
            ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut g: DiGraph<OpId, ()> = DiGraph::new();
        let nodes: Vec<_> = ids.iter().map(|&id| g.add_node(id)).collect();
        for (a, b) in self.flow_edges() {
            g.add_edge(nodes[index[&a]], nodes[index[&b]], ());
        }
        let sccs = tarjan_scc(&g);
        // tarjan_scc yields reverse topological order over the condensation;
        // tuple flow needs producers first, so reverse it.
        let groups = sccs
            .into_iter()
            .rev()
            .map(|comp| {
                let mut ops: Vec<OpId> = comp.iter().map(|&n| g[n]).collect();
                ops.sort();
                let fixpoint = ops.len() > 1;
                FlowGroup { ops, fixpoint }
            })
            .collect();
        Ok(FlowGroups { groups })
    }

    /// Returns a copy with `map`-renamed output columns (a `Rename` wrapper
    /// over the root, or no change for an identity map).
    pub fn with_renamed_output(&self, map: &[(String, String)]) -> PlanGraph {
        let effective: Vec<(String, String)> =
            map.iter().filter(|(a, b)| a != b).cloned().collect();
        if effective.is_empty() {
            return self.clone();
        }
        let mut out = self.clone();
        let root = out.add(OpKind::Rename { map: effective, child: out.root });
        out.root = root;
        out
    }

    /// Replaces the top abstraction with an abstraction-free plan, freshening
    /// its operator and buffer ids. The original plan is unmodified.
    pub fn substitute(&self, abs_id: OpId, replacement: &PlanGraph) -> Result<PlanGraph, PlanError> {
        if self.abstractions.last() != Some(&abs_id) {
            return Err(PlanError::NotTopAbstraction(abs_id));
        }
        let query = self
            .abstraction_query(abs_id)
            .ok_or(PlanError::NotAnAbstraction(abs_id))?
            .clone();
        if replacement.has_abstractions() {
            return Err(PlanError::ReplacementHasAbstractions);
        }
        let repl_schema = replacement
            .schemas()
            .map_err(|e| PlanError::Malformed(e.to_string()))?
            .remove(&replacement.root)
            .unwrap();
        for h in &query.head {
            if !repl_schema.contains(h) {
                return Err(PlanError::SchemaMismatch {
                    provided: repl_schema,
                    needed: query.head.clone(),
                });
            }
        }

        let mut out = self.clone();
        out.abstractions.pop();
        out.used_seeding |= replacement.used_seeding;

        let mut op_map: BTreeMap<OpId, OpId> = BTreeMap::new();
        let mut buf_map: BTreeMap<BufId, BufId> = BTreeMap::new();
        for &old in replacement.ops.keys() {
            let id = OpId(out.next_op);
            out.next_op += 1;
            op_map.insert(old, id);
        }
        for (&old, kind) in &replacement.ops {
            let remapped = match kind.clone() {
                OpKind::Join { preds, left, right } => {
                    OpKind::Join { preds, left: op_map[&left], right: op_map[&right] }
                }
                OpKind::Project { cols, child } => {
                    OpKind::Project { cols, child: op_map[&child] }
                }
                OpKind::Rename { map, child } => OpKind::Rename { map, child: op_map[&child] },
                OpKind::Select { filters, child } => {
                    OpKind::Select { filters, child: op_map[&child] }
                }
                OpKind::Dedup { child } => OpKind::Dedup { child: op_map[&child] },
                OpKind::Union { children } => {
                    OpKind::Union { children: children.iter().map(|c| op_map[c]).collect() }
                }
                OpKind::BufferWrite { buffer, child } => {
                    let b = *buf_map.entry(buffer).or_insert_with(|| {
                        let b = BufId(out.next_buf);
                        out.next_buf += 1;
                        b
                    });
                    OpKind::BufferWrite { buffer: b, child: op_map[&child] }
                }
                OpKind::BufferRead { buffer } => {
                    let b = *buf_map.entry(buffer).or_insert_with(|| {
                        let b = BufId(out.next_buf);
                        out.next_buf += 1;
                        b
                    });
                    OpKind::BufferRead { buffer: b }
                }
                other => other,
            };
            out.ops.insert(op_map[&old], remapped);
        }
        // The abstraction's id becomes a projection to its head, keeping all
        // parent references valid.
        let cols: Vec<(String, String)> =
            query.head.iter().map(|h| (h.clone(), h.clone())).collect();
        out.ops.insert(abs_id, OpKind::Project { cols, child: op_map[&replacement.root] });
        Ok(out)
    }

    /// Deterministic DOT rendering; fixpoint groups become clusters when the
    /// plan is abstraction-free and well formed.
    pub fn render_dot(&self) -> String {
        let mut s = String::from("digraph plan {\n  rankdir=BT;\n");
        let group_of: BTreeMap<OpId, usize> = if !self.has_abstractions() {
            self.flow_groups()
                .map(|fg| {
                    fg.groups
                        .iter()
                        .enumerate()
                        .filter(|(_, g)| g.fixpoint)
                        .flat_map(|(i, g)| g.ops.iter().map(move |&o| (o, i)))
                        .collect()
                })
                .unwrap_or_default()
        } else {
            BTreeMap::new()
        };
        let mut clusters: BTreeMap<usize, Vec<OpId>> = BTreeMap::new();
        for (&op, &g) in &group_of {
            clusters.entry(g).or_default().push(op);
        }
        let label = |kind: &OpKind| -> String {
            match kind {
                OpKind::ScanE { vars } => format!("ScanE({})", vars.join(",")),
                OpKind::ScanP { vars } => format!("ScanP({})", vars.join(",")),
                OpKind::Join { preds, .. } => {
                    let p: Vec<String> =
                        preds.iter().map(|(l, r)| format!("{l}={r}")).collect();
                    format!("Join[{}]", p.join(","))
                }
                OpKind::Project { cols, .. } => {
                    let c: Vec<String> = cols
                        .iter()
                        .map(|(s, o)| if s == o { s.clone() } else { format!("{s}->{o}") })
                        .collect();
                    format!("Project[{}]", c.join(","))
                }
                OpKind::Rename { map, .. } => {
                    let c: Vec<String> = map.iter().map(|(a, b)| format!("{a}->{b}")).collect();
                    format!("Rename[{}]", c.join(","))
                }
                OpKind::Select { filters, .. } => {
                    let c: Vec<String> =
                        filters.iter().map(|(v, k)| format!("{v}={k}")).collect();
                    format!("Select[{}]", c.join(","))
                }
                OpKind::Union { .. } => "Union".to_string(),
                OpKind::BufferWrite { buffer, .. } => format!("Write({buffer})"),
                OpKind::BufferRead { buffer } => format!("Read({buffer})"),
                OpKind::Dedup { .. } => "Dedup".to_string(),
                OpKind::Abstraction { query } => format!("Abstraction[{query}]"),
            }
        };
        for (i, ops) in &clusters {
            s.push_str(&format!("  subgraph cluster_fixpoint_{i} {{\n    label=\"fixpoint\";\n"));
            for op in ops {
                s.push_str(&format!("    {op} [label=\"{}\"];\n", label(&self.ops[op])));
            }
            s.push_str("  }\n");
        }
        for (&id, kind) in &self.ops {
            if !group_of.contains_key(&id) {
                let shape = if id == self.root { " shape=box" } else { "" };
                s.push_str(&format!("  {id} [label=\"{}\"{shape}];\n", label(kind)));
            }
        }
        let writers = self.buffer_writers();
        for (&id, kind) in &self.ops {
            for c in kind.children() {
                s.push_str(&format!("  {c} -> {id};\n"));
            }
            if let OpKind::BufferRead { buffer } = kind {
                for w in writers.get(buffer).map(|v| v.as_slice()).unwrap_or(&[]) {
                    s.push_str(&format!("  {w} -> {id} [style=dashed];\n"));
                }
            }
        }
        s.push_str("}\n");
        s
    }

    // ---- structural probes used by tests and reports ----

    /// Buffers written by a join output: the stacking buffers of a seeded plan.
    pub fn stacking_buffer_count(&self) -> usize {
        self.ops
            .values()
            .filter(|k| {
                matches!(k, OpKind::BufferWrite { child, .. }
                    if matches!(self.ops[child], OpKind::Join { .. }))
            })
            .count()
    }

    /// A seed projection is a dedup over a projection over a buffer read.
    pub fn has_seed_projection(&self) -> bool {
        self.ops.values().any(|k| {
            if let OpKind::Dedup { child } = k {
                if let OpKind::Project { child: inner, .. } = &self.ops[child] {
                    return matches!(self.ops[inner], OpKind::BufferRead { .. });
                }
            }
            false
        })
    }

    /// An identity seeding projection duplicates one source column.
    pub fn has_identity_seed(&self) -> bool {
        self.ops.values().any(|k| {
            matches!(k, OpKind::Project { cols, .. }
                if cols.len() == 2 && cols[0].0 == cols[1].0)
        })
    }

    pub fn count_kind(&self, name: &str) -> usize {
        self.ops.values().filter(|k| k.name() == name).count()
    }
}

fn has_cycle<I, F>(nodes: I, children: F) -> bool
where
    I: Iterator<Item = OpId>,
    F: Fn(OpId) -> Vec<OpId>,
{
    let mut color: BTreeMap<OpId, u8> = BTreeMap::new();
    for n in nodes {
        if dfs_cycle(n, &children, &mut color) {
            return true;
        }
    }
    false
}

fn dfs_cycle<F>(n: OpId, children: &F, color: &mut BTreeMap<OpId, u8>) -> bool
where
    F: Fn(OpId) -> Vec<OpId>,
{
    match color.get(&n) {
        Some(1) => return true,
        Some(2) => return false,
        _ => {}
    }
    color.insert(n, 1);
    for c in children(n) {
        if dfs_cycle(c, children, color) {
            return true;
        }
    }
    color.insert(n, 2);
    false
}
