//! Property-graph storage and catalog statistics.
//!
//! A graph is the pair of an edge set `E` (triples `(src, edge, dst)`) and a
//! property set `P` (triples `(obj, key, value)`), with strings dictionary
//! encoded. Edges are additionally grouped per label into adjacency indexes
//! in both directions, since scans and seeded expansions are per-label.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use thiserror::Error;

use crate::relation::{Relation, Value};

pub const LABEL_KEY: &str = "label";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("duplicate edge id {0}")]
    DuplicateEdgeId(u64),
    #[error("id {0} used as both vertex and edge")]
    IdCollision(u64),
    #[error("line {line}: property object {obj} is not a known vertex or edge id")]
    UnknownObject { line: usize, obj: u64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Bidirectional string interner.
#[derive(Debug, Default, Clone)]
pub struct Dictionary {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Dictionary {
    pub fn intern(&mut self, s: &str) -> u32 {
        if let Some(&r) = self.index.get(s) {
            return r;
        }
        let r = self.names.len() as u32;
        self.names.push(s.to_string());
        self.index.insert(s.to_string(), r);
        r
    }

    pub fn lookup(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn resolve(&self, r: u32) -> &str {
        &self.names[r as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Sorted adjacency over one edge label: the deduplicated `(src, dst)` pair
/// set plus per-endpoint neighbor lists in both directions.
#[derive(Debug, Default, Clone)]
pub struct LabelAdjacency {
    pub pairs: Vec<(u64, u64)>,
    fwd: Csr,
    rev: Csr,
}

impl LabelAdjacency {
    fn build(mut pairs: Vec<(u64, u64)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        let fwd = Csr::build(pairs.iter().copied());
        let rev = Csr::build(pairs.iter().map(|&(s, t)| (t, s)));
        LabelAdjacency { pairs, fwd, rev }
    }

    pub fn successors(&self, v: u64) -> &[u64] {
        self.fwd.neighbors(v)
    }

    pub fn predecessors(&self, v: u64) -> &[u64] {
        self.rev.neighbors(v)
    }

    pub fn distinct_sources(&self) -> usize {
        self.fwd.keys.len()
    }

    pub fn distinct_targets(&self) -> usize {
        self.rev.keys.len()
    }
}

/// Compressed sparse rows keyed by vertex id.
#[derive(Debug, Default, Clone)]
struct Csr {
    keys: Vec<u64>,
    offsets: Vec<u32>,
    targets: Vec<u64>,
}

impl Csr {
    fn build<I: Iterator<Item = (u64, u64)>>(pairs: I) -> Self {
        let mut v: Vec<(u64, u64)> = pairs.collect();
        v.sort_unstable();
        v.dedup();
        let mut keys = Vec::new();
        let mut offsets = Vec::new();
        let mut targets = Vec::with_capacity(v.len());
        for (s, t) in v {
            if keys.last() != Some(&s) {
                keys.push(s);
                offsets.push(targets.len() as u32);
            }
            targets.push(t);
        }
        offsets.push(targets.len() as u32);
        Csr { keys, offsets, targets }
    }

    fn neighbors(&self, v: u64) -> &[u64] {
        match self.keys.binary_search(&v) {
            Ok(i) => &self.targets[self.offsets[i] as usize..self.offsets[i + 1] as usize],
            Err(_) => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// The pair `G = (E, P)` with dictionary-encoded strings and per-label
/// adjacency indexes. Immutable after construction.
#[derive(Debug, Default, Clone)]
pub struct PropertyGraph {
    pub edges: Vec<(u64, u64, u64)>,
    pub props: Vec<(u64, u32, Value)>,
    pub dict: Dictionary,
    vertex_ids: BTreeSet<u64>,
    edge_ids: BTreeSet<u64>,
    label_index: BTreeMap<u32, LabelAdjacency>,
}

impl PropertyGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_vertex(&self, id: u64) -> bool {
        self.vertex_ids.contains(&id)
    }

    pub fn label_adjacency(&self, label: &str) -> Option<&LabelAdjacency> {
        let r = self.dict.lookup(label)?;
        self.label_index.get(&r)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.label_index.keys().map(|&r| self.dict.resolve(r))
    }

    /// All `(s, t)` pairs carrying an edge with the given label. Reverse
    /// direction swaps the columns.
    pub fn scan_label(&self, label: &str, dir: Direction) -> Relation {
        let mut out = Relation::new(vec!["src".into(), "dst".into()]);
        if let Some(adj) = self.label_adjacency(label) {
            for &(s, t) in &adj.pairs {
                match dir {
                    Direction::Forward => out.insert(vec![Value::Id(s), Value::Id(t)]),
                    Direction::Reverse => out.insert(vec![Value::Id(t), Value::Id(s)]),
                }
            }
        }
        out
    }

    /// Finalizes invariants and indexes after edges/props are in place.
    fn finish(mut self) -> Result<Self, GraphError> {
        let mut by_label: BTreeMap<u32, Vec<(u64, u64)>> = BTreeMap::new();
        let edge_pair: HashMap<u64, (u64, u64)> =
            self.edges.iter().map(|&(s, e, t)| (e, (s, t))).collect();
        if let Some(label_ref) = self.dict.lookup(LABEL_KEY) {
            for &(obj, key, val) in &self.props {
                if key == label_ref {
                    if let (Some(&(s, t)), Value::Str(l)) = (edge_pair.get(&obj), val) {
                        by_label.entry(l).or_default().push((s, t));
                    }
                }
            }
        }
        self.label_index =
            by_label.into_iter().map(|(l, pairs)| (l, LabelAdjacency::build(pairs))).collect();
        Ok(self)
    }
}

fn parse_id(tok: &str, line: usize, what: &str) -> Result<u64, GraphError> {
    tok.parse::<u64>().map_err(|_| GraphError::Parse {
        line,
        msg: format!("{what} `{tok}` is not a non-negative integer"),
    })
}

fn encode_prop_value(dict: &mut Dictionary, tok: &str) -> Value {
    match tok.parse::<i64>() {
        Ok(i) => Value::Int(i),
        Err(_) => Value::Str(dict.intern(tok)),
    }
}

fn split3(line: &str, lineno: usize) -> Result<(&str, &str, &str), GraphError> {
    let mut it = line.split('\t');
    match (it.next(), it.next(), it.next(), it.next()) {
        (Some(a), Some(b), Some(c), None) => Ok((a, b, c)),
        _ => Err(GraphError::Parse { line: lineno, msg: "expected 3 TAB-separated fields".into() }),
    }
}

fn is_skippable(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

/// Loads a graph from edge lines (`src TAB edge TAB dst`) and property lines
/// (`obj TAB key TAB value`). `#`-prefixed lines are comments.
pub fn load_graph<E: BufRead, P: BufRead>(
    edges_source: E,
    props_source: P,
) -> Result<PropertyGraph, GraphError> {
    let mut g = PropertyGraph::default();
    for (i, line) in edges_source.lines().enumerate() {
        let line = line?;
        if is_skippable(&line) {
            continue;
        }
        let lineno = i + 1;
        let (s, e, t) = split3(&line, lineno)?;
        let (s, e, t) = (
            parse_id(s, lineno, "src")?,
            parse_id(e, lineno, "edge")?,
            parse_id(t, lineno, "dst")?,
        );
        if g.edge_ids.contains(&e) {
            return Err(GraphError::DuplicateEdgeId(e));
        }
        if g.vertex_ids.contains(&e) {
            return Err(GraphError::IdCollision(e));
        }
        if g.edge_ids.contains(&s) || g.edge_ids.contains(&t) {
            let bad = if g.edge_ids.contains(&s) { s } else { t };
            return Err(GraphError::IdCollision(bad));
        }
        g.vertex_ids.insert(s);
        g.vertex_ids.insert(t);
        g.edge_ids.insert(e);
        g.edges.push((s, e, t));
    }
    for (i, line) in props_source.lines().enumerate() {
        let line = line?;
        if is_skippable(&line) {
            continue;
        }
        let lineno = i + 1;
        let (obj, key, val) = split3(&line, lineno)?;
        let obj = parse_id(obj, lineno, "obj")?;
        if !g.vertex_ids.contains(&obj) && !g.edge_ids.contains(&obj) {
            return Err(GraphError::UnknownObject { line: lineno, obj });
        }
        let key = g.dict.intern(key);
        let val = encode_prop_value(&mut g.dict, val);
        g.props.push((obj, key, val));
    }
    g.finish()
}

/// Converts RDF-style `(subject, predicate, object)` triples into a property
/// graph: subjects and objects become vertices, each triple becomes an edge
/// carrying its predicate as the `label` property. Vertex and edge id ranges
/// are disjoint (even vs odd).
pub fn ingest_rdf<I, S>(triples: I) -> PropertyGraph
where
    I: IntoIterator<Item = (S, S, S)>,
    S: AsRef<str>,
{
    let mut g = PropertyGraph::default();
    let mut node_ids: HashMap<String, u64> = HashMap::new();
    let mut next_node: u64 = 0;
    let mut next_edge: u64 = 1;
    let label_ref = g.dict.intern(LABEL_KEY);
    for (s, p, o) in triples {
        let mut node = |name: &str, ids: &mut HashMap<String, u64>| -> u64 {
            *ids.entry(name.to_string()).or_insert_with(|| {
                let id = next_node;
                next_node += 2;
                id
            })
        };
        let sid = node(s.as_ref(), &mut node_ids);
        let oid = node(o.as_ref(), &mut node_ids);
        let eid = next_edge;
        next_edge += 2;
        g.vertex_ids.insert(sid);
        g.vertex_ids.insert(oid);
        g.edge_ids.insert(eid);
        g.edges.push((sid, eid, oid));
        let pval = Value::Str(g.dict.intern(p.as_ref()));
        g.props.push((eid, label_ref, pval));
    }
    g.finish().expect("rdf ingestion is total")
}

/// Per-label statistics consumed by the cost model.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LabelStats {
    /// Distinct `(s, t)` pairs carrying the label.
    pub pairs: u64,
    pub distinct_sources: u64,
    pub distinct_targets: u64,
}

/// Exact catalog statistics over a graph. Desk-scale graphs make exact
/// counting affordable, so nothing here is sampled.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    pub total_edges: u64,
    pub total_props: u64,
    pub vertex_count: u64,
    pub labels: BTreeMap<String, LabelStats>,
}

impl Catalog {
    pub fn label(&self, name: &str) -> LabelStats {
        self.labels.get(name).copied().unwrap_or_default()
    }
}

pub fn build_catalog(g: &PropertyGraph) -> Catalog {
    let labels = g
        .label_index
        .iter()
        .map(|(&r, adj)| {
            (
                g.dict.resolve(r).to_string(),
                LabelStats {
                    pairs: adj.pairs.len() as u64,
                    distinct_sources: adj.distinct_sources() as u64,
                    distinct_targets: adj.distinct_targets() as u64,
                },
            )
        })
        .collect();
    Catalog {
        total_edges: g.edges.len() as u64,
        total_props: g.props.len() as u64,
        vertex_count: g.vertex_count() as u64,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::io::Cursor;

    fn load(edges: &str, props: &str) -> Result<PropertyGraph, GraphError> {
        load_graph(Cursor::new(edges), Cursor::new(props))
    }

    #[test]
    fn empty_streams_give_empty_graph() {
        let g = load("", "").unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.props.len(), 0);
        assert_eq!(g.vertex_count(), 0);
    }

    #[test]
    fn single_edge_with_label() {
        let g = load("1\t10\t2\n", "10\tlabel\towns\n").unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.props.len(), 1);
        let r = g.scan_label("owns", Direction::Forward);
        assert_eq!(r.sorted_tuples(), vec![vec![Value::Id(1), Value::Id(2)]]);
    }

    #[test]
    fn fig1_fragment_has_witness_path() {
        let g = fixtures::fig1_fragment();
        // owns(p1,a1) and the transaction path a1 -> a3 -> a5.
        let owns = g.scan_label("owns", Direction::Forward);
        assert!(owns.tuples.contains(&vec![Value::Id(fixtures::P1), Value::Id(fixtures::A1)]));
        let tx = g.label_adjacency("transaction").unwrap();
        assert_eq!(tx.successors(fixtures::A1), &[fixtures::A3]);
        assert_eq!(tx.successors(fixtures::A3), &[fixtures::A5]);
        // a5 carries the IBAN property.
        let iban = g.dict.lookup("IBAN").unwrap();
        assert!(g.props.iter().any(|&(o, k, _)| o == fixtures::A5 && k == iban));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = load("1\t10\n", "").unwrap_err();
        match err {
            GraphError::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn duplicate_edge_id_rejected() {
        let err = load("1\t10\t2\n3\t10\t4\n", "").unwrap_err();
        assert!(matches!(err, GraphError::DuplicateEdgeId(10)));
    }

    #[test]
    fn vertex_edge_id_collision_rejected() {
        let err = load("1\t2\t3\n2\t5\t4\n", "").unwrap_err();
        assert!(matches!(err, GraphError::IdCollision(2)));
    }

    #[test]
    fn unknown_prop_object_rejected() {
        let err = load("1\t10\t2\n", "99\tlabel\tx\n").unwrap_err();
        assert!(matches!(err, GraphError::UnknownObject { obj: 99, .. }));
    }

    #[test]
    fn rdf_empty_gives_empty_graph() {
        let g = ingest_rdf(Vec::<(&str, &str, &str)>::new());
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn rdf_single_triple() {
        let g = ingest_rdf(vec![("a", "knows", "b")]);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g.scan_label("knows", Direction::Forward).len(), 1);
    }

    #[test]
    fn rdf_ids_distinct_and_disjoint() {
        let g = ingest_rdf(vec![("a", "knows", "b"), ("b", "knows", "a")]);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.vertex_count(), 2);
        let mut ids: BTreeSet<u64> = g.vertex_ids.iter().copied().collect();
        ids.extend(g.edge_ids.iter());
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn rdf_is_lossless() {
        let triples =
            vec![("a", "p", "b"), ("b", "q", "c"), ("a", "q", "c"), ("c", "p", "a")];
        let g = ingest_rdf(triples.clone());
        assert_eq!(g.edge_count(), triples.len());
        // Each input triple is recoverable from its edge and label property.
        let label = g.dict.lookup(LABEL_KEY).unwrap();
        let mut recovered: Vec<(u64, String, u64)> = g
            .edges
            .iter()
            .map(|&(s, e, t)| {
                let p = g
                    .props
                    .iter()
                    .find(|&&(o, k, _)| o == e && k == label)
                    .map(|&(_, _, v)| match v {
                        Value::Str(r) => g.dict.resolve(r).to_string(),
                        _ => panic!("label must be a string"),
                    })
                    .unwrap();
                (s, p, t)
            })
            .collect();
        recovered.sort();
        assert_eq!(recovered.len(), triples.len());
    }

    #[test]
    fn catalog_empty_graph() {
        let c = build_catalog(&PropertyGraph::default());
        assert_eq!(c.total_edges, 0);
        assert!(c.labels.is_empty());
    }

    #[test]
    fn catalog_counts_fig1() {
        let g = fixtures::fig1_fragment();
        let c = build_catalog(&g);
        assert_eq!(c.label("transaction").pairs, 2);
        assert_eq!(c.label("transaction").distinct_sources, 2);
        assert_eq!(c.label("owns").pairs, 2);
    }

    #[test]
    fn catalog_partitions_edges_when_single_label_each() {
        let g =
            load("1\t10\t2\n2\t11\t3\n3\t12\t4\n", "10\tlabel\ta\n11\tlabel\ta\n12\tlabel\tb\n")
                .unwrap();
        let c = build_catalog(&g);
        let sum: u64 = c.labels.values().map(|s| s.pairs).sum();
        assert_eq!(sum, c.total_edges);
        assert!(c.labels.values().all(|s| s.distinct_sources <= s.pairs));
    }

    #[test]
    fn catalog_matches_scan_cardinalities() {
        let g = fixtures::random_graph(7, 120, 3);
        let c = build_catalog(&g);
        for (label, stats) in &c.labels {
            assert_eq!(
                stats.pairs as usize,
                g.scan_label(label, Direction::Forward).len(),
                "label {label}"
            );
        }
    }

    #[test]
    fn scan_unknown_label_is_empty() {
        let g = fixtures::fig1_fragment();
        assert!(g.scan_label("missing", Direction::Forward).is_empty());
    }

    #[test]
    fn scan_reverse_swaps_columns() {
        let g = fixtures::random_graph(3, 50, 2);
        for label in ["l0", "l1"] {
            let f = g.scan_label(label, Direction::Forward);
            let r = g.scan_label(label, Direction::Reverse);
            assert_eq!(f.len(), r.len());
            for t in &f.tuples {
                assert!(r.tuples.contains(&vec![t[1], t[0]]));
            }
        }
    }

    #[test]
    fn dictionary_round_trip() {
        let mut d = Dictionary::default();
        for s in ["alpha", "beta", "alpha", "γ"] {
            let r = d.intern(s);
            assert_eq!(d.resolve(r), s);
        }
        assert_eq!(d.len(), 3);
    }
}
