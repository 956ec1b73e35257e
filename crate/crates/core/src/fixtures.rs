//! Shared test fixtures: the financial-network fragment, the worked example
//! queries, deterministic random graphs, and the constructed instances the
//! benchmark suite measures seeding on.

use std::io::Cursor;

use crate::graph::{load_graph, PropertyGraph};
use crate::ir::Atom;

pub const P1: u64 = 1;
pub const P3: u64 = 3;
pub const A1: u64 = 10;
pub const A3: u64 = 30;
pub const A5: u64 = 50;

pub const IBAN: &str = "IE12 BOFI 9000 0112 3456 78";

/// The textual facts of the financial-network example: two people owning
/// accounts, a two-hop transaction path from a1 to a5 (no direct edge), and
/// the IBAN property on a5.
pub fn fig1_fragment() -> PropertyGraph {
    let edges = format!(
        "{P1}\t100\t{A1}\n{P3}\t101\t{A3}\n{A1}\t102\t{A3}\n{A3}\t103\t{A5}\n"
    );
    let props = format!(
        "100\tlabel\towns\n101\tlabel\towns\n102\tlabel\ttransaction\n\
         103\tlabel\ttransaction\n{A5}\tIBAN\t{IBAN}\n"
    );
    load_graph(Cursor::new(edges), Cursor::new(props)).expect("fig1 fragment is well formed")
}

pub const QUERY1_TEXT: &str = r#"
O(s, t) :- E(s, e, t), P(e, "label", "owns").
T(s, t) :- E(s, e, t), P(e, "label", "transaction").
F(s) :- T+(s, t), P(t, "IBAN", "IE12 BOFI 9000 0112 3456 78").
I(x, y) :- T(x, y), F(x).
Ans(w, z) :- O(w, x), I+(x, y), O(z, y), F(y).
"#;

pub const QUERY2_TEXT: &str = r#"
O(s, t) :- E(s, e, t), P(e, "label", "owns").
T(s, t) :- E(s, e, t), P(e, "label", "transaction").
Ans(x, z) :- O(x, y), T+(y, z).
"#;

/// Three converging closures over one source and one target variable.
pub const QUERY3_TEXT: &str = r#"
X(s, t) :- E(s, e, t), P(e, "label", "lx").
Y(s, t) :- E(s, e, t), P(e, "label", "ly").
Z(s, t) :- E(s, e, t), P(e, "label", "lz").
Ans(s, t) :- X+(s, t), Y+(s, t), Z+(s, t).
"#;

/// One exterior closure, two interior closures and a non-recursive brace.
pub const QUERY4_TEXT: &str = r#"
V(s, t) :- E(s, e, t), P(e, "label", "lv").
W(s, t) :- E(s, e, t), P(e, "label", "lw").
Y(s, t) :- E(s, e, t), P(e, "label", "ly").
Z(s, t) :- E(s, e, t), P(e, "label", "lz").
Ans(x, y, z) :- V+(s, x), W+(x, y), Y+(y, z), Z(x, z).
"#;

/// The answer-rule body of `QUERY4_TEXT` as IR atoms.
pub fn query4_body() -> Vec<Atom> {
    vec![
        Atom::closure("V", &["s", "x"]),
        Atom::closure("W", &["x", "y"]),
        Atom::closure("Y", &["y", "z"]),
        Atom::new("Z", &["x", "z"]),
    ]
}

/// SplitMix64: tiny deterministic PRNG so fixture graphs are stable across
/// platforms and dependency versions.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed.wrapping_add(0x9E3779B97F4A7C15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n.max(1)
    }
}

/// Deterministic random graph with labels `l0..l{n_labels-1}`; dense enough
/// to contain cycles at typical sizes.
pub fn random_graph(seed: u64, max_edges: usize, n_labels: usize) -> PropertyGraph {
    let mut rng = Rng::new(seed);
    let n_vertices = (max_edges / 3).max(4) as u64;
    let mut edge_lines = String::new();
    let mut prop_lines = String::new();
    for i in 0..max_edges {
        let s = rng.below(n_vertices);
        let t = rng.below(n_vertices);
        let label = rng.below(n_labels.max(1) as u64);
        let e = 1_000_000 + i as u64;
        edge_lines.push_str(&format!("{s}\t{e}\t{t}\n"));
        prop_lines.push_str(&format!("{e}\tlabel\tl{label}\n"));
    }
    load_graph(Cursor::new(edge_lines), Cursor::new(prop_lines)).expect("random graph well formed")
}

/// Hub-free instance for the seeding-benefit measurement: `chains` chains of
/// `chain_len` vertices linked by `t`-labelled edges, with `owners` extra
/// vertices pointing at distinct chain heads through `o`-labelled edges.
/// Only the owned chains' second vertices survive the seeding join.
pub fn seeding_benefit_instance(chains: u64, chain_len: u64, owners: u64) -> PropertyGraph {
    assert!(owners <= chains);
    let mut edge_lines = String::new();
    let mut prop_lines = String::new();
    let mut next_edge = 10_000_000u64;
    let vid = |chain: u64, pos: u64| chain * 1_000 + pos;
    for c in 0..chains {
        for i in 0..chain_len - 1 {
            let e = next_edge;
            next_edge += 1;
            edge_lines.push_str(&format!("{}\t{e}\t{}\n", vid(c, i), vid(c, i + 1)));
            prop_lines.push_str(&format!("{e}\tlabel\tt\n"));
        }
    }
    for k in 0..owners {
        let person = 9_000_000 + k;
        let e = next_edge;
        next_edge += 1;
        edge_lines.push_str(&format!("{person}\t{e}\t{}\n", vid(k, 0)));
        prop_lines.push_str(&format!("{e}\tlabel\to\n"));
    }
    load_graph(Cursor::new(edge_lines), Cursor::new(prop_lines)).expect("instance well formed")
}

pub const SEEDING_BENEFIT_QUERY: &str = r#"
O(s, t) :- E(s, e, t), P(e, "label", "o").
T(s, t) :- E(s, e, t), P(e, "label", "t").
Ans(x, z) :- O(x, y), T+(y, z).
"#;

/// Instance for interior seeding: a tiny `r`-chain whose edges also carry
/// `s`, plus many disjoint long `s`-chains. Both closures intersect only on
/// the tiny prefix, so the seeding join is small while the unseeded
/// s-closure is large.
pub fn pcc2_selective_instance(prefix: u64, chains: u64, chain_len: u64) -> PropertyGraph {
    let mut edge_lines = String::new();
    let mut prop_lines = String::new();
    let mut next_edge = 20_000_000u64;
    let mut push = |edges: &mut String, props: &mut String, s: u64, t: u64, label: &str| {
        let e = next_edge;
        next_edge += 1;
        edges.push_str(&format!("{s}\t{e}\t{t}\n"));
        props.push_str(&format!("{e}\tlabel\t{label}\n"));
    };
    for i in 0..prefix {
        push(&mut edge_lines, &mut prop_lines, i, i + 1, "r");
        push(&mut edge_lines, &mut prop_lines, i, i + 1, "s");
    }
    for j in 0..chains {
        let base = (j + 1) * 100_000;
        for i in 0..chain_len {
            push(&mut edge_lines, &mut prop_lines, base + i, base + i + 1, "s");
        }
    }
    load_graph(Cursor::new(edge_lines), Cursor::new(prop_lines)).expect("instance well formed")
}

pub const PCC2_QUERY: &str = r#"
R(s, t) :- E(s, e, t), P(e, "label", "r").
S(s, t) :- E(s, e, t), P(e, "label", "s").
Ans(x, y) :- R+(x, y), S+(x, y).
"#;

/// Small graph where three differently-labelled paths converge: the PCC3
/// shape has the witness pair (1, 2).
pub fn query3_fragment() -> PropertyGraph {
    let mut edges = String::new();
    let mut props = String::new();
    let mut next_edge = 500u64;
    let mut push = |edges: &mut String, props: &mut String, s: u64, t: u64, label: &str| {
        let e = next_edge;
        next_edge += 1;
        edges.push_str(&format!("{s}\t{e}\t{t}\n"));
        props.push_str(&format!("{e}\tlabel\t{label}\n"));
    };
    // Three two-step paths from 1 to 2 through distinct midpoints.
    for (mid, label) in [(11, "lx"), (12, "ly"), (13, "lz")] {
        push(&mut edges, &mut props, 1, mid, label);
        push(&mut edges, &mut props, mid, 2, label);
    }
    // Noise: paths that do not converge.
    push(&mut edges, &mut props, 3, 31, "lx");
    push(&mut edges, &mut props, 3, 32, "ly");
    push(&mut edges, &mut props, 31, 33, "lz");
    load_graph(Cursor::new(edges), Cursor::new(props)).expect("fragment well formed")
}

/// Small graph realizing the four-label example: a `lv`-path into a brace of
/// `lw`/`ly` paths closed by an `lz` edge.
pub fn query4_fragment() -> PropertyGraph {
    let mut edges = String::new();
    let mut props = String::new();
    let mut next_edge = 700u64;
    let mut push = |edges: &mut String, props: &mut String, s: u64, t: u64, label: &str| {
        let e = next_edge;
        next_edge += 1;
        edges.push_str(&format!("{s}\t{e}\t{t}\n"));
        props.push_str(&format!("{e}\tlabel\t{label}\n"));
    };
    // V-path 40 -> 41 -> 42; W-path 42 -> 43 -> 44; Y-path 44 -> 45;
    // Z-edge 42 -> 45 closes the brace.
    push(&mut edges, &mut props, 40, 41, "lv");
    push(&mut edges, &mut props, 41, 42, "lv");
    push(&mut edges, &mut props, 42, 43, "lw");
    push(&mut edges, &mut props, 43, 44, "lw");
    push(&mut edges, &mut props, 44, 45, "ly");
    push(&mut edges, &mut props, 42, 45, "lz");
    // Noise edges.
    push(&mut edges, &mut props, 50, 51, "lw");
    push(&mut edges, &mut props, 51, 52, "ly");
    load_graph(Cursor::new(edges), Cursor::new(props)).expect("fragment well formed")
}
