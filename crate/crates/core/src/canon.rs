//! Canonical keys for conjunctive sub-queries.
//!
//! Two sub-queries that are equal up to variable renaming and body-atom
//! reordering must map to the same byte key, so that memo lookups unify the
//! renamed copies the enumeration rules keep producing. The key is computed
//! by iterative color refinement on the variable/atom incidence structure,
//! followed by individualization on residual symmetric classes; the minimal
//! serialization over all discrete colorings wins.

use std::collections::BTreeMap;

use crate::ir::{Constant, SubQuery, Term};

/// Canonical byte key plus the variable-to-canonical-index assignment that
/// produced it.
pub fn canonicalize(q: &SubQuery) -> (Vec<u8>, BTreeMap<String, u32>) {
    let mut vars: Vec<String> = q.body_vars().into_iter().collect();
    for h in &q.head {
        if !vars.contains(h) {
            vars.push(h.clone());
        }
    }
    vars.sort();
    let ctx = Ctx::new(q, &vars);
    let init = ctx.refine(vec![0; vars.len()]);
    let mut best: Option<(Vec<u8>, Vec<u32>)> = None;
    ctx.search(init, &mut best);
    let (bytes, perm) = best.expect("canonical search always yields a labeling");
    let map = vars.iter().cloned().zip(perm.iter().copied()).collect();
    (bytes, map)
}

pub fn canonical_signature(q: &SubQuery) -> Vec<u8> {
    canonicalize(q).0
}

struct Ctx<'a> {
    q: &'a SubQuery,
    vars: Vec<String>,
    /// Static per-atom keys (predicate, closure, constant pattern).
    atom_keys: Vec<Vec<u8>>,
    /// Variable positions per atom: `(var index, position)`.
    atom_vars: Vec<Vec<(usize, usize)>>,
    head_flags: Vec<bool>,
}

impl<'a> Ctx<'a> {
    fn new(q: &'a SubQuery, vars: &[String]) -> Ctx<'a> {
        let vars: Vec<String> = vars.to_vec();
        let lookup: BTreeMap<&str, usize> =
            vars.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let mut atom_keys = Vec::new();
        let mut atom_vars = Vec::new();
        for atom in &q.body {
            let mut key = vec![0u8];
            encode_str(&mut key, &atom.predicate);
            key.push(atom.closure as u8);
            key.push(atom.terms.len() as u8);
            let mut positions = Vec::new();
            for (pos, t) in atom.terms.iter().enumerate() {
                match t {
                    Term::Var(v) => {
                        key.push(0xFE);
                        positions.push((lookup[v.as_str()], pos));
                    }
                    Term::Const(c) => {
                        key.push(0xFD);
                        encode_const(&mut key, c);
                    }
                }
            }
            atom_keys.push(key);
            atom_vars.push(positions);
        }
        for f in &q.filters {
            let mut key = vec![1u8];
            encode_const(&mut key, &f.value);
            atom_keys.push(key);
            atom_vars.push(vec![(lookup[f.var.as_str()], 0)]);
        }
        let head_flags = vars.iter().map(|v| q.head.contains(v)).collect();
        Ctx { q, vars, atom_keys, atom_vars, head_flags }
    }

    /// One color-refinement pass to a fixpoint: each variable's color is its
    /// previous color plus the sorted multiset of (atom key, own positions,
    /// co-occurring colors by position).
    fn refine(&self, mut ranks: Vec<u32>) -> Vec<u32> {
        loop {
            let mut descriptors: Vec<(Vec<u8>, usize)> = Vec::with_capacity(self.vars.len());
            for v in 0..self.vars.len() {
                let mut d = Vec::new();
                d.extend_from_slice(&ranks[v].to_be_bytes());
                d.push(self.head_flags[v] as u8);
                let mut occ: Vec<Vec<u8>> = Vec::new();
                for (a, positions) in self.atom_vars.iter().enumerate() {
                    for &(var, pos) in positions {
                        if var != v {
                            continue;
                        }
                        let mut o = self.atom_keys[a].clone();
                        o.push(pos as u8);
                        for &(other, opos) in positions {
                            o.push(opos as u8);
                            o.extend_from_slice(&ranks[other].to_be_bytes());
                        }
                        occ.push(o);
                    }
                }
                occ.sort();
                for o in occ {
                    d.extend(o);
                }
                descriptors.push((d, v));
            }
            let mut sorted = descriptors.clone();
            sorted.sort();
            let mut new_ranks = vec![0u32; self.vars.len()];
            let mut rank = 0u32;
            for (i, (d, v)) in sorted.iter().enumerate() {
                if i > 0 && sorted[i - 1].0 != *d {
                    rank += 1;
                }
                new_ranks[*v] = rank;
            }
            let old_classes = distinct(&ranks);
            let new_classes = distinct(&new_ranks);
            let stable = new_classes == old_classes && same_partition(&ranks, &new_ranks);
            ranks = new_ranks;
            if stable {
                return ranks;
            }
        }
    }

    fn search(&self, ranks: Vec<u32>, best: &mut Option<(Vec<u8>, Vec<u32>)>) {
        // Find the first non-singleton color class in rank order.
        let mut class_members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (v, &r) in ranks.iter().enumerate() {
            class_members.entry(r).or_default().push(v);
        }
        match class_members.values().find(|m| m.len() > 1) {
            None => {
                // Discrete coloring: ranks is a permutation.
                let bytes = self.serialize(&ranks);
                if best.as_ref().map(|(b, _)| bytes < *b).unwrap_or(true) {
                    *best = Some((bytes, ranks));
                }
            }
            Some(members) => {
                for &m in members {
                    let mut next: Vec<u32> = ranks.iter().map(|&r| r * 2 + 1).collect();
                    next[m] -= 1;
                    let refined = self.refine(next);
                    self.search(refined, best);
                }
            }
        }
    }

    fn serialize(&self, ranks: &[u32]) -> Vec<u8> {
        let mut head: Vec<u32> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| self.q.head.contains(v))
            .map(|(i, _)| ranks[i])
            .collect();
        head.sort_unstable();
        let mut atoms: Vec<Vec<u8>> = Vec::new();
        for (a, key) in self.atom_keys.iter().enumerate() {
            let mut bytes = key.clone();
            for &(var, pos) in &self.atom_vars[a] {
                bytes.push(pos as u8);
                bytes.extend_from_slice(&ranks[var].to_be_bytes());
            }
            atoms.push(bytes);
        }
        atoms.sort();
        let mut out = Vec::new();
        out.push(head.len() as u8);
        for h in head {
            out.extend_from_slice(&h.to_be_bytes());
        }
        out.push(0xFF);
        for a in atoms {
            out.extend_from_slice(&(a.len() as u32).to_be_bytes());
            out.extend(a);
        }
        out
    }
}

fn distinct(ranks: &[u32]) -> usize {
    let mut v: Vec<u32> = ranks.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn same_partition(a: &[u32], b: &[u32]) -> bool {
    let mut map: BTreeMap<u32, u32> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b.iter()) {
        match map.get(&x) {
            Some(&m) if m != y => return false,
            Some(_) => {}
            None => {
                map.insert(x, y);
            }
        }
    }
    true
}

fn encode_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn encode_const(out: &mut Vec<u8>, c: &Constant) {
    match c {
        Constant::Int(i) => {
            out.push(0);
            out.extend_from_slice(&i.to_be_bytes());
        }
        Constant::Str(s) => {
            out.push(1);
            encode_str(out, s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{Atom, Filter};

    fn cq(head: &[&str], body: Vec<Atom>) -> SubQuery {
        SubQuery::new(head.iter().map(|s| s.to_string()).collect(), body, vec![])
    }

    /// Brute-force check: is there a variable bijection mapping q1 onto q2?
    fn equivalent(q1: &SubQuery, q2: &SubQuery) -> bool {
        let v1: Vec<String> = q1.body_vars().into_iter().collect();
        let v2: Vec<String> = q2.body_vars().into_iter().collect();
        if v1.len() != v2.len()
            || q1.head.len() != q2.head.len()
            || q1.body.len() != q2.body.len()
            || q1.filters.len() != q2.filters.len()
        {
            return false;
        }
        let mut perm: Vec<usize> = (0..v2.len()).collect();
        permute(&mut perm, 0, &mut |p| {
            let map: BTreeMap<&str, &str> =
                v1.iter().map(|s| s.as_str()).zip(p.iter().map(|&i| v2[i].as_str())).collect();
            let mapped_head: std::collections::BTreeSet<&str> =
                q1.head.iter().map(|h| map[h.as_str()]).collect();
            let head2: std::collections::BTreeSet<&str> =
                q2.head.iter().map(|h| h.as_str()).collect();
            if mapped_head != head2 {
                return false;
            }
            let mut mapped_body: Vec<String> = q1
                .body
                .iter()
                .map(|a| {
                    let terms: Vec<String> = a
                        .terms
                        .iter()
                        .map(|t| match t {
                            Term::Var(v) => map[v.as_str()].to_string(),
                            Term::Const(c) => format!("{c}"),
                        })
                        .collect();
                    format!("{}{}({})", a.predicate, a.closure, terms.join(","))
                })
                .collect();
            let mut body2: Vec<String> = q2
                .body
                .iter()
                .map(|a| {
                    let terms: Vec<String> = a
                        .terms
                        .iter()
                        .map(|t| match t {
                            Term::Var(v) => v.clone(),
                            Term::Const(c) => format!("{c}"),
                        })
                        .collect();
                    format!("{}{}({})", a.predicate, a.closure, terms.join(","))
                })
                .collect();
            mapped_body.sort();
            body2.sort();
            if mapped_body != body2 {
                return false;
            }
            let mut f1: Vec<String> =
                q1.filters.iter().map(|f| format!("{}={}", map[f.var.as_str()], f.value)).collect();
            let mut f2: Vec<String> =
                q2.filters.iter().map(|f| format!("{}={}", f.var, f.value)).collect();
            f1.sort();
            f2.sort();
            f1 == f2
        })
    }

    fn permute(perm: &mut Vec<usize>, k: usize, check: &mut impl FnMut(&[usize]) -> bool) -> bool {
        if k == perm.len() {
            return check(perm);
        }
        for i in k..perm.len() {
            perm.swap(k, i);
            if permute(perm, k + 1, check) {
                perm.swap(k, i);
                return true;
            }
            perm.swap(k, i);
        }
        false
    }

    #[test]
    fn renaming_invariance() {
        let a = cq(&["x"], vec![Atom::new("R", &["x", "y"])]);
        let b = cq(&["u"], vec![Atom::new("R", &["u", "v"])]);
        assert_eq!(canonical_signature(&a), canonical_signature(&b));
    }

    #[test]
    fn reorder_and_rename_same_key() {
        let a = cq(&["x", "z"], vec![Atom::new("R", &["x", "y"]), Atom::new("S", &["y", "z"])]);
        let b = cq(&["c", "b"], vec![Atom::new("S", &["a", "b"]), Atom::new("R", &["c", "a"])]);
        assert!(equivalent(&a, &b));
        assert_eq!(canonical_signature(&a), canonical_signature(&b));
    }

    #[test]
    fn direction_matters() {
        let a = cq(&["x", "z"], vec![Atom::new("R", &["x", "y"]), Atom::new("S", &["y", "z"])]);
        let b = cq(&["x", "z"], vec![Atom::new("R", &["x", "y"]), Atom::new("S", &["z", "y"])]);
        assert!(!equivalent(&a, &b));
        assert_ne!(canonical_signature(&a), canonical_signature(&b));
    }

    #[test]
    fn closure_marker_matters() {
        let a = cq(&["x", "y"], vec![Atom::new("R", &["x", "y"])]);
        let b = cq(&["x", "y"], vec![Atom::closure("R", &["x", "y"])]);
        assert_ne!(canonical_signature(&a), canonical_signature(&b));
    }

    #[test]
    fn head_set_matters() {
        let a = cq(&["x"], vec![Atom::new("R", &["x", "y"])]);
        let b = cq(&["y"], vec![Atom::new("R", &["x", "y"])]);
        assert_ne!(canonical_signature(&a), canonical_signature(&b));
    }

    #[test]
    fn filters_distinguish() {
        let base = vec![Atom::new("R", &["x", "y"])];
        let a = SubQuery::new(
            vec!["x".into()],
            base.clone(),
            vec![Filter { var: "y".into(), value: crate::ir::Constant::Int(1) }],
        );
        let b = SubQuery::new(vec!["x".into()], base, vec![]);
        assert_ne!(canonical_signature(&a), canonical_signature(&b));
    }

    #[test]
    fn symmetric_star_unifies_fresh_names() {
        // The same star body with different fresh variable names.
        let a = cq(
            &["c", "f1", "f2", "f3"],
            vec![
                Atom::new("E1", &["c", "f1"]),
                Atom::new("E2", &["c", "f2"]),
                Atom::new("E3", &["c", "f3"]),
            ],
        );
        let b = cq(
            &["q", "a3", "a1", "a2"],
            vec![
                Atom::new("E2", &["q", "a2"]),
                Atom::new("E1", &["q", "a1"]),
                Atom::new("E3", &["q", "a3"]),
            ],
        );
        assert_eq!(canonical_signature(&a), canonical_signature(&b));
    }

    #[test]
    fn three_atom_bodies_agree_with_bijection_oracle() {
        // Seeded sweep over 3-atom bodies with up to 6 variables.
        let preds = ["R", "S", "T"];
        let vars = ["a", "b", "c", "d", "e", "f"];
        let mut state = 0xC0FFEEu64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as usize
        };
        let mut queries: Vec<SubQuery> = Vec::new();
        for _ in 0..60 {
            let mut body = Vec::new();
            for _ in 0..3 {
                let p = preds[next() % 3];
                let v1 = vars[next() % 6];
                let v2 = vars[next() % 6];
                if v1 == v2 {
                    continue;
                }
                let mut atom = Atom::new(p, &[v1, v2]);
                atom.closure = next() % 3 == 0;
                body.push(atom);
            }
            if body.is_empty() {
                continue;
            }
            let hv: Vec<String> =
                body.iter().flat_map(|a| a.vars().map(|v| v.to_string())).take(2).collect();
            queries.push(SubQuery::new(hv, body, vec![]));
        }
        let sigs: Vec<Vec<u8>> = queries.iter().map(canonical_signature).collect();
        let mut equal_pairs = 0;
        for i in 0..queries.len() {
            for j in i + 1..queries.len() {
                let eq_oracle = equivalent(&queries[i], &queries[j]);
                let eq_sig = sigs[i] == sigs[j];
                if eq_sig {
                    equal_pairs += 1;
                }
                assert_eq!(
                    eq_oracle, eq_sig,
                    "oracle/signature disagree on\n  {}\n  {}",
                    queries[i], queries[j]
                );
            }
        }
        // The sweep must actually exercise both outcomes.
        assert!(equal_pairs > 0, "sweep produced no isomorphic pairs");
    }

    #[test]
    fn exhaustive_agreement_with_bijection_oracle() {
        // Generate a family of small queries and check signature equality
        // matches the brute-force bijection oracle pairwise.
        let preds = ["R", "S"];
        let vars = ["a", "b", "c", "d"];
        let mut queries: Vec<SubQuery> = Vec::new();
        for p1 in 0..2usize {
            for (v1, v2) in [(0, 1), (1, 0), (0, 2), (2, 3)] {
                for (v3, v4) in [(1, 2), (2, 1), (0, 3), (3, 2)] {
                    for closure in [false, true] {
                        let mut a1 = Atom::new(preds[p1], &[vars[v1], vars[v2]]);
                        a1.closure = closure;
                        let a2 = Atom::new(preds[1 - p1], &[vars[v3], vars[v4]]);
                        let mut head: Vec<String> = vec![vars[v1].to_string()];
                        if v3 != v1 {
                            head.push(vars[v3].to_string());
                        }
                        queries.push(SubQuery::new(head, vec![a1, a2], vec![]));
                    }
                }
            }
        }
        let sigs: Vec<Vec<u8>> = queries.iter().map(canonical_signature).collect();
        for i in 0..queries.len() {
            for j in i + 1..queries.len() {
                let eq_oracle = equivalent(&queries[i], &queries[j]);
                let eq_sig = sigs[i] == sigs[j];
                assert_eq!(
                    eq_oracle, eq_sig,
                    "oracle/signature disagree on\n  {}\n  {}",
                    queries[i], queries[j]
                );
            }
        }
    }
}
