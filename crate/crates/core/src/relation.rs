//! Set-semantics relations flowing through the engine.
//!
//! A relation pairs an ordered schema of variable names with a set of
//! tuples. All engine operators and the reference oracles consume and
//! produce these values; duplicates never survive an operator boundary.

use std::collections::HashSet;
use std::fmt;

/// A single column value: a vertex/edge identifier, an integer property
/// value, or a dictionary reference to an interned string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Id(u64),
    Int(i64),
    Str(u32),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Id(v) => write!(f, "{v}"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Str(r) => write!(f, "str:{r}"),
        }
    }
}

pub type Tuple = Vec<Value>;

/// A named-column set of tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub schema: Vec<String>,
    pub tuples: HashSet<Tuple>,
}

impl Relation {
    pub fn new(schema: Vec<String>) -> Self {
        Relation { schema, tuples: HashSet::new() }
    }

    pub fn with_tuples<I: IntoIterator<Item = Tuple>>(schema: Vec<String>, tuples: I) -> Self {
        let tuples: HashSet<Tuple> = tuples.into_iter().collect();
        Relation { schema, tuples }
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn col(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c == name)
    }

    pub fn insert(&mut self, t: Tuple) {
        debug_assert_eq!(t.len(), self.schema.len());
        self.tuples.insert(t);
    }

    /// Projects (with optional duplication) to `(source, output)` column pairs.
    pub fn project(&self, cols: &[(String, String)]) -> Relation {
        let idx: Vec<usize> = cols
            .iter()
            .map(|(src, _)| self.col(src).unwrap_or_else(|| panic!("unknown column {src}")))
            .collect();
        let schema: Vec<String> = cols.iter().map(|(_, out)| out.clone()).collect();
        let tuples = self
            .tuples
            .iter()
            .map(|t| idx.iter().map(|&i| t[i]).collect::<Tuple>())
            .collect();
        Relation { schema, tuples }
    }

    /// Keeps the named columns, in the order given.
    pub fn project_names(&self, names: &[String]) -> Relation {
        let cols: Vec<(String, String)> = names.iter().map(|n| (n.clone(), n.clone())).collect();
        self.project(&cols)
    }

    pub fn rename(&self, map: &[(String, String)]) -> Relation {
        let schema = self
            .schema
            .iter()
            .map(|c| {
                map.iter()
                    .find(|(old, _)| old == c)
                    .map(|(_, new)| new.clone())
                    .unwrap_or_else(|| c.clone())
            })
            .collect();
        Relation { schema, tuples: self.tuples.clone() }
    }

    /// Hash join on `(left column, right column)` equality pairs. The output
    /// schema is the left schema followed by the right columns that are not
    /// consumed by a join predicate.
    pub fn join(&self, right: &Relation, preds: &[(String, String)]) -> Relation {
        let lk: Vec<usize> = preds.iter().map(|(l, _)| self.col(l).expect("join col")).collect();
        let rk: Vec<usize> = preds.iter().map(|(_, r)| right.col(r).expect("join col")).collect();
        let dropped: HashSet<usize> = rk.iter().copied().collect();
        let kept_right: Vec<usize> =
            (0..right.schema.len()).filter(|i| !dropped.contains(i)).collect();

        let mut schema = self.schema.clone();
        schema.extend(kept_right.iter().map(|&i| right.schema[i].clone()));

        let mut table: std::collections::HashMap<Tuple, Vec<&Tuple>> =
            std::collections::HashMap::new();
        for t in &right.tuples {
            let key: Tuple = rk.iter().map(|&i| t[i]).collect();
            table.entry(key).or_default().push(t);
        }
        let mut out = Relation::new(schema);
        for t in &self.tuples {
            let key: Tuple = lk.iter().map(|&i| t[i]).collect();
            if let Some(matches) = table.get(&key) {
                for m in matches {
                    let mut row = t.clone();
                    row.extend(kept_right.iter().map(|&i| m[i]));
                    out.tuples.insert(row);
                }
            }
        }
        out
    }

    pub fn union_in_place(&mut self, other: &Relation) {
        debug_assert_eq!(
            sorted(&self.schema),
            sorted(&other.schema),
            "union schema mismatch"
        );
        if self.schema == other.schema {
            self.tuples.extend(other.tuples.iter().cloned());
        } else {
            let reordered = other.project_names(&self.schema);
            self.tuples.extend(reordered.tuples);
        }
    }

    pub fn difference(&self, other: &HashSet<Tuple>) -> Relation {
        let tuples = self.tuples.iter().filter(|t| !other.contains(*t)).cloned().collect();
        Relation { schema: self.schema.clone(), tuples }
    }

    /// Deterministically ordered tuples, for printing and comparisons.
    pub fn sorted_tuples(&self) -> Vec<Tuple> {
        let mut v: Vec<Tuple> = self.tuples.iter().cloned().collect();
        v.sort();
        v
    }
}

fn sorted(v: &[String]) -> Vec<&String> {
    let mut s: Vec<&String> = v.iter().collect();
    s.sort();
    s
}
