//! Datalog IR for Regular Queries.
//!
//! Programs are sets of rules over extensional predicates `E(s, e, t)` and
//! `P(o, k, v)` plus rule-defined predicates. Recursion enters only through
//! the closure marker (`+` suffix) on binary predicates; the dependency
//! graph itself stays acyclic. Equality filters `x = c` ride alongside the
//! relation atoms of a body but are not join-graph nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub const EDGE_PRED: &str = "E";
pub const PROP_PRED: &str = "P";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constant {
    Int(i64),
    Str(String),
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Int(i) => write!(f, "{i}"),
            Constant::Str(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(Constant),
}

impl Term {
    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

/// A predicate applied to terms, optionally marked as a transitive closure.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub terms: Vec<Term>,
    pub closure: bool,
}

impl Atom {
    pub fn new(predicate: &str, vars: &[&str]) -> Self {
        Atom {
            predicate: predicate.to_string(),
            terms: vars.iter().map(|v| Term::Var(v.to_string())).collect(),
            closure: false,
        }
    }

    pub fn closure(predicate: &str, vars: &[&str]) -> Self {
        let mut a = Atom::new(predicate, vars);
        a.closure = true;
        a
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().filter_map(|t| t.as_var())
    }

    pub fn is_extensional(&self) -> bool {
        self.predicate == EDGE_PRED || self.predicate == PROP_PRED
    }

    /// Deterministic tie-break key: predicate, closure marker, then terms.
    pub fn sort_key(&self) -> String {
        let mut k = self.predicate.clone();
        if self.closure {
            k.push('+');
        }
        k.push('(');
        for t in &self.terms {
            k.push_str(&t.to_string());
            k.push(',');
        }
        k.push(')');
        k
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}(", self.predicate, if self.closure { "+" } else { "" })?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ")")
    }
}

/// Equality filter `var = const`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Filter {
    pub var: String,
    pub value: Constant,
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.var, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub head: Atom,
    pub body: Vec<Atom>,
    pub filters: Vec<Filter>,
}

#[derive(Debug, Clone)]
pub struct Program {
    pub rules: Vec<Rule>,
    /// Rule indices per predicate name, in source order.
    pub by_predicate: BTreeMap<String, Vec<usize>>,
    pub answer: String,
}

impl Program {
    pub fn rules_for(&self, pred: &str) -> Vec<&Rule> {
        self.by_predicate
            .get(pred)
            .map(|idxs| idxs.iter().map(|&i| &self.rules[i]).collect())
            .unwrap_or_default()
    }

    pub fn answer_rules(&self) -> Vec<&Rule> {
        self.rules_for(&self.answer)
    }
}

/// A conjunctive sub-query: the unit of work carried by plan abstractions
/// and memo keys. The head is a variable set, kept sorted for determinism.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubQuery {
    pub head: Vec<String>,
    pub body: Vec<Atom>,
    pub filters: Vec<Filter>,
}

impl SubQuery {
    pub fn new(mut head: Vec<String>, body: Vec<Atom>, filters: Vec<Filter>) -> Self {
        head.sort();
        head.dedup();
        SubQuery { head, body, filters }
    }

    pub fn from_rule(rule: &Rule) -> Self {
        let head = rule.head.vars().map(|v| v.to_string()).collect();
        SubQuery::new(head, rule.body.clone(), rule.filters.clone())
    }

    pub fn body_vars(&self) -> BTreeSet<String> {
        self.body.iter().flat_map(|a| a.vars().map(|v| v.to_string())).collect()
    }
}

impl fmt::Display for SubQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) :- ", self.head.join(", "))?;
        let mut first = true;
        for a in &self.body {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
            first = false;
        }
        for flt in &self.filters {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{flt}")?;
            first = false;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Join graphs
// ---------------------------------------------------------------------------

/// Undirected graph over body-atom indices; two atoms are adjacent when they
/// share at least one variable. Filters are not nodes.
#[derive(Debug, Clone)]
pub struct JoinGraph {
    pub n: usize,
    /// `(i, j, shared vars)` with `i < j`.
    pub edges: Vec<(usize, usize, BTreeSet<String>)>,
    adjacency: Vec<u64>,
}

impl JoinGraph {
    pub fn adjacent(&self, i: usize) -> u64 {
        self.adjacency[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i] & (1 << j) != 0
    }

    /// True when the atoms selected by `mask` form one connected component.
    pub fn connected_subset(&self, mask: u64) -> bool {
        if mask == 0 {
            return false;
        }
        let start = mask.trailing_zeros() as usize;
        let mut seen = 1u64 << start;
        let mut frontier = seen;
        while frontier != 0 {
            let mut next = 0u64;
            let mut f = frontier;
            while f != 0 {
                let i = f.trailing_zeros() as usize;
                f &= f - 1;
                next |= self.adjacency[i] & mask & !seen;
            }
            seen |= next;
            frontier = next;
        }
        seen == mask
    }

    pub fn is_connected(&self) -> bool {
        self.n == 0 || self.connected_subset((1u64 << self.n) - 1)
    }

    /// Shared variables across the `(left mask, right mask)` cut.
    pub fn cut_vars(&self, left: u64, right: u64) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (i, j, vars) in &self.edges {
            let (bi, bj) = (1u64 << i, 1u64 << j);
            if (left & bi != 0 && right & bj != 0) || (left & bj != 0 && right & bi != 0) {
                out.extend(vars.iter().cloned());
            }
        }
        out
    }
}

pub fn join_graph(atoms: &[Atom]) -> JoinGraph {
    assert!(atoms.len() <= 64, "join graph limited to 64 atoms");
    let var_sets: Vec<BTreeSet<&str>> = atoms.iter().map(|a| a.vars().collect()).collect();
    let mut edges = Vec::new();
    let mut adjacency = vec![0u64; atoms.len()];
    for i in 0..atoms.len() {
        for j in i + 1..atoms.len() {
            let shared: BTreeSet<String> =
                var_sets[i].intersection(&var_sets[j]).map(|s| s.to_string()).collect();
            if !shared.is_empty() {
                adjacency[i] |= 1 << j;
                adjacency[j] |= 1 << i;
                edges.push((i, j, shared));
            }
        }
    }
    JoinGraph { n: atoms.len(), edges, adjacency }
}

// ---------------------------------------------------------------------------
// Interior/exterior closure classification
// ---------------------------------------------------------------------------

/// Partition of a rule body into non-recursive atoms, interior closures and
/// exterior closures (indices into the body).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosurePartition {
    pub non_recursive: Vec<usize>,
    pub interior: Vec<usize>,
    pub exterior: Vec<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("join graph is disconnected")]
    Disconnected,
    #[error("closure atom {0} must have two distinct variables")]
    BadClosure(String),
}

/// Classifies each closure atom by whether both endpoint variables occur in
/// some other predicate (interior), exactly one does (exterior), or neither
/// (disconnected). A variable occurring only in an equality filter counts as
/// occurring elsewhere.
pub fn classify_closures(
    body: &[Atom],
    filters: &[Filter],
) -> Result<ClosurePartition, ClassifyError> {
    let jg = join_graph(body);
    if !jg.is_connected() {
        return Err(ClassifyError::Disconnected);
    }
    let mut part =
        ClosurePartition { non_recursive: Vec::new(), interior: Vec::new(), exterior: Vec::new() };
    for (i, atom) in body.iter().enumerate() {
        if !atom.closure {
            part.non_recursive.push(i);
            continue;
        }
        let vars: Vec<&str> = atom.vars().collect();
        if vars.len() != 2 || vars[0] == vars[1] {
            return Err(ClassifyError::BadClosure(atom.to_string()));
        }
        let occurs_elsewhere = |v: &str| -> bool {
            body.iter().enumerate().any(|(j, other)| j != i && other.vars().any(|w| w == v))
                || filters.iter().any(|f| f.var == v)
        };
        let (s, t) = (occurs_elsewhere(vars[0]), occurs_elsewhere(vars[1]));
        match (s, t) {
            (true, true) => part.interior.push(i),
            (true, false) | (false, true) => part.exterior.push(i),
            (false, false) => return Err(ClassifyError::Disconnected),
        }
    }
    Ok(part)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("rule for `{pred}`: head variable `{var}` does not occur in any body atom")]
    UnsafeRule { pred: String, var: String },
    #[error("predicate `{0}` is referenced but never defined")]
    UndefinedPredicate(String),
    #[error("closure over `{0}`: predicate must be rule-defined with a binary head")]
    ClosureArity(String),
    #[error("closure atom `{0}` must apply to two distinct variables")]
    ClosureTerms(String),
    #[error("extensional predicate `{pred}` used with arity {got}, expected 3")]
    ExtensionalArity { pred: String, got: usize },
    #[error("cyclic predicate dependency through `{0}` (recursion is only allowed via `+`)")]
    DependencyCycle(String),
    #[error("filter variable `{0}` does not occur in any body atom")]
    DanglingFilterVar(String),
    #[error("rule for `{0}`: constants are not allowed in rule heads")]
    ConstInRuleHead(String),
    #[error("program defines no rules")]
    EmptyProgram,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Turnstile,
    Plus,
    Eq,
    Eof,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src: src.as_bytes(), pos: 0 }
    }

    fn skip_ws(&mut self) {
        loop {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.src.len() && (self.src[self.pos] == b'#' || self.src[self.pos] == b'%')
            {
                while self.pos < self.src.len() && self.src[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn next(&mut self) -> Result<(usize, Tok), QueryError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((start, Tok::Eof));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            b'.' => {
                self.pos += 1;
                Tok::Dot
            }
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'=' => {
                self.pos += 1;
                Tok::Eq
            }
            b':' => {
                if self.src.get(self.pos + 1) == Some(&b'-') {
                    self.pos += 2;
                    Tok::Turnstile
                } else {
                    return Err(QueryError::Syntax {
                        pos: start,
                        msg: "expected `:-`".into(),
                    });
                }
            }
            b'"' => {
                self.pos += 1;
                let mut s = String::new();
                while self.pos < self.src.len() && self.src[self.pos] != b'"' {
                    s.push(self.src[self.pos] as char);
                    self.pos += 1;
                }
                if self.pos >= self.src.len() {
                    return Err(QueryError::Syntax { pos: start, msg: "unterminated string".into() });
                }
                self.pos += 1;
                Tok::Str(s)
            }
            b'-' | b'0'..=b'9' => {
                let neg = c == b'-';
                if neg {
                    self.pos += 1;
                }
                let digits_start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                if digits_start == self.pos {
                    return Err(QueryError::Syntax { pos: start, msg: "expected digits".into() });
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v = text.parse::<i64>().map_err(|_| QueryError::Syntax {
                    pos: start,
                    msg: format!("integer `{text}` out of range"),
                })?;
                Tok::Int(v)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string())
            }
            other => {
                return Err(QueryError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok((start, tok))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    lookahead: (usize, Tok),
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, QueryError> {
        let mut lexer = Lexer::new(src);
        let lookahead = lexer.next()?;
        Ok(Parser { lexer, lookahead })
    }

    fn peek(&self) -> &Tok {
        &self.lookahead.1
    }

    fn advance(&mut self) -> Result<(usize, Tok), QueryError> {
        let tok = std::mem::replace(&mut self.lookahead, (0, Tok::Eof));
        self.lookahead = self.lexer.next()?;
        Ok(tok)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), QueryError> {
        let (pos, got) = self.advance()?;
        if got == want {
            Ok(())
        } else {
            Err(QueryError::Syntax { pos, msg: format!("expected {what}, found {got:?}") })
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, QueryError> {
        let (pos, tok) = self.advance()?;
        match tok {
            Tok::Ident(s) => Ok(s),
            other => {
                Err(QueryError::Syntax { pos, msg: format!("expected {what}, found {other:?}") })
            }
        }
    }

    fn term(&mut self) -> Result<Term, QueryError> {
        let (pos, tok) = self.advance()?;
        match tok {
            Tok::Ident(s) => Ok(Term::Var(s)),
            Tok::Int(i) => Ok(Term::Const(Constant::Int(i))),
            Tok::Str(s) => Ok(Term::Const(Constant::Str(s))),
            other => {
                Err(QueryError::Syntax { pos, msg: format!("expected term, found {other:?}") })
            }
        }
    }

    fn term_list(&mut self) -> Result<Vec<Term>, QueryError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut terms = vec![self.term()?];
        loop {
            match self.peek() {
                Tok::Comma => {
                    self.advance()?;
                    terms.push(self.term()?);
                }
                Tok::RParen => {
                    self.advance()?;
                    return Ok(terms);
                }
                _ => {
                    let (pos, tok) = self.advance()?;
                    return Err(QueryError::Syntax {
                        pos,
                        msg: format!("expected `,` or `)`, found {tok:?}"),
                    });
                }
            }
        }
    }

    fn rule(&mut self) -> Result<Rule, QueryError> {
        let pred = self.ident("predicate name")?;
        let terms = self.term_list()?;
        let head = Atom { predicate: pred, terms, closure: false };
        self.expect(Tok::Turnstile, "`:-`")?;
        let mut body = Vec::new();
        let mut filters = Vec::new();
        loop {
            let name = self.ident("literal")?;
            match self.peek() {
                Tok::Eq => {
                    self.advance()?;
                    let (pos, tok) = self.advance()?;
                    let value = match tok {
                        Tok::Int(i) => Constant::Int(i),
                        Tok::Str(s) => Constant::Str(s),
                        other => {
                            return Err(QueryError::Syntax {
                                pos,
                                msg: format!("expected constant after `=`, found {other:?}"),
                            })
                        }
                    };
                    filters.push(Filter { var: name, value });
                }
                Tok::Plus => {
                    self.advance()?;
                    let terms = self.term_list()?;
                    body.push(Atom { predicate: name, terms, closure: true });
                }
                _ => {
                    let terms = self.term_list()?;
                    body.push(Atom { predicate: name, terms, closure: false });
                }
            }
            match self.peek() {
                Tok::Comma => {
                    self.advance()?;
                }
                Tok::Dot => {
                    self.advance()?;
                    break;
                }
                _ => {
                    let (pos, tok) = self.advance()?;
                    return Err(QueryError::Syntax {
                        pos,
                        msg: format!("expected `,` or `.`, found {tok:?}"),
                    });
                }
            }
        }
        Ok(Rule { head, body, filters })
    }
}

/// Parses the textual query language and validates program well-formedness.
pub fn parse_program(src: &str) -> Result<Program, QueryError> {
    let mut p = Parser::new(src)?;
    let mut rules = Vec::new();
    while *p.peek() != Tok::Eof {
        rules.push(p.rule()?);
    }
    if rules.is_empty() {
        return Err(QueryError::EmptyProgram);
    }
    let mut by_predicate: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in rules.iter().enumerate() {
        by_predicate.entry(r.head.predicate.clone()).or_default().push(i);
    }
    let answer = if by_predicate.contains_key("Ans") {
        "Ans".to_string()
    } else {
        rules.last().unwrap().head.predicate.clone()
    };
    let program = Program { rules, by_predicate, answer };
    validate_program(&program)?;
    Ok(program)
}

fn validate_program(p: &Program) -> Result<(), QueryError> {
    for rule in &p.rules {
        let body_vars: BTreeSet<&str> = rule.body.iter().flat_map(|a| a.vars()).collect();
        for v in rule.head.vars() {
            if !body_vars.contains(v) {
                return Err(QueryError::UnsafeRule {
                    pred: rule.head.predicate.clone(),
                    var: v.to_string(),
                });
            }
        }
        if rule.head.terms.iter().any(|t| matches!(t, Term::Const(_))) {
            return Err(QueryError::ConstInRuleHead(rule.head.predicate.clone()));
        }
        for f in &rule.filters {
            if !body_vars.contains(f.var.as_str()) {
                return Err(QueryError::DanglingFilterVar(f.var.clone()));
            }
        }
        for atom in &rule.body {
            if atom.is_extensional() {
                if atom.closure {
                    return Err(QueryError::ClosureArity(atom.predicate.clone()));
                }
                if atom.terms.len() != 3 {
                    return Err(QueryError::ExtensionalArity {
                        pred: atom.predicate.clone(),
                        got: atom.terms.len(),
                    });
                }
                continue;
            }
            let defs = p.by_predicate.get(&atom.predicate);
            if defs.is_none() {
                return Err(QueryError::UndefinedPredicate(atom.predicate.clone()));
            }
            let head_arity = p.rules[defs.unwrap()[0]].head.terms.len();
            if atom.terms.len() != head_arity {
                return Err(QueryError::Syntax {
                    pos: 0,
                    msg: format!(
                        "`{}` used with arity {}, defined with {}",
                        atom.predicate,
                        atom.terms.len(),
                        head_arity
                    ),
                });
            }
            if atom.closure {
                if head_arity != 2 || atom.terms.len() != 2 {
                    return Err(QueryError::ClosureArity(atom.predicate.clone()));
                }
                let vars: Vec<&str> = atom.vars().collect();
                if vars.len() != 2 || vars[0] == vars[1] {
                    return Err(QueryError::ClosureTerms(atom.to_string()));
                }
            }
        }
    }
    // Full dependency acyclicity: recursion only via the closure marker,
    // and closures only over predicates that do not (transitively) depend
    // on themselves.
    let mut visiting = BTreeSet::new();
    let mut done = BTreeSet::new();
    fn visit(
        p: &Program,
        pred: &str,
        visiting: &mut BTreeSet<String>,
        done: &mut BTreeSet<String>,
    ) -> Result<(), QueryError> {
        if done.contains(pred) {
            return Ok(());
        }
        if !visiting.insert(pred.to_string()) {
            return Err(QueryError::DependencyCycle(pred.to_string()));
        }
        for rule in p.rules_for(pred) {
            for atom in &rule.body {
                if !atom.is_extensional() {
                    visit(p, &atom.predicate, visiting, done)?;
                }
            }
        }
        visiting.remove(pred);
        done.insert(pred.to_string());
        Ok(())
    }
    for pred in p.by_predicate.keys() {
        visit(p, pred, &mut visiting, &mut done)?;
    }
    Ok(())
}
