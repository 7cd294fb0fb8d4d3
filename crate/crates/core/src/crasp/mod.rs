//! C-RASP syntax: boolean formulas and count-valued terms over string
//! positions, optionally counting through a named positional relation.

mod batch;
mod table;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rpe::RpeKind;

pub use batch::{eval_formula, eval_term};
pub use table::{NodeId, Plan, PositionTable, Scratch, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("input word is empty")]
    EmptyWord,
    #[error("unknown token `{0}`")]
    UnknownToken(Token),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("integer overflow while evaluating a term")]
    IntegerOverflow,
    #[error("no positions have been pushed")]
    EmptyState,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{0}` is not an ASCII identifier")]
pub struct InvalidToken(pub String);

/// An interned alphabet symbol. Names are ASCII identifiers.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(Arc<str>);

impl Token {
    pub fn new(name: &str) -> Result<Self, InvalidToken> {
        if is_identifier(name) {
            Ok(Token(Arc::from(name)))
        } else {
            Err(InvalidToken(name.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Builds a token from a name known to be valid.
///
/// Panics on names that are not ASCII identifiers.
pub fn tok(name: &str) -> Token {
    Token::new(name).expect("valid token name")
}

/// Builds a token word from whitespace- or comma-separated names.
pub fn word(names: &str) -> Vec<Token> {
    names
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(tok)
        .collect()
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl fmt::Debug for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Token {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Token {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Token::new(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Eq,
    Gt,
}

impl CmpOp {
    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Gt => lhs > rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Eq => "=",
            CmpOp::Gt => ">",
        }
    }
}

/// Boolean-valued expressions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    Atom(Token),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Compare(Term, CmpOp, Term),
}

/// Count-valued expressions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Const(u64),
    /// Prefix count of positions satisfying the formula.
    Count(Box<Formula>),
    /// Count restricted to positions related to the current one.
    CountRel(String, Box<Formula>),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    /// `k`-fold sum of the term.
    Scale(u64, Box<Term>),
}

impl Formula {
    pub fn atom(t: Token) -> Self {
        Formula::Atom(t)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn cmp(a: Term, op: CmpOp, b: Term) -> Self {
        Formula::Compare(a, op, b)
    }

    /// Left-nested conjunction; `True` for an empty iterator.
    pub fn conjunction<I: IntoIterator<Item = Formula>>(items: I) -> Self {
        items
            .into_iter()
            .reduce(Formula::and)
            .unwrap_or(Formula::True)
    }

    /// Calls `f` on every token mentioned by an atom.
    pub fn for_each_atom(&self, f: &mut impl FnMut(&Token)) {
        match self {
            Formula::True => {}
            Formula::Atom(t) => f(t),
            Formula::Not(a) => a.for_each_atom(f),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.for_each_atom(f);
                b.for_each_atom(f);
            }
            Formula::Compare(a, _, b) => {
                a.for_each_atom(f);
                b.for_each_atom(f);
            }
        }
    }

    pub fn for_each_relation(&self, f: &mut impl FnMut(&str)) {
        match self {
            Formula::True | Formula::Atom(_) => {}
            Formula::Not(a) => a.for_each_relation(f),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.for_each_relation(f);
                b.for_each_relation(f);
            }
            Formula::Compare(a, _, b) => {
                a.for_each_relation(f);
                b.for_each_relation(f);
            }
        }
    }
}

impl Term {
    pub fn count(f: Formula) -> Self {
        Term::Count(Box::new(f))
    }

    /// `#[Q(t)]`
    pub fn count_of(t: Token) -> Self {
        Term::count(Formula::Atom(t))
    }

    pub fn count_rel(rel: &str, f: Formula) -> Self {
        Term::CountRel(rel.to_string(), Box::new(f))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(a: Term, b: Term) -> Self {
        Term::Add(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(a: Term, b: Term) -> Self {
        Term::Sub(Box::new(a), Box::new(b))
    }

    pub fn scale(k: u64, t: Term) -> Self {
        Term::Scale(k, Box::new(t))
    }

    pub fn for_each_atom(&self, f: &mut impl FnMut(&Token)) {
        match self {
            Term::Const(_) => {}
            Term::Count(g) | Term::CountRel(_, g) => g.for_each_atom(f),
            Term::Add(a, b) | Term::Sub(a, b) => {
                a.for_each_atom(f);
                b.for_each_atom(f);
            }
            Term::Scale(_, t) => t.for_each_atom(f),
        }
    }

    pub fn for_each_relation(&self, f: &mut impl FnMut(&str)) {
        match self {
            Term::Const(_) => {}
            Term::Count(g) => g.for_each_relation(f),
            Term::CountRel(r, g) => {
                f(r);
                g.for_each_relation(f);
            }
            Term::Add(a, b) | Term::Sub(a, b) => {
                a.for_each_relation(f);
                b.for_each_relation(f);
            }
            Term::Scale(_, t) => t.for_each_relation(f),
        }
    }
}

/// Named relations available to `CountRel` terms, in declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationTable {
    entries: Vec<(String, RpeKind)>,
}

impl RelationTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares `name`; redeclaring an existing name replaces its kind.
    pub fn insert(&mut self, name: &str, kind: RpeKind) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some(entry) => entry.1 = kind,
            None => self.entries.push((name.to_string(), kind)),
        }
    }

    pub fn with(mut self, name: &str, kind: RpeKind) -> Self {
        self.insert(name, kind);
        self
    }

    pub fn get(&self, name: &str) -> Option<RpeKind> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, k)| k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, RpeKind)> {
        self.entries.iter().map(|(n, k)| (n.as_str(), *k))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, name: &str) -> Result<RpeKind, EvalError> {
        self.get(name)
            .ok_or_else(|| EvalError::UnknownRelation(name.to_string()))
    }
}

/// The combined alphabet and relation table an expression is evaluated under.
#[derive(Debug, Clone)]
pub struct Signature {
    alphabet: Vec<Token>,
    index: HashMap<Token, u32>,
    relations: RelationTable,
}

impl Signature {
    /// Duplicate tokens are collapsed; the first occurrence fixes the index.
    pub fn new<I: IntoIterator<Item = Token>>(alphabet: I, relations: RelationTable) -> Self {
        let mut tokens = Vec::new();
        let mut index = HashMap::new();
        for t in alphabet {
            if !index.contains_key(&t) {
                index.insert(t.clone(), tokens.len() as u32);
                tokens.push(t);
            }
        }
        Signature {
            alphabet: tokens,
            index,
            relations,
        }
    }

    pub fn alphabet(&self) -> &[Token] {
        &self.alphabet
    }

    pub fn relations(&self) -> &RelationTable {
        &self.relations
    }

    pub fn id(&self, t: &Token) -> Result<u32, EvalError> {
        self.index
            .get(t)
            .copied()
            .ok_or_else(|| EvalError::UnknownToken(t.clone()))
    }

    pub fn contains(&self, t: &Token) -> bool {
        self.index.contains_key(t)
    }

    /// Checks that every atom and relation used by `f` is declared.
    pub fn check_formula(&self, f: &Formula) -> Result<(), EvalError> {
        let mut err = None;
        f.for_each_atom(&mut |t| {
            if err.is_none() && !self.contains(t) {
                err = Some(EvalError::UnknownToken(t.clone()));
            }
        });
        f.for_each_relation(&mut |r| {
            if err.is_none() && self.relations.get(r).is_none() {
                err = Some(EvalError::UnknownRelation(r.to_string()));
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn check_term(&self, t: &Term) -> Result<(), EvalError> {
        self.check_formula(&Formula::cmp(t.clone(), CmpOp::Eq, Term::Const(0)))
    }
}
