//! Counter machine to chain-of-thought compilation.
//!
//! Every scheme emits one CoT token per machine transition (`t0`, `t1`, ...
//! in transition order) and reconstructs the counters at each step as prefix
//! counts of those tokens. The schemes differ in how the input is turned into
//! initial counter values:
//!
//! * permutation invariant: counter `i` starts at the number of `a_i` letters;
//! * letter bounded: the same, but any input outside `a_1* ... a_n*` is
//!   rejected on the first step;
//! * general: a padding phase appends dummies `d_i` until the current length
//!   encodes the positions of `a_i`, then places a marker `m_i`; counter `i`
//!   starts at the position before that marker.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cm::{CounterMachine, Guard, Test};
use crate::cot::{CotProgram, CotRule, ProgramError};
use crate::crasp::{tok, CmpOp, Formula, RelationTable, Term, Token};
use crate::rpe::RpeKind;

/// Relation names used by general-mode programs.
pub const REL_ONE: &str = "one";
pub const REL_LEN: &str = "len";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PermutationInvariant,
    LetterBounded,
    General,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::PermutationInvariant => "perm",
            Mode::LetterBounded => "bounded",
            Mode::General => "general",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mode `{0}` (expected perm, bounded or general)")]
pub struct UnknownMode(pub String);

impl FromStr for Mode {
    type Err = UnknownMode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perm" | "permutation_invariant" => Ok(Mode::PermutationInvariant),
            "bounded" | "letter_bounded" => Ok(Mode::LetterBounded),
            "general" | "general_rpe" => Ok(Mode::General),
            _ => Err(UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("alphabet has {n} letters but the machine has only {k} counters")]
    ArityMismatch { n: usize, k: usize },
    #[error("input alphabet is empty")]
    EmptyAlphabet,
    #[error("input letter `{0}` clashes with a generated token name")]
    NameClash(Token),
    #[error("guard mentions x{} but no value was supplied for it", .0 + 1)]
    MissingSubstitution(usize),
    #[error(transparent)]
    Program(#[from] ProgramError),
}

#[derive(Debug, Clone)]
pub struct CompilationSpec {
    pub machine: CounterMachine,
    pub sigma: Vec<Token>,
    pub mode: Mode,
    /// General mode only: also require the encoded length to match the input.
    pub strict_length: bool,
}

impl CompilationSpec {
    pub fn new(machine: CounterMachine, sigma: Vec<Token>, mode: Mode) -> Result<Self, CompileError> {
        if sigma.is_empty() {
            return Err(CompileError::EmptyAlphabet);
        }
        if sigma.len() > machine.k() {
            return Err(CompileError::ArityMismatch {
                n: sigma.len(),
                k: machine.k(),
            });
        }
        Ok(CompilationSpec {
            machine,
            sigma,
            mode,
            strict_length: true,
        })
    }

    pub fn strict_length(mut self, strict: bool) -> Self {
        self.strict_length = strict;
        self
    }
}

pub fn compile(spec: &CompilationSpec) -> Result<CotProgram, CompileError> {
    match spec.mode {
        Mode::PermutationInvariant => compile_permutation_invariant(spec),
        Mode::LetterBounded => compile_letter_bounded(spec),
        Mode::General => compile_general(spec),
    }
}

/// Token emitted for transition `i`.
pub fn transition_token(i: usize) -> Token {
    tok(&format!("t{i}"))
}

/// Dummy letter `d_i` (1-based) of the padding phase.
pub fn dummy_token(i: usize) -> Token {
    tok(&format!("d{i}"))
}

/// Marker `m_i` (1-based) closing the padding for letter `i`.
pub fn marker_token(i: usize) -> Token {
    tok(&format!("m{i}"))
}

/// Lowers a guard under a per-counter substitution. Constant values fold
/// away; `Ok(None)` means the guard is unsatisfiable.
pub fn fold_guard(guard: &Guard, subst: &[Option<Term>]) -> Result<Option<Formula>, CompileError> {
    let mut parts = Vec::new();
    for atom in guard.atoms() {
        let term = subst
            .get(atom.counter)
            .and_then(Option::as_ref)
            .ok_or(CompileError::MissingSubstitution(atom.counter))?;
        let (op, holds): (CmpOp, fn(u64) -> bool) = match atom.test {
            Test::Zero => (CmpOp::Eq, |c| c == 0),
            Test::Positive => (CmpOp::Gt, |c| c > 0),
        };
        match term {
            Term::Const(c) if holds(*c) => {}
            Term::Const(_) => return Ok(None),
            t => parts.push(Formula::cmp(t.clone(), op, Term::Const(0))),
        }
    }
    Ok(Some(Formula::conjunction(parts)))
}

/// `guard & rest`, leaving out a trivially true guard.
fn guarded(guard: Formula, rest: Formula) -> Formula {
    match guard {
        Formula::True => rest,
        g => Formula::and(g, rest),
    }
}

/// `base + sum_rho u_rho(i) * #[Q(t_rho)]`: positive coefficients are added
/// first, negative ones subtracted after, zero ones dropped.
fn counter_term(machine: &CounterMachine, i: usize, base: Option<Term>) -> Term {
    let count = |rho: usize, u: i64| {
        let c = Term::count_of(transition_token(rho));
        match u.unsigned_abs() {
            1 => c,
            m => Term::scale(m, c),
        }
    };
    let effects: Vec<(usize, i64)> = machine
        .transitions()
        .iter()
        .enumerate()
        .map(|(rho, t)| (rho, t.effect[i]))
        .filter(|&(_, u)| u != 0)
        .collect();
    let mut term = base;
    for &(rho, u) in effects.iter().filter(|(_, u)| *u > 0) {
        let c = count(rho, u);
        term = Some(match term {
            None => c,
            Some(t) => Term::add(t, c),
        });
    }
    let mut term = term.unwrap_or(Term::Const(0));
    for &(rho, u) in effects.iter().filter(|(_, u)| *u < 0) {
        term = Term::sub(term, count(rho, u));
    }
    term
}

fn check_names(spec: &CompilationSpec, extra: &[Token]) -> Result<(), CompileError> {
    let generated: Vec<Token> = (0..spec.machine.transitions().len())
        .map(transition_token)
        .chain(extra.iter().cloned())
        .collect();
    match spec.sigma.iter().find(|a| generated.contains(a)) {
        Some(a) => Err(CompileError::NameClash(a.clone())),
        None => Ok(()),
    }
}

/// Rules that fire once the machine has started: after `t_rho`, emit the
/// unique enabled successor under the counters rebuilt from `init`.
fn simulation_rules(spec: &CompilationSpec, init: &[Option<Term>]) -> Result<Vec<CotRule>, CompileError> {
    let m = &spec.machine;
    let counters: Vec<Option<Term>> = (0..m.k()).map(|i| Some(counter_term(m, i, init[i].clone()))).collect();
    let mut rules = Vec::new();
    for (rho, prev) in m.transitions().iter().enumerate() {
        for (tau, next) in m.transitions().iter().enumerate() {
            if next.src != prev.tgt {
                continue;
            }
            if let Some(g) = fold_guard(&next.guard, &counters)? {
                let body = guarded(g, Formula::atom(transition_token(rho)));
                rules.push(CotRule::new(transition_token(tau), body));
            }
        }
    }
    Ok(rules)
}

/// The first transition, chosen from the initial counters `init` once `last`
/// is the final token of the input phase.
fn launch_rules(spec: &CompilationSpec, init: &[Option<Term>], last: &Token) -> Result<Vec<CotRule>, CompileError> {
    let m = &spec.machine;
    let mut rules = Vec::new();
    for (tau, t) in m.transitions().iter().enumerate() {
        if t.src != m.initial() {
            continue;
        }
        if let Some(g) = fold_guard(&t.guard, init)? {
            rules.push(CotRule::new(transition_token(tau), guarded(g, Formula::atom(last.clone()))));
        }
    }
    Ok(rules)
}

fn letter_counts(spec: &CompilationSpec) -> Vec<Option<Term>> {
    (0..spec.machine.k())
        .map(|i| spec.sigma.get(i).map(|a| Term::count_of(a.clone())))
        .collect()
}

fn finals(spec: &CompilationSpec) -> Vec<Token> {
    let m = &spec.machine;
    m.transitions()
        .iter()
        .enumerate()
        .filter(|(_, t)| m.is_final(t.tgt))
        .map(|(i, _)| transition_token(i))
        .collect()
}

fn gamma(spec: &CompilationSpec, extra: &[Token]) -> Vec<Token> {
    spec.sigma
        .iter()
        .cloned()
        .chain(extra.iter().cloned())
        .chain((0..spec.machine.transitions().len()).map(transition_token))
        .collect()
}

/// Counters start at the letter counts of the input.
pub fn compile_permutation_invariant(spec: &CompilationSpec) -> Result<CotProgram, CompileError> {
    let rules = permutation_invariant_rules(spec)?;
    Ok(CotProgram::new(spec.sigma.clone(), gamma(spec, &[]), finals(spec), rules, RelationTable::new())?)
}

fn permutation_invariant_rules(spec: &CompilationSpec) -> Result<Vec<CotRule>, CompileError> {
    check_names(spec, &[])?;
    let counts = letter_counts(spec);
    let init: Vec<Option<Term>> = counts.iter().map(|c| Some(c.clone().unwrap_or(Term::Const(0)))).collect();
    let mut rules = Vec::new();
    for a in &spec.sigma {
        rules.extend(launch_rules(spec, &init, a)?);
    }
    rules.extend(simulation_rules(spec, &counts)?);
    Ok(rules)
}

/// As the permutation-invariant scheme, with every rule also requiring that
/// no `a_i` follows an `a_j` for `i < j`.
pub fn compile_letter_bounded(spec: &CompilationSpec) -> Result<CotProgram, CompileError> {
    let sorted = Formula::conjunction(spec.sigma.iter().enumerate().flat_map(|(i, ai)| {
        spec.sigma[i + 1..].iter().map(move |aj| {
            let misplaced = Formula::and(
                Formula::atom(ai.clone()),
                Formula::cmp(Term::count_of(aj.clone()), CmpOp::Gt, Term::Const(0)),
            );
            Formula::cmp(Term::count(misplaced), CmpOp::Eq, Term::Const(0))
        })
    }));
    let mut rules = permutation_invariant_rules(spec)?;
    if sorted != Formula::True {
        for r in &mut rules {
            r.body = Formula::and(std::mem::replace(&mut r.body, Formula::True), sorted.clone());
        }
    }
    Ok(CotProgram::new(spec.sigma.clone(), gamma(spec, &[]), finals(spec), rules, RelationTable::new())?)
}

/// `#[#[Q(m_i)] = 0]`: the number of positions before marker `m_i`.
pub fn marker_position_term(i: usize) -> Term {
    Term::count(Formula::cmp(Term::count_of(marker_token(i)), CmpOp::Eq, Term::Const(0)))
}

/// The padding check for letter `i` (1-based) at the current length `l`:
/// the one-digits of the code of `l` sit exactly on the `a_i` positions.
fn encodes_letter(spec: &CompilationSpec, i: usize) -> Formula {
    let a = &spec.sigma[i - 1];
    let count_a = || Term::count_of(a.clone());
    let mut parts = vec![
        Formula::cmp(Term::count_rel(REL_ONE, Formula::atom(a.clone())), CmpOp::Eq, count_a()),
        Formula::cmp(Term::count_rel(REL_ONE, Formula::True), CmpOp::Eq, count_a()),
    ];
    if spec.strict_length {
        let total = spec
            .sigma
            .iter()
            .map(|b| Term::count_of(b.clone()))
            .reduce(Term::add)
            .expect("alphabet is nonempty");
        parts.push(Formula::cmp(Term::count_rel(REL_LEN, Formula::True), CmpOp::Eq, total));
    }
    Formula::conjunction(parts)
}

/// Pads the input until each letter's positions are encoded, then runs the
/// machine from the recovered codes.
pub fn compile_general(spec: &CompilationSpec) -> Result<CotProgram, CompileError> {
    let n = spec.sigma.len();
    let dummies: Vec<Token> = (1..=n).map(dummy_token).collect();
    let markers: Vec<Token> = (1..=n).map(marker_token).collect();
    let extra: Vec<Token> = dummies.iter().chain(&markers).cloned().collect();
    check_names(spec, &extra)?;

    let mut rules = Vec::new();
    for a in &spec.sigma {
        rules.push(CotRule::new(dummies[0].clone(), Formula::atom(a.clone())));
    }
    for i in 1..=n {
        let body = Formula::and(Formula::atom(dummies[i - 1].clone()), encodes_letter(spec, i));
        rules.push(CotRule::new(markers[i - 1].clone(), body));
    }
    for i in 1..=n {
        let body = Formula::and(Formula::atom(dummies[i - 1].clone()), Formula::not(encodes_letter(spec, i)));
        rules.push(CotRule::new(dummies[i - 1].clone(), body));
    }
    for i in 1..n {
        rules.push(CotRule::new(dummies[i].clone(), Formula::atom(markers[i - 1].clone())));
    }
    let codes: Vec<Option<Term>> = (0..spec.machine.k())
        .map(|i| (i < n).then(|| marker_position_term(i + 1)))
        .collect();
    let init: Vec<Option<Term>> = codes.iter().map(|c| Some(c.clone().unwrap_or(Term::Const(0)))).collect();
    rules.extend(launch_rules(spec, &init, &markers[n - 1])?);
    rules.extend(simulation_rules(spec, &codes)?);

    let relations = RelationTable::new().with(REL_ONE, RpeKind::One).with(REL_LEN, RpeKind::Len);
    Ok(CotProgram::new(spec.sigma.clone(), gamma(spec, &extra), finals(spec), rules, relations)?)
}

/// Initial counter values recovered by the padding phase of a general-mode
/// run: one less than the absolute position of each marker. `None` until
/// every marker is present.
pub fn marker_values(input_len: usize, trace: &[Token], n: usize) -> Option<Vec<u64>> {
    (1..=n)
        .map(|i| {
            let m = marker_token(i);
            trace.iter().position(|t| *t == m).map(|p| (input_len + p) as u64)
        })
        .collect()
}
