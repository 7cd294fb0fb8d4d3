//! A macro assembler for register programs that lowers to deterministic
//! counter machines, with a standard macro library and task machines.

mod machines;

use std::collections::HashMap;
use std::sync::OnceLock;

use thiserror::Error;

use crate::cm::{CmError, CounterMachine, Guard, Transition};
use crate::dsl::{parse_asm, ParseError};

pub use machines::{machine_source, stdlib_machine, MachineError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Inc(String),
    Dec(String),
    Goto(String),
    /// Branch to the label when the counter is zero.
    Bz(String, String),
    Accept,
    Reject,
    Call { name: String, args: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Label(String),
    Instr(Instr),
}

/// Parameters may name counters or labels; their role follows from use.
/// Temps are drawn from the caller's free pool, zero on entry, and must be
/// returned zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacroDef {
    pub name: String,
    pub params: Vec<String>,
    pub temps: Vec<String>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AsmProgram {
    pub inputs: Vec<String>,
    pub aux: Vec<String>,
    pub macros: Vec<MacroDef>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("unresolved label `{0}`")]
    UnresolvedLabel(String),
    #[error("label `{0}` defined twice")]
    DuplicateLabel(String),
    #[error("counter `{0}` declared twice")]
    DuplicateCounter(String),
    #[error("`{0}` is not a counter")]
    UnknownCounter(String),
    #[error("unknown macro `{0}`")]
    UnknownMacro(String),
    #[error("macro `{0}` defined twice")]
    DuplicateMacro(String),
    #[error("macro `{name}` takes {expected} arguments, got {got}")]
    MacroArity { name: String, expected: usize, got: usize },
    #[error("macro `{0}` needs more temp counters than the aux pool has free")]
    TempPoolExhausted(String),
    #[error("macro expansion of `{0}` nests too deeply")]
    RecursiveMacro(String),
    #[error("assembled machine is invalid: {0}")]
    DeterminismViolation(CmError),
}

#[derive(Debug, Error)]
pub enum AsmSourceError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Asm(#[from] AsmError),
}

const STDLIB_SOURCE: &str = include_str!("stdlib.asm");

/// Macros available to every program unless shadowed.
pub fn stdlib_macros() -> &'static [MacroDef] {
    static LIB: OnceLock<Vec<MacroDef>> = OnceLock::new();
    LIB.get_or_init(|| {
        parse_asm(STDLIB_SOURCE)
            .expect("stdlib parses")
            .macros
    })
}

pub fn stdlib_source() -> &'static str {
    STDLIB_SOURCE
}

pub fn assemble_str(text: &str) -> Result<CounterMachine, AsmSourceError> {
    Ok(assemble(&parse_asm(text)?)?)
}

#[derive(Debug, Clone)]
enum Flat {
    Inc(usize),
    Dec(usize),
    Goto(String),
    Bz(usize, String),
    Accept,
    Reject,
}

const MAX_DEPTH: usize = 64;

struct Expander<'a> {
    counters: HashMap<&'a str, usize>,
    macros: HashMap<&'a str, &'a MacroDef>,
    /// Aux counters free for temps, in declaration order, and whether taken.
    pool: Vec<(usize, bool)>,
    out: Vec<Flat>,
    labels: HashMap<String, usize>,
    next_scope: usize,
}

/// Bindings visible inside one expansion.
struct Scope<'s> {
    id: usize,
    binds: HashMap<&'s str, String>,
    top: bool,
}

impl Scope<'_> {
    fn label(&self, name: &str) -> String {
        match self.binds.get(name) {
            Some(b) => b.clone(),
            None if self.top => name.to_string(),
            None => format!("{name}@{}", self.id),
        }
    }
}

impl<'a> Expander<'a> {
    fn counter(&self, scope: &Scope, name: &str) -> Result<usize, AsmError> {
        let resolved = match scope.binds.get(name) {
            Some(b) => b.as_str(),
            None if scope.top => name,
            None => return Err(AsmError::UnknownCounter(name.to_string())),
        };
        self.counters
            .get(resolved)
            .copied()
            .ok_or_else(|| AsmError::UnknownCounter(resolved.to_string()))
    }

    fn define(&mut self, label: String) -> Result<(), AsmError> {
        if self.labels.insert(label.clone(), self.out.len()).is_some() {
            return Err(AsmError::DuplicateLabel(label));
        }
        Ok(())
    }

    fn expand(&mut self, body: &'a [Stmt], scope: &Scope, depth: usize) -> Result<(), AsmError> {
        for stmt in body {
            let instr = match stmt {
                Stmt::Label(l) => {
                    self.define(scope.label(l))?;
                    continue;
                }
                Stmt::Instr(i) => i,
            };
            let flat = match instr {
                Instr::Inc(r) => Flat::Inc(self.counter(scope, r)?),
                Instr::Dec(r) => Flat::Dec(self.counter(scope, r)?),
                Instr::Goto(l) => Flat::Goto(scope.label(l)),
                Instr::Bz(r, l) => Flat::Bz(self.counter(scope, r)?, scope.label(l)),
                Instr::Accept => Flat::Accept,
                Instr::Reject => Flat::Reject,
                Instr::Call { name, args } => {
                    self.call(name, args, scope, depth)?;
                    continue;
                }
            };
            self.out.push(flat);
        }
        Ok(())
    }

    fn call(&mut self, name: &str, args: &[String], scope: &Scope, depth: usize) -> Result<(), AsmError> {
        let def = *self
            .macros
            .get(name)
            .ok_or_else(|| AsmError::UnknownMacro(name.to_string()))?;
        if def.params.len() != args.len() {
            return Err(AsmError::MacroArity {
                name: name.to_string(),
                expected: def.params.len(),
                got: args.len(),
            });
        }
        if depth >= MAX_DEPTH {
            return Err(AsmError::RecursiveMacro(name.to_string()));
        }
        let mut binds = HashMap::new();
        for (p, a) in def.params.iter().zip(args) {
            // Counters pass through by name; anything else is a label.
            let bound = match scope.binds.get(a.as_str()) {
                Some(b) => b.clone(),
                None if self.counters.contains_key(a.as_str()) && scope.top => a.clone(),
                None => scope.label(a),
            };
            binds.insert(p.as_str(), bound);
        }
        let mut taken = Vec::new();
        for t in &def.temps {
            let slot = self
                .pool
                .iter()
                .position(|&(_, used)| !used)
                .ok_or_else(|| AsmError::TempPoolExhausted(name.to_string()))?;
            self.pool[slot].1 = true;
            taken.push(slot);
            let counter = self.pool[slot].0;
            let cname = self
                .counters
                .iter()
                .find(|&(_, &i)| i == counter)
                .map(|(n, _)| n.to_string())
                .expect("pool counters are declared");
            binds.insert(t.as_str(), cname);
        }
        self.next_scope += 1;
        let inner = Scope {
            id: self.next_scope,
            binds,
            top: false,
        };
        let res = self.expand(&def.body, &inner, depth + 1);
        for slot in taken {
            self.pool[slot].1 = false;
        }
        res
    }
}

fn top_level_counters<'a>(body: &'a [Stmt], out: &mut Vec<&'a str>) {
    for s in body {
        match s {
            Stmt::Instr(Instr::Inc(r) | Instr::Dec(r) | Instr::Bz(r, _)) => out.push(r),
            Stmt::Instr(Instr::Call { args, .. }) => out.extend(args.iter().map(String::as_str)),
            _ => {}
        }
    }
}

/// Expands macros and lowers to a machine with one state per instruction
/// (`q0`, `q1`, ...), a stuck state past the last instruction and a single
/// final state `acc`.
pub fn assemble(p: &AsmProgram) -> Result<CounterMachine, AsmError> {
    let mut counters = HashMap::new();
    for (i, c) in p.inputs.iter().chain(&p.aux).enumerate() {
        if counters.insert(c.as_str(), i).is_some() {
            return Err(AsmError::DuplicateCounter(c.clone()));
        }
    }
    let mut macros: HashMap<&str, &MacroDef> = stdlib_macros().iter().map(|m| (m.name.as_str(), m)).collect();
    let mut own = HashMap::new();
    for m in &p.macros {
        if own.insert(m.name.as_str(), ()).is_some() {
            return Err(AsmError::DuplicateMacro(m.name.clone()));
        }
        macros.insert(m.name.as_str(), m);
    }
    let mut used = Vec::new();
    top_level_counters(&p.body, &mut used);
    let pool = p
        .aux
        .iter()
        .filter(|a| !used.contains(&a.as_str()))
        .map(|a| (counters[a.as_str()], false))
        .collect();
    let mut ex = Expander {
        counters,
        macros,
        pool,
        out: Vec::new(),
        labels: HashMap::new(),
        next_scope: 0,
    };
    let top = Scope {
        id: 0,
        binds: HashMap::new(),
        top: true,
    };
    ex.expand(&p.body, &top, 0)?;
    lower(p.inputs.len() + p.aux.len(), &ex.out, &ex.labels)
}

fn lower(k: usize, code: &[Flat], labels: &HashMap<String, usize>) -> Result<CounterMachine, AsmError> {
    let m = code.len();
    let acc = m + 1;
    let mut states: Vec<String> = (0..=m).map(|i| format!("q{i}")).collect();
    states.push("acc".into());
    let target = |l: &String| {
        labels
            .get(l)
            .copied()
            .ok_or_else(|| AsmError::UnresolvedLabel(l.split('@').next().unwrap_or(l).to_string()))
    };
    let unit = |r: usize, d: i64| {
        let mut e = vec![0; k];
        e[r] = d;
        e
    };
    let mut ts = Vec::new();
    let mut t = |src, guard, tgt, effect| ts.push(Transition { src, guard, tgt, effect });
    for (i, f) in code.iter().enumerate() {
        match f {
            Flat::Inc(r) => t(i, Guard::always(), i + 1, unit(*r, 1)),
            Flat::Dec(r) => t(i, Guard::positive(*r), i + 1, unit(*r, -1)),
            Flat::Goto(l) => t(i, Guard::always(), target(l)?, vec![0; k]),
            Flat::Bz(r, l) => {
                t(i, Guard::zero(*r), target(l)?, vec![0; k]);
                t(i, Guard::positive(*r), i + 1, vec![0; k]);
            }
            Flat::Accept => t(i, Guard::always(), acc, vec![0; k]),
            Flat::Reject => {}
        }
    }
    CounterMachine::new(k, states, ts, 0, vec![acc]).map_err(AsmError::DeterminismViolation)
}
