//! Chain-of-thought programs: an ordered switch of rules `O_a <- phi`, run
//! autoregressively until a final token is emitted or no rule fires.

use std::collections::HashSet;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crasp::{eval_formula, EvalError, Formula, NodeId, Plan, PositionTable, RelationTable, Scratch, Signature, Token};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("token `{0}` declared twice in one alphabet")]
    DuplicateToken(Token),
    #[error("final token `{0}` is not a chain-of-thought token")]
    FinalNotInGamma(Token),
    #[error("rule {index} emits `{head}`, which is not a chain-of-thought token")]
    HeadNotInGamma { index: usize, head: Token },
    #[error("rule {index} (`{head}`): {source}")]
    InvalidBody {
        index: usize,
        head: Token,
        source: EvalError,
    },
    #[error("input alphabet is empty")]
    EmptySigma,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunError {
    #[error("input word is empty")]
    EmptyInput,
    #[error("input token `{0}` is not in the input alphabet")]
    NotInSigma(Token),
    #[error("fuel must be at least 1")]
    ZeroFuel,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CotRule {
    pub head: Token,
    pub body: Formula,
}

impl CotRule {
    pub fn new(head: Token, body: Formula) -> Self {
        CotRule { head, body }
    }
}

/// A validated chain-of-thought C-RASP program.
pub struct CotProgram {
    sigma: Vec<Token>,
    gamma: Vec<Token>,
    finals: Vec<Token>,
    rules: Vec<CotRule>,
    relations: RelationTable,
    engine: OnceLock<Arc<Engine>>,
}

impl CotProgram {
    pub fn new(
        sigma: Vec<Token>,
        gamma: Vec<Token>,
        finals: Vec<Token>,
        rules: Vec<CotRule>,
        relations: RelationTable,
    ) -> Result<Self, ProgramError> {
        if sigma.is_empty() {
            return Err(ProgramError::EmptySigma);
        }
        for list in [&sigma, &gamma, &finals] {
            let mut seen = HashSet::new();
            for t in list {
                if !seen.insert(t) {
                    return Err(ProgramError::DuplicateToken(t.clone()));
                }
            }
        }
        if let Some(f) = finals.iter().find(|f| !gamma.contains(f)) {
            return Err(ProgramError::FinalNotInGamma(f.clone()));
        }
        let sig = Signature::new(sigma.iter().chain(&gamma).cloned(), relations.clone());
        for (index, rule) in rules.iter().enumerate() {
            if !gamma.contains(&rule.head) {
                return Err(ProgramError::HeadNotInGamma {
                    index,
                    head: rule.head.clone(),
                });
            }
            sig.check_formula(&rule.body)
                .map_err(|source| ProgramError::InvalidBody {
                    index,
                    head: rule.head.clone(),
                    source,
                })?;
        }
        Ok(CotProgram {
            sigma,
            gamma,
            finals,
            rules,
            relations,
            engine: OnceLock::new(),
        })
    }

    pub fn sigma(&self) -> &[Token] {
        &self.sigma
    }

    pub fn gamma(&self) -> &[Token] {
        &self.gamma
    }

    pub fn finals(&self) -> &[Token] {
        &self.finals
    }

    pub fn rules(&self) -> &[CotRule] {
        &self.rules
    }

    pub fn relations(&self) -> &RelationTable {
        &self.relations
    }

    pub fn is_final(&self, t: &Token) -> bool {
        self.finals.contains(t)
    }

    /// Σ ∪ Γ, input tokens first.
    pub fn signature(&self) -> Signature {
        Signature::new(self.sigma.iter().chain(&self.gamma).cloned(), self.relations.clone())
    }

    /// The same program with its rules reordered by `order` (a permutation
    /// of rule indices).
    pub fn with_rule_order(&self, order: &[usize]) -> Self {
        let rules = order.iter().map(|&i| self.rules[i].clone()).collect();
        CotProgram::new(
            self.sigma.clone(),
            self.gamma.clone(),
            self.finals.clone(),
            rules,
            self.relations.clone(),
        )
        .expect("reordering preserves validity")
    }

    pub fn engine(&self) -> &Arc<Engine> {
        self.engine.get_or_init(|| Arc::new(Engine::build(self)))
    }

    fn check_input(&self, input: &[Token]) -> Result<(), RunError> {
        if input.is_empty() {
            return Err(RunError::EmptyInput);
        }
        if let Some(t) = input.iter().find(|t| !self.sigma.contains(t)) {
            return Err(RunError::NotInSigma(t.clone()));
        }
        Ok(())
    }

    /// Token emitted on `w`, from whole-word evaluation of each rule body at
    /// the last position. `None` when no body holds.
    pub fn step(&self, w: &[Token]) -> Result<Option<Token>, RunError> {
        if w.is_empty() {
            return Err(RunError::EmptyInput);
        }
        let sig = self.signature();
        for rule in &self.rules {
            let bits = eval_formula(w, &rule.body, &sig)?;
            if bits[bits.len() - 1] {
                return Ok(Some(rule.head.clone()));
            }
        }
        Ok(None)
    }

    /// Starts an incremental run on `input`.
    pub fn start(&self, input: &[Token]) -> Result<Generation, RunError> {
        self.check_input(input)?;
        let engine = Arc::clone(self.engine());
        let mut table = engine.table();
        for t in input {
            table.push(t)?;
        }
        Ok(Generation {
            engine,
            table,
            scratch: Scratch::new(),
            trace: Vec::new(),
        })
    }

    /// Emits up to `fuel` tokens after `input`.
    pub fn generate(&self, input: &[Token], fuel: u64) -> Result<RunResult, RunError> {
        if fuel == 0 {
            return Err(RunError::ZeroFuel);
        }
        self.start(input)?.run(fuel)
    }

    pub fn accepts(&self, input: &[Token], fuel: u64) -> Result<Acceptance, RunError> {
        Ok(self.generate(input, fuel)?.verdict.acceptance())
    }
}

impl Clone for CotProgram {
    fn clone(&self) -> Self {
        CotProgram {
            sigma: self.sigma.clone(),
            gamma: self.gamma.clone(),
            finals: self.finals.clone(),
            rules: self.rules.clone(),
            relations: self.relations.clone(),
            engine: self.engine.clone(),
        }
    }
}

impl PartialEq for CotProgram {
    fn eq(&self, other: &Self) -> bool {
        self.sigma == other.sigma
            && self.gamma == other.gamma
            && self.finals == other.finals
            && self.rules == other.rules
            && self.relations == other.relations
    }
}

impl Eq for CotProgram {}

impl fmt::Debug for CotProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CotProgram")
            .field("sigma", &self.sigma)
            .field("gamma", &self.gamma)
            .field("finals", &self.finals)
            .field("rules", &self.rules)
            .field("relations", &self.relations)
            .finish()
    }
}

/// Rule bodies compiled into one shared plan, plus a per-token index of
/// the rules that can possibly fire when that token is last.
#[derive(Debug)]
pub struct Engine {
    plan: Arc<Plan>,
    bodies: Vec<NodeId>,
    heads: Vec<u32>,
    candidates: Vec<Vec<u32>>,
    is_final: Vec<bool>,
}

impl Engine {
    fn build(program: &CotProgram) -> Self {
        let sig = program.signature();
        let mut plan = Plan::new(sig.clone());
        let mut bodies = Vec::with_capacity(program.rules.len());
        let mut heads = Vec::with_capacity(program.rules.len());
        for rule in &program.rules {
            bodies.push(plan.add_formula(&rule.body).expect("validated body"));
            heads.push(sig.id(&rule.head).expect("validated head"));
        }
        let n = sig.alphabet().len();
        let mut candidates = vec![Vec::new(); n];
        for (i, &b) in bodies.iter().enumerate() {
            match plan.required_last_token(b) {
                Some(t) => candidates[t as usize].push(i as u32),
                None => candidates.iter_mut().for_each(|c| c.push(i as u32)),
            }
        }
        let is_final = sig.alphabet().iter().map(|t| program.is_final(t)).collect();
        Engine {
            plan: Arc::new(plan),
            bodies,
            heads,
            candidates,
            is_final,
        }
    }

    pub fn plan(&self) -> &Arc<Plan> {
        &self.plan
    }

    pub fn table(&self) -> PositionTable {
        PositionTable::new(Arc::clone(&self.plan))
    }

    pub fn token(&self, id: u32) -> &Token {
        &self.plan.signature().alphabet()[id as usize]
    }

    pub fn is_final_id(&self, id: u32) -> bool {
        self.is_final[id as usize]
    }

    /// Head of the first rule whose body holds at the last position.
    pub fn next_token(&self, table: &PositionTable, scratch: &mut Scratch) -> Result<Option<u32>, EvalError> {
        let last = table.last_token_id().ok_or(EvalError::EmptyState)?;
        for &r in &self.candidates[last as usize] {
            if table.holds_at_last(scratch, self.bodies[r as usize])? {
                return Ok(Some(self.heads[r as usize]));
            }
        }
        Ok(None)
    }

    /// Indices of every rule whose body holds at the last position.
    pub fn holding_rules(&self, table: &PositionTable, scratch: &mut Scratch) -> Result<Vec<usize>, EvalError> {
        let mut out = Vec::new();
        for (i, &b) in self.bodies.iter().enumerate() {
            if table.holds_at_last(scratch, b)? {
                out.push(i);
            }
        }
        Ok(out)
    }

    /// Runs from an already-populated table, emitting at most `fuel` tokens.
    pub fn run_table(
        &self,
        table: &mut PositionTable,
        scratch: &mut Scratch,
        fuel: u64,
    ) -> Result<(Vec<u32>, Verdict), EvalError> {
        let mut trace = Vec::new();
        while (trace.len() as u64) < fuel {
            match self.next_token(table, scratch)? {
                None => return Ok((trace, Verdict::RejectStuck)),
                Some(t) => {
                    table.push_id(t)?;
                    trace.push(t);
                    if self.is_final[t as usize] {
                        return Ok((trace, Verdict::Accept));
                    }
                }
            }
        }
        Ok((trace, Verdict::FuelExhausted))
    }
}

/// An in-progress run.
#[derive(Debug)]
pub struct Generation {
    engine: Arc<Engine>,
    table: PositionTable,
    scratch: Scratch,
    trace: Vec<Token>,
}

impl Generation {
    pub fn table(&self) -> &PositionTable {
        &self.table
    }

    pub fn trace(&self) -> &[Token] {
        &self.trace
    }

    /// Computes and appends the next token. `None` means no rule fired; the
    /// state is left unchanged.
    pub fn advance(&mut self) -> Result<Option<Token>, EvalError> {
        match self.engine.next_token(&self.table, &mut self.scratch)? {
            None => Ok(None),
            Some(id) => {
                self.table.push_id(id)?;
                let t = self.engine.token(id).clone();
                self.trace.push(t.clone());
                Ok(Some(t))
            }
        }
    }

    pub fn holding_rules(&mut self) -> Result<Vec<usize>, EvalError> {
        self.engine.holding_rules(&self.table, &mut self.scratch)
    }

    /// Continues for at most `fuel` more tokens.
    pub fn run(mut self, fuel: u64) -> Result<RunResult, RunError> {
        let (ids, verdict) = self.engine.run_table(&mut self.table, &mut self.scratch, fuel)?;
        self.trace.extend(ids.iter().map(|&i| self.engine.token(i).clone()));
        Ok(RunResult {
            steps: self.trace.len(),
            trace: self.trace,
            verdict,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    RejectStuck,
    FuelExhausted,
}

impl Verdict {
    pub fn acceptance(self) -> Acceptance {
        match self {
            Verdict::Accept => Acceptance::Yes,
            Verdict::RejectStuck => Acceptance::No,
            Verdict::FuelExhausted => Acceptance::Unknown,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "accept",
            Verdict::RejectStuck => "reject",
            Verdict::FuelExhausted => "fuel-exhausted",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Acceptance {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub trace: Vec<Token>,
    pub verdict: Verdict,
    pub steps: usize,
}

impl RunResult {
    /// Acceptance ends in the first final token; rejection by a stuck step.
    pub fn is_well_formed(&self, program: &CotProgram) -> bool {
        match self.verdict {
            Verdict::Accept => match self.trace.split_last() {
                Some((last, rest)) => program.is_final(last) && rest.iter().all(|t| !program.is_final(t)),
                None => false,
            },
            _ => self.trace.iter().all(|t| !program.is_final(t)),
        }
    }
}
