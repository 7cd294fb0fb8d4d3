//! Deterministic k-counter machines over integer counters.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::crasp::{is_identifier, Token};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CmError {
    #[error("counter x{0} is tested both =0 and >0 in one guard")]
    ContradictoryGuard(usize),
    #[error("counter x{counter} is out of range for a {k}-counter machine")]
    CounterOutOfRange { counter: usize, k: usize },
    #[error("effect has {got} entries, expected {k}")]
    EffectArity { got: usize, k: usize },
    #[error("state `{0}` declared twice")]
    DuplicateState(String),
    #[error("`{0}` is not a valid state name")]
    InvalidStateName(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("state index {0} out of range")]
    StateOutOfRange(usize),
    #[error("machine has no states")]
    NoStates,
    #[error("{0}")]
    Nondeterministic(DeterminismReport),
    #[error("transitions {0} and {1} are both enabled")]
    NondeterminismAtRuntime(usize, usize),
    #[error("initial vector has {got} entries, expected {k}")]
    InitArity { got: usize, k: usize },
    #[error("counter overflow")]
    Overflow,
    #[error("token `{0}` is not in the alphabet")]
    UnknownToken(Token),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Test {
    Zero,
    Positive,
}

impl Test {
    pub fn holds(self, v: i64) -> bool {
        match self {
            Test::Zero => v == 0,
            Test::Positive => v > 0,
        }
    }
}

/// One counter test; `counter` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GuardAtom {
    pub counter: usize,
    pub test: Test,
}

impl fmt::Display for GuardAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.test {
            Test::Zero => "=0",
            Test::Positive => ">0",
        };
        write!(f, "x{}{}", self.counter + 1, op)
    }
}

/// A conjunction of counter tests, at most one per counter, sorted by counter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Guard(Vec<GuardAtom>);

impl Guard {
    pub fn always() -> Self {
        Guard(Vec::new())
    }

    /// Merges duplicate atoms; rejects `=0` together with `>0` on a counter.
    pub fn new<I: IntoIterator<Item = GuardAtom>>(atoms: I) -> Result<Self, CmError> {
        let mut atoms: Vec<GuardAtom> = atoms.into_iter().collect();
        atoms.sort();
        atoms.dedup();
        if let Some(w) = atoms.windows(2).find(|w| w[0].counter == w[1].counter) {
            return Err(CmError::ContradictoryGuard(w[0].counter + 1));
        }
        Ok(Guard(atoms))
    }

    pub fn zero(counter: usize) -> Self {
        Guard(vec![GuardAtom { counter, test: Test::Zero }])
    }

    pub fn positive(counter: usize) -> Self {
        Guard(vec![GuardAtom { counter, test: Test::Positive }])
    }

    pub fn atoms(&self) -> &[GuardAtom] {
        &self.0
    }

    pub fn is_always(&self) -> bool {
        self.0.is_empty()
    }

    pub fn holds(&self, counters: &[i64]) -> bool {
        self.0.iter().all(|a| a.test.holds(counters[a.counter]))
    }

    /// Whether some counter is tested `=0` here and `>0` there (or vice versa).
    /// Over natural-number counters this is exactly joint unsatisfiability.
    pub fn conflicts_with(&self, other: &Guard) -> bool {
        self.0.iter().any(|a| {
            other
                .0
                .iter()
                .any(|b| a.counter == b.counter && a.test != b.test)
        })
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("-");
        }
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub src: usize,
    pub guard: Guard,
    pub tgt: usize,
    pub effect: Vec<i64>,
}

/// Pairs of transitions leaving one state with jointly satisfiable guards
/// but different outcomes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DeterminismReport {
    pub conflicts: Vec<(usize, usize)>,
}

impl fmt::Display for DeterminismReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("nondeterministic transitions:")?;
        for (a, b) in &self.conflicts {
            write!(f, " ({a}, {b})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub state: usize,
    pub counters: Vec<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmVerdict {
    Accept,
    Stuck,
    FuelExhausted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CmRun {
    pub verdict: CmVerdict,
    /// Indices of fired transitions, in order.
    pub trace: Vec<usize>,
    pub config: Config,
}

/// `(P, Δ, q0, F)` with `k` counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterMachine {
    k: usize,
    states: Vec<String>,
    transitions: Vec<Transition>,
    initial: usize,
    finals: Vec<usize>,
    by_src: Vec<Vec<usize>>,
}

/// Result of an accelerated run; the transition trace is not kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastRun {
    pub verdict: CmVerdict,
    pub steps: u64,
    pub config: Config,
}

/// History entries kept by the accelerated runner before it starts over.
const HISTORY_LIMIT: usize = 4096;
/// Earlier visits per state considered as cycle starts.
const VISITS_KEPT: usize = 4;

impl CounterMachine {
    /// Builds and validates a machine. Byte-identical transitions are kept once.
    pub fn new(
        k: usize,
        states: Vec<String>,
        transitions: Vec<Transition>,
        initial: usize,
        finals: Vec<usize>,
    ) -> Result<Self, CmError> {
        let m = Self::new_unchecked(k, states, transitions, initial, finals)?;
        m.validate_deterministic().map_err(CmError::Nondeterministic)?;
        Ok(m)
    }

    /// Structural checks only; determinism is not enforced.
    pub fn new_unchecked(
        k: usize,
        states: Vec<String>,
        transitions: Vec<Transition>,
        initial: usize,
        mut finals: Vec<usize>,
    ) -> Result<Self, CmError> {
        if states.is_empty() {
            return Err(CmError::NoStates);
        }
        let mut seen = HashSet::new();
        for s in &states {
            if !is_identifier(s) {
                return Err(CmError::InvalidStateName(s.clone()));
            }
            if !seen.insert(s.as_str()) {
                return Err(CmError::DuplicateState(s.clone()));
            }
        }
        let n = states.len();
        for &q in finals.iter().chain(Some(&initial)) {
            if q >= n {
                return Err(CmError::StateOutOfRange(q));
            }
        }
        finals.sort_unstable();
        finals.dedup();
        let mut unique: Vec<Transition> = Vec::with_capacity(transitions.len());
        let mut seen_t = HashSet::new();
        for t in transitions {
            if t.src >= n {
                return Err(CmError::StateOutOfRange(t.src));
            }
            if t.tgt >= n {
                return Err(CmError::StateOutOfRange(t.tgt));
            }
            if t.effect.len() != k {
                return Err(CmError::EffectArity { got: t.effect.len(), k });
            }
            if let Some(a) = t.guard.atoms().iter().find(|a| a.counter >= k) {
                return Err(CmError::CounterOutOfRange { counter: a.counter + 1, k });
            }
            if seen_t.insert(t.clone()) {
                unique.push(t);
            }
        }
        let mut by_src = vec![Vec::new(); n];
        for (i, t) in unique.iter().enumerate() {
            by_src[t.src].push(i);
        }
        Ok(CounterMachine {
            by_src,
            k,
            states,
            transitions: unique,
            initial,
            finals,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn finals(&self) -> &[usize] {
        &self.finals
    }

    pub fn is_final(&self, q: usize) -> bool {
        self.finals.binary_search(&q).is_ok()
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s == name)
    }

    /// Every pair of same-source transitions with different `(tgt, effect)`
    /// must carry conflicting guards.
    pub fn validate_deterministic(&self) -> Result<(), DeterminismReport> {
        let mut report = DeterminismReport::default();
        for (i, a) in self.transitions.iter().enumerate() {
            for (j, b) in self.transitions.iter().enumerate().skip(i + 1) {
                if a.src == b.src
                    && (a.tgt, &a.effect) != (b.tgt, &b.effect)
                    && !a.guard.conflicts_with(&b.guard)
                {
                    report.conflicts.push((i, j));
                }
            }
        }
        if report.conflicts.is_empty() {
            Ok(())
        } else {
            Err(report)
        }
    }

    /// Index of the transition enabled at `state`, if any.
    fn enabled(&self, state: usize, counters: &[i64]) -> Result<Option<usize>, CmError> {
        let mut fired: Option<usize> = None;
        for &i in &self.by_src[state] {
            let t = &self.transitions[i];
            if !t.guard.holds(counters) {
                continue;
            }
            match fired {
                None => fired = Some(i),
                Some(f) => {
                    let p = &self.transitions[f];
                    if (p.tgt, &p.effect) != (t.tgt, &t.effect) {
                        return Err(CmError::NondeterminismAtRuntime(f, i));
                    }
                }
            }
        }
        Ok(fired)
    }

    fn apply(effect: &[i64], counters: &mut [i64], times: i64) -> Result<(), CmError> {
        for (x, u) in counters.iter_mut().zip(effect) {
            *x = u
                .checked_mul(times)
                .and_then(|d| x.checked_add(d))
                .ok_or(CmError::Overflow)?;
        }
        Ok(())
    }

    /// Fires the enabled transition, if any.
    pub fn step(&self, config: &Config) -> Result<Option<(usize, Config)>, CmError> {
        let Some(i) = self.enabled(config.state, &config.counters)? else {
            return Ok(None);
        };
        let t = &self.transitions[i];
        let mut counters = config.counters.clone();
        Self::apply(&t.effect, &mut counters, 1)?;
        Ok(Some((i, Config { state: t.tgt, counters })))
    }

    /// Runs from `(q0, init)` until a transition enters a final state, no
    /// transition is enabled, or `fuel` transitions have fired.
    pub fn run(&self, init: &[i64], fuel: u64) -> Result<CmRun, CmError> {
        if init.len() != self.k {
            return Err(CmError::InitArity { got: init.len(), k: self.k });
        }
        let mut config = Config {
            state: self.initial,
            counters: init.to_vec(),
        };
        let mut trace = Vec::new();
        while (trace.len() as u64) < fuel {
            match self.step(&config)? {
                None => {
                    return Ok(CmRun {
                        verdict: CmVerdict::Stuck,
                        trace,
                        config,
                    })
                }
                Some((i, next)) => {
                    trace.push(i);
                    config = next;
                    if self.is_final(config.state) {
                        return Ok(CmRun {
                            verdict: CmVerdict::Accept,
                            trace,
                            config,
                        });
                    }
                }
            }
        }
        Ok(CmRun {
            verdict: CmVerdict::FuelExhausted,
            trace,
            config,
        })
    }

    /// Same verdict, step count and final configuration as `run`, but
    /// cycles are repeated in bulk.
    ///
    /// The run keeps a history of the steps since the last reset. Arriving
    /// at a state already in the history closes a cycle; if the guard tests
    /// along it are bound to hold on further repetitions, those are applied
    /// at once and the cycle is collapsed into a summary entry that retains
    /// only its tightest tests. Enclosing loops are then seen as cycles over
    /// summaries and accelerate the same way.
    pub fn run_fast(&self, init: &[i64], fuel: u64) -> Result<FastRun, CmError> {
        if init.len() != self.k {
            return Err(CmError::InitArity { got: init.len(), k: self.k });
        }
        let mut h = History::new(self.k, self.states.len());
        let mut x = init.to_vec();
        let mut q = self.initial;
        let mut steps = 0u64;
        let mut delta = vec![0i64; self.k];
        let done = |verdict, steps, q, x: Vec<i64>| FastRun {
            verdict,
            steps,
            config: Config { state: q, counters: x },
        };
        let mut collapsed = false;
        while steps < fuel {
            if !collapsed {
                if let Some((idx, reps)) = h.repeatable(q, &x, &mut delta) {
                    let len = steps - h.entries[idx].at_step;
                    let extra = (reps - 1).min((fuel - steps) / len);
                    if extra > 0 {
                        for (xi, d) in x.iter_mut().zip(&delta) {
                            *xi = d
                                .checked_mul(extra as i64)
                                .and_then(|d| xi.checked_add(d))
                                .ok_or(CmError::Overflow)?;
                        }
                        steps += extra * len;
                        h.collapse(idx, extra, &delta);
                        collapsed = true;
                        continue;
                    }
                }
            }
            collapsed = false;
            h.enter(q, &x, steps);
            let Some(i) = self.enabled(q, &x)? else { return Ok(done(CmVerdict::Stuck, steps, q, x)) };
            let t = &self.transitions[i];
            for a in t.guard.atoms() {
                h.tests.push((a.counter, x[a.counter], a.test));
            }
            Self::apply(&t.effect, &mut x, 1)?;
            q = t.tgt;
            steps += 1;
            if self.is_final(q) {
                return Ok(done(CmVerdict::Accept, steps, q, x));
            }
        }
        Ok(done(CmVerdict::FuelExhausted, steps, q, x))
    }

    /// Pads `input` with zeros up to arity `k`.
    pub fn init_vector(&self, input: &[u64]) -> Vec<i64> {
        let mut v: Vec<i64> = input.iter().map(|&x| x as i64).collect();
        v.resize(self.k, 0);
        v
    }
}

struct Entry {
    state: usize,
    serial: u64,
    at_step: u64,
    tests_start: usize,
}

/// Execution history for `run_fast`.
struct History {
    k: usize,
    entries: Vec<Entry>,
    /// Counters on entering each entry, `k` per entry.
    snaps: Vec<i64>,
    /// `(counter, value when tested, test)` for every guard atom passed.
    tests: Vec<(usize, i64, Test)>,
    /// Recent `(serial, index)` entries per state, newest last. Stale when
    /// the entry at `index` no longer carries `serial`.
    visits: Vec<Vec<(u64, usize)>>,
    next_serial: u64,
}

impl History {
    fn new(k: usize, states: usize) -> Self {
        History {
            k,
            entries: Vec::new(),
            snaps: Vec::new(),
            tests: Vec::new(),
            visits: vec![Vec::new(); states],
            next_serial: 0,
        }
    }

    fn enter(&mut self, state: usize, x: &[i64], at_step: u64) {
        if self.entries.len() >= HISTORY_LIMIT {
            self.entries.clear();
            self.snaps.clear();
            self.tests.clear();
        }
        self.push(state, at_step, self.tests.len());
        self.snaps.extend_from_slice(x);
    }

    fn push(&mut self, state: usize, at_step: u64, tests_start: usize) {
        let serial = self.next_serial;
        self.next_serial += 1;
        let idx = self.entries.len();
        self.entries.push(Entry { state, serial, at_step, tests_start });
        let v = &mut self.visits[state];
        if v.len() == VISITS_KEPT {
            v.remove(0);
        }
        v.push((serial, idx));
    }

    /// Finds the most recent visit of `q` such that the run since then can be
    /// repeated at least once more from `x`. Returns its index and how many
    /// repetitions in total (counting the one already run) take the same
    /// transitions, `u64::MAX` if unbounded; `delta` gets the net effect.
    fn repeatable(&self, q: usize, x: &[i64], delta: &mut [i64]) -> Option<(usize, u64)> {
        'visit: for &(serial, idx) in self.visits[q].iter().rev() {
            if self.entries.get(idx).map(|e| e.serial) != Some(serial) {
                continue;
            }
            let snap = &self.snaps[idx * self.k..(idx + 1) * self.k];
            for (d, (xi, si)) in delta.iter_mut().zip(x.iter().zip(snap)) {
                *d = xi - si;
            }
            let mut reps = u64::MAX;
            for &(c, v, test) in &self.tests[self.entries[idx].tests_start..] {
                let d = delta[c];
                match test {
                    Test::Zero if d != 0 => continue 'visit,
                    // repetition m (0-based) sees v + m*d, which must stay >= 1
                    Test::Positive if d < 0 => reps = reps.min(((v - 1) / -d) as u64 + 1),
                    _ => {}
                }
            }
            if reps >= 2 {
                return Some((idx, reps));
            }
        }
        None
    }

    /// Replaces entries from `idx` on with one summary covering them and
    /// `extra` further repetitions of net effect `delta`.
    fn collapse(&mut self, idx: usize, extra: u64, delta: &[i64]) {
        let Entry { state, at_step, tests_start, .. } = self.entries[idx];
        let mut tightest: Vec<Option<i64>> = vec![None; self.k];
        let mut zero = vec![false; self.k];
        for &(c, v, test) in &self.tests[tests_start..] {
            match test {
                Test::Zero => zero[c] = true,
                Test::Positive => {
                    let low = if delta[c] < 0 { v + extra as i64 * delta[c] } else { v };
                    tightest[c] = Some(tightest[c].map_or(low, |t| t.min(low)));
                }
            }
        }
        self.tests.truncate(tests_start);
        for c in 0..self.k {
            if let Some(v) = tightest[c] {
                self.tests.push((c, v, Test::Positive));
            }
            if zero[c] {
                self.tests.push((c, 0, Test::Zero));
            }
        }
        self.entries.truncate(idx);
        self.snaps.truncate((idx + 1) * self.k);
        self.push(state, at_step, tests_start);
    }
}

/// Letter counts of `word` in alphabet order.
pub fn parikh(word: &[Token], alphabet: &[Token]) -> Result<Vec<u64>, CmError> {
    let mut counts = vec![0u64; alphabet.len()];
    for t in word {
        let i = alphabet
            .iter()
            .position(|a| a == t)
            .ok_or_else(|| CmError::UnknownToken(t.clone()))?;
        counts[i] += 1;
    }
    Ok(counts)
}

/// Two states, two transitions: subtract 2 from `x1` while positive, accept
/// once it reaches zero. Decides evenness of `x1`.
pub fn parity_machine() -> CounterMachine {
    CounterMachine::new(
        2,
        vec!["q0".into(), "q1".into()],
        vec![
            Transition {
                src: 0,
                guard: Guard::positive(0),
                tgt: 0,
                effect: vec![-2, 0],
            },
            Transition {
                src: 0,
                guard: Guard::zero(0),
                tgt: 1,
                effect: vec![0, 0],
            },
        ],
        0,
        vec![1],
    )
    .expect("parity machine is deterministic")
}
