//! Incremental evaluation for autoregressive use.
//!
//! A [`Plan`] hash-conses a fixed set of formulas and terms into a DAG. A
//! [`PositionTable`] then consumes tokens one at a time. Nodes that feed a
//! prefix count are advanced on every push; all other nodes are only ever
//! needed at the last position and are evaluated on demand, memoized in a
//! [`Scratch`]. Relation counts read only the positions related to the new
//! length, so a push never rescans the prefix.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use super::{CmpOp, EvalError, Formula, Signature, Term, Token};
use crate::rpe::{beta_len, RpeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(u32);

impl NodeId {
    fn ix(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Value {
    Bool(bool),
    Int(i64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Node {
    True,
    Atom(u32),
    Not(NodeId),
    And(NodeId, NodeId),
    Or(NodeId, NodeId),
    Cmp(NodeId, CmpOp, NodeId),
    Const(i64),
    CountToken(u32),
    Count(NodeId),
    CountRel(RpeKind, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(i64, NodeId),
}

impl Node {
    /// Readable straight from the table state, no per-node storage.
    fn is_direct(&self) -> bool {
        matches!(self, Node::True | Node::Atom(_) | Node::Const(_) | Node::CountToken(_))
    }

    fn children(&self) -> [Option<NodeId>; 2] {
        match *self {
            Node::True | Node::Atom(_) | Node::Const(_) | Node::CountToken(_) => [None, None],
            Node::Not(a) | Node::Count(a) | Node::CountRel(_, a) | Node::Scale(_, a) => [Some(a), None],
            Node::And(a, b) | Node::Or(a, b) | Node::Cmp(a, _, b) | Node::Add(a, b) | Node::Sub(a, b) => {
                [Some(a), Some(b)]
            }
        }
    }
}

const NONE: u32 = u32::MAX;

#[derive(Debug)]
struct Layout {
    /// Tracked nodes in topological order.
    order: Vec<NodeId>,
    slot: Vec<u32>,
    hist_slot: Vec<u32>,
    hist_count: usize,
}

/// A hash-consed DAG of expressions over one signature.
#[derive(Debug)]
pub struct Plan {
    sig: Signature,
    nodes: Vec<Node>,
    dedup: HashMap<Node, NodeId>,
    cost: Vec<u32>,
    tracked: Vec<bool>,
    needs_hist: Vec<bool>,
    layout: OnceLock<Layout>,
}

impl Plan {
    pub fn new(sig: Signature) -> Self {
        Plan {
            sig,
            nodes: Vec::new(),
            dedup: HashMap::new(),
            cost: Vec::new(),
            tracked: Vec::new(),
            needs_hist: Vec::new(),
            layout: OnceLock::new(),
        }
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn add_formula(&mut self, f: &Formula) -> Result<NodeId, EvalError> {
        let node = match f {
            Formula::True => Node::True,
            Formula::Atom(t) => Node::Atom(self.sig.id(t)?),
            Formula::Not(a) => Node::Not(self.add_formula(a)?),
            Formula::And(a, b) => Node::And(self.add_formula(a)?, self.add_formula(b)?),
            Formula::Or(a, b) => Node::Or(self.add_formula(a)?, self.add_formula(b)?),
            Formula::Compare(a, op, b) => Node::Cmp(self.add_term(a)?, *op, self.add_term(b)?),
        };
        Ok(self.intern(node))
    }

    pub fn add_term(&mut self, t: &Term) -> Result<NodeId, EvalError> {
        let node = match t {
            Term::Const(c) => Node::Const(i64::try_from(*c).map_err(|_| EvalError::IntegerOverflow)?),
            Term::Count(f) => match f.as_ref() {
                Formula::Atom(a) => Node::CountToken(self.sig.id(a)?),
                f => Node::Count(self.add_formula(f)?),
            },
            Term::CountRel(name, f) => {
                let kind = self.sig.relations().resolve(name)?;
                Node::CountRel(kind, self.add_formula(f)?)
            }
            Term::Add(a, b) => Node::Add(self.add_term(a)?, self.add_term(b)?),
            Term::Sub(a, b) => Node::Sub(self.add_term(a)?, self.add_term(b)?),
            Term::Scale(k, a) => {
                let k = i64::try_from(*k).map_err(|_| EvalError::IntegerOverflow)?;
                Node::Scale(k, self.add_term(a)?)
            }
        };
        Ok(self.intern(node))
    }

    fn intern(&mut self, node: Node) -> NodeId {
        if let Some(&id) = self.dedup.get(&node) {
            return id;
        }
        let id = NodeId(self.nodes.len() as u32);
        let cost = node
            .children()
            .iter()
            .flatten()
            .fold(1u32, |acc, c| acc.saturating_add(self.cost[c.ix()]));
        self.nodes.push(node.clone());
        self.cost.push(cost);
        self.tracked.push(false);
        self.needs_hist.push(false);
        self.dedup.insert(node.clone(), id);
        self.layout = OnceLock::new();
        match node {
            Node::Count(f) => {
                self.tracked[id.ix()] = true;
                self.mark_tracked(f);
            }
            Node::CountRel(_, f) => {
                self.mark_tracked(f);
                if !self.nodes[f.ix()].is_direct() {
                    self.needs_hist[f.ix()] = true;
                }
            }
            _ => {}
        }
        id
    }

    fn mark_tracked(&mut self, id: NodeId) {
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if self.tracked[n.ix()] || self.nodes[n.ix()].is_direct() {
                continue;
            }
            self.tracked[n.ix()] = true;
            stack.extend(self.nodes[n.ix()].children().into_iter().flatten());
        }
    }

    fn layout(&self) -> &Layout {
        self.layout.get_or_init(|| {
            let mut order = Vec::new();
            let mut slot = vec![NONE; self.nodes.len()];
            let mut hist_slot = vec![NONE; self.nodes.len()];
            let mut hist_count = 0;
            for i in 0..self.nodes.len() {
                if self.tracked[i] {
                    slot[i] = order.len() as u32;
                    order.push(NodeId(i as u32));
                }
                if self.needs_hist[i] {
                    hist_slot[i] = hist_count as u32;
                    hist_count += 1;
                }
            }
            Layout {
                order,
                slot,
                hist_slot,
                hist_count,
            }
        })
    }

    /// A token that must be last for the formula to hold, found through
    /// top-level conjunctions.
    pub fn required_last_token(&self, id: NodeId) -> Option<u32> {
        match self.nodes[id.ix()] {
            Node::Atom(t) => Some(t),
            Node::And(a, b) => self
                .required_last_token(a)
                .or_else(|| self.required_last_token(b)),
            _ => None,
        }
    }

    pub fn is_formula(&self, id: NodeId) -> bool {
        matches!(
            self.nodes[id.ix()],
            Node::True | Node::Atom(_) | Node::Not(_) | Node::And(..) | Node::Or(..) | Node::Cmp(..)
        )
    }
}

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn fresh_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

/// Memo for on-demand evaluation at the last position of one table state.
#[derive(Debug, Default)]
pub struct Scratch {
    owner: (u64, usize),
    generation: u32,
    stamp: Vec<u32>,
    vals: Vec<i64>,
}

impl Scratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn sync(&mut self, table: &PositionTable) {
        let n = table.plan.nodes.len();
        if self.stamp.len() < n {
            self.stamp.resize(n, 0);
            self.vals.resize(n, 0);
        }
        let owner = (table.uid, table.tokens.len());
        if self.owner != owner {
            self.owner = owner;
            self.generation = self.generation.wrapping_add(1);
            if self.generation == 0 {
                self.stamp.iter_mut().for_each(|s| *s = 0);
                self.generation = 1;
            }
        }
    }
}

/// Per-position evaluation state for one plan.
#[derive(Debug)]
pub struct PositionTable {
    plan: Arc<Plan>,
    uid: u64,
    tokens: Vec<u32>,
    counts: Vec<i64>,
    tracked: Vec<i64>,
    hist: Vec<Vec<u64>>,
}

impl Clone for PositionTable {
    fn clone(&self) -> Self {
        PositionTable {
            plan: Arc::clone(&self.plan),
            uid: fresh_uid(),
            tokens: self.tokens.clone(),
            counts: self.counts.clone(),
            tracked: self.tracked.clone(),
            hist: self.hist.clone(),
        }
    }

    /// Reuses this table's buffers.
    fn clone_from(&mut self, source: &Self) {
        self.plan = Arc::clone(&source.plan);
        self.uid = fresh_uid();
        self.tokens.clone_from(&source.tokens);
        self.counts.clone_from(&source.counts);
        self.tracked.clone_from(&source.tracked);
        self.hist.clone_from(&source.hist);
    }
}

impl PositionTable {
    pub fn new(plan: Arc<Plan>) -> Self {
        let layout = plan.layout();
        let tracked = vec![0; layout.order.len()];
        let hist = vec![Vec::new(); layout.hist_count];
        let counts = vec![0; plan.sig.alphabet().len()];
        PositionTable {
            plan,
            uid: fresh_uid(),
            tokens: Vec::new(),
            counts,
            tracked,
            hist,
        }
    }

    pub fn plan(&self) -> &Arc<Plan> {
        &self.plan
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn last_token_id(&self) -> Option<u32> {
        self.tokens.last().copied()
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.tokens
    }

    pub fn push(&mut self, t: &Token) -> Result<(), EvalError> {
        let id = self.plan.sig.id(t)?;
        self.push_id(id)
    }

    /// Extends the table by one position holding token `id`.
    pub fn push_id(&mut self, id: u32) -> Result<(), EvalError> {
        if id as usize >= self.counts.len() {
            return Err(EvalError::UnknownToken(Token::new(&format!("id{id}")).expect("identifier")));
        }
        self.tokens.push(id);
        self.counts[id as usize] += 1;
        let plan = Arc::clone(&self.plan);
        let layout = plan.layout();
        let len = self.tokens.len();
        for &n in &layout.order {
            let v = match plan.nodes[n.ix()] {
                Node::Not(a) => 1 - self.cur(&plan, a),
                Node::And(a, b) => self.cur(&plan, a).min(self.cur(&plan, b)),
                Node::Or(a, b) => self.cur(&plan, a).max(self.cur(&plan, b)),
                Node::Cmp(a, op, b) => op.holds(self.cur(&plan, a), self.cur(&plan, b)) as i64,
                Node::Count(a) => {
                    let old = self.tracked[layout.slot[n.ix()] as usize];
                    old.checked_add(self.cur(&plan, a)).ok_or(EvalError::IntegerOverflow)?
                }
                Node::CountRel(kind, a) => self.count_related(&plan, kind, a, len),
                Node::Add(a, b) => self
                    .cur(&plan, a)
                    .checked_add(self.cur(&plan, b))
                    .ok_or(EvalError::IntegerOverflow)?,
                Node::Sub(a, b) => self
                    .cur(&plan, a)
                    .checked_sub(self.cur(&plan, b))
                    .ok_or(EvalError::IntegerOverflow)?,
                Node::Scale(k, a) => self
                    .cur(&plan, a)
                    .checked_mul(k)
                    .ok_or(EvalError::IntegerOverflow)?,
                Node::True | Node::Atom(_) | Node::Const(_) | Node::CountToken(_) => unreachable!("direct nodes are never tracked"),
            };
            self.tracked[layout.slot[n.ix()] as usize] = v;
            let h = layout.hist_slot[n.ix()];
            if h != NONE {
                push_bit(&mut self.hist[h as usize], len, v != 0);
            }
        }
        Ok(())
    }

    fn direct(&self, node: &Node) -> i64 {
        match *node {
            Node::True => 1,
            Node::Atom(t) => (self.tokens.last() == Some(&t)) as i64,
            Node::Const(c) => c,
            Node::CountToken(t) => self.counts[t as usize],
            _ => unreachable!("not a direct node"),
        }
    }

    /// Current value of a node that is direct or tracked.
    fn cur(&self, plan: &Plan, id: NodeId) -> i64 {
        let node = &plan.nodes[id.ix()];
        if node.is_direct() {
            self.direct(node)
        } else {
            self.tracked[plan.layout().slot[id.ix()] as usize]
        }
    }

    /// Value of boolean node `id` at 1-based position `p`, for nodes that
    /// keep history (or are atoms / constants).
    fn bit_at(&self, plan: &Plan, id: NodeId, p: usize) -> bool {
        match plan.nodes[id.ix()] {
            Node::True => true,
            Node::Atom(t) => self.tokens[p - 1] == t,
            _ => {
                let h = plan.layout().hist_slot[id.ix()] as usize;
                let i = p - 1;
                (self.hist[h][i / 64] >> (i % 64)) & 1 == 1
            }
        }
    }

    fn count_related(&self, plan: &Plan, kind: RpeKind, child: NodeId, j: usize) -> i64 {
        let j64 = j as u64;
        let Some(len) = beta_len(j64) else { return 0 };
        (1..=len)
            .filter(|&p| kind == RpeKind::Len || (j64 >> (len - p)) & 1 == 1)
            .filter(|&p| self.bit_at(plan, child, p))
            .count() as i64
    }

    /// Value of node `id` at the last position.
    pub fn eval_at_last(&self, scratch: &mut Scratch, id: NodeId) -> Result<i64, EvalError> {
        if self.tokens.is_empty() {
            return Err(EvalError::EmptyState);
        }
        scratch.sync(self);
        self.lazy(scratch, id)
    }

    pub fn holds_at_last(&self, scratch: &mut Scratch, id: NodeId) -> Result<bool, EvalError> {
        Ok(self.eval_at_last(scratch, id)? != 0)
    }

    /// Convenience wrapper allocating a fresh memo.
    pub fn value_at_last(&self, id: NodeId) -> Result<Value, EvalError> {
        let v = self.eval_at_last(&mut Scratch::new(), id)?;
        Ok(if self.plan.is_formula(id) {
            Value::Bool(v != 0)
        } else {
            Value::Int(v)
        })
    }

    fn lazy(&self, s: &mut Scratch, id: NodeId) -> Result<i64, EvalError> {
        let plan = &*self.plan;
        let node = &plan.nodes[id.ix()];
        if node.is_direct() {
            return Ok(self.direct(node));
        }
        let slot = plan.layout().slot[id.ix()];
        if slot != NONE {
            return Ok(self.tracked[slot as usize]);
        }
        if s.stamp[id.ix()] == s.generation {
            return Ok(s.vals[id.ix()]);
        }
        let v = match *node {
            Node::Not(a) => 1 - self.lazy(s, a)?,
            Node::And(a, b) => {
                let (x, y) = cheaper_first(plan, a, b);
                (self.lazy(s, x)? != 0 && self.lazy(s, y)? != 0) as i64
            }
            Node::Or(a, b) => {
                let (x, y) = cheaper_first(plan, a, b);
                (self.lazy(s, x)? != 0 || self.lazy(s, y)? != 0) as i64
            }
            Node::Cmp(a, op, b) => op.holds(self.lazy(s, a)?, self.lazy(s, b)?) as i64,
            Node::CountRel(kind, a) => self.count_related(plan, kind, a, self.tokens.len()),
            Node::Add(a, b) => self
                .lazy(s, a)?
                .checked_add(self.lazy(s, b)?)
                .ok_or(EvalError::IntegerOverflow)?,
            Node::Sub(a, b) => self
                .lazy(s, a)?
                .checked_sub(self.lazy(s, b)?)
                .ok_or(EvalError::IntegerOverflow)?,
            Node::Scale(k, a) => self.lazy(s, a)?.checked_mul(k).ok_or(EvalError::IntegerOverflow)?,
            Node::Count(_) | Node::True | Node::Atom(_) | Node::Const(_) | Node::CountToken(_) => {
                unreachable!("handled above")
            }
        };
        s.stamp[id.ix()] = s.generation;
        s.vals[id.ix()] = v;
        Ok(v)
    }
}

fn cheaper_first(plan: &Plan, a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if plan.cost[b.ix()] < plan.cost[a.ix()] {
        (b, a)
    } else {
        (a, b)
    }
}

fn push_bit(bits: &mut Vec<u64>, len: usize, bit: bool) {
    let i = len - 1;
    if i / 64 >= bits.len() {
        bits.push(0);
    }
    if bit {
        bits[i / 64] |= 1 << (i % 64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crasp::{eval_formula, eval_term, tok, word, RelationTable};

    fn sig() -> Signature {
        Signature::new(word("a b"), RelationTable::new().with("one", RpeKind::One))
    }

    #[test]
    fn push_matches_batch_on_short_word() {
        let mut plan = Plan::new(sig());
        let t = plan.add_term(&Term::count_of(tok("a"))).unwrap();
        let mut table = PositionTable::new(Arc::new(plan));
        for x in word("a a b") {
            table.push(&x).unwrap();
        }
        assert_eq!(table.value_at_last(t).unwrap(), Value::Int(2));
    }

    #[test]
    fn single_push_gives_length_one() {
        let mut plan = Plan::new(sig());
        let f = plan.add_formula(&Formula::True).unwrap();
        let mut table = PositionTable::new(Arc::new(plan));
        assert_eq!(table.value_at_last(f), Err(EvalError::EmptyState));
        table.push(&tok("b")).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.value_at_last(f).unwrap(), Value::Bool(true));
        assert!(matches!(table.push(&tok("z")), Err(EvalError::UnknownToken(_))));
    }

    #[test]
    fn nested_counts_and_relations_match_batch() {
        let s = sig();
        let inner = Formula::and(
            Formula::Atom(tok("a")),
            Formula::cmp(Term::count_of(tok("b")), CmpOp::Gt, Term::Const(0)),
        );
        let t = Term::add(
            Term::count(inner.clone()),
            Term::count_rel("one", Formula::not(Formula::Atom(tok("a")))),
        );
        let f = Formula::cmp(Term::count(Formula::cmp(t.clone(), CmpOp::Gt, Term::Const(2))), CmpOp::Lt, Term::count_rel("one", inner));
        let mut plan = Plan::new(s.clone());
        let tid = plan.add_term(&t).unwrap();
        let fid = plan.add_formula(&f).unwrap();
        let mut table = PositionTable::new(Arc::new(plan));
        let w: Vec<Token> = (0..300).map(|i| if (i * 7 + i / 3) % 5 < 2 { tok("a") } else { tok("b") }).collect();
        let bt = eval_term(&w, &t, &s).unwrap();
        let bf = eval_formula(&w, &f, &s).unwrap();
        let mut scratch = Scratch::new();
        for (i, x) in w.iter().enumerate() {
            table.push(x).unwrap();
            assert_eq!(table.eval_at_last(&mut scratch, tid).unwrap(), bt[i], "term at {}", i + 1);
            assert_eq!(table.holds_at_last(&mut scratch, fid).unwrap(), bf[i], "formula at {}", i + 1);
        }
    }

    #[test]
    fn clones_do_not_share_memo() {
        let mut plan = Plan::new(sig());
        let t = plan.add_term(&Term::add(Term::count_of(tok("a")), Term::Const(1))).unwrap();
        let mut table = PositionTable::new(Arc::new(plan));
        table.push(&tok("a")).unwrap();
        let mut s = Scratch::new();
        assert_eq!(table.eval_at_last(&mut s, t).unwrap(), 2);
        let mut other = table.clone();
        other.push(&tok("b")).unwrap();
        table.push(&tok("a")).unwrap();
        assert_eq!(other.eval_at_last(&mut s, t).unwrap(), 2);
        assert_eq!(table.eval_at_last(&mut s, t).unwrap(), 3);
    }
}
