//! Shared generators for the integration suites.
#![allow(dead_code)]

use crasp::asm::{AsmProgram, Instr, Stmt};
use crasp::cm::{CounterMachine, Guard, GuardAtom, Test, Transition};
use crasp::cot::{CotProgram, CotRule};
use crasp::crasp::{tok, CmpOp, Formula, RelationTable, Term, Token};
use crasp::rpe::RpeKind;
use proptest::prelude::*;

pub const SIGMA: [&str; 3] = ["a", "b", "c"];
pub const GAMMA: [&str; 3] = ["t0", "t1", "x1"];

pub fn arb_token() -> impl Strategy<Value = Token> {
    proptest::sample::select(SIGMA.iter().chain(&GAMMA).copied().collect::<Vec<_>>()).prop_map(tok)
}

pub fn arb_op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![Just(CmpOp::Lt), Just(CmpOp::Eq), Just(CmpOp::Gt)]
}

pub fn arb_term(f: BoxedStrategy<Formula>) -> BoxedStrategy<Term> {
    let rel = proptest::sample::select(vec!["one", "len"]);
    let leaf = prop_oneof![
        (0u64..20).prop_map(Term::Const),
        f.clone().prop_map(Term::count),
        (rel, f).prop_map(|(r, g)| Term::count_rel(r, g)),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::add(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::sub(a, b)),
            (0u64..5, inner).prop_map(|(k, t)| Term::scale(k, t)),
        ]
    })
    .boxed()
}

pub fn arb_formula() -> BoxedStrategy<Formula> {
    let leaf = prop_oneof![Just(Formula::True), arb_token().prop_map(Formula::Atom)];
    leaf.prop_recursive(4, 24, 2, |inner| {
        let term = arb_term(inner.clone().boxed());
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (term.clone(), arb_op(), term).prop_map(|(a, op, b)| Formula::cmp(a, op, b)),
        ]
    })
    .boxed()
}

pub fn arb_program() -> impl Strategy<Value = CotProgram> {
    let head = proptest::sample::select(GAMMA.to_vec()).prop_map(tok);
    let rules = proptest::collection::vec((head, arb_formula()), 0..6);
    let finals = proptest::sample::subsequence(GAMMA.to_vec(), 0..=3);
    let relations = proptest::sample::subsequence(vec![("one", RpeKind::One), ("len", RpeKind::Len)], 0..=2);
    (rules, finals, relations).prop_filter_map("relations must be declared", |(rules, finals, rels)| {
        let mut table = RelationTable::new();
        for (name, kind) in rels {
            table.insert(name, kind);
        }
        let rules = rules.into_iter().map(|(h, b)| CotRule::new(h, b)).collect();
        let finals = finals.into_iter().map(tok).collect();
        let gamma = GAMMA.iter().map(|g| tok(g)).collect();
        CotProgram::new(SIGMA.iter().map(|s| tok(s)).collect(), gamma, finals, rules, table).ok()
    })
}

pub fn arb_machine() -> impl Strategy<Value = CounterMachine> {
    let k = 3;
    let effect = proptest::collection::vec(-3i64..=3, k);
    let arm = (0usize..6, effect);
    let test = prop_oneof![Just(Test::Zero), Just(Test::Positive)];
    let state = (proptest::option::of((0..k, test)), arm.clone(), arm, any::<bool>());
    (proptest::collection::vec(state, 1..6), 0usize..6).prop_map(move |(spec, init)| {
        let n = spec.len();
        let mut ts = Vec::new();
        let mut finals = Vec::new();
        for (src, (branch, (t1, e1), (t2, e2), fin)) in spec.into_iter().enumerate() {
            if fin {
                finals.push(src);
            }
            match branch {
                None => ts.push(Transition { src, guard: Guard::always(), tgt: t1 % n, effect: e1 }),
                Some((c, test)) => {
                    let other = match test {
                        Test::Zero => Test::Positive,
                        Test::Positive => Test::Zero,
                    };
                    let g = |test| Guard::new(vec![GuardAtom { counter: c, test }]).unwrap();
                    ts.push(Transition { src, guard: g(test), tgt: t1 % n, effect: e1 });
                    ts.push(Transition { src, guard: g(other), tgt: t2 % n, effect: e2 });
                }
            }
        }
        let states = (0..n).map(|i| format!("s{i}")).collect();
        CounterMachine::new(k, states, ts, init % n, finals).unwrap()
    })
}

pub fn arb_asm() -> impl Strategy<Value = AsmProgram> {
    let reg = proptest::sample::select(vec!["x", "y", "t"]).prop_map(String::from);
    let label = proptest::sample::select(vec!["top", "out", "mid"]).prop_map(String::from);
    let instr = prop_oneof![
        reg.clone().prop_map(Instr::Inc),
        reg.clone().prop_map(Instr::Dec),
        label.clone().prop_map(Instr::Goto),
        (reg.clone(), label.clone()).prop_map(|(r, l)| Instr::Bz(r, l)),
        Just(Instr::Accept),
        Just(Instr::Reject),
        proptest::collection::vec(reg, 0..3).prop_map(|args| Instr::Call { name: "m".into(), args }),
    ];
    let stmt = prop_oneof![3 => instr.prop_map(Stmt::Instr), 1 => label.prop_map(Stmt::Label)];
    proptest::collection::vec(stmt, 0..12).prop_map(|body| AsmProgram {
        inputs: vec!["x".into(), "y".into()],
        aux: vec!["t".into()],
        macros: Vec::new(),
        body,
    })
}

/// All words over `alphabet` with length in `1..=max_len`, shortest first.
pub fn words(alphabet: &[Token], max_len: usize) -> Vec<Vec<Token>> {
    let mut all = Vec::new();
    let mut layer: Vec<Vec<Token>> = vec![vec![]];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|w| {
                alphabet.iter().map(move |a| {
                    let mut w = w.clone();
                    w.push(a.clone());
                    w
                })
            })
            .collect();
        all.extend(layer.iter().cloned());
    }
    all
}

/// Relation table declaring both kinds under their keywords.
pub fn both_relations() -> RelationTable {
    RelationTable::new().with("one", RpeKind::One).with("len", RpeKind::Len)
}
