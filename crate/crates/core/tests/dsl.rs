use crasp::asm::{machine_source, stdlib_source, Instr, Stmt};
use crasp::cm::parity_machine;
use crasp::compiler::{compile, CompilationSpec, Mode};
use crasp::cot::{CotProgram, CotRule};
use crasp::crasp::{tok, word, CmpOp, Formula, RelationTable, Signature, Term};
use crasp::dsl::{Expr, parse_asm, parse_cm, parse_cot_program, parse_expr, print_asm, print_cm, print_cot_program, print_term};
use crasp::rpe::RpeKind;
use crasp::tasks::{Encoding, Task};
use proptest::prelude::*;

mod common;
use common::{arb_asm, arb_machine, arb_program};

const PARITY: &str = include_str!("golden/parity.cot");
const PARITY_GENERAL: &str = include_str!("golden/parity_general.cot");
const PARITY_CM: &str = include_str!("golden/parity.cm");

/// The four rule families of the parity example, written out by hand.
fn parity_by_hand() -> CotProgram {
    let count = |t: &str| Term::count_of(tok(t));
    let x = || Term::sub(count("a"), Term::scale(2, count("t0")));
    let rule = |head: &str, lhs: Term, op, last: &str| {
        CotRule::new(tok(head), Formula::and(Formula::cmp(lhs, op, Term::Const(0)), Formula::atom(tok(last))))
    };
    let rules = vec![
        rule("t0", count("a"), CmpOp::Gt, "a"),
        rule("t1", count("a"), CmpOp::Eq, "a"),
        rule("t0", count("a"), CmpOp::Gt, "b"),
        rule("t1", count("a"), CmpOp::Eq, "b"),
        rule("t0", x(), CmpOp::Gt, "t0"),
        rule("t1", x(), CmpOp::Eq, "t0"),
    ];
    CotProgram::new(word("a b"), word("a b t0 t1"), word("t1"), rules, RelationTable::new()).unwrap()
}

#[test]
fn parity_golden_file() {
    let p = parse_cot_program(PARITY).unwrap();
    assert_eq!(p, parity_by_hand());
    assert_eq!(print_cot_program(&p), PARITY);
    let compiled = compile(&CompilationSpec::new(parity_machine(), word("a b"), Mode::PermutationInvariant).unwrap());
    assert_eq!(compiled.unwrap(), p);
}

#[test]
fn general_golden_file() {
    let p = parse_cot_program(PARITY_GENERAL).unwrap();
    assert_eq!(print_cot_program(&p), PARITY_GENERAL);
    let spec = CompilationSpec::new(parity_machine(), word("a b"), Mode::General).unwrap();
    assert_eq!(compile(&spec).unwrap(), p);
    assert_eq!(p.relations().get("one"), Some(RpeKind::One));
}

#[test]
fn parity_machine_golden_file() {
    let m = parse_cm(PARITY_CM).unwrap();
    assert_eq!(m, parity_machine());
    assert_eq!(print_cm(&m), PARITY_CM);
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let text = format!("// parity\n\n{}\n// end\n", PARITY.replace('\n', "  // trailing\n"));
    assert_eq!(parse_cot_program(&text).unwrap(), parity_by_hand());
}

#[test]
fn undeclared_token_is_named() {
    let e = parse_cot_program("alphabet a\ncot t\nrule t <- Q(x)\n").unwrap_err();
    assert_eq!(e.found, "x");
    assert_eq!((e.span.line, e.span.column), (3, 13));
    assert!(e.message.contains("`x`"), "{e}");
}

#[test]
fn undeclared_relation_is_named() {
    let e = parse_cot_program("alphabet a\ncot t\nrule t <- #<near>[true] > 0\n").unwrap_err();
    assert_eq!(e.found, "near");
}

#[test]
fn unclosed_count_expects_bracket() {
    let e = parse_cot_program("alphabet a\ncot t\nrule t <- #[Q(a) > 0\n").unwrap_err();
    assert!(e.expected.contains(&"`]`".to_string()), "{e:?}");
}

#[test]
fn comparisons_do_not_chain() {
    assert!(parse_cot_program("alphabet a\ncot t\nrule t <- 1 < 2 < 3\n").is_err());
}

#[test]
fn diagnostics_are_deterministic() {
    let bad = [
        "alphabet a\ncot t\nrule t <- #[Q(a)\n",
        "alphabet a\ncot t\nrule t <- Q(x)\n",
        "alphabet a\nrule t <- true\n",
        "counters 2\nstate q0 initial\ntrans q0 -> q0 when x1=0,x1>0 effect (0,0)\n",
        "state q0 initial\n",
        "counters in: x\n  JMP x\n",
    ];
    for text in bad {
        let render = || {
            [
                parse_cot_program(text).err().map(|e| format!("{e} {e:?}")),
                parse_cm(text).err().map(|e| format!("{e} {e:?}")),
                parse_asm(text).err().map(|e| format!("{e} {e:?}")),
            ]
        };
        assert_eq!(render(), render());
    }
}

#[test]
fn contradictory_guard_is_rejected() {
    let e = parse_cm("counters 2\nstate q0 initial\nstate q1\ntrans q0 -> q1 when x1=0,x1>0 effect (0,0)\n").unwrap_err();
    assert!(e.message.contains("x1"), "{e}");
}

#[test]
fn missing_counters_header() {
    let e = parse_cm("state q0 initial\n").unwrap_err();
    assert!(e.expected.iter().any(|x| x.contains("counters")), "{e:?}");
}

#[test]
fn nondeterministic_machine_is_rejected() {
    let text = "counters 2\nstate q0 initial\nstate q1\nstate q2\ntrans q0 -> q1 when x1>0 effect (1,0)\ntrans q0 -> q2 when x2>0 effect (0,0)\n";
    assert!(parse_cm(text).is_err());
}

#[test]
fn constant_zero_prints_as_zero() {
    assert_eq!(print_term(&Term::Const(0)), "0");
    assert_eq!(print_term(&Term::scale(0, Term::count_of(tok("a")))), "0*#[Q(a)]");
}

#[test]
fn stock_assembler_sources_round_trip() {
    let mut sources = vec![stdlib_source()];
    for task in Task::ALL {
        for enc in [Encoding::Unary, Encoding::Binary] {
            sources.extend(machine_source(task, enc));
        }
    }
    for src in sources {
        let p = parse_asm(src).unwrap();
        let printed = print_asm(&p);
        assert_eq!(parse_asm(&printed).unwrap(), p);
        assert_eq!(print_asm(&parse_asm(&printed).unwrap()), printed);
    }
}

#[test]
fn asm_mnemonics_are_case_insensitive() {
    let p = parse_asm("counters in: x\nloop: bz x done\n  dec x\n  Goto loop\ndone:\n  accept\n").unwrap();
    assert_eq!(
        p.body,
        vec![
            Stmt::Label("loop".into()),
            Stmt::Instr(Instr::Bz("x".into(), "done".into())),
            Stmt::Instr(Instr::Dec("x".into())),
            Stmt::Instr(Instr::Goto("loop".into())),
            Stmt::Label("done".into()),
            Stmt::Instr(Instr::Accept),
        ]
    );
}

#[test]
fn standalone_expressions() {
    let sig = Signature::new(word("a b"), RelationTable::new().with("one", RpeKind::One));
    let a = || Term::count_of(tok("a"));
    assert_eq!(parse_expr("#[Q(a)]", &sig).unwrap(), Expr::Term(a()));
    assert_eq!(parse_expr("(#[Q(a)])", &sig).unwrap(), Expr::Term(a()));
    assert_eq!(parse_expr("#[Q(a)] > 0", &sig).unwrap(), Expr::Formula(Formula::cmp(a(), CmpOp::Gt, Term::Const(0))));
    assert_eq!(parse_expr("Q(b)", &sig).unwrap(), Expr::Formula(Formula::atom(tok("b"))));
    assert!(matches!(parse_expr("#<one>[true]", &sig).unwrap(), Expr::Term(_)));
    assert_eq!(parse_expr("Q(c)", &sig).unwrap_err().found, "c");
    assert_eq!(parse_expr("#<len>[true]", &sig).unwrap_err().found, "len");
    assert!(parse_expr("#[Q(a)] >", &sig).is_err());
    assert!(parse_expr("Q(a) Q(b)", &sig).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn cot_programs_round_trip(p in arb_program()) {
        let text = print_cot_program(&p);
        let back = parse_cot_program(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(print_cot_program(&back), text);
    }

    #[test]
    fn machines_round_trip(m in arb_machine()) {
        let text = print_cm(&m);
        let back = parse_cm(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(print_cm(&back), text);
    }

    #[test]
    fn assembler_round_trips(p in arb_asm()) {
        let text = print_asm(&p);
        let back = parse_asm(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &p);
    }
}
