use std::fmt::Write as _;

use super::lex::{lex, Comments, Cursor};
use super::{ParseError, SourceSpan};
use crate::cm::{CounterMachine, Guard, GuardAtom, Test, Transition};

/// Parses a machine and checks it for determinism.
///
/// ```text
/// counters 2
/// state q0 initial
/// state q1 final
/// trans q0 -> q0 when x1>0 effect (-2,0)
/// trans q0 -> q1 when x1=0 effect (0,0)
/// ```
pub fn parse_cm(text: &str) -> Result<CounterMachine, ParseError> {
    let mut cur = Cursor::new(lex(text, Comments::Hash)?);
    cur.skip_newlines();
    if !cur.at_word("counters") {
        return Err(cur.err(&["`counters`"]));
    }
    cur.bump();
    let (k, _) = cur.int()?;
    let k = k as usize;
    cur.end_line()?;

    let mut states: Vec<(String, SourceSpan)> = Vec::new();
    let mut initial: Option<usize> = None;
    let mut finals = Vec::new();
    let mut raw: Vec<RawTrans> = Vec::new();
    loop {
        cur.skip_newlines();
        if cur.at_eof() {
            break;
        }
        if cur.at_word("state") {
            cur.bump();
            let (name, span) = cur.ident()?;
            if states.iter().any(|(s, _)| *s == name) {
                return Err(ParseError::semantic(span, &name, format!("state `{name}` declared twice")));
            }
            let ix = states.len();
            states.push((name, span));
            while !cur.at_line_end() {
                if cur.at_word("initial") {
                    let span = cur.bump().span;
                    if initial.replace(ix).is_some() {
                        return Err(ParseError::semantic(span, "initial", "second initial state".into()));
                    }
                } else if cur.at_word("final") {
                    cur.bump();
                    finals.push(ix);
                } else {
                    return Err(cur.err(&["`initial`", "`final`", "end of line"]));
                }
            }
        } else if cur.at_word("trans") {
            cur.bump();
            raw.push(trans_line(&mut cur, k)?);
        } else {
            return Err(cur.err(&["`state`", "`trans`"]));
        }
        cur.end_line()?;
    }
    let eof = cur.peek().span;
    let initial = initial.ok_or_else(|| ParseError::semantic(eof, "", "no initial state".into()))?;
    let lookup = |name: &str, span: SourceSpan| {
        states
            .iter()
            .position(|(s, _)| s == name)
            .ok_or_else(|| ParseError::semantic(span, name, format!("unknown state `{name}`")))
    };
    let mut transitions = Vec::with_capacity(raw.len());
    for t in raw {
        transitions.push(Transition {
            src: lookup(&t.src.0, t.src.1)?,
            guard: t.guard,
            tgt: lookup(&t.tgt.0, t.tgt.1)?,
            effect: t.effect,
        });
    }
    let names = states.iter().map(|(s, _)| s.clone()).collect();
    CounterMachine::new(k, names, transitions, initial, finals)
        .map_err(|e| ParseError::semantic(eof, "", e.to_string()))
}

struct RawTrans {
    src: (String, SourceSpan),
    tgt: (String, SourceSpan),
    guard: Guard,
    effect: Vec<i64>,
}

fn trans_line(cur: &mut Cursor, k: usize) -> Result<RawTrans, ParseError> {
    let src = cur.ident()?;
    cur.expect_sym("->")?;
    let tgt = cur.ident()?;
    cur.expect_word("when")?;
    let guard_span = cur.peek().span;
    let mut atoms = Vec::new();
    if !cur.eat_sym("-") {
        loop {
            let (name, span) = cur.ident()?;
            let counter = counter_index(&name, k).ok_or_else(|| {
                ParseError::semantic(span, &name, format!("`{name}` is not a counter x1..x{k}"))
            })?;
            let test = if cur.eat_sym("=") {
                Test::Zero
            } else if cur.eat_sym(">") {
                Test::Positive
            } else {
                return Err(cur.err(&["`=`", "`>`"]));
            };
            let (zero, zspan) = cur.int()?;
            if zero != 0 {
                return Err(ParseError::expected(zspan, &["`0`"], &format!("`{zero}`")));
            }
            atoms.push(GuardAtom { counter, test });
            if !cur.eat_sym(",") {
                break;
            }
        }
    }
    let guard = Guard::new(atoms).map_err(|e| ParseError::semantic(guard_span, "", e.to_string()))?;
    cur.expect_word("effect")?;
    let open = cur.expect_sym("(")?;
    let mut effect = Vec::new();
    if !cur.at_sym(")") {
        loop {
            let neg = cur.eat_sym("-");
            let (n, span) = cur.int()?;
            let v = i64::try_from(n)
                .map_err(|_| ParseError::semantic(span, &n.to_string(), "effect out of range".into()))?;
            effect.push(if neg { -v } else { v });
            if !cur.eat_sym(",") {
                break;
            }
        }
    }
    cur.expect_sym(")")?;
    if effect.len() != k {
        return Err(ParseError::semantic(
            open,
            "(",
            format!("effect has {} entries, expected {k}", effect.len()),
        ));
    }
    Ok(RawTrans { src, tgt, guard, effect })
}

fn counter_index(name: &str, k: usize) -> Option<usize> {
    let digits = name.strip_prefix('x')?;
    if digits.starts_with('0') {
        return None;
    }
    let i: usize = digits.parse().ok()?;
    (1..=k).contains(&i).then(|| i - 1)
}

pub fn print_cm(m: &CounterMachine) -> String {
    let mut out = String::new();
    writeln!(out, "counters {}", m.k()).unwrap();
    for (i, s) in m.states().iter().enumerate() {
        write!(out, "state {s}").unwrap();
        if i == m.initial() {
            out.push_str(" initial");
        }
        if m.is_final(i) {
            out.push_str(" final");
        }
        out.push('\n');
    }
    for t in m.transitions() {
        let effect: Vec<String> = t.effect.iter().map(|e| e.to_string()).collect();
        writeln!(
            out,
            "trans {} -> {} when {} effect ({})",
            m.states()[t.src],
            m.states()[t.tgt],
            t.guard,
            effect.join(",")
        )
        .unwrap();
    }
    out
}

