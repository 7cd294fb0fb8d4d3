use std::fmt::Write as _;

use super::lex::{lex, Comments, Cursor, Kind};
use super::ParseError;
use crate::asm::{AsmProgram, Instr, MacroDef, Stmt};

/// Parses assembler source.
///
/// ```text
/// counters in: x aux: t
/// loop:
///   BZ x done
///   DEC x
///   GOTO loop
/// done:
///   ACCEPT
/// ```
pub fn parse_asm(text: &str) -> Result<AsmProgram, ParseError> {
    let mut cur = Cursor::new(lex(text, Comments::Hash)?);
    let mut prog = AsmProgram::default();
    let mut seen_counters = false;
    loop {
        cur.skip_newlines();
        if cur.at_eof() {
            break;
        }
        if cur.at_word("counters") && !matches!(cur.peek_at(1).kind, Kind::Sym(":")) {
            let span = cur.bump().span;
            if seen_counters {
                return Err(ParseError::semantic(span, "counters", "duplicate `counters` line".into()));
            }
            seen_counters = true;
            cur.expect_word("in")?;
            cur.expect_sym(":")?;
            while !cur.at_line_end() && !cur.at_word("aux") {
                prog.inputs.push(cur.ident()?.0);
            }
            if cur.at_word("aux") {
                cur.bump();
                cur.expect_sym(":")?;
                prog.aux.extend(cur.ident_list()?.into_iter().map(|(s, _)| s));
            }
            cur.end_line()?;
        } else if cur.at_word("macro") && !matches!(cur.peek_at(1).kind, Kind::Sym(":")) {
            cur.bump();
            prog.macros.push(macro_def(&mut cur)?);
        } else {
            stmt_line(&mut cur, &mut prog.body, None)?;
        }
    }
    Ok(prog)
}

fn macro_def(cur: &mut Cursor) -> Result<MacroDef, ParseError> {
    let (name, _) = cur.ident()?;
    cur.expect_sym("(")?;
    let params = ident_args(cur)?;
    cur.end_line()?;
    let mut def = MacroDef {
        name,
        params,
        temps: Vec::new(),
        body: Vec::new(),
    };
    loop {
        cur.skip_newlines();
        if cur.at_eof() {
            return Err(cur.err(&["`end`"]));
        }
        if cur.at_word("end") && !matches!(cur.peek_at(1).kind, Kind::Sym(":")) {
            cur.bump();
            cur.end_line()?;
            return Ok(def);
        }
        stmt_line(cur, &mut def.body, Some(&mut def.temps))?;
    }
}

/// Comma-separated identifiers up to and including `)`.
fn ident_args(cur: &mut Cursor) -> Result<Vec<String>, ParseError> {
    let mut out = Vec::new();
    if cur.eat_sym(")") {
        return Ok(out);
    }
    loop {
        out.push(cur.ident()?.0);
        if cur.eat_sym(")") {
            return Ok(out);
        }
        if !cur.eat_sym(",") {
            return Err(cur.err(&["`,`", "`)`"]));
        }
    }
}

const MNEMONICS: [&str; 8] = ["`ACCEPT`", "`BZ`", "`DEC`", "`GOTO`", "`INC`", "`REJECT`", "`call`", "label"];

fn stmt_line(cur: &mut Cursor, body: &mut Vec<Stmt>, temps: Option<&mut Vec<String>>) -> Result<(), ParseError> {
    let (word, span) = cur.ident().map_err(|_| cur.err(&MNEMONICS))?;
    if cur.eat_sym(":") {
        body.push(Stmt::Label(word));
        if cur.at_line_end() {
            return cur.end_line();
        }
        return stmt_line(cur, body, temps);
    }
    let instr = match word.to_ascii_uppercase().as_str() {
        "INC" => Instr::Inc(cur.ident()?.0),
        "DEC" => Instr::Dec(cur.ident()?.0),
        "GOTO" => Instr::Goto(cur.ident()?.0),
        "BZ" => {
            let r = cur.ident()?.0;
            Instr::Bz(r, cur.ident()?.0)
        }
        "ACCEPT" => Instr::Accept,
        "REJECT" => Instr::Reject,
        "CALL" => {
            let (name, _) = cur.ident()?;
            cur.expect_sym("(")?;
            Instr::Call {
                name,
                args: ident_args(cur)?,
            }
        }
        "TEMP" => match temps {
            Some(t) => {
                t.extend(cur.ident_list()?.into_iter().map(|(s, _)| s));
                return cur.end_line();
            }
            None => {
                return Err(ParseError::semantic(span, &word, "`temp` outside a macro".into()));
            }
        },
        _ => return Err(ParseError::expected(span, &MNEMONICS, &format!("`{word}`"))),
    };
    body.push(Stmt::Instr(instr));
    cur.end_line()
}

pub fn print_asm(p: &AsmProgram) -> String {
    let mut out = String::new();
    if !p.inputs.is_empty() || !p.aux.is_empty() || !p.body.is_empty() {
        out.push_str("counters in:");
        for c in &p.inputs {
            write!(out, " {c}").unwrap();
        }
        if !p.aux.is_empty() {
            out.push_str(" aux:");
            for c in &p.aux {
                write!(out, " {c}").unwrap();
            }
        }
        out.push('\n');
    }
    for m in &p.macros {
        writeln!(out, "macro {}({})", m.name, m.params.join(", ")).unwrap();
        if !m.temps.is_empty() {
            writeln!(out, "  temp {}", m.temps.join(" ")).unwrap();
        }
        print_body(&mut out, &m.body);
        out.push_str("end\n");
    }
    print_body(&mut out, &p.body);
    out
}

fn print_body(out: &mut String, body: &[Stmt]) {
    for s in body {
        match s {
            Stmt::Label(l) => writeln!(out, "{l}:").unwrap(),
            Stmt::Instr(i) => {
                out.push_str("  ");
                match i {
                    Instr::Inc(r) => write!(out, "INC {r}"),
                    Instr::Dec(r) => write!(out, "DEC {r}"),
                    Instr::Goto(l) => write!(out, "GOTO {l}"),
                    Instr::Bz(r, l) => write!(out, "BZ {r} {l}"),
                    Instr::Accept => write!(out, "ACCEPT"),
                    Instr::Reject => write!(out, "REJECT"),
                    Instr::Call { name, args } => write!(out, "call {name}({})", args.join(", ")),
                }
                .unwrap();
                out.push('\n');
            }
        }
    }
}
