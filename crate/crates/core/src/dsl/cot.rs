use std::fmt::Write as _;

use super::lex::{lex, Comments, Cursor, Kind};
use super::{ParseError, SourceSpan};
use crate::cot::{CotProgram, CotRule, ProgramError};
use crate::crasp::{CmpOp, Formula, RelationTable, Signature, Term, Token};
use crate::rpe::RpeKind;

struct Parser {
    cur: Cursor,
    /// Every token and relation use, for post-parse validation.
    uses: Vec<(Use, String, SourceSpan)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Use {
    Token,
    Relation,
}

/// Parses and validates a program.
///
/// ```text
/// alphabet a b
/// cot t0 t1
/// final t1
/// relation one = one
/// rule t0 <- #[Q(a)] > 0 & Q(a)
/// ```
pub fn parse_cot_program(text: &str) -> Result<CotProgram, ParseError> {
    let mut p = Parser {
        cur: Cursor::new(lex(text, Comments::Slash)?),
        uses: Vec::new(),
    };
    let mut sigma: Option<Vec<(String, SourceSpan)>> = None;
    let mut gamma: Option<Vec<(String, SourceSpan)>> = None;
    let mut finals: Option<Vec<(String, SourceSpan)>> = None;
    let mut relations = RelationTable::new();
    let mut rules = Vec::new();
    let mut rule_spans = Vec::new();
    loop {
        p.cur.skip_newlines();
        if p.cur.at_eof() {
            break;
        }
        let (kw, kw_span) = p.cur.ident().map_err(|_| p.cur.err(&HEADER_WORDS))?;
        match kw.as_str() {
            "alphabet" | "cot" | "final" => {
                let ids = p.cur.ident_list()?;
                let slot = match kw.as_str() {
                    "alphabet" => &mut sigma,
                    "cot" => &mut gamma,
                    _ => &mut finals,
                };
                if slot.is_some() {
                    return Err(ParseError::semantic(kw_span, &kw, format!("duplicate `{kw}` line")));
                }
                *slot = Some(ids);
            }
            "relation" => {
                let (name, _) = p.cur.ident()?;
                p.cur.expect_sym("=")?;
                let (kind, span) = p.cur.ident()?;
                let kind = RpeKind::from_keyword(&kind).ok_or_else(|| {
                    ParseError::expected(span, &["`len`", "`one`"], &format!("`{kind}`"))
                })?;
                relations.insert(&name, kind);
            }
            "rule" => {
                let (head, head_span) = p.cur.ident()?;
                p.cur.expect_sym("<-")?;
                let body = p.formula()?;
                rules.push((head, body));
                rule_spans.push(head_span);
            }
            _ => {
                return Err(ParseError::expected(kw_span, &HEADER_WORDS, &format!("`{kw}`")));
            }
        }
        p.cur.end_line()?;
    }
    let eof = p.cur.peek().span;
    let sigma = sigma.ok_or_else(|| ParseError::expected(eof, &["`alphabet` line"], "end of input"))?;
    let gamma = gamma.unwrap_or_default();
    let finals = finals.unwrap_or_default();
    for (name, span) in sigma.iter().chain(&gamma).chain(&finals) {
        check_ident(name, *span)?;
    }
    for (kind, name, span) in &p.uses {
        let known = match kind {
            Use::Token => sigma.iter().chain(&gamma).any(|(s, _)| s == name),
            Use::Relation => relations.get(name).is_some(),
        };
        if !known {
            let what = if *kind == Use::Token { "token" } else { "relation" };
            return Err(ParseError::semantic(*span, name, format!("undeclared {what} `{name}`")));
        }
    }
    let toks = |v: &[(String, SourceSpan)]| v.iter().map(|(s, _)| Token::new(s).expect("checked")).collect::<Vec<_>>();
    let rules = rules
        .into_iter()
        .map(|(h, b)| CotRule::new(Token::new(&h).expect("lexed identifier"), b))
        .collect();
    CotProgram::new(toks(&sigma), toks(&gamma), toks(&finals), rules, relations).map_err(|e| {
        let (span, found) = match &e {
            ProgramError::DuplicateToken(t) | ProgramError::FinalNotInGamma(t) => {
                let s = sigma.iter().chain(&gamma).chain(&finals).rev().find(|(s, _)| s == t.as_str());
                (s.map(|x| x.1).unwrap_or(eof), t.to_string())
            }
            ProgramError::HeadNotInGamma { index, head } | ProgramError::InvalidBody { index, head, .. } => {
                (rule_spans[*index], head.to_string())
            }
            ProgramError::EmptySigma => (eof, String::new()),
        };
        ParseError::semantic(span, &found, e.to_string())
    })
}

/// A standalone formula or term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Formula(Formula),
    Term(Term),
}

/// Parses one formula or term whose tokens and relations come from `sig`.
/// Formulas take precedence, so `#[Q(a)]` is a term and `#[Q(a)] > 0` a
/// formula.
pub fn parse_expr(text: &str, sig: &Signature) -> Result<Expr, ParseError> {
    let mut p = Parser {
        cur: Cursor::new(lex(text, Comments::Slash)?),
        uses: Vec::new(),
    };
    let finish = |p: &mut Parser| {
        p.cur.skip_newlines();
        if p.cur.at_eof() {
            Ok(())
        } else {
            Err(p.cur.err(&["end of input"]))
        }
    };
    let as_formula = p.formula().and_then(|f| finish(&mut p).map(|_| f));
    let formula_reach = p.cur.pos;
    let expr = match as_formula {
        Ok(f) => Expr::Formula(f),
        Err(formula_err) => {
            p.cur.pos = 0;
            p.uses.clear();
            match p.term().and_then(|t| finish(&mut p).map(|_| t)) {
                Ok(t) => Expr::Term(t),
                Err(_) if formula_reach >= p.cur.pos => return Err(formula_err),
                Err(e) => return Err(e),
            }
        }
    };
    for (kind, name, span) in &p.uses {
        let known = match kind {
            Use::Token => Token::new(name).is_ok_and(|t| sig.contains(&t)),
            Use::Relation => sig.relations().get(name).is_some(),
        };
        if !known {
            let what = if *kind == Use::Token { "token" } else { "relation" };
            return Err(ParseError::semantic(*span, name, format!("undeclared {what} `{name}`")));
        }
    }
    Ok(expr)
}

const HEADER_WORDS: [&str; 5] = ["`alphabet`", "`cot`", "`final`", "`relation`", "`rule`"];

fn check_ident(name: &str, span: SourceSpan) -> Result<(), ParseError> {
    Token::new(name).map(|_| ()).map_err(|e| ParseError::semantic(span, name, e.to_string()))
}

impl Parser {
    fn formula(&mut self) -> Result<Formula, ParseError> {
        let mut f = self.conj()?;
        while self.cur.eat_sym("|") {
            f = Formula::or(f, self.conj()?);
        }
        Ok(f)
    }

    fn conj(&mut self) -> Result<Formula, ParseError> {
        let mut f = self.unary()?;
        while self.cur.eat_sym("&") {
            f = Formula::and(f, self.unary()?);
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if self.cur.eat_sym("!") {
            return Ok(Formula::not(self.unary()?));
        }
        if self.cur.at_word("true") {
            self.cur.bump();
            return Ok(Formula::True);
        }
        if self.cur.at_word("Q") && matches!(self.cur.peek_at(1).kind, Kind::Sym("(")) {
            self.cur.bump();
            self.cur.bump();
            let (name, span) = self.cur.ident()?;
            self.cur.expect_sym(")")?;
            self.uses.push((Use::Token, name.clone(), span));
            return Ok(Formula::Atom(Token::new(&name).expect("lexed identifier")));
        }
        if self.cur.at_sym("(") {
            // `(` opens either a term on the left of a comparison or a formula.
            let start = self.cur.pos;
            let uses = self.uses.len();
            let as_cmp = self.comparison();
            if as_cmp.is_ok() {
                return as_cmp;
            }
            let cmp_err = as_cmp.unwrap_err();
            let cmp_reach = self.cur.pos;
            self.cur.pos = start;
            self.uses.truncate(uses);
            self.cur.bump();
            let inner = self.formula().and_then(|f| self.cur.expect_sym(")").map(|_| f));
            return match inner {
                Err(_) if cmp_reach > self.cur.pos => Err(cmp_err),
                other => other,
            };
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.term()?;
        let op = if self.cur.eat_sym("<") {
            CmpOp::Lt
        } else if self.cur.eat_sym("=") {
            CmpOp::Eq
        } else if self.cur.eat_sym(">") {
            CmpOp::Gt
        } else {
            return Err(self.cur.err(&["`<`", "`=`", "`>`", "`+`", "`-`"]));
        };
        let rhs = self.term()?;
        Ok(Formula::cmp(lhs, op, rhs))
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let mut t = self.product()?;
        loop {
            if self.cur.eat_sym("+") {
                t = Term::add(t, self.product()?);
            } else if self.cur.eat_sym("-") {
                t = Term::sub(t, self.product()?);
            } else {
                return Ok(t);
            }
        }
    }

    fn product(&mut self) -> Result<Term, ParseError> {
        if let Kind::Int(_) = self.cur.peek().kind {
            let (n, _) = self.cur.int()?;
            if self.cur.eat_sym("*") {
                return Ok(Term::scale(n, self.product()?));
            }
            return Ok(Term::Const(n));
        }
        if self.cur.eat_sym("#") {
            let rel = if self.cur.eat_sym("<") {
                let (name, span) = self.cur.ident()?;
                self.cur.expect_sym(">")?;
                self.uses.push((Use::Relation, name.clone(), span));
                Some(name)
            } else {
                None
            };
            self.cur.expect_sym("[")?;
            let f = self.formula()?;
            self.cur.expect_sym("]")?;
            return Ok(match rel {
                Some(r) => Term::count_rel(&r, f),
                None => Term::count(f),
            });
        }
        if self.cur.eat_sym("(") {
            let t = self.term()?;
            self.cur.expect_sym(")")?;
            return Ok(t);
        }
        Err(self.cur.err(&["integer", "`#`", "`(`", "`Q`", "`true`", "`!`"]))
    }
}

/// Canonical text; `parse_cot_program` inverts it up to structure.
pub fn print_cot_program(p: &CotProgram) -> String {
    let mut out = String::new();
    let list = |ts: &[Token]| ts.iter().map(|t| format!(" {t}")).collect::<String>();
    writeln!(out, "alphabet{}", list(p.sigma())).unwrap();
    writeln!(out, "cot{}", list(p.gamma())).unwrap();
    writeln!(out, "final{}", list(p.finals())).unwrap();
    for (name, kind) in p.relations().iter() {
        writeln!(out, "relation {name} = {}", kind.keyword()).unwrap();
    }
    for r in p.rules() {
        writeln!(out, "rule {} <- {}", r.head, print_formula(&r.body)).unwrap();
    }
    out
}

pub fn print_formula(f: &Formula) -> String {
    let mut s = String::new();
    formula(&mut s, f, 0);
    s
}

pub fn print_term(t: &Term) -> String {
    let mut s = String::new();
    term(&mut s, t, 0);
    s
}

// Formula levels: 0 = or, 1 = and, 2 = unary. A child printed below its
// required level is parenthesized.
fn formula(out: &mut String, f: &Formula, level: u8) {
    let own = match f {
        Formula::Or(..) => 0,
        Formula::And(..) => 1,
        _ => 2,
    };
    let wrap = own < level;
    if wrap {
        out.push('(');
    }
    match f {
        Formula::True => out.push_str("true"),
        Formula::Atom(t) => write!(out, "Q({t})").unwrap(),
        Formula::Not(a) => {
            out.push('!');
            formula(out, a, 2);
        }
        Formula::And(a, b) => {
            formula(out, a, 1);
            out.push_str(" & ");
            formula(out, b, 2);
        }
        Formula::Or(a, b) => {
            formula(out, a, 0);
            out.push_str(" | ");
            formula(out, b, 1);
        }
        Formula::Compare(a, op, b) => {
            term(out, a, 0);
            write!(out, " {} ", op.symbol()).unwrap();
            term(out, b, 0);
        }
    }
    if wrap {
        out.push(')');
    }
}

// Term levels: 0 = sum, 1 = product operand.
fn term(out: &mut String, t: &Term, level: u8) {
    match t {
        Term::Const(n) => write!(out, "{n}").unwrap(),
        Term::Count(f) => {
            out.push_str("#[");
            formula(out, f, 0);
            out.push(']');
        }
        Term::CountRel(r, f) => {
            write!(out, "#<{r}>[").unwrap();
            formula(out, f, 0);
            out.push(']');
        }
        Term::Add(a, b) | Term::Sub(a, b) => {
            if level > 0 {
                out.push('(');
            }
            term(out, a, 0);
            out.push_str(if matches!(t, Term::Add(..)) { " + " } else { " - " });
            term(out, b, 1);
            if level > 0 {
                out.push(')');
            }
        }
        Term::Scale(k, a) => {
            write!(out, "{k}*").unwrap();
            term(out, a, 1);
        }
    }
}
