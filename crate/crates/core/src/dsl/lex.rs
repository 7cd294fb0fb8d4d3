use super::{ParseError, SourceSpan};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Kind {
    Ident(String),
    Int(u64),
    Sym(&'static str),
    Newline,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Tok {
    pub kind: Kind,
    pub span: SourceSpan,
}

impl Tok {
    pub fn describe(&self) -> String {
        match &self.kind {
            Kind::Ident(s) => format!("`{s}`"),
            Kind::Int(n) => format!("`{n}`"),
            Kind::Sym(s) => format!("`{s}`"),
            Kind::Newline => "end of line".into(),
            Kind::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Comments {
    /// `# ...` to end of line.
    Hash,
    /// `// ...` to end of line.
    Slash,
}

const SYMS: [&str; 19] = [
    "<-", "->", "(", ")", "[", "]", "<", ">", "=", "!", "&", "|", "+", "-", "*", ",", ":", "#", "/",
];

pub(crate) fn lex(src: &str, comments: Comments) -> Result<Vec<Tok>, ParseError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut line_start = 0;
    let span = |start: usize, len: usize, line: usize, line_start: usize| SourceSpan {
        offset: start,
        line,
        column: src[line_start..start].chars().count() + 1,
        len,
    };
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        if c == b'\n' {
            toks.push(Tok { kind: Kind::Newline, span: span(start, 1, line, line_start) });
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let comment = match comments {
            Comments::Hash => c == b'#',
            Comments::Slash => src[i..].starts_with("//"),
        };
        if comment {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            toks.push(Tok {
                kind: Kind::Ident(src[start..i].to_string()),
                span: span(start, i - start, line, line_start),
            });
            continue;
        }
        if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let sp = span(start, i - start, line, line_start);
            let n = src[start..i].parse::<u64>().map_err(|_| {
                ParseError::semantic(sp, &src[start..i], format!("integer `{}` is too large", &src[start..i]))
            })?;
            toks.push(Tok { kind: Kind::Int(n), span: sp });
            continue;
        }
        match SYMS.iter().find(|s| src[i..].starts_with(**s)) {
            Some(s) => {
                i += s.len();
                toks.push(Tok {
                    kind: Kind::Sym(s),
                    span: span(start, s.len(), line, line_start),
                });
            }
            None => {
                let ch = src[i..].chars().next().expect("non-empty remainder");
                let sp = span(start, ch.len_utf8(), line, line_start);
                return Err(ParseError::semantic(sp, &ch.to_string(), format!("unexpected character `{ch}`")));
            }
        }
    }
    toks.push(Tok { kind: Kind::Eof, span: span(bytes.len(), 0, line, line_start) });
    Ok(toks)
}

/// Token stream with one-token lookahead and backtracking by position.
pub(crate) struct Cursor {
    toks: Vec<Tok>,
    pub pos: usize,
}

impl Cursor {
    pub fn new(toks: Vec<Tok>) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos]
    }

    pub fn peek_at(&self, ahead: usize) -> &Tok {
        &self.toks[(self.pos + ahead).min(self.toks.len() - 1)]
    }

    pub fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].clone();
        if t.kind != Kind::Eof {
            self.pos += 1;
        }
        t
    }

    pub fn at_sym(&self, s: &str) -> bool {
        matches!(&self.peek().kind, Kind::Sym(x) if *x == s)
    }

    pub fn at_word(&self, w: &str) -> bool {
        matches!(&self.peek().kind, Kind::Ident(x) if x == w)
    }

    pub fn eat_sym(&mut self, s: &str) -> bool {
        if self.at_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn err(&self, expected: &[&str]) -> ParseError {
        let t = self.peek();
        ParseError::expected(t.span, expected, &t.describe())
    }

    pub fn expect_sym(&mut self, s: &str) -> Result<SourceSpan, ParseError> {
        if self.at_sym(s) {
            Ok(self.bump().span)
        } else {
            Err(self.err(&[&format!("`{s}`")]))
        }
    }

    pub fn expect_word(&mut self, w: &str) -> Result<SourceSpan, ParseError> {
        if self.at_word(w) {
            Ok(self.bump().span)
        } else {
            Err(self.err(&[&format!("`{w}`")]))
        }
    }

    pub fn ident(&mut self) -> Result<(String, SourceSpan), ParseError> {
        match &self.peek().kind {
            Kind::Ident(s) => {
                let s = s.clone();
                Ok((s, self.bump().span))
            }
            _ => Err(self.err(&["identifier"])),
        }
    }

    pub fn int(&mut self) -> Result<(u64, SourceSpan), ParseError> {
        match self.peek().kind {
            Kind::Int(n) => Ok((n, self.bump().span)),
            _ => Err(self.err(&["integer"])),
        }
    }

    pub fn skip_newlines(&mut self) {
        while self.peek().kind == Kind::Newline {
            self.bump();
        }
    }

    pub fn at_eof(&self) -> bool {
        self.peek().kind == Kind::Eof
    }

    pub fn at_line_end(&self) -> bool {
        matches!(self.peek().kind, Kind::Newline | Kind::Eof)
    }

    pub fn end_line(&mut self) -> Result<(), ParseError> {
        if self.at_line_end() {
            self.bump();
            Ok(())
        } else {
            Err(self.err(&["end of line"]))
        }
    }

    /// Identifiers up to the end of the line.
    pub fn ident_list(&mut self) -> Result<Vec<(String, SourceSpan)>, ParseError> {
        let mut out = Vec::new();
        while !self.at_line_end() {
            out.push(self.ident()?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str, c: Comments) -> Vec<Kind> {
        lex(src, c).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn arrows_and_counts() {
        use Kind::*;
        assert_eq!(
            kinds("rule t <- #<one>[Q(a)] > 0", Comments::Slash),
            vec![
                Ident("rule".into()),
                Ident("t".into()),
                Sym("<-"),
                Sym("#"),
                Sym("<"),
                Ident("one".into()),
                Sym(">"),
                Sym("["),
                Ident("Q".into()),
                Sym("("),
                Ident("a".into()),
                Sym(")"),
                Sym("]"),
                Sym(">"),
                Int(0),
                Eof
            ]
        );
    }

    #[test]
    fn comments_and_spans() {
        let toks = lex("a # x\n  b // y", Comments::Hash).unwrap();
        assert_eq!(toks.len(), 7);
        assert_eq!(toks[2].span.line, 2);
        assert_eq!(toks[2].span.column, 3);
        assert_eq!(kinds("b // y", Comments::Slash).len(), 2);
        assert!(lex("a $", Comments::Hash).is_err());
    }
}
