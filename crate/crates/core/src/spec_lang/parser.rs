//! Hand-written lexer and recursive-descent parser for the specification
//! language. Grammar (lowest to highest precedence):
//!
//! ```text
//! spec    := "P" cmp number "[" formula "]" | formula
//! formula := implies ("U" formula)?
//! implies := or ("->" implies)?
//! or      := and ("|" and)*
//! and     := unary ("&" unary)*
//! unary   := ("!" | "X" | "G" | "F") unary | atom
//! atom    := string | "True" | "False" | "(" formula ")"
//! ```

use super::ast::{Comparator, ProbQuery, Proposition, Spec, SpecAst};
use super::{ParseError, SpecError};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Str(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Not,
    And,
    Or,
    Implies,
    Next,
    Until,
    Always,
    Eventually,
    Release,
    True,
    False,
    Prob,
    Cmp(Comparator),
    Number(f64),
    Ident(String),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Str(s) => format!("proposition \"{s}\""),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::Not => "'!'".into(),
            Tok::And => "'&'".into(),
            Tok::Or => "'|'".into(),
            Tok::Implies => "'->'".into(),
            Tok::Next => "'X'".into(),
            Tok::Until => "'U'".into(),
            Tok::Always => "'G'".into(),
            Tok::Eventually => "'F'".into(),
            Tok::Release => "'R'".into(),
            Tok::True => "'True'".into(),
            Tok::False => "'False'".into(),
            Tok::Prob => "'P'".into(),
            Tok::Cmp(c) => format!("'{c}'"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexed {
    tok: Tok,
    offset: usize,
}

fn lex(text: &str) -> Result<Vec<Lexed>, ParseError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut chars = text.char_indices().peekable();
    while let Some(&(off, ch)) = chars.peek() {
        if ch.is_whitespace() {
            chars.next();
            continue;
        }
        let single = |tok: Tok| Lexed { tok, offset: off };
        match ch {
            '"' => {
                chars.next();
                let mut label = String::new();
                let mut closed = false;
                while let Some((_, c)) = chars.next() {
                    match c {
                        '"' => {
                            closed = true;
                            break;
                        }
                        '\\' => match chars.next() {
                            Some((_, e @ ('"' | '\\'))) => label.push(e),
                            Some((eoff, e)) => {
                                return Err(ParseError::new(
                                    eoff,
                                    format!("invalid escape '\\{e}' in proposition literal"),
                                    &[],
                                    e.to_string(),
                                ))
                            }
                            None => break,
                        },
                        c => label.push(c),
                    }
                }
                if !closed {
                    return Err(ParseError::new(
                        off,
                        "unterminated proposition literal (unbalanced quote)".into(),
                        &["'\"'"],
                        "end of input".into(),
                    ));
                }
                if label.trim().is_empty() {
                    return Err(ParseError::new(
                        off,
                        "empty proposition label".into(),
                        &["non-empty label"],
                        "\"\"".into(),
                    ));
                }
                out.push(single(Tok::Str(label)));
            }
            '(' | ')' | '[' | ']' | '!' | '&' | '|' | '¬' | '∧' | '∨' | '□' | '◇' | '◊' | '→' | '𝖴' | '≥' | '≤' =>
            {
                chars.next();
                let tok = match ch {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '!' | '¬' => Tok::Not,
                    '&' | '∧' => Tok::And,
                    '|' | '∨' => Tok::Or,
                    '□' => Tok::Always,
                    '◇' | '◊' => Tok::Eventually,
                    '→' => Tok::Implies,
                    '𝖴' => Tok::Until,
                    '≥' => Tok::Cmp(Comparator::Ge),
                    '≤' => Tok::Cmp(Comparator::Le),
                    _ => unreachable!(),
                };
                out.push(single(tok));
            }
            '-' if bytes.get(off + 1) == Some(&b'>') => {
                chars.next();
                chars.next();
                out.push(single(Tok::Implies));
            }
            '<' | '>' => {
                chars.next();
                let eq = matches!(chars.peek(), Some(&(_, '=')));
                if eq {
                    chars.next();
                }
                let cmp = match (ch, eq) {
                    ('<', false) => Comparator::Lt,
                    ('<', true) => Comparator::Le,
                    ('>', false) => Comparator::Gt,
                    _ => Comparator::Ge,
                };
                out.push(single(Tok::Cmp(cmp)));
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut end = off;
                while let Some(&(o, c)) = chars.peek() {
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' {
                        end = o + c.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let lit = &text[off..end];
                let value: f64 = lit
                    .parse()
                    .map_err(|_| ParseError::new(off, format!("malformed number '{lit}'"), &["number"], lit.into()))?;
                out.push(single(Tok::Number(value)));
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut end = off;
                while let Some(&(o, c)) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' {
                        end = o + c.len_utf8();
                        chars.next();
                    } else {
                        break;
                    }
                }
                let word = &text[off..end];
                let tok = match word {
                    "X" => Tok::Next,
                    "U" => Tok::Until,
                    "G" => Tok::Always,
                    "F" => Tok::Eventually,
                    "R" => Tok::Release,
                    "P" => Tok::Prob,
                    "True" | "true" => Tok::True,
                    "False" | "false" => Tok::False,
                    _ => Tok::Ident(word.to_string()),
                };
                out.push(single(tok));
            }
            other => {
                return Err(ParseError::new(off, format!("unexpected character '{other}'"), &[], other.to_string()))
            }
        }
    }
    out.push(Lexed { tok: Tok::Eof, offset: text.len() });
    Ok(out)
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
}

const ATOM_START: &[&str] = &["proposition", "'('", "'!'", "'X'", "'G'", "'F'", "'True'", "'False'"];

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].offset
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        let found = self.peek().describe();
        ParseError::new(self.offset(), format!("unexpected {found}"), expected, found)
    }

    fn expect(&mut self, tok: Tok, name: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&[name]))
        }
    }

    fn spec(&mut self) -> Result<Spec, SpecError> {
        if *self.peek() == Tok::Prob {
            self.bump();
            let cmp = match self.bump() {
                Tok::Cmp(c) => c,
                _ => {
                    self.pos -= 1;
                    return Err(self.unexpected(&["'<'", "'<='", "'>='", "'>'"]).into());
                }
            };
            let lambda_off = self.offset();
            let lambda = match self.bump() {
                Tok::Number(n) => n,
                _ => {
                    self.pos -= 1;
                    return Err(self.unexpected(&["number"]).into());
                }
            };
            let query = ProbQuery::new(cmp, lambda).map_err(|e| {
                SpecError::Parse(ParseError::new(lambda_off, e.to_string(), &["number in [0,1]"], lambda.to_string()))
            })?;
            self.expect(Tok::LBracket, "'['")?;
            let body = self.formula()?;
            self.expect(Tok::RBracket, "']'")?;
            self.expect(Tok::Eof, "end of input")?;
            Ok(Spec::new(Some(query), body))
        } else {
            let body = self.formula()?;
            if *self.peek() != Tok::Eof {
                return Err(self.unexpected(&["'U'", "'->'", "'|'", "'&'", "end of input"]).into());
            }
            Ok(Spec::new(None, body))
        }
    }

    fn formula(&mut self) -> Result<SpecAst, ParseError> {
        let left = self.implies()?;
        if *self.peek() == Tok::Until {
            self.bump();
            let right = self.formula()?;
            return Ok(SpecAst::until(left, right));
        }
        if *self.peek() == Tok::Release {
            return Err(ParseError::new(
                self.offset(),
                "the release operator 'R' is not supported; rewrite as !(!a U !b)".into(),
                &["'U'", "'->'", "'|'", "'&'"],
                "'R'".into(),
            ));
        }
        Ok(left)
    }

    fn implies(&mut self) -> Result<SpecAst, ParseError> {
        let left = self.or()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            let right = self.implies()?;
            return Ok(SpecAst::implies(left, right));
        }
        Ok(left)
    }

    fn or(&mut self) -> Result<SpecAst, ParseError> {
        let mut left = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let right = self.and()?;
            left = SpecAst::or(left, right);
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<SpecAst, ParseError> {
        let mut left = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let right = self.unary()?;
            left = SpecAst::and(left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<SpecAst, ParseError> {
        let ctor: fn(SpecAst) -> SpecAst = match self.peek() {
            Tok::Not => SpecAst::not,
            Tok::Next => SpecAst::next,
            Tok::Always => SpecAst::always,
            Tok::Eventually => SpecAst::eventually,
            _ => return self.atom(),
        };
        self.bump();
        Ok(ctor(self.unary()?))
    }

    fn atom(&mut self) -> Result<SpecAst, ParseError> {
        let off = self.offset();
        match self.peek().clone() {
            Tok::Str(label) => {
                self.bump();
                let p = Proposition::new(label)
                    .map_err(|e| ParseError::new(off, e.to_string(), &["non-empty label"], "\"\"".into()))?;
                Ok(SpecAst::Prop(p))
            }
            Tok::True => {
                self.bump();
                Ok(SpecAst::True)
            }
            Tok::False => {
                self.bump();
                Ok(SpecAst::False)
            }
            Tok::LParen => {
                self.bump();
                let inner = self.formula()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Prob => Err(ParseError::new(
                off,
                "probabilistic quantifier 'P' is only allowed at the root of a specification".into(),
                ATOM_START,
                "'P'".into(),
            )),
            Tok::Release => {
                Err(ParseError::new(off, "the release operator 'R' is not supported".into(), ATOM_START, "'R'".into()))
            }
            Tok::Ident(word) => Err(ParseError::new(
                off,
                format!("unquoted identifier '{word}'; proposition labels must be quoted, e.g. \"{word}\""),
                ATOM_START,
                format!("identifier '{word}'"),
            )),
            _ => Err(self.unexpected(ATOM_START)),
        }
    }
}

/// Parses a specification string.
pub fn parse_spec(text: &str) -> Result<Spec, SpecError> {
    if text.trim().is_empty() {
        return Err(SpecError::Parse(ParseError::new(
            0,
            "empty specification".into(),
            ATOM_START,
            "end of input".into(),
        )));
    }
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    parser.spec()
}

/// Parses a bare path formula (no quantifier allowed).
pub fn parse_formula(text: &str) -> Result<SpecAst, SpecError> {
    let spec = parse_spec(text)?;
    if spec.query().is_some() {
        return Err(SpecError::Parse(ParseError::new(
            0,
            "a quantifier is not allowed here".into(),
            ATOM_START,
            "'P'".into(),
        )));
    }
    Ok(spec.surface().clone())
}
