use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use super::expr::{Expr, Func, TableRef};
use super::table::HermiteTable;

/// Source position, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character {0:?}")]
    Lexical(char),
    #[error("malformed number {0:?}")]
    BadNumber(String),
    #[error("unknown identifier {0:?}")]
    UnknownIdentifier(String),
    #[error("unbalanced parentheses")]
    UnbalancedParens,
    #[error("exponent must be a literal number")]
    NonLiteralExponent,
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: &'static str, found: String },
    #[error("missing header line `{0}`")]
    MissingHeader(&'static str),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("expected {expected} {block} components, found {found}")]
    ComponentCount { block: char, expected: usize, found: usize },
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("transversal field required: no C components given")]
    MissingTransversal,
    #[error("malformed table: {0}")]
    BadTable(String),
    #[error("unrecognised line")]
    UnknownLine,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{location}: {kind}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub location: Location,
}

impl ParseError {
    pub(crate) fn new(kind: ParseErrorKind, line: usize, column: usize) -> Self {
        ParseError { kind, location: Location { line, column } }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String, usize),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "number {v}"),
            Tok::Ident(s, primes) => write!(f, "identifier {s}{}", "'".repeat(*primes)),
            Tok::Plus => f.write_str("'+'"),
            Tok::Minus => f.write_str("'-'"),
            Tok::Star => f.write_str("'*'"),
            Tok::Slash => f.write_str("'/'"),
            Tok::Caret => f.write_str("'^'"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str, line: usize, col0: usize) -> Result<Vec<(Tok, usize)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = col0 + i;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(t) = single {
            out.push((t, col));
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ParseError::new(ParseErrorKind::BadNumber(s.clone()), line, col))?;
            out.push((Tok::Num(v), col));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            let mut primes = 0;
            while i < chars.len() && chars[i] == '\'' {
                primes += 1;
                i += 1;
            }
            out.push((Tok::Ident(s, primes), col));
        } else {
            return Err(ParseError::new(ParseErrorKind::Lexical(c), line, col));
        }
    }
    out.push((Tok::End, col0 + chars.len()));
    Ok(out)
}

/// Names visible while parsing: variables and sampled tables.
pub(crate) struct Scope<'a> {
    pub vars: &'a [String],
    pub tables: &'a [Arc<HermiteTable>],
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    scope: &'a Scope<'a>,
    depth: usize,
}

const MAX_DEPTH: usize = 256;

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn col(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError::new(kind, self.line, self.col())
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        let kind = match self.peek() {
            Tok::RParen => ParseErrorKind::UnbalancedParens,
            other => ParseErrorKind::Unexpected { expected, found: other.to_string() },
        };
        self.err(kind)
    }

    fn enter(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err(ParseErrorKind::Unexpected {
                expected: "shallower nesting",
                found: "expression nested too deeply".into(),
            }));
        }
        Ok(())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.enter()?;
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => break,
            }
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Tok::Slash => {
                    self.bump();
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.enter()?;
            self.bump();
            let inner = self.unary()?;
            self.depth -= 1;
            Ok(Expr::Neg(Box::new(inner)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() != Tok::Caret {
            return Ok(base);
        }
        self.bump();
        let col = self.col();
        let exponent = self.exponent()?;
        if !exponent.is_literal() {
            return Err(ParseError::new(ParseErrorKind::NonLiteralExponent, self.line, col));
        }
        Ok(Expr::Pow(Box::new(base), Box::new(exponent)))
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.enter()?;
            self.bump();
            let inner = self.exponent()?;
            self.depth -= 1;
            Ok(Expr::Neg(Box::new(inner)))
        } else {
            self.power()
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let col = self.col();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.err(ParseErrorKind::UnbalancedParens));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name, primes) => {
                self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return Err(self.err(ParseErrorKind::UnbalancedParens));
                    }
                    self.bump();
                    if primes == 0 {
                        if let Some(f) = Func::from_name(&name) {
                            return Ok(Expr::Call(f, Box::new(arg)));
                        }
                    }
                    if let Some(t) = self.scope.tables.iter().find(|t| t.name() == name) {
                        let r = TableRef { table: t.clone(), order: primes };
                        return Ok(Expr::Table(r, Box::new(arg)));
                    }
                    let full = format!("{name}{}", "'".repeat(primes));
                    return Err(ParseError::new(
                        ParseErrorKind::UnknownIdentifier(full),
                        self.line,
                        col,
                    ));
                }
                match self.scope.vars.iter().position(|v| *v == name) {
                    Some(i) if primes == 0 => Ok(Expr::Var(i)),
                    _ => Err(ParseError::new(
                        ParseErrorKind::UnknownIdentifier(format!("{name}{}", "'".repeat(primes))),
                        self.line,
                        col,
                    )),
                }
            }
            _ => Err(self.unexpected("an operand")),
        }
    }
}

pub(crate) fn parse_in_scope(
    text: &str,
    scope: &Scope<'_>,
    line: usize,
    column: usize,
) -> Result<Expr, ParseError> {
    let toks = lex(text, line, column)?;
    let mut p = Parser { toks, pos: 0, line, scope, depth: 0 };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::RParen => Err(p.err(ParseErrorKind::UnbalancedParens)),
        _ => Err(p.unexpected("an operator or end of input")),
    }
}

/// Parses a single expression over the given variable names.
///
/// Precedence, loosest first: `+ -`, `* /`, unary `-`, `^`. Binary operators
/// are left associative except `^`, whose exponent must be a literal.
pub fn parse_expr(text: &str, vars: &[String]) -> Result<Expr, ParseError> {
    parse_in_scope(text, &Scope { vars, tables: &[] }, 1, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn xyz() -> Vec<String> {
        ["x", "y", "z"].iter().map(|s| s.to_string()).collect()
    }

    fn p(s: &str) -> Result<Expr, ParseError> {
        parse_expr(s, &xyz())
    }

    fn b(e: Expr) -> Box<Expr> {
        Box::new(e)
    }

    #[test]
    fn function_call_and_sum() {
        assert_eq!(p("sinh(z)").unwrap(), Expr::Call(Func::Sinh, b(Expr::Var(2))));
        assert_eq!(p("x + y").unwrap(), Expr::Add(b(Expr::Var(0)), b(Expr::Var(1))));
    }

    #[test]
    fn precedence_shapes() {
        // x + y * z
        assert_eq!(
            p("x+y*z").unwrap(),
            Expr::Add(b(Expr::Var(0)), b(Expr::Mul(b(Expr::Var(1)), b(Expr::Var(2)))))
        );
        // -(x^2)
        assert_eq!(
            p("-x^2").unwrap(),
            Expr::Neg(b(Expr::Pow(b(Expr::Var(0)), b(Expr::Num(2.0)))))
        );
        // (x - y) - z
        assert_eq!(
            p("x-y-z").unwrap(),
            Expr::Sub(b(Expr::Sub(b(Expr::Var(0)), b(Expr::Var(1)))), b(Expr::Var(2)))
        );
        // (x / y) * z
        assert_eq!(
            p("x / y * z").unwrap(),
            Expr::Mul(b(Expr::Div(b(Expr::Var(0)), b(Expr::Var(1)))), b(Expr::Var(2)))
        );
    }

    #[test]
    fn literal_exponents() {
        assert!(p("x^2").is_ok());
        assert!(p("x^(1/2)").is_ok());
        assert!(p("x^-3").is_ok());
        assert!(p("x^(-1/3)").is_ok());
        assert!(p("x ^ 1.5e0").is_ok());
        let err = p("x ^ y").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonLiteralExponent);
        assert_eq!(err.location, Location { line: 1, column: 5 });
        assert_eq!(p("x^2^3").unwrap_err().kind, ParseErrorKind::NonLiteralExponent);
        assert_eq!(p("x^(y+1)").unwrap_err().kind, ParseErrorKind::NonLiteralExponent);
    }

    #[test]
    fn errors_carry_locations() {
        let e = p("x + w").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownIdentifier("w".into()));
        assert_eq!(e.location.column, 5);

        assert_eq!(p("(x + y").unwrap_err().kind, ParseErrorKind::UnbalancedParens);
        assert_eq!(p("x + y)").unwrap_err().kind, ParseErrorKind::UnbalancedParens);
        assert_eq!(p("sinh(x").unwrap_err().kind, ParseErrorKind::UnbalancedParens);
        assert_eq!(p("x $ y").unwrap_err().kind, ParseErrorKind::Lexical('$'));
        assert_eq!(p("foo(x)").unwrap_err().kind, ParseErrorKind::UnknownIdentifier("foo".into()));
        assert!(matches!(p("x +").unwrap_err().kind, ParseErrorKind::Unexpected { .. }));
        assert!(matches!(p("").unwrap_err().kind, ParseErrorKind::Unexpected { .. }));
        assert!(matches!(p("1.2.3").unwrap_err().kind, ParseErrorKind::BadNumber(_)));
        assert!(matches!(p("2e999").unwrap_err().kind, ParseErrorKind::BadNumber(_)));
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let s = format!("{}x{}", "(".repeat(5000), ")".repeat(5000));
        assert!(p(&s).is_err());
        let s = format!("{}x", "-".repeat(5000));
        assert!(p(&s).is_err());
    }
}
