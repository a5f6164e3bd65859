//! Composition expressions such as `(N1+N2)-N2`.
//!
//! `+` (or `⊕`) combines, `-` (or `⊖`) removes. Both are left-associative and
//! share one precedence level; parentheses group.

use std::fmt;

use crate::aggregation::{merge, remove, Aggregate, AggregationOp};
use crate::error::{Error, Result};
use crate::params::ParamSet;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Ident(String),
    Combine(Box<Expr>, Box<Expr>),
    Remove(Box<Expr>, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Token<'a> {
    Ident(&'a str),
    Plus,
    Minus,
    Open,
    Close,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '*' | '.')
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token<'_>)>> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        let tok = match c {
            c if c.is_whitespace() => {
                chars.next();
                continue;
            }
            '+' | '⊕' => Token::Plus,
            '-' | '⊖' => Token::Minus,
            '(' => Token::Open,
            ')' => Token::Close,
            c if is_ident_char(c) => {
                let mut end = i;
                while let Some(&(j, d)) = chars.peek() {
                    if !is_ident_char(d) {
                        break;
                    }
                    end = j + d.len_utf8();
                    chars.next();
                }
                out.push((i, Token::Ident(&src[i..end])));
                continue;
            }
            other => return Err(Error::config(format!("unexpected character {other:?} at offset {i} in {src:?}"))),
        };
        chars.next();
        out.push((i, tok));
    }
    Ok(out)
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<(usize, Token<'a>)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).map(|&(_, t)| t)
    }

    fn error(&self, what: &str) -> Error {
        match self.tokens.get(self.pos) {
            Some((at, _)) => Error::config(format!("{what} at offset {at} in {:?}", self.src)),
            None => Error::config(format!("{what} at end of {:?}", self.src)),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.operand()?;
        while let Some(op @ (Token::Plus | Token::Minus)) = self.peek() {
            self.pos += 1;
            let rhs = self.operand()?;
            lhs = match op {
                Token::Plus => Expr::Combine(Box::new(lhs), Box::new(rhs)),
                _ => Expr::Remove(Box::new(lhs), Box::new(rhs)),
            };
        }
        Ok(lhs)
    }

    fn operand(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Token::Ident(name)) => {
                self.pos += 1;
                Ok(Expr::Ident(name.to_string()))
            }
            Some(Token::Open) => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(Token::Close) {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            _ => Err(self.error("expected an identifier or '('")),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { src, tokens: tokenize(src)?, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn ident(name: &str) -> Expr {
        Expr::Ident(name.to_string())
    }

    pub fn combine(a: Expr, b: Expr) -> Expr {
        Expr::Combine(Box::new(a), Box::new(b))
    }

    pub fn remove(a: Expr, b: Expr) -> Expr {
        Expr::Remove(Box::new(a), Box::new(b))
    }

    /// Identifiers in left-to-right order, with repeats.
    pub fn identifiers(&self) -> Vec<&str> {
        match self {
            Expr::Ident(s) => vec![s.as_str()],
            Expr::Combine(a, b) | Expr::Remove(a, b) => {
                let mut v = a.identifiers();
                v.extend(b.identifiers());
                v
            }
        }
    }

    /// The normalized form with `⊕`/`⊖` in place of `+`/`-`.
    pub fn to_symbolic(&self) -> String {
        self.render("⊕", "⊖")
    }

    fn render(&self, plus: &str, minus: &str) -> String {
        fn child(e: &Expr, plus: &str, minus: &str) -> String {
            match e {
                Expr::Ident(s) => s.clone(),
                _ => format!("({})", e.render(plus, minus)),
            }
        }
        match self {
            Expr::Ident(s) => s.clone(),
            Expr::Combine(a, b) => {
                format!("{}{plus}{}", child(a, plus, minus), child(b, plus, minus))
            }
            Expr::Remove(a, b) => {
                format!("{}{minus}{}", child(a, plus, minus), child(b, plus, minus))
            }
        }
    }

    /// Evaluate over extractor sets looked up by identifier.
    pub fn evaluate<'a, F>(&self, lookup: &F, op: AggregationOp) -> Result<Aggregate>
    where
        F: Fn(&str) -> Result<&'a ParamSet>,
    {
        match self {
            Expr::Ident(s) => Ok(Aggregate::leaf(lookup(s)?)),
            Expr::Combine(a, b) => merge(&a.evaluate(lookup, op)?, &b.evaluate(lookup, op)?, op),
            Expr::Remove(a, b) => remove(&a.evaluate(lookup, op)?, &b.evaluate(lookup, op)?, op),
        }
    }
}

/// Normalized ASCII form: binary children are parenthesized, the root is not.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render("+", "-"))
    }
}

impl std::str::FromStr for Expr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Expr> {
        Expr::parse(s)
    }
}
