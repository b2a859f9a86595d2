//! Recursive-descent parser for the drift grammar
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := atom ('^' factor)?
//! atom   := number | 'x' | func '(' expr ')' | '(' expr ')'
//! ```

use super::expr::{BinOp, Expr, Func};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    /// Returns the token and its 0-based start.
    fn next(&mut self) -> Result<(Tok, usize)> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let Some(c) = rest.chars().next() else {
            return Ok((Tok::End, start));
        };
        if c.is_ascii_digit() || c == '.' {
            let bytes = rest.as_bytes();
            let mut i = 0;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &rest[..i];
            let v: f64 = text.parse().map_err(|_| Error::Syntax {
                offset: start + 1,
                message: format!("malformed number `{text}`"),
            })?;
            self.pos += i;
            return Ok((Tok::Num(v), start));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let len = rest
                .find(|ch: char| !(ch.is_ascii_alphanumeric() || ch == '_'))
                .unwrap_or(rest.len());
            self.pos += len;
            return Ok((Tok::Ident(rest[..len].to_string()), start));
        }
        self.pos += c.len_utf8();
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            other => {
                return Err(Error::Syntax {
                    offset: start + 1,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        Ok((tok, start))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<()> {
        let (tok, at) = self.lexer.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            offset: self.at + 1,
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            lhs = Expr::bin(op, lhs, self.term()?);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.tok {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            lhs = Expr::bin(op, lhs, self.factor()?);
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.tok == Tok::Op('^') {
            self.bump()?;
            let exponent = self.factor()?;
            return Ok(Expr::bin(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.tok != Tok::RParen {
            return self.error("expected `)`");
        }
        self.bump()
    }

    fn atom(&mut self) -> Result<Expr> {
        match std::mem::replace(&mut self.tok, Tok::End) {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump()?;
                let e = self.expr()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let start = self.at;
                if name == "x" {
                    self.bump()?;
                    return Ok(Expr::X);
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(Error::UnknownIdentifier {
                        name,
                        offset: start + 1,
                    });
                };
                self.bump()?;
                if self.tok != Tok::LParen {
                    return self.error(format!("expected `(` after `{}`", func.name()));
                }
                self.bump()?;
                let arg = self.expr()?;
                self.expect_rparen()?;
                Ok(Expr::call(func, arg))
            }
            Tok::End => self.error("unexpected end of input"),
            other => {
                self.tok = other.clone();
                self.error(format!("unexpected token {other:?}"))
            }
        }
    }
}

pub fn parse_expr(source: &str) -> Result<Expr> {
    let mut p = Parser {
        lexer: Lexer { src: source, pos: 0 },
        tok: Tok::End,
        at: 0,
    };
    p.bump()?;
    if p.tok == Tok::End {
        return p.error("empty expression");
    }
    let e = p.expr()?;
    if p.tok != Tok::End {
        return p.error("trailing input");
    }
    Ok(e)
}
