//! Grammar:
//!
//! ```text
//! sum    := term ('+' term)*
//! term   := [int '*'] prod
//! prod   := factor ('(x)' factor)*
//! factor := 'S' | 'V' ['^' int] | '(' sum ')'
//! ```

use super::SeqExpr;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Scalar,
    Base,
    Int(usize),
    Plus,
    Star,
    Caret,
    Otimes,
    Open,
    Close,
}

fn tokenize(input: &str) -> std::result::Result<Vec<Token>, String> {
    let chars: Vec<char> = input.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            'S' => {
                out.push(Token::Scalar);
                i += 1;
            }
            'V' => {
                out.push(Token::Base);
                i += 1;
            }
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            ')' => {
                out.push(Token::Close);
                i += 1;
            }
            '(' => {
                if chars.get(i + 1) == Some(&'x') && chars.get(i + 2) == Some(&')') {
                    out.push(Token::Otimes);
                    i += 3;
                } else {
                    out.push(Token::Open);
                    i += 1;
                }
            }
            d if d.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let value = text
                    .parse()
                    .map_err(|_| format!("integer `{text}` is too large"))?;
                out.push(Token::Int(value));
            }
            other => return Err(format!("unexpected character `{other}` at position {i}")),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token) -> std::result::Result<(), String> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(format!("expected {want:?}, found {t:?}")),
            None => Err(format!("expected {want:?}, found end of input")),
        }
    }

    fn sum(&mut self) -> std::result::Result<SeqExpr, String> {
        let mut items = vec![self.term()?];
        while self.peek() == Some(&Token::Plus) {
            self.pos += 1;
            items.push(self.term()?);
        }
        Ok(SeqExpr::sum(items))
    }

    fn term(&mut self) -> std::result::Result<SeqExpr, String> {
        if let Some(Token::Int(m)) = self.peek().cloned() {
            self.pos += 1;
            self.expect(Token::Star)?;
            if m == 0 {
                return Err("multiplicity must be positive".into());
            }
            let prod = self.prod()?;
            return Ok(SeqExpr::multiple(m, prod));
        }
        self.prod()
    }

    fn prod(&mut self) -> std::result::Result<SeqExpr, String> {
        let mut factors = vec![self.factor()?];
        while self.peek() == Some(&Token::Otimes) {
            self.pos += 1;
            factors.push(self.factor()?);
        }
        Ok(SeqExpr::tensor(factors))
    }

    fn factor(&mut self) -> std::result::Result<SeqExpr, String> {
        match self.next() {
            Some(Token::Scalar) => Ok(SeqExpr::Scalar),
            Some(Token::Base) => {
                if self.peek() == Some(&Token::Caret) {
                    self.pos += 1;
                    match self.next() {
                        Some(Token::Int(k)) => Ok(SeqExpr::power(k)),
                        _ => Err("expected an exponent after `^`".into()),
                    }
                } else {
                    Ok(SeqExpr::Base)
                }
            }
            Some(Token::Open) => {
                let inner = self.sum()?;
                self.expect(Token::Close)?;
                Ok(inner)
            }
            Some(t) => Err(format!("unexpected {t:?}")),
            None => Err("unexpected end of input".into()),
        }
    }
}

pub(super) fn parse(input: &str) -> Result<SeqExpr> {
    let fail = |reason: String| Error::Parse {
        input: input.to_string(),
        reason,
    };
    let tokens = tokenize(input).map_err(fail)?;
    if tokens.is_empty() {
        return Err(fail("empty expression".into()));
    }
    let mut p = Parser { tokens, pos: 0 };
    let expr = p.sum().map_err(fail)?;
    if p.pos != p.tokens.len() {
        return Err(fail(format!("trailing input at token {}", p.pos)));
    }
    Ok(expr)
}
