//! Recursive-descent parser for the closed-form expression language.
//!
//! Grammar:
//! ```text
//! expr   := ['-'] term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := base ('^' uint)?
//! base   := var | number | '(' expr ')' | func '(' expr ')'
//! func   := 'sin' | 'cos' | 'exp' | 'tanh' | 'log'
//! var    := 'x' uint | 'x' | 'y' | 'z' | 'w' | 't'
//! ```
//! Exact mode rejects the unary functions and any division whose divisor is
//! not a non-zero constant.

use super::poly::{Monomial, Poly, Rat};
use super::smooth::SmoothExpr;
use num_bigint::BigInt;
use num_traits::{One, Zero};
use thiserror::Error;

pub const MAX_EXPONENT: u32 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("non-polynomial construct in exact mode: {0}")]
    NonPolynomial(String),
    #[error("division by zero constant")]
    DivisionByZero,
    #[error("variable {0} exceeds the declared variable count")]
    VarOutOfRange(String),
    #[error("exponent {0} exceeds the supported degree bound")]
    DegreeOverflow(u32),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rat),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        self.skip_ws();
        let at = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::Eof, at));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let (n, d) = parse_number(text).ok_or_else(|| ExprError::Syntax {
                    offset: start,
                    msg: format!("invalid number `{text}`"),
                })?;
                Tok::Num(Rat::new(n, d))
            }
            b'a'..=b'z' | b'A'..=b'Z' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Tok::Ident(std::str::from_utf8(&self.src[start..self.pos]).unwrap().to_string())
            }
            _ => {
                return Err(ExprError::Syntax {
                    offset: at,
                    msg: format!("unexpected character `{}`", c as char),
                })
            }
        };
        Ok((tok, at))
    }
}

/// Decimal literals become exact rationals (numerator, power-of-ten denominator).
fn parse_number(text: &str) -> Option<(BigInt, BigInt)> {
    if let Some(dot) = text.find('.') {
        let int_part = &text[..dot];
        let frac_part = &text[dot + 1..];
        if frac_part.contains('.') || (int_part.is_empty() && frac_part.is_empty()) {
            return None;
        }
        let digits: String = format!("{int_part}{frac_part}");
        let n: BigInt = digits.parse().ok()?;
        let d = BigInt::from(10u32).pow(frac_part.len() as u32);
        Some((n, d))
    } else {
        let n: BigInt = text.parse().ok()?;
        Some((n, BigInt::one()))
    }
}

pub struct Parser<'a> {
    lexer: Lexer<'a>,
    cur: Tok,
    cur_at: usize,
}

impl<'a> Parser<'a> {
    pub fn new(src: &'a str) -> Result<Self, ExprError> {
        let mut lexer = Lexer::new(src);
        let (cur, cur_at) = lexer.next()?;
        Ok(Parser { lexer, cur, cur_at })
    }

    fn bump(&mut self) -> Result<(), ExprError> {
        let (t, a) = self.lexer.next()?;
        self.cur = t;
        self.cur_at = a;
        Ok(())
    }

    fn err<T>(&self, msg: &str) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            offset: self.cur_at,
            msg: msg.to_string(),
        })
    }

    pub fn parse_full(&mut self) -> Result<SmoothExpr, ExprError> {
        let e = self.parse_expr()?;
        if self.cur != Tok::Eof {
            return self.err("unexpected trailing input");
        }
        Ok(e)
    }

    fn parse_expr(&mut self) -> Result<SmoothExpr, ExprError> {
        let mut acc = if self.cur == Tok::Minus {
            self.bump()?;
            let t = self.parse_term()?;
            SmoothExpr::Sub(Box::new(SmoothExpr::Const(Rat::zero())), Box::new(t))
        } else {
            self.parse_term()?
        };
        loop {
            match self.cur {
                Tok::Plus => {
                    self.bump()?;
                    let t = self.parse_term()?;
                    acc = SmoothExpr::Add(Box::new(acc), Box::new(t));
                }
                Tok::Minus => {
                    self.bump()?;
                    let t = self.parse_term()?;
                    acc = SmoothExpr::Sub(Box::new(acc), Box::new(t));
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn parse_term(&mut self) -> Result<SmoothExpr, ExprError> {
        let mut acc = self.parse_factor()?;
        loop {
            match self.cur {
                Tok::Star => {
                    self.bump()?;
                    let t = self.parse_factor()?;
                    acc = SmoothExpr::Mul(Box::new(acc), Box::new(t));
                }
                Tok::Slash => {
                    self.bump()?;
                    let t = self.parse_factor()?;
                    acc = SmoothExpr::Div(Box::new(acc), Box::new(t));
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn parse_factor(&mut self) -> Result<SmoothExpr, ExprError> {
        let base = self.parse_base()?;
        if self.cur == Tok::Caret {
            self.bump()?;
            match std::mem::replace(&mut self.cur, Tok::Eof) {
                Tok::Num(n) if n.is_integer() && !n.numer().sign().eq(&num_bigint::Sign::Minus) => {
                    let e: u32 = n
                        .numer()
                        .try_into()
                        .map_err(|_| ExprError::DegreeOverflow(u32::MAX))?;
                    if e > MAX_EXPONENT {
                        return Err(ExprError::DegreeOverflow(e));
                    }
                    self.bump()?;
                    Ok(SmoothExpr::Pow(Box::new(base), e))
                }
                other => {
                    self.cur = other;
                    self.err("expected an unsigned integer exponent")
                }
            }
        } else {
            Ok(base)
        }
    }

    fn parse_base(&mut self) -> Result<SmoothExpr, ExprError> {
        match std::mem::replace(&mut self.cur, Tok::Eof) {
            Tok::Num(n) => {
                self.bump()?;
                Ok(SmoothExpr::Const(n))
            }
            Tok::Ident(name) => {
                match name.as_str() {
                    "sin" | "cos" | "exp" | "tanh" | "log" => {
                        self.bump()?;
                        if self.cur != Tok::LParen {
                            return self.err("expected `(` after function name");
                        }
                        self.bump()?;
                        let arg = self.parse_expr()?;
                        if self.cur != Tok::RParen {
                            return self.err("expected `)`");
                        }
                        self.bump()?;
                        let b = Box::new(arg);
                        Ok(match name.as_str() {
                            "sin" => SmoothExpr::Sin(b),
                            "cos" => SmoothExpr::Cos(b),
                            "exp" => SmoothExpr::Exp(b),
                            "tanh" => SmoothExpr::Tanh(b),
                            _ => SmoothExpr::Log(b),
                        })
                    }
                    _ => {
                        let idx = parse_var_name(&name).ok_or(ExprError::Syntax {
                            offset: self.cur_at,
                            msg: format!("unknown identifier `{name}`"),
                        })?;
                        self.bump()?;
                        Ok(SmoothExpr::Var(idx))
                    }
                }
            }
            Tok::LParen => {
                self.bump()?;
                let e = self.parse_expr()?;
                if self.cur != Tok::RParen {
                    return self.err("expected `)`");
                }
                self.bump()?;
                Ok(e)
            }
            other => {
                self.cur = other;
                self.err("expected a variable, number, function call or `(`")
            }
        }
    }
}

/// `x1..xn` plus the aliases `x y z w` for the first four variables and `t`
/// for the second (two-variable space-time families are written `(x, t)`).
pub fn parse_var_name(name: &str) -> Option<usize> {
    match name {
        "x" => Some(0),
        "y" | "t" => Some(1),
        "z" => Some(2),
        "w" => Some(3),
        _ => {
            let rest = name.strip_prefix('x')?;
            let n: usize = rest.parse().ok()?;
            if n == 0 {
                None
            } else {
                Some(n - 1)
            }
        }
    }
}

/// Convert an AST to an expanded polynomial; errors on any construct outside
/// the polynomial fragment.
pub fn to_poly(e: &SmoothExpr, nvars: usize) -> Result<Poly, ExprError> {
    match e {
        SmoothExpr::Var(i) => {
            if *i >= nvars {
                return Err(ExprError::VarOutOfRange(var_display(*i)));
            }
            Ok(Poly::var(nvars, *i))
        }
        SmoothExpr::Const(c) => Ok(Poly::constant_rat(nvars, c.clone())),
        SmoothExpr::Add(a, b) => Ok(to_poly(a, nvars)?.add(&to_poly(b, nvars)?)),
        SmoothExpr::Sub(a, b) => Ok(to_poly(a, nvars)?.sub(&to_poly(b, nvars)?)),
        SmoothExpr::Mul(a, b) => Ok(to_poly(a, nvars)?.mul(&to_poly(b, nvars)?)),
        SmoothExpr::Div(a, b) => {
            let pb = to_poly(b, nvars)?;
            if pb.is_zero() {
                return Err(ExprError::DivisionByZero);
            }
            if pb.total_degree() > 0 {
                return Err(ExprError::NonPolynomial(
                    "division by a non-constant".to_string(),
                ));
            }
            let c = pb.coef(&Monomial::unit(nvars)).unwrap().clone();
            Ok(to_poly(a, nvars)?.scale(&c.recip()))
        }
        SmoothExpr::Pow(a, e) => {
            if *e > MAX_EXPONENT {
                return Err(ExprError::DegreeOverflow(*e));
            }
            let pa = to_poly(a, nvars)?;
            let mut acc = Poly::constant_rat(nvars, Rat::one());
            for _ in 0..*e {
                acc = acc.mul(&pa);
            }
            Ok(acc)
        }
        SmoothExpr::Sin(_)
        | SmoothExpr::Cos(_)
        | SmoothExpr::Exp(_)
        | SmoothExpr::Tanh(_)
        | SmoothExpr::Log(_) => Err(ExprError::NonPolynomial(func_name(e).to_string())),
    }
}

fn func_name(e: &SmoothExpr) -> &'static str {
    match e {
        SmoothExpr::Sin(_) => "sin",
        SmoothExpr::Cos(_) => "cos",
        SmoothExpr::Exp(_) => "exp",
        SmoothExpr::Tanh(_) => "tanh",
        SmoothExpr::Log(_) => "log",
        _ => "?",
    }
}

fn var_display(i: usize) -> String {
    format!("x{}", i + 1)
}
