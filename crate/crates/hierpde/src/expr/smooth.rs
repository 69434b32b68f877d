//! Closed-form expression trees for numeric (floating point) evaluation.

use super::poly::{format_rat, var_name, Rat};
use num_traits::ToPrimitive;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("logarithm of a non-positive value")]
    LogNonPositive,
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite intermediate value")]
    NonFinite,
}

/// Abstract syntax tree over variables, rational literals, field operations,
/// integer powers and a fixed set of smooth unary functions.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothExpr {
    Var(usize),
    Const(Rat),
    Add(Box<SmoothExpr>, Box<SmoothExpr>),
    Sub(Box<SmoothExpr>, Box<SmoothExpr>),
    Mul(Box<SmoothExpr>, Box<SmoothExpr>),
    Div(Box<SmoothExpr>, Box<SmoothExpr>),
    Pow(Box<SmoothExpr>, u32),
    Sin(Box<SmoothExpr>),
    Cos(Box<SmoothExpr>),
    Exp(Box<SmoothExpr>),
    Tanh(Box<SmoothExpr>),
    Log(Box<SmoothExpr>),
}

impl SmoothExpr {
    /// Floating-point evaluation. `point` must cover every variable index.
    pub fn eval(&self, point: &[f64]) -> Result<f64, DomainError> {
        let v = match self {
            SmoothExpr::Var(i) => point[*i],
            SmoothExpr::Const(c) => c.to_f64().ok_or(DomainError::NonFinite)?,
            SmoothExpr::Add(a, b) => a.eval(point)? + b.eval(point)?,
            SmoothExpr::Sub(a, b) => a.eval(point)? - b.eval(point)?,
            SmoothExpr::Mul(a, b) => a.eval(point)? * b.eval(point)?,
            SmoothExpr::Div(a, b) => {
                let d = b.eval(point)?;
                if d == 0.0 {
                    return Err(DomainError::DivisionByZero);
                }
                a.eval(point)? / d
            }
            SmoothExpr::Pow(a, e) => a.eval(point)?.powi(*e as i32),
            SmoothExpr::Sin(a) => a.eval(point)?.sin(),
            SmoothExpr::Cos(a) => a.eval(point)?.cos(),
            SmoothExpr::Exp(a) => a.eval(point)?.exp(),
            SmoothExpr::Tanh(a) => a.eval(point)?.tanh(),
            SmoothExpr::Log(a) => {
                let x = a.eval(point)?;
                if x <= 0.0 {
                    return Err(DomainError::LogNonPositive);
                }
                x.ln()
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DomainError::NonFinite)
        }
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            SmoothExpr::Var(i) => Some(*i),
            SmoothExpr::Const(_) => None,
            SmoothExpr::Add(a, b)
            | SmoothExpr::Sub(a, b)
            | SmoothExpr::Mul(a, b)
            | SmoothExpr::Div(a, b) => a.max_var().into_iter().chain(b.max_var()).max(),
            SmoothExpr::Pow(a, _)
            | SmoothExpr::Sin(a)
            | SmoothExpr::Cos(a)
            | SmoothExpr::Exp(a)
            | SmoothExpr::Tanh(a)
            | SmoothExpr::Log(a) => a.max_var(),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, nvars: usize, prec: u8) -> fmt::Result {
        let p = match self {
            SmoothExpr::Add(..) | SmoothExpr::Sub(..) => 1,
            SmoothExpr::Mul(..) | SmoothExpr::Div(..) => 2,
            _ => 3,
        };
        if p < prec {
            write!(f, "(")?;
        }
        match self {
            SmoothExpr::Var(i) => write!(f, "{}", var_name(nvars, *i))?,
            SmoothExpr::Const(c) => write!(f, "{}", format_rat(c))?,
            SmoothExpr::Add(a, b) => {
                a.fmt_prec(f, nvars, 1)?;
                write!(f, " + ")?;
                b.fmt_prec(f, nvars, 2)?;
            }
            SmoothExpr::Sub(a, b) => {
                a.fmt_prec(f, nvars, 1)?;
                write!(f, " - ")?;
                b.fmt_prec(f, nvars, 2)?;
            }
            SmoothExpr::Mul(a, b) => {
                a.fmt_prec(f, nvars, 2)?;
                write!(f, "*")?;
                b.fmt_prec(f, nvars, 3)?;
            }
            SmoothExpr::Div(a, b) => {
                a.fmt_prec(f, nvars, 2)?;
                write!(f, "/")?;
                b.fmt_prec(f, nvars, 3)?;
            }
            SmoothExpr::Pow(a, e) => {
                a.fmt_prec(f, nvars, 3)?;
                write!(f, "^{e}")?;
            }
            SmoothExpr::Sin(a) => {
                write!(f, "sin(")?;
                a.fmt_prec(f, nvars, 0)?;
                write!(f, ")")?;
            }
            SmoothExpr::Cos(a) => {
                write!(f, "cos(")?;
                a.fmt_prec(f, nvars, 0)?;
                write!(f, ")")?;
            }
            SmoothExpr::Exp(a) => {
                write!(f, "exp(")?;
                a.fmt_prec(f, nvars, 0)?;
                write!(f, ")")?;
            }
            SmoothExpr::Tanh(a) => {
                write!(f, "tanh(")?;
                a.fmt_prec(f, nvars, 0)?;
                write!(f, ")")?;
            }
            SmoothExpr::Log(a) => {
                write!(f, "log(")?;
                a.fmt_prec(f, nvars, 0)?;
                write!(f, ")")?;
            }
        }
        if p < prec {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for SmoothExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nvars = self.max_var().map_or(1, |m| m + 1);
        self.fmt_prec(f, nvars.max(1), 0)
    }
}
