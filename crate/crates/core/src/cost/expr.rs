//! Expressions in one variable `w`.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := base ('^' integer)?
//! base   := number | 'w' | '(' expr ')' | '-' base
//! ```

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

use Expr::*;

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

impl Expr {
    pub fn eval(&self, w: f64) -> f64 {
        match self {
            Const(c) => *c,
            Var => w,
            Neg(a) => -a.eval(w),
            Add(a, c) => a.eval(w) + c.eval(w),
            Sub(a, c) => a.eval(w) - c.eval(w),
            Mul(a, c) => a.eval(w) * c.eval(w),
            Div(a, c) => a.eval(w) / c.eval(w),
            Pow(a, k) => a.eval(w).powi(*k),
        }
    }

    /// Symbolic derivative with respect to `w`, simplified.
    pub fn derivative(&self) -> Expr {
        self.raw_derivative().simplify()
    }

    fn raw_derivative(&self) -> Expr {
        match self {
            Const(_) => Const(0.0),
            Var => Const(1.0),
            Neg(a) => Neg(b(a.raw_derivative())),
            Add(a, c) => Add(b(a.raw_derivative()), b(c.raw_derivative())),
            Sub(a, c) => Sub(b(a.raw_derivative()), b(c.raw_derivative())),
            Mul(a, c) => Add(
                b(Mul(b(a.raw_derivative()), c.clone())),
                b(Mul(a.clone(), b(c.raw_derivative()))),
            ),
            // (a/c)' = (a'c - ac') / c^2
            Div(a, c) => Div(
                b(Sub(
                    b(Mul(b(a.raw_derivative()), c.clone())),
                    b(Mul(a.clone(), b(c.raw_derivative()))),
                )),
                b(Pow(c.clone(), 2)),
            ),
            Pow(_, 0) => Const(0.0),
            Pow(a, k) => Mul(
                b(Mul(b(Const(*k as f64)), b(Pow(a.clone(), k - 1)))),
                b(a.raw_derivative()),
            ),
        }
    }

    pub fn contains_division(&self) -> bool {
        match self {
            Const(_) | Var => false,
            Div(..) => true,
            Neg(a) | Pow(a, _) => a.contains_division(),
            Add(a, c) | Sub(a, c) | Mul(a, c) => a.contains_division() || c.contains_division(),
        }
    }

    /// Algebraic clean-up: constant folding, identities, and collection of
    /// numeric coefficients in products.
    pub fn simplify(&self) -> Expr {
        match self {
            Const(_) | Var => self.clone(),
            Neg(a) => match a.simplify() {
                Const(c) => Const(-c),
                Neg(inner) => *inner,
                other => negate(other),
            },
            Add(a, c) => {
                let (a, c) = (a.simplify(), c.simplify());
                match (&a, &c) {
                    (Const(x), Const(y)) => Const(x + y),
                    (Const(z), _) if *z == 0.0 => c,
                    (_, Const(z)) if *z == 0.0 => a,
                    (_, Neg(inner)) => Sub(b(a), inner.clone()).simplify(),
                    _ => Add(b(a), b(c)),
                }
            }
            Sub(a, c) => {
                let (a, c) = (a.simplify(), c.simplify());
                match (&a, &c) {
                    (Const(x), Const(y)) => Const(x - y),
                    (_, Const(z)) if *z == 0.0 => a,
                    (Const(z), _) if *z == 0.0 => negate(c),
                    (_, Neg(inner)) => Add(b(a), inner.clone()),
                    _ if a == c => Const(0.0),
                    _ => Sub(b(a), b(c)),
                }
            }
            Mul(..) => simplify_product(self),
            Div(a, c) => {
                let (a, c) = (a.simplify(), c.simplify());
                match (&a, &c) {
                    (Const(x), Const(y)) if *y != 0.0 => Const(x / y),
                    (Const(z), _) if *z == 0.0 => Const(0.0),
                    (_, Const(o)) if *o == 1.0 => a,
                    _ => Div(b(a), b(c)),
                }
            }
            Pow(a, k) => {
                let a = a.simplify();
                match (&a, *k) {
                    (_, 0) => Const(1.0),
                    (_, 1) => a,
                    (Const(x), k) => Const(x.powi(k)),
                    (Pow(inner, j), k) => Pow(inner.clone(), j * k),
                    _ => Pow(b(a), *k),
                }
            }
        }
    }
}

fn negate(e: Expr) -> Expr {
    match e {
        Const(c) => Const(-c),
        Neg(inner) => *inner,
        Mul(..) => simplify_product(&Mul(b(Const(-1.0)), b(e))),
        other => Neg(b(other)),
    }
}

/// Flattens a product tree, multiplies the numeric coefficients together and
/// rebuilds `coef * f1 * f2 * …`.
fn simplify_product(e: &Expr) -> Expr {
    fn collect(e: Expr, coef: &mut f64, factors: &mut Vec<Expr>) {
        match e {
            Mul(a, c) => {
                collect(a.simplify(), coef, factors);
                collect(c.simplify(), coef, factors);
            }
            Const(x) => *coef *= x,
            Neg(inner) => {
                *coef = -*coef;
                collect(*inner, coef, factors);
            }
            other => factors.push(other),
        }
    }
    let mut coef = 1.0;
    let mut factors = Vec::new();
    collect(e.clone(), &mut coef, &mut factors);
    if coef == 0.0 {
        return Const(0.0);
    }
    let mut iter = factors.into_iter();
    let Some(first) = iter.next() else {
        return Const(coef);
    };
    let body = iter.fold(first, |acc, f| Mul(b(acc), b(f)));
    if coef == 1.0 {
        body
    } else if coef == -1.0 {
        Neg(b(body))
    } else {
        Mul(b(Const(coef)), b(body))
    }
}

// Binding strength used by the printer.
fn prec(e: &Expr) -> u8 {
    match e {
        Add(..) | Sub(..) => 1,
        Mul(..) | Div(..) => 2,
        Neg(_) => 3,
        Pow(..) => 4,
        Const(c) if *c < 0.0 => 3,
        Const(_) | Var => 5,
    }
}

fn fmt_num(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if prec(e) < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Const(c) => write!(f, "{}", fmt_num(*c)),
            Var => write!(f, "w"),
            Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 5)
            }
            Add(a, c) => {
                wrap(f, a, 1)?;
                write!(f, "+")?;
                wrap(f, c, 2)
            }
            Sub(a, c) => {
                wrap(f, a, 1)?;
                write!(f, "-")?;
                wrap(f, c, 2)
            }
            Mul(a, c) => {
                wrap(f, a, 2)?;
                write!(f, "*")?;
                wrap(f, c, 3)
            }
            Div(a, c) => {
                wrap(f, a, 2)?;
                write!(f, "/")?;
                wrap(f, c, 4)
            }
            Pow(a, k) => {
                wrap(f, a, 5)?;
                write!(f, "^{k}")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

pub fn parse(text: &str) -> Result<Expr> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.unexpected());
    }
    Ok(e)
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn unexpected(&self) -> Error {
        match self.src.get(self.pos) {
            None => Error::Parse {
                pos: self.pos,
                msg: "unexpected end of input".into(),
            },
            Some(c) if c.is_ascii_alphabetic() => {
                let end = self.src[self.pos..]
                    .iter()
                    .position(|c| !c.is_ascii_alphanumeric() && *c != b'_')
                    .map_or(self.src.len(), |n| self.pos + n);
                Error::UnsupportedOperator {
                    pos: self.pos,
                    op: String::from_utf8_lossy(&self.src[self.pos..end]).into_owned(),
                }
            }
            Some(c) if b"%!&|<>=,;[]{}".contains(c) => Error::UnsupportedOperator {
                pos: self.pos,
                op: (*c as char).to_string(),
            },
            Some(c) => Error::Parse {
                pos: self.pos,
                msg: format!("unexpected character `{}`", *c as char),
            },
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == b'+' {
                Add(b(lhs), b(rhs))
            } else {
                Sub(b(lhs), b(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            if self.peek() == Some(b'*') {
                return Err(Error::UnsupportedOperator {
                    pos: self.pos - 1,
                    op: "**".into(),
                });
            }
            let rhs = self.factor()?;
            lhs = if op == b'*' {
                Mul(b(lhs), b(rhs))
            } else {
                Div(b(lhs), b(rhs))
            };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.integer()?;
            return Ok(Pow(b(base), k));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32> {
        self.skip_ws();
        let start = self.pos;
        if self.src.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == digits {
            if self.src.get(self.pos).is_some_and(|c| *c == b'.' || *c == b'(' || *c == b'w') {
                return Err(Error::Parse {
                    pos: self.pos,
                    msg: "exponent must be an integer literal".into(),
                });
            }
            return Err(Error::Parse {
                pos: self.pos,
                msg: "expected integer exponent".into(),
            });
        }
        if self.src.get(self.pos) == Some(&b'.') {
            return Err(Error::Parse {
                pos: self.pos,
                msg: "exponent must be an integer literal".into(),
            });
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse().map_err(|_| Error::Parse {
            pos: start,
            msg: format!("exponent `{text}` out of range"),
        })
    }

    fn base(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Neg(b(self.base()?)))
            }
            Some(b'(') => {
                let open = self.pos;
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(Error::Parse {
                        pos: self.pos,
                        msg: format!("unclosed parenthesis opened at {open}"),
                    });
                }
                self.pos += 1;
                Ok(e)
            }
            Some(b'w') if !self.ident_continues(self.pos + 1) => {
                self.pos += 1;
                Ok(Var)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            _ => Err(self.unexpected()),
        }
    }

    fn ident_continues(&self, at: usize) -> bool {
        self.src
            .get(at)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mut look = self.pos + 1;
            if look < s.len() && (s[look] == b'+' || s[look] == b'-') {
                look += 1;
            }
            if look < s.len() && s[look].is_ascii_digit() {
                self.pos = look;
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap();
        text.parse::<f64>().map(Const).map_err(|_| Error::Parse {
            pos: start,
            msg: format!("malformed number `{text}`"),
        })
    }
}
