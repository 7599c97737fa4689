//! Expression mini-language for `f`, `w` and `τ`.
//!
//! Grammar (the variable may be written `x`, `s` or `t`):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'pi' | 'e' | var | func '(' expr ')' | '(' expr ')'
//! func  := exp | log | ln | sin | cos | sqrt
//! ```

use std::fmt;
use std::sync::Arc;

use hpf_core::realfunc::{FunctionHandle, Phase, RealFn};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message} at offset {offset} in `{input}`")]
pub struct ParseError {
    pub input: String,
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

use Expr::*;

fn num(v: f64) -> Expr {
    Num(v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x + y),
        (Num(z), e) | (e, Num(z)) if z == 0.0 => e,
        (a, b) => Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x - y),
        (e, Num(z)) if z == 0.0 => e,
        (Num(z), e) if z == 0.0 => neg(e),
        (a, b) => Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(x), Num(y)) => Num(x * y),
        (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
        (Num(o), e) | (e, Num(o)) if o == 1.0 => e,
        (a, b) => Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Num(z), _) if z == 0.0 => Num(0.0),
        (e, Num(o)) if o == 1.0 => e,
        (a, b) => Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (_, Num(z)) if z == 0.0 => Num(1.0),
        (e, Num(o)) if o == 1.0 => e,
        (Num(x), Num(y)) => Num(x.powf(y)),
        (a, b) => Pow(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Num(x) => Num(-x),
        Neg(e) => *e,
        e => Neg(Box::new(e)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    match a {
        Num(x) => Num(f.apply(x)),
        e => Call(f, Box::new(e)),
    }
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Num(v) => *v,
            Var => x,
            Neg(a) => -a.eval(x),
            Add(a, b) => a.eval(x) + b.eval(x),
            Sub(a, b) => a.eval(x) - b.eval(x),
            Mul(a, b) => a.eval(x) * b.eval(x),
            Div(a, b) => a.eval(x) / b.eval(x),
            Pow(a, b) => {
                let base = a.eval(x);
                match **b {
                    Num(e) if e.fract() == 0.0 && e.abs() < 1024.0 => base.powi(e as i32),
                    _ => base.powf(b.eval(x)),
                }
            }
            Call(f, a) => f.apply(a.eval(x)),
        }
    }

    fn is_constant(&self) -> bool {
        match self {
            Num(_) => true,
            Var => false,
            Neg(a) | Call(_, a) => a.is_constant(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => a.is_constant() && b.is_constant(),
        }
    }

    pub fn derivative(&self) -> Expr {
        match self {
            Num(_) => num(0.0),
            Var => num(1.0),
            Neg(a) => neg(a.derivative()),
            Add(a, b) => add(a.derivative(), b.derivative()),
            Sub(a, b) => sub(a.derivative(), b.derivative()),
            Mul(a, b) => add(mul(a.derivative(), (**b).clone()), mul((**a).clone(), b.derivative())),
            Div(a, b) => {
                let (a, b) = ((**a).clone(), (**b).clone());
                if b.is_constant() {
                    return div(a.derivative(), b);
                }
                div(sub(mul(a.derivative(), b.clone()), mul(a, b.derivative())), pow(b, num(2.0)))
            }
            Pow(a, b) => {
                let (a, b) = ((**a).clone(), (**b).clone());
                if let Num(e) = b {
                    mul(mul(num(e), pow(a.clone(), num(e - 1.0))), a.derivative())
                } else {
                    let ln_a = call(Func::Ln, a.clone());
                    let inner = add(mul(b.derivative(), ln_a), div(mul(b.clone(), a.derivative()), a.clone()));
                    mul(pow(a, b), inner)
                }
            }
            Call(f, a) => {
                let inner = (**a).clone();
                let da = inner.derivative();
                let outer = match f {
                    Func::Exp => call(Func::Exp, inner),
                    Func::Ln => div(num(1.0), inner),
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Sqrt => div(num(0.5), call(Func::Sqrt, inner)),
                };
                mul(outer, da)
            }
        }
    }

    /// The constant `c` when every `sin`/`cos` argument that depends on the
    /// variable is `c/x`.
    pub fn reciprocal_phase(&self) -> Option<f64> {
        let mut found = Vec::new();
        let mut other = false;
        self.collect_phases(&mut found, &mut other);
        if other || found.is_empty() {
            return None;
        }
        let c = found[0];
        found.iter().all(|&v| v == c).then_some(c)
    }

    fn collect_phases(&self, found: &mut Vec<f64>, other: &mut bool) {
        match self {
            Num(_) | Var => {}
            Neg(a) => a.collect_phases(found, other),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.collect_phases(found, other);
                b.collect_phases(found, other);
            }
            Call(Func::Sin | Func::Cos, a) if !a.is_constant() => match reciprocal_constant(a) {
                Some(c) => found.push(c),
                None => *other = true,
            },
            Call(_, a) => a.collect_phases(found, other),
        }
    }
}

fn reciprocal_constant(e: &Expr) -> Option<f64> {
    match e {
        Div(a, b) if a.is_constant() && **b == Var => Some(a.eval(0.0)),
        Pow(a, b) if **a == Var && **b == Num(-1.0) => Some(1.0),
        Mul(a, b) if a.is_constant() => reciprocal_constant(b).map(|c| c * a.eval(0.0)),
        Neg(a) => reciprocal_constant(a).map(|c| -c),
        _ => None,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Num(v) => write!(f, "{v}"),
            Var => write!(f, "x"),
            Neg(a) => write!(f, "(-{a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, b) => write!(f, "({a}^{b})"),
            Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    input: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: impl Into<String>) -> ParseError {
        ParseError { input: self.input.to_string(), offset: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = add(lhs, self.term()?);
            } else if self.eat(b'-') {
                lhs = sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = mul(lhs, self.unary()?);
            } else if self.eat(b'/') {
                lhs = div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            return Ok(neg(self.unary()?));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            return Ok(pow(base, self.unary()?));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let word = &self.input[start..self.pos];
                let func = match word {
                    "x" | "s" | "t" => return Ok(Var),
                    "pi" => return Ok(Num(std::f64::consts::PI)),
                    "e" => return Ok(Num(std::f64::consts::E)),
                    "exp" => Func::Exp,
                    "ln" | "log" => Func::Ln,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    "sqrt" => Func::Sqrt,
                    _ => {
                        self.pos = start;
                        return Err(self.error(format!("unknown identifier `{word}`")));
                    }
                };
                if !self.eat(b'(') {
                    return Err(self.error(format!("expected `(` after `{word}`")));
                }
                let arg = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(call(func, arg))
            }
            Some(c) => Err(self.error(format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < b.len() && (b[self.pos] == b'+' || b[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < b.len() && b[self.pos].is_ascii_digit() {
                while self.pos < b.len() && b[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        self.input[start..self.pos].parse::<f64>().map(Num).map_err(|_| {
            self.pos = start;
            self.error("malformed number")
        })
    }
}

pub fn parse(input: &str) -> Result<Expr, ParseError> {
    let mut p = Parser { input, bytes: input.as_bytes(), pos: 0 };
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.error("trailing input"));
    }
    Ok(e)
}

/// Orders of exact symbolic derivatives attached to parsed handles.
pub const SYMBOLIC_ORDERS: usize = 6;

/// Parse and wrap as a handle with symbolic derivatives and, for
/// `sin(c/x)`/`cos(c/x)` patterns, the reciprocal oscillation phase.
pub fn parse_handle(input: &str) -> Result<FunctionHandle, ParseError> {
    let e = parse(input)?;
    let mut derivs: Vec<RealFn> = Vec::with_capacity(SYMBOLIC_ORDERS);
    let mut d = e.clone();
    for _ in 0..SYMBOLIC_ORDERS {
        d = d.derivative();
        let de = d.clone();
        derivs.push(Arc::new(move |x| de.eval(x)));
    }
    let phase = e.reciprocal_phase();
    let ev = e;
    let mut h = FunctionHandle::new(input.trim(), move |x| ev.eval(x)).with_derivatives(derivs);
    if let Some(c) = phase {
        h = h.with_phase(Phase::reciprocal(c.abs()));
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hpf_core::realfunc::eval_deriv;

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse("1 + 2 * 3").unwrap().eval(0.0), 7.0);
        assert_eq!(parse("2^3^2").unwrap().eval(0.0), 512.0);
        assert_eq!(parse("-x^2").unwrap().eval(3.0), -9.0);
        assert_eq!(parse("(1 + x) / 2").unwrap().eval(3.0), 2.0);
        assert_eq!(parse("1.5e-1 * 2").unwrap().eval(0.0), 0.3);
        assert!((parse("exp(ln(s))").unwrap().eval(0.7) - 0.7).abs() < 1e-15);
        assert!((parse("sin(pi/2)").unwrap().eval(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_offsets() {
        let e = parse("1 + foo(x)").unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(parse("(x").is_err());
        assert!(parse("x x").is_err());
        assert!(parse("").is_err());
        assert!(parse("sin x").is_err());
    }

    #[test]
    fn symbolic_derivatives_match_closed_forms() {
        let h = parse_handle("s^3").unwrap();
        let d1 = eval_deriv(&h, 1, 0.5).unwrap();
        assert!(d1.exact && (d1.value - 0.75).abs() < 1e-15);
        assert!((eval_deriv(&h, 3, 0.5).unwrap().value - 6.0).abs() < 1e-15);
        assert_eq!(eval_deriv(&h, 4, 0.5).unwrap().value, 0.0);
        let g = parse_handle("sin(1/x)/x").unwrap();
        let x: f64 = 0.3;
        let exact = -(1.0 / x).cos() / x.powi(3) - (1.0 / x).sin() / x.powi(2);
        assert!((eval_deriv(&g, 1, x).unwrap().value - exact).abs() < 1e-12);
        let q = parse_handle("x^x").unwrap();
        let exact = x.powf(x) * (x.ln() + 1.0);
        assert!((eval_deriv(&q, 1, x).unwrap().value - exact).abs() < 1e-14);
    }

    #[test]
    fn phase_detection() {
        assert_eq!(parse("sin(1/x)/x").unwrap().reciprocal_phase(), Some(1.0));
        assert_eq!(parse("cos(2/x) + sin(2/x)").unwrap().reciprocal_phase(), Some(2.0));
        assert_eq!(parse("sin(x)").unwrap().reciprocal_phase(), None);
        assert_eq!(parse("sin(1/x) * cos(3/x)").unwrap().reciprocal_phase(), None);
        assert_eq!(parse("x^2").unwrap().reciprocal_phase(), None);
        assert!(parse_handle("sin(1/x)/x").unwrap().phase().is_some());
    }
}
