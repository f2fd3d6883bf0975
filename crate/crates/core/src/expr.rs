//! A small arithmetic expression language.
//!
//! Grammar (usual precedence, `^` right-associative and binding tighter than
//! unary minus):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | ln | sqrt
//! ```
//!
//! Identifiers are resolved against a caller-supplied variable list, e.g.
//! `I1..Im` for action functions or `t, q1.., p1..` for phase-space fields.
//! Derivatives are symbolic; evaluation is generic over [`Real`], so the same
//! tree evaluates on `f64` and on dual numbers.

use std::fmt;

use thiserror::Error;

use crate::dual::{Dual, Real};
use crate::field::{Arity, ScalarField};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("expression error at column {column}: {message}")]
pub struct ExprError {
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

// Smart constructors with light constant folding, so derivatives stay small.
fn num(v: f64) -> Expr {
    Expr::Num(v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => num(x + y),
        (Expr::Num(z), _) if *z == 0.0 => b,
        (_, Expr::Num(z)) if *z == 0.0 => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => num(x - y),
        (_, Expr::Num(z)) if *z == 0.0 => a,
        (Expr::Num(z), _) if *z == 0.0 => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => num(x * y),
        (Expr::Num(z), _) | (_, Expr::Num(z)) if *z == 0.0 => num(0.0),
        (Expr::Num(o), _) if *o == 1.0 => b,
        (_, Expr::Num(o)) if *o == 1.0 => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(z), _) if *z == 0.0 => num(0.0),
        (_, Expr::Num(o)) if *o == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(x) => num(-x),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (_, Expr::Num(z)) if *z == 0.0 => num(1.0),
        (_, Expr::Num(o)) if *o == 1.0 => a,
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

impl Expr {
    /// Parses `src`, resolving identifiers against `vars`.
    pub fn parse(src: &str, vars: &[&str]) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars,
            len: src.len(),
        };
        let e = p.expr()?;
        if let Some(tok) = p.tokens.get(p.pos) {
            return Err(ExprError {
                column: tok.column,
                message: format!("unexpected {}", tok.kind),
            });
        }
        Ok(e)
    }

    pub fn diff(&self, var: usize) -> Expr {
        match self {
            Expr::Num(_) => num(0.0),
            Expr::Var(i) => num(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(var)),
            Expr::Add(a, b) => add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => div(
                sub(
                    mul(a.diff(var), (**b).clone()),
                    mul((**a).clone(), b.diff(var)),
                ),
                pow((**b).clone(), num(2.0)),
            ),
            Expr::Pow(a, b) => {
                let da = a.diff(var);
                let db = b.diff(var);
                if let Expr::Num(c) = **b {
                    // d(u^c) = c u^(c-1) u'
                    mul(mul(num(c), pow((**a).clone(), num(c - 1.0))), da)
                } else {
                    // d(u^v) = u^v (v' ln u + v u' / u)
                    mul(
                        self.clone(),
                        add(
                            mul(db, call(Func::Ln, (**a).clone())),
                            div(mul((**b).clone(), da), (**a).clone()),
                        ),
                    )
                }
            }
            Expr::Call(f, a) => {
                let da = a.diff(var);
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Exp => call(Func::Exp, inner),
                    Func::Ln => div(num(1.0), inner),
                    Func::Sqrt => div(num(0.5), call(Func::Sqrt, inner)),
                };
                mul(outer, da)
            }
        }
    }

    /// Evaluates on any [`Real`]; `zero` supplies the constant type.
    pub fn eval_with<R: Real>(&self, vars: &[R], zero: &R) -> R {
        match self {
            Expr::Num(c) => zero.constant_like(*c),
            Expr::Var(i) => vars[*i].clone(),
            Expr::Neg(a) => -a.eval_with(vars, zero),
            Expr::Add(a, b) => a.eval_with(vars, zero) + b.eval_with(vars, zero),
            Expr::Sub(a, b) => a.eval_with(vars, zero) - b.eval_with(vars, zero),
            Expr::Mul(a, b) => a.eval_with(vars, zero) * b.eval_with(vars, zero),
            Expr::Div(a, b) => a.eval_with(vars, zero) / b.eval_with(vars, zero),
            Expr::Pow(a, b) => {
                let base = a.eval_with(vars, zero);
                match **b {
                    Expr::Num(c) if c.fract() == 0.0 && c.abs() <= 64.0 => base.powi(c as i32),
                    _ => base.powf(&b.eval_with(vars, zero)),
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval_with(vars, zero);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Ln => v.ln(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    pub fn eval(&self, vars: &[f64]) -> f64 {
        self.eval_with(vars, &0.0)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => write!(f, "{c}"),
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Num(v) => write!(f, "number {v}"),
            TokenKind::Ident(s) => write!(f, "identifier '{s}'"),
            TokenKind::Op(c) => write!(f, "'{c}'"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    column: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let column = i + 1;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError {
                column,
                message: format!("malformed number '{text}'"),
            })?;
            out.push(Token {
                kind: TokenKind::Num(v),
                column,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Ident(src[start..i].to_string()),
                column,
            });
        } else if "+-*/^()".contains(c) {
            out.push(Token {
                kind: TokenKind::Op(c),
                column,
            });
            i += 1;
        } else {
            return Err(ExprError {
                column,
                message: format!("unexpected character '{c}'"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [&'a str],
    len: usize,
}

impl Parser<'_> {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token {
                kind: TokenKind::Op(c),
                ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn end_error(&self) -> ExprError {
        ExprError {
            column: self.len + 1,
            message: "unexpected end of expression".into(),
        }
    }

    fn expect(&mut self, op: char) -> Result<(), ExprError> {
        match self.tokens.get(self.pos) {
            Some(Token {
                kind: TokenKind::Op(c),
                ..
            }) if *c == op => {
                self.pos += 1;
                Ok(())
            }
            Some(tok) => Err(ExprError {
                column: tok.column,
                message: format!("expected '{op}', found {}", tok.kind),
            }),
            None => Err(self.end_error()),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.tokens.get(self.pos).cloned() else {
            return Err(self.end_error());
        };
        self.pos += 1;
        match tok.kind {
            TokenKind::Num(v) => Ok(Expr::Num(v)),
            TokenKind::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            TokenKind::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Expr::Var(i)),
                    None => Err(ExprError {
                        column: tok.column,
                        message: format!(
                            "unknown identifier '{name}' (expected one of {})",
                            self.vars.join(", ")
                        ),
                    }),
                }
            }
            other => Err(ExprError {
                column: tok.column,
                message: format!("unexpected {other}"),
            }),
        }
    }
}

/// An expression together with its symbolic gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    source: String,
    expr: Expr,
    grads: Vec<Expr>,
}

impl CompiledExpr {
    pub fn new(source: &str, vars: &[&str]) -> Result<Self, ExprError> {
        let expr = Expr::parse(source, vars)?;
        let grads = (0..vars.len()).map(|i| expr.diff(i)).collect();
        Ok(Self {
            source: source.to_string(),
            expr,
            grads,
        })
    }

    /// An expression over the action variables `I1..Im`.
    pub fn actions(source: &str, m: usize) -> Result<Self, ExprError> {
        let names = action_names(m);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        Self::new(source, &refs)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.expr.eval(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.grads.iter().map(|g| g.eval(x)).collect()
    }
}

pub fn action_names(m: usize) -> Vec<String> {
    (1..=m).map(|k| format!("I{k}")).collect()
}

/// Variable names of the vertical layout: `t, q1..qm, p1..pm`.
pub fn phase_names(m: usize) -> Vec<String> {
    let mut names = vec!["t".to_string()];
    names.extend((1..=m).map(|k| format!("q{k}")));
    names.extend((1..=m).map(|k| format!("p{k}")));
    names
}

/// A vertical field given by an expression over `t, q1.., p1..`, with its
/// gradient computed by dual numbers.
pub fn vertical_field(source: &str, m: usize) -> Result<ScalarField, ExprError> {
    let names = phase_names(m);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let expr = Expr::parse(source, &refs)?;
    Ok(ScalarField::dual(Arity::Vertical, m, source, move |x: &[Dual]| {
        let zero = Dual::constant(0.0, x.first().map_or(0, |d| d.eps.len()));
        expr.eval_with(x, &zero)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::gradient_check;

    fn parse(src: &str) -> Result<Expr, ExprError> {
        Expr::parse(src, &["I1", "I2"])
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse("1 + 2 * 3 ^ 2").unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]), 19.0);
        let e = parse("2 ^ 3 ^ 2").unwrap();
        assert_eq!(e.eval(&[0.0, 0.0]), 512.0);
        let e = parse("-I1^2").unwrap();
        assert_eq!(e.eval(&[3.0, 0.0]), -9.0);
        let e = parse("(I1 - I2) / 4").unwrap();
        assert_eq!(e.eval(&[3.0, 1.0]), 0.5);
        let e = parse("1.5e-1*I2").unwrap();
        assert!((e.eval(&[0.0, 2.0]) - 0.3).abs() < 1e-16);
    }

    #[test]
    fn malformed_inputs() {
        for bad in ["I1+", "", "(I1", "I1 I2", "I3", "2 $ 3", "sin I1", "I1)"] {
            assert!(parse(bad).is_err(), "{bad} should fail");
        }
        let err = parse("I1+").unwrap_err();
        assert_eq!(err.column, 4);
        let err = parse("I1 + J").unwrap_err();
        assert!(err.message.contains("'J'"));
    }

    #[test]
    fn symbolic_gradient() {
        let c = CompiledExpr::actions("I1^2 + 3*I1*I2 - I2/2", 2).unwrap();
        assert_eq!(c.value(&[2.0, 1.0]), 4.0 + 6.0 - 0.5);
        assert_eq!(c.gradient(&[2.0, 1.0]), vec![4.0 + 3.0, 6.0 - 0.5]);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let c = CompiledExpr::actions("0", 1).unwrap();
        assert_eq!(c.value(&[1.3]), 0.0);
        assert_eq!(c.gradient(&[1.3]), vec![0.0]);
    }

    #[test]
    fn symbolic_and_dual_derivatives_agree() {
        let src = "sin(I1)*exp(I2/3) + sqrt(I1 + I2)^3 - ln(I1) / I2 + I1^I2";
        let c = CompiledExpr::actions(src, 2).unwrap();
        let x = [0.7, 1.9];
        let d = c.expr.eval_with(&Dual::seed(&x), &Dual::constant(0.0, 2));
        let g = c.gradient(&x);
        for i in 0..2 {
            assert!((d.eps[i] - g[i]).abs() < 1e-12, "{i}: {} vs {}", d.eps[i], g[i]);
        }
        assert!((d.re - c.value(&x)).abs() < 1e-14);
    }

    #[test]
    fn phase_space_field_from_expression() {
        let f = vertical_field("p1^2/2 - cos(q1) + 0.1*t*q2*p2", 2).unwrap();
        let x = [0.5, 0.3, -0.2, 1.1, 0.4];
        assert!(gradient_check(&f, &x).max_relative_error < 1e-9);
        assert!(vertical_field("p3", 2).is_err());
    }
}
