use std::fmt;
use std::sync::Arc;

use crate::jets::{Jet2, JetError, UnaryFn};

use super::table::HermiteTable;

/// Named functions callable from the expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 8] = [
        Func::Sinh,
        Func::Cosh,
        Func::Tanh,
        Func::Exp,
        Func::Ln,
        Func::Sin,
        Func::Cos,
        Func::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        self.unary().name()
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn unary(self) -> UnaryFn {
        match self {
            Func::Sinh => UnaryFn::Sinh,
            Func::Cosh => UnaryFn::Cosh,
            Func::Tanh => UnaryFn::Tanh,
            Func::Exp => UnaryFn::Exp,
            Func::Ln => UnaryFn::Ln,
            Func::Sin => UnaryFn::Sin,
            Func::Cos => UnaryFn::Cos,
            Func::Sqrt => UnaryFn::Sqrt,
        }
    }
}

/// Reference to the `order`-th derivative of a sampled table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRef {
    pub table: Arc<HermiteTable>,
    pub order: usize,
}

/// Expression tree over indexed variables.
///
/// The exponent of [`Expr::Pow`] is always a literal (see [`Expr::literal_value`]).
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
    Table(TableRef, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    /// The numeric value of a literal subtree: a number, a negated literal,
    /// or a quotient of two such.
    pub fn literal_value(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            Expr::Neg(e) => e.literal_value().map(|v| -v),
            Expr::Div(a, b) => match (a.as_ref(), b.as_ref()) {
                (Expr::Num(_) | Expr::Neg(_), Expr::Num(_) | Expr::Neg(_)) => {
                    Some(a.literal_value()? / b.literal_value()?)
                }
                _ => None,
            },
            _ => None,
        }
    }

    pub fn is_literal(&self) -> bool {
        self.literal_value().is_some()
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut best = None;
        self.visit(&mut |e| {
            if let Expr::Var(i) = e {
                best = Some(best.map_or(*i, |b: usize| b.max(*i)));
            }
        });
        best
    }

    /// Tables referenced anywhere in the tree, in first-appearance order.
    pub fn tables(&self) -> Vec<Arc<HermiteTable>> {
        let mut out: Vec<Arc<HermiteTable>> = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Table(t, _) = e {
                if !out.iter().any(|o| Arc::ptr_eq(o, &t.table) || **o == *t.table) {
                    out.push(t.table.clone());
                }
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Num(_) | Expr::Var(_) => {}
            Expr::Neg(a) | Expr::Call(_, a) | Expr::Table(_, a) => a.visit(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Renames variables: `Var(i)` becomes `Var(map[i])`.
    pub fn remap_vars(&self, map: &[usize]) -> Expr {
        let r = |e: &Expr| Box::new(e.remap_vars(map));
        match self {
            Expr::Num(v) => Expr::Num(*v),
            Expr::Var(i) => Expr::Var(map[*i]),
            Expr::Neg(a) => Expr::Neg(r(a)),
            Expr::Add(a, b) => Expr::Add(r(a), r(b)),
            Expr::Sub(a, b) => Expr::Sub(r(a), r(b)),
            Expr::Mul(a, b) => Expr::Mul(r(a), r(b)),
            Expr::Div(a, b) => Expr::Div(r(a), r(b)),
            Expr::Pow(a, b) => Expr::Pow(r(a), b.clone()),
            Expr::Call(f, a) => Expr::Call(*f, r(a)),
            Expr::Table(t, a) => Expr::Table(t.clone(), r(a)),
        }
    }

    /// Jet evaluation at `point`; variable `i` is seeded as coordinate `i`.
    pub fn eval(&self, point: &[f64]) -> Result<Jet2, JetError> {
        let m = point.len();
        Ok(match self {
            Expr::Num(v) => Jet2::constant(*v, m),
            Expr::Var(i) => Jet2::var(*point.get(*i).unwrap_or(&f64::NAN), *i, m)?,
            Expr::Neg(a) => a.eval(point)?.neg(),
            Expr::Add(a, b) => a.eval(point)?.add(&b.eval(point)?)?,
            Expr::Sub(a, b) => a.eval(point)?.sub(&b.eval(point)?)?,
            Expr::Mul(a, b) => a.eval(point)?.mul(&b.eval(point)?)?,
            Expr::Div(a, b) => a.eval(point)?.div(&b.eval(point)?)?,
            Expr::Pow(a, e) => {
                let c = e.literal_value().unwrap_or(f64::NAN);
                a.eval(point)?.unary(UnaryFn::PowConst(c))?
            }
            Expr::Call(f, a) => a.eval(point)?.unary(f.unary())?,
            Expr::Table(t, a) => {
                let inner = a.eval(point)?;
                let x = inner.value();
                let d = |k| t.table.derivative(x, t.order + k);
                inner.compose([d(0), d(1), d(2)])
            }
        })
    }

    /// Plain real evaluation, sharing no code with the jet path.
    pub fn eval_value(&self, point: &[f64]) -> Result<f64, JetError> {
        Ok(match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => *point
                .get(*i)
                .ok_or(JetError::IndexOutOfRange { index: *i, dim: point.len() })?,
            Expr::Neg(a) => -a.eval_value(point)?,
            Expr::Add(a, b) => a.eval_value(point)? + b.eval_value(point)?,
            Expr::Sub(a, b) => a.eval_value(point)? - b.eval_value(point)?,
            Expr::Mul(a, b) => a.eval_value(point)? * b.eval_value(point)?,
            Expr::Div(a, b) => {
                let d = b.eval_value(point)?;
                if d == 0.0 {
                    return Err(JetError::DivisionByZero);
                }
                a.eval_value(point)? / d
            }
            Expr::Pow(a, e) => {
                let c = e.literal_value().unwrap_or(f64::NAN);
                UnaryFn::PowConst(c).apply(a.eval_value(point)?)?
            }
            Expr::Call(f, a) => f.unary().apply(a.eval_value(point)?)?,
            Expr::Table(t, a) => t.table.derivative(a.eval_value(point)?, t.order),
        })
    }

    /// Symbolic partial derivative with respect to variable `var`.
    pub fn diff(&self, var: usize) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(i) => Expr::Num(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.diff(var)),
            Expr::Add(a, b) => add(a.diff(var), b.diff(var)),
            Expr::Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Expr::Mul(a, b) => add(
                mul(a.diff(var), (**b).clone()),
                mul((**a).clone(), b.diff(var)),
            ),
            Expr::Div(a, b) => sub(
                div(a.diff(var), (**b).clone()),
                div(mul((**a).clone(), b.diff(var)), pow((**b).clone(), 2.0)),
            ),
            Expr::Pow(a, e) => {
                let c = e.literal_value().unwrap_or(f64::NAN);
                mul(mul(Expr::Num(c), pow((**a).clone(), c - 1.0)), a.diff(var))
            }
            Expr::Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sinh => call(Func::Cosh, inner),
                    Func::Cosh => call(Func::Sinh, inner),
                    Func::Tanh => sub(Expr::Num(1.0), pow(call(Func::Tanh, inner), 2.0)),
                    Func::Exp => call(Func::Exp, inner),
                    Func::Ln => div(Expr::Num(1.0), inner),
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Sqrt => div(Expr::Num(0.5), call(Func::Sqrt, inner)),
                };
                mul(outer, a.diff(var))
            }
            Expr::Table(t, a) => {
                let next = TableRef { table: t.table.clone(), order: t.order + 1 };
                mul(Expr::Table(next, a.clone()), a.diff(var))
            }
        }
    }

    /// Printable form using the given variable names.
    pub fn display<'a>(&'a self, vars: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, vars }
    }
}

// Simplifying constructors for generated expressions.

pub fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        (Expr::Num(z), _) if *z == 0.0 => b,
        (_, Expr::Num(z)) if *z == 0.0 => a,
        (_, Expr::Neg(inner)) => sub(a, (**inner).clone()),
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        (_, Expr::Num(z)) if *z == 0.0 => a,
        (Expr::Num(z), _) if *z == 0.0 => neg(b),
        _ if a == b => Expr::Num(0.0),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        (Expr::Num(z), _) | (_, Expr::Num(z)) if *z == 0.0 => Expr::Num(0.0),
        (Expr::Num(o), _) if *o == 1.0 => b,
        (_, Expr::Num(o)) if *o == 1.0 => a,
        (Expr::Num(o), _) if *o == -1.0 => neg(b),
        (_, Expr::Num(o)) if *o == -1.0 => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(z), _) if *z == 0.0 => Expr::Num(0.0),
        (_, Expr::Num(o)) if *o == 1.0 => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn pow(base: Expr, exponent: f64) -> Expr {
    if exponent == 0.0 {
        Expr::Num(1.0)
    } else if exponent == 1.0 {
        base
    } else {
        Expr::Pow(Box::new(base), Box::new(Expr::Num(exponent)))
    }
}

pub fn call(f: Func, a: Expr) -> Expr {
    Expr::Call(f, Box::new(a))
}

/// Formats a real so that it parses back to the same bits: integral values
/// without a fractional part, everything else in shortest round-trip form.
pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    vars: &'a [String],
}

const PREC_SUM: u8 = 1;
const PREC_PRODUCT: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => PREC_SUM,
        Expr::Mul(..) | Expr::Div(..) => PREC_PRODUCT,
        Expr::Neg(_) => PREC_NEG,
        Expr::Pow(..) => PREC_POW,
        _ => PREC_ATOM,
    }
}

impl ExprDisplay<'_> {
    fn write(&self, e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e {
            Expr::Num(v) if v.is_sign_negative() => write!(f, "({})", format_number(*v)),
            Expr::Num(v) => f.write_str(&format_number(*v)),
            Expr::Var(i) => match self.vars.get(*i) {
                Some(name) => f.write_str(name),
                None => write!(f, "${i}"),
            },
            Expr::Neg(a) => {
                f.write_str("-")?;
                self.operand(a, PREC_NEG, f)
            }
            Expr::Add(a, b) => self.binary(a, " + ", b, PREC_SUM, f),
            Expr::Sub(a, b) => self.binary(a, " - ", b, PREC_SUM, f),
            Expr::Mul(a, b) => self.binary(a, " * ", b, PREC_PRODUCT, f),
            Expr::Div(a, b) => self.binary(a, " / ", b, PREC_PRODUCT, f),
            Expr::Pow(a, exponent) => {
                self.operand(a, PREC_ATOM, f)?;
                f.write_str("^")?;
                match exponent.as_ref() {
                    Expr::Num(v) if !v.is_sign_negative() => f.write_str(&format_number(*v)),
                    Expr::Num(v) => write!(f, "({})", format_number(*v)),
                    other => {
                        f.write_str("(")?;
                        self.write(other, f)?;
                        f.write_str(")")
                    }
                }
            }
            Expr::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                self.write(a, f)?;
                f.write_str(")")
            }
            Expr::Table(t, a) => {
                write!(f, "{}{}(", t.table.name(), "'".repeat(t.order))?;
                self.write(a, f)?;
                f.write_str(")")
            }
        }
    }

    fn binary(&self, a: &Expr, op: &str, b: &Expr, prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.operand(a, prec, f)?;
        f.write_str(op)?;
        // Left associative: a right operand of equal precedence needs parentheses.
        self.operand(b, prec + 1, f)
    }

    fn operand(&self, e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if precedence(e) < min_prec {
            f.write_str("(")?;
            self.write(e, f)?;
            f.write_str(")")
        } else {
            self.write(e, f)
        }
    }
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["x", "y", "z"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn printing_uses_minimal_parentheses() {
        let v = names();
        let e = Expr::Div(
            Box::new(Expr::Add(
                Box::new(pow(Expr::Var(0), 2.0)),
                Box::new(pow(Expr::Var(1), 2.0)),
            )),
            Box::new(Expr::Num(2.0)),
        );
        assert_eq!(e.display(&v).to_string(), "(x^2 + y^2) / 2");
        let e = Expr::Sub(
            Box::new(Expr::Var(0)),
            Box::new(Expr::Sub(Box::new(Expr::Var(1)), Box::new(Expr::Var(2)))),
        );
        assert_eq!(e.display(&v).to_string(), "x - (y - z)");
        let e = Expr::Neg(Box::new(pow(Expr::Var(0), 2.0)));
        assert_eq!(e.display(&v).to_string(), "-x^2");
        let e = pow(Expr::Neg(Box::new(Expr::Var(0))), 2.0);
        assert_eq!(e.display(&v).to_string(), "(-x)^2");
        let e = pow(Expr::Var(0), -1.0);
        assert_eq!(e.display(&v).to_string(), "x^(-1)");
        assert_eq!(Expr::Num(-2.5).display(&v).to_string(), "(-2.5)");
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.0, 1.0, -3.0, 0.1, 1e-7, 123456.789, 1e300, 2.0f64.sqrt()] {
            assert_eq!(format_number(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn derivative_of_product_and_call() {
        // d/dx (x * sinh(z)) = sinh(z)
        let e = Expr::Mul(
            Box::new(Expr::Var(0)),
            Box::new(call(Func::Sinh, Expr::Var(2))),
        );
        let d = e.diff(0);
        assert_eq!(d, call(Func::Sinh, Expr::Var(2)));
        // d/dz -> x * cosh(z)
        let d = e.diff(2);
        let p = [0.7, 0.0, 0.3];
        assert!((d.eval_value(&p).unwrap() - 0.7 * 0.3f64.cosh()).abs() < 1e-15);
    }

    #[test]
    fn simplifiers_fold_constants() {
        assert_eq!(add(Expr::Num(0.0), Expr::Var(1)), Expr::Var(1));
        assert_eq!(mul(Expr::Num(1.0), Expr::Var(1)), Expr::Var(1));
        assert_eq!(mul(Expr::Num(0.0), Expr::Var(1)), Expr::Num(0.0));
        assert_eq!(
            add(Expr::Var(0), mul(Expr::Num(-1.0), Expr::Var(1))),
            Expr::Sub(Box::new(Expr::Var(0)), Box::new(Expr::Var(1)))
        );
        assert_eq!(neg(neg(Expr::Var(0))), Expr::Var(0));
    }
}
