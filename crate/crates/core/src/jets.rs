//! Second-order forward-mode automatic differentiation.
//!
//! A [`Jet2`] carries the value, gradient and Hessian of a scalar function of
//! `m` real variables at a fixed point. Arithmetic on jets is Taylor
//! arithmetic truncated after the quadratic term, so evaluating an expression
//! on seeded variable jets yields its exact (to rounding) first and second
//! partial derivatives.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JetError {
    #[error("variable index {index} out of range for {dim} variables")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("jets over {left} and {right} variables cannot be combined")]
    DimensionMismatch { left: usize, right: usize },
    #[error("division by a jet whose value is zero")]
    DivisionByZero,
    #[error("{func} is undefined at {value}")]
    Domain { func: &'static str, value: f64 },
}

/// Scalar functions that can be applied to a jet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryFn {
    Sinh,
    Cosh,
    Tanh,
    Exp,
    Ln,
    Sin,
    Cos,
    Sqrt,
    /// `x^c` for a fixed real exponent.
    PowConst(f64),
}

impl UnaryFn {
    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Sinh => "sinh",
            UnaryFn::Cosh => "cosh",
            UnaryFn::Tanh => "tanh",
            UnaryFn::Exp => "exp",
            UnaryFn::Ln => "ln",
            UnaryFn::Sin => "sin",
            UnaryFn::Cos => "cos",
            UnaryFn::Sqrt => "sqrt",
            UnaryFn::PowConst(_) => "pow",
        }
    }

    /// Value of the function at `x` only.
    pub fn apply(self, x: f64) -> Result<f64, JetError> {
        self.check_domain(x)?;
        Ok(match self {
            UnaryFn::Sinh => x.sinh(),
            UnaryFn::Cosh => x.cosh(),
            UnaryFn::Tanh => x.tanh(),
            UnaryFn::Exp => x.exp(),
            UnaryFn::Ln => x.ln(),
            UnaryFn::Sin => x.sin(),
            UnaryFn::Cos => x.cos(),
            UnaryFn::Sqrt => x.sqrt(),
            UnaryFn::PowConst(c) => pow_value(x, c),
        })
    }

    /// Value, first and second derivative at `x`.
    pub fn derivatives(self, x: f64) -> Result<[f64; 3], JetError> {
        self.check_domain(x)?;
        Ok(match self {
            UnaryFn::Sinh => [x.sinh(), x.cosh(), x.sinh()],
            UnaryFn::Cosh => [x.cosh(), x.sinh(), x.cosh()],
            UnaryFn::Tanh => {
                let t = x.tanh();
                let d = 1.0 - t * t;
                [t, d, -2.0 * t * d]
            }
            UnaryFn::Exp => {
                let e = x.exp();
                [e, e, e]
            }
            UnaryFn::Ln => [x.ln(), 1.0 / x, -1.0 / (x * x)],
            UnaryFn::Sin => [x.sin(), x.cos(), -x.sin()],
            UnaryFn::Cos => [x.cos(), -x.sin(), -x.cos()],
            UnaryFn::Sqrt => {
                let s = x.sqrt();
                [s, 0.5 / s, -0.25 / (s * x)]
            }
            UnaryFn::PowConst(c) => [
                pow_value(x, c),
                c * pow_value(x, c - 1.0),
                c * (c - 1.0) * pow_value(x, c - 2.0),
            ],
        })
    }

    fn check_domain(self, x: f64) -> Result<(), JetError> {
        let ok = match self {
            UnaryFn::Ln | UnaryFn::Sqrt => x > 0.0,
            UnaryFn::PowConst(c) => {
                if is_integer(c) {
                    c >= 2.0 || c == 0.0 || c == 1.0 || x != 0.0
                } else {
                    x > 0.0
                }
            }
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(JetError::Domain { func: self.name(), value: x })
        }
    }
}

fn is_integer(c: f64) -> bool {
    c.fract() == 0.0 && c.abs() < i32::MAX as f64
}

fn pow_value(x: f64, c: f64) -> f64 {
    if is_integer(c) {
        x.powi(c as i32)
    } else {
        x.powf(c)
    }
}

/// Second-order Taylor jet of a scalar function of `m` variables.
///
/// The Hessian is stored as its packed upper triangle, so it is symmetric by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

#[inline]
fn packed_len(m: usize) -> usize {
    m * (m + 1) / 2
}

#[inline]
fn packed_index(m: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * m - i + 1) / 2 + (j - i)
}

impl Jet2 {
    /// A jet with no dependence on any variable.
    pub fn constant(value: f64, m: usize) -> Self {
        Jet2 { value, grad: vec![0.0; m], hess: vec![0.0; packed_len(m)] }
    }

    /// The coordinate function `x_index`, seeded at `value`.
    pub fn var(value: f64, index: usize, m: usize) -> Result<Self, JetError> {
        if index >= m {
            return Err(JetError::IndexOutOfRange { index, dim: m });
        }
        let mut jet = Jet2::constant(value, m);
        jet.grad[index] = 1.0;
        Ok(jet)
    }

    pub fn dim(&self) -> usize {
        self.grad.len()
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    /// Second partial derivative with respect to `x_i` and `x_j`.
    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess[packed_index(self.dim(), i, j)]
    }

    /// The Hessian expanded to a dense row-major `m × m` array.
    pub fn hess_dense(&self) -> Vec<f64> {
        let m = self.dim();
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = self.hess(i, j);
            }
        }
        out
    }

    fn same_dim(&self, other: &Jet2) -> Result<(), JetError> {
        if self.dim() == other.dim() {
            Ok(())
        } else {
            Err(JetError::DimensionMismatch { left: self.dim(), right: other.dim() })
        }
    }

    pub fn add(&self, other: &Jet2) -> Result<Jet2, JetError> {
        self.same_dim(other)?;
        Ok(Jet2 {
            value: self.value + other.value,
            grad: zip_with(&self.grad, &other.grad, |a, b| a + b),
            hess: zip_with(&self.hess, &other.hess, |a, b| a + b),
        })
    }

    pub fn sub(&self, other: &Jet2) -> Result<Jet2, JetError> {
        self.same_dim(other)?;
        Ok(Jet2 {
            value: self.value - other.value,
            grad: zip_with(&self.grad, &other.grad, |a, b| a - b),
            hess: zip_with(&self.hess, &other.hess, |a, b| a - b),
        })
    }

    pub fn neg(&self) -> Jet2 {
        Jet2 {
            value: -self.value,
            grad: self.grad.iter().map(|g| -g).collect(),
            hess: self.hess.iter().map(|h| -h).collect(),
        }
    }

    pub fn mul(&self, other: &Jet2) -> Result<Jet2, JetError> {
        self.same_dim(other)?;
        let (a, b) = (self.value, other.value);
        let grad = zip_with(&self.grad, &other.grad, |ga, gb| a * gb + b * ga);
        let mut hess = zip_with(&self.hess, &other.hess, |ha, hb| a * hb + b * ha);
        self.add_sym_outer(&mut hess, &self.grad, &other.grad, 1.0);
        Ok(Jet2 { value: a * b, grad, hess })
    }

    pub fn div(&self, other: &Jet2) -> Result<Jet2, JetError> {
        self.same_dim(other)?;
        let b = other.value;
        if b == 0.0 {
            return Err(JetError::DivisionByZero);
        }
        let q = self.value / b;
        // a = q b, differentiated twice and solved for the derivatives of q.
        let grad: Vec<f64> = zip_with(&self.grad, &other.grad, |ga, gb| (ga - q * gb) / b);
        let mut hess = zip_with(&self.hess, &other.hess, |ha, hb| ha - q * hb);
        self.add_sym_outer(&mut hess, &grad, &other.grad, -1.0);
        hess.iter_mut().for_each(|h| *h /= b);
        Ok(Jet2 { value: q, grad, hess })
    }

    /// Multiply by a plain real.
    pub fn scale(&self, s: f64) -> Jet2 {
        Jet2 {
            value: self.value * s,
            grad: self.grad.iter().map(|g| g * s).collect(),
            hess: self.hess.iter().map(|h| h * s).collect(),
        }
    }

    /// `g ∘ self` where `derivs` holds `g`, `g'` and `g''` at `self.value()`.
    pub fn compose(&self, derivs: [f64; 3]) -> Jet2 {
        let [g0, g1, g2] = derivs;
        let grad: Vec<f64> = self.grad.iter().map(|g| g1 * g).collect();
        let mut hess: Vec<f64> = self.hess.iter().map(|h| g1 * h).collect();
        if g2 != 0.0 {
            let m = self.dim();
            let mut k = 0;
            for i in 0..m {
                for j in i..m {
                    hess[k] += g2 * self.grad[i] * self.grad[j];
                    k += 1;
                }
            }
        }
        Jet2 { value: g0, grad, hess }
    }

    pub fn unary(&self, func: UnaryFn) -> Result<Jet2, JetError> {
        Ok(self.compose(func.derivatives(self.value)?))
    }

    /// Adds `scale * (u vᵀ + v uᵀ)` to a packed Hessian.
    fn add_sym_outer(&self, hess: &mut [f64], u: &[f64], v: &[f64], scale: f64) {
        let m = self.dim();
        let mut k = 0;
        for i in 0..m {
            for j in i..m {
                hess[k] += scale * (u[i] * v[j] + u[j] * v[i]);
                k += 1;
            }
        }
    }
}

fn zip_with(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}
