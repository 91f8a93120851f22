//! Generators for concrete hypersurfaces: the classification family of
//! immersions with parallel induced structure, the built-in examples, and
//! random test immersions.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

use crate::exprlang::{
    add, call, div, mul, neg, parse_immersion, sub, Expr, Func, HermiteTable, ImmersionSpec, Interval, TableRef,
};
use crate::paraframe::{frame_at, numerical_rank, para_apply};
use crate::verify::grid::Grid;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyError {
    #[error("expected {expected} {what}, found {found}")]
    Count { what: &'static str, expected: usize, found: usize },
    #[error("b{index} is not a {sign} eigenvector of J̃")]
    Eigenvector { index: usize, sign: char },
    #[error("b_1..b_2n, v, J̃v have rank {rank}, expected {expected}")]
    Rank { rank: usize, expected: usize },
    #[error("alpha must be an expression in the single variable y")]
    AlphaVariables,
    #[error("alpha cannot be evaluated at y = {y}: {reason}")]
    AlphaEvaluation { y: f64, reason: String },
    #[error("unknown builtin {0:?}")]
    UnknownBuiltin(String),
    #[error("invalid generated spec: {0}")]
    Spec(String),
}

/// Parameters of the classification family
/// `f = Σ x_i b_i + J̃v ∫cosh α(y) dy + v ∫sinh α(y) dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyParams {
    pub n: usize,
    pub b: Vec<Vec<f64>>,
    pub v: Vec<f64>,
    /// Expression in one variable (index 0), the coordinate `y`.
    pub alpha: Expr,
}

/// Domain and quadrature resolution for generated specs.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyOptions {
    /// Defaults to `[-1, 1]` in every coordinate.
    pub domain: Option<Vec<Interval>>,
    /// Simpson panels for non-closed-form integrals of `α`.
    pub panels: usize,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        FamilyOptions { domain: None, panels: 512 }
    }
}

impl FamilyParams {
    pub fn validate(&self) -> Result<(), FamilyError> {
        let ambient = 2 * self.n + 2;
        if self.b.len() != 2 * self.n {
            return Err(FamilyError::Count { what: "vectors b_i", expected: 2 * self.n, found: self.b.len() });
        }
        for v in self.b.iter().chain(std::iter::once(&self.v)) {
            if v.len() != ambient {
                return Err(FamilyError::Count { what: "vector components", expected: ambient, found: v.len() });
            }
        }
        for (i, b) in self.b.iter().enumerate() {
            let jb = para_apply(b).expect("even dimension");
            let (ok, sign) = if i < self.n {
                (jb == *b, '+')
            } else {
                (jb.iter().zip(b).all(|(p, q)| *p == -q), '-')
            };
            if !ok {
                return Err(FamilyError::Eigenvector { index: i + 1, sign });
            }
        }
        if self.alpha.max_var().is_some_and(|v| v > 0) {
            return Err(FamilyError::AlphaVariables);
        }
        let jv = para_apply(&self.v).expect("even dimension");
        let cols: Vec<&[f64]> = self.b.iter().map(Vec::as_slice).chain([self.v.as_slice(), jv.as_slice()]).collect();
        let mat = DMatrix::from_fn(ambient, ambient, |a, c| cols[c][a]);
        let rank = numerical_rank(&mat, 1e-8);
        if rank < ambient {
            return Err(FamilyError::Rank { rank, expected: ambient });
        }
        Ok(())
    }
}

fn family_vars(n: usize) -> Vec<String> {
    (1..=2 * n).map(|i| format!("x{i}")).chain(["y".to_string()]).collect()
}

/// `Σ c_k e_k` with zero terms dropped and negative coefficients subtracted.
pub fn combination(terms: impl IntoIterator<Item = (f64, Expr)>) -> Expr {
    let mut acc: Option<Expr> = None;
    for (c, e) in terms {
        if c == 0.0 {
            continue;
        }
        let term = mul(Expr::Num(c.abs()), e);
        acc = Some(match acc {
            None if c < 0.0 => neg(term),
            None => term,
            Some(a) if c < 0.0 => sub(a, term),
            Some(a) => add(a, term),
        });
    }
    acc.unwrap_or(Expr::Num(0.0))
}

/// Table of `∫_lo^y g` with knot derivatives `g` and `g'`, by cumulative
/// Simpson quadrature; `g` returns value and derivative.
fn integral_table(
    name: &str,
    iv: Interval,
    panels: usize,
    g: impl Fn(f64) -> Result<[f64; 2], FamilyError>,
) -> Result<HermiteTable, FamilyError> {
    let dy = iv.width() / panels as f64;
    let mut knots = Vec::with_capacity(panels + 1);
    let mut total = 0.0;
    let mut prev = g(iv.lo)?;
    knots.push([0.0, prev[0], prev[1]]);
    for k in 1..=panels {
        let y1 = iv.lo + k as f64 * dy;
        let mid = g(y1 - 0.5 * dy)?;
        let next = g(y1)?;
        total += dy / 6.0 * (prev[0] + 4.0 * mid[0] + next[0]);
        knots.push([total, next[0], next[1]]);
        prev = next;
    }
    Ok(HermiteTable::new(name, iv.lo, iv.hi, knots).expect("uniform grid with finite samples"))
}

/// Base immersion and its transversal field `J̃ f_y`.
fn family_parts(p: &FamilyParams, opts: &FamilyOptions) -> Result<(Vec<String>, Vec<Interval>, Vec<Expr>, Vec<Expr>), FamilyError> {
    p.validate()?;
    let m = 2 * p.n + 1;
    let ambient = m + 1;
    let y = m - 1;
    let vars = family_vars(p.n);
    let domain = opts.domain.clone().unwrap_or_else(|| vec![Interval::new(-1.0, 1.0); m]);
    if domain.len() != m {
        return Err(FamilyError::Count { what: "domain intervals", expected: m, found: domain.len() });
    }
    let alpha_y = p.alpha.remap_vars(&[y]);
    let jv = para_apply(&p.v).expect("even dimension");

    let slope = p.alpha.diff(0).literal_value();
    let (int_cosh, int_sinh) = match slope {
        Some(a) if a != 0.0 => (
            div(call(Func::Sinh, alpha_y.clone()), Expr::Num(a)),
            div(call(Func::Cosh, alpha_y.clone()), Expr::Num(a)),
        ),
        Some(_) => {
            let c = p.alpha.eval_value(&[0.0]).map_err(|e| FamilyError::AlphaEvaluation { y: 0.0, reason: e.to_string() })?;
            (mul(Expr::Num(c.cosh()), Expr::Var(y)), mul(Expr::Num(c.sinh()), Expr::Var(y)))
        }
        None => {
            let eval = |t: f64| {
                p.alpha
                    .eval(&[t])
                    .map(|j| (j.value(), j.grad()[0]))
                    .map_err(|e| FamilyError::AlphaEvaluation { y: t, reason: e.to_string() })
            };
            let iv = domain[y];
            let ic = integral_table("int_cosh_alpha", iv, opts.panels, |t| {
                let (a, da) = eval(t)?;
                Ok([a.cosh(), da * a.sinh()])
            })?;
            let is = integral_table("int_sinh_alpha", iv, opts.panels, |t| {
                let (a, da) = eval(t)?;
                Ok([a.sinh(), da * a.cosh()])
            })?;
            let node = |t: HermiteTable| Expr::Table(TableRef { table: Arc::new(t), order: 0 }, Box::new(Expr::Var(y)));
            (node(ic), node(is))
        }
    };

    let f: Vec<Expr> = (0..ambient)
        .map(|a| {
            let linear = combination((0..2 * p.n).map(|i| (p.b[i][a], Expr::Var(i))));
            let curve = combination([(jv[a], int_cosh.clone()), (p.v[a], int_sinh.clone())]);
            add(linear, curve)
        })
        .collect();
    let c: Vec<Expr> = if slope.is_some() {
        // J̃ f_y = v cosh α + J̃v sinh α.
        (0..ambient)
            .map(|a| {
                combination([
                    (p.v[a], call(Func::Cosh, alpha_y.clone())),
                    (jv[a], call(Func::Sinh, alpha_y.clone())),
                ])
            })
            .collect()
    } else {
        let half = ambient / 2;
        (0..ambient).map(|a| f[(a + half) % ambient].diff(y)).collect()
    };
    Ok((vars, domain, f, c))
}

fn build(n: usize, vars: Vec<String>, domain: Vec<Interval>, f: Vec<Expr>, c: Vec<Expr>) -> Result<ImmersionSpec, FamilyError> {
    ImmersionSpec::new(n, vars, domain, f, c).map_err(|e| FamilyError::Spec(e.to_string()))
}

/// The family member for `p` with transversal field `C = J̃ f_y`.
pub fn classification_family(p: &FamilyParams) -> Result<ImmersionSpec, FamilyError> {
    classification_family_with(p, &FamilyOptions::default())
}

pub fn classification_family_with(p: &FamilyParams, opts: &FamilyOptions) -> Result<ImmersionSpec, FamilyError> {
    let (vars, domain, f, c) = family_parts(p, opts)?;
    build(p.n, vars, domain, f, c)
}

/// Family member with the linear coordinates shifted along `y`:
/// `f = Σ (x_i + s_i(y)) b_i + J̃v ∫cosh α + v ∫sinh α`, `C = J̃ f_y`.
///
/// The result has `ξ = ∂_y`, a flat connection on the `x` directions and
/// `∇η = 0`, but `∇_ξ ξ = Σ (s_i'' ∓ α' s_i') ∂_{x_i}` is generally nonzero,
/// so it needs the full parallelising gauge.
pub fn shifted_family(p: &FamilyParams, shifts: &[Expr], opts: &FamilyOptions) -> Result<ImmersionSpec, FamilyError> {
    if shifts.len() != 2 * p.n {
        return Err(FamilyError::Count { what: "shift functions", expected: 2 * p.n, found: shifts.len() });
    }
    if shifts.iter().any(|s| s.max_var().is_some_and(|v| v > 0)) {
        return Err(FamilyError::AlphaVariables);
    }
    let (vars, domain, f, c) = family_parts(p, opts)?;
    let m = 2 * p.n + 1;
    let y = m - 1;
    let shifts: Vec<Expr> = shifts.iter().map(|s| s.remap_vars(&[y])).collect();
    let sign = |i: usize| if i < p.n { 1.0 } else { -1.0 };
    let f = f
        .into_iter()
        .enumerate()
        .map(|(a, fa)| add(fa, combination((0..2 * p.n).map(|i| (p.b[i][a], shifts[i].clone())))))
        .collect();
    let c = c
        .into_iter()
        .enumerate()
        .map(|(a, ca)| add(ca, combination((0..2 * p.n).map(|i| (sign(i) * p.b[i][a], shifts[i].diff(y))))))
        .collect();
    build(p.n, vars, domain, f, c)
}

fn random_unit(rng: &mut impl Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

/// Random admissible parameters: `b_i = (u, ±u)` halves and a random `v`,
/// redrawn until the rank condition holds.
pub fn random_family_params(n: usize, alpha: Expr, rng: &mut impl Rng) -> FamilyParams {
    loop {
        let b = (0..2 * n)
            .map(|i| {
                let u: Vec<f64> = (0..=n).map(|_| random_unit(rng)).collect();
                let s = if i < n { 1.0 } else { -1.0 };
                u.iter().copied().chain(u.iter().map(|x| s * x)).collect()
            })
            .collect();
        let v = (0..2 * n + 2).map(|_| random_unit(rng)).collect();
        let p = FamilyParams { n, b, v, alpha: alpha.clone() };
        if p.validate().is_ok() {
            let jv = para_apply(&p.v).expect("even dimension");
            let cols: Vec<&Vec<f64>> = p.b.iter().chain([&p.v, &jv]).collect();
            let k = 2 * n + 2;
            let mat = DMatrix::from_fn(k, k, |a, c| cols[c][a]);
            let sv = mat.svd(false, false).singular_values;
            if sv.min() > 0.05 * sv.max() {
                return p;
            }
        }
    }
}

/// True when `spec` is an immersion with transversal `C` at every grid point.
pub fn regular_on_grid(spec: &ImmersionSpec, points: usize) -> bool {
    let grid = Grid::halton(spec.domain(), points, 1, 1e-4, 4.0);
    grid.points.iter().all(|u| frame_at(spec, u).is_ok())
}

/// Largest condition number of the frame `[f_* | C]` over a Halton sample;
/// infinite if the frame fails somewhere.
pub fn frame_condition(spec: &ImmersionSpec, points: usize) -> f64 {
    let grid = Grid::halton(spec.domain(), points, 1, 1e-4, 4.0);
    grid.points
        .iter()
        .map(|u| match frame_at(spec, u) {
            Ok(fr) => {
                let k = fr.jac.ncols();
                let mut a = fr.jac.clone().insert_column(k, 0.0);
                a.set_column(k, &fr.c_val);
                let sv = a.singular_values();
                sv.max() / sv.min()
            }
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Bound on [`frame_condition`] for generated immersions, keeping finite
/// difference derivatives of the induced objects accurate.
const GENERATED_CONDITION: f64 = 50.0;

fn random_coeff(rng: &mut impl Rng, scale: f64) -> f64 {
    (scale * random_unit(rng) * 1000.0).round() / 1000.0
}

/// `Φ · J̃ f_*(∂_y + W)`, a J̃-tangent field for any tangent `W`.
fn jtangent_transversal(f: &[Expr], phi: &Expr, w: &[Expr]) -> Vec<Expr> {
    let ambient = f.len();
    let m = ambient - 1;
    let half = ambient / 2;
    (0..ambient)
        .map(|a| {
            let src = &f[(a + half) % ambient];
            let mut sum = src.diff(m - 1);
            for (i, wi) in w.iter().enumerate() {
                sum = add(sum, mul(wi.clone(), src.diff(i)));
            }
            mul(phi.clone(), sum)
        })
        .collect()
}

fn random_affine(rng: &mut impl Rng, m: usize, scale: f64) -> Expr {
    combination(
        std::iter::once((random_coeff(rng, scale), Expr::Num(1.0)))
            .chain((0..m).map(|i| (random_coeff(rng, scale), Expr::Var(i)))),
    )
}

/// A random immersion with polynomial and hyperbolic components, paired with
/// a random non-equiaffine J̃-tangent transversal field.
pub fn random_immersion(n: usize, rng: &mut impl Rng) -> ImmersionSpec {
    let m = 2 * n + 1;
    let ambient = m + 1;
    let vars = family_vars(n);
    let domain = vec![Interval::new(-0.5, 0.5); m];
    loop {
        let f: Vec<Expr> = (0..ambient)
            .map(|a| {
                let mut e = combination((0..m).map(|i| {
                    let diag = if i == a % m { 1.0 } else { 0.0 };
                    (diag + random_coeff(rng, 0.5), Expr::Var(i))
                }));
                let (i, j) = (rng.random_range(0..m), rng.random_range(0..m));
                e = add(e, combination([(random_coeff(rng, 0.6), mul(Expr::Var(i), Expr::Var(j)))]));
                let k = rng.random_range(0..m);
                let func = if rng.random_bool(0.5) { Func::Sinh } else { Func::Cosh };
                add(e, combination([(random_coeff(rng, 0.8), call(func, Expr::Var(k)))]))
            })
            .collect();
        let k = rng.random_range(0..m);
        let phi = call(Func::Exp, mul(Expr::Num(random_coeff(rng, 0.4)), Expr::Var(k)));
        let w: Vec<Expr> = (0..m - 1).map(|_| random_affine(rng, m, 0.3)).collect();
        let c = jtangent_transversal(&f, &phi, &w);
        let spec = ImmersionSpec::new(n, vars.clone(), domain.clone(), f, c).expect("consistent generated spec");
        if frame_condition(&spec, 128) <= GENERATED_CONDITION {
            return spec;
        }
    }
}

/// A random `n = 1` immersion whose `x`, `y` coordinate fields span `D`
/// (`f_x` in the `+1` and `f_y` in the `−1` eigenspace of J̃), with a random
/// J̃-tangent transversal field. Gauges with `Z = a ∂_x + b ∂_y` stay in `D`.
pub fn random_adapted_immersion(rng: &mut impl Rng) -> ImmersionSpec {
    let vars = family_vars(1);
    let (x, y, z) = (Expr::Var(0), Expr::Var(1), Expr::Var(2));
    let domain = vec![Interval::new(-0.5, 0.5); 3];
    loop {
        let plus = combination([
            (1.0 + random_coeff(rng, 0.3), x.clone()),
            (random_coeff(rng, 0.5), mul(x.clone(), x.clone())),
            (random_coeff(rng, 0.5), mul(x.clone(), z.clone())),
            (random_coeff(rng, 0.5), call(Func::Sinh, z.clone())),
        ]);
        let minus = combination([
            (1.0 + random_coeff(rng, 0.3), y.clone()),
            (random_coeff(rng, 0.5), mul(y.clone(), y.clone())),
            (random_coeff(rng, 0.5), mul(y.clone(), z.clone())),
            (random_coeff(rng, 0.5), mul(z.clone(), z.clone())),
        ]);
        let f = vec![
            add(plus.clone(), minus.clone()),
            add(call(Func::Sinh, z.clone()), combination([(random_coeff(rng, 0.3), mul(z.clone(), z.clone()))])),
            sub(plus, minus),
            add(call(Func::Cosh, z.clone()), combination([(random_coeff(rng, 0.3), z.clone())])),
        ];
        let phi = add(Expr::Num(1.0), combination([(random_coeff(rng, 0.3), y.clone())]));
        let w: Vec<Expr> = (0..2).map(|_| random_affine(rng, 3, 0.3)).collect();
        let c = jtangent_transversal(&f, &phi, &w);
        let spec = ImmersionSpec::new(1, vars.clone(), domain.clone(), f, c).expect("consistent generated spec");
        if frame_condition(&spec, 128) <= GENERATED_CONDITION {
            return spec;
        }
    }
}

pub const BUILTIN_NAMES: [&str; 4] = ["example_4_6", "example_4_6_bar", "example_4_13", "hyperplane"];

const EXAMPLE_4_6: &str = "n 1
vars x y z
domain -1:1 -1:1 -1:1
f1 = x + y
f2 = sinh(z)
f3 = x - y
f4 = cosh(z)
C1 = x
C2 = sinh(z)
C3 = x
C4 = cosh(z)
";

const EXAMPLE_4_6_BAR: &str = "n 1
vars x y z
domain -1:1 -1:1 -1:1
f1 = x + y
f2 = sinh(z)
f3 = x - y
f4 = cosh(z)
C1 = 0
C2 = sinh(z)
C3 = 0
C4 = cosh(z)
";

const EXAMPLE_4_13: &str = "n 1
vars x y z
domain 0.5:2 0.5:2 -1:1
f1 = (x^2 + y^2) / 2
f2 = sinh(z)
f3 = (x^2 - y^2) / 2
f4 = (x^3 + y^3) / 3 + cosh(z)
C1 = 0
C2 = sinh(z)
C3 = 0
C4 = cosh(z)
";

const HYPERPLANE: &str = "n 1
vars x y z
domain -1:1 -1:1 -1:1
f1 = x + y
f2 = z
f3 = x - y
f4 = 0
C1 = 0
C2 = 0
C3 = 0
C4 = 1
";

/// File text of a built-in example.
pub fn builtin_text(name: &str) -> Result<&'static str, FamilyError> {
    Ok(match name {
        "example_4_6" => EXAMPLE_4_6,
        "example_4_6_bar" => EXAMPLE_4_6_BAR,
        "example_4_13" => EXAMPLE_4_13,
        "hyperplane" => HYPERPLANE,
        _ => return Err(FamilyError::UnknownBuiltin(name.to_string())),
    })
}

pub fn builtin_description(name: &str) -> Result<&'static str, FamilyError> {
    Ok(match name {
        "example_4_6" => "f = (x+y, sinh z, x-y, cosh z) with C = J̃f_z + x f_x: ∇η = 0 but ∇φ ≠ 0, ∇ not flat",
        "example_4_6_bar" => "same f with C = (0, sinh z, 0, cosh z): parallel structure, flat connection",
        "example_4_13" => "f = ((x²+y²)/2, sinh z, (x²-y²)/2, (x³+y³)/3 + cosh z) on x, y > 0: ∇ξ = 0, rank h = 3",
        "hyperplane" => "f = (x+y, z, x-y, 0) with constant C: every induced tensor is parallel, h = 0",
        _ => return Err(FamilyError::UnknownBuiltin(name.to_string())),
    })
}

pub fn builtin_example(name: &str) -> Result<ImmersionSpec, FamilyError> {
    Ok(parse_immersion(builtin_text(name)?).expect("builtin texts parse"))
}
