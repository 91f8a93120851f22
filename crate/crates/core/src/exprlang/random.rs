//! Random expressions that are smooth and moderate on the box `[-1, 1]^m`.

use rand::Rng;

use super::expr::{Expr, Func};

const LITERALS: [f64; 8] = [0.5, 1.0, 1.25, 2.0, 3.0, 0.1, 0.75, 1.5];

fn boxed(e: Expr) -> Box<Expr> {
    Box::new(e)
}

fn square(e: Expr) -> Expr {
    Expr::Pow(boxed(e), boxed(Expr::Num(2.0)))
}

/// `c + e²` with `c ≥ 1`, bounded away from zero.
fn positive(e: Expr, rng: &mut impl Rng) -> Expr {
    Expr::Add(boxed(Expr::Num(LITERALS[rng.random_range(1..5)])), boxed(square(e)))
}

/// Values and gradients larger than this at a probe point cause a redraw.
const MAGNITUDE: f64 = 1e3;

/// A random expression tree over `vars` variables with at most `depth`
/// levels of operators. Every node is defined and smooth on `[-1, 1]^vars`,
/// exponentials only see arguments in `(-1, 1)`, constant subtrees are single
/// literals, and value and gradient stay below `10³` at the box's centre and
/// corners (a spread of boundary points beyond four variables).
pub fn random_expr(rng: &mut impl Rng, vars: usize, depth: usize) -> Expr {
    let probes = probe_points(vars);
    loop {
        let e = grow(rng, vars, depth);
        let moderate = probes.iter().all(|u| {
            e.eval(u).is_ok_and(|j| {
                j.value().abs() <= MAGNITUDE && j.grad().iter().all(|g| g.abs() <= MAGNITUDE)
            })
        });
        if moderate {
            return e;
        }
    }
}

fn probe_points(vars: usize) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; vars]];
    let corners: Vec<u64> = if vars <= 4 { (0..1u64 << vars).collect() } else { (0..16).map(|k| k * 0x9e37_79b9).collect() };
    for bits in corners {
        points.push((0..vars).map(|d| if (bits >> (d % 64)) & 1 == 1 { 1.0 } else { -1.0 }).collect());
    }
    points
}

fn grow(rng: &mut impl Rng, vars: usize, depth: usize) -> Expr {
    let leaf = |rng: &mut _| {
        if vars > 0 && Rng::random_bool(rng, 0.7) {
            Expr::Var(Rng::random_range(rng, 0..vars))
        } else {
            Expr::Num(LITERALS[Rng::random_range(rng, 0..LITERALS.len())])
        }
    };
    if depth == 0 || rng.random_bool(0.2) {
        return leaf(rng);
    }
    let e = node(rng, vars, depth);
    if vars > 0 && e.max_var().is_none() {
        leaf(rng)
    } else {
        e
    }
}

fn node(rng: &mut impl Rng, vars: usize, depth: usize) -> Expr {
    let sub = |rng: &mut _| grow(rng, vars, depth - 1);
    match rng.random_range(0..11) {
        0 => Expr::Add(boxed(sub(rng)), boxed(sub(rng))),
        1 => Expr::Sub(boxed(sub(rng)), boxed(sub(rng))),
        2 | 3 => Expr::Mul(boxed(sub(rng)), boxed(sub(rng))),
        4 => {
            let num = sub(rng);
            let den = positive(sub(rng), rng);
            Expr::Div(boxed(num), boxed(den))
        }
        5 => Expr::Neg(boxed(sub(rng))),
        6 => {
            let k = [2.0, 3.0][rng.random_range(0..2)];
            Expr::Pow(boxed(sub(rng)), boxed(Expr::Num(k)))
        }
        7 => {
            let k = [-1.0, 0.5, -0.5, 1.5][rng.random_range(0..4)];
            let base = positive(sub(rng), rng);
            Expr::Pow(boxed(base), boxed(Expr::Num(k)))
        }
        8 => {
            let f = [Func::Ln, Func::Sqrt][rng.random_range(0..2)];
            let arg = positive(sub(rng), rng);
            Expr::Call(f, boxed(arg))
        }
        9 => {
            let f = [Func::Sin, Func::Cos, Func::Tanh][rng.random_range(0..3)];
            Expr::Call(f, boxed(sub(rng)))
        }
        _ => {
            let f = [Func::Exp, Func::Sinh, Func::Cosh][rng.random_range(0..3)];
            let arg = Expr::Call(Func::Tanh, boxed(sub(rng)));
            Expr::Call(f, boxed(arg))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_expressions_are_finite_on_the_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let e = random_expr(&mut rng, 3, 4);
            let u: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let j = e.eval(&u).unwrap();
            assert!(j.value().is_finite());
            assert!(j.hess_dense().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn constants_are_folded_into_leaves_and_values_stay_moderate() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..300 {
            let e = random_expr(&mut rng, 2, 5);
            assert!(e.is_literal() || e.max_var().is_some());
            for u in probe_points(2) {
                assert!(e.eval_value(&u).unwrap().abs() <= MAGNITUDE);
            }
        }
    }
}
