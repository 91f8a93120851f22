//! Changes of transversal field `C̄ = ΦC + f_*Z` and the constructive gauges
//! that make the induced structure parallel.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::exprlang::{add, mul, Expr, HermiteTable, ImmersionSpec, TableRef};
use crate::jets::JetError;
use crate::paraframe::{geometry_at, GeometryError, InducedObjects, ParacontactFrame};
use crate::tensor::Tensor3;
use crate::tensorcalc::{point_tensors, PointTensors, TensorOptions};
use crate::verify::grid::Grid;
use crate::verify::map_points;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GaugeError {
    #[error("gauge has {found} Z components, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("Φ vanishes at {0:?}")]
    PhiVanishes(Vec<f64>),
    #[error("Z leaves D at {point:?}: η(Z) = {eta_z:e}")]
    ZLeavesD { point: Vec<f64>, eta_z: f64 },
    #[error("evaluating the gauge failed: {0}")]
    Evaluation(#[from] JetError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("precondition failed: {what} = {value:e} at {point:?}")]
    Precondition { what: String, value: f64, point: Vec<f64> },
    #[error("postcondition failed on the gauged spec: {what} = {value:e} at {point:?}")]
    Postcondition { what: String, value: f64, point: Vec<f64> },
    #[error("{what} varies across the x directions by {deviation:e} at {point:?}")]
    NotTransverseConstant { what: String, deviation: f64, point: Vec<f64> },
    #[error("quadrature did not converge: panel doubling changed a coefficient by {change:e}")]
    Quadrature { change: f64 },
    #[error("invalid gauged spec: {0}")]
    Spec(String),
}

/// A transversal change `C̄ = ΦC + f_*Z` given by expressions in the spec's
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeChange {
    pub phi: Expr,
    pub z: Vec<Expr>,
}

/// Values and first derivatives of a gauge at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeValues {
    pub phi: f64,
    pub dphi: DVector<f64>,
    pub z: DVector<f64>,
    /// `dz[(k, i)] = ∂_i Z^k`.
    pub dz: DMatrix<f64>,
}

impl GaugeChange {
    pub fn identity(dim: usize) -> Self {
        GaugeChange { phi: Expr::Num(1.0), z: vec![Expr::Num(0.0); dim] }
    }

    /// Exact values and derivatives from jets.
    pub fn at(&self, u: &[f64]) -> Result<GaugeValues, GaugeError> {
        let m = u.len();
        if self.z.len() != m {
            return Err(GaugeError::Dimension { expected: m, found: self.z.len() });
        }
        let jp = self.phi.eval(u)?;
        let mut z = DVector::zeros(m);
        let mut dz = DMatrix::zeros(m, m);
        for (k, e) in self.z.iter().enumerate() {
            let j = e.eval(u)?;
            z[k] = j.value();
            for i in 0..m {
                dz[(k, i)] = j.grad()[i];
            }
        }
        Ok(GaugeValues { phi: jp.value(), dphi: DVector::from_column_slice(jp.grad()), z, dz })
    }
}

/// Transforms induced objects and the paracontact structure under a gauge
/// evaluated at `u`.
pub fn transform_induced(
    objs: &InducedObjects,
    pc: &ParacontactFrame,
    g: &GaugeChange,
    u: &[f64],
    tol: f64,
    rank_tol: f64,
) -> Result<(InducedObjects, ParacontactFrame), GaugeError> {
    let m = objs.dim();
    let gv = g.at(u)?;
    if gv.phi == 0.0 || !gv.phi.is_finite() {
        return Err(GaugeError::PhiVanishes(u.to_vec()));
    }
    let eta_z = pc.eta.dot(&gv.z);
    if eta_z.abs() > tol * (1.0 + gv.z.norm()) {
        return Err(GaugeError::ZLeavesD { point: u.to_vec(), eta_z });
    }
    let (phi, z) = (gv.phi, &gv.z);
    let h = &objs.h / phi;
    let gamma = Tensor3::from_fn(m, |k, i, j| objs.gamma[(k, i, j)] - objs.h[(i, j)] * z[k] / phi);
    let hz = objs.h.transpose() * z;
    let tau = DVector::from_fn(m, |i, _| objs.tau[i] + hz[i] / phi + gv.dphi[i] / phi);
    let s = DMatrix::from_fn(m, m, |k, i| {
        let nabla_z = gv.dz[(k, i)] + (0..m).map(|l| objs.gamma[(k, i, l)] * z[l]).sum::<f64>();
        phi * objs.s[(k, i)] - nabla_z + tau[i] * z[k]
    });
    let induced = InducedObjects { gamma, h, s, tau, residual: objs.residual };

    let xi = &pc.xi * phi + &pc.phi * z;
    let eta = &pc.eta / phi;
    let phi_bar = &pc.phi - z * pc.eta.transpose() / phi;
    let frame = ParacontactFrame::from_parts(xi, eta, phi_bar, pc.jtangency_residual, rank_tol)?;
    Ok((induced, frame))
}

/// Spec with `C̄_a = Φ C_a + Σ_i Z^i ∂_i f_a`, assembled symbolically.
pub fn apply_gauge(spec: &ImmersionSpec, g: &GaugeChange) -> Result<ImmersionSpec, GaugeError> {
    let m = spec.dim();
    if g.z.len() != m {
        return Err(GaugeError::Dimension { expected: m, found: g.z.len() });
    }
    if let Some(v) = g.phi.max_var().into_iter().chain(g.z.iter().filter_map(Expr::max_var)).find(|&v| v >= m) {
        return Err(GaugeError::Spec(format!("gauge references variable index {v}")));
    }
    let probe = Grid::halton(spec.domain(), 16, 0, 1e-4, 0.0);
    for u in &probe.points {
        let phi = g.phi.eval_value(u)?;
        if phi == 0.0 || !phi.is_finite() {
            return Err(GaugeError::PhiVanishes(u.clone()));
        }
    }
    let c = spec
        .f()
        .iter()
        .zip(spec.c())
        .map(|(fa, ca)| {
            let mut acc = mul(g.phi.clone(), ca.clone());
            for (i, zi) in g.z.iter().enumerate() {
                acc = add(acc, mul(zi.clone(), fa.diff(i)));
            }
            acc
        })
        .collect();
    spec.with_transversal(c).map_err(|e| GaugeError::Spec(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeOptions {
    pub tensor: TensorOptions,
    /// Points used for precondition and postcondition sampling.
    pub grid_points: usize,
    pub seed: u64,
    pub tol_alg: f64,
    pub tol_fd: f64,
    /// Allowed variation of `p_i` and `β` across the `x` directions.
    pub transverse_tol: f64,
    /// Simpson panels over the `y` interval.
    pub panels: usize,
    /// Allowed change of any coefficient under panel doubling.
    pub convergence_tol: f64,
}

impl Default for GaugeOptions {
    fn default() -> Self {
        GaugeOptions {
            tensor: TensorOptions::default(),
            grid_points: 24,
            seed: 0,
            tol_alg: 1e-9,
            tol_fd: 1e-6,
            transverse_tol: 1e-6,
            panels: 512,
            convergence_tol: 1e-8,
        }
    }
}

impl GaugeOptions {
    fn grid(&self, spec: &ImmersionSpec) -> Grid {
        Grid::halton(spec.domain(), self.grid_points, self.seed, self.tensor.fd.rel_step, 4.0)
    }
}

fn sample_tensors(spec: &ImmersionSpec, opts: &GaugeOptions) -> Result<Vec<PointTensors>, GaugeError> {
    let grid = opts.grid(spec);
    map_points(&grid.points, |u| point_tensors(spec, u, &opts.tensor))
        .into_iter()
        .map(|r| r.map_err(GaugeError::from))
        .collect()
}

fn require(pt: &PointTensors) -> Result<&ParacontactFrame, GaugeError> {
    pt.geometry.paracontact.as_ref().map_err(|e| GaugeError::Geometry(e.clone()))
}

fn para_columns(spec: &ImmersionSpec, ambient_src: impl Fn(usize) -> Expr) -> Vec<Expr> {
    let ambient = spec.ambient_dim();
    let half = ambient / 2;
    (0..ambient).map(|a| ambient_src((a + half) % ambient)).collect()
}

/// Largest violation of the adapted-coordinate conditions: `ξ = ∂_y` and
/// `∇_{∂x_i} ∂_{x_j} = ∇_{∂x_i} ∂_y = 0`, as `(what, value)`.
fn adapted_violation(pt: &PointTensors) -> Result<(String, f64), GaugeError> {
    let pc = require(pt)?;
    let m = pt.dim();
    let mut worst = (String::from("|ξ - ∂_y|"), 0.0f64);
    let mut bump = |what: &str, v: f64| {
        if v > worst.1 {
            worst = (what.to_string(), v);
        }
    };
    let mut e_y = DVector::zeros(m);
    e_y[m - 1] = 1.0;
    bump("|ξ - ∂_y|", (&pc.xi - e_y).amax());
    let g = pt.gamma();
    for i in 0..m - 1 {
        for j in 0..m {
            for k in 0..m {
                bump("Γ on coordinate pairs involving x", g[(k, i, j)].abs());
            }
        }
    }
    Ok(worst)
}

/// Gauge `C̄ = C + f_*(φZ)` with `Z = ∂_y − ξ`, making `ξ̄ = ∂_y`.
///
/// Requires `∇η = 0` and `η(∂_y) = 1` on the sampled points. Since
/// `f_*(φZ) = J̃ f_*Z` for `Z ∈ D`, the result is `C̄ = J̃ f_y`, built
/// symbolically. The output is verified to satisfy `ξ̄ = ∂_y`, `∇̄η̄ = 0`
/// and vanishing connection on coordinate pairs involving an `x` direction.
pub fn eta_parallel_gauge(spec: &ImmersionSpec, opts: &GaugeOptions) -> Result<ImmersionSpec, GaugeError> {
    let m = spec.dim();
    let samples = sample_tensors(spec, opts)?;
    let mut already = true;
    for pt in &samples {
        let pc = require(pt)?;
        let ne = pt.nabla_eta().expect("paracontact present").amax();
        if ne > opts.tol_fd {
            return Err(GaugeError::Precondition { what: "max |∇η|".into(), value: ne, point: pt.point.clone() });
        }
        let eta_y = pc.eta[m - 1];
        if (eta_y - 1.0).abs() > opts.tol_alg {
            return Err(GaugeError::Precondition {
                what: "η(∂_y) (rescale y by this factor)".into(),
                value: eta_y,
                point: pt.point.clone(),
            });
        }
        let mut e_y = DVector::zeros(m);
        e_y[m - 1] = 1.0;
        already &= (&pc.xi - e_y).amax() <= opts.tol_alg;
    }
    if already {
        return Ok(spec.clone());
    }

    let c = para_columns(spec, |a| spec.f()[a].diff(m - 1));
    let out = spec.with_transversal(c).map_err(|e| GaugeError::Spec(e.to_string()))?;
    for pt in sample_tensors(&out, opts)? {
        let (what, value) = adapted_violation(&pt)?;
        if value > opts.tol_alg {
            return Err(GaugeError::Postcondition { what, value, point: pt.point.clone() });
        }
        let ne = pt.nabla_eta().expect("paracontact present").amax();
        if ne > opts.tol_fd {
            return Err(GaugeError::Postcondition { what: "max |∇̄η̄|".into(), value: ne, point: pt.point.clone() });
        }
    }
    Ok(out)
}

/// Sampled data of the parallelising coefficients along `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureTable {
    /// Knots `y_k`, uniform.
    pub y: Vec<f64>,
    /// `B(y_k) = ∫ β` from the left endpoint, `β = h̄(∂_y, ∂_y)`.
    pub beta_integral: Vec<f64>,
    /// Per coefficient, `∫ p_i e^{∓B}` at the knots.
    pub integrals: Vec<Vec<f64>>,
    /// Per coefficient, the interpolated `a_i` with knot derivatives.
    pub coefficients: Vec<HermiteTable>,
}

/// Fourth-order first derivative of uniformly spaced samples.
fn derivative_samples(f: &[f64], s: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5);
    (0..n)
        .map(|j| {
            let d = if j >= 2 && j + 2 < n {
                f[j - 2] - 8.0 * f[j - 1] + 8.0 * f[j + 1] - f[j + 2]
            } else if j == 0 {
                -25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]
            } else if j == 1 {
                -3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]
            } else if j == n - 1 {
                25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4] + 3.0 * f[n - 5]
            } else {
                3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5]
            };
            d / (12.0 * s)
        })
        .collect()
}

/// `p_i = Γ^{x_i}_{yy}` and `β = h_yy` along the line through the centre of
/// the `x` box, at half-panel spacing.
fn line_samples(spec: &ImmersionSpec, panels: usize, opts: &GaugeOptions) -> Result<(Vec<Vec<f64>>, Vec<f64>), GaugeError> {
    let m = spec.dim();
    let iv = spec.domain()[m - 1];
    let centre: Vec<f64> = spec.domain().iter().map(|d| d.center()).collect();
    let pts: Vec<Vec<f64>> = (0..=2 * panels)
        .map(|j| {
            let mut u = centre.clone();
            u[m - 1] = iv.lo + iv.width() * j as f64 / (2 * panels) as f64;
            u
        })
        .collect();
    let geo = map_points(&pts, |u| geometry_at(spec, u, &opts.tensor.frame));
    let mut p = vec![Vec::with_capacity(pts.len()); m - 1];
    let mut beta = Vec::with_capacity(pts.len());
    for g in geo {
        let g = g?;
        for (i, pi) in p.iter_mut().enumerate() {
            pi.push(g.induced.gamma[(i, m - 1, m - 1)]);
        }
        beta.push(g.induced.h[(m - 1, m - 1)]);
    }
    Ok((p, beta))
}

/// Builds the coefficient tables `a_i = −e^{±B} ∫ p_i e^{∓B}` with `+` for
/// the `D+` directions and `−` for the `D−` directions.
pub fn quadrature_table(spec: &ImmersionSpec, panels: usize, opts: &GaugeOptions) -> Result<QuadratureTable, GaugeError> {
    let m = spec.dim();
    let n = spec.n();
    let iv = spec.domain()[m - 1];
    let dy = iv.width() / panels as f64;
    let (p, beta) = line_samples(spec, panels, opts)?;
    let dbeta = derivative_samples(&beta, 0.5 * dy);

    // B at every half-panel sample.
    let mut big_b = vec![0.0; 2 * panels + 1];
    for k in 0..panels {
        let (f0, fh, f1) = (beta[2 * k], beta[2 * k + 1], beta[2 * k + 2]);
        big_b[2 * k + 1] = big_b[2 * k] + dy / 24.0 * (5.0 * f0 + 8.0 * fh - f1);
        big_b[2 * k + 2] = big_b[2 * k] + dy / 6.0 * (f0 + 4.0 * fh + f1);
    }

    let y: Vec<f64> = (0..=panels).map(|k| iv.lo + k as f64 * dy).collect();
    let mut integrals = Vec::with_capacity(2 * n);
    let mut coefficients = Vec::with_capacity(2 * n);
    for (i, pi) in p.iter().enumerate() {
        let sign = if i < n { 1.0 } else { -1.0 };
        let dp = derivative_samples(pi, 0.5 * dy);
        let q: Vec<f64> = pi.iter().zip(&big_b).map(|(pv, b)| pv * (-sign * b).exp()).collect();
        let mut acc = vec![0.0; panels + 1];
        for k in 0..panels {
            acc[k + 1] = acc[k] + dy / 6.0 * (q[2 * k] + 4.0 * q[2 * k + 1] + q[2 * k + 2]);
        }
        let knots: Vec<[f64; 3]> = (0..=panels)
            .map(|k| {
                let j = 2 * k;
                let a = -(sign * big_b[j]).exp() * acc[k];
                let da = sign * beta[j] * a - pi[j];
                let dda = sign * (dbeta[j] * a + beta[j] * da) - dp[j];
                [a, da, dda]
            })
            .collect();
        integrals.push(acc);
        coefficients.push(HermiteTable::new(format!("a{}", i + 1), iv.lo, iv.hi, knots).expect("finite samples"));
    }
    let beta_integral = (0..=panels).map(|k| big_b[2 * k]).collect();
    Ok(QuadratureTable { y, beta_integral, integrals, coefficients })
}

fn unique_table_name(spec: &ImmersionSpec, base: &str) -> String {
    let taken = |s: &str| spec.vars().iter().any(|v| v == s) || spec.tables().iter().any(|t| t.name() == s);
    if !taken(base) {
        return base.to_string();
    }
    (2..).map(|k| format!("{base}_{k}")).find(|s| !taken(s)).expect("unbounded search")
}

/// Gauge `C̄̄ = C̄ + f_*(φZ)` with `Z = Σ a_i(y) ∂_{x_i}` making `φ`, `η` and
/// `ξ` all parallel.
///
/// The input must satisfy the adapted-coordinate conditions produced by
/// [`eta_parallel_gauge`]: `ξ = ∂_y`, `∇η = 0`, vanishing connection on pairs
/// involving an `x` direction, `∂_{x_i} ∈ D+` for `i ≤ n` and `∈ D−` after.
pub fn full_parallel_gauge(spec: &ImmersionSpec, opts: &GaugeOptions) -> Result<ImmersionSpec, GaugeError> {
    let m = spec.dim();
    let n = spec.n();
    let y = m - 1;
    let samples = sample_tensors(spec, opts)?;
    for pt in &samples {
        let pc = require(pt)?;
        let (what, value) = adapted_violation(pt)?;
        if value > opts.tol_alg {
            return Err(GaugeError::Precondition { what, value, point: pt.point.clone() });
        }
        for i in 0..2 * n {
            let sign = if i < n { 1.0 } else { -1.0 };
            let dev = (0..m)
                .map(|k| (pc.phi[(k, i)] - if k == i { sign } else { 0.0 }).abs())
                .fold(0.0, f64::max);
            if dev > opts.tol_alg {
                return Err(GaugeError::Precondition {
                    what: format!("|φ∂_x{} ∓ ∂_x{}|", i + 1, i + 1),
                    value: dev,
                    point: pt.point.clone(),
                });
            }
        }
        let ne = pt.nabla_eta().expect("paracontact present").amax();
        if ne > opts.tol_fd {
            return Err(GaugeError::Precondition { what: "max |∇η|".into(), value: ne, point: pt.point.clone() });
        }
    }

    // p_i and β must depend on y only.
    let centre: Vec<f64> = spec.domain().iter().map(|d| d.center()).collect();
    for pt in &samples {
        let mut on_line = centre.clone();
        on_line[y] = pt.point[y];
        let line = geometry_at(spec, &on_line, &opts.tensor.frame)?;
        let dev_beta = (pt.h()[(y, y)] - line.induced.h[(y, y)]).abs();
        if dev_beta > opts.transverse_tol {
            return Err(GaugeError::NotTransverseConstant {
                what: "h(∂_y, ∂_y)".into(),
                deviation: dev_beta,
                point: pt.point.clone(),
            });
        }
        for i in 0..2 * n {
            let dev = (pt.gamma()[(i, y, y)] - line.induced.gamma[(i, y, y)]).abs();
            if dev > opts.transverse_tol {
                return Err(GaugeError::NotTransverseConstant {
                    what: format!("p_{}", i + 1),
                    deviation: dev,
                    point: pt.point.clone(),
                });
            }
        }
    }

    let table = quadrature_table(spec, opts.panels, opts)?;
    let scale = table
        .coefficients
        .iter()
        .flat_map(|t| t.knots().iter().map(|k| k[0].abs().max(k[1].abs())))
        .fold(0.0, f64::max);
    if scale <= opts.tol_alg {
        return Ok(spec.clone());
    }
    let fine = quadrature_table(spec, 2 * opts.panels, opts)?;
    let change = table
        .coefficients
        .iter()
        .zip(&fine.coefficients)
        .flat_map(|(c, f)| c.knots().iter().zip(f.knots().iter().step_by(2)).map(|(a, b)| (a[0] - b[0]).abs()))
        .fold(0.0, f64::max);
    if change > opts.convergence_tol * (1.0 + scale) {
        return Err(GaugeError::Quadrature { change });
    }

    let nodes: Vec<Expr> = table
        .coefficients
        .into_iter()
        .map(|t| {
            let name = unique_table_name(spec, &format!("gauge_{}", t.name()));
            Expr::Table(TableRef { table: Arc::new(t.with_name(name)), order: 0 }, Box::new(Expr::Var(y)))
        })
        .collect();
    let ambient = spec.ambient_dim();
    let half = ambient / 2;
    let c: Vec<Expr> = (0..ambient)
        .map(|a| {
            let src = &spec.f()[(a + half) % ambient];
            nodes.iter().enumerate().fold(spec.c()[a].clone(), |acc, (i, node)| add(acc, mul(node.clone(), src.diff(i))))
        })
        .collect();
    let out = spec.with_transversal(c).map_err(|e| GaugeError::Spec(e.to_string()))?;

    for pt in sample_tensors(&out, opts)? {
        for (what, value) in [
            ("max |∇φ|", pt.nabla_phi().map(|t| t.max_abs())),
            ("max |∇η|", pt.nabla_eta().map(|t| t.amax())),
            ("max |∇ξ|", pt.nabla_xi().map(|t| t.amax())),
        ] {
            let value = value.unwrap_or(f64::INFINITY);
            if value > opts.tol_fd {
                return Err(GaugeError::Postcondition { what: what.into(), value, point: pt.point.clone() });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::{parse_expr, Func};
    use crate::families::{builtin_example, shifted_family, FamilyOptions, FamilyParams};
    use crate::paraframe::{frame_at, induced_at, paracontact_at};

    fn vars() -> Vec<String> {
        ["x", "y", "z"].iter().map(|s| s.to_string()).collect()
    }

    fn expr(t: &str) -> Expr {
        parse_expr(t, &vars()).unwrap()
    }

    #[test]
    fn identity_gauge_is_identity() {
        let spec = builtin_example("example_4_6").unwrap();
        let g = GaugeChange::identity(3);
        let out = apply_gauge(&spec, &g).unwrap();
        assert_eq!(out, spec);
        let fr = frame_at(&spec, &[0.2, 0.1, -0.3]).unwrap();
        let (ind, pc) = (induced_at(&fr), paracontact_at(&fr).unwrap());
        let (ind2, pc2) = transform_induced(&ind, &pc, &g, &fr.point, 1e-9, 1e-8).unwrap();
        assert_eq!(ind2, ind);
        assert_eq!((pc2.xi, pc2.eta, pc2.phi), (pc.xi, pc.eta, pc.phi));
    }

    #[test]
    fn example_gauge_gives_displayed_field() {
        let spec = builtin_example("example_4_6").unwrap();
        let g = GaugeChange { phi: Expr::Num(1.0), z: vec![expr("-x"), Expr::Num(0.0), Expr::Num(0.0)] };
        let out = apply_gauge(&spec, &g).unwrap();
        let u = [0.3, -0.4, 0.7];
        let c: Vec<f64> = out.c().iter().map(|e| e.eval_value(&u).unwrap()).collect();
        let expect = [0.0, 0.7f64.sinh(), 0.0, 0.7f64.cosh()];
        for (a, b) in c.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let fr = frame_at(&spec, &u).unwrap();
        let (ind, pc) = (induced_at(&fr), paracontact_at(&fr).unwrap());
        let (_, pc2) = transform_induced(&ind, &pc, &g, &u, 1e-9, 1e-8).unwrap();
        assert!((&pc2.xi - DVector::from_vec(vec![0.0, 0.0, 1.0])).amax() < 1e-14);
    }

    #[test]
    fn scaling_divides_h() {
        let spec = builtin_example("example_4_13").unwrap();
        let g = GaugeChange { phi: Expr::Num(2.0), z: vec![Expr::Num(0.0); 3] };
        let u = [1.0, 1.5, 0.2];
        let fr = frame_at(&spec, &u).unwrap();
        let (ind, pc) = (induced_at(&fr), paracontact_at(&fr).unwrap());
        let (ind2, _) = transform_induced(&ind, &pc, &g, &u, 1e-9, 1e-8).unwrap();
        assert!((ind2.h * 2.0 - &ind.h).amax() < 1e-15);
    }

    #[test]
    fn gauge_outside_d_is_rejected() {
        let spec = builtin_example("example_4_6").unwrap();
        let g = GaugeChange { phi: Expr::Num(1.0), z: vec![Expr::Num(0.0), Expr::Num(0.0), Expr::Num(1.0)] };
        let u = [0.1, 0.1, 0.1];
        let fr = frame_at(&spec, &u).unwrap();
        let (ind, pc) = (induced_at(&fr), paracontact_at(&fr).unwrap());
        assert!(matches!(
            transform_induced(&ind, &pc, &g, &u, 1e-9, 1e-8),
            Err(GaugeError::ZLeavesD { .. })
        ));
        let zero = GaugeChange { phi: expr("x"), z: vec![Expr::Num(0.0); 3] };
        assert!(matches!(apply_gauge(&spec, &zero), Ok(_) | Err(GaugeError::PhiVanishes(_))));
        assert!(matches!(
            transform_induced(&ind, &pc, &zero, &[0.0, 0.1, 0.1], 1e-9, 1e-8),
            Err(GaugeError::PhiVanishes(_))
        ));
    }

    #[test]
    fn eta_normalisation_of_example() {
        let spec = builtin_example("example_4_6").unwrap();
        let out = eta_parallel_gauge(&spec, &GaugeOptions::default()).unwrap();
        let shown: Vec<String> = out.c().iter().map(|e| e.display(out.vars()).to_string()).collect();
        assert_eq!(shown, ["0", "sinh(z)", "0", "cosh(z)"]);
        let again = eta_parallel_gauge(&out, &GaugeOptions::default()).unwrap();
        assert_eq!(again, out);
        let err = eta_parallel_gauge(&builtin_example("example_4_13").unwrap(), &GaugeOptions::default());
        assert!(matches!(err, Err(GaugeError::Precondition { .. })), "{err:?}");
    }

    #[test]
    fn full_parallel_identity_on_parallel_input() {
        let spec = builtin_example("example_4_6_bar").unwrap();
        let out = full_parallel_gauge(&spec, &GaugeOptions::default()).unwrap();
        assert_eq!(out, spec);
    }

    #[test]
    fn full_parallel_repairs_shifted_family() {
        let y = |t: &str| parse_expr(t, &["y".to_string()]).unwrap();
        let p = FamilyParams {
            n: 1,
            b: vec![vec![1.0, 0.5, 1.0, 0.5], vec![0.3, -1.0, -0.3, 1.0]],
            v: vec![0.2, 1.0, -0.4, 0.1],
            alpha: y("y / 2 + 0.3"),
        };
        let shifts = [y("y^3 / 3"), Expr::Call(Func::Sin, Box::new(Expr::Var(0)))];
        let spec = shifted_family(&p, &shifts, &FamilyOptions::default()).unwrap();
        let opts = GaugeOptions::default();
        let before = sample_tensors(&spec, &opts).unwrap();
        assert!(before.iter().any(|pt| pt.nabla_xi().unwrap().amax() > 1e-2));
        let out = full_parallel_gauge(&spec, &opts).unwrap();
        assert_eq!(out.tables().len(), 2);
    }

    #[test]
    fn transformed_objects_match_recomputation() {
        let spec = builtin_example("example_4_13").unwrap();
        let fr = frame_at(&spec, &[1.2, 0.9, 0.3]).unwrap();
        let pc = paracontact_at(&fr).unwrap();
        // Z = w - η(w) ξ lies in D for any w.
        let w = [expr("x * z"), expr("y^2"), expr("sin(z)")];
        let u = fr.point.clone();
        let wv: Vec<f64> = w.iter().map(|e| e.eval_value(&u).unwrap()).collect();
        let eta_w: f64 = pc.eta.iter().zip(&wv).map(|(a, b)| a * b).sum();
        let z: Vec<Expr> = w
            .iter()
            .enumerate()
            .map(|(k, e)| crate::exprlang::sub(e.clone(), Expr::Num(eta_w * pc.xi[k])))
            .collect();
        let g = GaugeChange { phi: expr("1 + x * y / 4"), z };
        // Z is only in D at this point, so compare only pointwise quantities.
        let (ind2, pc2) = transform_induced(&induced_at(&fr), &pc, &g, &u, 1e-9, 1e-8).unwrap();
        let out = apply_gauge(&spec, &g).unwrap();
        let fr2 = frame_at(&out, &u).unwrap();
        let (ind3, pc3) = (induced_at(&fr2), paracontact_at(&fr2).unwrap());
        assert!((&ind2.h - &ind3.h).amax() < 1e-8);
        assert!((&ind2.tau - &ind3.tau).amax() < 1e-8);
        assert!((&ind2.s - &ind3.s).amax() < 1e-8);
        for (a, b) in ind2.gamma.as_slice().iter().zip(ind3.gamma.as_slice()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((&pc2.xi - &pc3.xi).amax() < 1e-8);
        assert!((&pc2.eta - &pc3.eta).amax() < 1e-8);
        assert!((&pc2.phi - &pc3.phi).amax() < 1e-8);
    }

    #[test]
    fn derivative_samples_are_fourth_order() {
        let s = 0.01;
        let f: Vec<f64> = (0..40).map(|k| (k as f64 * s).sin()).collect();
        let d = derivative_samples(&f, s);
        for (k, v) in d.iter().enumerate() {
            assert!((v - (k as f64 * s).cos()).abs() < 1e-8, "k={k}");
        }
    }
}
