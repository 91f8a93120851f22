//! Covariant derivatives, curvature and `dτ` of the induced objects.
//!
//! Pointwise objects come from exact jets; their first derivatives come from
//! central differences with one Richardson level. Index layouts:
//! `nabla_phi[(i, k, j)]` is `((∇_i φ) ∂_j)^k`, `nabla_eta[(i, j)]` is
//! `(∇_i η)(∂_j)`, `nabla_xi[(i, k)]` is `(∇_i ξ)^k`, `nabla_h[(i, j, k)]` is
//! `(∇_i h)(∂_j, ∂_k)`, `nabla_s[(i, k, j)]` is `((∇_i S) ∂_j)^k`, and
//! `r[(l, k, i, j)]` is `(R(∂_i, ∂_j) ∂_k)^l`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::exprlang::{parse_immersion, ImmersionSpec, Interval};
use crate::paraframe::{geometry_at, FrameOptions, GeometryError, ParacontactFrame, PointGeometry};
use crate::tensor::{Tensor3, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    /// Step is `rel_step * (1 + |u_dir|)`.
    pub rel_step: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions { rel_step: 1e-4 }
    }
}

impl FdOptions {
    pub fn step_at(&self, x: f64) -> f64 {
        self.rel_step * (1.0 + x.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TensorOptions {
    pub frame: FrameOptions,
    pub fd: FdOptions,
}

fn stencil_step(u: &[f64], dir: usize, domain: &[Interval], opts: &FdOptions) -> Result<f64, GeometryError> {
    let mut h = opts.step_at(u[dir]);
    if let Some(iv) = domain.get(dir) {
        h = h.min(u[dir] - iv.lo).min(iv.hi - u[dir]);
    }
    if !(h > 0.0) {
        return Err(GeometryError::NoStencilRoom { dir, point: u.to_vec() });
    }
    Ok(h)
}

/// Derivative of a vector-valued field along coordinate `dir`.
///
/// An empty `domain` means unbounded; otherwise the step shrinks to keep the
/// stencil inside the box.
pub fn d_field_vec(
    field: impl Fn(&[f64]) -> Result<Vec<f64>, GeometryError>,
    u: &[f64],
    dir: usize,
    domain: &[Interval],
    opts: &FdOptions,
) -> Result<Vec<f64>, GeometryError> {
    let h = stencil_step(u, dir, domain, opts)?;
    let at = |offset: f64| {
        let mut p = u.to_vec();
        p[dir] += offset;
        field(&p)
    };
    let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(0.5 * h)?, at(-0.5 * h)?);
    Ok((0..p1.len())
        .map(|k| {
            let coarse = (p1[k] - m1[k]) / (2.0 * h);
            let fine = (p2[k] - m2[k]) / h;
            (4.0 * fine - coarse) / 3.0
        })
        .collect())
}

pub fn d_field(
    field: impl Fn(&[f64]) -> Result<f64, GeometryError>,
    u: &[f64],
    dir: usize,
    domain: &[Interval],
    opts: &FdOptions,
) -> Result<f64, GeometryError> {
    d_field_vec(|p| field(p).map(|v| vec![v]), u, dir, domain, opts).map(|v| v[0])
}

/// A tangent vector field known to first order at a point: value and
/// Jacobian `jac[(k, i)] = ∂_i X^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub value: DVector<f64>,
    pub jac: DMatrix<f64>,
}

impl VectorField {
    pub fn coordinate(dim: usize, i: usize) -> Self {
        VectorField { value: DVector::from_fn(dim, |k, _| if k == i { 1.0 } else { 0.0 }), jac: DMatrix::zeros(dim, dim) }
    }

    /// `a · ∂_i` for a function with value `a` and gradient `grad`.
    pub fn scaled_coordinate(i: usize, a: f64, grad: &DVector<f64>) -> Self {
        let m = grad.len();
        let mut f = VectorField::coordinate(m, i);
        f.value[i] = a;
        f.jac.set_row(i, &grad.transpose());
        f
    }

    /// Lie bracket `[X, Y]` (value only).
    pub fn bracket(&self, other: &VectorField) -> DVector<f64> {
        &other.jac * &self.value - &self.jac * &other.value
    }

    /// Derivative of a scalar field with gradient `grad` along `X`.
    pub fn apply(&self, grad: &DVector<f64>) -> f64 {
        self.value.dot(grad)
    }
}

/// Derivatives of the paracontact objects, one entry per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParacontactDerivatives {
    pub d_xi: Vec<DVector<f64>>,
    pub d_eta: Vec<DVector<f64>>,
    pub d_phi: Vec<DMatrix<f64>>,
}

/// Pointwise geometry with first derivatives of every induced field.
#[derive(Debug, Clone)]
pub struct PointTensors {
    pub point: Vec<f64>,
    pub geometry: PointGeometry,
    /// `d_gamma[i]` is `∂_i Γ`.
    pub d_gamma: Vec<Tensor3>,
    pub d_h: Vec<DMatrix<f64>>,
    pub d_s: Vec<DMatrix<f64>>,
    pub d_tau: Vec<DVector<f64>>,
    /// Present when `C` is J̃-tangent at the point.
    pub d_para: Option<ParacontactDerivatives>,
}

fn flatten(g: &PointGeometry, with_para: bool) -> Result<Vec<f64>, GeometryError> {
    let ind = &g.induced;
    let mut out: Vec<f64> = ind.gamma.as_slice().to_vec();
    out.extend(ind.h.iter());
    out.extend(ind.s.iter());
    out.extend(ind.tau.iter());
    if with_para {
        let pc = g.paracontact.as_ref().map_err(Clone::clone)?;
        out.extend(pc.xi.iter());
        out.extend(pc.eta.iter());
        out.extend(pc.phi.iter());
    }
    Ok(out)
}

pub fn point_tensors(spec: &ImmersionSpec, u: &[f64], opts: &TensorOptions) -> Result<PointTensors, GeometryError> {
    let geometry = geometry_at(spec, u, &opts.frame)?;
    let m = spec.dim();
    let with_para = geometry.paracontact.is_ok();
    let field = |p: &[f64]| flatten(&geometry_at(spec, p, &opts.frame)?, with_para);

    let mut d_gamma = Vec::with_capacity(m);
    let mut d_h = Vec::with_capacity(m);
    let mut d_s = Vec::with_capacity(m);
    let mut d_tau = Vec::with_capacity(m);
    let mut para = ParacontactDerivatives { d_xi: vec![], d_eta: vec![], d_phi: vec![] };
    for dir in 0..m {
        let d = d_field_vec(field, u, dir, spec.domain(), &opts.fd)?;
        let mut rest = d.as_slice();
        let mut take = |len: usize| {
            let (head, tail) = rest.split_at(len);
            rest = tail;
            head.to_vec()
        };
        d_gamma.push(Tensor3::from_vec(m, take(m * m * m)));
        d_h.push(DMatrix::from_vec(m, m, take(m * m)));
        d_s.push(DMatrix::from_vec(m, m, take(m * m)));
        d_tau.push(DVector::from_vec(take(m)));
        if with_para {
            para.d_xi.push(DVector::from_vec(take(m)));
            para.d_eta.push(DVector::from_vec(take(m)));
            para.d_phi.push(DMatrix::from_vec(m, m, take(m * m)));
        }
    }
    Ok(PointTensors {
        point: u.to_vec(),
        geometry,
        d_gamma,
        d_h,
        d_s,
        d_tau,
        d_para: with_para.then_some(para),
    })
}

/// Curvature of the induced connection, antisymmetric in its last two slots.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureTensor {
    pub r: Tensor4,
}

impl CurvatureTensor {
    /// `R(X, Y) Z`.
    pub fn apply(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let m = x.len();
        DVector::from_fn(m, |l, _| {
            let mut acc = 0.0;
            for k in 0..m {
                for i in 0..m {
                    for j in 0..m {
                        acc += self.r[(l, k, i, j)] * z[k] * x[i] * y[j];
                    }
                }
            }
            acc
        })
    }
}

/// Which covariant derivative to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Phi,
    Eta,
    Xi,
    H,
    S,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NablaTensor {
    Phi(Tensor3),
    Eta(DMatrix<f64>),
    Xi(DMatrix<f64>),
    H(Tensor3),
    S(Tensor3),
}

impl NablaTensor {
    pub fn max_abs(&self) -> f64 {
        match self {
            NablaTensor::Phi(t) | NablaTensor::H(t) | NablaTensor::S(t) => t.max_abs(),
            NablaTensor::Eta(m) | NablaTensor::Xi(m) => m.amax(),
        }
    }
}

impl PointTensors {
    pub fn dim(&self) -> usize {
        self.point.len()
    }

    pub fn gamma(&self) -> &Tensor3 {
        &self.geometry.induced.gamma
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.geometry.induced.h
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.geometry.induced.s
    }

    pub fn tau(&self) -> &DVector<f64> {
        &self.geometry.induced.tau
    }

    pub fn paracontact(&self) -> Option<&ParacontactFrame> {
        self.geometry.paracontact.as_ref().ok()
    }

    /// `∇_X Y` for vector fields known to first order.
    pub fn covariant(&self, x: &VectorField, y: &VectorField) -> DVector<f64> {
        &y.jac * &x.value + self.geometry.induced.connection(&x.value, &y.value)
    }

    /// `(∇_i Y)^k` for a field `Y` with Jacobian, for all `i`: entry `(k, i)`.
    pub fn covariant_columns(&self, y: &VectorField) -> DMatrix<f64> {
        let m = self.dim();
        let g = self.gamma();
        DMatrix::from_fn(m, m, |k, i| y.jac[(k, i)] + (0..m).map(|l| g[(k, i, l)] * y.value[l]).sum::<f64>())
    }

    pub fn nabla_phi(&self) -> Option<Tensor3> {
        let (pc, d) = (self.paracontact()?, self.d_para.as_ref()?);
        let (m, g) = (self.dim(), self.gamma());
        Some(Tensor3::from_fn(m, |i, k, j| {
            let mut v = d.d_phi[i][(k, j)];
            for l in 0..m {
                v += g[(k, i, l)] * pc.phi[(l, j)] - g[(l, i, j)] * pc.phi[(k, l)];
            }
            v
        }))
    }

    pub fn nabla_eta(&self) -> Option<DMatrix<f64>> {
        let (pc, d) = (self.paracontact()?, self.d_para.as_ref()?);
        let (m, g) = (self.dim(), self.gamma());
        Some(DMatrix::from_fn(m, m, |i, j| {
            d.d_eta[i][j] - (0..m).map(|l| g[(l, i, j)] * pc.eta[l]).sum::<f64>()
        }))
    }

    pub fn nabla_xi(&self) -> Option<DMatrix<f64>> {
        let (pc, d) = (self.paracontact()?, self.d_para.as_ref()?);
        let (m, g) = (self.dim(), self.gamma());
        Some(DMatrix::from_fn(m, m, |i, k| {
            d.d_xi[i][k] + (0..m).map(|l| g[(k, i, l)] * pc.xi[l]).sum::<f64>()
        }))
    }

    pub fn nabla_h(&self) -> Tensor3 {
        let (m, g, h) = (self.dim(), self.gamma(), self.h());
        Tensor3::from_fn(m, |i, j, k| {
            let mut v = self.d_h[i][(j, k)];
            for l in 0..m {
                v -= g[(l, i, j)] * h[(l, k)] + g[(l, i, k)] * h[(j, l)];
            }
            v
        })
    }

    pub fn nabla_s(&self) -> Tensor3 {
        let (m, g, s) = (self.dim(), self.gamma(), self.s());
        Tensor3::from_fn(m, |i, k, j| {
            let mut v = self.d_s[i][(k, j)];
            for l in 0..m {
                v += g[(k, i, l)] * s[(l, j)] - g[(l, i, j)] * s[(k, l)];
            }
            v
        })
    }

    pub fn nabla(&self, kind: TensorKind) -> Option<NablaTensor> {
        Some(match kind {
            TensorKind::Phi => NablaTensor::Phi(self.nabla_phi()?),
            TensorKind::Eta => NablaTensor::Eta(self.nabla_eta()?),
            TensorKind::Xi => NablaTensor::Xi(self.nabla_xi()?),
            TensorKind::H => NablaTensor::H(self.nabla_h()),
            TensorKind::S => NablaTensor::S(self.nabla_s()),
        })
    }

    pub fn curvature(&self) -> CurvatureTensor {
        let (m, g) = (self.dim(), self.gamma());
        let mut r = Tensor4::zeros(m);
        for l in 0..m {
            for k in 0..m {
                for i in 0..m {
                    for j in (i + 1)..m {
                        let mut v = self.d_gamma[i][(l, j, k)] - self.d_gamma[j][(l, i, k)];
                        for p in 0..m {
                            v += g[(l, i, p)] * g[(p, j, k)] - g[(l, j, p)] * g[(p, i, k)];
                        }
                        r[(l, k, i, j)] = v;
                        r[(l, k, j, i)] = -v;
                    }
                }
            }
        }
        CurvatureTensor { r }
    }

    /// `(dτ)_{ij} = κ (∂_i τ_j − ∂_j τ_i)`.
    pub fn dtau(&self, kappa: f64) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::from_fn(m, m, |i, j| kappa * (self.d_tau[i][j] - self.d_tau[j][i]))
    }
}

pub fn nabla_tensor_at(
    spec: &ImmersionSpec,
    u: &[f64],
    kind: TensorKind,
    opts: &TensorOptions,
) -> Result<NablaTensor, GeometryError> {
    let pt = point_tensors(spec, u, opts)?;
    match pt.nabla(kind) {
        Some(t) => Ok(t),
        None => Err(pt.geometry.paracontact.clone().expect_err("paracontact missing only on error")),
    }
}

pub fn curvature_at(spec: &ImmersionSpec, u: &[f64], opts: &TensorOptions) -> Result<CurvatureTensor, GeometryError> {
    Ok(point_tensors(spec, u, opts)?.curvature())
}

pub fn dtau_at(spec: &ImmersionSpec, u: &[f64], opts: &TensorOptions) -> Result<DMatrix<f64>, GeometryError> {
    Ok(point_tensors(spec, u, opts)?.dtau(kappa().kappa))
}

/// `max |h(∂_i, S∂_j) − h(S∂_i, ∂_j) − 2 dτ_ij|` for a given convention.
pub fn ricci_residual(pt: &PointTensors, kappa: f64) -> f64 {
    let (h, s) = (pt.h(), pt.s());
    let lhs = h * s - s.transpose() * h;
    (lhs - pt.dtau(kappa) * 2.0).amax()
}

/// Outcome of fixing the exterior-derivative convention for `dτ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaCalibration {
    pub kappa: f64,
    pub residual_half: f64,
    pub residual_one: f64,
    /// Both conventions passed, so the test case did not discriminate.
    pub ambiguous: bool,
}

const CALIBRATION_SPEC: &str = "n 1
vars x y z
domain -1:1 -1:1 -1:1
f1 = x
f2 = y
f3 = z
f4 = (x^2 + y^2 + z^2) / 2 + x * y * z / 3
C1 = y
C2 = x * z
C3 = x
C4 = 1
";

/// Calibrates `κ` against the Ricci equation on a nondegenerate
/// non-equiaffine test case, choosing between `1/2` and `1`.
pub fn calibrate_kappa(opts: &TensorOptions, tol: f64) -> Result<KappaCalibration, GeometryError> {
    let spec = parse_immersion(CALIBRATION_SPEC).expect("calibration spec parses");
    let (mut half, mut one) = (0.0f64, 0.0f64);
    for u in [[0.1, -0.2, 0.3], [-0.4, 0.25, 0.05], [0.3, 0.3, -0.35]] {
        let pt = point_tensors(&spec, &u, opts)?;
        half = half.max(ricci_residual(&pt, 0.5));
        one = one.max(ricci_residual(&pt, 1.0));
    }
    let ambiguous = half < tol && one < tol;
    let kappa = if one < half { 1.0 } else { 0.5 };
    Ok(KappaCalibration { kappa, residual_half: half, residual_one: one, ambiguous })
}

/// The calibrated convention, computed once per process.
pub fn kappa() -> KappaCalibration {
    static CAL: OnceLock<KappaCalibration> = OnceLock::new();
    *CAL.get_or_init(|| calibrate_kappa(&TensorOptions::default(), 1e-6).expect("calibration spec is regular"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::{parse_expr, parse_immersion};

    const EX46: &str = "n 1\nvars x y z\ndomain -1:1 -1:1 -1:1\nf1 = x + y\nf2 = sinh(z)\nf3 = x - y\nf4 = cosh(z)\nC1 = x\nC2 = sinh(z)\nC3 = x\nC4 = cosh(z)\n";

    fn expr_field(text: &str) -> impl Fn(&[f64]) -> Result<f64, GeometryError> {
        let vars: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        let e = parse_expr(text, &vars).unwrap();
        move |p| Ok(e.eval_value(p).unwrap())
    }

    #[test]
    fn d_field_basics() {
        let fd = FdOptions::default();
        let d = d_field(expr_field("sinh(z)"), &[0.3, 0.1, 0.0], 2, &[], &fd).unwrap();
        assert!((d - 1.0).abs() < 1e-10);
        let d = d_field(expr_field("7"), &[0.3, 0.1, 0.0], 0, &[], &fd).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn d_field_shrinks_at_boundary() {
        let fd = FdOptions::default();
        let dom = [Interval::new(-1.0, 1.0); 3];
        let d = d_field(expr_field("x^3"), &[1.0 - 1e-5, 0.0, 0.0], 0, &dom, &fd).unwrap();
        assert!((d - 3.0 * (1.0f64 - 1e-5).powi(2)).abs() < 1e-6);
        let e = d_field(expr_field("x"), &[1.0, 0.0, 0.0], 0, &dom, &fd);
        assert!(matches!(e, Err(GeometryError::NoStencilRoom { dir: 0, .. })));
    }

    #[test]
    fn example_tensors() {
        let spec = parse_immersion(EX46).unwrap();
        let u = [0.4, -0.2, 0.3];
        let pt = point_tensors(&spec, &u, &TensorOptions::default()).unwrap();
        assert!(pt.nabla_eta().unwrap().amax() < 1e-8);
        // (∇_z φ) ∂_z = x ∂_x
        let nphi = pt.nabla_phi().unwrap();
        assert!((nphi[(2, 0, 2)] - 0.4).abs() < 1e-8);
        assert!(nphi[(2, 1, 2)].abs() < 1e-8 && nphi[(2, 2, 2)].abs() < 1e-8);
        // R(∂_x, ∂_z) ∂_z = −∂_x
        let r = pt.curvature();
        assert!((r.r[(0, 2, 0, 2)] + 1.0).abs() < 1e-8);
        assert!(pt.dtau(0.5).amax() < 1e-10);
    }

    #[test]
    fn kappa_is_one_half() {
        let cal = kappa();
        assert_eq!(cal.kappa, 0.5);
        assert!(!cal.ambiguous);
        assert!(cal.residual_half < 1e-6 && cal.residual_one > 1e-3);
    }

    #[test]
    fn flat_plane_has_no_curvature() {
        let text = EX46
            .replace("f2 = sinh(z)", "f2 = z")
            .replace("f4 = cosh(z)", "f4 = 0")
            .replace("C1 = x", "C1 = 0")
            .replace("C2 = sinh(z)", "C2 = 0")
            .replace("C3 = x", "C3 = 0")
            .replace("C4 = cosh(z)", "C4 = 1");
        let spec = parse_immersion(&text).unwrap();
        let pt = point_tensors(&spec, &[0.1, 0.2, 0.3], &TensorOptions::default()).unwrap();
        assert!(pt.curvature().r.max_abs() < 1e-10);
        assert!(pt.nabla_phi().unwrap().max_abs() < 1e-10);
    }
}
