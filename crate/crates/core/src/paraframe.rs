//! Moving frame of an immersion at a point, the Gauss/Weingarten
//! decomposition, and the induced almost paracontact structure.
//!
//! Index conventions: tangent vectors are coordinate columns; `gamma[(k, i, j)]`
//! is the `k`-th component of `∇_i ∂_j`; `s[(k, i)]` is the `k`-th component of
//! `S ∂_i`; `phi[(k, j)]` is the `k`-th component of `φ ∂_j`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::exprlang::ImmersionSpec;
use crate::jets::JetError;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point has {found} coordinates, expected {expected}")]
    PointDimension { expected: usize, found: usize },
    #[error("point {0:?} lies outside the domain box")]
    OutsideDomain(Vec<f64>),
    #[error("evaluating {component} failed: {source}")]
    Evaluation { component: String, source: JetError },
    #[error("not an immersion: Jacobian rank {rank} < {expected}")]
    NotImmersion { rank: usize, expected: usize },
    #[error("C is not transversal: [F|C] has relative smallest singular value {ratio:e}")]
    NotTransversal { ratio: f64 },
    #[error("C is not J̃-tangent: J̃C has transversal residual {residual:e}")]
    NotJTangent { residual: f64 },
    #[error("eigensplit of φ on D failed: dim D+ = {plus}, dim D- = {minus}, expected {expected} each")]
    Eigensplit { plus: usize, minus: usize, expected: usize },
    #[error("kernel of η has dimension {found}, expected {expected}")]
    Distribution { found: usize, expected: usize },
    #[error("vector of odd dimension {0} has no para-complex structure")]
    OddDimension(usize),
    #[error("no room for a finite-difference stencil in direction {dir} at {point:?}")]
    NoStencilRoom { dir: usize, point: Vec<f64> },
}

/// Numerical thresholds for the pointwise solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOptions {
    /// Relative singular-value threshold for rank decisions.
    pub rank_tol: f64,
    /// Threshold on the transversal part of `J̃C`, relative to `1 + |C|`.
    pub tangency_tol: f64,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions { rank_tol: 1e-8, tangency_tol: 1e-9 }
    }
}

/// The para-complex structure of `R^{2k}`: swaps the two halves.
pub fn para_apply(v: &[f64]) -> Result<Vec<f64>, GeometryError> {
    if !v.len().is_multiple_of(2) {
        return Err(GeometryError::OddDimension(v.len()));
    }
    let half = v.len() / 2;
    Ok(v[half..].iter().chain(&v[..half]).copied().collect())
}

pub(crate) fn para_vec(v: &DVector<f64>) -> DVector<f64> {
    let half = v.len() / 2;
    DVector::from_fn(v.len(), |a, _| v[(a + half) % v.len()])
}

pub(crate) fn para_mat(m: &DMatrix<f64>) -> DMatrix<f64> {
    let half = m.nrows() / 2;
    DMatrix::from_fn(m.nrows(), m.ncols(), |a, j| m[((a + half) % m.nrows(), j)])
}

/// Number of singular values above `rel_tol` times the largest.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Jet data of `f` and `C` at one point.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub point: Vec<f64>,
    pub f_val: DVector<f64>,
    /// Columns `f_{x_i}`.
    pub jac: DMatrix<f64>,
    /// `f_{x_i x_j}` at index `i * dim + j`.
    pub second: Vec<DVector<f64>>,
    pub c_val: DVector<f64>,
    /// Columns `∂_{x_i} C`.
    pub dc: DMatrix<f64>,
    /// Inverse of `[F | C]`.
    frame_inv: DMatrix<f64>,
}

impl FrameData {
    pub fn dim(&self) -> usize {
        self.jac.ncols()
    }

    pub fn f_second(&self, i: usize, j: usize) -> &DVector<f64> {
        &self.second[i * self.dim() + j]
    }

    /// Splits an ambient vector as `F·t + c·C`, returning `(t, c)`.
    pub fn decompose(&self, v: &DVector<f64>) -> (DVector<f64>, f64) {
        let w = &self.frame_inv * v;
        let m = self.dim();
        (w.rows(0, m).into_owned(), w[m])
    }

    /// Pushes a tangent coordinate vector forward: `f_* X = F·X`.
    pub fn push_forward(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.jac * x
    }
}

pub fn frame_at(spec: &ImmersionSpec, u: &[f64]) -> Result<FrameData, GeometryError> {
    frame_at_with(spec, u, &FrameOptions::default())
}

pub fn frame_at_with(spec: &ImmersionSpec, u: &[f64], opts: &FrameOptions) -> Result<FrameData, GeometryError> {
    let m = spec.dim();
    if u.len() != m {
        return Err(GeometryError::PointDimension { expected: m, found: u.len() });
    }
    if !spec.contains(u) {
        return Err(GeometryError::OutsideDomain(u.to_vec()));
    }
    let ambient = m + 1;
    let mut f_val = DVector::zeros(ambient);
    let mut jac = DMatrix::zeros(ambient, m);
    let mut second = vec![DVector::zeros(ambient); m * m];
    let mut c_val = DVector::zeros(ambient);
    let mut dc = DMatrix::zeros(ambient, m);
    for a in 0..ambient {
        let jet = spec.f()[a].eval(u).map_err(|source| GeometryError::Evaluation {
            component: format!("f{}", a + 1),
            source,
        })?;
        f_val[a] = jet.value();
        for i in 0..m {
            jac[(a, i)] = jet.grad()[i];
            for j in 0..m {
                second[i * m + j][a] = jet.hess(i, j);
            }
        }
        let jet = spec.c()[a].eval(u).map_err(|source| GeometryError::Evaluation {
            component: format!("C{}", a + 1),
            source,
        })?;
        c_val[a] = jet.value();
        for i in 0..m {
            dc[(a, i)] = jet.grad()[i];
        }
    }

    let rank = numerical_rank(&jac, opts.rank_tol);
    if rank < m {
        return Err(GeometryError::NotImmersion { rank, expected: m });
    }
    let mut frame = jac.clone().insert_column(m, 0.0);
    frame.set_column(m, &c_val);
    let sv = frame.clone().svd(false, false).singular_values;
    let ratio = sv.min() / sv.max();
    if !(ratio > opts.rank_tol) {
        return Err(GeometryError::NotTransversal { ratio });
    }
    let frame_inv = frame.try_inverse().ok_or(GeometryError::NotTransversal { ratio: 0.0 })?;
    Ok(FrameData { point: u.to_vec(), f_val, jac, second, c_val, dc, frame_inv })
}

/// Affine objects induced by `C` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct InducedObjects {
    pub gamma: Tensor3,
    pub h: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub tau: DVector<f64>,
    /// Largest relative Gauss/Weingarten reconstruction residual.
    pub residual: f64,
}

impl InducedObjects {
    pub fn dim(&self) -> usize {
        self.tau.len()
    }

    /// `∇_X Y` for fixed coordinate vectors (no derivative of `Y`).
    pub fn connection(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let m = self.dim();
        DVector::from_fn(m, |k, _| {
            let mut acc = 0.0;
            for i in 0..m {
                for j in 0..m {
                    acc += self.gamma[(k, i, j)] * x[i] * y[j];
                }
            }
            acc
        })
    }
}

pub fn induced_at(frame: &FrameData) -> InducedObjects {
    let m = frame.dim();
    let mut gamma = Tensor3::zeros(m);
    let mut h = DMatrix::zeros(m, m);
    let mut residual: f64 = 0.0;
    for i in 0..m {
        for j in i..m {
            let target = frame.f_second(i, j);
            let (t, c) = frame.decompose(target);
            for k in 0..m {
                gamma[(k, i, j)] = t[k];
                gamma[(k, j, i)] = t[k];
            }
            h[(i, j)] = c;
            h[(j, i)] = c;
            let rebuilt = &frame.jac * &t + &frame.c_val * c;
            residual = residual.max((target - rebuilt).norm() / (1.0 + target.norm()));
        }
    }
    let mut s = DMatrix::zeros(m, m);
    let mut tau = DVector::zeros(m);
    for i in 0..m {
        let target = frame.dc.column(i).into_owned();
        let (t, c) = frame.decompose(&target);
        s.set_column(i, &(-&t));
        tau[i] = c;
        let rebuilt = -(&frame.jac * s.column(i)) + &frame.c_val * c;
        residual = residual.max((&target - rebuilt).norm() / (1.0 + target.norm()));
    }
    InducedObjects { gamma, h, s, tau, residual }
}

/// Induced almost paracontact structure and its distributions at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ParacontactFrame {
    pub xi: DVector<f64>,
    pub eta: DVector<f64>,
    pub phi: DMatrix<f64>,
    /// Orthonormal (in coordinates) basis of `ker η`.
    pub basis_d: Vec<DVector<f64>>,
    pub basis_dp: Vec<DVector<f64>>,
    pub basis_dm: Vec<DVector<f64>>,
    pub jtangency_residual: f64,
}

/// Orthonormalises candidates in order of decreasing residual norm, keeping
/// those above `rel_tol` times the largest candidate norm, at most `limit`.
fn pivoted_gram_schmidt(candidates: &[DVector<f64>], rel_tol: f64, limit: usize) -> Vec<DVector<f64>> {
    let scale = candidates.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut rest: Vec<DVector<f64>> = candidates.to_vec();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    while basis.len() < limit && !rest.is_empty() {
        let (best, norm) = rest
            .iter()
            .enumerate()
            .map(|(k, v)| (k, v.norm()))
            .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if !(norm > rel_tol * scale) {
            break;
        }
        let q = rest.swap_remove(best) / norm;
        for v in rest.iter_mut() {
            let p = q.dot(v);
            *v -= &q * p;
        }
        basis.push(q);
    }
    basis
}

impl ParacontactFrame {
    /// Builds the distribution bases for given `ξ`, `η`, `φ`.
    pub fn from_parts(
        xi: DVector<f64>,
        eta: DVector<f64>,
        phi: DMatrix<f64>,
        jtangency_residual: f64,
        rank_tol: f64,
    ) -> Result<Self, GeometryError> {
        let m = xi.len();
        let n = (m - 1) / 2;
        let e2 = eta.norm_squared();
        let candidates: Vec<DVector<f64>> = (0..m)
            .map(|i| {
                let mut v = DVector::zeros(m);
                v[i] = 1.0;
                v - &eta * (eta[i] / e2)
            })
            .collect();
        let basis_d = pivoted_gram_schmidt(&candidates, rank_tol, 2 * n);
        if basis_d.len() != 2 * n {
            return Err(GeometryError::Distribution { found: basis_d.len(), expected: 2 * n });
        }
        let split = |sign: f64| {
            let c: Vec<DVector<f64>> = basis_d.iter().map(|b| (b + &phi * b * sign) * 0.5).collect();
            pivoted_gram_schmidt(&c, rank_tol, 2 * n)
        };
        let (basis_dp, basis_dm) = (split(1.0), split(-1.0));
        if basis_dp.len() != n || basis_dm.len() != n {
            return Err(GeometryError::Eigensplit {
                plus: basis_dp.len(),
                minus: basis_dm.len(),
                expected: n,
            });
        }
        Ok(ParacontactFrame { xi, eta, phi, basis_d, basis_dp, basis_dm, jtangency_residual })
    }

    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// Largest violation of `φ² = Id − ξ⊗η`, `η(ξ) = 1`, `φξ = 0`, `η∘φ = 0`
    /// and of the `±1` actions on the eigenbases.
    pub fn invariant_residual(&self) -> f64 {
        let m = self.dim();
        let id = DMatrix::<f64>::identity(m, m);
        let phi2 = &self.phi * &self.phi - (id - &self.xi * self.eta.transpose());
        let mut r = phi2.amax();
        r = r.max((self.eta.dot(&self.xi) - 1.0).abs());
        r = r.max((&self.phi * &self.xi).amax());
        r = r.max((self.eta.transpose() * &self.phi).amax());
        for b in &self.basis_dp {
            r = r.max((&self.phi * b - b).amax());
        }
        for b in &self.basis_dm {
            r = r.max((&self.phi * b + b).amax());
        }
        r
    }

    /// Projector onto `D` along `ξ`: `Id − ξ⊗η`.
    pub fn projector_d(&self) -> DMatrix<f64> {
        let m = self.dim();
        DMatrix::identity(m, m) - &self.xi * self.eta.transpose()
    }

    /// Projector onto `D±` along `D∓ ⊕ span ξ`: `(φ² ± φ)/2`.
    pub fn projector_pm(&self, sign: f64) -> DMatrix<f64> {
        (&self.phi * &self.phi + &self.phi * sign) * 0.5
    }
}

pub fn paracontact_at(frame: &FrameData) -> Result<ParacontactFrame, GeometryError> {
    paracontact_at_with(frame, &FrameOptions::default())
}

pub fn paracontact_at_with(frame: &FrameData, opts: &FrameOptions) -> Result<ParacontactFrame, GeometryError> {
    let m = frame.dim();
    let (xi, transversal) = frame.decompose(&para_vec(&frame.c_val));
    let c_norm = frame.c_val.norm();
    let residual = transversal.abs() * c_norm;
    if !(residual <= opts.tangency_tol * (1.0 + c_norm)) {
        return Err(GeometryError::NotJTangent { residual });
    }
    let sol = &frame.frame_inv * para_mat(&frame.jac);
    let phi = sol.rows(0, m).into_owned();
    let eta = sol.row(m).transpose();
    ParacontactFrame::from_parts(xi, eta, phi, residual, opts.rank_tol)
}

/// The Euclidean unit normal of the hypersurface at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanNormal {
    pub normal: DVector<f64>,
    pub jtangent: bool,
    /// `|<N, J̃N>|`, the normal component of `J̃N`.
    pub residual: f64,
    /// Largest deviation from unit length and orthogonality to `f_*`.
    pub orthonormality: f64,
}

pub fn euclidean_normal_at(frame: &FrameData, tol: f64) -> EuclideanNormal {
    let m = frame.dim();
    let row = frame.frame_inv.row(m).transpose();
    let normal = &row / row.norm();
    let residual = normal.dot(&para_vec(&normal)).abs();
    let mut orthonormality = (normal.norm() - 1.0).abs();
    for i in 0..m {
        let col = frame.jac.column(i);
        orthonormality = orthonormality.max(normal.dot(&col).abs() / col.norm());
    }
    EuclideanNormal { normal, jtangent: residual < tol, residual, orthonormality }
}

/// Everything computable pointwise from the jets of `f` and `C`.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub frame: FrameData,
    pub induced: InducedObjects,
    pub paracontact: Result<ParacontactFrame, GeometryError>,
}

pub fn geometry_at(spec: &ImmersionSpec, u: &[f64], opts: &FrameOptions) -> Result<PointGeometry, GeometryError> {
    let frame = frame_at_with(spec, u, opts)?;
    let induced = induced_at(&frame);
    let paracontact = paracontact_at_with(&frame, opts);
    Ok(PointGeometry { frame, induced, paracontact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::parse_immersion;

    const EX46: &str = "n 1\nvars x y z\ndomain -1:1 -1:1 -1:1\nf1 = x + y\nf2 = sinh(z)\nf3 = x - y\nf4 = cosh(z)\nC1 = x\nC2 = sinh(z)\nC3 = x\nC4 = cosh(z)\n";

    fn close(a: &DVector<f64>, b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn para_apply_swaps_halves() {
        assert_eq!(para_apply(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![3.0, 4.0, 1.0, 2.0]);
        assert_eq!(para_apply(&[1.0, 0.0, 1.0, 0.0]).unwrap(), vec![1.0, 0.0, 1.0, 0.0]);
        assert_eq!(para_apply(&[1.0, 2.0, 3.0]), Err(GeometryError::OddDimension(3)));
    }

    #[test]
    fn frame_of_example() {
        let spec = parse_immersion(EX46).unwrap();
        let fr = frame_at(&spec, &[0.5, -0.3, 0.2]).unwrap();
        assert!(close(&fr.jac.column(0).into_owned(), &[1.0, 0.0, 1.0, 0.0]));
        assert!(close(&fr.jac.column(1).into_owned(), &[1.0, 0.0, -1.0, 0.0]));
        let ind = induced_at(&fr);
        assert!(ind.residual < 1e-14);
        assert!(ind.tau.amax() < 1e-14);
        let pc = paracontact_at(&fr).unwrap();
        assert!(close(&pc.xi, &[0.5, 0.0, 1.0]));
        assert!(close(&pc.phi.column(2).into_owned(), &[-0.5, 0.0, 0.0]));
        assert!(pc.invariant_residual() < 1e-12);
        assert!(close(&(&pc.phi * &pc.basis_dp[0]), pc.basis_dp[0].as_slice()));
    }

    #[test]
    fn degenerate_transversal_is_rejected() {
        let text = EX46
            .replace("f2 = sinh(z)", "f2 = y")
            .replace("f1 = x + y", "f1 = x")
            .replace("f3 = x - y", "f3 = z")
            .replace("f4 = cosh(z)", "f4 = 0");
        let text = text.replace("C1 = x", "C1 = 0").replace("C2 = sinh(z)", "C2 = 0");
        let text = text.replace("C3 = x", "C3 = 0").replace("C4 = cosh(z)", "C4 = 0");
        let spec = parse_immersion(&text).unwrap();
        assert!(matches!(frame_at(&spec, &[0.0; 3]), Err(GeometryError::NotTransversal { .. })));
    }

    #[test]
    fn normal_tangency_follows_z() {
        let spec = parse_immersion(EX46).unwrap();
        let at = |z: f64| euclidean_normal_at(&frame_at(&spec, &[0.1, 0.2, z]).unwrap(), 1e-9);
        let flat = at(0.0);
        assert!(flat.jtangent);
        assert!(flat.orthonormality < 1e-14);
        let tilted = at(0.4);
        assert!(!tilted.jtangent);
        assert!((tilted.residual - (0.8f64).tanh()).abs() < 1e-12);
        // Oriented toward C: <N, C> > 0.
        assert!(tilted.normal.dot(&frame_at(&spec, &[0.1, 0.2, 0.4]).unwrap().c_val) > 0.0);
    }
}
