//! Residual checks over a grid, grouped into sections.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grid::Grid;
use super::map_points;
use super::report::{CheckEntry, CheckReport, Expect, GridSummary};
use crate::exprlang::ImmersionSpec;
use crate::paraframe::{euclidean_normal_at, GeometryError, InducedObjects, ParacontactFrame};
use crate::tensorcalc::{kappa, ParacontactDerivatives, PointTensors, TensorOptions, VectorField};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Residuals computed exactly from jets.
    pub alg: f64,
    /// Residuals involving finite differences.
    pub fd: f64,
    /// Relative singular-value threshold for ranks.
    pub rank: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { alg: 1e-9, fd: 1e-6, rank: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tier {
    Alg,
    Fd,
}

/// Negative controls: a unit offset injected into one tensor inside one check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tamper {
    /// `R^0_{1,0,1}` and its antisymmetric partner.
    Gauss,
    /// `(∇_0 h)_{11}`.
    CodazziH,
    /// `(∇_0 S)^0_1`.
    CodazziS,
    /// `dτ_{01}`.
    Ricci,
    /// `∂_0 η_1` in the connection identity for `η`.
    EtaOfConnection,
    /// `∂_0 φ^0_1` in the connection identity for `φ`.
    PhiOfConnection,
    /// `∂_0 η_1` in the bracket identity for `η`.
    EtaOfBracket,
    /// `∂_0 φ^0_1` in the bracket identity for `φ`.
    PhiOfBracket,
    /// `τ_0`.
    EtaOfNablaXi,
    /// `ξ` added to the first column of `S`.
    EtaOfShape,
}

impl Tamper {
    pub const ALL: [Tamper; 10] = [
        Tamper::Gauss,
        Tamper::CodazziH,
        Tamper::CodazziS,
        Tamper::Ricci,
        Tamper::EtaOfConnection,
        Tamper::PhiOfConnection,
        Tamper::EtaOfBracket,
        Tamper::PhiOfBracket,
        Tamper::EtaOfNablaXi,
        Tamper::EtaOfShape,
    ];

    /// Name of the only entry this tamper should affect.
    pub fn target(self) -> &'static str {
        match self {
            Tamper::Gauss => "gauss",
            Tamper::CodazziH => "codazzi_h",
            Tamper::CodazziS => "codazzi_s",
            Tamper::Ricci => "ricci",
            Tamper::EtaOfConnection => "eta_of_connection",
            Tamper::PhiOfConnection => "phi_of_connection",
            Tamper::EtaOfBracket => "eta_of_bracket",
            Tamper::PhiOfBracket => "phi_of_bracket",
            Tamper::EtaOfNablaXi => "eta_of_nabla_xi",
            Tamper::EtaOfShape => "eta_of_shape",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckOptions {
    pub tol: Tolerances,
    pub tensor: TensorOptions,
    pub tamper: Option<Tamper>,
    /// Normalisation of `dτ`; the calibrated value when absent.
    pub kappa: Option<f64>,
}

/// Default grid for a spec: Halton points kept four FD steps from the faces.
pub fn default_grid(spec: &ImmersionSpec, points: usize, seed: u64, opts: &CheckOptions) -> Grid {
    Grid::halton(spec.domain(), points, seed, opts.tensor.fd.rel_step, 4.0)
}

/// Random quadratic `c + b·u + uᵀAu` used to build non-coordinate fields.
#[derive(Debug, Clone)]
struct Quadratic {
    c: f64,
    b: DVector<f64>,
    a: DMatrix<f64>,
}

impl Quadratic {
    fn random(m: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut r = || rng.random_range(-1.0..1.0);
        let c = r();
        let b = DVector::from_fn(m, |_, _| r());
        let a = DMatrix::from_fn(m, m, |_, _| r());
        Quadratic { c, b, a }
    }

    fn value_grad(&self, u: &DVector<f64>) -> (f64, DVector<f64>) {
        let au = &self.a * u;
        let v = self.c + self.b.dot(u) + u.dot(&au);
        let g = &self.b + &au + self.a.transpose() * u;
        (v, g)
    }
}

/// Point tensors for every grid point, shared by all sections.
pub struct Sweep {
    pub grid: Grid,
    pub points: Vec<Result<PointTensors, GeometryError>>,
    pub kappa: f64,
    opts: CheckOptions,
    polys: Vec<Quadratic>,
}

impl Sweep {
    pub fn new(spec: &ImmersionSpec, grid: &Grid, opts: &CheckOptions) -> Sweep {
        let points = map_points(&grid.points, |u| crate::tensorcalc::point_tensors(spec, u, &opts.tensor));
        let mut rng = ChaCha8Rng::seed_from_u64(grid.seed ^ 0x5eed_f1e1d);
        let polys = (0..3).map(|_| Quadratic::random(spec.dim(), &mut rng)).collect();
        let kappa = opts.kappa.unwrap_or_else(|| kappa().kappa);
        Sweep { grid: grid.clone(), points, kappa, opts: opts.clone(), polys }
    }

    fn tol(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Alg => self.opts.tol.alg,
            Tier::Fd => self.opts.tol.fd,
        }
    }

    fn tampered(&self, t: Tamper) -> bool {
        self.opts.tamper == Some(t)
    }

    pub fn summary(&self) -> GridSummary {
        GridSummary { points: self.grid.len(), seed: self.grid.seed, margin: self.grid.margin.clone() }
    }

    /// Maximum of a pointwise residual; `None` marks points without a
    /// paracontact structure.
    fn entry(&self, name: &str, anchor: &str, tier: Tier, f: impl Fn(&PointTensors) -> Option<f64>) -> CheckEntry {
        let tol = self.tol(tier);
        let (mut worst, mut worst_point) = (0.0f64, None);
        let (mut missing, mut failed, mut first_err) = (0usize, 0usize, None);
        for (u, ev) in self.grid.points.iter().zip(&self.points) {
            match ev {
                Err(e) => {
                    failed += 1;
                    first_err.get_or_insert_with(|| e.to_string());
                }
                Ok(pt) => match f(pt) {
                    None => missing += 1,
                    Some(v) => {
                        let v = if v.is_nan() { f64::INFINITY } else { v };
                        if worst_point.is_none() || v > worst {
                            worst = v;
                            worst_point = Some(u.clone());
                        }
                    }
                },
            }
        }
        let evaluated = self.points.len() - failed;
        let mut note = None;
        let mut applicable = true;
        if failed > 0 {
            worst = f64::INFINITY;
            note = Some(format!("evaluation failed at {failed} points: {}", first_err.unwrap_or_default()));
        } else if missing > 0 && missing == evaluated {
            applicable = false;
            note = Some("C is not J̃-tangent on the grid".to_string());
        } else if missing > 0 {
            worst = f64::INFINITY;
            note = Some(format!("C is not J̃-tangent at {missing} points"));
        }
        CheckEntry {
            name: name.to_string(),
            anchor: anchor.to_string(),
            residual: worst,
            tol,
            pass: worst <= tol,
            applicable,
            worst_point,
            note,
            expect: Expect::Info,
        }
    }

    fn report(&self, checks: Vec<CheckEntry>) -> CheckReport {
        CheckReport::new("spec", self.summary(), self.kappa, checks)
    }

    fn para<'a>(&self, pt: &'a PointTensors) -> Option<(&'a ParacontactFrame, &'a ParacontactDerivatives)> {
        Some((pt.paracontact()?, pt.d_para.as_ref()?))
    }

    /// Vector fields used for the identities in `X, Y`: coordinates and
    /// coordinates scaled by random quadratics.
    fn test_fields(&self, pt: &PointTensors) -> Vec<VectorField> {
        let m = pt.dim();
        let u = DVector::from_column_slice(&pt.point);
        let mut out: Vec<VectorField> = (0..m).map(|i| VectorField::coordinate(m, i)).collect();
        for q in &self.polys {
            let (v, g) = q.value_grad(&u);
            out.extend((0..m).map(|i| VectorField::scaled_coordinate(i, v, &g)));
        }
        out
    }

    pub fn fundamental(&self) -> Vec<CheckEntry> {
        let gauss = self.entry("gauss", "R(X,Y)Z = h(Y,Z)SX - h(X,Z)SY", Tier::Fd, |pt| {
            let m = pt.dim();
            let mut r = pt.curvature().r;
            if self.tampered(Tamper::Gauss) {
                r[(0, 1, 0, 1)] += 1.0;
                r[(0, 1, 1, 0)] -= 1.0;
            }
            let (h, s) = (pt.h(), pt.s());
            let mut worst = 0.0f64;
            for (l, k, i, j) in quads(m) {
                let rhs = h[(j, k)] * s[(l, i)] - h[(i, k)] * s[(l, j)];
                worst = worst.max((r[(l, k, i, j)] - rhs).abs());
            }
            Some(worst)
        });
        let codazzi_h = self.entry(
            "codazzi_h",
            "(∇_X h)(Y,Z) + τ(X)h(Y,Z) = (∇_Y h)(X,Z) + τ(Y)h(X,Z)",
            Tier::Fd,
            |pt| {
                let m = pt.dim();
                let mut nh = pt.nabla_h();
                if self.tampered(Tamper::CodazziH) {
                    nh[(0, 1, 1)] += 1.0;
                }
                let (h, tau) = (pt.h(), pt.tau());
                let mut worst = 0.0f64;
                for (i, j, k) in triples(m) {
                    let v = nh[(i, j, k)] + tau[i] * h[(j, k)] - nh[(j, i, k)] - tau[j] * h[(i, k)];
                    worst = worst.max(v.abs());
                }
                Some(worst)
            },
        );
        let codazzi_s = self.entry(
            "codazzi_s",
            "(∇_X S)Y - τ(X)SY = (∇_Y S)X - τ(Y)SX",
            Tier::Fd,
            |pt| {
                let m = pt.dim();
                let mut ns = pt.nabla_s();
                if self.tampered(Tamper::CodazziS) {
                    ns[(0, 0, 1)] += 1.0;
                }
                let (s, tau) = (pt.s(), pt.tau());
                let mut worst = 0.0f64;
                for (i, k, j) in triples(m) {
                    let v = ns[(i, k, j)] - tau[i] * s[(k, j)] - ns[(j, k, i)] + tau[j] * s[(k, i)];
                    worst = worst.max(v.abs());
                }
                Some(worst)
            },
        );
        let ricci = self.entry("ricci", "h(X,SY) - h(SX,Y) = 2dτ(X,Y)", Tier::Fd, |pt| {
            let mut dt = pt.dtau(self.kappa);
            if self.tampered(Tamper::Ricci) {
                dt[(0, 1)] += 1.0;
                dt[(1, 0)] -= 1.0;
            }
            let (h, s) = (pt.h(), pt.s());
            Some((h * s - s.transpose() * h - dt * 2.0).amax())
        });
        vec![gauss, codazzi_h, codazzi_s, ricci]
    }

    pub fn theorem_3_2(&self) -> Vec<CheckEntry> {
        let fields = |pt: &PointTensors| self.test_fields(pt);
        let eta_conn = self.entry(
            "eta_of_connection",
            "η(∇_X Y) = h(X,φY) + X(η(Y)) + η(Y)τ(X)",
            Tier::Fd,
            |pt| {
                let (pc, d) = self.para(pt)?;
                let d = tamper_eta(d, self.tampered(Tamper::EtaOfConnection));
                let fs = fields(pt);
                let mut worst = 0.0f64;
                for x in &fs {
                    for y in &fs {
                        let (ey, gey) = eta_of(pc, &d, y);
                        let phi_y = &pc.phi * &y.value;
                        let v = pc.eta.dot(&pt.covariant(x, y))
                            - bilinear(pt.h(), &x.value, &phi_y)
                            - x.apply(&gey)
                            - ey * pt.tau().dot(&x.value);
                        worst = worst.max(v.abs());
                    }
                }
                Some(worst)
            },
        );
        let phi_conn = self.entry(
            "phi_of_connection",
            "φ(∇_X Y) = ∇_X φY - η(Y)SX - h(X,Y)ξ",
            Tier::Fd,
            |pt| {
                let (pc, d) = self.para(pt)?;
                let d = tamper_phi(d, self.tampered(Tamper::PhiOfConnection));
                let fs = fields(pt);
                let mut worst = 0.0f64;
                for x in &fs {
                    for y in &fs {
                        let phi_y = phi_field(pc, &d, y);
                        let v = &pc.phi * pt.covariant(x, y) - pt.covariant(x, &phi_y)
                            + pt.s() * &x.value * pc.eta.dot(&y.value)
                            + &pc.xi * bilinear(pt.h(), &x.value, &y.value);
                        worst = worst.max(v.amax());
                    }
                }
                Some(worst)
            },
        );
        let eta_br = self.entry(
            "eta_of_bracket",
            "η([X,Y]) = h(X,φY) - h(Y,φX) + X(η(Y)) - Y(η(X)) + η(Y)τ(X) - η(X)τ(Y)",
            Tier::Fd,
            |pt| {
                let (pc, d) = self.para(pt)?;
                let d = tamper_eta(d, self.tampered(Tamper::EtaOfBracket));
                let fs = fields(pt);
                let (h, tau) = (pt.h(), pt.tau());
                let mut worst = 0.0f64;
                for x in &fs {
                    for y in &fs {
                        let (ex, gex) = eta_of(pc, &d, x);
                        let (ey, gey) = eta_of(pc, &d, y);
                        let v = pc.eta.dot(&x.bracket(y))
                            - bilinear(h, &x.value, &(&pc.phi * &y.value))
                            + bilinear(h, &y.value, &(&pc.phi * &x.value))
                            - x.apply(&gey)
                            + y.apply(&gex)
                            - ey * tau.dot(&x.value)
                            + ex * tau.dot(&y.value);
                        worst = worst.max(v.abs());
                    }
                }
                Some(worst)
            },
        );
        let phi_br = self.entry(
            "phi_of_bracket",
            "φ([X,Y]) = ∇_X φY - ∇_Y φX + η(X)SY - η(Y)SX",
            Tier::Fd,
            |pt| {
                let (pc, d) = self.para(pt)?;
                let d = tamper_phi(d, self.tampered(Tamper::PhiOfBracket));
                let fs = fields(pt);
                let s = pt.s();
                let mut worst = 0.0f64;
                for x in &fs {
                    for y in &fs {
                        let (phi_x, phi_y) = (phi_field(pc, &d, x), phi_field(pc, &d, y));
                        let v = &pc.phi * x.bracket(y) - pt.covariant(x, &phi_y) + pt.covariant(y, &phi_x)
                            - s * &y.value * pc.eta.dot(&x.value)
                            + s * &x.value * pc.eta.dot(&y.value);
                        worst = worst.max(v.amax());
                    }
                }
                Some(worst)
            },
        );
        let eta_nxi = self.entry("eta_of_nabla_xi", "η(∇_X ξ) = τ(X)", Tier::Fd, |pt| {
            let (pc, _) = self.para(pt)?;
            let mut tau = pt.tau().clone();
            if self.tampered(Tamper::EtaOfNablaXi) {
                tau[0] += 1.0;
            }
            let nx = pt.nabla_xi()?;
            Some((0..pt.dim()).map(|i| (pc.eta.dot(&nx.row(i).transpose()) - tau[i]).abs()).fold(0.0, f64::max))
        });
        let eta_shape = self.entry("eta_of_shape", "η(SX) = -h(X,ξ)", Tier::Alg, |pt| {
            let (pc, _) = self.para(pt)?;
            let mut s = pt.s().clone();
            if self.tampered(Tamper::EtaOfShape) {
                let col = s.column(0) + &pc.xi;
                s.set_column(0, &col);
            }
            let v = pc.eta.transpose() * s + (pt.h() * &pc.xi).transpose();
            Some(v.amax())
        });
        vec![eta_conn, phi_conn, eta_br, phi_br, eta_nxi, eta_shape]
    }

    pub fn pointwise(&self) -> Vec<CheckEntry> {
        vec![
            self.entry("frame_invariants", "φ² = Id - η⊗ξ, η(ξ) = 1, φξ = 0, η∘φ = 0, φ = ±1 on D±", Tier::Alg, |pt| {
                Some(pt.paracontact()?.invariant_residual())
            }),
            self.entry("gauss_reconstruction", "f_ij = Γ^k_ij f_k + h_ij C (relative)", Tier::Alg, |pt| {
                Some(pt.geometry.induced.residual)
            }),
        ]
    }

    pub fn parallelism(&self) -> Vec<CheckEntry> {
        vec![
            self.entry("nabla_phi", "∇φ = 0", Tier::Fd, |pt| Some(pt.nabla_phi()?.max_abs())),
            self.entry("nabla_eta", "∇η = 0", Tier::Fd, |pt| Some(pt.nabla_eta()?.amax())),
            self.entry("nabla_xi", "∇ξ = 0", Tier::Fd, |pt| Some(pt.nabla_xi()?.amax())),
        ]
    }

    /// Consequences of `∇φ = 0` or `∇η = 0`, marked not applicable unless the
    /// corresponding entry of `parallel` passes.
    pub fn lemma_consequences(&self, parallel: &[CheckEntry]) -> Vec<CheckEntry> {
        let holds = |name: &str| parallel.iter().any(|c| c.name == name && c.applicable && c.pass);
        let (phi_ok, eta_ok) = (holds("nabla_phi"), holds("nabla_eta"));
        let mark = |mut es: Vec<CheckEntry>, ok: bool, why: &str| {
            for e in &mut es {
                if !ok && e.applicable {
                    e.applicable = false;
                    e.note = Some(match e.note.take() {
                        Some(n) => format!("{why}; {n}"),
                        None => why.to_string(),
                    });
                }
            }
            es
        };

        let mut out = mark(
            vec![
                self.entry("phi_par.h_on_D", "h(X,Y) = 0 for X, Y in D", Tier::Alg, h_on_d),
                self.entry("phi_par.h_xi_D", "h(ξ,X) = h(X,ξ) = 0 for X in D", Tier::Alg, h_xi_d),
                self.entry("phi_par.shape_on_D", "SX = 0 for X in D", Tier::Alg, |pt| {
                    let pc = pt.paracontact()?;
                    Some(pc.basis_d.iter().map(|b| (pt.s() * b).amax()).fold(0.0, f64::max))
                }),
                self.entry("phi_par.shape_xi", "Sξ = -h(ξ,ξ)ξ", Tier::Alg, |pt| {
                    let pc = pt.paracontact()?;
                    Some((pt.s() * &pc.xi + &pc.xi * bilinear(pt.h(), &pc.xi, &pc.xi)).amax())
                }),
                self.entry("phi_par.dtau", "dτ = 0", Tier::Fd, |pt| Some(pt.dtau(self.kappa).amax())),
                self.entry("phi_par.curvature", "R = 0", Tier::Fd, |pt| Some(pt.curvature().r.max_abs())),
                self.entry("phi_par.nabla_eta_from_tau", "(∇_X η)Y = -η(Y)τ(X)", Tier::Fd, |pt| {
                    let pc = pt.paracontact()?;
                    let ne = pt.nabla_eta()?;
                    Some((ne + pt.tau() * pc.eta.transpose()).amax())
                }),
            ],
            phi_ok,
            "requires ∇φ = 0",
        );

        out.extend(mark(
            vec![
                self.entry("eta_par.h_on_D", "h(X,Y) = 0 for X, Y in D", Tier::Alg, h_on_d),
                self.entry("eta_par.h_xi_D", "h(ξ,X) = h(X,ξ) = 0 for X in D", Tier::Alg, h_xi_d),
                self.entry("eta_par.tau", "τ = 0", Tier::Alg, |pt| Some(pt.tau().amax())),
                self.entry("eta_par.D_stable", "∇_X Y in D for X, Y in D", Tier::Fd, |pt| {
                    let (pc, d) = self.para(pt)?;
                    let frames = projector_frames(&pc.projector_d(), &d_projector_d(pc, d));
                    let mut worst = 0.0f64;
                    for x in &frames {
                        for y in &frames {
                            worst = worst.max(pc.eta.dot(&pt.covariant(x, y)).abs());
                        }
                    }
                    Some(worst)
                }),
                self.entry("eta_par.nabla_xi_in_D", "∇_X ξ in D", Tier::Fd, |pt| {
                    let pc = pt.paracontact()?;
                    Some((pt.nabla_xi()? * &pc.eta).amax())
                }),
                self.entry("eta_par.nabla_xi_D_in_D", "∇_ξ X in D for X in D", Tier::Fd, |pt| {
                    let (pc, d) = self.para(pt)?;
                    let xi = xi_field(pc, d);
                    let frames = projector_frames(&pc.projector_d(), &d_projector_d(pc, d));
                    Some(frames.iter().map(|y| pc.eta.dot(&pt.covariant(&xi, y)).abs()).fold(0.0, f64::max))
                }),
                self.entry("eta_par.h_xi_xi_constant", "X(h(ξ,ξ)) = 0 for X in D", Tier::Fd, |pt| {
                    let (pc, d) = self.para(pt)?;
                    let h = pt.h();
                    let grad = DVector::from_fn(pt.dim(), |i, _| {
                        bilinear(&pt.d_h[i], &pc.xi, &pc.xi)
                            + bilinear(h, &d.d_xi[i], &pc.xi)
                            + bilinear(h, &pc.xi, &d.d_xi[i])
                    });
                    Some(pc.basis_d.iter().map(|b| b.dot(&grad).abs()).fold(0.0, f64::max))
                }),
            ],
            eta_ok,
            "requires ∇η = 0",
        ));

        let rank_tol = self.opts.tol.rank;
        let mut rank_entry = self.entry("rank_h_le_1", "rank h ≤ 1 (σ2 / max(σ1, 1))", Tier::Alg, |pt| {
            let mut sv = pt.h().singular_values().as_slice().to_vec();
            sv.sort_by(|a, b| b.total_cmp(a));
            Some(sv.get(1).copied().unwrap_or(0.0) / sv[0].max(1.0))
        });
        let max_rank = self
            .points
            .iter()
            .filter_map(|p| p.as_ref().ok())
            .map(|pt| rank_h_at(&pt.geometry.induced, rank_tol))
            .max();
        if let Some(r) = max_rank {
            let rank_note = format!("max rank {r}");
            rank_entry.note = Some(match rank_entry.note.take() {
                Some(n) => format!("{n}; {rank_note}"),
                None => rank_note,
            });
        }
        let mut either = vec![rank_entry];
        either.push(self.entry("D_parallel", "∇_X Y in D for Y in D", Tier::Fd, |pt| {
            let (pc, d) = self.para(pt)?;
            let frames = projector_frames(&pc.projector_d(), &d_projector_d(pc, d));
            Some(parallel_defect(pt, &frames, &(&pc.xi * pc.eta.transpose())))
        }));
        for (sign, label) in [(1.0, "Dplus"), (-1.0, "Dminus")] {
            let space = if sign > 0.0 { "D+" } else { "D-" };
            either.push(self.entry(
                &format!("{label}_parallel"),
                &format!("∇_X Y in {space} for Y in {space}"),
                Tier::Fd,
                |pt| {
                    let (pc, d) = self.para(pt)?;
                    let p = pc.projector_pm(sign);
                    let frames = projector_frames(&p, &d_projector_pm(pc, d, sign));
                    Some(parallel_defect(pt, &frames, &complement(&p)))
                },
            ));
        }
        either.push(self.entry("D_involutive", "[X,Y] in D for X, Y in D", Tier::Fd, |pt| {
            let (pc, d) = self.para(pt)?;
            let frames = projector_frames(&pc.projector_d(), &d_projector_d(pc, d));
            Some(bracket_defect(&frames, &(&pc.xi * pc.eta.transpose())))
        }));
        for (sign, label) in [(1.0, "Dplus"), (-1.0, "Dminus")] {
            let space = if sign > 0.0 { "D+" } else { "D-" };
            either.push(self.entry(
                &format!("{label}_involutive"),
                &format!("[X,Y] in {space} for X, Y in {space}"),
                Tier::Fd,
                |pt| {
                    let (pc, d) = self.para(pt)?;
                    let p = pc.projector_pm(sign);
                    let frames = projector_frames(&p, &d_projector_pm(pc, d, sign));
                    Some(bracket_defect(&frames, &complement(&p)))
                },
            ));
        }
        out.extend(mark(either, phi_ok || eta_ok, "requires ∇φ = 0 or ∇η = 0"));
        out
    }

    pub fn normal(&self) -> Vec<CheckEntry> {
        let tol = self.opts.tol.alg;
        vec![
            self.entry("normal_orthonormal", "|N| = 1, N ⊥ f_*", Tier::Alg, |pt| {
                Some(euclidean_normal_at(&pt.geometry.frame, tol).orthonormality)
            }),
            self.entry("normal_jtangent", "<N, J̃N> = 0", Tier::Alg, |pt| {
                Some(euclidean_normal_at(&pt.geometry.frame, tol).residual)
            }),
        ]
    }

    /// Every section, with default expectations.
    pub fn all(&self) -> CheckReport {
        let mut checks = self.fundamental();
        checks.extend(self.theorem_3_2());
        checks.extend(self.pointwise());
        let par = self.parallelism();
        let lemma = self.lemma_consequences(&par);
        checks.extend(par);
        checks.extend(lemma);
        checks.extend(self.normal());
        let mut r = self.report(checks);
        apply_default_expectations(&mut r);
        r
    }
}

/// Always-on identities are claimed to pass; the rest are informational.
pub fn apply_default_expectations(r: &mut CheckReport) {
    for c in &mut r.checks {
        let always = matches!(
            c.name.as_str(),
            "gauss"
                | "codazzi_h"
                | "codazzi_s"
                | "ricci"
                | "eta_of_connection"
                | "phi_of_connection"
                | "eta_of_bracket"
                | "phi_of_bracket"
                | "eta_of_nabla_xi"
                | "eta_of_shape"
                | "frame_invariants"
                | "gauss_reconstruction"
                | "normal_orthonormal"
        );
        c.expect = if always && c.applicable { Expect::Pass } else { Expect::Info };
    }
    r.refresh();
}

/// Numerical rank of `h`: singular values above `tol · max(σ1, 1)`.
pub fn rank_h_at(objs: &InducedObjects, tol: f64) -> usize {
    let sv = objs.h.singular_values();
    let floor = tol * sv.max().max(1.0);
    sv.iter().filter(|s| **s > floor).count()
}

/// Claimed verdicts for a builtin example, on top of the defaults.
pub fn builtin_claims(name: &str) -> Option<Vec<(&'static str, Expect)>> {
    use Expect::*;
    const EITHER: [&str; 7] = [
        "rank_h_le_1",
        "D_parallel",
        "Dplus_parallel",
        "Dminus_parallel",
        "D_involutive",
        "Dplus_involutive",
        "Dminus_involutive",
    ];
    let mut claims: Vec<(&'static str, Expect)> = match name {
        "example_4_6" => vec![
            ("nabla_eta", Pass),
            ("nabla_phi", Nonzero),
            ("nabla_xi", Nonzero),
            ("eta_par.*", Pass),
            ("phi_par.*", NotApplicable),
            ("normal_jtangent", Nonzero),
        ],
        "example_4_6_bar" => vec![
            ("nabla_phi", Pass),
            ("nabla_eta", Pass),
            ("nabla_xi", Pass),
            ("eta_par.*", Pass),
            ("phi_par.*", Pass),
            ("normal_jtangent", Nonzero),
        ],
        "example_4_13" => vec![
            ("nabla_xi", Pass),
            ("nabla_phi", Nonzero),
            ("nabla_eta", Nonzero),
            ("eta_par.*", NotApplicable),
            ("phi_par.*", NotApplicable),
        ],
        "hyperplane" => vec![
            ("nabla_*", Pass),
            ("eta_par.*", Pass),
            ("phi_par.*", Pass),
            ("normal_jtangent", Pass),
        ],
        _ => return None,
    };
    let either = if name == "example_4_13" { NotApplicable } else { Pass };
    claims.extend(EITHER.iter().map(|n| (*n, either)));
    Some(claims)
}

fn sections(spec: &ImmersionSpec, grid: &Grid, opts: &CheckOptions, pick: impl Fn(&Sweep) -> Vec<CheckEntry>) -> CheckReport {
    let sweep = Sweep::new(spec, grid, opts);
    let mut r = sweep.report(pick(&sweep));
    apply_default_expectations(&mut r);
    r
}

/// Gauss, Codazzi and Ricci identities for the transversal field.
pub fn check_fundamental(spec: &ImmersionSpec, grid: &Grid, opts: &CheckOptions) -> CheckReport {
    sections(spec, grid, opts, Sweep::fundamental)
}

/// Identities linking the induced objects with `φ, ξ, η`.
pub fn check_theorem_3_2(spec: &ImmersionSpec, grid: &Grid, opts: &CheckOptions) -> CheckReport {
    sections(spec, grid, opts, Sweep::theorem_3_2)
}

/// Sup norms of `∇φ`, `∇η` and `∇ξ`.
pub fn check_parallelism(spec: &ImmersionSpec, grid: &Grid, opts: &CheckOptions) -> CheckReport {
    sections(spec, grid, opts, Sweep::parallelism)
}

/// Consequences of parallel `φ` or `η`, gated on the parallelism verdicts.
pub fn check_lemma_consequences(spec: &ImmersionSpec, grid: &Grid, opts: &CheckOptions) -> CheckReport {
    sections(spec, grid, opts, |s| s.lemma_consequences(&s.parallelism()))
}

/// Every section on one sweep.
pub fn check_all(spec: &ImmersionSpec, grid: &Grid, opts: &CheckOptions) -> CheckReport {
    Sweep::new(spec, grid, opts).all()
}

fn triples(m: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..m).flat_map(move |a| (0..m).flat_map(move |b| (0..m).map(move |c| (a, b, c))))
}

fn quads(m: usize) -> impl Iterator<Item = (usize, usize, usize, usize)> {
    triples(m).flat_map(move |(a, b, c)| (0..m).map(move |d| (a, b, c, d)))
}

fn bilinear(h: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    x.dot(&(h * y))
}

fn tamper_eta(d: &ParacontactDerivatives, on: bool) -> ParacontactDerivatives {
    let mut d = d.clone();
    if on {
        d.d_eta[0][1] += 1.0;
    }
    d
}

fn tamper_phi(d: &ParacontactDerivatives, on: bool) -> ParacontactDerivatives {
    let mut d = d.clone();
    if on {
        d.d_phi[0][(0, 1)] += 1.0;
    }
    d
}

/// `η(Y)` and its gradient.
fn eta_of(pc: &ParacontactFrame, d: &ParacontactDerivatives, y: &VectorField) -> (f64, DVector<f64>) {
    let m = y.value.len();
    let grad = DVector::from_fn(m, |i, _| d.d_eta[i].dot(&y.value) + pc.eta.dot(&y.jac.column(i)));
    (pc.eta.dot(&y.value), grad)
}

/// `φY` as a field with Jacobian.
fn phi_field(pc: &ParacontactFrame, d: &ParacontactDerivatives, y: &VectorField) -> VectorField {
    let m = y.value.len();
    let mut jac = &pc.phi * &y.jac;
    for i in 0..m {
        let col = jac.column(i) + &d.d_phi[i] * &y.value;
        jac.set_column(i, &col);
    }
    VectorField { value: &pc.phi * &y.value, jac }
}

fn xi_field(pc: &ParacontactFrame, d: &ParacontactDerivatives) -> VectorField {
    let m = pc.xi.len();
    VectorField { value: pc.xi.clone(), jac: DMatrix::from_fn(m, m, |k, i| d.d_xi[i][k]) }
}

/// `∂_i P_D = −(∂_i ξ) ηᵀ − ξ (∂_i η)ᵀ`.
fn d_projector_d(pc: &ParacontactFrame, d: &ParacontactDerivatives) -> Vec<DMatrix<f64>> {
    (0..pc.xi.len())
        .map(|i| -(&d.d_xi[i] * pc.eta.transpose()) - &pc.xi * d.d_eta[i].transpose())
        .collect()
}

/// `∂_i P± = (∂φ φ + φ ∂φ ± ∂φ) / 2`.
fn d_projector_pm(pc: &ParacontactFrame, d: &ParacontactDerivatives, sign: f64) -> Vec<DMatrix<f64>> {
    d.d_phi.iter().map(|dp| (dp * &pc.phi + &pc.phi * dp + dp * sign) * 0.5).collect()
}

fn complement(p: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::identity(p.nrows(), p.ncols()) - p
}

/// Fields `P∂_b` with Jacobians from `∂_i P`.
fn projector_frames(p: &DMatrix<f64>, dp: &[DMatrix<f64>]) -> Vec<VectorField> {
    let m = p.nrows();
    (0..m)
        .map(|b| VectorField {
            value: p.column(b).into_owned(),
            jac: DMatrix::from_fn(m, m, |k, i| dp[i][(k, b)]),
        })
        .collect()
}

/// Largest `Q ∇_i Y` over coordinate directions and frame fields.
fn parallel_defect(pt: &PointTensors, frames: &[VectorField], q: &DMatrix<f64>) -> f64 {
    frames
        .iter()
        .map(|y| (q * pt.covariant_columns(y)).amax())
        .fold(0.0, f64::max)
}

/// Largest `Q [X, Y]` over pairs of frame fields.
fn bracket_defect(frames: &[VectorField], q: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for (a, x) in frames.iter().enumerate() {
        for y in &frames[a + 1..] {
            worst = worst.max((q * x.bracket(y)).amax());
        }
    }
    worst
}

fn h_on_d(pt: &PointTensors) -> Option<f64> {
    let pc = pt.paracontact()?;
    let mut worst = 0.0f64;
    for a in &pc.basis_d {
        for b in &pc.basis_d {
            worst = worst.max(bilinear(pt.h(), a, b).abs());
        }
    }
    Some(worst)
}

fn h_xi_d(pt: &PointTensors) -> Option<f64> {
    let pc = pt.paracontact()?;
    let h = pt.h();
    Some(
        pc.basis_d
            .iter()
            .map(|b| bilinear(h, &pc.xi, b).abs().max(bilinear(h, b, &pc.xi).abs()))
            .fold(0.0, f64::max),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::builtin_example;

    fn run(name: &str, points: usize) -> CheckReport {
        let spec = builtin_example(name).unwrap();
        let opts = CheckOptions::default();
        let grid = default_grid(&spec, points, 1, &opts);
        let mut r = check_all(&spec, &grid, &opts);
        r.set_expectations(&builtin_claims(name).unwrap());
        r
    }

    fn unmet(r: &CheckReport) -> Vec<String> {
        r.checks
            .iter()
            .filter(|c| !c.meets_expectation())
            .map(|c| format!("{} {:e} {:?}", c.name, c.residual, c.note))
            .collect()
    }

    #[test]
    fn builtin_claims_hold() {
        for name in crate::families::BUILTIN_NAMES {
            let r = run(name, 12);
            assert!(r.claims_met, "{name}: {:?}", unmet(&r));
        }
    }

    #[test]
    fn rank_of_h_on_examples() {
        let r = run("example_4_13", 6);
        assert!(r.entry("rank_h_le_1").unwrap().note.as_deref().unwrap().contains("max rank 3"));
        let r = run("example_4_6", 6);
        assert!(r.entry("rank_h_le_1").unwrap().note.as_deref().unwrap().contains("max rank 1"));
        let r = run("hyperplane", 6);
        assert!(r.entry("rank_h_le_1").unwrap().note.as_deref().unwrap().contains("max rank 0"));
    }

    #[test]
    fn each_tamper_flips_only_its_target() {
        let spec = builtin_example("example_4_13").unwrap();
        let base_opts = CheckOptions::default();
        let grid = default_grid(&spec, 4, 2, &base_opts);
        let base = check_all(&spec, &grid, &base_opts);
        for t in Tamper::ALL {
            let opts = CheckOptions { tamper: Some(t), ..CheckOptions::default() };
            let r = check_all(&spec, &grid, &opts);
            for (a, b) in base.checks.iter().zip(&r.checks) {
                assert_eq!(a.pass != b.pass, a.name == t.target(), "{t:?} on {}", a.name);
            }
        }
    }

    #[test]
    fn sections_agree_with_full_suite() {
        let spec = builtin_example("example_4_6").unwrap();
        let opts = CheckOptions::default();
        let grid = default_grid(&spec, 5, 0, &opts);
        let all = check_all(&spec, &grid, &opts);
        for part in [
            check_fundamental(&spec, &grid, &opts),
            check_theorem_3_2(&spec, &grid, &opts),
            check_parallelism(&spec, &grid, &opts),
            check_lemma_consequences(&spec, &grid, &opts),
        ] {
            for c in &part.checks {
                assert_eq!(Some(c), all.entry(&c.name));
            }
        }
    }

    #[test]
    fn non_tangent_transversal_marks_structure_checks_not_applicable() {
        let spec = crate::exprlang::parse_immersion(
            "n 1\nvars x y z\ndomain -1:1 -1:1 -1:1\nf1 = x\nf2 = y\nf3 = z\nf4 = x^2 + y^2\nC1 = 0\nC2 = 0\nC3 = 1\nC4 = 1\n",
        )
        .unwrap();
        let opts = CheckOptions::default();
        let grid = default_grid(&spec, 5, 0, &opts);
        let r = check_all(&spec, &grid, &opts);
        let e = r.entry("eta_of_connection").unwrap();
        assert!(!e.applicable && e.expect == Expect::Info);
        assert!(r.entry("gauss").unwrap().pass);
        assert!(r.claims_met);
    }
}
