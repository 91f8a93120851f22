//! Acceptance criteria. Each criterion prints one line; the process exits
//! nonzero when any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use paracontact::exprlang::{parse_expr, parse_immersion, random_expr, Expr, ImmersionSpec};
use paracontact::families::{
    builtin_example, builtin_text, classification_family, random_adapted_immersion, random_family_params,
    random_immersion, BUILTIN_NAMES,
};
use paracontact::gauge::{apply_gauge, transform_induced, GaugeChange};
use paracontact::paraframe::{geometry_at, FrameOptions, PointGeometry};
use paracontact::tensorcalc::{point_tensors, TensorOptions};
use paracontact::verify::{
    check_fundamental, check_lemma_consequences, check_parallelism, check_theorem_3_2, default_grid, rank_h_at,
    CheckOptions, CheckReport, Tamper,
};
use paracontact_cli::run_with_io;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ALG: f64 = 1e-9;
const FD: f64 = 1e-6;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn dist(a: &DVector<f64>, b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Uniform points strictly inside the spec's box.
fn random_points(spec: &ImmersionSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| spec.domain().iter().map(|iv| rng.random_range(iv.lo..iv.hi)).collect())
        .collect()
}

fn geometry(spec: &ImmersionSpec, u: &[f64]) -> Result<PointGeometry, String> {
    geometry_at(spec, u, &FrameOptions::default()).map_err(|e| format!("geometry at {u:?}: {e}"))
}

fn entry_max(r: &CheckReport, name: &str) -> Result<f64, String> {
    let e = r.entry(name).ok_or_else(|| format!("no entry {name}"))?;
    ensure(e.applicable, || format!("{name} not applicable: {:?}", e.note))?;
    Ok(e.residual)
}

fn example_4_6_pointwise() -> Outcome {
    let start = Instant::now();
    let spec = builtin_example("example_4_6").map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for u in random_points(&spec, 20, 46) {
        let g = geometry(&spec, &u)?;
        let pc = g.paracontact.as_ref().map_err(|e| e.to_string())?;
        let (ind, x) = (&g.induced, u[0]);
        let s = &ind.s;
        let res = [
            ind.tau.amax(),
            dist(&s.column(0).into_owned(), &[-1.0, 0.0, 0.0]),
            dist(&s.column(1).into_owned(), &[0.0, 0.0, 0.0]),
            dist(&s.column(2).into_owned(), &[0.0, 0.0, -1.0]),
            (&ind.h - DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0]))).amax(),
            dist(&pc.xi, &[x, 0.0, 1.0]),
            dist(&pc.phi.column(2).into_owned(), &[-x, 0.0, 0.0]),
        ];
        let r = res.iter().copied().fold(0.0, f64::max);
        ensure(r < ALG, || format!("residual {r:e} at {u:?}: {res:?}"))?;
        worst = worst.max(r);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 1.0, || format!("took {secs:.3} s"))?;
    Ok(format!("20 points, max residual {worst:.1e}, {secs:.3} s"))
}

fn example_4_6_tensors() -> Outcome {
    let spec = builtin_example("example_4_6").map_err(|e| e.to_string())?;
    let opts = CheckOptions::default();
    let grid = default_grid(&spec, 20, 46, &opts);
    let e = |i: usize| DVector::from_fn(3, |k, _| if k == i { 1.0 } else { 0.0 });
    let (mut eta, mut phi_zz, mut curv, mut phi) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for u in &grid.points {
        let pt = point_tensors(&spec, u, &TensorOptions::default()).map_err(|e| e.to_string())?;
        let np = pt.nabla_phi().ok_or("∇φ unavailable")?;
        eta = eta.max(pt.nabla_eta().ok_or("∇η unavailable")?.amax());
        let col = DVector::from_fn(3, |k, _| np[(2, k, 2)]);
        phi_zz = phi_zz.max(dist(&col, &[u[0], 0.0, 0.0]));
        let r = pt.curvature().apply(&e(0), &e(2), &e(2));
        curv = curv.max(dist(&r, &[-1.0, 0.0, 0.0]));
        phi = phi.max(np.max_abs());
    }
    ensure(eta < FD, || format!("max|∇η| = {eta:e}"))?;
    ensure(phi_zz < FD, || format!("‖(∇_∂z φ)∂z − x∂x‖ = {phi_zz:e}"))?;
    ensure(curv < FD, || format!("‖R(∂x,∂z)∂z + ∂x‖ = {curv:e}"))?;
    ensure(phi > 1e-3, || format!("max|∇φ| = {phi:e}"))?;
    Ok(format!("∇η {eta:.1e}, (∇_∂z φ)∂z {phi_zz:.1e}, R(∂x,∂z)∂z {curv:.1e}, max|∇φ| {phi:.3}"))
}

fn cli(args: &[&str]) -> Result<String, String> {
    let argv: Vec<String> = std::iter::once("paracontact").chain(args.iter().copied()).map(String::from).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with_io(&argv, &mut out, &mut err);
    let (out, err) = (String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err));
    ensure(code == 0, || format!("{args:?} exited {code}: {err}"))?;
    Ok(out)
}

fn eta_normalize_cli() -> Outcome {
    let text = cli(&["gauge", "--builtin", "example_4_6", "--eta-normalize"])?;
    let spec = parse_immersion(&text).map_err(|e| e.to_string())?;
    let mut c_err = 0.0f64;
    for u in random_points(&spec, 20, 3) {
        let z = u[2];
        let c: Vec<f64> = spec.c().iter().map(|e| e.eval_value(&u)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        c_err = c_err.max(max_diff(&c, &[0.0, z.sinh(), 0.0, z.cosh()]));
    }
    ensure(c_err < ALG, || format!("C̄ deviates by {c_err:e}"))?;

    let opts = CheckOptions::default();
    let grid = default_grid(&spec, 20, 3, &opts);
    let par = check_parallelism(&spec, &grid, &opts);
    let nabla = ["nabla_phi", "nabla_eta", "nabla_xi"]
        .iter()
        .map(|n| entry_max(&par, n))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    ensure(nabla < FD, || format!("max ∇ residual {nabla:e}"))?;
    let mut curv = 0.0f64;
    for u in &grid.points {
        let pt = point_tensors(&spec, u, &opts.tensor).map_err(|e| e.to_string())?;
        curv = curv.max(pt.curvature().r.max_abs());
    }
    ensure(curv < FD, || format!("max|R̄| = {curv:e}"))?;
    Ok(format!("C̄ error {c_err:.1e}, ∇φ/∇η/∇ξ {nabla:.1e}, R̄ {curv:.1e}"))
}

fn example_4_13() -> Outcome {
    let spec = builtin_example("example_4_13").map_err(|e| e.to_string())?;
    let mut h_err = 0.0f64;
    for u in random_points(&spec, 20, 413) {
        let g = geometry(&spec, &u)?;
        let (x, y, z) = (u[0], u[1], u[2]);
        let want = DMatrix::from_diagonal(&DVector::from_vec(vec![x * z.cosh(), y * z.cosh(), 1.0]));
        h_err = h_err.max((&g.induced.h - want).amax());
        let rank = rank_h_at(&g.induced, 1e-8);
        ensure(rank == 3, || format!("rank h = {rank} at {u:?}"))?;
    }
    ensure(h_err < ALG, || format!("h deviates by {h_err:e}"))?;

    let opts = CheckOptions::default();
    let grid = default_grid(&spec, 20, 413, &opts);
    let par = check_parallelism(&spec, &grid, &opts);
    let (xi, eta, phi) = (entry_max(&par, "nabla_xi")?, entry_max(&par, "nabla_eta")?, entry_max(&par, "nabla_phi")?);
    ensure(xi < FD, || format!("max|∇ξ| = {xi:e}"))?;
    ensure(eta > 1e-3, || format!("max|∇η| = {eta:e}"))?;
    ensure(phi > 1e-3, || format!("max|∇φ| = {phi:e}"))?;
    let lemma = check_lemma_consequences(&spec, &grid, &opts);
    let applicable: Vec<&str> = lemma.checks.iter().filter(|c| c.applicable).map(|c| c.name.as_str()).collect();
    ensure(!lemma.checks.is_empty() && applicable.is_empty(), || format!("applicable: {applicable:?}"))?;
    Ok(format!(
        "h error {h_err:.1e}, rank 3, ∇ξ {xi:.1e}, ∇η {eta:.3}, ∇φ {phi:.3}, {} consequences n/a",
        lemma.checks.len()
    ))
}

fn classification_family_draws() -> Outcome {
    let y = Expr::Var(0);
    let opts = CheckOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut nabla, mut alg) = (0.0f64, 0.0f64);
    for draw in 0..10 {
        let n = 1 + draw % 2;
        let p = random_family_params(n, y.clone(), &mut rng);
        let spec = classification_family(&p).map_err(|e| e.to_string())?;
        let grid = default_grid(&spec, 10, draw as u64, &opts);
        let par = check_parallelism(&spec, &grid, &opts);
        for name in ["nabla_phi", "nabla_eta", "nabla_xi"] {
            let r = entry_max(&par, name)?;
            ensure(r < FD, || format!("draw {draw}: {name} {r:e}"))?;
            nabla = nabla.max(r);
        }
        for u in &grid.points {
            let g = geometry(&spec, u)?;
            let pc = g.paracontact.as_ref().map_err(|e| e.to_string())?;
            let (h, s) = (&g.induced.h, &g.induced.s);
            let s_on_d = pc.basis_d.iter().map(|d| (s * d).amax()).fold(0.0, f64::max);
            let s_xi = (s * &pc.xi + &pc.xi).amax();
            let h_xi = ((h * &pc.xi).dot(&pc.xi) - 1.0).abs();
            let r = g.induced.tau.amax().max(s_on_d).max(s_xi).max(h_xi);
            ensure(r < FD, || format!("draw {draw} at {u:?}: τ/S/h residual {r:e}"))?;
            alg = alg.max(r);
        }
    }

    let p = random_family_params(1, Expr::Num(0.0), &mut rng);
    let spec = classification_family(&p).map_err(|e| e.to_string())?;
    let grid = default_grid(&spec, 10, 0, &opts);
    let mut flat = 0.0f64;
    for u in &grid.points {
        let pt = point_tensors(&spec, u, &opts.tensor).map_err(|e| e.to_string())?;
        flat = flat.max(pt.h().amax()).max(pt.curvature().r.max_abs());
    }
    ensure(flat < ALG, || format!("α ≡ 0: max(|h|, |R|) = {flat:e}"))?;
    Ok(format!("10 draws, ∇ {nabla:.1e}, τ/S/h {alg:.1e}; α ≡ 0 gives h, R {flat:.1e}"))
}

fn fundamental_identities() -> Outcome {
    let start = Instant::now();
    let opts = CheckOptions::default();
    let mut worst: Vec<(String, f64, f64)> = Vec::new();
    for (seed, n) in [(31u64, 1usize), (32, 1), (33, 1), (34, 2), (35, 2)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_immersion(n, &mut rng);
        let grid = default_grid(&spec, 50, seed, &opts);
        let report = check_fundamental(&spec, &grid, &opts).merge(check_theorem_3_2(&spec, &grid, &opts));
        for c in &report.checks {
            ensure(c.applicable && c.pass, || {
                format!("seed {seed}: {} residual {:e} tol {:e} at {:?}", c.name, c.residual, c.tol, c.worst_point)
            })?;
            match worst.iter_mut().find(|w| w.0 == c.name) {
                Some(w) => w.1 = w.1.max(c.residual),
                None => worst.push((c.name.clone(), c.residual, c.tol)),
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
    let ratio = worst.iter().map(|w| w.1 / w.2).fold(0.0, f64::max);
    Ok(format!("{} identities × 5 immersions × 50 points, worst residual/tol {ratio:.1e}, {secs:.2} s", worst.len()))
}

fn gauge_from(spec: &ImmersionSpec, phi: &str, z: [&str; 3]) -> Result<GaugeChange, String> {
    let vars = spec.vars();
    let sub = |t: &str| t.replace('X', &vars[0]).replace('Y', &vars[1]).replace('Z', &vars[2]);
    let parse = |t: &str| parse_expr(&sub(t), vars).map_err(|e| format!("{t}: {e}"));
    Ok(GaugeChange { phi: parse(phi)?, z: z.iter().map(|t| parse(t)).collect::<Result<_, _>>()? })
}

fn gauge_cross_validation() -> Outcome {
    let mut specs = vec![builtin_example("example_4_6").map_err(|e| e.to_string())?];
    for seed in [21u64, 22] {
        specs.push(random_adapted_immersion(&mut ChaCha8Rng::seed_from_u64(seed)));
    }
    let gauges: [(&str, [&str; 3]); 3] = [
        ("2 + X * Y", ["0", "0", "0"]),
        ("1", ["sin(Z)", "X * Y", "0"]),
        ("exp(Z / 2)", ["X^2 - Y", "cosh(Z)", "0"]),
    ];
    let (mut transform, mut lemma) = (0.0f64, 0.0f64);
    for (si, spec) in specs.iter().enumerate() {
        for (gi, (phi, z)) in gauges.iter().enumerate() {
            let g = gauge_from(spec, phi, *z)?;
            let gauged = apply_gauge(spec, &g).map_err(|e| e.to_string())?;
            for u in random_points(spec, 5, (10 * si + gi) as u64) {
                let before = geometry(spec, &u)?;
                let after = geometry(&gauged, &u)?;
                let pc = before.paracontact.as_ref().map_err(|e| e.to_string())?;
                let pc_bar = after.paracontact.as_ref().map_err(|e| e.to_string())?;
                let (ind, frame) =
                    transform_induced(&before.induced, pc, &g, &u, FD, 1e-8).map_err(|e| e.to_string())?;
                let a = &after.induced;
                let diffs = [
                    max_diff(ind.h.as_slice(), a.h.as_slice()),
                    max_diff(ind.tau.as_slice(), a.tau.as_slice()),
                    max_diff(ind.s.as_slice(), a.s.as_slice()),
                    max_diff(ind.gamma.as_slice(), a.gamma.as_slice()),
                    max_diff(frame.xi.as_slice(), pc_bar.xi.as_slice()),
                    max_diff(frame.eta.as_slice(), pc_bar.eta.as_slice()),
                    max_diff(frame.phi.as_slice(), pc_bar.phi.as_slice()),
                ];
                let d = diffs.iter().copied().fold(0.0, f64::max);
                ensure(d < 1e-8, || format!("spec {si} gauge {gi} at {u:?}: h τ S Γ ξ η φ {diffs:?}"))?;
                transform = transform.max(d);

                let gv = g.at(&u).map_err(|e| e.to_string())?;
                let xi_bar = &pc.xi * gv.phi + &pc.phi * &gv.z;
                let eta_bar = &pc.eta / gv.phi;
                let l = max_diff(xi_bar.as_slice(), pc_bar.xi.as_slice())
                    .max(max_diff(eta_bar.as_slice(), pc_bar.eta.as_slice()));
                ensure(l < 1e-8, || format!("spec {si} gauge {gi} at {u:?}: ξ̄/η̄ formulas off by {l:e}"))?;
                lemma = lemma.max(l);
            }
        }
    }
    Ok(format!("3 specs × 3 gauges, objects {transform:.1e}, ξ̄ and η̄ formulas {lemma:.1e}"))
}

fn jets_vs_fd() -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let e = random_expr(&mut rng, 3, 4);
        let u: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.9..0.9));
        let j = e.eval(&u).map_err(|err| format!("expr {k}: {err}"))?;
        for i in 0..3 {
            let shifted = |s: f64| {
                let mut p = u;
                p[i] += s;
                e.eval(&p)
            };
            let (plus, minus) = (shifted(h).map_err(|e| e.to_string())?, shifted(-h).map_err(|e| e.to_string())?);
            let g = (plus.value() - minus.value()) / (2.0 * h);
            worst = worst.max((g - j.grad()[i]).abs() / (1.0 + g.abs()));
            for l in 0..3 {
                let hl = (plus.grad()[l] - minus.grad()[l]) / (2.0 * h);
                worst = worst.max((hl - j.hess(i, l)).abs() / (1.0 + hl.abs()));
            }
        }
    }
    ensure(worst < FD, || format!("jets vs FD relative error {worst:e}"))?;
    Ok(worst)
}

fn parser_round_trip() -> Result<usize, String> {
    let mut count = 0;
    for name in BUILTIN_NAMES {
        let spec = parse_immersion(builtin_text(name).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let text = spec.to_text();
        let back = parse_immersion(&text).map_err(|e| format!("{name}: {e}"))?;
        ensure(back.to_text() == text, || format!("{name} does not round-trip"))?;
        count += 1;
    }
    let vars: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..500 {
        let e = random_expr(&mut rng, 3, 5);
        let shown = e.display(&vars).to_string();
        let back = parse_expr(&shown, &vars).map_err(|err| format!("{shown}: {err}"))?;
        let again = back.display(&vars).to_string();
        ensure(again == shown, || format!("{shown} reprinted as {again}"))?;
        let u = [0.3, -0.6, 0.8];
        let (a, b) = (e.eval_value(&u).map_err(|e| e.to_string())?, back.eval_value(&u).map_err(|e| e.to_string())?);
        ensure(a.to_bits() == b.to_bits(), || format!("{shown}: {a} vs {b}"))?;
        count += 1;
    }
    Ok(count)
}

fn tampering() -> Result<usize, String> {
    let spec = random_immersion(1, &mut ChaCha8Rng::seed_from_u64(11));
    let base_opts = CheckOptions::default();
    let grid = default_grid(&spec, 8, 11, &base_opts);
    let run = |opts: &CheckOptions| check_fundamental(&spec, &grid, opts).merge(check_theorem_3_2(&spec, &grid, opts));
    let base = run(&base_opts);
    ensure(base.checks.iter().all(|c| c.applicable && c.pass), || "untampered suite fails".into())?;
    for t in Tamper::ALL {
        let r = run(&CheckOptions { tamper: Some(t), ..base_opts.clone() });
        let flipped: Vec<&str> = r
            .checks
            .iter()
            .zip(&base.checks)
            .filter(|(a, b)| a.pass != b.pass)
            .map(|(a, _)| a.name.as_str())
            .collect();
        ensure(flipped == [t.target()], || format!("{t:?} flipped {flipped:?}"))?;
    }
    Ok(Tamper::ALL.len())
}

fn numerics_oracles() -> Outcome {
    let fd = jets_vs_fd()?;
    let corpus = parser_round_trip()?;
    let tampers = tampering()?;
    Ok(format!("jets vs FD on 1000 expressions {fd:.1e}, {corpus} round-trips exact, {tampers} tampers isolated"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("example_4_6 pointwise objects", example_4_6_pointwise),
        ("example_4_6 tensor claims", example_4_6_tensors),
        ("gauge --eta-normalize on example_4_6", eta_normalize_cli),
        ("example_4_13 claims", example_4_13),
        ("classification family", classification_family_draws),
        ("fundamental identities on random immersions", fundamental_identities),
        ("gauge transformation vs recomputation", gauge_cross_validation),
        ("numerics oracles", numerics_oracles),
    ];
    let mut failed = 0;
    for (k, (title, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {title}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL  {title}: {why}", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
