//! Acceptance checks, one PASS/FAIL line each. Run with
//! `cargo test -p jflow-core --test acceptance`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use jflow_core::flow::{rhs, necessary_condition, Flow, FlowSettings, Trajectory};
use jflow_core::functionals::{c_constant, e_energy, i_value, j_along, normalize_to_h0, sectional_curvature};
use jflow_core::geodesic::{
    contraction_experiment, convexity_profile, geodesic_residual, second_differences, solve, GeodesicProblem,
};
use jflow_core::harmonics::{HarmonicCocktail, RandomModes};
use jflow_core::kahler::{assemble_metric, chi_wedge_density, sigma, KahlerStructure};
use jflow_core::path::PathInH;
use jflow_core::{Complex64, HMat, Lattice, Result, ScalarField};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict { ok, detail: detail.into() }
}

fn wave(lat: Lattice, f: impl Fn(&[f64]) -> f64 + Sync + Send) -> ScalarField {
    ScalarField::from_fn(lat, f)
}

fn sin1(amp: f64) -> impl Fn(&[f64]) -> f64 + Sync + Send {
    move |x| amp * (2.0 * PI * x[0]).sin()
}

/// Random low-mode potential, shrunk until its metric is positive.
fn random_potential(ks: &KahlerStructure, seed: u64, amplitude: f64) -> ScalarField {
    let mut amp = amplitude;
    loop {
        let modes = RandomModes { count: 4, amplitude: amp, max_freq: 2, seed };
        let phi = HarmonicCocktail::default().with_random(modes).evaluate(*ks.lattice());
        if assemble_metric(ks, &phi).map_or(false, |m| m.min_eig() > 0.05) {
            return phi;
        }
        amp *= 0.5;
    }
}

fn random_hpd(rng: &mut ChaCha8Rng, n: usize) -> HMat {
    let a = HMat::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let mut p = a.adjoint() * a;
    for i in 0..n {
        let d = p.get(i, i) + Complex64::new(0.5, 0.0);
        p.set(i, i, d);
    }
    p.hermitian_part()
}

/// Background of the reference n = 1 flow run.
fn run2_structure() -> KahlerStructure {
    KahlerStructure::constant(Lattice::unit(1, 64).unwrap(), HMat::scalar(1, 4.0), HMat::scalar(1, 2.0)).unwrap()
}

fn n2_structure(points: usize) -> KahlerStructure {
    KahlerStructure::constant(
        Lattice::unit(2, points).unwrap(),
        HMat::scalar(2, 2.0),
        HMat::hermitian(&[1.5, 1.0], Complex64::new(0.3, 0.2)),
    )
    .unwrap()
}

fn n2_phi0(lat: Lattice) -> ScalarField {
    wave(lat, |x| 0.03 * (2.0 * PI * (x[0] + x[2])).sin() + 0.02 * (2.0 * PI * (x[1] - x[3])).cos())
}

fn sigma_monotone(t: &Trajectory) -> (bool, f64) {
    let mut worst = f64::NEG_INFINITY;
    for w in t.rows.windows(2) {
        let tol = 1e-8 * (1.0 + w[0].max_sigma);
        worst = worst.max(w[1].max_sigma - w[0].max_sigma - tol).max(w[0].min_sigma - w[1].min_sigma - tol);
    }
    (worst <= 0.0, worst)
}

struct Run2 {
    ks: KahlerStructure,
    traj: Trajectory,
}

fn c1_stationarity() -> Result<Verdict> {
    let mut details = Vec::new();
    let mut ok = true;
    for n in [1, 2] {
        let ks = KahlerStructure::constant(Lattice::unit(n, 32)?, HMat::identity(n), HMat::identity(n))?;
        let zero = ScalarField::zeros(*ks.lattice());
        let r = rhs(&ks, &zero)?.sup_norm();
        let traj = Flow::new(&ks, &zero, FlowSettings::default())?.run();
        let res = traj.final_state.report.residual;
        ok &= r <= 1e-14 && traj.rows.len() == 1 && traj.converged && res == 0.0;
        details.push(format!("n={n}: |rhs|={r:.1e} rows={} residual={res:.1e}", traj.rows.len()));
    }
    Ok(verdict(ok, details.join("; ")))
}

fn c2_convergence(run: &Run2) -> Result<Verdict> {
    let t = &run.traj;
    let last_rise = t.rows.windows(2).rposition(|w| w[1].residual > w[0].residual).map_or(0, |i| i + 1);
    let ok = t.converged && t.final_state.t <= 50.0 && t.final_state.report.residual < 1e-6 && last_rise <= 10;
    Ok(verdict(
        ok,
        format!(
            "max|σ−c|={:.2e} at t={:.3} after {} steps; last residual increase at step {last_rise}",
            t.final_state.report.residual,
            t.final_state.t,
            t.final_state.step
        ),
    ))
}

fn c3_dissipation(run: &Run2) -> Result<Verdict> {
    let rows = &run.traj.rows;
    let monotone = rows.windows(2).all(|w| w[1].e <= w[0].e + 1e-10 * (1.0 + w[0].e));
    let integral: f64 = rows.windows(2).map(|w| w[1].dt * 0.5 * (w[0].dissipation + w[1].dissipation)).sum();
    let e0 = rows[0].e;
    let gap = (e0 - rows.last().unwrap().e - integral).abs();
    Ok(verdict(
        monotone && gap <= 1e-4 * e0,
        format!("E nonincreasing: {monotone}; |E(0)−E(t)−∫D dt| = {gap:.2e} (E(0) = {e0:.6})"),
    ))
}

fn c4_maximum_principle(run: &Run2) -> Result<Verdict> {
    let (ok1, w1) = sigma_monotone(&run.traj);
    let ks = n2_structure(32);
    let settings = FlowSettings { max_steps: 25, ..FlowSettings::default() };
    let traj = Flow::new(&ks, &n2_phi0(*ks.lattice()), settings)?.run();
    let (ok2, w2) = sigma_monotone(&traj);
    let ok = ok1 && ok2 && traj.failure.is_none();
    Ok(verdict(
        ok,
        format!(
            "n=1 N=64: worst excess {w1:.1e} over {} steps; n=2 N=32: worst excess {w2:.1e} over {} steps (σ in [{:.4}, {:.4}])",
            run.traj.rows.len() - 1,
            traj.rows.len() - 1,
            traj.rows.last().unwrap().min_sigma,
            traj.rows.last().unwrap().max_sigma
        ),
    ))
}

fn c5_tensor(run: &Run2) -> Result<Verdict> {
    let worst = run.traj.rows.iter().map(|r| r.max_eig_t).fold(f64::NEG_INFINITY, f64::max);
    Ok(verdict(worst <= 1e-8, format!("C₀ = {:.4}; max over steps of max eig T = {worst:.4e}", run.traj.c0)))
}

fn c6_path_independence() -> Result<Verdict> {
    let lat = Lattice::unit(1, 32)?;
    let ks = KahlerStructure::constant(lat, HMat::identity(1), HMat::scalar(1, 2.0))?;
    let zero = ScalarField::zeros(lat);
    let v = wave(lat, sin1(0.1));
    let u = wave(lat, |x| 0.05 * (2.0 * PI * x[1]).cos());
    let direct = PathInH::uniform(&ks, vec![zero.clone(), v.clone()])?;
    let via = PathInH::uniform(&ks, vec![zero, u, v])?;
    let dj = (j_along(&direct)? - j_along(&via)?).abs();
    let di = (i_value(&direct) - i_value(&via)).abs();
    Ok(verdict(dj <= 1e-7 && di <= 1e-7, format!("|ΔJ| = {dj:.2e}, |ΔI| = {di:.2e}")))
}

fn c7_cohomological_constant() -> Result<Verdict> {
    let lat = Lattice::unit(1, 32)?;
    let ks = KahlerStructure::constant(lat, HMat::scalar(1, 1.5), HMat::scalar(1, 0.7))?;
    let c0 = c_constant(&ks, &ScalarField::zeros(lat))?;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let phi = random_potential(&ks, 100 + seed, 0.04);
        worst = worst.max((c_constant(&ks, &phi)? - c0).abs());
    }
    Ok(verdict(worst <= 1e-8, format!("c(0) = {c0}; max |c(φ) − c(0)| over 20 potentials = {worst:.2e}")))
}

fn c8_wedge() -> Result<Verdict> {
    let lat = Lattice::unit(2, 16)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        let ks = KahlerStructure::constant(lat, random_hpd(&mut rng, 2), random_hpd(&mut rng, 2))?;
        let phi = random_potential(&ks, 200 + k, 0.01);
        let m = assemble_metric(&ks, &phi)?;
        let wedge = chi_wedge_density(&m, ks.chi())?;
        let rhs = sigma(&m, ks.chi()).zip_map(m.det(), |s, d| s * d);
        worst = worst.max(wedge.max_abs_diff(&rhs));
    }
    Ok(verdict(worst <= 1e-12, format!("max pointwise |χ∧ωⁿ⁻¹ − σ ωⁿ| = {worst:.2e}")))
}

fn c9_geodesic_convexity() -> Result<Verdict> {
    let lat = Lattice::unit(1, 32)?;
    let ks = KahlerStructure::constant(lat, HMat::identity(1), HMat::identity(1))?;
    let problem = GeodesicProblem::new(ScalarField::zeros(lat), wave(lat, sin1(0.1)), 1e-3).with_nodes(16).with_tol(1e-8);
    let sol = solve(&ks, &problem)?;
    let recheck = geodesic_residual(&sol.path, 1e-3)?.iter().map(ScalarField::sup_norm).fold(0.0, f64::max);
    let second = second_differences(&convexity_profile(&sol.path)?);
    let min_second = second.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(verdict(
        recheck < 1e-8 && min_second >= -1e-6,
        format!("residual {recheck:.2e} after {} Newton steps; min interior ΔJ² = {min_second:.3e}", sol.iterations),
    ))
}

fn c10_sectional_curvature() -> Result<Verdict> {
    let lat = Lattice::unit(1, 32)?;
    let ks = KahlerStructure::constant(lat, HMat::identity(1), HMat::identity(1))?;
    let mut worst = f64::NEG_INFINITY;
    for b in 0..5 {
        let base = random_potential(&ks, 300 + b, 0.03);
        let m = assemble_metric(&ks, &base)?;
        for p in 0..10 {
            let seed = 1000 * b + 2 * p;
            let tangent = |s: u64| {
                HarmonicCocktail::default()
                    .with_random(RandomModes { count: 3, amplitude: 1.0, max_freq: 3, seed: s })
                    .evaluate(lat)
            };
            worst = worst.max(sectional_curvature(&m, &tangent(seed), &tangent(seed + 1)));
        }
    }
    let m0 = assemble_metric(&ks, &ScalarField::zeros(lat))?;
    let k_harm = sectional_curvature(&m0, &wave(lat, sin1(1.0)), &wave(lat, |x| (2.0 * PI * x[1]).sin()));
    Ok(verdict(
        worst <= 1e-12 && k_harm < -1e-10,
        format!("max K over 50 random pairs = {worst:.3e}; K(sin 2πx₁, sin 2πx₂) = {k_harm:.4e}"),
    ))
}

fn c11_contraction() -> Result<Verdict> {
    let lat = Lattice::unit(1, 32)?;
    let ks = KahlerStructure::constant(lat, HMat::scalar(1, 4.0), HMat::scalar(1, 2.0))?;
    let a = wave(lat, sin1(0.15));
    let b = wave(lat, |x| 0.1 * (2.0 * PI * x[0]).cos());
    let r = contraction_experiment(&ks, &a, &b, 1.0, &FlowSettings::default(), 16)?;
    Ok(verdict(
        r.d_after <= r.d_before + 1e-6 && r.energy_after <= r.energy_before + 1e-6,
        format!(
            "d: {:.6} → {:.6}; curve energy: {:.6} → {:.6}",
            r.d_before, r.d_after, r.energy_before, r.energy_after
        ),
    ))
}

fn c12_local_minimality(run: &Run2) -> Result<Verdict> {
    let ks = &run.ks;
    let lat = *ks.lattice();
    let star = &run.traj.final_state.phi;
    let m_star = assemble_metric(ks, star)?;
    let e_star = e_energy(&m_star, ks.chi());
    let det = m_star.det();
    let mut worst = f64::INFINITY;
    for s in 0..20 {
        let raw = HarmonicCocktail::default()
            .with_random(RandomModes { count: 5, amplitude: 1.0, max_freq: 4, seed: 400 + s })
            .evaluate(lat);
        // tangent to I = 0 at φ*: zero mean against the volume form
        let mean = raw.zip_map(det, |a, d| a * d).sum_cells() / det.sum_cells();
        let centered = raw.add_constant(-mean);
        let delta = centered.scale(1e-3 / centered.sup_norm());
        let m = assemble_metric(ks, &(star + &delta))?;
        worst = worst.min(e_energy(&m, ks.chi()) - e_star);
    }
    Ok(verdict(worst >= -1e-8, format!("E(φ*) = {e_star:.12}; min E(φ*+δ) − E(φ*) = {worst:.3e}")))
}

fn c13_uniqueness() -> Result<Verdict> {
    let lat = Lattice::unit(1, 32)?;
    let psi = wave(lat, |x| 0.05 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos());
    let ks = KahlerStructure::with_chi_potential(lat, HMat::scalar(1, 4.0), HMat::scalar(1, 2.0), psi.clone())?;
    let settings = FlowSettings { residual_tol: 1e-8, ..FlowSettings::default() };
    let first = Flow::new(&ks, &wave(lat, sin1(0.2)), settings.clone())?.run();
    let phi1 = wave(lat, |x| 0.1 * (2.0 * PI * x[1]).cos() + 0.05 * (2.0 * PI * (x[0] + x[1])).sin());
    let second = Flow::new(&ks, &phi1, settings)?.run();
    let (a, b) = (normalize_to_h0(&ks, &first.final_state.phi)?, normalize_to_h0(&ks, &second.final_state.phi)?);
    let diff = a.max_abs_diff(&b);
    // with χ = 2 + ∂∂̄ψ and g₀ = 4 the critical potential is 2ψ up to a constant
    let exact = normalize_to_h0(&ks, &psi.scale(2.0))?;
    let to_exact = a.max_abs_diff(&exact);
    Ok(verdict(
        first.converged && second.converged && diff < 1e-5,
        format!("sup |φ*₁ − φ*₂| = {diff:.2e}; distance to the exact critical potential {to_exact:.2e}"),
    ))
}

fn c14_necessary_condition(run: &Run2) -> Result<Verdict> {
    let ks = &run.ks;
    let tight = FlowSettings { residual_tol: 1e-10, ..FlowSettings::default() };
    let limit = Flow::new(ks, &run.traj.final_state.phi, tight)?.run();
    let (_, margin1) = necessary_condition(ks, &limit.final_state.phi, limit.final_state.report.c)?;
    let ks2 = n2_structure(16);
    let traj2 = Flow::new(&ks2, &n2_phi0(*ks2.lattice()), FlowSettings::default())?.run();
    let (_, margin2) = necessary_condition(&ks2, &traj2.final_state.phi, traj2.final_state.report.c)?;
    Ok(verdict(
        limit.converged && traj2.converged && margin1 >= -1e-8 && margin2 > 0.0,
        format!(
            "n=1 (residual {:.1e}): min eig(cg − χ) = {margin1:.2e}; n=2 (residual {:.1e}): {margin2:.4}",
            limit.final_state.report.residual, traj2.final_state.report.residual
        ),
    ))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Result<Verdict>| {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let (mut ok, mut detail) = match result {
            Ok(v) => (v.ok, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if let Some(l) = limit {
            if elapsed > l {
                ok = false;
                detail.push_str(&format!("; over the {:.0} s budget", l.as_secs_f64()));
            }
        }
        failures += usize::from(!ok);
        println!(
            "{} {id:>2} {name}: {detail} [{:.2} s]",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    };
    let secs = |s: u64| Some(Duration::from_secs(s));

    report(1, "stationarity", secs(1), &mut c1_stationarity);

    let start = Instant::now();
    let ks = run2_structure();
    let run = Flow::new(&ks, &wave(*ks.lattice(), sin1(0.2)), FlowSettings::default())
        .map(Flow::run)
        .map(|traj| Run2 { ks, traj })
        .map_err(|e| e.to_string());
    let run2_time = start.elapsed();
    let with_run = |f: fn(&Run2) -> Result<Verdict>| {
        let run = &run;
        move || match run {
            Ok(r) => f(r),
            Err(e) => Ok(verdict(false, format!("reference run could not start: {e}"))),
        }
    };
    report(2, "convergence", None, &mut || {
        let v = with_run(c2_convergence)()?;
        let in_budget = run2_time <= Duration::from_secs(60);
        Ok(verdict(v.ok && in_budget, format!("{} (run {:.2} s, budget 60 s)", v.detail, run2_time.as_secs_f64())))
    });
    report(3, "energy dissipation", None, &mut with_run(c3_dissipation));
    report(4, "maximum principle", None, &mut with_run(c4_maximum_principle));
    report(5, "tensor preservation", None, &mut with_run(c5_tensor));
    report(6, "path independence of J and I", secs(5), &mut c6_path_independence);
    report(7, "cohomological constant", None, &mut c7_cohomological_constant);
    report(8, "wedge identity", None, &mut c8_wedge);
    report(9, "geodesic convexity of J", secs(120), &mut c9_geodesic_convexity);
    report(10, "non-positive sectional curvature", None, &mut c10_sectional_curvature);
    report(11, "contraction", secs(300), &mut c11_contraction);
    report(12, "local minimality", None, &mut with_run(c12_local_minimality));
    report(13, "uniqueness of the critical point", None, &mut c13_uniqueness);
    report(14, "necessary condition", None, &mut with_run(c14_necessary_condition));

    println!("{} criteria failed", failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
