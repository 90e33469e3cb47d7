//! Command orchestration.

use std::path::Path;

use jflow_core::flow::{necessary_condition, DiagnosticsRow, Flow};
use jflow_core::functionals::{functional_report, normalize_to_h0};
use jflow_core::geodesic::{contraction_experiment, convexity_profile, distance_with, solve, GeodesicProblem};
use jflow_core::kahler::KahlerStructure;
use jflow_core::ScalarField;

use crate::config::{Command, RunConfig, SCHEMA};
use crate::output::{
    decode_snapshot, diagnostics_csv, encode_snapshot, ensure_dir, fmt_f64, parse_diagnostics, read_file,
    snapshot_path, write_file, Summary,
};
use crate::{CliError, EXIT_FAILURE, EXIT_OK};

/// Result of a command: exit code plus a one-line report for standard output or error.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub exit_code: i32,
    pub message: String,
}

pub fn run_command(cfg: &RunConfig) -> Outcome {
    let result = match cfg.command {
        Command::Flow => run_flow(cfg),
        Command::Geodesic => run_geodesic(cfg),
        Command::Contract => run_contract(cfg),
        Command::Diagnose => run_diagnose(cfg),
    };
    match result {
        Ok((true, message)) => Outcome { exit_code: EXIT_OK, message },
        Ok((false, message)) => Outcome { exit_code: EXIT_FAILURE, message },
        Err(e) => Outcome { exit_code: e.exit_code(), message: e.to_string() },
    }
}

fn header(cfg: &RunConfig) -> Summary {
    let mut s = Summary::default();
    s.set("schema", SCHEMA)
        .set("command", cfg.command.name())
        .set("n", cfg.n)
        .set("N", cfg.points)
        .num("L", cfg.period)
        .set("seed", cfg.seed);
    s
}

fn endpoints(cfg: &RunConfig, ks: &KahlerStructure) -> Result<(ScalarField, ScalarField), CliError> {
    let lat = *ks.lattice();
    let a = normalize_to_h0(ks, &cfg.phi_a.cocktail(cfg.seed, 1).evaluate(lat))?;
    let b = normalize_to_h0(ks, &cfg.phi_b.cocktail(cfg.seed, 2).evaluate(lat))?;
    Ok((a, b))
}

fn run_flow(cfg: &RunConfig) -> Result<(bool, String), CliError> {
    let ks = cfg.structure()?;
    let phi0 = cfg.phi0.cocktail(cfg.seed, 0).evaluate(*ks.lattice());
    let flow = Flow::new(&ks, &phi0, cfg.flow.clone())?;
    ensure_dir(&cfg.out)?;
    let mut io_error = None;
    let traj = flow.run_observed(|s| {
        if cfg.snapshot_every > 0 && s.step % cfg.snapshot_every == 0 && io_error.is_none() {
            let path = snapshot_path(&cfg.out, s.step);
            io_error = write_file(&path, &encode_snapshot(&s.phi, s.t)).err();
        }
    });
    write_file(&cfg.out.join("diagnostics.csv"), diagnostics_csv(&traj.rows).as_bytes())?;
    let fin = &traj.final_state;
    write_file(&cfg.out.join("final.bin"), &encode_snapshot(&fin.phi, fin.t))?;
    let (_, necessary) = necessary_condition(&ks, &fin.phi, fin.report.c)?;
    let converged = traj.converged && traj.failure.is_none();
    let mut s = header(cfg);
    s.set("converged", converged)
        .set("failure", traj.failure.as_ref().map_or("none".to_string(), |e| e.to_string()))
        .set("steps", fin.step)
        .set("rows", traj.rows.len())
        .num("t", fin.t)
        .num("c", fin.report.c)
        .num("J", fin.report.j)
        .num("E", fin.report.e)
        .num("I", fin.report.i)
        .num("residual", fin.report.residual)
        .num("c0", traj.c0)
        .num("metric_floor", traj.metric_floor)
        .num("necessary_min_eig", necessary);
    write_file(&cfg.out.join("summary.txt"), s.render().as_bytes())?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let message = match &traj.failure {
        Some(e) => format!("flow stopped at t = {}: {e}", fmt_f64(fin.t)),
        None if converged => format!("converged at t = {} after {} steps", fmt_f64(fin.t), fin.step),
        None => format!("not converged by t = {} (residual {})", fmt_f64(fin.t), fmt_f64(fin.report.residual)),
    };
    Ok((converged, message))
}

fn run_geodesic(cfg: &RunConfig) -> Result<(bool, String), CliError> {
    let ks = cfg.structure()?;
    let (a, b) = endpoints(cfg, &ks)?;
    ensure_dir(&cfg.out)?;
    let g = &cfg.geodesic;
    let problem = GeodesicProblem { m: g.m, tol: g.tol, max_iterations: g.max_iterations, ..GeodesicProblem::new(a.clone(), b.clone(), g.epsilon) };
    let mut s = header(cfg);
    s.num("epsilon", g.epsilon).set("m", g.m);
    let sol = match solve(&ks, &problem) {
        Ok(sol) => sol,
        Err(e) => {
            s.set("converged", false).set("failure", &e);
            write_file(&cfg.out.join("summary.txt"), s.render().as_bytes())?;
            return Err(e.into());
        }
    };
    let profile = convexity_profile(&sol.path)?;
    let mut csv = String::from("node,t,J\n");
    for (k, (t, j)) in sol.path.times().iter().zip(&profile).enumerate() {
        csv.push_str(&format!("{k},{},{}\n", fmt_f64(*t), fmt_f64(*j)));
    }
    write_file(&cfg.out.join("convexity.csv"), csv.as_bytes())?;
    if cfg.snapshot_every > 0 {
        for (k, (t, phi)) in sol.path.times().iter().zip(sol.path.potentials()).enumerate() {
            if k % cfg.snapshot_every == 0 || k == g.m {
                write_file(&cfg.out.join(format!("node_{k:03}.bin")), &encode_snapshot(phi, *t))?;
            }
        }
    }
    let min_second = profile.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::INFINITY, f64::min);
    s.set("converged", true)
        .num("residual", sol.residual)
        .set("iterations", sol.iterations)
        .num("min_second_difference_J", if min_second.is_finite() { min_second } else { 0.0 });
    let report = match distance_with(&ks, &a, &b, g.m, g.tol) {
        Ok(r) => r,
        Err(e) => {
            s.set("distance_failure", &e);
            write_file(&cfg.out.join("summary.txt"), s.render().as_bytes())?;
            return Err(e.into());
        }
    };
    let mut csv = String::from("epsilon,distance,residual,iterations\n");
    for r in &report.trend {
        csv.push_str(&format!("{},{},{},{}\n", fmt_f64(r.epsilon), fmt_f64(r.distance), fmt_f64(r.residual), r.iterations));
    }
    write_file(&cfg.out.join("distance.csv"), csv.as_bytes())?;
    s.num("distance", report.distance);
    write_file(&cfg.out.join("summary.txt"), s.render().as_bytes())?;
    Ok((true, format!("distance = {}", fmt_f64(report.distance))))
}

fn run_contract(cfg: &RunConfig) -> Result<(bool, String), CliError> {
    let ks = cfg.structure()?;
    let (a, b) = endpoints(cfg, &ks)?;
    ensure_dir(&cfg.out)?;
    let mut s = header(cfg);
    s.num("t_flow", cfg.t_flow).set("m", cfg.geodesic.m);
    let r = match contraction_experiment(&ks, &a, &b, cfg.t_flow, &cfg.flow, cfg.geodesic.m) {
        Ok(r) => r,
        Err(e) => {
            s.set("converged", false).set("failure", &e);
            write_file(&cfg.out.join("summary.txt"), s.render().as_bytes())?;
            return Err(e.into());
        }
    };
    let csv = format!(
        "quantity,before,after\ndistance,{},{}\ncurve_energy,{},{}\n",
        fmt_f64(r.d_before),
        fmt_f64(r.d_after),
        fmt_f64(r.energy_before),
        fmt_f64(r.energy_after)
    );
    write_file(&cfg.out.join("contraction.csv"), csv.as_bytes())?;
    s.set("converged", true)
        .num("d_before", r.d_before)
        .num("d_after", r.d_after)
        .num("curve_energy_before", r.energy_before)
        .num("curve_energy_after", r.energy_after)
        .set("distance_contracted", r.d_after <= r.d_before + 1e-6)
        .set("energy_contracted", r.energy_after <= r.energy_before + 1e-6);
    write_file(&cfg.out.join("summary.txt"), s.render().as_bytes())?;
    Ok((true, format!("distance {} -> {}", fmt_f64(r.d_before), fmt_f64(r.d_after))))
}

/// One named check of a finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub ok: bool,
    pub detail: String,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()))
}

/// Monotonicity and conservation checks over consecutive diagnostics rows.
pub fn row_checks(rows: &[DiagnosticsRow]) -> Vec<Check> {
    let first_bad = |pred: &dyn Fn(&DiagnosticsRow, &DiagnosticsRow) -> bool| {
        rows.windows(2).find(|w| !pred(&w[0], &w[1])).map(|w| w[1].step)
    };
    let mk = |name: &'static str, bad: Option<usize>| Check {
        name,
        ok: bad.is_none(),
        detail: bad.map_or("ok".into(), |s| format!("violated at step {s}")),
    };
    vec![
        mk("E nonincreasing", first_bad(&|a, b| b.e <= a.e + 1e-10 * (1.0 + a.e))),
        mk("J nonincreasing", first_bad(&|a, b| b.j <= a.j + 1e-10 * (1.0 + a.e))),
        mk("max sigma nonincreasing", first_bad(&|a, b| b.max_sigma <= a.max_sigma + 1e-8 * (1.0 + a.max_sigma))),
        mk("min sigma nondecreasing", first_bad(&|a, b| b.min_sigma >= a.min_sigma - 1e-8 * (1.0 + a.max_sigma))),
        mk("I conserved", rows.iter().find(|r| r.i.abs() > 1e-8).map(|r| r.step)),
    ]
}

pub fn diagnose(cfg: &RunConfig, dir: &Path) -> Result<Vec<Check>, CliError> {
    let csv = String::from_utf8_lossy(&read_file(&dir.join("diagnostics.csv"))?).into_owned();
    let rows = parse_diagnostics(&csv).map_err(CliError::Diagnose)?;
    let last = *rows.last().ok_or_else(|| CliError::Diagnose("diagnostics.csv has no rows".into()))?;
    let snap = decode_snapshot(&read_file(&dir.join("final.bin"))?).map_err(CliError::Diagnose)?;
    let ks = cfg.structure()?;
    if snap.phi.lattice() != ks.lattice() {
        return Err(CliError::Diagnose("final snapshot lattice differs from the configured lattice".into()));
    }
    let r = functional_report(&ks, &snap.phi)?;
    let mut checks = vec![Check {
        name: "snapshot time matches last row",
        ok: snap.t.to_bits() == last.t.to_bits(),
        detail: format!("{} vs {}", fmt_f64(snap.t), fmt_f64(last.t)),
    }];
    for (name, recomputed, recorded) in [
        ("c recomputed", r.c, last.c),
        ("J recomputed", r.j, last.j),
        ("E recomputed", r.e, last.e),
        ("I recomputed", r.i, last.i),
        ("residual recomputed", r.residual, last.residual),
    ] {
        checks.push(Check {
            name,
            ok: close(recomputed, recorded),
            detail: format!("{} vs {}", fmt_f64(recomputed), fmt_f64(recorded)),
        });
    }
    checks.extend(row_checks(&rows));
    Ok(checks)
}

fn run_diagnose(cfg: &RunConfig) -> Result<(bool, String), CliError> {
    let checks = diagnose(cfg, cfg.run_dir())?;
    let mut s = header(cfg);
    s.set("run_dir", cfg.run_dir().display());
    for c in &checks {
        s.set(&c.name.replace(' ', "_"), if c.ok { "ok".to_string() } else { c.detail.clone() });
    }
    let ok = checks.iter().all(|c| c.ok);
    s.set("passed", ok);
    ensure_dir(&cfg.out)?;
    write_file(&cfg.out.join("diagnose.txt"), s.render().as_bytes())?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.ok).map(|c| c.name).collect();
    let message = if ok { format!("{} checks passed", checks.len()) } else { format!("failed: {}", failed.join(", ")) };
    Ok((ok, message))
}
