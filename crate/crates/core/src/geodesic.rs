//! ε-approximate geodesics between two potentials.
//!
//! The boundary-value problem `(φ_tt − ½|∇φ_t|²) det g = ε det g₀` is solved on
//! uniform time nodes t_k = k/m by damped Newton iterations. Each linear
//! system is handled matrix-free by GMRES, preconditioned with the
//! second-difference-in-time part of the Jacobian, which is tridiagonal at
//! every lattice point.

use num_complex::Complex64;

use crate::error::{JflowError, Result};
use crate::flow::{Flow, FlowSettings};
use crate::functionals::{curve_energy, curve_length, j_increment, normalize_to_h0};
use crate::hmat::HMat;
use crate::kahler::{assemble_metric, KahlerStructure, POSITIVITY_FLOOR};
use crate::krylov::{gmres, GmresSettings};
use crate::lattice::{ddbar, holo_gradient, tabulate, Lattice, ScalarField};
use crate::path::PathInH;

#[derive(Clone, Debug)]
pub struct GeodesicProblem {
    pub phi_a: ScalarField,
    pub phi_b: ScalarField,
    pub epsilon: f64,
    /// Number of time intervals; nodes are t₀ … t_m.
    pub m: usize,
    /// Target for max |R| over all interior nodes.
    pub tol: f64,
    pub max_iterations: usize,
}

impl GeodesicProblem {
    pub fn new(phi_a: ScalarField, phi_b: ScalarField, epsilon: f64) -> Self {
        Self { phi_a, phi_b, epsilon, m: 16, tol: 1e-8, max_iterations: 60 }
    }

    pub fn with_nodes(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Clone, Debug)]
pub struct GeodesicSolution<'a> {
    pub path: PathInH<'a>,
    pub epsilon: f64,
    /// max |R| of the returned path.
    pub residual: f64,
    /// Newton iterations, summed over continuation stages.
    pub iterations: usize,
}

/// Per-node quantities the residual and its linearization share.
struct NodeData {
    g: Vec<HMat>,
    det: Vec<f64>,
    /// ∂ of the centered velocity
    b: Vec<[Complex64; 2]>,
    phi_tt: Vec<f64>,
    residual: Vec<f64>,
}

fn node_data(ks: &KahlerStructure, nodes: &[ScalarField], k: usize, dt: f64, eps: f64) -> Result<NodeData> {
    let m = assemble_metric(ks, &nodes[k])?;
    let (prev, cur, next) = (nodes[k - 1].values(), nodes[k].values(), nodes[k + 1].values());
    let lat = *ks.lattice();
    let v = ScalarField::new(lat, tabulate(cur.len(), |i| (next[i] - prev[i]) / (2.0 * dt)))?;
    let phi_tt = tabulate(cur.len(), |i| (next[i] - 2.0 * cur[i] + prev[i]) / (dt * dt));
    let b = holo_gradient(&v);
    let g = m.g().values().to_vec();
    let det = m.det().values().to_vec();
    let n = lat.n();
    let eps_det0 = eps * ks.det_g0();
    let residual = tabulate(cur.len(), |i| {
        let grad_sq = g[i].adjugate().quad_form(&b[i][..n]).re;
        phi_tt[i] * det[i] - grad_sq - eps_det0
    });
    Ok(NodeData { g, det, b, phi_tt, residual })
}

/// R_k = (φ_tt − ½|∇φ_t|²) det g − ε det g₀ at every interior node, with centered differences in t.
pub fn geodesic_residual(path: &PathInH<'_>, eps: f64) -> Result<Vec<ScalarField>> {
    let m = path.intervals();
    let t = path.times();
    let dt = t[1] - t[0];
    if (1..m).any(|k| ((t[k + 1] - t[k]) - dt).abs() > 1e-12 * dt.max(1.0)) {
        return Err(JflowError::InvalidPath("the geodesic residual needs uniform time nodes".into()));
    }
    let lat = *path.ks().lattice();
    (1..m)
        .map(|k| node_data(path.ks(), path.potentials(), k, dt, eps).map(|d| ScalarField::from_vec(lat, d.residual)))
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

struct Newton<'a> {
    ks: &'a KahlerStructure,
    lat: Lattice,
    m: usize,
    dt: f64,
    eps: f64,
}

impl Newton<'_> {
    /// All interior residuals stacked, or None if some node left the cone.
    fn evaluate(&self, nodes: &[ScalarField]) -> Option<Vec<NodeData>> {
        (1..self.m).map(|k| node_data(self.ks, nodes, k, self.dt, self.eps).ok()).collect()
    }

    fn stacked(data: &[NodeData]) -> Vec<f64> {
        data.iter().flat_map(|d| d.residual.iter().copied()).collect()
    }

    /// Jacobian of the stacked residual applied to a stacked interior perturbation.
    fn jacobian(&self, data: &[NodeData], x: &[f64]) -> Vec<f64> {
        let len = self.lat.len();
        let n = self.lat.n();
        let node = |k: usize| -> &[f64] {
            if k == 0 || k == self.m {
                &[]
            } else {
                &x[(k - 1) * len..k * len]
            }
        };
        let at = |s: &[f64], i: usize| if s.is_empty() { 0.0 } else { s[i] };
        let mut out = Vec::with_capacity(x.len());
        for k in 1..self.m {
            let d = &data[k - 1];
            let (p, c, q) = (node(k - 1), node(k), node(k + 1));
            let dv = ScalarField::from_vec(self.lat, (0..len).map(|i| (at(q, i) - at(p, i)) / (2.0 * self.dt)).collect());
            let db = holo_gradient(&dv);
            let hd = ddbar(&ScalarField::from_vec(self.lat, c.to_vec()));
            let hv = hd.values();
            let dt2 = self.dt * self.dt;
            out.extend(tabulate(len, |i| {
                let dtt = (at(q, i) - 2.0 * c[i] + at(p, i)) / dt2;
                let adj = d.g[i].adjugate();
                let b = &d.b[i][..n];
                // b† A δb + δb† A b = 2 Re(b† A δb)
                let mut cross = Complex64::new(0.0, 0.0);
                for r in 0..n {
                    for s in 0..n {
                        cross += b[r].conj() * adj.get(r, s) * db[i][s];
                    }
                }
                let mut lin = dtt * d.det[i] - 2.0 * cross.re;
                if n == 2 {
                    let ah = hv[i].adjugate();
                    lin += d.phi_tt[i] * (adj * hv[i]).trace().re - ah.quad_form(b).re;
                } else {
                    lin += d.phi_tt[i] * hv[i].get(0, 0).re;
                }
                lin
            }));
        }
        out
    }

    /// Inverse of the per-point operator det_k (y_{k−1} − 2y_k + y_{k+1}) / Δt², zero boundary values.
    fn precondition(&self, data: &[NodeData], r: &[f64]) -> Vec<f64> {
        let len = self.lat.len();
        let inner = self.m - 1;
        let dt2 = self.dt * self.dt;
        let cols = tabulate(len, |i| {
            // Thomas algorithm for tridiag(1, −2, 1) y = r Δt²/det
            let mut c_prime = vec![0.0; inner];
            let mut d_prime = vec![0.0; inner];
            for k in 0..inner {
                let rhs = r[k * len + i] * dt2 / data[k].det[i];
                let denom = if k == 0 { -2.0 } else { -2.0 - c_prime[k - 1] };
                c_prime[k] = 1.0 / denom;
                d_prime[k] = if k == 0 { rhs / denom } else { (rhs - d_prime[k - 1]) / denom };
            }
            let mut y = vec![0.0; inner];
            for k in (0..inner).rev() {
                y[k] = if k + 1 < inner { d_prime[k] - c_prime[k] * y[k + 1] } else { d_prime[k] };
            }
            y
        });
        let mut out = vec![0.0; r.len()];
        for (i, col) in cols.iter().enumerate() {
            for (k, y) in col.iter().enumerate() {
                out[k * len + i] = *y;
            }
        }
        out
    }
}

enum Stage {
    Converged { nodes: Vec<ScalarField>, residual: f64, iterations: usize },
    Stalled { iterations: usize, best: f64 },
}

fn newton_stage(ks: &KahlerStructure, mut nodes: Vec<ScalarField>, eps: f64, tol: f64, max_iterations: usize) -> Stage {
    let m = nodes.len() - 1;
    let lat = *ks.lattice();
    let solver = Newton { ks, lat, m, dt: 1.0 / m as f64, eps };
    let Some(mut data) = solver.evaluate(&nodes) else {
        return Stage::Stalled { iterations: 0, best: f64::INFINITY };
    };
    let mut r = Newton::stacked(&data);
    let mut best = max_abs(&r);
    let gm = GmresSettings::default();
    for it in 0..max_iterations {
        if best < tol {
            return Stage::Converged { nodes, residual: best, iterations: it };
        }
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let step = gmres(|v| solver.jacobian(&data, v), |v| solver.precondition(&data, v), &rhs, &gm);
        let f0 = sum_sq(&r);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<ScalarField> = nodes
                .iter()
                .enumerate()
                .map(|(k, phi)| {
                    if k == 0 || k == m {
                        phi.clone()
                    } else {
                        let d = &step.x[(k - 1) * lat.len()..k * lat.len()];
                        ScalarField::from_vec(lat, phi.values().iter().zip(d).map(|(p, d)| p + alpha * d).collect())
                    }
                })
                .collect();
            if let Some(td) = solver.evaluate(&trial) {
                if td.iter().all(|d| d.g.iter().all(|g| g.hermitian_eigs().0 > POSITIVITY_FLOOR)) {
                    let tr = Newton::stacked(&td);
                    if sum_sq(&tr) <= (1.0 - 2e-4 * alpha) * f0 {
                        accepted = Some((trial, td, tr));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, td, tr)) = accepted else {
            return Stage::Stalled { iterations: it + 1, best };
        };
        nodes = trial;
        data = td;
        r = tr;
        best = max_abs(&r);
    }
    if best < tol {
        Stage::Converged { nodes, residual: best, iterations: max_iterations }
    } else {
        Stage::Stalled { iterations: max_iterations, best }
    }
}

fn straight_line(a: &ScalarField, b: &ScalarField, m: usize) -> Vec<ScalarField> {
    (0..=m)
        .map(|k| {
            let s = k as f64 / m as f64;
            a.zip_map(b, |x, y| (1.0 - s) * x + s * y)
        })
        .collect()
}

/// Solve from the straight segment, falling back to ε-continuation from 0.1 if that stalls.
pub fn solve<'a>(ks: &'a KahlerStructure, problem: &GeodesicProblem) -> Result<GeodesicSolution<'a>> {
    let initial = straight_line(&problem.phi_a, &problem.phi_b, problem.m);
    solve_from(ks, problem, initial)
}

/// Solve from a given initial curve whose end nodes are replaced by the problem's endpoints.
pub fn solve_from<'a>(ks: &'a KahlerStructure, problem: &GeodesicProblem, mut initial: Vec<ScalarField>) -> Result<GeodesicSolution<'a>> {
    if problem.m < 2 {
        return Err(JflowError::InvalidPath("a geodesic needs at least two intervals".into()));
    }
    if !(problem.epsilon > 0.0) || !(problem.tol > 0.0) {
        return Err(JflowError::InvalidPath("epsilon and tol must be positive".into()));
    }
    if initial.len() != problem.m + 1 {
        return Err(JflowError::InvalidPath("initial curve has the wrong number of nodes".into()));
    }
    assemble_metric(ks, &problem.phi_a)?;
    assemble_metric(ks, &problem.phi_b)?;
    initial[0] = problem.phi_a.clone();
    initial[problem.m] = problem.phi_b.clone();
    let m = problem.m;
    if problem.phi_a == problem.phi_b {
        // identical endpoints: the limiting geodesic is the constant curve
        let path = PathInH::uniform(ks, vec![problem.phi_a.clone(); m + 1])?;
        let residual = geodesic_residual(&path, problem.epsilon)?.iter().map(|r| r.sup_norm()).fold(0.0, f64::max);
        return Ok(GeodesicSolution { path, epsilon: problem.epsilon, residual, iterations: 0 });
    }
    let finish = |nodes: Vec<ScalarField>, residual: f64, iterations: usize| -> Result<GeodesicSolution<'a>> {
        Ok(GeodesicSolution { path: PathInH::uniform(ks, nodes)?, epsilon: problem.epsilon, residual, iterations })
    };
    let (mut total, mut best) = match newton_stage(ks, initial, problem.epsilon, problem.tol, problem.max_iterations) {
        Stage::Converged { nodes, residual, iterations } => return finish(nodes, residual, iterations),
        Stage::Stalled { iterations, best } => (iterations, best),
    };
    let mut schedule = Vec::new();
    let mut e = 0.1;
    while e > problem.epsilon * (1.0 + 1e-12) {
        schedule.push(e);
        e *= 0.1;
    }
    schedule.push(problem.epsilon);
    let mut nodes = straight_line(&problem.phi_a, &problem.phi_b, m);
    for (j, &eps) in schedule.iter().enumerate() {
        let last = j + 1 == schedule.len();
        // intermediate stages only need to land close enough to warm-start the next one
        let tol = if last { problem.tol } else { problem.tol.max(1e-6) };
        match newton_stage(ks, nodes, eps, tol, problem.max_iterations) {
            Stage::Converged { nodes: solved, residual, iterations } => {
                total += iterations;
                if last {
                    return finish(solved, residual, total);
                }
                nodes = solved;
            }
            Stage::Stalled { iterations, best: b } => {
                total += iterations;
                best = best.min(b);
                return Err(JflowError::NoConvergence { iterations: total, best_residual: best });
            }
        }
    }
    Err(JflowError::NoConvergence { iterations: total, best_residual: best })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceSample {
    pub epsilon: f64,
    pub distance: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceReport {
    /// Length of the geodesic at the smallest ε.
    pub distance: f64,
    pub trend: Vec<DistanceSample>,
}

pub const DISTANCE_EPSILONS: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Geodesic distance, measured as the length of the ε-geodesic at ε = 1e−4.
pub fn distance(ks: &KahlerStructure, phi_a: &ScalarField, phi_b: &ScalarField) -> Result<DistanceReport> {
    distance_with(ks, phi_a, phi_b, 16, 1e-8)
}

pub fn distance_with(ks: &KahlerStructure, phi_a: &ScalarField, phi_b: &ScalarField, m: usize, tol: f64) -> Result<DistanceReport> {
    if phi_a == phi_b {
        let trend = DISTANCE_EPSILONS
            .iter()
            .map(|&epsilon| DistanceSample { epsilon, distance: 0.0, residual: 0.0, iterations: 0 })
            .collect();
        return Ok(DistanceReport { distance: 0.0, trend });
    }
    let mut trend = Vec::new();
    let mut warm: Option<Vec<ScalarField>> = None;
    for &eps in &DISTANCE_EPSILONS {
        let problem = GeodesicProblem::new(phi_a.clone(), phi_b.clone(), eps).with_nodes(m).with_tol(tol);
        let sol = match warm.take() {
            Some(init) => solve_from(ks, &problem, init).or_else(|_| solve(ks, &problem))?,
            None => solve(ks, &problem)?,
        };
        trend.push(DistanceSample {
            epsilon: eps,
            distance: curve_length(&sol.path),
            residual: sol.residual,
            iterations: sol.iterations,
        });
        warm = Some(sol.path.into_potentials());
    }
    Ok(DistanceReport { distance: trend.last().map_or(0.0, |s| s.distance), trend })
}

/// J at every node of a path, accumulated from J(0 → φ₀) chord by chord.
pub fn convexity_profile(path: &PathInH<'_>) -> Result<Vec<f64>> {
    let ks = path.ks();
    let mut acc = j_increment(ks, &ScalarField::zeros(*ks.lattice()), path.node(0))?;
    let mut out = vec![acc];
    for k in 0..path.intervals() {
        acc += j_increment(ks, path.node(k), path.node(k + 1))?;
        out.push(acc);
    }
    Ok(out)
}

/// Second differences of a uniformly sampled profile.
pub fn second_differences(values: &[f64]) -> Vec<f64> {
    values.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub d_before: f64,
    pub d_after: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    pub before: DistanceReport,
    pub after: DistanceReport,
}

/// Flow both endpoints (and every node of the straight curve between them) for time `t_flow`
/// and compare distances and curve energies before and after.
pub fn contraction_experiment(
    ks: &KahlerStructure,
    phi_a: &ScalarField,
    phi_b: &ScalarField,
    t_flow: f64,
    settings: &FlowSettings,
    m: usize,
) -> Result<ContractionReport> {
    let a = normalize_to_h0(ks, phi_a)?;
    let b = normalize_to_h0(ks, phi_b)?;
    let curve: Vec<ScalarField> =
        straight_line(&a, &b, m).iter().map(|p| normalize_to_h0(ks, p)).collect::<Result<_>>()?;
    let energy_before = curve_energy(&PathInH::uniform(ks, curve.clone())?);
    let before = distance_with(ks, &a, &b, m, 1e-8)?;
    let settings = FlowSettings { t_max: settings.t_max.max(t_flow), ..settings.clone() };
    let evolve = |phi: &ScalarField| -> Result<ScalarField> {
        let mut flow = Flow::new(ks, phi, settings.clone())?;
        flow.advance_to(t_flow)?;
        Ok(flow.into_state().phi)
    };
    let evolved: Vec<ScalarField> = curve.iter().map(&evolve).collect::<Result<_>>()?;
    let energy_after = curve_energy(&PathInH::uniform(ks, evolved.clone())?);
    let (a1, b1) = (&evolved[0], &evolved[m]);
    let after = distance_with(ks, a1, b1, m, 1e-8)?;
    Ok(ContractionReport {
        d_before: before.distance,
        d_after: after.distance,
        energy_before,
        energy_after,
        before,
        after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::covariant_derivative;
    use crate::path::TangentField;
    use std::f64::consts::PI;

    fn ks1(pts: usize) -> KahlerStructure {
        KahlerStructure::constant(Lattice::unit(1, pts).unwrap(), HMat::identity(1), HMat::identity(1)).unwrap()
    }

    #[test]
    fn residual_of_constant_linear_path() {
        let ks = ks1(16);
        let lat = *ks.lattice();
        let p = PathInH::linear(&ks, &ScalarField::constant(lat, 0.3), &ScalarField::constant(lat, -0.2), 8).unwrap();
        let r0 = geodesic_residual(&p, 0.0).unwrap();
        assert!(r0.iter().all(|r| r.sup_norm() < 1e-12));
        let r1 = geodesic_residual(&p, 0.01).unwrap();
        assert!(r1.iter().all(|r| r.values().iter().all(|v| (v + 0.01).abs() < 1e-12)));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for n in [1usize, 2] {
            let lat = Lattice::unit(n, 8).unwrap();
            let ks = KahlerStructure::constant(lat, HMat::scalar(n, 1.5), HMat::identity(n)).unwrap();
            let a = ScalarField::from_fn(lat, |x| 0.02 * (2.0 * PI * x[0]).sin());
            let b = ScalarField::from_fn(lat, |x| 0.02 * (2.0 * PI * (x[1] + x[n + n - 1])).cos());
            let m = 4;
            let mut nodes = straight_line(&a, &b, m);
            nodes[2] = nodes[2].map(|v| v * 1.1 + 0.01);
            let solver = Newton { ks: &ks, lat, m, dt: 0.25, eps: 1e-3 };
            let data = solver.evaluate(&nodes).unwrap();
            let r0 = Newton::stacked(&data);
            let dir: Vec<f64> = (0..(m - 1) * lat.len()).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect();
            let jv = solver.jacobian(&data, &dir);
            let h = 1e-6;
            let pert: Vec<ScalarField> = nodes
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    if k == 0 || k == m {
                        p.clone()
                    } else {
                        let d = &dir[(k - 1) * lat.len()..k * lat.len()];
                        ScalarField::from_vec(lat, p.values().iter().zip(d).map(|(x, y)| x + h * y).collect())
                    }
                })
                .collect();
            let r1 = Newton::stacked(&solver.evaluate(&pert).unwrap());
            let fd: Vec<f64> = r1.iter().zip(&r0).map(|(a, b)| (a - b) / h).collect();
            let err = fd.iter().zip(&jv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-4 * (1.0 + max_abs(&jv)), "n = {n}: {err}");
        }
    }

    #[test]
    fn constant_endpoints_give_parabola() {
        let ks = ks1(8);
        let lat = *ks.lattice();
        let (a, b) = (0.4, -0.1);
        let eps = 1e-3;
        let p = GeodesicProblem::new(ScalarField::constant(lat, a), ScalarField::constant(lat, b), eps).with_nodes(8);
        let sol = solve(&ks, &p).unwrap();
        assert!(sol.residual < 1e-8);
        for (k, node) in sol.path.potentials().iter().enumerate() {
            let t = k as f64 / 8.0;
            let exact = a + (b - a) * t + 0.5 * eps * t * (t - 1.0);
            assert!(node.values().iter().all(|v| (v - exact).abs() < 1e-10));
        }
        assert!((curve_length(&sol.path) - 0.5).abs() < 1e-12);
        let profile = convexity_profile(&sol.path).unwrap();
        assert_eq!(profile.len(), 9);
    }

    #[test]
    fn identical_endpoints() {
        let ks = ks1(8);
        let lat = *ks.lattice();
        let phi = ScalarField::from_fn(lat, |x| 0.03 * (2.0 * PI * x[0]).sin());
        let sol = solve(&ks, &GeodesicProblem::new(phi.clone(), phi.clone(), 1e-3)).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.path.potentials().iter().all(|p| *p == phi));
        assert_eq!(distance(&ks, &phi, &phi).unwrap().distance, 0.0);
    }

    #[test]
    fn solved_geodesic_is_certified_and_matches_covariant_derivative() {
        let ks = ks1(16);
        let lat = *ks.lattice();
        let b = ScalarField::from_fn(lat, |x| 0.05 * (2.0 * PI * x[0]).sin());
        let eps = 1e-3;
        let sol = solve(&ks, &GeodesicProblem::new(ScalarField::zeros(lat), b.clone(), eps).with_nodes(8)).unwrap();
        let r = geodesic_residual(&sol.path, eps).unwrap();
        assert!(r.iter().all(|x| x.sup_norm() < 1e-8));
        assert_eq!(sol.path.node(0).sup_norm(), 0.0);
        assert_eq!(*sol.path.node(8), b);
        let vel = TangentField::velocity(&sol.path);
        for k in 1..8 {
            let d = covariant_derivative(&sol.path, &vel, k).unwrap();
            let det = sol.path.node_det(k);
            for (i, v) in d.values().iter().enumerate() {
                assert!((v - eps / det.values()[i]).abs() < 1e-7);
            }
        }
        let second = second_differences(&convexity_profile(&sol.path).unwrap());
        assert!(second.iter().all(|&s| s > 0.0));
    }
}
