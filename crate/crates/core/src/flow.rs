//! Time integration of `∂φ/∂t = c − σ`.
//!
//! Steps are classical four-stage Runge–Kutta. A step is accepted only when
//! the metric stays positive and E does not increase; otherwise the step is
//! halved and retried. After each accepted step φ is shifted back onto I = 0.

use crate::error::{JflowError, Result};
use crate::functionals::{
    c_of_metric, e_energy, i_with_metric, j_from_zero, normalize_with_metric, FunctionalReport,
};
use crate::kahler::{
    assemble_metric, sigma, t_tensor, wedge_point,
    KahlerStructure, MetricField, POSITIVITY_FLOOR,
};
use crate::lattice::{ddbar, holo_gradient, tabulate, weighted_sum, ScalarField};

/// |λ| on the negative real axis up to which RK4 is stable.
const RK4_REAL_STABILITY: f64 = 2.78;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSettings {
    pub t_max: f64,
    pub residual_tol: f64,
    /// Initial step; `None` picks `0.1·h²·(min eig g₀)²/(max eig χ)`.
    pub dt0: Option<f64>,
    pub dt_growth: f64,
    /// Fraction of the estimated RK4 stability limit used as a step cap.
    pub cfl_safety: f64,
    pub max_halvings: usize,
    pub max_steps: usize,
    /// Margin handed to `choose_c0` for the T monitor.
    pub c0_margin: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self {
            t_max: 50.0,
            residual_tol: 1e-6,
            dt0: None,
            dt_growth: 1.05,
            cfl_safety: 0.5,
            max_halvings: 30,
            max_steps: 1_000_000,
            c0_margin: 0.1,
        }
    }
}

impl FlowSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(JflowError::InvalidStructure(format!("flow settings: {what}")));
        if !(self.t_max >= 0.0) {
            return bad("t_max must be non-negative");
        }
        if !(self.residual_tol > 0.0) {
            return bad("residual_tol must be positive");
        }
        if let Some(dt) = self.dt0 {
            if !(dt > 0.0) {
                return bad("dt0 must be positive");
            }
        }
        if !(self.dt_growth >= 1.0) || !(self.cfl_safety > 0.0) || !(self.c0_margin > 0.0) {
            return bad("dt_growth ≥ 1, cfl_safety > 0 and c0_margin > 0 are required");
        }
        Ok(())
    }
}

/// Pointwise monitors recorded alongside the functionals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monitors {
    pub min_sigma: f64,
    pub max_sigma: f64,
    pub min_eig_g: f64,
    pub max_f: f64,
    pub max_eig_t: f64,
    pub dissipation: f64,
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub step: usize,
    pub t: f64,
    /// Step that produced this state (0 for the initial state).
    pub dt_taken: f64,
    /// Step proposed for the next attempt.
    pub dt: f64,
    pub phi: ScalarField,
    pub report: FunctionalReport,
    pub monitors: Monitors,
}

/// One diagnostics row, in the column order of the CSV output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub c: f64,
    pub j: f64,
    pub e: f64,
    pub i: f64,
    pub min_sigma: f64,
    pub max_sigma: f64,
    pub residual: f64,
    pub min_eig_g: f64,
    pub max_f: f64,
    pub max_eig_t: f64,
    pub dissipation: f64,
}

impl FlowState {
    pub fn row(&self) -> DiagnosticsRow {
        let (r, m) = (&self.report, &self.monitors);
        DiagnosticsRow {
            step: self.step,
            t: self.t,
            dt: self.dt_taken,
            c: r.c,
            j: r.j,
            e: r.e,
            i: r.i,
            min_sigma: m.min_sigma,
            max_sigma: m.max_sigma,
            residual: r.residual,
            min_eig_g: m.min_eig_g,
            max_f: m.max_f,
            max_eig_t: m.max_eig_t,
            dissipation: m.dissipation,
        }
    }
}

/// c − σ
pub fn rhs(ks: &KahlerStructure, phi: &ScalarField) -> Result<ScalarField> {
    let g0 = *ks.g0();
    let x = ks.chi().values();
    let hess = ddbar(phi);
    let h = hess.values();
    // σ = tr(adj(g)χ)/det g, so no inverse is formed
    let packed = tabulate(h.len(), |i| {
        let g = h[i] + g0;
        let det = g.det().re;
        (g.hermitian_eigs().0, wedge_point(&g, &x[i]) / det, det)
    });
    if let Some((location, p)) = packed
        .iter()
        .enumerate()
        .filter(|(_, p)| !(p.0 > POSITIVITY_FLOOR))
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
    {
        return Err(JflowError::NotKahler { min_eig: p.0, location });
    }
    let num: f64 = packed.iter().map(|p| p.1 * p.2).sum();
    let den: f64 = packed.iter().map(|p| p.2).sum();
    let c = num / den;
    Ok(ScalarField::from_vec(*phi.lattice(), packed.iter().map(|p| c - p.1).collect()))
}

fn rhs_of_metric(m: &MetricField, ks: &KahlerStructure) -> ScalarField {
    let c = c_of_metric(m, ks.chi());
    sigma(m, ks.chi()).map(|s| c - s)
}

/// Smallest eigenvalue of `c·g − χ` over the lattice, and whether it is positive.
pub fn necessary_condition(ks: &KahlerStructure, phi: &ScalarField, c: f64) -> Result<(bool, f64)> {
    let m = assemble_metric(ks, phi)?;
    let margin = m
        .g()
        .zip_map(ks.chi(), |g, x| *g * c - *x)
        .values()
        .iter()
        .map(|t| t.hermitian_eigs().0)
        .fold(f64::INFINITY, f64::min);
    Ok((margin > 0.0, margin))
}

/// Largest eigenvalue of `T = g − C₀χ` (relative to χ) at the state.
pub fn monitor_t(state: &FlowState, ks: &KahlerStructure, c0: f64) -> Result<f64> {
    let m = assemble_metric(ks, &state.phi)?;
    Ok(t_tensor(&m, ks.chi(), c0).1)
}

/// Default initial step `0.1·h²·(min eig g₀)²/(max eig χ)`.
pub fn default_dt0(ks: &KahlerStructure) -> f64 {
    let h = ks.lattice().spacing();
    let lo = ks.g0().hermitian_eigs().0;
    0.1 * h * h * lo * lo / ks.chi_max_eig()
}

struct Evaluation {
    report: FunctionalReport,
    monitors: Monitors,
    /// largest generalized eigenvalue of (g, χ)
    top_gen: f64,
    /// upper bound on the spectral radius of the linearized right-hand side
    stiffness: f64,
}

/// All diagnostics of a state in one sweep; `max_eig_t` is filled in by the caller.
fn evaluate(ks: &KahlerStructure, phi: &ScalarField, m: &MetricField) -> Result<Evaluation> {
    let lat = *m.lattice();
    let n = lat.n();
    let chi = ks.chi();
    let (x, g, inv, det) = (chi.values(), m.g().values(), m.inverse().values(), m.det().values());
    let s = sigma(m, chi);
    let b = holo_gradient(&s);
    let pointwise = tabulate(lat.len(), |i| {
        let a = (inv[i] * x[i] * inv[i]).hermitian_part();
        [
            a.quad_form(&b[i][..n]).re,
            (x[i].inverse().expect("chi positive") * g[i]).trace().re,
            g[i].generalized_eigs(&x[i]).1,
            a.hermitian_eigs().1,
        ]
    });
    let c = c_of_metric(m, chi);
    let report = FunctionalReport {
        c,
        i: i_with_metric(ks, phi, m),
        j: j_from_zero(ks, phi, m)?,
        e: e_energy(m, chi),
        residual: s.values().iter().map(|v| (v - c).abs()).fold(0.0, f64::max),
    };
    let q: Vec<f64> = pointwise.iter().map(|p| p[0]).collect();
    let dissipation = 2.0 * weighted_sum(&lat, &q, det);
    let top_gen = pointwise.iter().map(|p| p[2]).fold(f64::NEG_INFINITY, f64::max);
    let h = lat.spacing();
    let stiffness = pointwise.iter().map(|p| p[3]).fold(0.0, f64::max) * n as f64 / (2.0 * h * h);
    let monitors = Monitors {
        min_sigma: s.min(),
        max_sigma: s.max(),
        min_eig_g: m.min_eig(),
        max_f: pointwise.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max),
        max_eig_t: f64::NAN,
        dissipation,
    };
    Ok(Evaluation { report, monitors, top_gen, stiffness })
}

fn rk4(ks: &KahlerStructure, phi: &ScalarField, m: &MetricField, dt: f64) -> Result<ScalarField> {
    let k1 = rhs_of_metric(m, ks);
    let k2 = rhs(ks, &phi.axpy(0.5 * dt, &k1))?;
    let k3 = rhs(ks, &phi.axpy(0.5 * dt, &k2))?;
    let k4 = rhs(ks, &phi.axpy(dt, &k3))?;
    let (a, b, c, d) = (k1.values(), k2.values(), k3.values(), k4.values());
    let w = dt / 6.0;
    let values = phi.values().iter().enumerate().map(|(i, p)| p + w * (a[i] + 2.0 * (b[i] + c[i]) + d[i])).collect();
    ScalarField::new(*phi.lattice(), values).map_err(|_| JflowError::NonFiniteField { location: 0 })
}

/// Build the initial state: φ₀ normalized onto I = 0 with all diagnostics.
pub fn initial_state(ks: &KahlerStructure, phi0: &ScalarField, settings: &FlowSettings) -> Result<(FlowState, f64)> {
    initial(ks, phi0, settings).map(|(state, c0, _)| (state, c0))
}

fn initial(ks: &KahlerStructure, phi0: &ScalarField, settings: &FlowSettings) -> Result<(FlowState, f64, MetricField)> {
    settings.validate()?;
    if *phi0.lattice() != *ks.lattice() {
        return Err(JflowError::LatticeMismatch);
    }
    // a constant shift leaves the metric unchanged
    let m = assemble_metric(ks, phi0)?;
    let phi = normalize_with_metric(ks, phi0, &m);
    let ev = evaluate(ks, &phi, &m)?;
    let c0 = (1.0 + settings.c0_margin) * ev.top_gen;
    let monitors = Monitors { max_eig_t: ev.top_gen - c0, ..ev.monitors };
    let dt = settings.dt0.unwrap_or_else(|| default_dt0(ks));
    Ok((FlowState { step: 0, t: 0.0, dt_taken: 0.0, dt, phi, report: ev.report, monitors }, c0, m))
}

/// One accepted step from `state`, using `state.dt` as the first attempt.
pub fn step(state: &FlowState, ks: &KahlerStructure, settings: &FlowSettings, c0: f64) -> Result<FlowState> {
    let m = assemble_metric(ks, &state.phi)?;
    step_limited(state, &m, ks, settings, c0, f64::INFINITY).map(|(s, _)| s)
}

fn step_limited(
    state: &FlowState,
    m_old: &MetricField,
    ks: &KahlerStructure,
    settings: &FlowSettings,
    c0: f64,
    limit: f64,
) -> Result<(FlowState, MetricField)> {
    let e_old = state.report.e;
    let clamped = state.dt > limit;
    let mut dt = state.dt.min(limit);
    let mut halvings = 0;
    loop {
        if let Some((phi, m, ev)) = attempt(state, ks, m_old, dt, e_old)? {
            let cap = settings.cfl_safety * RK4_REAL_STABILITY / ev.stiffness;
            let base = if clamped { state.dt } else { dt };
            let grown = if halvings == 0 { base * settings.dt_growth } else { base };
            let next = FlowState {
                step: state.step + 1,
                t: if clamped { state.t + limit } else { state.t + dt },
                dt_taken: dt,
                dt: grown.min(cap.max(dt)),
                phi,
                report: ev.report,
                monitors: Monitors { max_eig_t: ev.top_gen - c0, ..ev.monitors },
            };
            return Ok((next, m));
        }
        if halvings == settings.max_halvings {
            return Err(JflowError::StepFailure { t: state.t, dt, rejections: halvings + 1 });
        }
        halvings += 1;
        dt *= 0.5;
    }
}

fn attempt(
    state: &FlowState,
    ks: &KahlerStructure,
    m_old: &MetricField,
    dt: f64,
    e_old: f64,
) -> Result<Option<(ScalarField, MetricField, Evaluation)>> {
    let raw = match rk4(ks, &state.phi, m_old, dt) {
        Ok(p) => p,
        Err(JflowError::NotKahler { .. }) | Err(JflowError::NonFiniteField { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let m = match assemble_metric(ks, &raw) {
        Ok(m) => m,
        Err(JflowError::NotKahler { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let e_new = e_energy(&m, ks.chi());
    if !(e_new <= e_old + 1e-10 * (1.0 + e_old)) {
        return Ok(None);
    }
    let phi = normalize_with_metric(ks, &raw, &m);
    let ev = evaluate(ks, &phi, &m)?;
    Ok(Some((phi, m, ev)))
}

/// Outcome of a run: every diagnostics row, the last accepted state and why it stopped.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub rows: Vec<DiagnosticsRow>,
    pub final_state: FlowState,
    pub converged: bool,
    pub failure: Option<JflowError>,
    pub c0: f64,
    /// Lower bound for min eig g predicted from the initial σ.
    pub metric_floor: f64,
}

/// A flow in progress. The metric of the current state is kept between steps.
pub struct Flow<'a> {
    ks: &'a KahlerStructure,
    settings: FlowSettings,
    c0: f64,
    state: FlowState,
    metric: MetricField,
}

impl<'a> Flow<'a> {
    pub fn new(ks: &'a KahlerStructure, phi0: &ScalarField, settings: FlowSettings) -> Result<Self> {
        let (state, c0, metric) = initial(ks, phi0, &settings)?;
        Ok(Self { ks, settings, c0, state, metric })
    }

    pub fn state(&self) -> &FlowState {
        &self.state
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn settings(&self) -> &FlowSettings {
        &self.settings
    }

    pub fn into_state(self) -> FlowState {
        self.state
    }

    pub fn converged(&self) -> bool {
        self.state.report.residual < self.settings.residual_tol
    }

    /// Take one accepted step, never passing `t_max`.
    pub fn step(&mut self) -> Result<&FlowState> {
        let limit = self.settings.t_max - self.state.t;
        self.advance(limit)?;
        Ok(&self.state)
    }

    /// Integrate until exactly time `t`, regardless of convergence.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        while self.state.t < t {
            self.advance(t - self.state.t)?;
        }
        Ok(())
    }

    fn advance(&mut self, limit: f64) -> Result<()> {
        let (state, metric) = step_limited(&self.state, &self.metric, self.ks, &self.settings, self.c0, limit)?;
        self.state = state;
        self.metric = metric;
        Ok(())
    }

    /// Run to convergence or `t_max`, calling `observe` on every state including the first.
    pub fn run_observed(mut self, mut observe: impl FnMut(&FlowState)) -> Trajectory {
        let floor = self.ks.chi_min_eig() / self.state.monitors.max_sigma;
        let mut rows = vec![self.state.row()];
        observe(&self.state);
        let mut failure = None;
        while !self.converged() && self.state.t < self.settings.t_max && self.state.step < self.settings.max_steps {
            match self.step() {
                Ok(s) => {
                    rows.push(s.row());
                    observe(s);
                }
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        Trajectory {
            rows,
            converged: self.converged(),
            final_state: self.state,
            failure,
            c0: self.c0,
            metric_floor: floor,
        }
    }

    pub fn run(self) -> Trajectory {
        self.run_observed(|_| {})
    }
}
