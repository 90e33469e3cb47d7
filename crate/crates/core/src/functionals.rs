//! Scalar functionals on potentials and on paths.
//!
//! I and J are only defined through their first variations, so they are
//! evaluated by integrating those variations along straight chords in
//! potential space. On each chord the integrand is a polynomial of degree ≤ n
//! in the chord parameter, so Simpson's rule is exact for n ≤ 2.

use num_complex::Complex64;

use crate::error::{JflowError, Result};
use crate::kahler::{
    assemble_metric, sigma, twisted_inverse, wedge_point, KahlerStructure, MetricField, POSITIVITY_FLOOR,
};
use crate::lattice::{
    d_holo_complex, ddbar, holo_gradient, tabulate, weighted_sum, HermitianField, ScalarField,
};
use crate::hmat::HMat;
use crate::path::{PathInH, TangentField};

/// c = ∫σ ωⁿ / ∫ωⁿ
pub fn c_constant(ks: &KahlerStructure, phi: &ScalarField) -> Result<f64> {
    let m = assemble_metric(ks, phi)?;
    Ok(c_of_metric(&m, ks.chi()))
}

pub(crate) fn c_of_metric(m: &MetricField, chi: &HermitianField) -> f64 {
    let s = sigma(m, chi);
    let lat = m.lattice();
    weighted_sum(lat, s.values(), m.det().values()) / m.det().sum_cells()
}

/// I along a path: Σ over chords of ∫∫ φ̇ det g.
pub fn i_value(path: &PathInH<'_>) -> f64 {
    (0..path.intervals())
        .map(|k| {
            let v = path.chord_velocity(k);
            path.dt(k) * path.chord_integral(k, &v, |x| x)
        })
        .sum()
}

/// I(φ) along the straight segment from 0.
pub fn i_of(ks: &KahlerStructure, phi: &ScalarField) -> Result<f64> {
    let m = assemble_metric(ks, phi)?;
    Ok(i_with_metric(ks, phi, &m))
}

/// I along 0 → φ given the metric of φ; the chord midpoint metric is (g₀ + g)/2.
pub(crate) fn i_with_metric(ks: &KahlerStructure, phi: &ScalarField, m: &MetricField) -> f64 {
    let g0 = *ks.g0();
    let d0 = ks.det_g0();
    let (p, g, det) = (phi.values(), m.g().values(), m.det().values());
    let dens = tabulate(p.len(), |i| {
        let dm = (g0 + (g[i] - g0) * 0.5).det().re;
        p[i] * ((d0 + det[i]) + 4.0 * dm) / 6.0
    });
    dens.iter().sum::<f64>() * ks.lattice().cell_volume()
}

/// Shift φ by a constant so that I(φ) = 0.
pub fn normalize_to_h0(ks: &KahlerStructure, phi: &ScalarField) -> Result<ScalarField> {
    let i = i_of(ks, phi)?;
    Ok(phi.add_constant(-i / ks.volume()))
}

pub(crate) fn normalize_with_metric(ks: &KahlerStructure, phi: &ScalarField, m: &MetricField) -> ScalarField {
    phi.add_constant(-i_with_metric(ks, phi, m) / ks.volume())
}

/// J(φ_to) − J(φ_from) along the straight segment, by Simpson refinement in s.
pub fn j_increment(ks: &KahlerStructure, phi_from: &ScalarField, phi_to: &ScalarField) -> Result<f64> {
    if phi_from.lattice() != ks.lattice() || phi_to.lattice() != ks.lattice() {
        return Err(JflowError::LatticeMismatch);
    }
    let delta = phi_to - phi_from;
    if delta.sup_norm() == 0.0 {
        return Ok(0.0);
    }
    let g0 = *ks.g0();
    let h_from = ddbar(phi_from).map(|h| *h + g0);
    let h_delta = ddbar(&delta);
    let (hf, hd) = (h_from.values(), h_delta.values());
    j_segment(ks, |i| hf[i], |i| hd[i], &delta)
}

/// J(φ) − J(0) given the metric of φ.
pub(crate) fn j_from_zero(ks: &KahlerStructure, phi: &ScalarField, m: &MetricField) -> Result<f64> {
    if phi.sup_norm() == 0.0 {
        return Ok(0.0);
    }
    let g0 = *ks.g0();
    let g = m.g().values();
    j_segment(ks, |_| g0, |i| g[i] - g0, phi)
}

/// Simpson refinement in s of ∫ δ · χ∧ω_s^{n−1}, ω_s = from + s·delta.
fn j_segment(
    ks: &KahlerStructure,
    from: impl Fn(usize) -> HMat + Sync + Send,
    delta_h: impl Fn(usize) -> HMat + Sync + Send,
    delta: &ScalarField,
) -> Result<f64> {
    let lat = *ks.lattice();
    let (x, dv) = (ks.chi().values(), delta.values());
    let integrand = |s: f64| -> Result<f64> {
        let vals = tabulate(dv.len(), |i| {
            let g = from(i) + delta_h(i) * s;
            (g.hermitian_eigs().0, dv[i] * wedge_point(&g, &x[i]))
        });
        let min_eig = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
        if !(min_eig > POSITIVITY_FLOOR) {
            return Err(JflowError::LeftKahlerCone { s, min_eig });
        }
        Ok(vals.iter().map(|v| v.1).sum::<f64>() * lat.cell_volume())
    };
    // values at s = j / 2^level
    let mut samples = vec![integrand(0.0)?, integrand(0.5)?, integrand(1.0)?];
    let simpson = |f: &[f64]| {
        let h = 1.0 / (f.len() - 1) as f64;
        let inner: f64 = f
            .iter()
            .enumerate()
            .skip(1)
            .take(f.len() - 2)
            .map(|(j, v)| if j % 2 == 1 { 4.0 * v } else { 2.0 * v })
            .sum();
        h / 3.0 * (f[0] + f[f.len() - 1] + inner)
    };
    let mut prev = simpson(&samples);
    for _ in 0..12 {
        let intervals = samples.len() - 1;
        let mut refined = Vec::with_capacity(2 * intervals + 1);
        for j in 0..intervals {
            refined.push(samples[j]);
            refined.push(integrand((2 * j + 1) as f64 / (2 * intervals) as f64)?);
        }
        refined.push(samples[intervals]);
        samples = refined;
        let next = simpson(&samples);
        let done = (next - prev).abs() < 1e-9;
        prev = next;
        if done {
            break;
        }
    }
    Ok(prev)
}

/// J along a piecewise-linear path, summed chord by chord.
pub fn j_along(path: &PathInH<'_>) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..path.intervals() {
        total += j_increment(path.ks(), path.node(k), path.node(k + 1))?;
    }
    Ok(total)
}

/// E = ∫ σ² ωⁿ
pub fn e_energy(m: &MetricField, chi: &HermitianField) -> f64 {
    let s = sigma(m, chi);
    let sq = s.map(|v| v * v);
    weighted_sum(m.lattice(), sq.values(), m.det().values())
}

/// D = 2∫ g^{αβ̄} σ_{,β̄} σ_{,r} g^{rδ̄} χ_{αδ̄} ωⁿ, the rate at which the flow dissipates E.
pub fn e_dissipation(m: &MetricField, chi: &HermitianField) -> f64 {
    let s = sigma(m, chi);
    let b = holo_gradient(&s);
    let a = twisted_inverse(m, chi);
    let n = m.lattice().n();
    let q = tabulate(b.len(), |i| a[i].quad_form(&b[i][..n]).re);
    2.0 * weighted_sum(m.lattice(), &q, m.det().values())
}

/// Divergence-form field of the Euler–Lagrange equation of E, weighted by det g:
/// Re Σ_r ∂_r(det g · g^{αβ̄} σ_{,β̄} χ_{αδ̄} g^{rδ̄}).
///
/// Its plain lattice sum vanishes, and pairing it with σ returns −D/2.
pub fn e_gradient_divergence(m: &MetricField, chi: &HermitianField) -> ScalarField {
    let lat = *m.lattice();
    let n = lat.n();
    let s = sigma(m, chi);
    let b = holo_gradient(&s);
    let a = twisted_inverse(m, chi);
    let det = m.det().values();
    let mut acc = vec![0.0; lat.len()];
    for r in 0..n {
        let y: Vec<Complex64> = tabulate(lat.len(), |i| {
            let mut v = Complex64::new(0.0, 0.0);
            for beta in 0..n {
                v += b[i][beta].conj() * a[i].get(beta, r);
            }
            v * det[i]
        });
        let dy = d_holo_complex(&lat, &y, r);
        for (t, d) in acc.iter_mut().zip(dy) {
            *t += d.re;
        }
    }
    ScalarField::new(lat, acc).expect("finite")
}

fn sum_terms(mut terms: Vec<f64>) -> f64 {
    // sorted so that a path and its reversal give bitwise equal totals
    terms.sort_by(|a, b| a.total_cmp(b));
    terms.iter().sum()
}

/// Σ Δt_k · (∫ v_k² ωⁿ)^{1/2} over chords.
pub fn curve_length(path: &PathInH<'_>) -> f64 {
    sum_terms(
        (0..path.intervals())
            .map(|k| {
                let v = path.chord_velocity(k);
                path.dt(k) * path.chord_integral(k, &v, |x| x * x).max(0.0).sqrt()
            })
            .collect(),
    )
}

/// Σ Δt_k · ∫ v_k² ωⁿ over chords.
pub fn curve_energy(path: &PathInH<'_>) -> f64 {
    sum_terms(
        (0..path.intervals())
            .map(|k| {
                let v = path.chord_velocity(k);
                path.dt(k) * path.chord_integral(k, &v, |x| x * x)
            })
            .collect(),
    )
}

/// D_tψ = ∂_tψ − Re[g^{αβ̄} ψ_{,α} φ̇_{,β̄}] at interior node k.
pub fn covariant_derivative(path: &PathInH<'_>, psi: &TangentField, k: usize) -> Result<ScalarField> {
    let m = path.intervals();
    if k == 0 || k >= m {
        return Err(JflowError::InvalidPath(format!("node {k} is not interior")));
    }
    if psi.len() != m {
        return Err(JflowError::InvalidPath("tangent field does not match the path".into()));
    }
    let t = path.times();
    let lo = 0.5 * (t[k - 1] + t[k]);
    let hi = 0.5 * (t[k] + t[k + 1]);
    let w = (t[k] - lo) / (hi - lo);
    let (p0, p1) = (&psi.values()[k - 1], &psi.values()[k]);
    let dpsi = p1.zip_map(p0, |b, a| (b - a) / (hi - lo));
    let psi_k = p0.zip_map(p1, |a, b| (1.0 - w) * a + w * b);
    let (v0, v1) = (path.chord_velocity(k - 1), path.chord_velocity(k));
    let vel_k = v0.zip_map(&v1, |a, b| (1.0 - w) * a + w * b);
    let metric = path.metric(k);
    let dp = holo_gradient(&psi_k);
    let dv = holo_gradient(&vel_k);
    let inv = metric.inverse().values();
    let n = path.ks().lattice().n();
    let dd = dpsi.values();
    let values = tabulate(inv.len(), |i| {
        let dv_bar = [dv[i][0].conj(), dv[i][1].conj()];
        dd[i] - inv[i].bilinear(&dv_bar[..n], &dp[i][..n]).re
    });
    ScalarField::new(*path.ks().lattice(), values)
}

/// K = −¼ ∫ {δ₁, δ₂}² ωⁿ
pub fn sectional_curvature(m: &MetricField, d1: &ScalarField, d2: &ScalarField) -> f64 {
    let b = crate::kahler::poisson_bracket(d1, d2, m);
    let sq = b.map(|v| v * v);
    -0.25 * weighted_sum(m.lattice(), sq.values(), m.det().values())
}

/// One row of functional values at a potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FunctionalReport {
    pub c: f64,
    pub i: f64,
    pub j: f64,
    pub e: f64,
    /// max |σ − c|
    pub residual: f64,
}

pub fn functional_report(ks: &KahlerStructure, phi: &ScalarField) -> Result<FunctionalReport> {
    let m = assemble_metric(ks, phi)?;
    let c = c_of_metric(&m, ks.chi());
    let s = sigma(&m, ks.chi());
    Ok(FunctionalReport {
        c,
        i: i_with_metric(ks, phi, &m),
        j: j_from_zero(ks, phi, &m)?,
        e: e_energy(&m, ks.chi()),
        residual: s.values().iter().map(|v| (v - c).abs()).fold(0.0, f64::max),
    })
}
