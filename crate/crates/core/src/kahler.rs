//! Pointwise Kähler-geometry kernels on a lattice.
//!
//! Index conventions: a metric `g_{αβ̄}` is stored as the matrix `G[α][β]`, and the
//! inverse metric of the usual upper-index notation is `g^{αβ̄} = G⁻¹[β][α]`.
//! With this, `tr_g χ = tr(G⁻¹ X)` and the χ-twisted contraction
//! `g^{αr̄} · g^{δβ̄} χ_{αβ̄}` is the matrix `G⁻¹ X G⁻¹`.
//!
//! The volume form `ω_φⁿ/n!` is represented by `det g` times the grid weight;
//! the fixed factor relating the two is taken to be one.

use num_complex::Complex64;

use crate::error::{JflowError, Result};
use crate::hmat::HMat;
use crate::lattice::{
    d_antiholo_complex, d_holo_complex, ddbar, holo_gradient, tabulate, HermitianField, Lattice,
    ScalarField,
};

/// Minimum eigenvalue a metric must exceed to count as positive.
pub const POSITIVITY_FLOOR: f64 = 1e-10;

/// Background form `ω₀` (constant coefficients) and the reference form `χ`.
#[derive(Clone, Debug)]
pub struct KahlerStructure {
    lattice: Lattice,
    g0: HMat,
    g0_field: HermitianField,
    chi: HermitianField,
    chi_potential: Option<ScalarField>,
}

impl KahlerStructure {
    /// Constant forms on the torus.
    pub fn constant(lattice: Lattice, g0: HMat, chi: HMat) -> Result<Self> {
        Self::build(lattice, g0, HermitianField::constant(lattice, chi), None)
    }

    /// `χ = χ₀ + ∂∂̄ψ` for a periodic potential `ψ`.
    pub fn with_chi_potential(lattice: Lattice, g0: HMat, chi0: HMat, psi: ScalarField) -> Result<Self> {
        if *psi.lattice() != lattice {
            return Err(JflowError::LatticeMismatch);
        }
        let chi = ddbar(&psi).map(|h| (*h + chi0).hermitian_part());
        Self::build(lattice, g0, chi, Some(psi))
    }

    /// Arbitrary positive `χ` field with no potential attached.
    pub fn from_chi_field(lattice: Lattice, g0: HMat, chi: HermitianField) -> Result<Self> {
        Self::build(lattice, g0, chi, None)
    }

    fn build(lattice: Lattice, g0: HMat, chi: HermitianField, chi_potential: Option<ScalarField>) -> Result<Self> {
        if g0.dim() != lattice.n() || *chi.lattice() != lattice {
            return Err(JflowError::InvalidStructure("dimension mismatch".into()));
        }
        if g0.hermitian_defect() > 1e-12 {
            return Err(JflowError::InvalidStructure("g0 is not Hermitian".into()));
        }
        if g0.hermitian_eigs().0 <= POSITIVITY_FLOOR {
            return Err(JflowError::InvalidStructure("g0 is not positive definite".into()));
        }
        if chi.max_hermitian_defect() > 1e-12 {
            return Err(JflowError::InvalidStructure("chi is not Hermitian".into()));
        }
        if let Some(p) = chi.values().iter().position(|m| m.hermitian_eigs().0 <= POSITIVITY_FLOOR) {
            return Err(JflowError::InvalidStructure(format!("chi is not positive at point {p}")));
        }
        Ok(Self { lattice, g0, g0_field: HermitianField::constant(lattice, g0), chi, chi_potential })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn g0(&self) -> &HMat {
        &self.g0
    }

    pub fn g0_field(&self) -> &HermitianField {
        &self.g0_field
    }

    pub fn chi(&self) -> &HermitianField {
        &self.chi
    }

    pub fn chi_potential(&self) -> Option<&ScalarField> {
        self.chi_potential.as_ref()
    }

    pub fn chi_is_constant(&self) -> bool {
        self.chi.is_constant()
    }

    pub fn det_g0(&self) -> f64 {
        self.g0.det().re
    }

    /// ∫ ω₀ⁿ/n!, shared by every metric in the class.
    pub fn volume(&self) -> f64 {
        self.det_g0() * self.lattice.volume()
    }

    /// Smallest eigenvalue of χ over the torus.
    pub fn chi_min_eig(&self) -> f64 {
        self.chi.values().iter().map(|m| m.hermitian_eigs().0).fold(f64::INFINITY, f64::min)
    }

    pub fn chi_max_eig(&self) -> f64 {
        self.chi.values().iter().map(|m| m.hermitian_eigs().1).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A positive metric field with its pointwise inverse and determinant.
#[derive(Clone, Debug)]
pub struct MetricField {
    g: HermitianField,
    inverse: HermitianField,
    det: ScalarField,
    min_eig: f64,
}

impl MetricField {
    pub fn new(g: HermitianField) -> Result<Self> {
        let lat = *g.lattice();
        let vals = g.values();
        let lows = tabulate(vals.len(), |i| vals[i].hermitian_eigs().0);
        let (location, min_eig) =
            lows.iter().enumerate().fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best });
        if !(min_eig > POSITIVITY_FLOOR) {
            return Err(JflowError::NotKahler { min_eig, location });
        }
        drop(lows);
        let inverse = HermitianField::from_vec(
            lat,
            tabulate(vals.len(), |i| vals[i].hermitian_inverse().expect("positive definite")),
        );
        let det = ScalarField::from_vec(lat, tabulate(vals.len(), |i| vals[i].det().re));
        Ok(Self { g, inverse, det, min_eig })
    }

    pub fn lattice(&self) -> &Lattice {
        self.g.lattice()
    }

    pub fn g(&self) -> &HermitianField {
        &self.g
    }

    pub fn inverse(&self) -> &HermitianField {
        &self.inverse
    }

    pub fn det(&self) -> &ScalarField {
        &self.det
    }

    pub fn min_eig(&self) -> f64 {
        self.min_eig
    }
}

/// `g = g₀ + ∂∂̄φ`.
pub fn assemble_metric(ks: &KahlerStructure, phi: &ScalarField) -> Result<MetricField> {
    if *phi.lattice() != ks.lattice {
        return Err(JflowError::LatticeMismatch);
    }
    let mut g = ddbar(phi);
    let g0 = ks.g0;
    g.values_mut().iter_mut().for_each(|h| *h = *h + g0);
    MetricField::new(g)
}

/// σ = tr_g χ = g^{αβ̄} χ_{αβ̄}
pub fn sigma(m: &MetricField, chi: &HermitianField) -> ScalarField {
    let (inv, x) = (m.inverse.values(), chi.values());
    ScalarField::from_vec(*m.lattice(), tabulate(inv.len(), |i| (inv[i] * x[i]).trace().re))
}

/// det g, the density of ω_φⁿ/n!.
pub fn volume_density(m: &MetricField) -> ScalarField {
    m.det.clone()
}

/// Density of χ ∧ ω_φ^{n−1}/(n−1)!, expanded by hand for n ≤ 2.
pub fn chi_wedge_density(m: &MetricField, chi: &HermitianField) -> Result<ScalarField> {
    let n = m.lattice().n();
    if n > 2 {
        return Err(JflowError::UnsupportedDimension(n));
    }
    let (g, x) = (m.g.values(), chi.values());
    Ok(ScalarField::from_vec(*m.lattice(), tabulate(g.len(), |i| wedge_point(&g[i], &x[i]))))
}

/// tr(adj(g)·χ), which is χ ∧ ω^{n−1}/(n−1)! divided by the coordinate volume.
#[inline]
pub(crate) fn wedge_point(g: &HMat, x: &HMat) -> f64 {
    if g.dim() == 1 {
        return x.get(0, 0).re;
    }
    (x.get(0, 0) * g.get(1, 1) + x.get(1, 1) * g.get(0, 0) - x.get(0, 1) * g.get(1, 0) - x.get(1, 0) * g.get(0, 1)).re
}

/// F = χ^{ij̄} g_{ij̄} = tr(χ⁻¹ g)
pub fn f_trace(m: &MetricField, chi: &HermitianField) -> ScalarField {
    let (g, x) = (m.g.values(), chi.values());
    ScalarField::from_vec(
        *m.lattice(),
        tabulate(g.len(), |i| (x[i].inverse().expect("chi positive") * g[i]).trace().re),
    )
}

/// Largest generalized eigenvalue of the pencil (g, χ) over the lattice.
pub fn max_generalized_eig(m: &MetricField, chi: &HermitianField) -> f64 {
    let (g, x) = (m.g.values(), chi.values());
    tabulate(g.len(), |i| g[i].generalized_eigs(&x[i]).1).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `T = g − C₀·χ` and its largest eigenvalue measured relative to χ.
pub fn t_tensor(m: &MetricField, chi: &HermitianField, c0: f64) -> (HermitianField, f64) {
    let t = m.g.zip_map(chi, |g, x| *g - *x * c0);
    (t, max_generalized_eig(m, chi) - c0)
}

/// `C₀ = (1 + margin)·max λ_max(g, χ)`, which makes `T` negative at the given metric.
pub fn choose_c0(m0: &MetricField, chi: &HermitianField, margin: f64) -> f64 {
    assert!(margin > 0.0, "margin must be positive");
    (1.0 + margin) * max_generalized_eig(m0, chi)
}

/// Curvature tensor `R_{ij̄kl̄}` of χ at every point.
#[derive(Clone, Debug)]
pub struct CurvatureField {
    lattice: Lattice,
    values: Vec<Complex64>,
}

impl CurvatureField {
    fn zeros(lattice: Lattice) -> Self {
        let n = lattice.n();
        Self { lattice, values: vec![Complex64::new(0.0, 0.0); lattice.len() * n.pow(4)] }
    }

    #[inline]
    fn offset(&self, p: usize, i: usize, j: usize, k: usize, l: usize) -> usize {
        let n = self.lattice.n();
        (((p * n + i) * n + j) * n + k) * n + l
    }

    /// `R_{ij̄kl̄}` at point `p`.
    pub fn get(&self, p: usize, i: usize, j: usize, k: usize, l: usize) -> Complex64 {
        self.values[self.offset(p, i, j, k, l)]
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| z.norm() == 0.0)
    }

    /// max |R_{ij̄kl̄} − conj(R_{jīlk̄})| and max |R_{ij̄kl̄} − R_{kj̄il̄}|.
    pub fn symmetry_defects(&self) -> (f64, f64) {
        let n = self.lattice.n();
        let mut conj_def: f64 = 0.0;
        let mut swap_def: f64 = 0.0;
        for p in 0..self.lattice.len() {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let r = self.get(p, i, j, k, l);
                            conj_def = conj_def.max((r - self.get(p, j, i, l, k).conj()).norm());
                            swap_def = swap_def.max((r - self.get(p, k, j, i, l)).norm());
                        }
                    }
                }
            }
        }
        (conj_def, swap_def)
    }

    /// Minimum over points and coordinate directions of `R_{iīkk̄}`.
    pub fn min_coordinate_bisectional(&self) -> f64 {
        let n = self.lattice.n();
        let mut lo = f64::INFINITY;
        for p in 0..self.lattice.len() {
            for i in 0..n {
                for k in 0..n {
                    lo = lo.min(self.get(p, i, i, k, k).re);
                }
            }
        }
        lo
    }
}

/// `R_{ij̄kl̄} = −∂_k∂_l̄ χ_{ij̄} + χ^{pq̄}(∂_k χ_{iq̄})(∂_l̄ χ_{pj̄})`.
pub fn bisectional_curvature(ks: &KahlerStructure) -> Result<CurvatureField> {
    let lat = ks.lattice;
    if ks.chi_is_constant() {
        return Ok(CurvatureField::zeros(lat));
    }
    if ks.chi_potential.is_none() {
        return Err(JflowError::MissingPotential);
    }
    let n = lat.n();
    let chi = ks.chi.values();
    let entry = |i: usize, j: usize| -> Vec<Complex64> { chi.iter().map(|m| m.get(i, j)).collect() };
    let entries: Vec<Vec<Vec<Complex64>>> = (0..n).map(|i| (0..n).map(|j| entry(i, j)).collect()).collect();

    // dz[i][j][k] = ∂_k χ_{ij̄}, dzb[i][j][l] = ∂_l̄ χ_{ij̄}, ddb[i][j][k][l] = ∂_k ∂_l̄ χ_{ij̄}
    let mut dz = vec![vec![vec![Vec::new(); n]; n]; n];
    let mut dzb = vec![vec![vec![Vec::new(); n]; n]; n];
    let mut ddb = vec![vec![vec![vec![Vec::new(); n]; n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                dz[i][j][k] = d_holo_complex(&lat, &entries[i][j], k);
                dzb[i][j][k] = d_antiholo_complex(&lat, &entries[i][j], k);
            }
            for k in 0..n {
                for l in 0..n {
                    ddb[i][j][k][l] = d_antiholo_complex(&lat, &dz[i][j][k], l);
                }
            }
        }
    }
    let mut out = CurvatureField::zeros(lat);
    for p in 0..lat.len() {
        let xinv = chi[p].inverse().expect("chi positive");
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut r = -ddb[i][j][k][l][p];
                        for pp in 0..n {
                            for q in 0..n {
                                r += xinv.get(q, pp) * dz[i][q][k][p] * dzb[pp][j][l][p];
                            }
                        }
                        let off = out.offset(p, i, j, k, l);
                        out.values[off] = r;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Pointwise `G⁻¹ X G⁻¹`, the coefficient matrix of the χ-twisted Laplacian.
pub(crate) fn twisted_inverse(m: &MetricField, chi: &HermitianField) -> Vec<HMat> {
    let (inv, x) = (m.inverse.values(), chi.values());
    tabulate(inv.len(), |i| (inv[i] * x[i] * inv[i]).hermitian_part())
}

/// Poisson bracket of the symplectic form `ω_φ = i g_{αβ̄} dz^α ∧ dz̄^β`:
/// `{f, h} = i g^{αβ̄}(f_α h_β̄ − h_α f_β̄) = −2 Im(g^{αβ̄} f_α h_β̄)`.
pub fn poisson_bracket(f: &ScalarField, h: &ScalarField, m: &MetricField) -> ScalarField {
    let df = holo_gradient(f);
    let dh = holo_gradient(h);
    let n = m.lattice().n();
    let inv = m.inverse.values();
    let values = tabulate(inv.len(), |i| {
        let dh_bar = [dh[i][0].conj(), dh[i][1].conj()];
        -2.0 * inv[i].bilinear(&dh_bar[..n], &df[i][..n]).im
    });
    ScalarField::from_vec(*m.lattice(), values)
}

/// Δ̃f = g^{αr̄} f_{,r̄δ} g^{δβ̄} χ_{αβ̄} = tr(G⁻¹ X G⁻¹ · ∂∂̄f).
pub fn tilde_laplacian(f: &ScalarField, m: &MetricField, chi: &HermitianField) -> ScalarField {
    let hess = ddbar(f);
    let a = twisted_inverse(m, chi);
    let hv = hess.values();
    ScalarField::from_vec(*m.lattice(), tabulate(hv.len(), |i| (a[i] * hv[i]).trace().re))
}
