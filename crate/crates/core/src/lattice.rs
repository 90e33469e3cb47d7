//! Periodic grids on the flat torus, the fields that live on them, and the
//! central-difference operators and quadrature used by every other module.
//!
//! A lattice of complex dimension `n` has real dimension `d = 2n` with complex
//! coordinates `z^α = x^{2α} + i·x^{2α+1}` (0-based axes). Points are stored in
//! row-major order, axis 0 slowest.
//!
//! All second derivatives are compositions of the same periodic central first
//! difference `D_a f = (f[x + h e_a] − f[x − h e_a]) / 2h`. These operators commute
//! exactly and are skew-adjoint under the grid sum, so discrete summation by parts
//! holds to roundoff. The complex Hessian `∂_α ∂̄_β f` built from them is Hermitian
//! by construction.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{JflowError, Result};
use crate::hmat::HMat;

/// Below this many points kernels run serially.
const PAR_MIN_LEN: usize = 2048;

#[inline]
fn serial(len: usize) -> bool {
    len < 2 * PAR_MIN_LEN || rayon::current_num_threads() == 1
}

pub(crate) fn tabulate<T: Send>(len: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if serial(len) {
        return (0..len).map(f).collect();
    }
    (0..len).into_par_iter().with_min_len(PAR_MIN_LEN).map(f).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    n: usize,
    points: usize,
    period: f64,
}

impl Lattice {
    pub fn new(n: usize, points: usize, period: f64) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(JflowError::UnsupportedDimension(n));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(JflowError::InvalidLattice(format!(
                "points per axis must be a power of two ≥ 8, got {points}"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(JflowError::InvalidLattice(format!("period must be positive, got {period}")));
        }
        Ok(Self { n, points, period })
    }

    /// Unit period.
    pub fn unit(n: usize, points: usize) -> Result<Self> {
        Self::new(n, points, 1.0)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn points(&self) -> usize {
        self.points
    }

    #[inline]
    pub fn period(&self) -> f64 {
        self.period
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.period / self.points as f64
    }

    #[inline]
    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.pow(self.real_dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// h^d, the quadrature weight of one grid point.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.real_dim() as i32)
    }

    /// L^d
    pub fn volume(&self) -> f64 {
        self.period.powi(self.real_dim() as i32)
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.real_dim() - 1 - axis) as u32)
    }

    /// Integer coordinates of a point, unused trailing slots are zero.
    pub fn multi_index(&self, idx: usize) -> [usize; 4] {
        let mut out = [0; 4];
        let mut rest = idx;
        for axis in (0..self.real_dim()).rev() {
            out[axis] = rest % self.points;
            rest /= self.points;
        }
        out
    }

    pub fn coords(&self, idx: usize) -> [f64; 4] {
        let h = self.spacing();
        let m = self.multi_index(idx);
        [m[0] as f64 * h, m[1] as f64 * h, m[2] as f64 * h, m[3] as f64 * h]
    }
}

/// Real values on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    lattice: Lattice,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(JflowError::InvalidLattice(format!(
                "expected {} values, got {}",
                lattice.len(),
                values.len()
            )));
        }
        if let Some(location) = values.iter().position(|v| !v.is_finite()) {
            return Err(JflowError::NonFiniteField { location });
        }
        Ok(Self { lattice, values })
    }

    pub(crate) fn from_vec(lattice: Lattice, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), lattice.len());
        Self { lattice, values }
    }

    pub fn constant(lattice: Lattice, value: f64) -> Self {
        Self { lattice, values: vec![value; lattice.len()] }
    }

    pub fn zeros(lattice: Lattice) -> Self {
        Self::constant(lattice, 0.0)
    }

    /// Samples `f(x)` at every grid point; `x` has length `2n`.
    pub fn from_fn(lattice: Lattice, f: impl Fn(&[f64]) -> f64 + Sync + Send) -> Self {
        let d = lattice.real_dim();
        let values = tabulate(lattice.len(), |i| f(&lattice.coords(i)[..d]));
        Self { lattice, values }
    }

    #[inline]
    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> Self {
        let v = &self.values;
        Self::from_vec(self.lattice, tabulate(v.len(), |i| f(v[i])))
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Self {
        assert_eq!(self.lattice, other.lattice, "fields live on different lattices");
        let (a, b) = (&self.values, &other.values);
        Self::from_vec(self.lattice, tabulate(a.len(), |i| f(a[i], b[i])))
    }

    /// `self + s·other`
    pub fn axpy(&self, s: f64, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|a| s * a)
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map(|a| a + c)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Σ f·h^d, density one.
    pub fn sum_cells(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.lattice.cell_volume()
    }

    pub fn is_constant(&self) -> bool {
        let first = self.values[0];
        self.values.iter().all(|&v| v == first)
    }
}

impl std::ops::Add for &ScalarField {
    type Output = ScalarField;
    fn add(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl std::ops::Sub for &ScalarField {
    type Output = ScalarField;
    fn sub(self, rhs: &ScalarField) -> ScalarField {
        self.zip_map(rhs, |a, b| a - b)
    }
}

/// Complex values on a lattice, used for first holomorphic derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexScalarField {
    lattice: Lattice,
    values: Vec<Complex64>,
}

impl ComplexScalarField {
    pub(crate) fn from_vec(lattice: Lattice, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), lattice.len());
        Self { lattice, values }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn real_part(&self) -> ScalarField {
        let v = &self.values;
        ScalarField::from_vec(self.lattice, tabulate(v.len(), |i| v[i].re))
    }

    pub fn imag_part(&self) -> ScalarField {
        let v = &self.values;
        ScalarField::from_vec(self.lattice, tabulate(v.len(), |i| v[i].im))
    }
}

/// An n×n Hermitian matrix at every point.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianField {
    lattice: Lattice,
    values: Vec<HMat>,
}

impl HermitianField {
    pub fn new(lattice: Lattice, values: Vec<HMat>) -> Result<Self> {
        if values.len() != lattice.len() {
            return Err(JflowError::InvalidLattice(format!(
                "expected {} matrices, got {}",
                lattice.len(),
                values.len()
            )));
        }
        if let Some(location) = values.iter().position(|m| m.dim() != lattice.n() || !m.is_finite()) {
            return Err(JflowError::NonFiniteField { location });
        }
        Ok(Self { lattice, values })
    }

    pub(crate) fn from_vec(lattice: Lattice, values: Vec<HMat>) -> Self {
        debug_assert_eq!(values.len(), lattice.len());
        Self { lattice, values }
    }

    pub fn constant(lattice: Lattice, m: HMat) -> Self {
        assert_eq!(m.dim(), lattice.n());
        Self { lattice, values: vec![m; lattice.len()] }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[HMat] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [HMat] {
        &mut self.values
    }

    pub fn map(&self, f: impl Fn(&HMat) -> HMat + Sync + Send) -> Self {
        let v = &self.values;
        Self::from_vec(self.lattice, tabulate(v.len(), |i| f(&v[i])))
    }

    pub fn zip_map(&self, other: &HermitianField, f: impl Fn(&HMat, &HMat) -> HMat + Sync + Send) -> Self {
        assert_eq!(self.lattice, other.lattice, "fields live on different lattices");
        let (a, b) = (&self.values, &other.values);
        Self::from_vec(self.lattice, tabulate(a.len(), |i| f(&a[i], &b[i])))
    }

    /// Scalar field `f(M)` evaluated pointwise.
    pub fn scalar_map(&self, f: impl Fn(&HMat) -> f64 + Sync + Send) -> ScalarField {
        let v = &self.values;
        ScalarField::from_vec(self.lattice, tabulate(v.len(), |i| f(&v[i])))
    }

    /// max over points of ‖M − M†‖
    pub fn max_hermitian_defect(&self) -> f64 {
        self.values.iter().fold(0.0, |m, h| m.max(h.hermitian_defect()))
    }

    pub fn is_constant(&self) -> bool {
        let first = self.values[0];
        self.values.iter().all(|m| *m == first)
    }
}

/// Periodic central difference along real axis `axis`, generic over the value type.
pub(crate) fn central_diff<T>(lattice: &Lattice, values: &[T], axis: usize) -> Vec<T>
where
    T: Copy + Send + Sync + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let inv = 0.5 / lattice.spacing();
    let s = lattice.stride(axis);
    let pts = lattice.points;
    let shift = pts.trailing_zeros();
    let mut out = vec![values[0]; values.len()];
    // rows of length s: row r sits at axis index r mod N inside block r / N
    let fill = |(row, chunk): (usize, &mut [T])| {
        let block = (row >> shift) << shift;
        let i = row & (pts - 1);
        let fwd = (block + ((i + 1) & (pts - 1))) * s;
        let bwd = (block + ((i + pts - 1) & (pts - 1))) * s;
        for (j, o) in chunk.iter_mut().enumerate() {
            *o = (values[fwd + j] - values[bwd + j]) * inv;
        }
    };
    if serial(values.len()) {
        out.chunks_mut(s).enumerate().for_each(fill);
    } else {
        out.par_chunks_mut(s).with_min_len((PAR_MIN_LEN / s).max(1)).enumerate().for_each(fill);
    }
    out
}

/// Real partial derivative `D_a f`.
pub fn d_real(f: &ScalarField, axis: usize) -> ScalarField {
    assert!(axis < f.lattice.real_dim(), "axis {axis} out of range");
    ScalarField::from_vec(f.lattice, central_diff(&f.lattice, &f.values, axis))
}

/// Discrete ∂/∂z^α = ½(D_{2α} − i D_{2α+1}), α is 0-based.
pub fn d_holo(f: &ScalarField, alpha: usize) -> ComplexScalarField {
    assert!(alpha < f.lattice.n(), "alpha {alpha} out of range");
    let dx = central_diff(&f.lattice, &f.values, 2 * alpha);
    let dy = central_diff(&f.lattice, &f.values, 2 * alpha + 1);
    let values = tabulate(dx.len(), |i| Complex64::new(0.5 * dx[i], -0.5 * dy[i]));
    ComplexScalarField::from_vec(f.lattice, values)
}

/// Discrete ∂/∂z̄^α = ½(D_{2α} + i D_{2α+1}).
pub fn d_antiholo(f: &ScalarField, alpha: usize) -> ComplexScalarField {
    assert!(alpha < f.lattice.n(), "alpha {alpha} out of range");
    let dx = central_diff(&f.lattice, &f.values, 2 * alpha);
    let dy = central_diff(&f.lattice, &f.values, 2 * alpha + 1);
    let values = tabulate(dx.len(), |i| Complex64::new(0.5 * dx[i], 0.5 * dy[i]));
    ComplexScalarField::from_vec(f.lattice, values)
}

/// ∂/∂z^α of a complex field.
pub(crate) fn d_holo_complex(lattice: &Lattice, f: &[Complex64], alpha: usize) -> Vec<Complex64> {
    let dx = central_diff(lattice, f, 2 * alpha);
    let dy = central_diff(lattice, f, 2 * alpha + 1);
    let mi = Complex64::new(0.0, -1.0);
    tabulate(dx.len(), |i| (dx[i] + mi * dy[i]) * 0.5)
}

/// ∂/∂z̄^α of a complex field.
pub(crate) fn d_antiholo_complex(lattice: &Lattice, f: &[Complex64], alpha: usize) -> Vec<Complex64> {
    let dx = central_diff(lattice, f, 2 * alpha);
    let dy = central_diff(lattice, f, 2 * alpha + 1);
    let pi = Complex64::new(0.0, 1.0);
    tabulate(dx.len(), |i| (dx[i] + pi * dy[i]) * 0.5)
}

/// All holomorphic derivatives at once: `out[p][α] = ∂_α f(p)`.
pub(crate) fn holo_gradient(f: &ScalarField) -> Vec<[Complex64; 2]> {
    let lat = &f.lattice;
    let d: Vec<Vec<f64>> = (0..lat.real_dim()).map(|a| central_diff(lat, &f.values, a)).collect();
    let n = lat.n();
    tabulate(lat.len(), |i| {
        let mut out = [Complex64::new(0.0, 0.0); 2];
        for (alpha, slot) in out.iter_mut().enumerate().take(n) {
            *slot = Complex64::new(0.5 * d[2 * alpha][i], -0.5 * d[2 * alpha + 1][i]);
        }
        out
    })
}

/// Complex Hessian `f_{,αβ̄} = ∂_α ∂̄_β f`, Hermitian at every point.
pub fn ddbar(f: &ScalarField) -> HermitianField {
    let lat = f.lattice;
    let n = lat.n();
    let first: Vec<Vec<f64>> = (0..lat.real_dim()).map(|a| central_diff(&lat, &f.values, a)).collect();
    let inv = 0.5 / lat.spacing();
    let mask = lat.points - 1;
    let shifts: Vec<u32> = (0..lat.real_dim()).map(|a| lat.stride(a).trailing_zeros()).collect();
    // indices of the ±1 neighbours of point i along axis b
    let nb = |i: usize, b: usize| {
        let s = shifts[b];
        let k = (i >> s) & mask;
        let base = i - (k << s);
        (base + (((k + 1) & mask) << s), base + (((k + mask) & mask) << s))
    };
    // D_b D_a with a ≤ b canonical (difference of D_a along b), so D_a D_b and D_b D_a agree bitwise
    let second = |a: usize, fb: (usize, usize)| (first[a][fb.0] - first[a][fb.1]) * inv;
    if n == 1 {
        let values = tabulate(lat.len(), |i| {
            let (n0, n1) = (nb(i, 0), nb(i, 1));
            HMat::scalar(1, 0.25 * (second(0, n0) + second(1, n1)))
        });
        return HermitianField::from_vec(lat, values);
    }
    let values = tabulate(lat.len(), |i| {
        let (n0, n1, n2, n3) = (nb(i, 0), nb(i, 1), nb(i, 2), nb(i, 3));
        let h11 = 0.25 * (second(0, n0) + second(1, n1));
        let h22 = 0.25 * (second(2, n2) + second(3, n3));
        let (d02, d13) = (second(0, n2), second(1, n3));
        let (d03, d12) = (second(0, n3), second(1, n2));
        // ¼(D_x1 − iD_y1)(D_x2 + iD_y2)
        let h12 = Complex64::new(0.25 * (d02 + d13), 0.25 * (d03 - d12));
        HMat::hermitian(&[h11, h22], h12)
    });
    HermitianField::from_vec(lat, values)
}

/// ∫ f · density, realized as Σ f·density·h^d in a fixed serial order.
pub fn integrate(f: &ScalarField, density: &ScalarField) -> Result<f64> {
    if f.lattice != density.lattice {
        return Err(JflowError::LatticeMismatch);
    }
    if let Some(location) = density.values.iter().position(|&d| !(d > 0.0)) {
        return Err(JflowError::NonPositiveDensity { value: density.values[location], location });
    }
    let sum: f64 = f.values.iter().zip(&density.values).map(|(a, b)| a * b).sum();
    Ok(sum * f.lattice.cell_volume())
}

/// Σ a·w·h^d in serial order, with no check on the sign of `w`.
pub(crate) fn weighted_sum(lattice: &Lattice, a: &[f64], w: &[f64]) -> f64 {
    let sum: f64 = a.iter().zip(w).map(|(x, y)| x * y).sum();
    sum * lattice.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn l1(n_pts: usize) -> Lattice {
        Lattice::unit(1, n_pts).unwrap()
    }

    #[test]
    fn rejects_bad_lattices() {
        assert!(Lattice::unit(1, 7).is_err());
        assert!(Lattice::unit(1, 4).is_err());
        assert!(Lattice::unit(3, 8).is_err());
        assert!(Lattice::new(1, 8, -1.0).is_err());
    }

    #[test]
    fn holo_derivative_of_constant_vanishes() {
        let f = ScalarField::constant(l1(16), 7.0);
        assert!(d_holo(&f, 0).values().iter().all(|z| z.norm() == 0.0));
    }

    /// Max error of the ∂_z derivative of sin(2πx₁) against the analytic ½·2π·cos(2πx₁).
    fn holo_sin_error(n_pts: usize) -> f64 {
        let lat = l1(n_pts);
        let f = ScalarField::from_fn(lat, |x| (2.0 * PI * x[0]).sin());
        let d = d_holo(&f, 0);
        (0..lat.len())
            .map(|i| {
                let x = lat.coords(i);
                let exact = Complex64::new(0.5 * 2.0 * PI * (2.0 * PI * x[0]).cos(), 0.0);
                (d.values()[i] - exact).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn holo_derivative_second_order() {
        for n_pts in [16, 32, 64] {
            let h = 1.0 / n_pts as f64;
            // Central difference error of sin: (2π)³h²/6 · ½
            assert!(holo_sin_error(n_pts) <= 0.5 * (2.0 * PI).powi(3) * h * h / 6.0 * 1.01);
        }
        let ratio = holo_sin_error(32) / holo_sin_error(64);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn holo_derivative_of_cos_x2_is_imaginary() {
        let lat = l1(64);
        let f = ScalarField::from_fn(lat, |x| (2.0 * PI * x[1]).cos());
        let d = d_holo(&f, 0);
        let h = lat.spacing();
        for i in 0..lat.len() {
            let x = lat.coords(i);
            let exact = Complex64::new(0.0, 0.5 * 2.0 * PI * (2.0 * PI * x[1]).sin());
            assert!((d.values()[i] - exact).norm() < 0.5 * (2.0 * PI).powi(3) * h * h / 6.0 * 1.01);
        }
    }

    #[test]
    fn ddbar_of_constant_is_zero() {
        let f = ScalarField::constant(Lattice::unit(2, 8).unwrap(), 3.0);
        let h = ddbar(&f);
        assert!(h.values().iter().all(|m| m.max_abs_diff(&HMat::zeros(2)) == 0.0));
    }

    fn ddbar_sin_error(n_pts: usize, a: f64) -> f64 {
        let lat = l1(n_pts);
        let f = ScalarField::from_fn(lat, |x| a * (2.0 * PI * x[0]).sin());
        let h = ddbar(&f);
        (0..lat.len())
            .map(|i| {
                let x = lat.coords(i);
                let exact = -a * (2.0 * PI).powi(2) * (2.0 * PI * x[0]).sin() / 4.0;
                (h.values()[i].get(0, 0).re - exact).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn ddbar_n1_matches_analytic_hessian() {
        // composite stencil symbol: sin²(kh)/h² = k²(1 − k²h²/3 + …)
        for n_pts in [16, 32, 64] {
            let h = 1.0 / n_pts as f64;
            let bound = 0.25 * (2.0 * PI).powi(4) * h * h / 3.0;
            assert!(ddbar_sin_error(n_pts, 1.0) <= bound * 1.01);
        }
        let ratio = ddbar_sin_error(32, 1.0) / ddbar_sin_error(64, 1.0);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn ddbar_n2_off_diagonal_mixed_derivative() {
        let errs: Vec<f64> = [8usize, 16]
            .iter()
            .map(|&n_pts| {
                let lat = Lattice::unit(2, n_pts).unwrap();
                let f = ScalarField::from_fn(lat, |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[2]).sin());
                let h = ddbar(&f);
                assert!(h.max_hermitian_defect() <= 1e-12);
                (0..lat.len())
                    .map(|i| {
                        let x = lat.coords(i);
                        // f_{12̄} = ¼ f_{x1 x3}
                        let exact = 0.25 * (2.0 * PI).powi(2) * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[2]).cos();
                        (h.values()[i].get(0, 1) - Complex64::new(exact, 0.0)).norm()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn integrate_examples() {
        let lat = l1(16);
        let one = ScalarField::constant(lat, 1.0);
        assert!((integrate(&one, &one).unwrap() - 1.0).abs() < 1e-14);
        let s = ScalarField::from_fn(lat, |x| (2.0 * PI * x[0]).sin());
        assert!(integrate(&s, &one).unwrap().abs() < 1e-15);
        for n_pts in [8, 16, 32] {
            let lat = l1(n_pts);
            let s2 = ScalarField::from_fn(lat, |x| (2.0 * PI * x[0]).sin().powi(2));
            let one = ScalarField::constant(lat, 1.0);
            assert!((integrate(&s2, &one).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn integrate_rejects_nonpositive_density() {
        let lat = l1(8);
        let f = ScalarField::constant(lat, 1.0);
        let mut d = ScalarField::constant(lat, 1.0);
        d.values_mut()[5] = 0.0;
        assert_eq!(
            integrate(&f, &d),
            Err(JflowError::NonPositiveDensity { value: 0.0, location: 5 })
        );
    }

    #[test]
    fn halving_h_on_the_second_derivative_gives_order_two() {
        let e1 = ddbar_sin_error(16, 0.3);
        let e2 = ddbar_sin_error(32, 0.3);
        let r = e1 / e2;
        assert!((3.5..=4.5).contains(&r), "ratio {r}");
    }

    fn random_field(lat: Lattice, coeffs: &[f64]) -> ScalarField {
        ScalarField::from_fn(lat, |x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let axis = k % x.len();
                    c * (2.0 * PI * (1 + k / x.len()) as f64 * x[axis] + k as f64).sin()
                })
                .sum()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn operators_commute_with_constant_shift(coeffs in prop::collection::vec(-1.0f64..1.0, 1..6), c in -5.0f64..5.0) {
            let lat = Lattice::unit(2, 8).unwrap();
            let f = random_field(lat, &coeffs);
            let g = f.add_constant(c);
            let hf = ddbar(&f);
            let hg = ddbar(&g);
            for (a, b) in hf.values().iter().zip(hg.values()) {
                prop_assert!(a.max_abs_diff(b) < 1e-10);
            }
            prop_assert!(hf.max_hermitian_defect() <= 1e-12);
            let df = d_holo(&f, 1);
            let dg = d_holo(&g, 1);
            for (a, b) in df.values().iter().zip(dg.values()) {
                prop_assert!((a - b).norm() < 1e-11);
            }
        }

        #[test]
        fn integrate_is_linear(a in prop::collection::vec(-1.0f64..1.0, 1..5), b in prop::collection::vec(-1.0f64..1.0, 1..5)) {
            let lat = l1(16);
            let f = random_field(lat, &a);
            let g = random_field(lat, &b);
            let dens = ScalarField::from_fn(lat, |x| 2.0 + (2.0 * PI * x[1]).cos());
            let lhs = integrate(&f, &dens).unwrap() + integrate(&g, &dens).unwrap();
            let rhs = integrate(&(&f + &g), &dens).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
