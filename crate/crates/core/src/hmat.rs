//! Small complex matrices of size n×n with n ∈ {1, 2}.
//!
//! Every field kernel works pointwise on these, so they are `Copy` and keep
//! their entries inline. Entry (i, j) of an n = 2 matrix lives at `e[2 * i + j]`;
//! an n = 1 matrix only uses `e[0]`.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HMat {
    dim: usize,
    e: [Complex64; 4],
}

impl HMat {
    #[inline]
    pub fn zeros(dim: usize) -> Self {
        debug_assert!(dim == 1 || dim == 2, "HMat supports dimension 1 or 2, got {dim}");
        Self { dim, e: [ZERO; 4] }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    #[inline]
    pub fn scalar(dim: usize, s: f64) -> Self {
        let d = Complex64::new(s, 0.0);
        Self { dim, e: [d, ZERO, ZERO, if dim == 2 { d } else { ZERO }] }
    }

    /// Hermitian matrix from its real diagonal and, for n = 2, the (0, 1) entry.
    #[inline]
    pub fn hermitian(diag: &[f64], upper: Complex64) -> Self {
        if diag.len() == 1 {
            return Self::scalar(1, diag[0]);
        }
        Self { dim: 2, e: [Complex64::new(diag[0], 0.0), upper, upper.conj(), Complex64::new(diag[1], 0.0)] }
    }

    #[inline]
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        if dim == 1 {
            return Self { dim, e: [f(0, 0), ZERO, ZERO, ZERO] };
        }
        Self { dim, e: [f(0, 0), f(0, 1), f(1, 0), f(1, 1)] }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.e[2 * i + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.e[2 * i + j] = v;
    }

    #[inline]
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i).conj())
    }

    /// (M + M†) / 2
    #[inline]
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |i, j| (self.get(i, j) + self.get(j, i).conj()) * 0.5)
    }

    /// max |M − M†| over entries.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    #[inline]
    pub fn trace(&self) -> Complex64 {
        if self.dim == 1 {
            self.e[0]
        } else {
            self.e[0] + self.e[3]
        }
    }

    #[inline]
    pub fn det(&self) -> Complex64 {
        if self.dim == 1 {
            self.e[0]
        } else {
            self.e[0] * self.e[3] - self.e[1] * self.e[2]
        }
    }

    /// Adjugate, so that `m * m.adjugate() = det(m) · I`. Linear in the entries for n ≤ 2.
    #[inline]
    pub fn adjugate(&self) -> Self {
        if self.dim == 1 {
            Self { dim: 1, e: [ONE, ZERO, ZERO, ZERO] }
        } else {
            Self { dim: 2, e: [self.e[3], -self.e[1], -self.e[2], self.e[0]] }
        }
    }

    #[inline]
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.adjugate() * (ONE / d))
    }

    /// Inverse of a Hermitian matrix, exactly Hermitian in floating point.
    #[inline]
    pub fn hermitian_inverse(&self) -> Option<Self> {
        if self.dim == 1 {
            let a = self.e[0].re;
            return (a != 0.0).then(|| Self::scalar(1, 1.0 / a));
        }
        let (a, c, b) = (self.e[0].re, self.e[3].re, self.e[1]);
        let d = a * c - b.norm_sqr();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Self::hermitian(&[c / d, a / d], -b / d))
    }

    /// Eigenvalues (λ_min, λ_max) of the Hermitian part.
    #[inline]
    pub fn hermitian_eigs(&self) -> (f64, f64) {
        if self.dim == 1 {
            let v = self.e[0].re;
            return (v, v);
        }
        let a = self.e[0].re;
        let d = self.e[3].re;
        let b = (self.e[1] + self.e[2].conj()) * 0.5;
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        (mean - rad, mean + rad)
    }

    /// Generalized eigenvalues (λ_min, λ_max) of the Hermitian pencil det(self − λ·b) = 0,
    /// with `b` positive definite.
    #[inline]
    pub fn generalized_eigs(&self, b: &HMat) -> (f64, f64) {
        if self.dim == 1 {
            let v = self.e[0].re / b.e[0].re;
            return (v, v);
        }
        // b = L L†, then the pencil is similar to L⁻¹ A L⁻†.
        let l11 = b.e[0].re.sqrt();
        let l21 = b.e[2] / l11;
        let l22 = (b.e[3].re - l21.norm_sqr()).sqrt();
        let mut linv = HMat::zeros(2);
        linv.set(0, 0, Complex64::new(1.0 / l11, 0.0));
        linv.set(1, 0, -l21 / (l11 * l22));
        linv.set(1, 1, Complex64::new(1.0 / l22, 0.0));
        (linv * *self * linv.adjoint()).hermitian_eigs()
    }

    /// b† M b
    #[inline]
    pub fn quad_form(&self, b: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += b[i].conj() * self.get(i, j) * b[j];
            }
        }
        acc
    }

    /// u^T M w (bilinear, no conjugation).
    #[inline]
    pub fn bilinear(&self, u: &[Complex64], w: &[Complex64]) -> Complex64 {
        let mut acc = ZERO;
        for i in 0..self.dim {
            for j in 0..self.dim {
                acc += u[i] * self.get(i, j) * w[j];
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &HMat) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((self.get(i, j) - other.get(i, j)).norm());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.e[..self.dim * self.dim].iter().all(|z| z.is_finite())
    }
}

impl Add for HMat {
    type Output = HMat;
    #[inline]
    fn add(mut self, rhs: HMat) -> HMat {
        for (a, b) in self.e.iter_mut().zip(rhs.e) {
            *a += b;
        }
        self
    }
}

impl Sub for HMat {
    type Output = HMat;
    #[inline]
    fn sub(mut self, rhs: HMat) -> HMat {
        for (a, b) in self.e.iter_mut().zip(rhs.e) {
            *a -= b;
        }
        self
    }
}

impl Mul<f64> for HMat {
    type Output = HMat;
    #[inline]
    fn mul(mut self, s: f64) -> HMat {
        for a in self.e.iter_mut() {
            *a *= s;
        }
        self
    }
}

impl Mul<Complex64> for HMat {
    type Output = HMat;
    #[inline]
    fn mul(mut self, s: Complex64) -> HMat {
        for a in self.e.iter_mut() {
            *a *= s;
        }
        self
    }
}

impl Mul for HMat {
    type Output = HMat;
    #[inline]
    fn mul(self, rhs: HMat) -> HMat {
        debug_assert_eq!(self.dim, rhs.dim);
        let (a, b) = (&self.e, &rhs.e);
        if self.dim == 1 {
            return HMat { dim: 1, e: [a[0] * b[0], ZERO, ZERO, ZERO] };
        }
        HMat {
            dim: 2,
            e: [
                a[0] * b[0] + a[1] * b[2],
                a[0] * b[1] + a[1] * b[3],
                a[2] * b[0] + a[3] * b[2],
                a[2] * b[1] + a[3] * b[3],
            ],
        }
    }
}
