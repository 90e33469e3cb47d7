//! Discrete curves in the space of Kähler potentials.
//!
//! A path is a list of potentials at increasing times. Between nodes it is
//! treated as the straight chord in potential space, so the velocity lives on
//! half nodes and every path functional integrates exactly along each chord.
//! Chords between positive metrics stay positive (the cone is convex).

use crate::error::{JflowError, Result};
use crate::kahler::{assemble_metric, KahlerStructure, MetricField};
use crate::lattice::{ddbar, tabulate, ScalarField};

#[derive(Clone, Debug)]
pub struct PathInH<'a> {
    ks: &'a KahlerStructure,
    times: Vec<f64>,
    potentials: Vec<ScalarField>,
    node_det: Vec<ScalarField>,
    mid_det: Vec<ScalarField>,
}

/// det(g₀ + ∂∂̄φ) without building the full metric; used where positivity is already known.
pub(crate) fn det_field(ks: &KahlerStructure, phi: &ScalarField) -> ScalarField {
    let g0 = *ks.g0();
    ddbar(phi).scalar_map(|h| (*h + g0).det().re)
}

impl<'a> PathInH<'a> {
    pub fn new(ks: &'a KahlerStructure, times: Vec<f64>, potentials: Vec<ScalarField>) -> Result<Self> {
        if potentials.len() < 2 {
            return Err(JflowError::InvalidPath("a path needs at least two nodes".into()));
        }
        if times.len() != potentials.len() {
            return Err(JflowError::InvalidPath("times and potentials differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(JflowError::InvalidPath("times must be finite and strictly increasing".into()));
        }
        if potentials.iter().any(|p| p.lattice() != ks.lattice()) {
            return Err(JflowError::LatticeMismatch);
        }
        let mut node_det = Vec::with_capacity(potentials.len());
        for phi in &potentials {
            node_det.push(assemble_metric(ks, phi)?.det().clone());
        }
        let mid_det = potentials
            .windows(2)
            .map(|w| det_field(ks, &w[0].zip_map(&w[1], |a, b| 0.5 * (a + b))))
            .collect();
        Ok(Self { ks, times, potentials, node_det, mid_det })
    }

    /// Nodes at t_k = k/m on [0, 1].
    pub fn uniform(ks: &'a KahlerStructure, potentials: Vec<ScalarField>) -> Result<Self> {
        let m = potentials.len().saturating_sub(1).max(1) as f64;
        let times = (0..potentials.len()).map(|k| k as f64 / m).collect();
        Self::new(ks, times, potentials)
    }

    /// Straight segment from `from` to `to` sampled at m + 1 uniform nodes.
    pub fn linear(ks: &'a KahlerStructure, from: &ScalarField, to: &ScalarField, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(JflowError::InvalidPath("m must be at least 1".into()));
        }
        let nodes = (0..=m)
            .map(|k| {
                let s = k as f64 / m as f64;
                from.zip_map(to, |a, b| (1.0 - s) * a + s * b)
            })
            .collect();
        Self::uniform(ks, nodes)
    }

    pub fn ks(&self) -> &'a KahlerStructure {
        self.ks
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn potentials(&self) -> &[ScalarField] {
        &self.potentials
    }

    pub fn into_potentials(self) -> Vec<ScalarField> {
        self.potentials
    }

    /// Number of intervals m (nodes are t₀ … t_m).
    pub fn intervals(&self) -> usize {
        self.potentials.len() - 1
    }

    pub fn node(&self, k: usize) -> &ScalarField {
        &self.potentials[k]
    }

    pub fn node_det(&self, k: usize) -> &ScalarField {
        &self.node_det[k]
    }

    pub fn metric(&self, k: usize) -> MetricField {
        assemble_metric(self.ks, &self.potentials[k]).expect("path nodes are validated")
    }

    pub fn dt(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// (φ_{k+1} − φ_k)/Δt on interval k.
    pub fn chord_velocity(&self, k: usize) -> ScalarField {
        let dt = self.dt(k);
        self.potentials[k + 1].zip_map(&self.potentials[k], |b, a| (b - a) / dt)
    }

    /// ∫ of `f(v, det)` over the lattice on interval k, exact for densities quadratic along the chord.
    pub(crate) fn chord_integral(&self, k: usize, v: &ScalarField, f: impl Fn(f64) -> f64 + Sync + Send) -> f64 {
        let (d0, d1, dm) = (self.node_det[k].values(), self.node_det[k + 1].values(), self.mid_det[k].values());
        let vv = v.values();
        let lat = self.ks.lattice();
        let dens = tabulate(vv.len(), |i| f(vv[i]) * ((d0[i] + d1[i]) + 4.0 * dm[i]) / 6.0);
        dens.iter().sum::<f64>() * lat.cell_volume()
    }

    /// The same curve traversed backwards, on times −t_m < … < −t₀.
    pub fn reversed(&self) -> Self {
        Self {
            ks: self.ks,
            times: self.times.iter().rev().map(|t| -t).collect(),
            potentials: self.potentials.iter().rev().cloned().collect(),
            node_det: self.node_det.iter().rev().cloned().collect(),
            mid_det: self.mid_det.iter().rev().cloned().collect(),
        }
    }
}

/// A field of tangent vectors along a path, one value per chord (at its midpoint time).
#[derive(Clone, Debug)]
pub struct TangentField {
    values: Vec<ScalarField>,
}

impl TangentField {
    pub fn new(values: Vec<ScalarField>) -> Self {
        Self { values }
    }

    /// The velocity φ̇ of the path.
    pub fn velocity(path: &PathInH<'_>) -> Self {
        Self { values: (0..path.intervals()).map(|k| path.chord_velocity(k)).collect() }
    }

    pub fn values(&self) -> &[ScalarField] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmat::HMat;
    use crate::lattice::Lattice;
    use std::f64::consts::PI;

    #[test]
    fn validates_shape() {
        let lat = Lattice::unit(1, 8).unwrap();
        let ks = KahlerStructure::constant(lat, HMat::identity(1), HMat::identity(1)).unwrap();
        let z = ScalarField::zeros(lat);
        assert!(PathInH::new(&ks, vec![0.0], vec![z.clone()]).is_err());
        assert!(PathInH::new(&ks, vec![0.0, 0.0], vec![z.clone(), z.clone()]).is_err());
        let bad = ScalarField::from_fn(lat, |x| (2.0 * PI * x[0]).sin());
        assert!(matches!(
            PathInH::new(&ks, vec![0.0, 1.0], vec![z.clone(), bad]),
            Err(JflowError::NotKahler { .. })
        ));
        let p = PathInH::linear(&ks, &z, &z.add_constant(1.0), 4).unwrap();
        assert_eq!(p.intervals(), 4);
        assert_eq!(p.times()[4], 1.0);
        let r = p.reversed();
        assert_eq!(r.times()[0], -1.0);
        assert_eq!(r.node(0).values()[0], 1.0);
    }
}
