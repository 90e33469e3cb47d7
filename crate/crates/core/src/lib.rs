//! Numerical laboratory for the J-flow on flat complex tori.
//!
//! The J-flow is the gradient flow `∂φ/∂t = c − tr_g χ` of the functional `J_χ`
//! on the space `H` of Kähler potentials of a background form `ω₀`. This crate
//! discretizes it on periodic lattices of complex dimension one or two and
//! provides the surrounding geometry of `H`: path functionals, ε-approximate
//! geodesics, distances and the curvature of the Mabuchi metric.
//!
//! Module map:
//! - [`lattice`]: grids, fields, central differences, quadrature
//! - [`kahler`]: pointwise Kähler kernels (metric, traces, curvature, brackets)
//! - [`functionals`]: `c`, `I`, `J`, `E`, lengths and path energies
//! - [`flow`]: time integration with energy-based step control and monitors
//! - [`geodesic`]: the ε-geodesic boundary-value solver and distance experiments

pub mod error;
pub mod flow;
pub mod functionals;
pub mod geodesic;
pub mod harmonics;
pub mod hmat;
pub mod kahler;
pub mod krylov;
pub mod lattice;
pub mod path;

pub use error::{JflowError, Result};
pub use hmat::HMat;
pub use lattice::{ComplexScalarField, HermitianField, Lattice, ScalarField};
pub use num_complex::Complex64;

pub use flow::{Flow, FlowSettings, FlowState, Trajectory};
pub use geodesic::{GeodesicProblem, GeodesicSolution};
pub use kahler::{KahlerStructure, MetricField};
pub use path::PathInH;
