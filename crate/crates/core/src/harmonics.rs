//! Reproducible initial data built from finite sums of plane waves.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lattice::{Lattice, ScalarField};

/// `amp · sin(2π k·x / L + phase)` for an integer wave vector `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Harmonic {
    pub wave: [i32; 4],
    pub amp: f64,
    pub phase: f64,
}

impl Harmonic {
    /// A wave along one real axis.
    pub fn axis(axis: usize, freq: i32, amp: f64, phase: f64) -> Self {
        let mut wave = [0; 4];
        wave[axis] = freq;
        Self { wave, amp, phase }
    }

    pub fn eval(&self, x: &[f64], period: f64) -> f64 {
        let arg: f64 = self.wave.iter().zip(x).map(|(&k, &xi)| k as f64 * xi).sum();
        self.amp * (2.0 * PI * arg / period + self.phase).sin()
    }
}

/// Random low modes added on top of the explicit harmonics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomModes {
    pub count: usize,
    pub amplitude: f64,
    pub max_freq: i32,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HarmonicCocktail {
    pub harmonics: Vec<Harmonic>,
    pub random: Option<RandomModes>,
}

impl HarmonicCocktail {
    pub fn new(harmonics: Vec<Harmonic>) -> Self {
        Self { harmonics, random: None }
    }

    pub fn with_random(mut self, modes: RandomModes) -> Self {
        self.random = Some(modes);
        self
    }

    /// The full list of modes on a lattice of real dimension `real_dim`.
    pub fn modes(&self, real_dim: usize) -> Vec<Harmonic> {
        let mut out = self.harmonics.clone();
        if let Some(r) = self.random {
            let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
            for _ in 0..r.count {
                let mut wave = [0; 4];
                while wave.iter().all(|&k| k == 0) {
                    for k in wave.iter_mut().take(real_dim) {
                        *k = rng.gen_range(-r.max_freq..=r.max_freq);
                    }
                }
                let amp = rng.gen_range(-r.amplitude..=r.amplitude);
                let phase = rng.gen_range(0.0..2.0 * PI);
                out.push(Harmonic { wave, amp, phase });
            }
        }
        out
    }

    pub fn evaluate(&self, lattice: Lattice) -> ScalarField {
        let modes = self.modes(lattice.real_dim());
        let period = lattice.period();
        ScalarField::from_fn(lattice, move |x| modes.iter().map(|h| h.eval(x, period)).sum())
    }

    pub fn is_empty(&self) -> bool {
        self.harmonics.is_empty() && self.random.map_or(true, |r| r.count == 0)
    }
}
