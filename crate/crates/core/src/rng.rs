//! Counter-based random streams.
//!
//! Every random draw in a run is addressed by `(master seed, replica, step,
//! purpose)`. The four words seed a fresh ChaCha8 stream, so a trajectory is
//! reproducible bit-for-bit no matter how replicas are scheduled across
//! workers, and a run restored from a checkpoint at step `s` consumes exactly
//! the draws the uninterrupted run would have.
//!
//! Gaussians use Box-Muller with the cosine component first; the polar
//! rejection method is never used.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Purpose tags separating independent uses of the same `(replica, step)`.
pub mod purpose {
    /// Driving noise increments / exact OU innovations.
    pub const NOISE: u64 = 0;
    /// Draw of the stationary OU initial state.
    pub const STATIONARY_INIT: u64 = 1;
    /// Random test fields and other auxiliary sampling.
    pub const AUX: u64 = 2;
}

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64, replica: u64, step: u64, tag: u64) -> Stream {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replica.to_le_bytes());
    key[16..24].copy_from_slice(&step.to_le_bytes());
    key[24..32].copy_from_slice(&tag.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// One Box-Muller pair `(r cos θ, r sin θ)` of independent standard normals.
pub fn normal_pair<R: RngCore + ?Sized>(rng: &mut R) -> (f64, f64) {
    // 1 − U lies in (0, 1], keeping the logarithm finite.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Isotropic complex normal with `E|G|² = variance` and `E[G²] = 0`.
pub fn complex_normal<R: RngCore + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let (re, im) = normal_pair(rng);
    let s = (0.5 * variance).sqrt();
    Complex64::new(re * s, im * s)
}

/// Standard real normal (the cosine half of a fresh pair).
pub fn standard_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    normal_pair(rng).0
}
