//! Fields on the unit torus as band-limited Fourier series.
//!
//! A field is stored by its coefficients on the Euclidean ball `|m| ≤ n`,
//! embedded in a `(2n+1) × (2n+1)` square array in row-major `(m₁, m₂)` order
//! (entries outside the ball are kept at zero). The basis is
//! `e_m(x) = e^{2πi m·x}` and the coefficient of `e_m` is `∫ f e_{−m}`.
//!
//! Pointwise work happens on a `P × P` collocation grid `x_j = j/P`. With
//! `P ≥ (d+1)n + 1` every product of `d` band-`n` fields is recovered exactly
//! after truncation back to the ball, so cubic terms need `P ≥ 4n + 2`.

use crate::error::{Error, Result};
use crate::profile;
use num_complex::Complex64;
use rand::RngCore;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, LazyLock, Mutex};

pub type Mode = (i32, i32);

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn norm_sq(m: Mode) -> i64 {
    let (a, b) = (m.0 as i64, m.1 as i64);
    a * a + b * b
}

pub fn in_ball(n: usize, m: Mode) -> bool {
    norm_sq(m) <= (n * n) as i64
}

/// Spectral band limit `n` and collocation size `P`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub n: usize,
    pub points: usize,
}

impl Grid {
    /// Grid with explicit collocation size; requires `P` even and `P ≥ 4n + 2`.
    pub fn new(n: usize, points: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("band limit n must be at least 1"));
        }
        if points % 2 != 0 || points < 4 * n + 2 {
            return Err(Error::config(format!(
                "collocation size {points} must be even and at least 4n+2 = {}",
                4 * n + 2
            )));
        }
        Ok(Self { n, points })
    }

    /// Documented default `P = 4n + 4`.
    pub fn with_default_points(n: usize) -> Self {
        Self {
            n: n.max(1),
            points: 4 * n.max(1) + 4,
        }
    }

    /// Smallest admissible `P` whose only prime factors are 2, 3 and 5.
    pub fn smooth(n: usize) -> Self {
        let n = n.max(1);
        let mut p = 4 * n + 2;
        while !is_smooth(p) || p % 2 != 0 {
            p += 1;
        }
        Self { n, points: p }
    }

    pub fn side(&self) -> usize {
        2 * self.n + 1
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Position of `m` in the coefficient array, `None` outside the ball.
    pub fn index(&self, m: Mode) -> Option<usize> {
        if !in_ball(self.n, m) {
            return None;
        }
        let n = self.n as i32;
        Some(((m.0 + n) as usize) * self.side() + (m.1 + n) as usize)
    }

    pub fn mode_at(&self, idx: usize) -> Mode {
        let n = self.n as i32;
        let s = self.side();
        ((idx / s) as i32 - n, (idx % s) as i32 - n)
    }

    /// Ball modes with their array positions, in storage order.
    pub fn modes(&self) -> impl Iterator<Item = (usize, Mode)> + '_ {
        (0..self.len()).filter_map(move |i| {
            let m = self.mode_at(i);
            in_ball(self.n, m).then_some((i, m))
        })
    }

    pub fn mode_count(&self) -> usize {
        self.modes().count()
    }

    /// Ball modes sorted by `(|m|², m₁, m₂)`. The ball for a smaller `n` is a
    /// prefix of this order, which is what couples noise across cutoffs.
    pub fn shell_order(&self) -> Vec<(usize, Mode)> {
        let mut v: Vec<(usize, Mode)> = self.modes().collect();
        v.sort_by_key(|&(_, m)| (norm_sq(m), m.0, m.1));
        v
    }

    /// Whether products of `degree` band-limited factors are alias-free.
    pub fn resolves_degree(&self, degree: usize) -> bool {
        self.points > (degree + 1) * self.n
    }
}

fn is_smooth(mut p: usize) -> bool {
    for f in [2, 3, 5] {
        while p % f == 0 {
            p /= f;
        }
    }
    p == 1
}

/// Physical parameters `(μ, ν, λ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub mu: f64,
    pub nu: Complex64,
    pub lambda: Complex64,
}

impl PhysParams {
    pub fn new(mu: f64, nu: Complex64, lambda: Complex64) -> Result<Self> {
        let p = Self { mu, nu, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::config(format!("mu must be positive, got {}", self.mu)));
        }
        if self.nu.re < 0.0 || !self.nu.is_finite() || !self.lambda.is_finite() {
            return Err(Error::config(format!(
                "nu must have nonnegative real part, got {}",
                self.nu
            )));
        }
        Ok(())
    }
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            nu: Complex64::new(1.0, 0.0),
            lambda: ZERO,
        }
    }
}

/// Diagonal linear symbol `4π²(i+μ)|m|² + offset`.
///
/// `offset = 1` is `−A` with `A = (i+μ)Δ − 1`; `offset = 0` is `−(i+μ)Δ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSymbol {
    pub mu: f64,
    pub offset: Complex64,
}

impl LinearSymbol {
    pub fn a(mu: f64) -> Self {
        Self {
            mu,
            offset: Complex64::new(1.0, 0.0),
        }
    }

    pub fn laplacian(mu: f64) -> Self {
        Self { mu, offset: ZERO }
    }

    /// `λ_Δ − λ`, the full linear part of the direct Galerkin drift.
    pub fn galerkin(mu: f64, lambda: Complex64) -> Self {
        Self { mu, offset: -lambda }
    }

    pub fn eval(&self, m: Mode) -> Complex64 {
        let k = 4.0 * PI * PI * norm_sq(m) as f64;
        Complex64::new(self.mu * k, k) + self.offset
    }
}

/// Galerkin cutoff `a_m = s(|m|/n)`: 1 on `|m| ≤ n/2`, 0 on `|m| ≥ n`.
pub fn cutoff_symbol(n: usize, m: Mode) -> f64 {
    assert!(n >= 1, "cutoff needs n >= 1");
    let r = (norm_sq(m) as f64).sqrt() / n as f64;
    profile::cutoff_transition(r)
}

/// Band-limited field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![ZERO; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(Mode) -> Complex64) -> Self {
        let mut out = Self::zeros(grid);
        for (i, m) in grid.modes() {
            out.coeffs[i] = f(m);
        }
        out
    }

    /// `c · e_m`.
    pub fn basis(grid: Grid, m: Mode, c: Complex64) -> Result<Self> {
        let mut out = Self::zeros(grid);
        let i = grid
            .index(m)
            .ok_or_else(|| Error::input(format!("mode {m:?} outside band limit {}", grid.n)))?;
        out.coeffs[i] = c;
        Ok(out)
    }

    pub fn constant(grid: Grid, c: Complex64) -> Self {
        Self::basis(grid, (0, 0), c).expect("mode 0 is always present")
    }

    /// Independent isotropic complex normal coefficients with variance
    /// `(1 + |m|²)^{−decay}` on `|m| ≤ band`.
    pub fn random<R: RngCore + ?Sized>(grid: Grid, band: usize, decay: f64, rng: &mut R) -> Self {
        Self::from_fn(grid, |m| {
            if in_ball(band, m) {
                crate::rng::complex_normal(rng, (1.0 + norm_sq(m) as f64).powf(-decay))
            } else {
                ZERO
            }
        })
    }

    pub fn get(&self, m: Mode) -> Complex64 {
        self.grid.index(m).map_or(ZERO, |i| self.coeffs[i])
    }

    pub fn set(&mut self, m: Mode, v: Complex64) -> Result<()> {
        let i = self
            .grid
            .index(m)
            .ok_or_else(|| Error::input(format!("mode {m:?} outside band limit {}", self.grid.n)))?;
        self.coeffs[i] = v;
        Ok(())
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "{:?} vs {:?}",
                self.grid, other.grid
            )));
        }
        Ok(())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|_, v| v * c)
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.map(|_, v| v * c)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: Complex64, other: &Self) -> Result<()> {
        self.check_same_grid(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn zip(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// Mode-wise map; out-of-ball entries stay zero.
    pub fn map(&self, mut f: impl FnMut(Mode, Complex64) -> Complex64) -> Self {
        let mut out = Self::zeros(self.grid);
        for (i, m) in self.grid.modes() {
            out.coeffs[i] = f(m, self.coeffs[i]);
        }
        out
    }

    /// Coefficients of the pointwise conjugate: `c̄_{−m}`.
    pub fn conj(&self) -> Self {
        self.map(|m, _| self.get((-m.0, -m.1)).conj())
    }

    /// `‖f‖_{L²}` by Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest coefficient modulus.
    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Non-conjugating pairing `⟨f, g⟩ = ∫ f g = Σ_m f_m g_{−m}`.
    pub fn pairing(&self, other: &Self) -> Complex64 {
        self.grid
            .modes()
            .map(|(i, m)| self.coeffs[i] * other.get((-m.0, -m.1)))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// Largest `|m|` with a nonzero coefficient (0 for the zero field).
    pub fn band(&self) -> f64 {
        self.grid
            .modes()
            .filter(|(i, _)| self.coeffs[*i] != ZERO)
            .map(|(_, m)| (norm_sq(m) as f64).sqrt())
            .fold(0.0, f64::max)
    }

    /// Re-embed into another grid, truncating to its ball.
    pub fn resize(&self, grid: Grid) -> Self {
        Self::from_fn(grid, |m| self.get(m))
    }

    /// Partial derivative `∂_{x_j}`, `j ∈ {0, 1}`.
    pub fn derivative(&self, axis: usize) -> Self {
        self.map(|m, c| {
            let k = if axis == 0 { m.0 } else { m.1 } as f64;
            c * Complex64::new(0.0, 2.0 * PI * k)
        })
    }

    pub fn laplacian(&self) -> Self {
        self.map(|m, c| c * (-4.0 * PI * PI * norm_sq(m) as f64))
    }

    /// Value at the point `x`.
    pub fn eval_at(&self, x: (f64, f64)) -> Complex64 {
        self.grid
            .modes()
            .map(|(i, m)| {
                let ph = 2.0 * PI * (m.0 as f64 * x.0 + m.1 as f64 * x.1);
                self.coeffs[i] * Complex64::from_polar(1.0, ph)
            })
            .sum()
    }

    pub fn to_grid(&self) -> GridValues {
        to_grid_with(self, self.grid.points)
    }
}

/// Values on a `P × P` collocation grid; entry `i₂·P + i₁` sits at
/// `x = (i₁/P, i₂/P)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridValues {
    pub points: usize,
    pub data: Vec<Complex64>,
}

impl GridValues {
    pub fn zeros(points: usize) -> Self {
        Self {
            points,
            data: vec![ZERO; points * points],
        }
    }

    pub fn from_fn(points: usize, f: impl Fn((f64, f64)) -> Complex64) -> Self {
        let p = points as f64;
        let mut data = Vec::with_capacity(points * points);
        for i2 in 0..points {
            for i1 in 0..points {
                data.push(f((i1 as f64 / p, i2 as f64 / p)));
            }
        }
        Self { points, data }
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            points: self.points,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.points != other.points {
            return Err(Error::GridMismatch(format!(
                "collocation sizes {} vs {}",
                self.points, other.points
            )));
        }
        Ok(Self {
            points: self.points,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// Equal-weight quadrature of `∫_𝕋 f`.
    pub fn mean(&self) -> Complex64 {
        self.data.iter().sum::<Complex64>() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Discrete `L^p` norm; `p = ∞` is the grid maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.max_abs();
        }
        let s: f64 = if p == 2.0 {
            self.data.iter().map(|v| v.norm_sqr()).sum()
        } else {
            self.data.iter().map(|v| v.norm().powf(p)).sum()
        };
        (s / self.data.len() as f64).powf(1.0 / p)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn from_grid(&self, grid: Grid) -> Result<SpectralField> {
        from_grid(self, grid)
    }
}

static PLANS: LazyLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)>> =
    LazyLock::new(|| Mutex::new((FftPlanner::new(), HashMap::new())));

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut guard = PLANS.lock().expect("fft plan cache poisoned");
    let (planner, cache) = &mut *guard;
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            let dir = if inverse {
                FftDirection::Inverse
            } else {
                FftDirection::Forward
            };
            planner.plan_fft(len, dir)
        })
        .clone()
}

fn wrap(k: i32, p: usize) -> usize {
    k.rem_euclid(p as i32) as usize
}

fn run(fft: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
    let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
}

/// Synthesis on a `P × P` grid. Only the `2n+1` occupied rows are
/// transformed in the first pass.
pub fn to_grid_with(f: &SpectralField, points: usize) -> GridValues {
    let n = f.grid.n;
    let p = points;
    assert!(p > 2 * n, "collocation size {p} cannot hold band limit {n}");
    let side = f.grid.side();
    let inv = plan(p, true);
    // Pass 1: along m₂ for each m₁ row.
    let mut rows = vec![ZERO; side * p];
    for r in 0..side {
        let row = &mut rows[r * p..(r + 1) * p];
        for c in 0..side {
            let v = f.coeffs[r * side + c];
            if v != ZERO {
                row[wrap(c as i32 - n as i32, p)] = v;
            }
        }
    }
    run(&inv, &mut rows);
    // Pass 2: along m₁ for each i₂; output row i₂ is contiguous in i₁.
    let mut data = vec![ZERO; p * p];
    for i2 in 0..p {
        let col = &mut data[i2 * p..(i2 + 1) * p];
        for r in 0..side {
            col[wrap(r as i32 - n as i32, p)] = rows[r * p + i2];
        }
    }
    run(&inv, &mut data);
    GridValues { points: p, data }
}

/// Analysis back to the ball `|m| ≤ grid.n`; inverse of [`to_grid_with`] on
/// band-limited data.
pub fn from_grid(values: &GridValues, grid: Grid) -> Result<SpectralField> {
    let p = values.points;
    if values.data.len() != p * p {
        return Err(Error::GridMismatch(format!(
            "{} values for a {p}x{p} grid",
            values.data.len()
        )));
    }
    let n = grid.n;
    if p <= 2 * n {
        return Err(Error::GridMismatch(format!(
            "collocation size {p} cannot hold band limit {n}"
        )));
    }
    let side = grid.side();
    let fwd = plan(p, false);
    // Pass 1: along i₁ within each row i₂.
    let mut buf = values.data.clone();
    run(&fwd, &mut buf);
    // Keep only the 2n+1 wavenumbers m₁ that survive truncation.
    let mut rows = vec![ZERO; side * p];
    for r in 0..side {
        let k = wrap(r as i32 - n as i32, p);
        for i2 in 0..p {
            rows[r * p + i2] = buf[i2 * p + k];
        }
    }
    run(&fwd, &mut rows);
    let scale = 1.0 / (p * p) as f64;
    let mut out = SpectralField::zeros(grid);
    for (i, m) in grid.modes() {
        let r = (m.0 + n as i32) as usize;
        out.coeffs[i] = rows[r * p + wrap(m.1, p)] * scale;
    }
    Ok(out)
}

/// `Π_n`: multiply mode `m` by `cutoff_symbol(n, m)`.
pub fn project_pi(f: &SpectralField, n: usize) -> SpectralField {
    f.map(|m, c| c * cutoff_symbol(n, m))
}

/// Exact Fourier multiplier `e^{−t·symbol(m)}`.
pub fn semigroup_apply(f: &SpectralField, t: f64, symbol: &LinearSymbol) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(Error::input(format!("semigroup time must be nonnegative, got {t}")));
    }
    Ok(f.map(|m, c| c * (-symbol.eval(m) * t).exp()))
}

/// Truncated product `f·g`.
pub fn dealiased_product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    f.check_same_grid(g)?;
    if !f.grid.resolves_degree(2) {
        return Err(Error::config("collocation grid too coarse for a quadratic product"));
    }
    let a = f.to_grid();
    let b = g.to_grid();
    from_grid(&a.zip(&b, |x, y| x * y)?, f.grid)
}

/// Truncated `|u|²u`.
pub fn dealiased_cubic(u: &SpectralField) -> Result<SpectralField> {
    if !u.grid.resolves_degree(3) {
        return Err(Error::config(format!(
            "collocation size {} is below 4n+2 = {}",
            u.grid.points,
            4 * u.grid.n + 2
        )));
    }
    let v = u.to_grid();
    from_grid(&v.map(|z| z * z.norm_sqr()), u.grid)
}

/// `φ₁(w) = (e^w − 1)/w` with its series near 0.
pub fn phi1(w: Complex64) -> Complex64 {
    if w.norm() < 1e-6 {
        Complex64::new(1.0, 0.0) + w * 0.5 + w * w / 6.0
    } else {
        (w.exp() - 1.0) / w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(4, 18).is_ok());
        assert!(Grid::new(4, 17).is_err());
        assert!(Grid::new(4, 16).is_err());
        assert_eq!(Grid::smooth(32).points, 144);
        assert_eq!(Grid::smooth(64).points, 270);
        assert_eq!(Grid::with_default_points(32).points, 132);
    }

    #[test]
    fn shell_order_nests() {
        let small = Grid::smooth(4).shell_order();
        let big = Grid::smooth(9).shell_order();
        for (a, b) in small.iter().zip(&big) {
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn constant_mode_is_constant_on_grid() {
        let g = Grid::smooth(3);
        let v = SpectralField::constant(g, c(1.0, 0.0)).to_grid();
        assert!(v.data.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn grid_values_match_pointwise_series() {
        let g = Grid::smooth(5);
        let f = SpectralField::random(g, 5, 0.5, &mut rng::stream(3, 0, 0, 9));
        let v = f.to_grid();
        let p = g.points;
        for &(i1, i2) in &[(0usize, 0usize), (3, 7), (p - 1, 5)] {
            let x = (i1 as f64 / p as f64, i2 as f64 / p as f64);
            assert!((v.data[i2 * p + i1] - f.eval_at(x)).norm() < 1e-12);
        }
    }

    #[test]
    fn round_trip() {
        let g = Grid::smooth(7);
        let f = SpectralField::random(g, 7, 0.0, &mut rng::stream(1, 0, 0, 9));
        let back = from_grid(&f.to_grid(), g).unwrap();
        let err = f.sub(&back).unwrap().max_coeff();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn cubic_of_single_mode() {
        let g = Grid::smooth(4);
        let u = SpectralField::basis(g, (2, -1), c(0.5, 1.5)).unwrap();
        let cube = dealiased_cubic(&u).unwrap();
        let want = c(0.5, 1.5) * c(0.5, 1.5).norm_sqr();
        assert!((cube.get((2, -1)) - want).norm() < 1e-13);
        assert!(cube.sub(&u.scale_real(c(0.5, 1.5).norm_sqr())).unwrap().max_coeff() < 1e-13);
    }

    #[test]
    fn cubic_rejects_coarse_grid() {
        let g = Grid { n: 4, points: 12 };
        assert!(matches!(dealiased_cubic(&SpectralField::zeros(g)), Err(Error::Config(_))));
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff_symbol(4, (0, 0)), 1.0);
        assert_eq!(cutoff_symbol(4, (3, 4)), 0.0);
        assert_eq!(cutoff_symbol(4, (2, 0)), 1.0);
        let s = cutoff_symbol(4, (3, 0));
        assert!(s > 0.0 && s < 1.0);
        assert_eq!(s, cutoff_symbol(4, (0, -3)));
    }

    #[test]
    fn semigroup_single_mode() {
        let g = Grid::smooth(3);
        let f = SpectralField::basis(g, (1, 1), c(1.0, 0.0)).unwrap();
        let s = LinearSymbol::a(0.7);
        let out = semigroup_apply(&f, 0.01, &s).unwrap();
        let want = (-0.01 * c(4.0 * PI * PI * 2.0 * 0.7 + 1.0, 4.0 * PI * PI * 2.0)).exp();
        assert!((out.get((1, 1)) - want).norm() < 1e-15);
        assert!(semigroup_apply(&f, -1.0, &s).is_err());
    }

    #[test]
    fn conj_matches_pointwise_conjugate() {
        let g = Grid::smooth(4);
        let f = SpectralField::random(g, 4, 0.0, &mut rng::stream(5, 0, 0, 9));
        let a = f.conj().to_grid();
        let b = f.to_grid().map(|z| z.conj());
        assert!(a.zip(&b, |x, y| x - y).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn phi1_series_is_continuous() {
        let w = c(1e-6, 0.0);
        let exact = (w.exp() - 1.0) / w;
        assert!((phi1(c(0.999e-6, 0.0)) - exact).norm() < 1e-9);
        assert!((phi1(c(-2.0, 1.0)) - ((c(-2.0, 1.0)).exp() - 1.0) / c(-2.0, 1.0)).norm() < 1e-15);
    }
}
