//! Galerkin Ornstein-Uhlenbeck field and its Wick powers.
//!
//! Mode `m` of `Z^{(n)}` solves `dZ_m = −λ_m Z_m dt + a_m dW_m` with
//! `λ_m = 4π²(i+μ)|m|² + 1` and cutoff weight `a_m`. Complex Brownian motions
//! are normalized by `E|W_m(t)|² = t`, real and imaginary parts each of
//! variance `t/2`.
//!
//! All per-mode draws are taken in shell order (see
//! [`Grid::shell_order`](crate::spectral::Grid::shell_order)), so the noise
//! driving cutoff `n` is exactly the low-mode part of the noise driving any
//! larger cutoff at the same `(seed, replica, step)`.

use crate::error::{Error, Result};
use crate::rng::{self, purpose};
use crate::spectral::{
    cutoff_symbol, from_grid, semigroup_apply, Grid, GridValues, LinearSymbol, Mode, SpectralField,
};
use crate::wick::h21;
use num_complex::Complex64;
use rand::RngCore;
use std::f64::consts::PI;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Complex Brownian increments `ΔW_m` over one step of length `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    pub h: f64,
    pub dw: SpectralField,
}

impl NoiseIncrement {
    pub fn zero(grid: Grid, h: f64) -> Self {
        Self {
            h,
            dw: SpectralField::zeros(grid),
        }
    }

    pub fn sample<R: RngCore + ?Sized>(grid: Grid, h: f64, rng: &mut R) -> Self {
        let mut dw = SpectralField::zeros(grid);
        for (i, _) in grid.shell_order() {
            dw.coeffs[i] = rng::complex_normal(rng, h);
        }
        Self { h, dw }
    }

    /// Increment for `(seed, replica, step)` of the counter-based stream.
    pub fn for_step(grid: Grid, h: f64, seed: u64, replica: u64, step: u64) -> Self {
        Self::sample(grid, h, &mut rng::stream(seed, replica, step, purpose::NOISE))
    }

    /// Sum of consecutive increments (a coarse-step increment).
    pub fn combine(parts: &[NoiseIncrement]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::input("cannot combine an empty list of increments"))?;
        let mut out = Self::zero(first.dw.grid, 0.0);
        for p in parts {
            out.dw.axpy(Complex64::new(1.0, 0.0), &p.dw)?;
            out.h += p.h;
        }
        Ok(out)
    }
}

/// `c_n = Σ_{|m| ≤ n} a_m² / (2(4π²μ|m|² + 1))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenormConstant {
    pub n: usize,
    pub mu: f64,
    pub value: f64,
}

pub fn stationary_variance(n: usize, mu: f64, m: Mode) -> f64 {
    let a = cutoff_symbol(n, m);
    a * a / (2.0 * LinearSymbol::a(mu).eval(m).re)
}

pub fn renorm_constant(n: usize, mu: f64) -> Result<RenormConstant> {
    if n == 0 {
        return Err(Error::config("renormalization constant needs n >= 1"));
    }
    if !(mu > 0.0) {
        return Err(Error::config(format!("mu must be positive, got {mu}")));
    }
    let ni = n as i32;
    let mut terms = Vec::new();
    for a in -ni..=ni {
        for b in -ni..=ni {
            if a * a + b * b < ni * ni {
                let v = stationary_variance(n, mu, (a, b));
                if v > 0.0 {
                    terms.push(v);
                }
            }
        }
    }
    terms.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(RenormConstant {
        n,
        mu,
        value: terms.iter().sum(),
    })
}

/// Variance constant of `Z(0, t)` started from zero:
/// `Σ a_m² (1 − e^{−2 Re λ_m t}) / (2 Re λ_m)`. Tends to `c_n` as `t → ∞`.
pub fn transient_renorm_constant(n: usize, mu: f64, t: f64) -> Result<RenormConstant> {
    if !(t >= 0.0) {
        return Err(Error::input(format!("time must be nonnegative, got {t}")));
    }
    let full = renorm_constant(n, mu)?;
    let sym = LinearSymbol::a(mu);
    let ni = n as i32;
    let mut terms = Vec::new();
    for a in -ni..=ni {
        for b in -ni..=ni {
            if a * a + b * b < ni * ni {
                let re = sym.eval((a, b)).re;
                let v = stationary_variance(n, mu, (a, b)) * -(-2.0 * re * t).exp_m1();
                if v > 0.0 {
                    terms.push(v);
                }
            }
        }
    }
    terms.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(full.with_value(terms.iter().sum()))
}

impl RenormConstant {
    /// Same cutoff, explicit value (e.g. `0` to switch renormalization off).
    pub fn with_value(self, value: f64) -> Self {
        Self { value, ..self }
    }
}

/// `Z^{(n)}(0, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OUState {
    pub t: f64,
    pub z: SpectralField,
}

/// Per-mode coefficients of one OU step of length `h`.
#[derive(Clone, Debug)]
pub struct OuPropagator {
    pub grid: Grid,
    pub h: f64,
    order: Vec<usize>,
    decay: Vec<Complex64>,
    weight: Vec<f64>,
    innovation_sd: Vec<f64>,
}

impl OuPropagator {
    pub fn new(grid: Grid, mu: f64, h: f64) -> Self {
        let sym = LinearSymbol::a(mu);
        let mut decay = vec![ZERO; grid.len()];
        let mut weight = vec![0.0; grid.len()];
        let mut innovation_sd = vec![0.0; grid.len()];
        for (i, m) in grid.modes() {
            let l = sym.eval(m);
            decay[i] = (-l * h).exp();
            weight[i] = cutoff_symbol(grid.n, m);
            innovation_sd[i] = (-(-2.0 * l.re * h).exp_m1() / (2.0 * l.re)).sqrt();
        }
        Self {
            grid,
            h,
            order: grid.shell_order().into_iter().map(|(i, _)| i).collect(),
            decay,
            weight,
            innovation_sd,
        }
    }

    pub fn weight(&self, idx: usize) -> f64 {
        self.weight[idx]
    }

    pub fn decay(&self, idx: usize) -> Complex64 {
        self.decay[idx]
    }

    /// Standard deviation of the unit-weight innovation of mode `idx`.
    pub fn innovation_sd(&self, idx: usize) -> f64 {
        self.innovation_sd[idx]
    }

    /// Exact transition with fresh innovations drawn in shell order.
    pub fn exact_step<R: RngCore + ?Sized>(&self, state: &mut OUState, rng: &mut R) {
        for &i in &self.order {
            let g = rng::complex_normal(rng, 1.0) * self.innovation_sd[i];
            state.z.coeffs[i] = self.decay[i] * state.z.coeffs[i] + self.weight[i] * g;
        }
        state.t += self.h;
    }

    /// Exponential Euler with the left-point increment:
    /// `Z_m ← e^{−λ_m h}(Z_m + a_m ΔW_m)`.
    pub fn em_step(&self, state: &mut OUState, dw: &NoiseIncrement) {
        for &i in &self.order {
            state.z.coeffs[i] = self.decay[i] * (state.z.coeffs[i] + self.weight[i] * dw.dw.coeffs[i]);
        }
        state.t += self.h;
    }
}

impl OUState {
    /// `Z(0) = 0`.
    pub fn zero(grid: Grid) -> Self {
        Self {
            t: 0.0,
            z: SpectralField::zeros(grid),
        }
    }

    /// One draw from the stationary law `Z_m ~ a_m·CN(0, 1/(2 Re λ_m))`.
    pub fn stationary<R: RngCore + ?Sized>(grid: Grid, mu: f64, rng: &mut R) -> Self {
        let sym = LinearSymbol::a(mu);
        let mut z = SpectralField::zeros(grid);
        for (i, m) in grid.shell_order() {
            let g = rng::complex_normal(rng, 1.0);
            z.coeffs[i] = g * (cutoff_symbol(grid.n, m) / (2.0 * sym.eval(m).re).sqrt());
        }
        Self { t: 0.0, z }
    }
}

pub fn ou_exact_step<R: RngCore + ?Sized>(state: &OUState, mu: f64, h: f64, rng: &mut R) -> Result<OUState> {
    if !(h > 0.0) {
        return Err(Error::input(format!("step must be positive, got {h}")));
    }
    let mut next = state.clone();
    OuPropagator::new(state.z.grid, mu, h).exact_step(&mut next, rng);
    Ok(next)
}

pub fn ou_em_step(state: &OUState, mu: f64, h: f64, dw: &NoiseIncrement) -> Result<OUState> {
    if !(h > 0.0) {
        return Err(Error::input(format!("step must be positive, got {h}")));
    }
    state.z.check_same_grid(&dw.dw)?;
    let mut next = state.clone();
    OuPropagator::new(state.z.grid, mu, h).em_step(&mut next, dw);
    Ok(next)
}

/// `(Z, Z^{:2,0:}, Z^{:1,1:}, Z^{:2,1:})`, each `H_{k,l}(Z(x), c)` evaluated
/// pointwise and truncated to the band limit.
#[derive(Clone, Debug)]
pub struct WickBundle {
    pub z10: SpectralField,
    pub z20: SpectralField,
    pub z11: SpectralField,
    pub z21: SpectralField,
    pub c: f64,
}

/// Pointwise Wick powers of `Z` on the collocation grid.
#[derive(Clone, Debug)]
pub struct WickGrid {
    pub z10: GridValues,
    pub z20: GridValues,
    pub z11: GridValues,
    pub z21: GridValues,
}

impl WickGrid {
    pub fn from_values(z: GridValues, c: f64) -> Self {
        Self {
            z20: z.map(|v| v * v),
            z11: z.map(|v| Complex64::new(v.norm_sqr() - c, 0.0)),
            z21: z.map(|v| h21(v, c)),
            z10: z,
        }
    }
}

impl WickBundle {
    pub fn grid(&self) -> Grid {
        self.z10.grid
    }

    pub fn is_zero(&self) -> bool {
        self.z10.max_coeff() == 0.0 && self.c == 0.0
    }

    /// Pointwise powers rebuilt from `z10`; this is the exact object the
    /// truncated fields approximate.
    pub fn pointwise(&self) -> WickGrid {
        WickGrid::from_values(self.z10.to_grid(), self.c)
    }
}

pub fn wick_bundle(z: &SpectralField, c: &RenormConstant) -> Result<WickBundle> {
    wick_bundle_with(z, c.value)
}

pub fn wick_bundle_with(z: &SpectralField, c: f64) -> Result<WickBundle> {
    if !z.grid.resolves_degree(3) {
        return Err(Error::config(format!(
            "collocation size {} is below 4n+2 = {}",
            z.grid.points,
            4 * z.grid.n + 2
        )));
    }
    let w = WickGrid::from_values(z.to_grid(), c);
    Ok(WickBundle {
        z10: z.clone(),
        z20: from_grid(&w.z20, z.grid)?,
        z11: from_grid(&w.z11, z.grid)?,
        z21: from_grid(&w.z21, z.grid)?,
        c,
    })
}

/// `Z(s,t) = Z_t − e^{(t−s)A} Z_s`.
pub fn shift_field(z_s: &SpectralField, z_t: &SpectralField, dt: f64, mu: f64) -> Result<SpectralField> {
    if !(dt >= 0.0) {
        return Err(Error::input(format!("time shift must be nonnegative, got {dt}")));
    }
    z_t.sub(&semigroup_apply(z_s, dt, &LinearSymbol::a(mu))?)
}

/// Wick bundle of `Z(s,t)` with the same constant.
pub fn nonstationary_shift(
    z_s: &SpectralField,
    z_t: &SpectralField,
    dt: f64,
    c: &RenormConstant,
) -> Result<WickBundle> {
    wick_bundle(&shift_field(z_s, z_t, dt, c.mu)?, c)
}

/// Slope of `c_n` against `ln n` is `1/(4πμ)` asymptotically.
pub fn log_slope(mu: f64) -> f64 {
    1.0 / (4.0 * PI * mu)
}
