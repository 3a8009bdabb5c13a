//! Linearized flow of the Galerkin system and a Monte Carlo check of the
//! Bismut-Elworthy-Li gradient identity.
//!
//! The primal state `u` is advanced by the direct exponential Euler scheme;
//! the derivative `J = D_h u` is advanced by the exact derivative of that
//! discrete map, so finite differences of the scheme converge to `J` at
//! first order in `ε`.
//!
//! For the discrete map `u_{k+1} = F(u_k) + e^{−Lh} a ΔW_k` a shift
//! `ΔW_k → ΔW_k + ε h w_k` with `w_k = e^{Lh} J_{k+1} / a` moves `u_K` by
//! `ε t J_K`, and Gaussian integration by parts with `E|ΔW_m|² = h` gives
//!
//! ```text
//! E[DΦ(u_t)(t J_t)] = E[Φ(u_t) · 2 Σ_k ⟨w_k, ΔW_k⟩_ℝ]
//! ```
//!
//! Paths on which the running `‖Z̲‖` leaves the flat region of the cutoff are
//! discarded and counted.

use crate::dyadic::{besov_norm, BesovParams, DyadicPartition};
use crate::error::{Error, Result};
use crate::ou::{transient_renorm_constant, wick_bundle_with, NoiseIncrement, OUState, OuPropagator};
use crate::solver::{cutoff_weights, Propagator};
use crate::spectral::{from_grid, Grid, LinearSymbol, PhysParams, SpectralField};
use crate::stats::Estimate;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Scalar observable with its directional derivative.
pub trait Observable: Sync {
    fn value(&self, u: &SpectralField) -> f64;
    fn derivative(&self, u: &SpectralField, dir: &SpectralField) -> f64;
}

/// `Φ(u) = Re ⟨u, e_0⟩`.
#[derive(Clone, Copy, Debug)]
pub struct MeanReal;

impl Observable for MeanReal {
    fn value(&self, u: &SpectralField) -> f64 {
        u.get((0, 0)).re
    }
    fn derivative(&self, _u: &SpectralField, dir: &SpectralField) -> f64 {
        dir.get((0, 0)).re
    }
}

/// `Φ(u) = tanh(Re ⟨u, e_0⟩)`.
#[derive(Clone, Copy, Debug)]
pub struct TanhMeanReal;

impl Observable for TanhMeanReal {
    fn value(&self, u: &SpectralField) -> f64 {
        u.get((0, 0)).re.tanh()
    }
    fn derivative(&self, u: &SpectralField, dir: &SpectralField) -> f64 {
        let c = u.get((0, 0)).re.cosh();
        dir.get((0, 0)).re / (c * c)
    }
}

/// Coupled exponential Euler for `(u, J)` on the direct scheme.
#[derive(Clone, Debug)]
pub struct VariationalStepper {
    pub grid: Grid,
    pub params: PhysParams,
    pub h: f64,
    pub c: f64,
    pub guard_theta: f64,
    lin: Propagator,
    pi: Vec<f64>,
}

impl VariationalStepper {
    pub fn new(grid: Grid, params: PhysParams, h: f64, c: f64) -> Result<Self> {
        params.validate()?;
        if !(h > 0.0) {
            return Err(Error::config(format!("h must be positive, got {h}")));
        }
        if !grid.resolves_degree(3) {
            return Err(Error::config("collocation grid too coarse for the cubic term"));
        }
        Ok(Self {
            grid,
            params,
            h,
            c,
            guard_theta: 0.5,
            lin: Propagator::new(grid, &LinearSymbol::galerkin(params.mu, params.lambda), h),
            pi: cutoff_weights(grid),
        })
    }

    /// Noise weight `a_m`.
    pub fn noise_weight(&self, idx: usize) -> f64 {
        self.pi[idx]
    }

    /// Advances `u` and, when given, `J` with the same left-point data. The
    /// step is refused when `h·|ν|·max|u|²` exceeds the guard threshold, since
    /// sub-stepping would change the map being differentiated.
    pub fn step(&self, u: &mut SpectralField, j: Option<&mut SpectralField>, dw: &NoiseIncrement) -> Result<()> {
        u.check_same_grid(&dw.dw)?;
        let ug = u.to_grid();
        let umax = ug.data.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        if self.h * self.params.nu.norm() * umax > self.guard_theta {
            return Err(Error::BlowUp {
                t: f64::NAN,
                detail: format!("step guard engaged (max|u|² = {umax:.3e}) in a differentiated run"),
            });
        }
        let c = self.c;
        let nu = self.params.nu;
        if let Some(j) = j {
            j.check_same_grid(u)?;
            let jg = j.to_grid();
            let lin_grid = ug.zip(&jg, |v, w| v * v * w.conj() + w * (2.0 * (v.norm_sqr() - c)))?;
            let mut dn = from_grid(&lin_grid, self.grid)?;
            for (i, _) in self.grid.modes() {
                dn.coeffs[i] *= -nu * self.pi[i];
            }
            self.lin.apply(j, &dn);
        }
        let mut n = from_grid(&ug.map(|v| crate::wick::h21(v, c)), self.grid)?;
        for (i, _) in self.grid.modes() {
            n.coeffs[i] *= -nu * self.pi[i];
        }
        self.lin.apply(u, &n);
        for (i, _) in self.grid.modes() {
            u.coeffs[i] += self.lin.decay[i] * self.pi[i] * dw.dw.coeffs[i];
        }
        if !u.is_finite() {
            return Err(Error::BlowUp {
                t: f64::NAN,
                detail: "non-finite solution".into(),
            });
        }
        Ok(())
    }

    /// `w = e^{Lh} J_{k+1} / a`, zero where `a_m = 0`.
    pub fn girsanov_weight(&self, j_next: &SpectralField) -> SpectralField {
        let mut w = SpectralField::zeros(self.grid);
        for (i, _) in self.grid.modes() {
            if self.pi[i] > 0.0 {
                w.coeffs[i] = j_next.coeffs[i] / (self.lin.decay[i] * self.pi[i]);
            }
        }
        w
    }
}

/// One exponential-Euler step of `J` along the primal state `u`.
pub fn variational_step(
    j: &SpectralField,
    u: &SpectralField,
    c: f64,
    h: f64,
    params: &PhysParams,
) -> Result<SpectralField> {
    j.check_same_grid(u)?;
    let stepper = VariationalStepper::new(u.grid, *params, h, c)?;
    let mut uu = u.clone();
    let mut jj = j.clone();
    stepper.step(&mut uu, Some(&mut jj), &NoiseIncrement::zero(u.grid, h))?;
    Ok(jj)
}

/// `Σ Re(x_i)Re(y_i) + Im(x_i)Im(y_i)` over the mode vector.
pub fn real_pairing(x: &SpectralField, y: &SpectralField) -> f64 {
    x.coeffs.iter().zip(&y.coeffs).map(|(a, b)| a.re * b.re + a.im * b.im).sum()
}

/// `max{‖Z‖, t^α‖Z^{:2,0:}‖, t^α‖Z^{:1,1:}‖, t^α‖Z^{:2,1:}‖}` in
/// `B^{−α}_{∞,∞}`, with the Wick constant of the zero-started field.
pub fn wick_norm(z: &SpectralField, c: f64, alpha: f64, t: f64) -> Result<f64> {
    let b = wick_bundle_with(z, c)?;
    let part = DyadicPartition::for_band(z.grid.n);
    let params = BesovParams::holder(-alpha);
    let mut out: f64 = 0.0;
    let ta = t.powf(alpha);
    for (f, w) in [(&b.z10, 1.0), (&b.z20, ta), (&b.z11, ta), (&b.z21, ta)] {
        out = out.max(w * besov_norm(f, &params, &part)?);
    }
    Ok(out)
}

/// Cutoff `χ` of the running `‖Z̲‖`: `χ = 1` below `threshold`, so paths
/// that stay below it carry no `χ'` term; paths reaching `tau2_threshold`
/// are stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffSpec {
    pub threshold: f64,
    pub alpha: f64,
    pub tau2_threshold: f64,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self {
            threshold: 2.0,
            alpha: 0.25,
            tau2_threshold: 4.0,
        }
    }
}

/// Settings of a gradient-identity run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BelConfig {
    pub mu: f64,
    pub nu: crate::config::CNum,
    pub lambda: crate::config::CNum,
    pub n: usize,
    pub h: f64,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Steps between samples of the running `‖Z̲‖`.
    pub monitor_every: usize,
    /// Largest acceptable discarded fraction.
    pub max_discard: f64,
    pub cutoff: CutoffSpec,
}

impl Default for BelConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            nu: crate::config::CNum(Complex64::new(1.0, 0.0)),
            lambda: crate::config::CNum(Complex64::new(0.0, 0.0)),
            n: 4,
            h: 2e-3,
            t: 0.1,
            replicas: 100_000,
            seed: 0,
            monitor_every: 25,
            max_discard: 1e-3,
            cutoff: CutoffSpec::default(),
        }
    }
}

impl BelConfig {
    pub fn params(&self) -> Result<PhysParams> {
        PhysParams::new(self.mu, self.nu.0, self.lambda.0)
    }

    pub fn grid(&self) -> Grid {
        Grid::smooth(self.n)
    }

    pub fn steps(&self) -> usize {
        (self.t / self.h).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        if self.n == 0 || !(self.h > 0.0) || !(self.t >= self.h) {
            return Err(Error::config("gradient check needs n >= 1 and 0 < h <= t"));
        }
        if self.replicas < 2 || self.monitor_every == 0 {
            return Err(Error::config("gradient check needs at least 2 replicas and monitor_every >= 1"));
        }
        if !(self.cutoff.threshold > 0.0 && self.cutoff.tau2_threshold > self.cutoff.threshold) {
            return Err(Error::config("cutoff thresholds must satisfy 0 < threshold < tau2_threshold"));
        }
        Ok(())
    }
}

/// Both sides of the identity with Monte Carlo errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BELReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    /// Mean and error of the paired difference `lhs − rhs`.
    pub difference: Estimate,
    pub discarded_fraction: f64,
    pub replicas: usize,
    pub unreliable: bool,
    /// Largest running `‖Z̲‖` seen on any path.
    pub max_wick_norm: f64,
}

impl BELReport {
    /// `|lhs − rhs| / sqrt(se_lhs² + se_rhs²)`.
    pub fn z_score(&self) -> f64 {
        self.lhs.z_score(&self.rhs)
    }
}

/// Per-replica outcome: `(lhs, rhs, ‖Z̲‖ max)`, `None` for a discarded path.
fn bel_replica(
    phi: &dyn Observable,
    v0: &SpectralField,
    h_dir: &SpectralField,
    cfg: &BelConfig,
    stepper: &VariationalStepper,
    ou: &OuPropagator,
    replica: u64,
) -> Result<(Option<(f64, f64)>, f64)> {
    let grid = stepper.grid;
    let steps = cfg.steps();
    let mut u = v0.clone();
    let mut j = crate::spectral::project_pi(h_dir, grid.n);
    let mut z = OUState::zero(grid);
    let mut mart = 0.0;
    let mut zmax: f64 = 0.0;
    let mut retained = true;
    for k in 0..steps {
        let dw = NoiseIncrement::for_step(grid, cfg.h, cfg.seed, replica, k as u64);
        stepper.step(&mut u, Some(&mut j), &dw)?;
        ou.em_step(&mut z, &dw);
        mart += 2.0 * real_pairing(&stepper.girsanov_weight(&j), &dw.dw);
        if (k + 1) % cfg.monitor_every == 0 || k + 1 == steps {
            let t = (k + 1) as f64 * cfg.h;
            let c = transient_renorm_constant(grid.n, cfg.mu, t)?.value;
            let w = wick_norm(&z.z, c, cfg.cutoff.alpha, t)?;
            zmax = zmax.max(w);
            if zmax >= cfg.cutoff.threshold {
                retained = false;
            }
        }
    }
    if !retained {
        return Ok((None, zmax));
    }
    let t = steps as f64 * cfg.h;
    let lhs = phi.derivative(&u, &j.scale_real(t));
    let rhs = phi.value(&u) * mart;
    Ok((Some((lhs, rhs)), zmax))
}

/// Monte Carlo estimate of both sides of the identity from `u₀ = v0` in
/// direction `h_dir`.
pub fn bel_estimator(phi: &dyn Observable, v0: &SpectralField, h_dir: &SpectralField, cfg: &BelConfig) -> Result<BELReport> {
    cfg.validate()?;
    let grid = cfg.grid();
    if v0.grid != grid || h_dir.grid != grid {
        return Err(Error::GridMismatch(format!(
            "gradient check expects fields on n = {}, N = {}",
            grid.n, grid.points
        )));
    }
    let params = cfg.params()?;
    let c = crate::ou::renorm_constant(grid.n, cfg.mu)?.value;
    let stepper = VariationalStepper::new(grid, params, cfg.h, c)?;
    let ou = OuPropagator::new(grid, cfg.mu, cfg.h);
    let results: Vec<Result<(Option<(f64, f64)>, f64)>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|r| bel_replica(phi, v0, h_dir, cfg, &stepper, &ou, r))
        .collect();
    let mut lhs = Vec::with_capacity(cfg.replicas);
    let mut rhs = Vec::with_capacity(cfg.replicas);
    let mut zmax: f64 = 0.0;
    let mut discarded = 0usize;
    for r in results {
        let (pair, z) = r?;
        zmax = zmax.max(z);
        match pair {
            Some((a, b)) => {
                lhs.push(a);
                rhs.push(b);
            }
            None => discarded += 1,
        }
    }
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let frac = discarded as f64 / cfg.replicas as f64;
    Ok(BELReport {
        lhs: Estimate::from_samples(&lhs),
        rhs: Estimate::from_samples(&rhs),
        difference: Estimate::from_samples(&diff),
        discarded_fraction: frac,
        replicas: cfg.replicas,
        unreliable: frac > cfg.max_discard,
        max_wick_norm: zmax,
    })
}

/// `t·Re(e^{−σ_0 t}(Π_n h)_0)`: the value of both sides for `ν = 0` and
/// `Φ = Re⟨u, e_0⟩`.
pub fn linear_mean_closed_form(h_dir: &SpectralField, t: f64, params: &PhysParams) -> f64 {
    let sigma = LinearSymbol::galerkin(params.mu, params.lambda).eval((0, 0));
    let pi0 = crate::spectral::cutoff_symbol(h_dir.grid.n, (0, 0));
    t * ((-sigma * t).exp() * h_dir.get((0, 0)) * pi0).re
}

/// Runs `(u, J)` to time `t` on a shared noise path (or without noise).
pub fn variational_run(
    v0: &SpectralField,
    h_dir: &SpectralField,
    cfg: &BelConfig,
    replica: u64,
    noise: bool,
) -> Result<(SpectralField, SpectralField)> {
    let grid = v0.grid;
    let c = crate::ou::renorm_constant(grid.n, cfg.mu)?.value;
    let stepper = VariationalStepper::new(grid, cfg.params()?, cfg.h, c)?;
    let mut u = v0.clone();
    let mut j = crate::spectral::project_pi(h_dir, grid.n);
    for k in 0..cfg.steps() {
        let dw = if noise {
            NoiseIncrement::for_step(grid, cfg.h, cfg.seed, replica, k as u64)
        } else {
            NoiseIncrement::zero(grid, cfg.h)
        };
        stepper.step(&mut u, Some(&mut j), &dw)?;
    }
    Ok((u, j))
}

/// Primal run only.
pub fn primal_run(v0: &SpectralField, cfg: &BelConfig, replica: u64, noise: bool) -> Result<SpectralField> {
    let grid = v0.grid;
    let c = crate::ou::renorm_constant(grid.n, cfg.mu)?.value;
    let stepper = VariationalStepper::new(grid, cfg.params()?, cfg.h, c)?;
    let mut u = v0.clone();
    for k in 0..cfg.steps() {
        let dw = if noise {
            NoiseIncrement::for_step(grid, cfg.h, cfg.seed, replica, k as u64)
        } else {
            NoiseIncrement::zero(grid, cfg.h)
        };
        stepper.step(&mut u, None, &dw)?;
    }
    Ok(u)
}

/// `(ε, ‖J(t) − (u(t; v0+εΠ_n h) − u(t; v0))/ε‖_{L²})` under common noise.
pub fn finite_difference_errors(
    v0: &SpectralField,
    h_dir: &SpectralField,
    cfg: &BelConfig,
    eps: &[f64],
    replica: u64,
    noise: bool,
) -> Result<Vec<(f64, f64)>> {
    let (u, j) = variational_run(v0, h_dir, cfg, replica, noise)?;
    let dir = crate::spectral::project_pi(h_dir, v0.grid.n);
    eps.iter()
        .map(|&e| {
            let mut shifted = v0.clone();
            shifted.axpy(Complex64::new(e, 0.0), &dir)?;
            let ue = primal_run(&shifted, cfg, replica, noise)?;
            let fd = ue.sub(&u)?.scale_real(1.0 / e);
            Ok((e, fd.sub(&j)?.l2_norm()))
        })
        .collect()
}

/// `max|J[2h] − 2J[h]| / max|J[h]|` along one noise path.
pub fn linearity_defect(v0: &SpectralField, h_dir: &SpectralField, cfg: &BelConfig, replica: u64) -> Result<f64> {
    let (_, j1) = variational_run(v0, h_dir, cfg, replica, true)?;
    let (_, j2) = variational_run(v0, &h_dir.scale_real(2.0), cfg, replica, true)?;
    Ok(j2.sub(&j1.scale_real(2.0))?.max_coeff() / j1.max_coeff())
}

/// Settings of the local gradient bound sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientBoundSpec {
    pub radii: Vec<f64>,
    pub scales: Vec<f64>,
    pub alpha0: f64,
    pub alpha1: f64,
    /// `T* = (1 + R)^{−kappa}`.
    pub kappa: f64,
    pub min_steps: usize,
}

impl Default for GradientBoundSpec {
    fn default() -> Self {
        Self {
            radii: vec![1.0, 4.0, 16.0],
            scales: vec![0.1, 1.0, 10.0],
            alpha0: 0.25,
            alpha1: 0.25,
            kappa: 2.0,
            min_steps: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientBoundRow {
    pub radius: f64,
    pub scale: f64,
    pub t_star: f64,
    /// `sup_t t^γ ‖J(t)‖_{B^{α₁}_{∞,∞}} / ‖h‖_{B^{−α₀}_{∞,∞}}` with
    /// `γ = (α₀ + α₁)/2`.
    pub ratio: f64,
}

/// Sweeps `R` and `‖h‖`, reporting the scale-free ratio statistic.
pub fn local_gradient_bound_check(
    h_shape: &SpectralField,
    spec: &GradientBoundSpec,
    base: &BelConfig,
) -> Result<Vec<GradientBoundRow>> {
    let grid = h_shape.grid;
    let part = DyadicPartition::for_band(grid.n);
    let low = BesovParams::holder(-spec.alpha0);
    let high = BesovParams::holder(spec.alpha1);
    let gamma = 0.5 * (spec.alpha0 + spec.alpha1);
    let c = crate::ou::renorm_constant(grid.n, base.mu)?.value;
    let mut rows = Vec::new();
    for &r in &spec.radii {
        let t_star = (1.0 + r).powf(-spec.kappa);
        let h = base.h.min(t_star / spec.min_steps as f64);
        let steps = (t_star / h).round() as usize;
        let stepper = VariationalStepper::new(grid, base.params()?, h, c)?;
        for &s in &spec.scales {
            let dir = h_shape.scale_real(s);
            let norm_h = besov_norm(&dir, &low, &part)?;
            let mut u = SpectralField::constant(grid, Complex64::new(r, 0.0));
            let mut j = crate::spectral::project_pi(&dir, grid.n);
            let mut sup: f64 = 0.0;
            for k in 0..steps {
                let dw = NoiseIncrement::for_step(grid, h, base.seed, 0, k as u64);
                stepper.step(&mut u, Some(&mut j), &dw)?;
                let t = (k + 1) as f64 * h;
                sup = sup.max(t.powf(gamma) * besov_norm(&j, &high, &part)?);
            }
            rows.push(GradientBoundRow {
                radius: r,
                scale: s,
                t_star,
                ratio: sup / norm_h,
            });
        }
    }
    Ok(rows)
}
