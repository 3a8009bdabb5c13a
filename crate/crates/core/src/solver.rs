//! Time stepping for the renormalized equation.
//!
//! Two discretizations of the same Galerkin system are provided.
//!
//! *Split*: `u = Z + Y` with `Z` the Galerkin OU field and
//! `∂_t Y = AY + Ψ(Y, Z̲)`,
//! `Ψ = (1+λ)(Z+Y) − ν Π_n C(Y, Z̲)` where
//! `C = |Y|²Y + 2Z|Y|² + Z̄Y² + 2Z^{:1,1:}Y + Z^{:2,0:}Ȳ + Z^{:2,1:}`.
//! `Y` is advanced by exponential Euler,
//! `Y ← e^{−hλ_A}Y + hφ₁(−hλ_A)·Ψ(Y_t, Z̲_t)`.
//!
//! *Direct*: exponential Euler on
//! `du = [(i+μ)Δu + λu − ν Π_n H_{2,1}(u, c)] dt + Σ a_m e_m dW_m`
//! with linear symbol `λ_Δ − λ` and the increment propagated by
//! `e^{−(λ_Δ−λ)h}`.
//!
//! Pointwise `C(Y, Z̲)` equals `H_{2,1}(Y + Z, c)`, so with `Π_n` acting on
//! the cubic part only both schemes discretize one system.
//!
//! Step guard: when `h·|ν|·max|u|² > θ` the deterministic part of the step is
//! split into sub-steps of length at most `θ/(|ν| max|u|²)`; the noise of the
//! step is unchanged. This only engages for very large data, e.g. when
//! coming down from `u₀ = 10⁴`.

use crate::config::{NoiseMode, OuInit, Scheme, SolverConfig};
use crate::dyadic::{besov_norm, lp_norm, DyadicPartition, Exponent};
use crate::error::{Error, Result};
use crate::ou::{renorm_constant, NoiseIncrement, OUState, OuPropagator, RenormConstant, WickBundle, WickGrid};
use crate::rng::{self, purpose};
use crate::spectral::{
    cutoff_symbol, from_grid, phi1, Grid, GridValues, LinearSymbol, PhysParams, SpectralField,
};
use crate::wick::h21;
use num_complex::Complex64;
use serde::Serialize;
use std::collections::BTreeMap;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Pointwise `C(Y, Z̲)`.
pub fn cubic_part_grid(y: &GridValues, w: &WickGrid) -> GridValues {
    let data = y
        .data
        .iter()
        .zip(&w.z10.data)
        .zip(&w.z20.data)
        .zip(&w.z11.data)
        .zip(&w.z21.data)
        .map(|((((&y, &z), &z20), &z11), &z21)| {
            let y2 = y.norm_sqr();
            y * y2 + z * (2.0 * y2) + z.conj() * y * y + y * (2.0 * z11.re) + z20 * y.conj() + z21
        })
        .collect();
    GridValues {
        points: y.points,
        data,
    }
}

/// `Ψ(Y, Z̲) = (1+λ)(Z+Y) − ν C(Y, Z̲)` truncated to the band limit, with the
/// Wick powers evaluated pointwise from `Z` and the bundle constant.
pub fn nonlinearity_psi(y: &SpectralField, zb: &WickBundle, params: &PhysParams) -> Result<SpectralField> {
    y.check_same_grid(&zb.z10)?;
    if !y.grid.resolves_degree(3) {
        return Err(Error::config("collocation grid too coarse for the cubic term"));
    }
    let cubic = from_grid(&cubic_part_grid(&y.to_grid(), &zb.pointwise()), y.grid)?;
    let mut out = zb.z10.add(y)?.scale(ONE + params.lambda);
    out.axpy(-params.nu, &cubic)?;
    Ok(out)
}

/// Per-mode `e^{−hσ_m}` and `hφ₁(−hσ_m)`.
#[derive(Clone, Debug)]
pub(crate) struct Propagator {
    pub(crate) decay: Vec<Complex64>,
    pub(crate) phi: Vec<Complex64>,
}

impl Propagator {
    pub(crate) fn new(grid: Grid, sym: &LinearSymbol, h: f64) -> Self {
        let mut decay = vec![ZERO; grid.len()];
        let mut phi = vec![ZERO; grid.len()];
        for (i, m) in grid.modes() {
            let w = -sym.eval(m) * h;
            decay[i] = w.exp();
            phi[i] = phi1(w) * h;
        }
        Self { decay, phi }
    }

    /// `decay ∘ x + phi ∘ drift`.
    pub(crate) fn apply(&self, x: &mut SpectralField, drift: &SpectralField) {
        for ((v, (d, p)), n) in x
            .coeffs
            .iter_mut()
            .zip(self.decay.iter().zip(&self.phi))
            .zip(&drift.coeffs)
        {
            *v = d * *v + p * n;
        }
    }
}

pub(crate) fn cutoff_weights(grid: Grid) -> Vec<f64> {
    let mut w = vec![0.0; grid.len()];
    for (i, m) in grid.modes() {
        w[i] = cutoff_symbol(grid.n, m);
    }
    w
}

fn check_finite(f: &SpectralField, t: f64, what: &str) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(Error::BlowUp {
            t,
            detail: format!("non-finite {what}"),
        })
    }
}

/// State of the split scheme.
#[derive(Clone, Debug)]
pub struct SplitState {
    pub t: f64,
    pub step: u64,
    pub y: SpectralField,
    pub ou: OUState,
    pub c: RenormConstant,
}

impl SplitState {
    /// `u = Z + Y`.
    pub fn solution(&self) -> SpectralField {
        self.ou.z.add(&self.y).expect("split state fields share a grid")
    }
}

/// Exponential Euler for the split scheme at fixed `(h, params, c)`.
#[derive(Clone, Debug)]
pub struct SplitStepper {
    pub grid: Grid,
    pub params: PhysParams,
    pub h: f64,
    pub c: f64,
    pub guard_theta: f64,
    lin: Propagator,
    pi: Vec<f64>,
    ou: OuPropagator,
}

impl SplitStepper {
    pub fn new(grid: Grid, params: PhysParams, h: f64, c: f64, guard_theta: f64) -> Result<Self> {
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
            guard_theta,
            lin: Propagator::new(grid, &LinearSymbol::a(params.mu), h),
            pi: cutoff_weights(grid),
            ou: OuPropagator::new(grid, params.mu, h),
        })
    }

    /// `Ψ` with `Π_n` on the cubic part, plus `max|Y+Z|²` on the grid.
    fn drift(&self, y: &SpectralField, w: &WickGrid) -> Result<(SpectralField, f64)> {
        let yg = y.to_grid();
        let umax = yg
            .data
            .iter()
            .zip(&w.z10.data)
            .map(|(a, b)| (a + b).norm_sqr())
            .fold(0.0, f64::max);
        let cubic = from_grid(&cubic_part_grid(&yg, w), self.grid)?;
        let lin = ONE + self.params.lambda;
        let nu = self.params.nu;
        let mut out = SpectralField::zeros(self.grid);
        for (i, _) in self.grid.modes() {
            out.coeffs[i] = lin * y.coeffs[i] - nu * self.pi[i] * cubic.coeffs[i];
        }
        Ok((out, umax))
    }

    /// Advances `Y` over one step with `Z` frozen at the left endpoint.
    fn advance_y(&self, y: &mut SpectralField, z: &SpectralField, t: f64) -> Result<()> {
        let w = WickGrid::from_values(z.to_grid(), self.c);
        let lin = ONE + self.params.lambda;
        let nu_abs = self.params.nu.norm();
        let mut remaining = self.h;
        let mut first = true;
        while remaining > 0.0 {
            let (mut drift, umax) = self.drift(y, &w)?;
            drift.axpy(lin, z)?;
            let limit = if nu_abs > 0.0 && umax > 0.0 {
                self.guard_theta / (nu_abs * umax)
            } else {
                f64::INFINITY
            };
            if first && self.h <= limit {
                self.lin.apply(y, &drift);
                return check_finite(y, t, "remainder Y");
            }
            first = false;
            let hs = remaining.min(limit);
            let sub = Propagator::new(self.grid, &LinearSymbol::a(self.params.mu), hs);
            sub.apply(y, &drift);
            check_finite(y, t, "remainder Y")?;
            remaining -= hs;
            if remaining < 1e-15 * self.h {
                break;
            }
        }
        Ok(())
    }

    /// One step with the exact OU transition; innovations from the
    /// `(seed, replica, step)` stream.
    pub fn step_exact(&self, s: &mut SplitState, seed: u64, replica: u64) -> Result<()> {
        let z_left = s.ou.z.clone();
        self.advance_y(&mut s.y, &z_left, s.t)?;
        let mut r = rng::stream(seed, replica, s.step, purpose::NOISE);
        self.ou.exact_step(&mut s.ou, &mut r);
        s.t += self.h;
        s.step += 1;
        Ok(())
    }

    /// One step with `Z` advanced by exponential Euler on `dw`.
    pub fn step_shared(&self, s: &mut SplitState, dw: &NoiseIncrement) -> Result<()> {
        let z_left = s.ou.z.clone();
        self.advance_y(&mut s.y, &z_left, s.t)?;
        self.ou.em_step(&mut s.ou, dw);
        s.t += self.h;
        s.step += 1;
        Ok(())
    }

    /// Deterministic step of `Y` alone with the given `Z̲` (no OU update).
    pub fn step_y_frozen(&self, y: &mut SpectralField, z: &SpectralField, t: f64) -> Result<()> {
        self.advance_y(y, z, t)
    }
}

/// Exponential Euler on the direct Galerkin SDE.
#[derive(Clone, Debug)]
pub struct GalerkinStepper {
    pub grid: Grid,
    pub params: PhysParams,
    pub h: f64,
    pub c: f64,
    pub guard_theta: f64,
    lin: Propagator,
    pi: Vec<f64>,
    gain: Vec<f64>,
}

/// `sqrt((1 − e^{−2rh}) / (2rh))` with `r = Re λ_m`.
fn ou_gain(r: f64, h: f64) -> f64 {
    let x = 2.0 * r * h;
    if x.abs() < 1e-12 {
        1.0
    } else {
        (-(-x).exp_m1() / x).sqrt()
    }
}

impl GalerkinStepper {
    pub fn new(grid: Grid, params: PhysParams, h: f64, c: f64, guard_theta: f64) -> Result<Self> {
        params.validate()?;
        if !(h > 0.0) {
            return Err(Error::config(format!("h must be positive, got {h}")));
        }
        if !grid.resolves_degree(3) {
            return Err(Error::config("collocation grid too coarse for the cubic term"));
        }
        let sym = LinearSymbol::galerkin(params.mu, params.lambda);
        let mut gain = vec![0.0; grid.len()];
        for (i, m) in grid.modes() {
            gain[i] = ou_gain(sym.eval(m).re, h);
        }
        Ok(Self {
            grid,
            params,
            h,
            c,
            guard_theta,
            lin: Propagator::new(grid, &sym, h),
            pi: cutoff_weights(grid),
            gain,
        })
    }

    /// `−ν Π_n H_{2,1}(u, c)` and `max|u|²`.
    pub fn drift(&self, u: &SpectralField) -> Result<(SpectralField, f64)> {
        let ug = u.to_grid();
        let umax = ug.data.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        let c = self.c;
        let cubic = from_grid(&ug.map(|v| h21(v, c)), self.grid)?;
        let mut out = SpectralField::zeros(self.grid);
        for (i, _) in self.grid.modes() {
            out.coeffs[i] = -self.params.nu * self.pi[i] * cubic.coeffs[i];
        }
        Ok((out, umax))
    }

    fn advance_deterministic(&self, u: &mut SpectralField, t: f64) -> Result<()> {
        let nu_abs = self.params.nu.norm();
        let mut remaining = self.h;
        let mut first = true;
        while remaining > 0.0 {
            let (drift, umax) = self.drift(u)?;
            let limit = if nu_abs > 0.0 && umax > 0.0 {
                self.guard_theta / (nu_abs * umax)
            } else {
                f64::INFINITY
            };
            if first && self.h <= limit {
                self.lin.apply(u, &drift);
                return check_finite(u, t, "solution u");
            }
            first = false;
            let hs = remaining.min(limit);
            Propagator::new(self.grid, &LinearSymbol::galerkin(self.params.mu, self.params.lambda), hs)
                .apply(u, &drift);
            check_finite(u, t, "solution u")?;
            remaining -= hs;
            if remaining < 1e-15 * self.h {
                break;
            }
        }
        Ok(())
    }

    /// `u ← e^{−Lh}u + hφ₁(−Lh)(−νΠ_n H_{2,1}(u,c)) + e^{−Lh} a ΔW`.
    pub fn step(&self, u: &mut SpectralField, dw: &NoiseIncrement, t: f64) -> Result<()> {
        u.check_same_grid(&dw.dw)?;
        self.advance_deterministic(u, t)?;
        for (i, _) in self.grid.modes() {
            u.coeffs[i] += self.lin.decay[i] * self.pi[i] * dw.dw.coeffs[i];
        }
        check_finite(u, t, "solution u")
    }

    /// As [`step`](Self::step), with the noise term replaced by the exact
    /// stochastic-convolution increment `a_m G_m`, `G_m = ΔW_m·sqrt((1−e^{−2Re λ_m h})/(2Re λ_m h))`.
    pub fn step_exact_noise(&self, u: &mut SpectralField, dw: &NoiseIncrement, t: f64) -> Result<()> {
        u.check_same_grid(&dw.dw)?;
        self.advance_deterministic(u, t)?;
        for (i, _) in self.grid.modes() {
            u.coeffs[i] += self.pi[i] * self.gain[i] * dw.dw.coeffs[i];
        }
        check_finite(u, t, "solution u")
    }
}

/// One split step (exact OU), as a free function.
pub fn step_shifted(state: &SplitState, config: &SolverConfig, replica: u64) -> Result<SplitState> {
    let stepper = SplitStepper::new(state.y.grid, config.params()?, config.h, state.c.value, config.guard_theta)?;
    let mut next = state.clone();
    match config.noise {
        NoiseMode::Exact => stepper.step_exact(&mut next, config.seed, replica)?,
        NoiseMode::Shared => {
            let dw = NoiseIncrement::for_step(state.y.grid, config.h, config.seed, replica, state.step);
            stepper.step_shared(&mut next, &dw)?
        }
    }
    Ok(next)
}

/// One direct step, as a free function.
pub fn step_galerkin_sde(
    u: &SpectralField,
    c: &RenormConstant,
    h: f64,
    dw: &NoiseIncrement,
    params: &PhysParams,
) -> Result<SpectralField> {
    let stepper = GalerkinStepper::new(u.grid, *params, h, c.value, 0.5)?;
    let mut out = u.clone();
    stepper.step(&mut out, dw, 0.0)?;
    Ok(out)
}

/// Brownian path sampled on a base step; increments over `r` base steps are
/// sums, so runs with step `r·h_base` see the same path.
#[derive(Clone, Copy, Debug)]
pub struct BrownianPath {
    pub grid: Grid,
    pub h_base: f64,
    pub seed: u64,
    pub replica: u64,
}

impl BrownianPath {
    /// Increment over coarse step `k` of length `ratio · h_base`.
    pub fn increment(&self, k: u64, ratio: u64) -> NoiseIncrement {
        let mut out = NoiseIncrement::zero(self.grid, 0.0);
        for j in 0..ratio {
            let inc = NoiseIncrement::for_step(self.grid, self.h_base, self.seed, self.replica, k * ratio + j);
            for (a, b) in out.dw.coeffs.iter_mut().zip(&inc.dw.coeffs) {
                *a += b;
            }
            out.h += inc.h;
        }
        out
    }
}

/// `sup_k ‖u_direct(t_k) − (Z + Y)_split(t_k)‖_{L²}` on one shared noise
/// path, both schemes started from `u₀` with `Z₀ = 0`. The path is sampled on
/// `h_base`; the run uses `h = ratio · h_base`.
pub fn scheme_gap(
    u0: &SpectralField,
    params: &PhysParams,
    path: &BrownianPath,
    ratio: u64,
    t_end: f64,
) -> Result<f64> {
    let grid = u0.grid;
    let h = path.h_base * ratio as f64;
    let c = renorm_constant(grid.n, params.mu)?.value;
    let split = SplitStepper::new(grid, *params, h, c, 0.5)?;
    let direct = GalerkinStepper::new(grid, *params, h, c, 0.5)?;
    let mut s = SplitState {
        t: 0.0,
        step: 0,
        y: u0.clone(),
        ou: OUState::zero(grid),
        c: renorm_constant(grid.n, params.mu)?,
    };
    let mut u = u0.clone();
    let steps = (t_end / h).round() as u64;
    let mut gap: f64 = 0.0;
    for k in 0..steps {
        let dw = path.increment(k, ratio);
        direct.step(&mut u, &dw, k as f64 * h)?;
        split.step_shared(&mut s, &dw)?;
        gap = gap.max(u.sub(&s.solution())?.l2_norm());
    }
    Ok(gap)
}

/// State of either scheme.
#[derive(Clone, Debug)]
pub enum SolverState {
    Split(SplitState),
    Direct { t: f64, step: u64, u: SpectralField, c: RenormConstant },
}

impl SolverState {
    pub fn t(&self) -> f64 {
        match self {
            SolverState::Split(s) => s.t,
            SolverState::Direct { t, .. } => *t,
        }
    }

    pub fn step(&self) -> u64 {
        match self {
            SolverState::Split(s) => s.step,
            SolverState::Direct { step, .. } => *step,
        }
    }

    pub fn solution(&self) -> SpectralField {
        match self {
            SolverState::Split(s) => s.solution(),
            SolverState::Direct { u, .. } => u.clone(),
        }
    }

    /// The remainder `Y` (for the direct scheme, `u` itself).
    pub fn remainder(&self) -> &SpectralField {
        match self {
            SolverState::Split(s) => &s.y,
            SolverState::Direct { u, .. } => u,
        }
    }
}

/// Initial state from a config: `Y₀ = R·e_0` and `Z₀` per `ou_init`, so
/// `u₀ = R·e_0 + Z₀`.
pub fn initial_state(cfg: &SolverConfig, replica: u64) -> Result<SolverState> {
    let grid = cfg.grid()?;
    let mut c = renorm_constant(grid.n, cfg.mu)?;
    if let Some(v) = cfg.c_override {
        c = c.with_value(v);
    }
    let u0 = SpectralField::constant(grid, cfg.u0_amplitude.0);
    let ou = match cfg.ou_init {
        OuInit::Zero => OUState::zero(grid),
        OuInit::Stationary => OUState::stationary(
            grid,
            cfg.mu,
            &mut rng::stream(cfg.seed, replica, 0, purpose::STATIONARY_INIT),
        ),
    };
    Ok(match cfg.scheme {
        Scheme::SplitExpEuler => SolverState::Split(SplitState {
            t: 0.0,
            step: 0,
            y: u0,
            ou,
            c,
        }),
        Scheme::GalerkinSde => SolverState::Direct {
            t: 0.0,
            step: 0,
            u: u0.add(&ou.z)?,
            c,
        },
    })
}

/// One diagnostic sample.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub replica: u64,
    pub step: u64,
    pub t: f64,
    pub metrics: BTreeMap<String, f64>,
}

/// Why a replica stopped early.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlowUpRecord {
    pub replica: u64,
    pub t: f64,
    pub detail: String,
    pub last_metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
pub struct ReplicaOutcome {
    pub samples: Vec<Sample>,
    pub blowup: Option<BlowUpRecord>,
    pub final_state: SolverState,
}

/// `∫ f g` on the collocation grid.
fn grid_pairing(f: &GridValues, g: &GridValues) -> Complex64 {
    f.data.iter().zip(&g.data).map(|(a, b)| a * b).sum::<Complex64>() / f.data.len() as f64
}

/// `Ȳ|Y|^{p−2}` on the grid.
fn energy_weight(y: &GridValues, p: u32) -> GridValues {
    y.map(|v| v.conj() * v.norm_sqr().powi((p as i32 - 2) / 2))
}

/// `⟨1, |∇Y|²|Y|^{p−2}⟩`.
pub fn gradient_term(y: &SpectralField, p: u32) -> f64 {
    let yg = y.to_grid();
    let d0 = y.derivative(0).to_grid();
    let d1 = y.derivative(1).to_grid();
    let n = yg.data.len() as f64;
    yg.data
        .iter()
        .zip(d0.data.iter().zip(&d1.data))
        .map(|(v, (a, b))| (a.norm_sqr() + b.norm_sqr()) * v.norm_sqr().powi((p as i32 - 2) / 2))
        .sum::<f64>()
        / n
}

/// Metrics recorded at a sample time.
pub fn sample_metrics(state: &SolverState, cfg: &SolverConfig) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    let y = state.remainder();
    for &p in &cfg.diagnostics.lp {
        let pf = p as f64;
        m.insert(format!("lp{p}_pow"), lp_norm(y, Exponent::Finite(pf)).powf(pf));
        m.insert(
            format!("lp{}_pow", p + 2),
            lp_norm(y, Exponent::Finite(pf + 2.0)).powf(pf + 2.0),
        );
        m.insert(format!("grad{p}"), gradient_term(y, p));
    }
    let u = state.solution();
    let part = DyadicPartition::for_band(u.grid.n);
    for b in &cfg.diagnostics.besov {
        let key = format!("besov_u_a{}_p{}_q{}", b.alpha, b.p.value(), b.q.value());
        m.insert(key, besov_norm(&u, b, &part)?);
    }
    m.insert("u_l2".into(), u.l2_norm());
    m.insert("mean_re".into(), u.get((0, 0)).re);
    m.insert("mean_im".into(), u.get((0, 0)).im);
    Ok(m)
}

/// One replica of the configured scheme, advanced step by step.
#[derive(Clone, Debug)]
pub struct Solver {
    pub state: SolverState,
    replica: u64,
    seed: u64,
    noise: NoiseMode,
    h: f64,
    split: SplitStepper,
    direct: GalerkinStepper,
}

impl Solver {
    /// Starts from `start`, or from the configured initial state.
    pub fn new(cfg: &SolverConfig, replica: u64, start: Option<SolverState>) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let params = cfg.params()?;
        let state = match start {
            Some(s) => s,
            None => initial_state(cfg, replica)?,
        };
        let c = match &state {
            SolverState::Split(s) => s.c.value,
            SolverState::Direct { c, .. } => c.value,
        };
        Ok(Self {
            replica,
            seed: cfg.seed,
            noise: cfg.noise,
            h: cfg.h,
            split: SplitStepper::new(grid, params, cfg.h, c, cfg.guard_theta)?,
            direct: GalerkinStepper::new(grid, params, cfg.h, c, cfg.guard_theta)?,
            state,
        })
    }

    pub fn step(&mut self) -> Result<()> {
        let k = self.state.step();
        match &mut self.state {
            SolverState::Split(s) => match self.noise {
                NoiseMode::Exact => self.split.step_exact(s, self.seed, self.replica),
                NoiseMode::Shared => {
                    let dw = NoiseIncrement::for_step(s.y.grid, self.h, self.seed, self.replica, k);
                    self.split.step_shared(s, &dw)
                }
            },
            SolverState::Direct { t, step, u, .. } => {
                let dw = NoiseIncrement::for_step(u.grid, self.h, self.seed, self.replica, k);
                let r = self.direct.step(u, &dw, *t);
                *t += self.h;
                *step += 1;
                r
            }
        }
    }
}

/// Runs one replica from its initial state (or from `start`), sampling every
/// `snapshot_every` steps and at the end. `observer` sees each sample with
/// the state it was computed from.
pub fn run_replica_from(
    cfg: &SolverConfig,
    replica: u64,
    start: Option<SolverState>,
    observer: &mut dyn FnMut(&SolverState, &Sample) -> Result<()>,
) -> Result<ReplicaOutcome> {
    let mut solver = Solver::new(cfg, replica, start)?;
    let total = cfg.steps() as u64;
    let mut samples = Vec::new();
    let mut last = BTreeMap::new();
    let mut emit = |state: &SolverState, samples: &mut Vec<Sample>, last: &mut BTreeMap<String, f64>| -> Result<()> {
        let metrics = sample_metrics(state, cfg)?;
        let s = Sample {
            replica,
            step: state.step(),
            t: state.t(),
            metrics,
        };
        observer(state, &s)?;
        *last = s.metrics.clone();
        samples.push(s);
        Ok(())
    };
    if solver.state.step() == 0 {
        emit(&solver.state, &mut samples, &mut last)?;
    }
    while solver.state.step() < total {
        match solver.step() {
            Ok(()) => {}
            Err(Error::BlowUp { t, detail }) => {
                return Ok(ReplicaOutcome {
                    samples,
                    blowup: Some(BlowUpRecord {
                        replica,
                        t,
                        detail,
                        last_metrics: last,
                    }),
                    final_state: solver.state,
                })
            }
            Err(e) => return Err(e),
        }
        let k = solver.state.step();
        if k % cfg.snapshot_every as u64 == 0 || k == total {
            emit(&solver.state, &mut samples, &mut last)?;
        }
    }
    Ok(ReplicaOutcome {
        samples,
        blowup: None,
        final_state: solver.state,
    })
}

pub fn run_replica(cfg: &SolverConfig, replica: u64) -> Result<ReplicaOutcome> {
    run_replica_from(cfg, replica, None, &mut |_, _| Ok(()))
}

/// Stored split trajectory for the `L^p` identity.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<SpectralField>,
    pub z: Vec<SpectralField>,
    pub c: f64,
}

/// `Re[(i+μ)⟨ΔY, G⟩ − ‖Y‖_p^p + ⟨Ψ, G⟩]` with `G = Ȳ|Y|^{p−2}` and `Ψ` the
/// scheme's drift (`Π_n` on the cubic part).
pub fn energy_rate(y: &SpectralField, z: &SpectralField, c: f64, p: u32, params: &PhysParams) -> Result<f64> {
    y.check_same_grid(z)?;
    let grid = y.grid;
    if grid.points <= p as usize * grid.n {
        return Err(Error::config(format!(
            "collocation size {} cannot integrate the L^{p} identity exactly at n = {}",
            grid.points, grid.n
        )));
    }
    let yg = y.to_grid();
    let g = energy_weight(&yg, p);
    let w = WickGrid::from_values(z.to_grid(), c);
    let cubic = from_grid(&cubic_part_grid(&yg, &w), grid)?;
    let pi = cutoff_weights(grid);
    let mut psi = z.add(y)?.scale(ONE + params.lambda);
    for (i, _) in grid.modes() {
        psi.coeffs[i] -= params.nu * pi[i] * cubic.coeffs[i];
    }
    let lap = y.laplacian().to_grid();
    let grad = Complex64::new(params.mu, 1.0) * grid_pairing(&lap, &g);
    let lp = yg.data.iter().map(|v| v.norm().powi(p as i32)).sum::<f64>() / yg.data.len() as f64;
    let drive = grid_pairing(&psi.to_grid(), &g);
    Ok(grad.re - lp + drive.re)
}

/// `residual(t_k) = (1/p)(‖Y_{t_k}‖_p^p − ‖Y_{t_0}‖_p^p) − ∫_{t_0}^{t_k} rate`,
/// the integral by the trapezoid rule over the stored times.
pub fn lp_energy_residual(traj: &Trajectory, p: u32, params: &PhysParams) -> Result<Vec<f64>> {
    if traj.t.is_empty() || traj.y.len() != traj.t.len() || traj.z.len() != traj.t.len() {
        return Err(Error::input("trajectory is empty or has mismatched lengths"));
    }
    if p < 2 || p % 2 != 0 {
        return Err(Error::input(format!("the L^p identity needs even p >= 2, got {p}")));
    }
    let pf = p as f64;
    let norm = |y: &SpectralField| lp_norm(y, Exponent::Finite(pf)).powf(pf);
    let n0 = norm(&traj.y[0]);
    let rates: Vec<f64> = traj
        .y
        .iter()
        .zip(&traj.z)
        .map(|(y, z)| energy_rate(y, z, traj.c, p, params))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(traj.t.len());
    let mut integral = 0.0;
    out.push(0.0);
    for k in 1..traj.t.len() {
        integral += 0.5 * (traj.t[k] - traj.t[k - 1]) * (rates[k] + rates[k - 1]);
        out.push((norm(&traj.y[k]) - n0) / pf - integral);
    }
    Ok(out)
}

/// `δ = μp/2 − (p−2)/2·sqrt(μ²+1)`.
pub fn dissipativity_delta(mu: f64, p: f64) -> f64 {
    mu * p / 2.0 - (p - 2.0) / 2.0 * (mu * mu + 1.0).sqrt()
}

/// `p(μ) = 2(1 + μ² + μ sqrt(1+μ²))`.
pub fn critical_p(mu: f64) -> f64 {
    2.0 * (1.0 + mu * mu + mu * (1.0 + mu * mu).sqrt())
}

/// Largest pointwise value of
/// `Re[−(i+μ)∇Y·∇(Ȳ|Y|^{p−2})] + δ|∇Y|²|Y|^{p−2}`; nonpositive when the
/// dissipativity inequality holds at every grid point. Returned together with
/// the scale `max |∇Y|²|Y|^{p−2}` for relative comparisons.
pub fn dissipativity_margin(y: &SpectralField, mu: f64, p: u32) -> (f64, f64) {
    let pf = p as f64;
    let delta = dissipativity_delta(mu, pf);
    let yg = y.to_grid();
    let d = [y.derivative(0).to_grid(), y.derivative(1).to_grid()];
    let im = Complex64::new(mu, 1.0);
    let mut worst = f64::NEG_INFINITY;
    let mut scale: f64 = 0.0;
    for (idx, &v) in yg.data.iter().enumerate() {
        let r2 = v.norm_sqr();
        let w = r2.powf((pf - 2.0) / 2.0);
        let mut lhs = ZERO;
        let mut g2 = 0.0;
        for dj in &d {
            let dy = dj.data[idx];
            // ∂(Ȳ|Y|^{p−2}) = ∂Ȳ·|Y|^{p−2} + Ȳ·(p−2)/2·|Y|^{p−4}·∂|Y|².
            let dr2 = 2.0 * (v.conj() * dy).re;
            let dg = dy.conj() * w
                + if p > 2 {
                    v.conj() * ((pf - 2.0) / 2.0 * r2.powf((pf - 4.0) / 2.0) * dr2)
                } else {
                    ZERO
                };
            lhs += dy * dg;
            g2 += dy.norm_sqr();
        }
        let term = g2 * w;
        scale = scale.max(term);
        worst = worst.max((-im * lhs).re + delta * term);
    }
    (worst, scale)
}

/// One row of the coming-down table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComingDownRow {
    pub amplitude: f64,
    pub median_norm: f64,
    pub p_mean_norm: f64,
    pub blowups: usize,
    pub replicas: usize,
    /// Median over replicas of `sup_t t^{1/2} ‖Y_t‖_{L^4}`.
    pub median_sup_lp: f64,
}

/// Runs `replicas` independent copies from `u₀ = R·e_0` for each `R` up to
/// `t0`, reporting `‖u(t0)‖_{B^{−α}_{∞,∞}}` statistics.
pub fn coming_down_experiment(
    amplitudes: &[f64],
    t0: f64,
    replicas: usize,
    alpha: f64,
    p_moment: f64,
    base: &SolverConfig,
) -> Result<Vec<ComingDownRow>> {
    use rayon::prelude::*;
    if t0 < 10.0 * base.h {
        return Err(Error::config(format!("t0 = {t0} must be at least 10h = {}", 10.0 * base.h)));
    }
    let mut rows = Vec::new();
    for (ri, &r) in amplitudes.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.u0_amplitude = crate::config::CNum(Complex64::new(r, 0.0));
        cfg.t_end = t0;
        cfg.diagnostics.besov = vec![crate::dyadic::BesovParams::holder(-alpha)];
        cfg.diagnostics.lp = vec![4];
        cfg.validate()?;
        let results: Vec<Result<(Option<f64>, f64)>> = (0..replicas)
            .into_par_iter()
            .map(|i| {
                let replica = (ri * replicas + i) as u64;
                let out = run_replica(&cfg, replica)?;
                let sup = out
                    .samples
                    .iter()
                    .filter(|s| s.t > 0.0)
                    .map(|s| s.t.sqrt() * s.metrics["lp4_pow"].powf(0.25))
                    .fold(0.0, f64::max);
                if out.blowup.is_some() {
                    return Ok((None, sup));
                }
                let u = out.final_state.solution();
                let part = DyadicPartition::for_band(u.grid.n);
                let norm = besov_norm(&u, &crate::dyadic::BesovParams::holder(-alpha), &part)?;
                Ok((Some(norm), sup))
            })
            .collect();
        let mut norms = Vec::new();
        let mut sups = Vec::new();
        let mut blowups = 0;
        for r in results {
            let (n, s) = r?;
            match n {
                Some(v) => norms.push(v),
                None => blowups += 1,
            }
            sups.push(s);
        }
        let p_mean = (norms.iter().map(|v| v.powf(p_moment)).sum::<f64>() / norms.len().max(1) as f64)
            .powf(1.0 / p_moment);
        rows.push(ComingDownRow {
            amplitude: r,
            median_norm: crate::stats::median(&norms),
            p_mean_norm: p_mean,
            blowups,
            replicas,
            median_sup_lp: crate::stats::median(&sups),
        });
    }
    Ok(rows)
}
