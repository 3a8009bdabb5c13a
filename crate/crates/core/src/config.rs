//! Run configuration, read from TOML.
//!
//! ```toml
//! mu = 1.0
//! nu = [1.0, 0.0]      # or a bare real number
//! lambda = 0.0
//! n = 32
//! N = 132              # optional, defaults to 4n + 4
//! h = 1e-3
//! T = 1.0
//! scheme = "split_exp_euler"   # or "galerkin_sde"
//! ou_init = "zero"             # or "stationary"
//! ```

use crate::dyadic::BesovParams;
use crate::error::{Error, Result};
use crate::spectral::{Grid, PhysParams};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Complex number accepted as `x`, `[re, im]` or `{ re = .., im = .. }`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CNum(pub Complex64);

impl Serialize for CNum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

impl<'de> Deserialize<'de> for CNum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Real(f64),
            Pair([f64; 2]),
            Parts { re: f64, im: f64 },
        }
        Ok(CNum(match Raw::deserialize(d)? {
            Raw::Real(x) => Complex64::new(x, 0.0),
            Raw::Pair([re, im]) => Complex64::new(re, im),
            Raw::Parts { re, im } => Complex64::new(re, im),
        }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `u = Z + Y` with exponential Euler for `Y`.
    SplitExpEuler,
    /// Exponential Euler directly on the Galerkin SDE.
    GalerkinSde,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuInit {
    Zero,
    Stationary,
}

/// How the split scheme advances `Z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Exact OU transition.
    Exact,
    /// Exponential Euler on explicit increments shared with the direct scheme.
    Shared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSpec {
    /// Besov norms of `u` recorded at each sample time.
    pub besov: Vec<BesovParams>,
    /// Even exponents `p` for the `L^p` monitors of `Y`.
    pub lp: Vec<u32>,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self {
            besov: vec![BesovParams::holder(-0.5)],
            lp: vec![2, 4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub mu: f64,
    pub nu: CNum,
    pub lambda: CNum,
    pub n: usize,
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    pub h: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub scheme: Scheme,
    pub ou_init: OuInit,
    pub noise: NoiseMode,
    pub seed: u64,
    pub replicas: usize,
    /// Steps between diagnostic samples (and snapshots, when enabled).
    pub snapshot_every: usize,
    /// Write binary snapshots at sample times.
    pub write_snapshots: bool,
    /// Initial datum `u₀ = u0_amplitude · e_0`.
    pub u0_amplitude: CNum,
    /// Replace `c_n` by this value (`0` switches renormalization off).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_override: Option<f64>,
    /// Threshold `θ` of the step guard: the deterministic part is sub-stepped
    /// whenever `h·|ν|·max|u|² > θ`.
    pub guard_theta: f64,
    pub diagnostics: DiagnosticsSpec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu: 1.0,
            nu: CNum(Complex64::new(1.0, 0.0)),
            lambda: CNum(Complex64::new(0.0, 0.0)),
            n: 32,
            points: None,
            h: 1e-3,
            t_end: 1.0,
            scheme: Scheme::SplitExpEuler,
            ou_init: OuInit::Zero,
            noise: NoiseMode::Exact,
            seed: 0,
            replicas: 1,
            snapshot_every: 100,
            write_snapshots: false,
            u0_amplitude: CNum(Complex64::new(0.0, 0.0)),
            c_override: None,
            guard_theta: 0.5,
            diagnostics: DiagnosticsSpec::default(),
        }
    }
}

impl SolverConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("solver config always serializes")
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.n, self.points.unwrap_or(4 * self.n + 4))
    }

    pub fn params(&self) -> Result<PhysParams> {
        PhysParams::new(self.mu, self.nu.0, self.lambda.0)
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.h).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.grid()?;
        if !(self.h > 0.0) {
            return Err(Error::config(format!("h must be positive, got {}", self.h)));
        }
        if !(self.t_end >= self.h) {
            return Err(Error::config(format!("T = {} must be at least h = {}", self.t_end, self.h)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::config("snapshot_every must be at least 1"));
        }
        if !(self.guard_theta > 0.0) {
            return Err(Error::config("guard_theta must be positive"));
        }
        for &p in &self.diagnostics.lp {
            if p < 2 || p % 2 != 0 {
                return Err(Error::config(format!("L^p monitors need even p >= 2, got {p}")));
            }
        }
        for b in &self.diagnostics.besov {
            b.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documentation() {
        let c = SolverConfig::from_toml_str("").unwrap();
        assert_eq!(c.n, 32);
        assert_eq!(c.grid().unwrap().points, 132);
        assert_eq!(c.h, 1e-3);
        assert_eq!(c.t_end, 1.0);
        assert_eq!(c.ou_init, OuInit::Zero);
        assert_eq!(c.nu.0, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn complex_forms() {
        let c = SolverConfig::from_toml_str("nu = [1.0, 0.5]\nlambda = { re = -1.0, im = 2.0 }").unwrap();
        assert_eq!(c.nu.0, Complex64::new(1.0, 0.5));
        assert_eq!(c.lambda.0, Complex64::new(-1.0, 2.0));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(SolverConfig::from_toml_str("mu = -1.0").is_err());
        assert!(SolverConfig::from_toml_str("n = 8\nN = 20").is_err());
        assert!(SolverConfig::from_toml_str("h = 0.1\nT = 0.01").is_err());
        assert!(SolverConfig::from_toml_str("bogus = 1").is_err());
        assert!(SolverConfig::from_toml_str("[diagnostics]\nlp = [3]").is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = SolverConfig::default();
        c.scheme = Scheme::GalerkinSde;
        c.points = Some(144);
        let back = SolverConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(c, back);
    }
}
