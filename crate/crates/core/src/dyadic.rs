//! Littlewood-Paley blocks, Besov norms and Bony's decomposition.
//!
//! Blocks are Fourier multipliers: `χ_{−1} = ψ` and `χ_k = ψ(·/2^{k+1}) −
//! ψ(·/2^k)` for `k ≥ 0`, where the plateau `ψ` is 1 on `[0,1]` and vanishes
//! from `4/3` on. The sum over `k ≤ K` telescopes to `ψ(·/2^{K+1})`.

use crate::error::{Error, Result};
use crate::profile::plateau;
use crate::spectral::{from_grid, norm_sq, to_grid_with, Grid, GridValues, Mode, SpectralField};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DyadicPartition {
    pub kmax: usize,
}

impl DyadicPartition {
    pub fn new(kmax: usize) -> Self {
        Self { kmax }
    }

    /// Smallest partition whose blocks cover `|m| ≤ n`.
    pub fn for_band(n: usize) -> Self {
        let mut k = 0usize;
        while (1usize << (k + 1)) < n {
            k += 1;
        }
        Self { kmax: k }
    }

    /// Highest `|m|` covered exactly by the partition of unity.
    pub fn coverage(&self) -> f64 {
        (1u64 << (self.kmax + 1)) as f64
    }

    pub fn chi_minus1(r: f64) -> f64 {
        plateau(r)
    }

    pub fn chi(r: f64) -> f64 {
        plateau(r / 2.0) - plateau(r)
    }

    /// `χ_k(|m|)` for `k ≥ −1`.
    pub fn weight(&self, k: i32, m: Mode) -> f64 {
        let r = (norm_sq(m) as f64).sqrt();
        if k < 0 {
            Self::chi_minus1(r)
        } else {
            Self::chi(r / (1u64 << k) as f64)
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = i32> {
        -1..=self.kmax as i32
    }

    /// Largest `|m|` that block `k` can carry.
    fn block_radius(k: i32) -> f64 {
        if k < 0 {
            4.0 / 3.0
        } else {
            8.0 / 3.0 * (1u64 << k) as f64
        }
    }
}

/// Integrability or summability exponent in `[1, ∞]`. Serialized as a
/// number, with `"inf"` for the endpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinity,
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(p) => s.serialize_f64(*p),
            Exponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(Exponent::from_f64(p)),
            Raw::Text(t) if t == "inf" || t == "infinity" => Ok(Exponent::Infinity),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

impl Exponent {
    pub fn value(&self) -> f64 {
        match self {
            Exponent::Finite(p) => *p,
            Exponent::Infinity => f64::INFINITY,
        }
    }

    pub fn from_f64(p: f64) -> Self {
        if p.is_infinite() {
            Exponent::Infinity
        } else {
            Exponent::Finite(p)
        }
    }

    /// Hölder conjugate.
    pub fn dual(&self) -> Self {
        match self {
            Exponent::Infinity => Exponent::Finite(1.0),
            Exponent::Finite(p) if *p == 1.0 => Exponent::Infinity,
            Exponent::Finite(p) => Exponent::Finite(p / (p - 1.0)),
        }
    }

    fn even_integer(&self) -> Option<usize> {
        match self {
            Exponent::Finite(p) if p.fract() == 0.0 && (*p as usize) % 2 == 0 => Some(*p as usize),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovParams {
    pub alpha: f64,
    pub p: Exponent,
    pub q: Exponent,
}

impl BesovParams {
    pub fn new(alpha: f64, p: f64, q: f64) -> Result<Self> {
        let b = Self {
            alpha,
            p: Exponent::from_f64(p),
            q: Exponent::from_f64(q),
        };
        b.validate()?;
        Ok(b)
    }

    /// `B^α_{∞,∞}`, i.e. the Hölder-Besov space `C^α`.
    pub fn holder(alpha: f64) -> Self {
        Self {
            alpha,
            p: Exponent::Infinity,
            q: Exponent::Infinity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.value() >= 1.0 && self.q.value() >= 1.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!(
                "Besov exponents need p, q >= 1, got p = {}, q = {}",
                self.p.value(),
                self.q.value()
            )));
        }
        Ok(())
    }
}

/// `δ_k f`.
pub fn lp_block(f: &SpectralField, k: i32, part: &DyadicPartition) -> Result<SpectralField> {
    if k < -1 || k > part.kmax as i32 {
        return Err(Error::input(format!(
            "block index {k} outside [-1, {}]",
            part.kmax
        )));
    }
    check_coverage(f, part)?;
    Ok(f.map(|m, c| c * part.weight(k, m)))
}

fn check_coverage(f: &SpectralField, part: &DyadicPartition) -> Result<()> {
    if f.band() > part.coverage() {
        return Err(Error::config(format!(
            "field band {} exceeds partition coverage {}",
            f.band(),
            part.coverage()
        )));
    }
    Ok(())
}

fn smooth_even_above(lower: usize) -> usize {
    let mut p = lower.max(2);
    loop {
        if p % 2 == 0 {
            let mut q = p;
            for f in [2, 3, 5] {
                while q % f == 0 {
                    q /= f;
                }
            }
            if q == 1 {
                return p;
            }
        }
        p += 1;
    }
}

/// Collocation size used for `‖g‖_{L^p}` of a band-`b` field: exact for even
/// `p`, oversampled by four for `p = ∞`, `4b + 2` otherwise.
pub fn lp_eval_points(band: usize, p: Exponent) -> usize {
    let lower = match p.even_integer() {
        Some(pe) => pe * band + 1,
        None if p == Exponent::Infinity => 8 * band + 2,
        None => 4 * band + 2,
    };
    smooth_even_above(lower.max(2 * band + 2))
}

/// `‖f‖_{L^p}` of a band-limited field on its own exact evaluation grid.
pub fn lp_norm(f: &SpectralField, p: Exponent) -> f64 {
    let band = f.band().ceil() as usize;
    let g = Grid {
        n: band.max(1),
        points: lp_eval_points(band.max(1), p),
    };
    let small = f.resize(g);
    to_grid_with(&small, g.points).lp_norm(p.value())
}

fn lq_combine(mut terms: Vec<f64>, q: Exponent) -> f64 {
    match q {
        Exponent::Infinity => terms.into_iter().fold(0.0, f64::max),
        Exponent::Finite(q) => {
            terms.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            if terms.is_empty() || terms[0] == 0.0 {
                return 0.0;
            }
            // Factor out the largest term to keep t^q in range.
            let top = terms[0];
            let s: f64 = terms.iter().map(|t| (t / top).powf(q)).sum();
            top * s.powf(1.0 / q)
        }
    }
}

fn block_weight(alpha: f64, k: i32) -> f64 {
    2f64.powf(alpha * k.max(0) as f64)
}

/// `‖(2^{αk} ‖δ_k f‖_{L^p})_k‖_{ℓ^q}`, each block on an evaluation grid that
/// resolves it.
pub fn besov_norm(f: &SpectralField, params: &BesovParams, part: &DyadicPartition) -> Result<f64> {
    params.validate()?;
    check_coverage(f, part)?;
    let mut terms = Vec::with_capacity(part.kmax + 2);
    for k in part.blocks() {
        let block = f.map(|m, c| c * part.weight(k, m));
        let band = (DyadicPartition::block_radius(k).ceil() as usize).min(f.grid.n);
        let g = Grid {
            n: band.max(1),
            points: lp_eval_points(band.max(1), params.p),
        };
        let values = to_grid_with(&block.resize(g), g.points);
        terms.push(block_weight(params.alpha, k) * values.lp_norm(params.p.value()));
    }
    Ok(lq_combine(terms, params.q))
}

/// Besov norm with every block evaluated on one fixed `P × P` grid. For even
/// `p` the grid must integrate `|δ_k f|^p` exactly.
pub fn besov_norm_on(f: &SpectralField, params: &BesovParams, part: &DyadicPartition, points: usize) -> Result<f64> {
    params.validate()?;
    check_coverage(f, part)?;
    let band = f.band().ceil() as usize;
    let needed = match params.p.even_integer() {
        Some(pe) => pe * band + 1,
        None => 2 * band + 1,
    };
    if points < needed {
        return Err(Error::config(format!(
            "collocation size {points} under-resolves L^{} of a band-{band} field (needs {needed})",
            params.p.value()
        )));
    }
    let mut terms = Vec::with_capacity(part.kmax + 2);
    for k in part.blocks() {
        let block = f.map(|m, c| c * part.weight(k, m));
        let values = to_grid_with(&block, points);
        terms.push(block_weight(params.alpha, k) * values.lp_norm(params.p.value()));
    }
    Ok(lq_combine(terms, params.q))
}

/// Bony decomposition `fg = f ≺ g + f ∘ g + f ≻ g`, each part truncated to
/// the common band limit.
pub fn bony_decompose(
    f: &SpectralField,
    g: &SpectralField,
    part: &DyadicPartition,
) -> Result<(SpectralField, SpectralField, SpectralField)> {
    f.check_same_grid(g)?;
    if !f.grid.resolves_degree(2) {
        return Err(Error::GridMismatch(
            "collocation grid too coarse for dealiased products".into(),
        ));
    }
    check_coverage(f, part)?;
    check_coverage(g, part)?;
    let grid = f.grid;
    let blocks = |h: &SpectralField| -> Vec<GridValues> {
        part.blocks()
            .map(|k| h.map(|m, c| c * part.weight(k, m)).to_grid())
            .collect()
    };
    let fb = blocks(f);
    let gb = blocks(g);
    let nb = fb.len();
    let len = grid.points * grid.points;
    let zero = Complex64::new(0.0, 0.0);
    let mut para_fg = vec![zero; len];
    let mut para_gf = vec![zero; len];
    let mut res = vec![zero; len];
    // Block position b corresponds to k = b − 1.
    for bj in 0..nb {
        for bk in 0..nb {
            let (j, k) = (bj as i32 - 1, bk as i32 - 1);
            let target = if j < k - 1 {
                &mut para_fg
            } else if k < j - 1 {
                &mut para_gf
            } else {
                &mut res
            };
            for ((t, a), b) in target.iter_mut().zip(&fb[bj].data).zip(&gb[bk].data) {
                *t += a * b;
            }
        }
    }
    let back = |data: Vec<Complex64>| {
        from_grid(
            &GridValues {
                points: grid.points,
                data,
            },
            grid,
        )
    };
    Ok((back(para_fg)?, back(res)?, back(para_gf)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::spectral::dealiased_product;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn partition_of_unity_and_supports() {
        let part = DyadicPartition::new(5);
        for a in -64i32..=64 {
            for b in -64i32..=64 {
                if a * a + b * b > 64 * 64 {
                    continue;
                }
                let s: f64 = part.blocks().map(|k| part.weight(k, (a, b))).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        for i in 0..=300 {
            let r = i as f64 / 100.0;
            if r >= 4.0 / 3.0 {
                assert_eq!(DyadicPartition::chi_minus1(r), 0.0);
            }
            if r <= 0.75 || r >= 8.0 / 3.0 {
                assert_eq!(DyadicPartition::chi(r), 0.0);
            }
        }
    }

    #[test]
    fn block_membership_examples() {
        let part = DyadicPartition::new(0);
        assert_eq!(part.weight(-1, (0, 0)), 1.0);
        assert_eq!(part.weight(0, (0, 0)), 0.0);
        let part = DyadicPartition::new(3);
        let active: Vec<i32> = part.blocks().filter(|&k| part.weight(k, (2, 0)) != 0.0).collect();
        assert!(active.iter().all(|k| [0, 1].contains(k)));
        assert!(!active.is_empty());
        assert_eq!(DyadicPartition::for_band(32).kmax, 4);
        assert_eq!(DyadicPartition::for_band(1).kmax, 0);
    }

    #[test]
    fn constant_field_has_unit_norm() {
        let g = Grid::smooth(8);
        let one = SpectralField::constant(g, c(1.0));
        let part = DyadicPartition::for_band(8);
        for (a, p, q) in [(0.5, 2.0, 2.0), (-1.0, f64::INFINITY, 1.0), (2.0, 4.0, f64::INFINITY)] {
            let v = besov_norm(&one, &BesovParams::new(a, p, q).unwrap(), &part).unwrap();
            assert!((v - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn single_mode_block_norm() {
        let g = Grid::smooth(16);
        let part = DyadicPartition::for_band(16);
        let m = (5, 0);
        let f = SpectralField::basis(g, m, c(1.0)).unwrap();
        let alpha = 0.7;
        let want = part
            .blocks()
            .map(|k| block_weight(alpha, k) * part.weight(k, m))
            .fold(0.0, f64::max);
        let got = besov_norm(&f, &BesovParams::holder(alpha), &part).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn under_resolved_grid_is_rejected() {
        let g = Grid::smooth(8);
        let f = SpectralField::random(g, 8, 0.0, &mut rng::stream(1, 0, 0, 2));
        let part = DyadicPartition::for_band(8);
        let b = BesovParams::new(0.0, 4.0, 2.0).unwrap();
        assert!(matches!(besov_norm_on(&f, &b, &part, 20), Err(Error::Config(_))));
        let exact = besov_norm_on(&f, &b, &part, 40).unwrap();
        assert!((exact - besov_norm(&f, &b, &part).unwrap()).abs() < 1e-12 * exact);
    }

    #[test]
    fn bony_parts_sum_to_product() {
        let g = Grid::smooth(12);
        let part = DyadicPartition::for_band(12);
        let mut s = rng::stream(4, 0, 0, 2);
        let f = SpectralField::random(g, 12, 0.5, &mut s);
        let h = SpectralField::random(g, 12, 0.5, &mut s);
        let (a, r, b) = bony_decompose(&f, &h, &part).unwrap();
        let sum = a.add(&r).unwrap().add(&b).unwrap();
        let prod = dealiased_product(&f, &h).unwrap();
        assert!(sum.sub(&prod).unwrap().max_coeff() < 1e-10);
    }

    #[test]
    fn bony_low_times_high_is_pure_paraproduct() {
        let g = Grid::smooth(64);
        let part = DyadicPartition::for_band(64);
        let f = SpectralField::basis(g, (0, 0), c(2.0)).unwrap();
        let h = SpectralField::basis(g, (48, 0), c(1.0)).unwrap();
        assert!(part.blocks().filter(|&k| part.weight(k, (48, 0)) != 0.0).all(|k| k == 5));
        let (a, r, b) = bony_decompose(&f, &h, &part).unwrap();
        assert!(a.sub(&h.scale_real(2.0)).unwrap().max_coeff() < 1e-12);
        assert!(r.max_coeff() < 1e-12 && b.max_coeff() < 1e-12);
        let (a, r, b) = bony_decompose(&f, &f, &part).unwrap();
        assert!((r.get((0, 0)) - c(4.0)).norm() < 1e-12);
        assert!(a.max_coeff() < 1e-12 && b.max_coeff() < 1e-12);
    }

    #[test]
    fn exponent_serde_round_trip() {
        let b = BesovParams::holder(-0.5);
        let s = serde_json::to_string(&b).unwrap();
        let back: BesovParams = serde_json::from_str(&s).unwrap();
        assert_eq!(b, back);
        assert_eq!(Exponent::Finite(4.0).dual(), Exponent::Finite(4.0 / 3.0));
    }
}
