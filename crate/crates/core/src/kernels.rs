//! Periodized complex heat kernels on the unit torus.
//!
//! `K(t,x) = Σ_y e^{−t}/(4π(i+μ)t) · exp(−|x−y|²/(4(i+μ)t))` is the kernel of
//! `e^{tA}`, and
//!
//! ```text
//! 𝒦(δ; x) = Σ_y ∫_{|δ|}^∞ e^{−s}/(8π(iδ+μs)) · exp(−|x−y|²/(4(iδ+μs))) ds
//! ```
//!
//! is the covariance kernel behind the renormalization constant. Its Fourier
//! coefficients are `½ e^{−4π²iδ|m|²} e^{−|δ|(1+4π²μ|m|²)} / (1+4π²μ|m|²)`.
//! The integral is split at `s₀`: the piece `s ≥ s₀` is summed in Fourier
//! space, where it converges like `e^{−4π²μ s₀|m|²}`, and the piece
//! `s ∈ [|δ|, s₀]` is integrated numerically in `v = ln s` over a handful of
//! spatial images.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::PI;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative size below which Gaussian images are dropped.
const IMAGE_TAIL: f64 = 1e-14;

fn wrap_half(v: f64) -> f64 {
    v - v.round()
}

/// Distance from `x` to the nearest point of `ℤ²`.
pub fn torus_distance(x: (f64, f64)) -> f64 {
    wrap_half(x.0).hypot(wrap_half(x.1))
}

/// Sum of `g(|x − y|²)` over images `y ∈ ℤ²` with `|x − y| ≤ radius`,
/// always including the 3×3 block nearest to `x`.
fn image_sum(x: (f64, f64), radius: f64, g: impl Fn(f64) -> Complex64) -> Complex64 {
    let x0 = (wrap_half(x.0), wrap_half(x.1));
    let r = radius.max(1.5).ceil() as i64;
    let mut total = ZERO;
    for j1 in -r..=r {
        for j2 in -r..=r {
            let d1 = x0.0 - j1 as f64;
            let d2 = x0.1 - j2 as f64;
            let d2sum = d1 * d1 + d2 * d2;
            let near = j1.abs() <= 1 && j2.abs() <= 1;
            if near || d2sum <= radius * radius {
                total += g(d2sum);
            }
        }
    }
    total
}

/// `K(t, x)` by direct image summation.
///
/// Images are kept while `|x−y|² ≤ 1.21 · 4(1+μ²)t/μ · ln(10¹⁴)`, the radius
/// at which `|exp(−|x−y|²/(4(i+μ)t))|` drops below `10⁻¹⁴`, with a 10% margin.
pub fn kernel_km(t: f64, x: (f64, f64), mu: f64) -> Result<Complex64> {
    if !(t > 0.0) {
        return Err(Error::input(format!("kernel time must be positive, got {t}")));
    }
    let a = Complex64::new(mu, 1.0) * t;
    let pref = (-t).exp() / (4.0 * PI * a);
    let radius = 1.1 * (4.0 * (1.0 + mu * mu) * t / mu * (1.0 / IMAGE_TAIL).ln()).sqrt();
    Ok(pref * image_sum(x, radius, |r2| (-r2 / (4.0 * a)).exp()))
}

/// `Σ_m e^{−t(4π²(i+μ)|m|² + 1)} e_m(x)`, truncated once terms drop below
/// `10⁻¹⁷`.
pub fn kernel_km_fourier(t: f64, x: (f64, f64), mu: f64) -> Complex64 {
    let mmax = ((40.0 / (4.0 * PI * PI * mu * t)).sqrt().ceil() as i64).max(1);
    let mut total = ZERO;
    for m1 in -mmax..=mmax {
        for m2 in -mmax..=mmax {
            let k2 = (m1 * m1 + m2 * m2) as f64;
            let lam = Complex64::new(4.0 * PI * PI * mu * k2 + 1.0, 4.0 * PI * PI * k2);
            let ph = 2.0 * PI * (m1 as f64 * x.0 + m2 as f64 * x.1);
            total += (-lam * t).exp() * Complex64::from_polar(1.0, ph);
        }
    }
    total
}

/// Fourier coefficient of `𝒦(δ; ·)` restricted to `s ≥ s0 ≥ |δ|`.
fn script_k_mode_tail(delta: f64, s0: f64, mu: f64, k2: f64) -> Complex64 {
    let q = 1.0 + 4.0 * PI * PI * mu * k2;
    let phase = Complex64::from_polar(1.0, -4.0 * PI * PI * delta * k2);
    phase * (0.5 * (-s0 * q).exp() / q)
}

/// `Σ_m` of the Fourier tail above `s0`.
fn script_k_fourier_tail(delta: f64, s0: f64, x: (f64, f64), mu: f64) -> Complex64 {
    let mmax = ((40.0 / (4.0 * PI * PI * mu * s0)).sqrt().ceil() as i64).max(1);
    let mut total = ZERO;
    for m1 in -mmax..=mmax {
        for m2 in -mmax..=mmax {
            let k2 = (m1 * m1 + m2 * m2) as f64;
            let ph = 2.0 * PI * (m1 as f64 * x.0 + m2 as f64 * x.1);
            total += script_k_mode_tail(delta, s0, mu, k2) * Complex64::from_polar(1.0, ph);
        }
    }
    total
}

/// Split point between quadrature and the Fourier tail.
const S_SPLIT: f64 = 0.05;

/// `𝒦(δ; x)` to absolute accuracy `tol`. Singular (an error) at `δ = 0`,
/// `x ∈ ℤ²`.
pub fn script_k(delta: f64, x: (f64, f64), mu: f64, tol: f64) -> Result<Complex64> {
    let dist = torus_distance(x);
    if delta == 0.0 && dist == 0.0 {
        return Err(Error::input("script K is singular at delta = 0, x = 0 mod Z^2"));
    }
    if !(mu > 0.0) {
        return Err(Error::input(format!("mu must be positive, got {mu}")));
    }
    let ad = delta.abs();
    let s0 = S_SPLIT.max(ad);
    let tail = script_k_fourier_tail(delta, s0, x, mu);
    if ad >= S_SPLIT {
        return Ok(tail);
    }
    // Integrand in s for the image-sum part.
    let f = |s: f64| -> Complex64 {
        let a = Complex64::new(mu * s, delta);
        let inv4a = 1.0 / (4.0 * a);
        // |exp(−r²/(4a))| = exp(−r² Re(1/(4a))).
        let decay = inv4a.re;
        let radius = ((1.0 / IMAGE_TAIL).ln() / decay).sqrt();
        let pref = (-s).exp() / (8.0 * PI * a);
        pref * image_sum(x, radius, |r2| (-r2 * inv4a).exp())
    };
    // For s ≥ |δ|/μ the nearest image is below e^{−45}·(integrand scale)
    // whenever s < dist²/(8μ·45); that stretch is skipped.
    let mut pieces: Vec<(f64, f64)> = Vec::new();
    let safe_from = (ad / mu).max(ad);
    let cut = dist * dist / (8.0 * mu * 45.0);
    if cut > safe_from {
        if safe_from > ad {
            pieces.push((ad, safe_from));
        }
        pieces.push((cut.min(s0), s0));
    } else {
        pieces.push((ad, s0));
    }
    let mut total = tail;
    for (lo, hi) in pieces {
        if hi <= lo {
            continue;
        }
        if lo == 0.0 {
            // Only reachable with δ = 0 and a vanishing cut, which the
            // singularity check excludes.
            return Err(Error::input("script K quadrature reached s = 0"));
        }
        let g = |v: f64| {
            let s = v.exp();
            f(s) * s
        };
        total += adaptive_gk(&g, lo.ln(), hi.ln(), tol, 40);
    }
    Ok(total)
}

/// `𝒦(δ; x)` from its Fourier series, valid for `δ ≠ 0` (the series then
/// converges like `e^{−4π²μ|δ||m|²}`).
pub fn script_k_fourier(delta: f64, x: (f64, f64), mu: f64) -> Result<Complex64> {
    if delta == 0.0 {
        return Err(Error::input("the Fourier series of script K needs delta != 0"));
    }
    Ok(script_k_fourier_tail(delta, delta.abs(), x, mu))
}

/// `(1/4πμ) log₊ |x|⁻¹` with the torus distance.
pub fn log_profile(x: (f64, f64), mu: f64) -> f64 {
    let d = torus_distance(x);
    (1.0 / d).ln().max(0.0) / (4.0 * PI * mu)
}

// Gauss-Kronrod 7-15 nodes and weights on [−1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> Complex64, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    (kron * h, ((kron - gauss) * h).norm())
}

/// Globally adaptive Gauss-Kronrod: bisect the worst panel until the summed
/// error estimate is below `tol`.
pub fn adaptive_gk(f: &impl Fn(f64) -> Complex64, a: f64, b: f64, tol: f64, max_depth: usize) -> Complex64 {
    struct Panel {
        a: f64,
        b: f64,
        val: Complex64,
        err: f64,
        depth: usize,
    }
    let (val, err) = gk15(f, a, b);
    let mut panels = vec![Panel { a, b, val, err, depth: 0 }];
    for _ in 0..10_000 {
        let total_err: f64 = panels.iter().map(|p| p.err).sum();
        if total_err <= tol {
            break;
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.depth < max_depth)
            .fold((usize::MAX, -1.0), |acc, (i, p)| if p.err > acc.1 { (i, p.err) } else { acc });
        if worst == usize::MAX {
            break;
        }
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        for (lo, hi) in [(p.a, mid), (mid, p.b)] {
            let (val, err) = gk15(f, lo, hi);
            panels.push(Panel {
                a: lo,
                b: hi,
                val,
                err,
                depth: p.depth + 1,
            });
        }
    }
    panels.iter().map(|p| p.val).sum()
}

/// `∫_𝕋 g` by the midpoint rule on `P × P` cells.
pub fn torus_mean(points: usize, g: impl Fn((f64, f64)) -> Complex64) -> Complex64 {
    let p = points as f64;
    let mut total = ZERO;
    for i in 0..points {
        for j in 0..points {
            total += g(((i as f64 + 0.5) / p - 0.5, (j as f64 + 0.5) / p - 0.5));
        }
    }
    total / (p * p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn km_matches_poisson_sum() {
        for &(t, mu) in &[(0.05, 1.0), (0.2, 0.5), (1.0, 2.0), (0.07, 0.3)] {
            for &x in &[(0.0, 0.0), (0.3, -0.1), (0.5, 0.5), (0.12, 0.44)] {
                let a = kernel_km(t, x, mu).unwrap();
                let b = kernel_km_fourier(t, x, mu);
                assert!((a - b).norm() < 1e-10, "t={t} mu={mu} x={x:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn km_is_even_and_rejects_bad_time() {
        let a = kernel_km(0.01, (0.1, 0.2), 1.0).unwrap();
        let b = kernel_km(0.01, (-0.1, -0.2), 1.0).unwrap();
        assert!((a - b).norm() < 1e-12 * a.norm());
        assert!(kernel_km(0.0, (0.1, 0.0), 1.0).is_err());
    }

    #[test]
    fn km_integrates_to_exp_minus_t() {
        let t = 0.1;
        let mean = torus_mean(64, |x| kernel_km(t, x, 1.0).unwrap());
        assert!((mean - Complex64::new((-t).exp(), 0.0)).norm() < 1e-10);
    }

    #[test]
    fn script_k_matches_fourier_for_nonzero_delta() {
        for &delta in &[1e-3, -4e-3, 0.02, 0.3] {
            for &x in &[(0.01, 0.0), (0.2, 0.1), (0.45, -0.3)] {
                let q = script_k(delta, x, 1.0, 1e-10).unwrap();
                let f = script_k_fourier(delta, x, 1.0).unwrap();
                assert!((q - f).norm() < 1e-8, "delta={delta} x={x:?}: {q} vs {f}");
            }
        }
    }

    #[test]
    fn script_k_conjugation() {
        for &x in &[(0.05, 0.0), (0.3, 0.2)] {
            let a = script_k(0.01, x, 0.7, 1e-10).unwrap();
            let b = script_k(-0.01, x, 0.7, 1e-10).unwrap();
            assert!((a - b.conj()).norm() < 1e-8);
        }
    }

    #[test]
    fn script_k_singular_point() {
        assert!(script_k(0.0, (0.0, 0.0), 1.0, 1e-8).is_err());
        assert!(script_k(0.0, (1.0, -2.0), 1.0, 1e-8).is_err());
        assert!(script_k(1e-3, (0.0, 0.0), 1.0, 1e-8).is_ok());
    }
}
