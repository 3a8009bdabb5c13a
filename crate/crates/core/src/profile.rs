//! Smooth radial profiles shared by the dyadic partition and the Galerkin cutoff.
//!
//! Everything is built from the bump `e^{−1/x}`, so the profiles are C^∞ and
//! exactly constant on their plateaus.

fn bump(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Monotone C^∞ step: 0 for `x ≤ 0`, 1 for `x ≥ 1`.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = bump(x);
    let b = bump(1.0 - x);
    a / (a + b)
}

/// Radial plateau ψ: 1 on `[0, 1]`, 0 on `[4/3, ∞)`.
pub fn plateau(r: f64) -> f64 {
    1.0 - smooth_step(3.0 * (r - 1.0))
}

/// Transition of the Galerkin cutoff symbol: 1 on `[0, 1/2]`, 0 on `[1, ∞)`.
pub fn cutoff_transition(r: f64) -> f64 {
    1.0 - smooth_step(2.0 * (r - 0.5))
}

/// Cutoff χ of the stopping argument: 1 on `[0, a]`, 0 on `[2a, ∞)`.
pub fn stopping_cutoff(x: f64, a: f64) -> f64 {
    1.0 - smooth_step(x.abs() / a - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus_are_exact() {
        assert_eq!(plateau(0.0), 1.0);
        assert_eq!(plateau(1.0), 1.0);
        assert_eq!(plateau(4.0 / 3.0), 0.0);
        assert_eq!(cutoff_transition(0.5), 1.0);
        assert_eq!(cutoff_transition(1.0), 0.0);
        assert_eq!(stopping_cutoff(1.0, 1.0), 1.0);
        assert_eq!(stopping_cutoff(-2.0, 1.0), 0.0);
    }

    #[test]
    fn step_is_monotone_and_symmetric() {
        let mut prev = 0.0;
        for i in 0..=1000 {
            let x = i as f64 / 1000.0;
            let s = smooth_step(x);
            assert!(s >= prev);
            assert!((s + smooth_step(1.0 - x) - 1.0).abs() < 1e-15);
            prev = s;
        }
    }
}
