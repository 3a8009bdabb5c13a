//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p scgl --test acceptance`; pass criterion
//! numbers as arguments to run a subset.

use num_complex::Complex64;
use rayon::prelude::*;
use scgl::bel::{self, BelConfig};
use scgl::config::{CNum, SolverConfig};
use scgl::dyadic::{besov_norm, lp_block, BesovParams, DyadicPartition};
use scgl::experiments::{
    self, BelCheckSpec, KernelCheckSpec, RenormLadderSpec, RenormScanSpec, WickLadderSpec,
};
use scgl::ou::{stationary_variance, OUState, OuPropagator};
use scgl::rng::{self, purpose};
use scgl::solver::{self, Trajectory};
use scgl::spectral::{self, Grid, LinearSymbol, PhysParams, SpectralField};
use scgl::stats::least_squares;
use scgl::wick::{self, CellSystem, Hermite, SimpleKernel, WickIndex};
use std::time::Instant;

type Outcome = (bool, String);

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Complex mean with the standard error `sqrt(Var(re)/N + Var(im)/N)`.
#[derive(Default, Clone, Copy)]
struct ComplexMoments {
    n: f64,
    sum: Complex64,
    sum_sq_re: f64,
    sum_sq_im: f64,
}

impl ComplexMoments {
    fn push(&mut self, x: Complex64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq_re += x.re * x.re;
        self.sum_sq_im += x.im * x.im;
    }

    fn merge(mut self, o: Self) -> Self {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq_re += o.sum_sq_re;
        self.sum_sq_im += o.sum_sq_im;
        self
    }

    fn mean(&self) -> Complex64 {
        self.sum / self.n
    }

    fn stderr(&self) -> f64 {
        let m = self.mean();
        let var_re = (self.sum_sq_re / self.n - m.re * m.re).max(0.0) * self.n / (self.n - 1.0);
        let var_im = (self.sum_sq_im / self.n - m.im * m.im).max(0.0) * self.n / (self.n - 1.0);
        ((var_re + var_im) / self.n).sqrt()
    }
}

fn renorm_divergence() -> Outcome {
    let (_, fits) = experiments::renorm_scan(&RenormScanSpec::default()).unwrap();
    let worst = fits.iter().map(|f| f.relative_error).fold(0.0, f64::max);
    let detail = fits
        .iter()
        .map(|f| format!("mu={} slope={:.5} target={:.5}", f.mu, f.fit.slope, f.expected))
        .collect::<Vec<_>>()
        .join("; ");
    (worst <= 0.1, format!("{detail}; worst rel err {worst:.3} (tol 0.10)"))
}

fn kernel_log_asymptotic() -> Outcome {
    let rep = experiments::kernel_check(&KernelCheckSpec::default()).unwrap();
    (
        rep.max_deviation <= 1.0 && rep.trend.slope.abs() < 0.02,
        format!(
            "max deviation {:.4} (tol 1.0), slope in log|x| {:.5} (tol 0.02)",
            rep.max_deviation, rep.trend.slope
        ),
    )
}

fn hermite_identities() -> Outcome {
    let h = Hermite::new(14);
    let zs: Vec<Complex64> = (-2..=2)
        .flat_map(|a| (-2..=2).map(move |b| c(a as f64, b as f64)))
        .collect();
    let cs = [0.0, 0.5, 2.0];
    let mut worst = [0.0f64; 5];
    let rel = |lhs: Complex64, rhs: Complex64, scale: f64| (lhs - rhs).norm() / scale.max(lhs.norm()).max(1e-300);
    for &cc in &cs {
        for &z in &zs {
            for k in 0..=6 {
                for l in 0..=6 {
                    let hkl = h.eval(k, l, z, cc).unwrap();
                    // (i) H_{k+1,l} = z H_{k,l} − c l H_{k,l−1}
                    let prev = if l > 0 { h.eval(k, l - 1, z, cc).unwrap() } else { ZERO };
                    let a = z * hkl;
                    let b = prev * (cc * l as f64);
                    worst[0] = worst[0].max(rel(h.eval(k + 1, l, z, cc).unwrap(), a - b, a.norm() + b.norm()));
                    // (ii) H_{k,l+1} = z̄ H_{k,l} − c k H_{k−1,l}
                    let prev = if k > 0 { h.eval(k - 1, l, z, cc).unwrap() } else { ZERO };
                    let a = z.conj() * hkl;
                    let b = prev * (cc * k as f64);
                    worst[1] = worst[1].max(rel(h.eval(k, l + 1, z, cc).unwrap(), a - b, a.norm() + b.norm()));
                    // conjugation
                    worst[3] = worst[3].max(rel(hkl.conj(), h.eval(l, k, z, cc).unwrap(), 0.0));
                    // c = 0 collapse
                    if cc == 0.0 {
                        let mono = z.powu(k as u32) * z.conj().powu(l as u32);
                        worst[4] = worst[4].max(rel(hkl, mono, mono.norm()));
                    }
                }
            }
        }
        // (iii) binomial shift on pairs of grid points.
        for (ix, &x) in zs.iter().enumerate().step_by(3) {
            for &y in zs.iter().skip(ix % 5).step_by(4) {
                for k in 0..=6 {
                    for l in 0..=6 {
                        let lhs = h.eval(k, l, x + y, cc).unwrap();
                        let mut rhs = ZERO;
                        let mut scale = 0.0;
                        for i in 0..=k {
                            for j in 0..=l {
                                let term = x.powu(i as u32)
                                    * x.conj().powu(j as u32)
                                    * h.eval(k - i, l - j, y, cc).unwrap()
                                    * (binom(k, i) * binom(l, j));
                                rhs += term;
                                scale += term.norm();
                            }
                        }
                        worst[2] = worst[2].max(rel(lhs, rhs, scale));
                    }
                }
            }
        }
    }
    let ok = worst.iter().all(|&w| w <= 1e-12);
    (
        ok,
        format!(
            "max rel err: (i) {:.1e}, (ii) {:.1e}, (iii) {:.1e}, conj {:.1e}, c=0 {:.1e} (tol 1e-12)",
            worst[0], worst[1], worst[2], worst[3], worst[4]
        ),
    )
}

fn chaos_moments() -> Outcome {
    const SAMPLES: u64 = 1_000_000;
    const CHUNK: u64 = 10_000;
    let h = Hermite::new(8);
    let idx: Vec<(usize, usize)> = (0..=3).flat_map(|d| (0..=d).map(move |k| (k, d - k))).collect();
    let ni = idx.len();
    let var = 0.8;
    let mut fails = Vec::new();

    // Orthogonality and diagonal k!l!c^{k+l}.
    let acc: Vec<ComplexMoments> = (0..SAMPLES / CHUNK)
        .into_par_iter()
        .map(|chunk| {
            let mut r = rng::stream(41, chunk, 0, purpose::AUX);
            let mut acc = vec![ComplexMoments::default(); ni * ni];
            let mut vals = vec![ZERO; ni];
            for _ in 0..CHUNK {
                let z = rng::complex_normal(&mut r, var);
                for (v, &(k, l)) in vals.iter_mut().zip(&idx) {
                    *v = h.eval(k, l, z, var).unwrap();
                }
                for a in 0..ni {
                    for b in 0..ni {
                        acc[a * ni + b].push(vals[a] * vals[b].conj());
                    }
                }
            }
            acc
        })
        .reduce(
            || vec![ComplexMoments::default(); ni * ni],
            |x, y| x.into_iter().zip(y).map(|(a, b)| a.merge(b)).collect(),
        );
    let mut worst_z: f64 = 0.0;
    for a in 0..ni {
        for b in 0..ni {
            let m = &acc[a * ni + b];
            let (k, l) = idx[a];
            let want = if a == b { factorial(k) * factorial(l) * var.powi((k + l) as i32) } else { 0.0 };
            let z = (m.mean() - want).norm() / m.stderr().max(1e-300);
            if a == 0 && b == 0 {
                continue; // H_{0,0} = 1 exactly
            }
            worst_z = worst_z.max(z);
            if z > 3.0 {
                fails.push(format!("E[H{:?} conj H{:?}] off by {z:.2}σ", idx[a], idx[b]));
            }
        }
    }

    // Product formula E[𝒥(f)𝒥(g)] = full contraction, and the second-moment
    // bound E|𝒥_{k,l}(f)|² ≤ k!l!‖f‖².
    let cells = CellSystem::new(vec![(0, 0.7), (1, 1.3), (2, 0.4), (3, 0.9)]).unwrap();
    let f = SimpleKernel::new(
        WickIndex::new(2, 1),
        vec![
            (vec![0, 1, 2], c(1.0, 0.5)),
            (vec![2, 0, 1], c(-0.3, 0.2)),
            (vec![1, 3, 0], c(0.6, -0.4)),
        ],
    )
    .unwrap();
    let g = SimpleKernel::new(
        WickIndex::new(1, 2),
        vec![(vec![1, 0, 2], c(0.4, -1.0)), (vec![0, 2, 1], c(2.0, 0.0)), (vec![3, 1, 2], c(0.1, 0.7))],
    )
    .unwrap();
    let mut expected = ZERO;
    for gamma in wick::Pairing::enumerate(f.order, g.order) {
        let k = wick::contract(&f, &g, &gamma, &cells).unwrap();
        if k.order.degree() == 0 {
            expected += wick::chaos_integral_eval(&k, &cells, &[]).unwrap();
        }
    }
    let (prod, second) = (0..SAMPLES / CHUNK)
        .into_par_iter()
        .map(|chunk| {
            let mut r = rng::stream(43, chunk, 0, purpose::AUX);
            let mut p = ComplexMoments::default();
            let mut s = ComplexMoments::default();
            for _ in 0..CHUNK {
                let d = cells.sample(&mut r);
                let jf = wick::chaos_integral_eval(&f, &cells, &d).unwrap();
                let jg = wick::chaos_integral_eval(&g, &cells, &d).unwrap();
                p.push(jf * jg);
                s.push(c(jf.norm_sqr(), 0.0));
            }
            (p, s)
        })
        .reduce(
            || (ComplexMoments::default(), ComplexMoments::default()),
            |a, b| (a.0.merge(b.0), a.1.merge(b.1)),
        );
    let zp = (prod.mean() - expected).norm() / prod.stderr();
    if zp > 3.0 {
        fails.push(format!("product formula off by {zp:.2}σ"));
    }
    let bound = factorial(2) * factorial(1) * f.norm_sq(&cells).unwrap();
    let second_ok = second.mean().re <= bound + 3.0 * second.stderr();
    if !second_ok {
        fails.push(format!("E|J(f)|² = {} exceeds k!l!‖f‖² = {bound}", second.mean().re));
    }
    (
        fails.is_empty(),
        format!(
            "10^6 samples: worst Gram-entry z {worst_z:.2}; product formula z {zp:.2}; E|J(f)|² {:.4} ≤ {bound:.4}{}",
            second.mean().re,
            if fails.is_empty() { String::new() } else { format!("; {}", fails.join("; ")) }
        ),
    )
}

fn ou_exactness() -> Outcome {
    const SAMPLES: u64 = 2_000_000;
    let (n, mu, h) = (2, 1.0, 0.05);
    let grid = Grid::smooth(n);
    let prop = OuPropagator::new(grid, mu, h);
    let modes: Vec<(usize, (i32, i32))> = grid
        .modes()
        .filter(|(_, m)| spectral::in_ball(n, *m) && spectral::cutoff_symbol(n, *m) > 0.0)
        .collect();
    let acc: Vec<(f64, f64)> = (0..SAMPLES / 1000)
        .into_par_iter()
        .map(|chunk| {
            let mut out = vec![(0.0, 0.0); modes.len()];
            for i in 0..1000 {
                let mut r = rng::stream(977, chunk * 1000 + i, 0, purpose::AUX);
                let mut s = OUState::stationary(grid, mu, &mut r);
                prop.exact_step(&mut s, &mut r);
                for (o, (idx, _)) in out.iter_mut().zip(&modes) {
                    let v = s.z.coeffs[*idx].norm_sqr();
                    o.0 += v;
                    o.1 += v * v;
                }
            }
            out
        })
        .reduce(
            || vec![(0.0, 0.0); modes.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| (x.0 + y.0, x.1 + y.1)).collect(),
        );
    let nf = SAMPLES as f64;
    let mut worst_z: f64 = 0.0;
    for ((_, m), (s, s2)) in modes.iter().zip(&acc) {
        let mean = s / nf;
        let se = ((s2 / nf - mean * mean) / (nf - 1.0)).sqrt();
        let a = spectral::cutoff_symbol(n, *m);
        let want = a * a / (2.0 * (4.0 * std::f64::consts::PI.powi(2) * mu * spectral::norm_sq(*m) as f64 + 1.0));
        assert!((want - stationary_variance(n, mu, *m)).abs() <= 1e-15 * want.max(1e-300));
        worst_z = worst_z.max((mean - want).abs() / se);
    }
    // Two half steps against one full step, mode by mode.
    let g = Grid::smooth(6);
    let half = OuPropagator::new(g, 0.9, 0.013 / 2.0);
    let full = OuPropagator::new(g, 0.9, 0.013);
    let mut worst_law: f64 = 0.0;
    for (i, _) in g.modes() {
        let d2 = half.decay(i) * half.decay(i);
        worst_law = worst_law.max((d2 - full.decay(i)).norm() / full.decay(i).norm());
        let v2 = half.decay(i).norm_sqr() * half.innovation_sd(i).powi(2) + half.innovation_sd(i).powi(2);
        let v1 = full.innovation_sd(i).powi(2);
        worst_law = worst_law.max((v2 - v1).abs() / v1);
    }
    (
        worst_z <= 3.0 && worst_law <= 1e-14,
        format!(
            "{} modes, worst variance z {worst_z:.2} (tol 3); half-step law rel err {worst_law:.1e} (tol 1e-14)",
            modes.len()
        ),
    )
}

fn littlewood_paley() -> Outcome {
    let n = 12;
    let grid = Grid::smooth(n);
    let part = DyadicPartition::for_band(n);
    let mut r = rng::stream(61, 0, 0, purpose::AUX);
    let fields: Vec<SpectralField> = (0..100).map(|i| SpectralField::random(grid, n, 0.25 * (i % 5) as f64, &mut r)).collect();
    let mut worst: f64 = 0.0;
    for f in &fields {
        let mut sum = SpectralField::zeros(grid);
        for k in part.blocks() {
            sum = sum.add(&lp_block(f, k, &part).unwrap()).unwrap();
        }
        worst = worst.max(sum.sub(f).unwrap().max_coeff() / f.max_coeff());
    }
    // Embedding in α, q and p over the same fields.
    let params = |a: f64, p: f64, q: f64| BesovParams::new(a, p, q).unwrap();
    let slack = |a: f64, b: f64| a <= b * (1.0 + 1e-12);
    let ps = [1.0, 2.0, 4.0, f64::INFINITY];
    let qs = [1.0, 2.0, f64::INFINITY];
    let alphas = [-1.0, -0.5, 0.0, 0.5];
    let per: Vec<usize> = fields
        .par_iter()
        .map(|f| {
            let mut v = 0;
            let mut table = vec![0.0; alphas.len() * ps.len() * qs.len()];
            let at = |ia: usize, ip: usize, iq: usize| (ia * ps.len() + ip) * qs.len() + iq;
            for (ia, &a) in alphas.iter().enumerate() {
                for (ip, &p) in ps.iter().enumerate() {
                    for (iq, &q) in qs.iter().enumerate() {
                        table[at(ia, ip, iq)] = besov_norm(f, &params(a, p, q), &part).unwrap();
                    }
                }
            }
            for ia in 0..alphas.len() {
                for ip in 0..ps.len() {
                    for iq in 0..qs.len() {
                        let x = table[at(ia, ip, iq)];
                        if ia + 1 < alphas.len() && !slack(x, table[at(ia + 1, ip, iq)]) {
                            v += 1;
                        }
                        if ip + 1 < ps.len() && !slack(x, table[at(ia, ip + 1, iq)]) {
                            v += 1;
                        }
                        if iq + 1 < qs.len() && !slack(table[at(ia, ip, iq + 1)], x) {
                            v += 1;
                        }
                    }
                }
            }
            // Interpolation between α₀ = −1 and α₁ = 0.5 at matched (p, q).
            for &theta in &[0.25, 0.5, 0.75] {
                let a = (1.0 - theta) * -1.0 + theta * 0.5;
                for &p in &ps {
                    for &q in &qs {
                        let mid = besov_norm(f, &params(a, p, q), &part).unwrap();
                        let lo = besov_norm(f, &params(-1.0, p, q), &part).unwrap();
                        let hi = besov_norm(f, &params(0.5, p, q), &part).unwrap();
                        if !slack(mid, lo.powf(1.0 - theta) * hi.powf(theta)) {
                            v += 1;
                        }
                    }
                }
            }
            v
        })
        .collect();
    let violations: usize = per.iter().sum();
    (
        worst <= 1e-12 && violations == 0,
        format!("100 fields: reconstruction rel err {worst:.1e} (tol 1e-12); {violations} embedding/interpolation violations"),
    )
}

fn smoothing_exponents() -> Outcome {
    let n = 64;
    let grid = Grid::smooth(n);
    let part = DyadicPartition::for_band(n);
    let a = LinearSymbol::a(1.0);
    let mut ks: Vec<i32> = (0..40).map(|j| 1.15f64.powi(j).round() as i32).filter(|&k| k <= n as i32).collect();
    ks.dedup();
    let fams: Vec<SpectralField> = ks
        .iter()
        .map(|&k| SpectralField::basis(grid, (k, 0), c(1.0, 0.0)).unwrap())
        .collect();
    let ts: Vec<f64> = (0..9).map(|i| 3e-5 * 10f64.powf(i as f64 / 4.0)).collect();
    let xs: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for (beta, alpha, regularity) in [(-0.5, 0.5, false), (0.5, -0.5, true)] {
        let pb = BesovParams::holder(beta);
        let pa = BesovParams::holder(alpha);
        let base: Vec<f64> = fams.iter().map(|f| besov_norm(f, &pb, &part).unwrap()).collect();
        let ys: Vec<f64> = ts
            .par_iter()
            .map(|&t| {
                fams.iter()
                    .zip(&base)
                    .map(|(f, b)| {
                        let g = spectral::semigroup_apply(f, t, &a).unwrap();
                        let g = if regularity { f.sub(&g).unwrap() } else { g };
                        besov_norm(&g, &pa, &part).unwrap() / b
                    })
                    .fold(0.0, f64::max)
                    .ln()
            })
            .collect();
        let slope = least_squares(&xs, &ys).slope;
        let target = -(alpha - beta) / 2.0;
        let err = (slope - target).abs() / target.abs();
        ok &= err <= 0.15;
        detail.push(format!(
            "{} (β,α)=({beta},{alpha}): slope {slope:.4} vs {target} (rel err {err:.3})",
            if regularity { "1−e^{tA}" } else { "e^{tA}" }
        ));
    }
    (ok, format!("{} (tol 0.15)", detail.join("; ")))
}

fn dealiasing() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut r = rng::stream(81, 0, 0, purpose::AUX);
    for n in [1usize, 2, 4, 6, 8] {
        let g = Grid::smooth(n);
        let u = SpectralField::random(g, n, 0.5, &mut r);
        let fast = spectral::dealiased_cubic(&u).unwrap();
        let modes: Vec<(i32, i32)> = g.modes().map(|(_, m)| m).filter(|&m| spectral::in_ball(n, m)).collect();
        for (i, m) in g.modes() {
            let mut acc = ZERO;
            if spectral::in_ball(n, m) {
                for &a in &modes {
                    for &b in &modes {
                        let cm = (m.0 - a.0 - b.0, m.1 - a.1 - b.1);
                        if spectral::in_ball(n, cm) {
                            // |u|²u = u·u·ū with ū_c = conj(u_{−c}).
                            acc += u.get(a) * u.get(b) * u.get((-cm.0, -cm.1)).conj();
                        }
                    }
                }
            }
            worst = worst.max((acc - fast.coeffs[i]).norm() / (1.0 + acc.norm()));
        }
    }
    (worst <= 1e-12, format!("n ≤ 8: max err {worst:.1e} (tol 1e-12)"))
}

fn scheme_consistency() -> Outcome {
    let table = experiments::scheme_gap_table(16, &PhysParams::default(), 1e-3, &[4, 2, 1], 0.5, 8, 11).unwrap();
    let r1 = table[0].1 / table[1].1;
    let r2 = table[1].1 / table[2].1;
    (
        (1.5..=2.5).contains(&r1) && (1.5..=2.5).contains(&r2),
        format!(
            "gaps {:.3e}, {:.3e}, {:.3e} at h = 4e-3, 2e-3, 1e-3; ratios {r1:.3}, {r2:.3} (target 2 ± 0.5)",
            table[0].1, table[1].1, table[2].1
        ),
    )
}

fn energy_identity() -> Outcome {
    let g = Grid::smooth(8);
    let p = PhysParams::default();
    let mut r = rng::stream(91, 0, 0, purpose::AUX);
    let y0 = SpectralField::random(g, 8, 1.0, &mut r);
    let z = SpectralField::zeros(g);
    let hs = [4e-3, 2e-3, 1e-3, 5e-4];
    let res: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let st = solver::SplitStepper::new(g, p, h, 0.0, 0.5).unwrap();
            let mut y = y0.clone();
            let mut traj = Trajectory {
                t: vec![0.0],
                y: vec![y.clone()],
                z: vec![z.clone()],
                c: 0.0,
            };
            for k in 0..(1.0 / h).round() as usize {
                st.step_y_frozen(&mut y, &z, k as f64 * h).unwrap();
                traj.t.push((k + 1) as f64 * h);
                traj.y.push(y.clone());
                traj.z.push(z.clone());
            }
            solver::lp_energy_residual(&traj, 2, &p)
                .unwrap()
                .iter()
                .fold(0.0, |a: f64, b| a.max(b.abs()))
        })
        .collect();
    // O(h): residual/h does not grow under refinement and the residual shrinks.
    let per_h: Vec<f64> = res.iter().zip(&hs).map(|(r, h)| r / h).collect();
    let order_ok = per_h.windows(2).all(|w| w[1] <= w[0] * 1.05) && res.windows(2).all(|w| w[1] < w[0]);
    let mut violations = 0;
    let mut worst_rel = f64::NEG_INFINITY;
    for _ in 0..100 {
        let y = SpectralField::random(g, 8, 1.0, &mut r);
        let (worst, scale) = solver::dissipativity_margin(&y, 1.0, 4);
        worst_rel = worst_rel.max(worst / scale);
        if worst > 1e-10 * scale {
            violations += 1;
        }
    }
    let delta = solver::dissipativity_delta(1.0, 4.0);
    let below_critical = 4.0 < solver::critical_p(1.0);
    (
        order_ok && violations == 0 && delta > 0.0 && below_critical,
        format!(
            "max residual {:.3e}, {:.3e}, {:.3e}, {:.3e} at h = 4e-3..5e-4 (residual/h {:.1}, {:.1}, {:.1}, {:.1}); \
             dissipativity (μ,p)=(1,4), δ = {delta:.4}, p(μ) = {:.3}: {violations} violations on 100 fields (worst margin/scale {worst_rel:.2e})",
            res[0], res[1], res[2], res[3], per_h[0], per_h[1], per_h[2], per_h[3], solver::critical_p(1.0)
        ),
    )
}

fn coming_down() -> Outcome {
    let mut cfg = SolverConfig::default();
    cfg.snapshot_every = 50;
    cfg.seed = 5;
    let rows = solver::coming_down_experiment(&[0.0, 10.0, 1e2, 1e3, 1e4], 0.5, 64, 0.5, 2.0, &cfg).unwrap();
    let meds: Vec<f64> = rows.iter().map(|r| r.median_norm).collect();
    let ratio = meds.iter().cloned().fold(0.0, f64::max) / meds.iter().cloned().fold(f64::INFINITY, f64::min);
    let blowups: usize = rows.iter().map(|r| r.blowups).sum();
    (
        ratio <= 2.0 && blowups == 0,
        format!(
            "medians {} for R = 0, 10, 1e2, 1e3, 1e4; max/min {ratio:.3} (tol 2); {blowups} blow-ups",
            meds.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn wick_necessity() -> Outcome {
    let spec = RenormLadderSpec {
        points: vec![72, 132, 288],
        ..RenormLadderSpec::default()
    };
    let rows = experiments::renorm_ladder(&spec, &PhysParams::default(), 0).unwrap();
    let (drift, stable) = experiments::renorm_ladder_verdict(&rows);
    let fmt = |on: bool| {
        rows.iter()
            .filter(|r| r.renormalized == on)
            .map(|r| format!("n={}: {:.4}±{:.4} (shift {:+.2e}±{:.1e})", r.n, r.mean.mean, r.mean.stderr, r.shift.mean, r.shift.stderr))
            .collect::<Vec<_>>()
            .join(", ")
    };
    (
        drift && stable,
        format!("c=0: {} [drift {}]; c=c_n: {} [stable {}]", fmt(false), drift, fmt(true), stable),
    )
}

fn variational_gradient() -> Outcome {
    let cfg = BelConfig::default();
    let g = cfg.grid();
    let mut r = rng::stream(3, 0, 0, purpose::AUX);
    let v0 = SpectralField::random(g, 4, 1.0, &mut r);
    let h_dir = SpectralField::random(g, 4, 1.0, &mut r);
    let eps: Vec<f64> = (1..=12).map(|k| 10f64.powi(-k)).collect();
    let errs = bel::finite_difference_errors(&v0, &h_dir, &cfg, &eps, 0, true).unwrap();
    // First order: ratios near 10 per decade until the error bottoms out.
    let best = errs.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    let ibest = errs.iter().position(|e| e.1 == best).unwrap();
    let first_order = errs[..=ibest.min(4)]
        .windows(2)
        .all(|w| (7.0..=13.0).contains(&(w[0].1 / w[1].1)));
    // Plateau: below the optimum the error no longer improves and stays at
    // the roundoff scale ε_mach/ε.
    let plateau = ibest + 1 < errs.len()
        && errs[ibest + 1..].iter().all(|e| e.1 >= best && e.1 <= 1e3 * f64::EPSILON / e.0);
    let defect = bel::linearity_defect(&v0, &h_dir, &cfg, 0).unwrap();
    (
        first_order && plateau && defect <= 1e-12,
        format!(
            "errors {} ; best {best:.1e} at ε={:.0e}; linearity defect {defect:.1e} (tol 1e-12)",
            errs.iter().map(|(e, v)| format!("{e:.0e}:{v:.1e}")).collect::<Vec<_>>().join(" "),
            errs[ibest].0
        ),
    )
}

fn bel_identity() -> Outcome {
    let spec = BelCheckSpec::default();
    let (v0, h) = spec.fields().unwrap();
    let phi = spec.observable().unwrap();
    let rep = bel::bel_estimator(phi.as_ref(), &v0, &h, &spec.run).unwrap();
    let nonlinear_ok = rep.z_score() <= 3.0 && rep.discarded_fraction < 1e-3;
    let lin = BelConfig {
        nu: CNum(ZERO),
        replicas: 20_000,
        ..spec.run.clone()
    };
    let lr = bel::bel_estimator(&bel::MeanReal, &v0, &h, &lin).unwrap();
    let closed = bel::linear_mean_closed_form(&h, lin.steps() as f64 * lin.h, &lin.params().unwrap());
    // With ν = 0 the variational flow is deterministic, so the lhs has no
    // sampling error and must match to rounding.
    let lhs_err = (lr.lhs.mean - closed).abs();
    let z_r = (lr.rhs.mean - closed).abs() / lr.rhs.stderr;
    let lin_ok = lhs_err <= 3.0 * lr.lhs.stderr + 1e-12 && z_r <= 3.0;
    (
        nonlinear_ok && lin_ok,
        format!(
            "n=4, t=0.1, {} replicas: lhs {:.5}±{:.5}, rhs {:.5}±{:.5}, z {:.2} (tol 3), discarded {:.2e} (tol 1e-3); \
             ν=0: lhs {:.5}, rhs {:.5}±{:.5} vs closed form {closed:.5} (lhs err {lhs_err:.1e}, rhs z {z_r:.2})",
            rep.replicas,
            rep.lhs.mean,
            rep.lhs.stderr,
            rep.rhs.mean,
            rep.rhs.stderr,
            rep.z_score(),
            rep.discarded_fraction,
            lr.lhs.mean,
            lr.rhs.mean,
            lr.rhs.stderr
        ),
    )
}

fn convergence_ladder() -> Outcome {
    let spec = WickLadderSpec {
        samples: 3,
        ..WickLadderSpec::default()
    };
    let rungs = experiments::wick_ladder(&spec, 1.0, 0).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, l) in [(1, 1), (2, 1)] {
        let med: Vec<f64> = rungs.iter().filter(|r| r.k == k && r.l == l).map(|r| r.median_sup).collect();
        ok &= med.windows(2).all(|w| w[1] < w[0]);
        let mut line = format!("({k},{l}): {:.4}", med[0]);
        for w in med.windows(2) {
            line += &format!(" {} {:.4}", if w[1] < w[0] { ">" } else { "<=" }, w[1]);
        }
        detail.push(line);
    }
    (ok, format!("median over 64 replicas, n = 8,16,32,64: {}", detail.join("; ")))
}

fn main() {
    let criteria: Vec<(u32, &str, fn() -> Outcome)> = vec![
        (1, "renormalization divergence", renorm_divergence),
        (2, "kernel log-asymptotic", kernel_log_asymptotic),
        (3, "Hermite identity suite", hermite_identities),
        (4, "chaos moments", chaos_moments),
        (5, "OU exactness", ou_exactness),
        (6, "Littlewood-Paley reconstruction and embeddings", littlewood_paley),
        (7, "semigroup smoothing exponents", smoothing_exponents),
        (8, "dealiasing exactness", dealiasing),
        (9, "scheme consistency", scheme_consistency),
        (10, "L^p energy identity and dissipativity", energy_identity),
        (11, "coming down from infinity", coming_down),
        (12, "Wick necessity", wick_necessity),
        (13, "variational gradient", variational_gradient),
        (14, "Bismut-Elworthy-Li identity", bel_identity),
        (15, "convergence ladder", convergence_ladder),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(run) {
            Ok(o) => o,
            Err(e) => (
                false,
                format!(
                    "panicked: {}",
                    e.downcast_ref::<String>()
                        .cloned()
                        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default()
                ),
            ),
        };
        println!(
            "{} criterion {id:2} ({name}) [{:.1} s]: {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
