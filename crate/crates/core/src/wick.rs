//! Complex Hermite polynomials and multiple Itô-Wiener integrals of
//! cell-wise constant kernels.
//!
//! `H_{k,l}(z, c) = Σ_{m ≤ min(k,l)} m! C(k,m) C(l,m) (−c)^m z^{k−m} z̄^{l−m}`
//! is the Wick power `z^{:k,l:}` of an isotropic complex Gaussian of
//! variance `c`.
//!
//! The white-noise measure is modeled on finitely many disjoint cells
//! `E_i` with masses `m(E_i)`, one isotropic complex Gaussian `M(E_i)` per
//! cell. A kernel is constant on products of cells. For the kernels accepted
//! by [`SimpleKernel::new`] every index tuple is repeat-free and
//!
//! ```text
//! 𝒥_{k,l}(f) = Σ a_{i₁…i_{k+l}} M(E_{i₁})⋯M(E_{i_k}) · M̄(E_{i_{k+1}})⋯M̄(E_{i_{k+l}}).
//! ```
//!
//! Contractions can produce kernels that are constant on a cell diagonal.
//! Refining the cell and letting the pieces shrink turns a cell that occurs
//! `a` times in holomorphic slots and `b` times in antiholomorphic slots into
//! the factor `H_{a,b}(M(E_i), m(E_i))`; [`chaos_integral_eval`] uses that
//! limit, so the product formula holds sample by sample.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::RngCore;
use std::collections::{BTreeMap, HashMap};

pub const DEFAULT_MAX_DEGREE: usize = 8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Holomorphic degree `k`, antiholomorphic degree `l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WickIndex {
    pub k: usize,
    pub l: usize,
}

impl WickIndex {
    pub fn new(k: usize, l: usize) -> Self {
        Self { k, l }
    }

    pub fn degree(&self) -> usize {
        self.k + self.l
    }
}

/// Hermite evaluator with a degree ceiling.
#[derive(Clone, Debug)]
pub struct Hermite {
    max_degree: usize,
    factorial: Vec<f64>,
}

impl Default for Hermite {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_DEGREE)
    }
}

impl Hermite {
    pub fn new(max_degree: usize) -> Self {
        let mut factorial = vec![1.0; max_degree + 1];
        for i in 1..=max_degree {
            factorial[i] = factorial[i - 1] * i as f64;
        }
        Self {
            max_degree,
            factorial,
        }
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    fn check(&self, k: usize, l: usize) -> Result<()> {
        if k + l > self.max_degree {
            return Err(Error::config(format!(
                "Hermite degree {} exceeds the configured maximum {}",
                k + l,
                self.max_degree
            )));
        }
        Ok(())
    }

    fn binom(&self, n: usize, r: usize) -> f64 {
        self.factorial[n] / (self.factorial[r] * self.factorial[n - r])
    }

    pub fn eval(&self, k: usize, l: usize, z: Complex64, c: f64) -> Result<Complex64> {
        self.check(k, l)?;
        Ok(self.eval_unchecked(k, l, z, c))
    }

    fn eval_unchecked(&self, k: usize, l: usize, z: Complex64, c: f64) -> Complex64 {
        let zb = z.conj();
        // Compensated summation of the finite series.
        let mut sum = ZERO;
        let mut comp = ZERO;
        for m in 0..=k.min(l) {
            let coeff = self.factorial[m] * self.binom(k, m) * self.binom(l, m) * (-c).powi(m as i32);
            let term = z.powu((k - m) as u32) * zb.powu((l - m) as u32) * coeff;
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum
    }

    /// `∂_z H_{k,l} = k H_{k−1,l}`.
    pub fn dz(&self, k: usize, l: usize, z: Complex64, c: f64) -> Result<Complex64> {
        self.check(k, l)?;
        if k == 0 {
            return Ok(ZERO);
        }
        Ok(self.eval_unchecked(k - 1, l, z, c) * k as f64)
    }

    /// `∂_{z̄} H_{k,l} = l H_{k,l−1}`.
    pub fn dzbar(&self, k: usize, l: usize, z: Complex64, c: f64) -> Result<Complex64> {
        self.check(k, l)?;
        if l == 0 {
            return Ok(ZERO);
        }
        Ok(self.eval_unchecked(k, l - 1, z, c) * l as f64)
    }
}

/// `H_{k,l}(z, c)` with the default degree ceiling.
pub fn hermite_eval(k: usize, l: usize, z: Complex64, c: f64) -> Result<Complex64> {
    Hermite::default().eval(k, l, z, c)
}

pub fn hermite_dz(k: usize, l: usize, z: Complex64, c: f64) -> Result<Complex64> {
    Hermite::default().dz(k, l, z, c)
}

pub fn hermite_dzbar(k: usize, l: usize, z: Complex64, c: f64) -> Result<Complex64> {
    Hermite::default().dzbar(k, l, z, c)
}

/// `H_{2,1}(z, c) = |z|²z − 2cz`, the renormalized cubic.
#[inline]
pub fn h21(z: Complex64, c: f64) -> Complex64 {
    z * (z.norm_sqr() - 2.0 * c)
}

/// Disjoint cells with positive masses.
#[derive(Clone, Debug)]
pub struct CellSystem {
    cells: Vec<(u64, f64)>,
    position: HashMap<u64, usize>,
}

impl CellSystem {
    pub fn new(cells: Vec<(u64, f64)>) -> Result<Self> {
        let mut position = HashMap::new();
        for (i, &(id, mass)) in cells.iter().enumerate() {
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(Error::input(format!("cell {id} has non-positive mass {mass}")));
            }
            if position.insert(id, i).is_some() {
                return Err(Error::input(format!("duplicate cell identifier {id}")));
            }
        }
        Ok(Self { cells, position })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn mass(&self, id: u64) -> Result<f64> {
        self.position
            .get(&id)
            .map(|&i| self.cells[i].1)
            .ok_or_else(|| Error::input(format!("unknown cell identifier {id}")))
    }

    /// One draw of `M(E_i)` per cell, in cell order.
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        self.cells
            .iter()
            .map(|&(_, mass)| crate::rng::complex_normal(rng, mass))
            .collect()
    }
}

/// Kernel constant on products of cells. Slots `0..k` are holomorphic and
/// slots `k..k+l` antiholomorphic.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleKernel {
    pub order: WickIndex,
    pub coeffs: BTreeMap<Vec<u64>, Complex64>,
}

impl SimpleKernel {
    /// Rejects tuples of the wrong length and nonzero coefficients on
    /// tuples with a repeated cell.
    pub fn new(order: WickIndex, entries: impl IntoIterator<Item = (Vec<u64>, Complex64)>) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for (tuple, a) in entries {
            if tuple.len() != order.degree() {
                return Err(Error::input(format!(
                    "index tuple {tuple:?} does not match order ({}, {})",
                    order.k, order.l
                )));
            }
            if a == ZERO {
                continue;
            }
            if has_repeat(&tuple) {
                return Err(Error::input(format!(
                    "coefficient on repeated cell tuple {tuple:?} must be zero"
                )));
            }
            *coeffs.entry(tuple).or_insert(ZERO) += a;
        }
        Ok(Self { order, coeffs })
    }

    pub fn constant(a: Complex64) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(Vec::new(), a);
        Self {
            order: WickIndex::new(0, 0),
            coeffs,
        }
    }

    /// Coefficient-wise conjugate with slot roles swapped, so that
    /// `𝒥_{l,k}(f̄) = conj 𝒥_{k,l}(f)`.
    pub fn conj(&self) -> Self {
        let (k, l) = (self.order.k, self.order.l);
        let coeffs = self
            .coeffs
            .iter()
            .map(|(t, a)| {
                let mut s = t[k..].to_vec();
                s.extend_from_slice(&t[..k]);
                (s, a.conj())
            })
            .collect();
        Self {
            order: WickIndex::new(l, k),
            coeffs,
        }
    }

    /// `‖f‖² = Σ |a|² Π m(E_{i_j})`.
    pub fn norm_sq(&self, cells: &CellSystem) -> Result<f64> {
        let mut s = 0.0;
        for (t, a) in &self.coeffs {
            let mut w = a.norm_sqr();
            for id in t {
                w *= cells.mass(*id)?;
            }
            s += w;
        }
        Ok(s)
    }
}

fn has_repeat(t: &[u64]) -> bool {
    t.iter().enumerate().any(|(i, a)| t[..i].contains(a))
}

/// `𝒥_{k,l}(f)` at a fixed draw of the cell masses (`draws[i]` belongs to
/// the `i`-th cell of `cells`).
pub fn chaos_integral_eval(f: &SimpleKernel, cells: &CellSystem, draws: &[Complex64]) -> Result<Complex64> {
    let hermite = Hermite::new(f.order.degree().max(1));
    let k = f.order.k;
    let mut total = ZERO;
    for (t, a) in &f.coeffs {
        // (cell position, holomorphic count, antiholomorphic count)
        let mut counts: Vec<(usize, usize, usize)> = Vec::new();
        for (slot, id) in t.iter().enumerate() {
            let pos = *cells
                .position
                .get(id)
                .ok_or_else(|| Error::input(format!("unknown cell identifier {id}")))?;
            let entry = match counts.iter_mut().find(|e| e.0 == pos) {
                Some(e) => e,
                None => {
                    counts.push((pos, 0, 0));
                    counts.last_mut().unwrap()
                }
            };
            if slot < k {
                entry.1 += 1;
            } else {
                entry.2 += 1;
            }
        }
        let mut prod = *a;
        for (pos, hk, hl) in counts {
            prod *= hermite.eval_unchecked(hk, hl, draws[pos], cells.cells[pos].1);
        }
        total += prod;
    }
    Ok(total)
}

/// One sample of `𝒥_{k,l}(f)`.
pub fn chaos_integral_sample<R: RngCore + ?Sized>(
    f: &SimpleKernel,
    cells: &CellSystem,
    rng: &mut R,
) -> Result<Complex64> {
    for t in f.coeffs.keys() {
        for id in t {
            cells.mass(*id)?;
        }
    }
    let draws = cells.sample(rng);
    chaos_integral_eval(f, cells, &draws)
}

/// A contraction between the slots of two kernels. Each pair `(i, j)` joins
/// slot `i` of the first kernel with slot `j` of the second; one of the two
/// must be holomorphic and the other antiholomorphic.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<(usize, usize)>,
}

impl Pairing {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs }
    }

    fn validate(&self, f: WickIndex, g: WickIndex) -> Result<()> {
        let mut used_f = vec![false; f.degree()];
        let mut used_g = vec![false; g.degree()];
        for &(i, j) in &self.pairs {
            if i >= f.degree() || j >= g.degree() {
                return Err(Error::input(format!("pair ({i}, {j}) is out of range")));
            }
            if used_f[i] || used_g[j] {
                return Err(Error::input(format!("pair ({i}, {j}) reuses a slot")));
            }
            used_f[i] = true;
            used_g[j] = true;
            if (i < f.k) == (j < g.k) {
                return Err(Error::input(format!(
                    "pair ({i}, {j}) must join a holomorphic slot with an antiholomorphic one"
                )));
            }
        }
        Ok(())
    }

    /// All admissible pairings between orders `f` and `g`.
    pub fn enumerate(f: WickIndex, g: WickIndex) -> Vec<Pairing> {
        // Candidate pairs: f-holomorphic × g-antiholomorphic and
        // g-holomorphic × f-antiholomorphic.
        let mut cands = Vec::new();
        for i in 0..f.k {
            for j in g.k..g.degree() {
                cands.push((i, j));
            }
        }
        for i in f.k..f.degree() {
            for j in 0..g.k {
                cands.push((i, j));
            }
        }
        let mut out = Vec::new();
        let mut cur = Vec::new();
        fn rec(
            cands: &[(usize, usize)],
            start: usize,
            cur: &mut Vec<(usize, usize)>,
            out: &mut Vec<Pairing>,
        ) {
            out.push(Pairing::new(cur.clone()));
            for idx in start..cands.len() {
                let (i, j) = cands[idx];
                if cur.iter().any(|&(a, b)| a == i || b == j) {
                    continue;
                }
                cur.push((i, j));
                rec(cands, idx + 1, cur, out);
                cur.pop();
            }
        }
        rec(&cands, 0, &mut cur, &mut out);
        out
    }
}

/// `f ⊗_γ g`: paired slots are forced into a common cell and summed against
/// its mass. Remaining holomorphic slots come first (those of `f`, then those
/// of `g`), then the remaining antiholomorphic slots in the same order.
pub fn contract(f: &SimpleKernel, g: &SimpleKernel, gamma: &Pairing, cells: &CellSystem) -> Result<SimpleKernel> {
    gamma.validate(f.order, g.order)?;
    let r = gamma.pairs.len();
    let order = WickIndex::new(f.order.k + g.order.k - r, f.order.l + g.order.l - r);
    let paired_f: Vec<bool> = (0..f.order.degree())
        .map(|i| gamma.pairs.iter().any(|p| p.0 == i))
        .collect();
    let paired_g: Vec<bool> = (0..g.order.degree())
        .map(|j| gamma.pairs.iter().any(|p| p.1 == j))
        .collect();
    let mut coeffs: BTreeMap<Vec<u64>, Complex64> = BTreeMap::new();
    for (tf, af) in &f.coeffs {
        for (tg, ag) in &g.coeffs {
            if gamma.pairs.iter().any(|&(i, j)| tf[i] != tg[j]) {
                continue;
            }
            let mut w = af * ag;
            for &(i, _) in &gamma.pairs {
                w *= cells.mass(tf[i])?;
            }
            let mut t = Vec::with_capacity(order.degree());
            t.extend((0..f.order.k).filter(|&i| !paired_f[i]).map(|i| tf[i]));
            t.extend((0..g.order.k).filter(|&j| !paired_g[j]).map(|j| tg[j]));
            t.extend((f.order.k..f.order.degree()).filter(|&i| !paired_f[i]).map(|i| tf[i]));
            t.extend((g.order.k..g.order.degree()).filter(|&j| !paired_g[j]).map(|j| tg[j]));
            *coeffs.entry(t).or_insert(ZERO) += w;
        }
    }
    coeffs.retain(|_, a| *a != ZERO);
    Ok(SimpleKernel { order, coeffs })
}

/// `Σ_γ 𝒥(f ⊗_γ g)` at a fixed draw; equals `𝒥(f)·𝒥(g)`.
pub fn product_expansion(
    f: &SimpleKernel,
    g: &SimpleKernel,
    cells: &CellSystem,
    draws: &[Complex64],
) -> Result<Complex64> {
    let mut total = ZERO;
    for gamma in Pairing::enumerate(f.order, g.order) {
        total += chaos_integral_eval(&contract(f, g, &gamma, cells)?, cells, draws)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    const ONE: Complex64 = Complex64::new(1.0, 0.0);

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(hermite_eval(0, 0, c(3.0, 4.0), 7.0).unwrap(), ONE);
        assert!((hermite_eval(2, 1, c(2.0, 0.0), 1.0).unwrap() - c(4.0, 0.0)).norm() < 1e-14);
        let z = c(1.0, 1.0);
        assert!((hermite_dz(2, 1, z, 0.5).unwrap() - c(3.0, 0.0)).norm() < 1e-14);
        assert!((hermite_dzbar(2, 1, z, 0.5).unwrap() - c(0.0, 2.0)).norm() < 1e-14);
        assert_eq!(hermite_dz(1, 0, z, 0.3).unwrap(), ONE);
        assert!((h21(z, 0.5) - hermite_eval(2, 1, z, 0.5).unwrap()).norm() < 1e-15);
    }

    #[test]
    fn degree_ceiling() {
        assert!(matches!(hermite_eval(5, 4, ONE, 1.0), Err(Error::Config(_))));
        assert!(Hermite::new(12).eval(6, 6, ONE, 1.0).is_ok());
    }

    #[test]
    fn repeated_cells_rejected() {
        let r = SimpleKernel::new(WickIndex::new(1, 1), vec![(vec![3, 3], ONE)]);
        assert!(r.is_err());
        assert!(SimpleKernel::new(WickIndex::new(1, 1), vec![(vec![3, 3], ZERO)]).is_ok());
        assert!(SimpleKernel::new(WickIndex::new(1, 1), vec![(vec![3], ONE)]).is_err());
    }

    #[test]
    fn full_pairing_of_single_cell() {
        let cells = CellSystem::new(vec![(0, 2.5)]).unwrap();
        let f = SimpleKernel::new(WickIndex::new(1, 0), vec![(vec![0], ONE)]).unwrap();
        let g = SimpleKernel::new(WickIndex::new(0, 1), vec![(vec![0], ONE)]).unwrap();
        let out = contract(&f, &g, &Pairing::new(vec![(0, 0)]), &cells).unwrap();
        assert_eq!(out, SimpleKernel::constant(c(2.5, 0.0)));
        let empty = contract(&f, &g, &Pairing::default(), &cells).unwrap();
        assert_eq!(empty.order, WickIndex::new(1, 1));
    }

    #[test]
    fn malformed_pairings() {
        let cells = CellSystem::new(vec![(0, 1.0), (1, 1.0)]).unwrap();
        let f = SimpleKernel::new(WickIndex::new(1, 1), vec![(vec![0, 1], ONE)]).unwrap();
        assert!(contract(&f, &f, &Pairing::new(vec![(0, 0)]), &cells).is_err());
        assert!(contract(&f, &f, &Pairing::new(vec![(0, 5)]), &cells).is_err());
        assert!(contract(&f, &f, &Pairing::new(vec![(0, 1), (0, 1)]), &cells).is_err());
    }

    #[test]
    fn unknown_cell_is_an_input_error() {
        let cells = CellSystem::new(vec![(0, 1.0)]).unwrap();
        let f = SimpleKernel::new(WickIndex::new(1, 0), vec![(vec![9], ONE)]).unwrap();
        let mut s = rng::stream(0, 0, 0, 0);
        assert!(matches!(chaos_integral_sample(&f, &cells, &mut s), Err(Error::Input(_))));
        assert!(CellSystem::new(vec![(0, 1.0), (0, 2.0)]).is_err());
        assert!(CellSystem::new(vec![(0, 0.0)]).is_err());
    }

    #[test]
    fn product_formula_holds_pathwise() {
        let cells = CellSystem::new(vec![(0, 0.7), (1, 1.3), (2, 0.4)]).unwrap();
        let f = SimpleKernel::new(
            WickIndex::new(2, 1),
            vec![(vec![0, 1, 2], c(1.0, 0.5)), (vec![2, 0, 1], c(-0.3, 0.2))],
        )
        .unwrap();
        let g = SimpleKernel::new(
            WickIndex::new(1, 2),
            vec![(vec![1, 0, 2], c(0.4, -1.0)), (vec![0, 2, 1], c(2.0, 0.0))],
        )
        .unwrap();
        let mut s = rng::stream(11, 0, 0, 0);
        for _ in 0..20 {
            let d = cells.sample(&mut s);
            let lhs = chaos_integral_eval(&f, &cells, &d).unwrap() * chaos_integral_eval(&g, &cells, &d).unwrap();
            let rhs = product_expansion(&f, &g, &cells, &d).unwrap();
            assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn pairing_count_matches_hermite_product_formula() {
        // |𝒢(1,1;1,1)| = 1 + 1 + 1 + 1 (r1, r2 ∈ {0,1}).
        assert_eq!(Pairing::enumerate(WickIndex::new(1, 1), WickIndex::new(1, 1)).len(), 4);
        // (2,0) with (0,2): r1 ∈ {0,1,2} with 1 + 4 + 2 pairings.
        assert_eq!(Pairing::enumerate(WickIndex::new(2, 0), WickIndex::new(0, 2)).len(), 7);
    }
}
