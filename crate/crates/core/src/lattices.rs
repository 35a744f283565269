//! Unimodular lattices `Λ_g = g·ℤ^m`: LLL reduction, exact shortest-vector
//! enumeration, sublattice covolumes and the cusp depth `max(0, −log δ)`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::grouplin::{IntegerGroupElement, RealGroupElement};

/// Lovász parameter of the reduction.
pub const LLL_DELTA: f64 = 0.99;

/// Candidate budget of the shortest-vector enumeration.
pub const ENUMERATION_BUDGET: u64 = 100_000_000;

const LLL_SWAP_CAP: usize = 200_000;

/// A lattice of covolume one, stored with an LLL-reduced basis.
#[derive(Debug)]
pub struct UnimodularLattice {
    basis: DMatrix<f64>,
    reduced: DMatrix<f64>,
    change: IntegerGroupElement,
    shortest: OnceLock<Shortest>,
}

impl Clone for UnimodularLattice {
    fn clone(&self) -> Self {
        let shortest = OnceLock::new();
        if let Some(v) = self.shortest.get() {
            let _ = shortest.set(v.clone());
        }
        Self {
            basis: self.basis.clone(),
            reduced: self.reduced.clone(),
            change: self.change.clone(),
            shortest,
        }
    }
}

/// A shortest nonzero vector: its length and integer coordinates with
/// respect to the original basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Shortest {
    pub length: f64,
    pub coords: Vec<i64>,
}

impl UnimodularLattice {
    /// The lattice spanned by the columns of `basis`, rescaled to covolume
    /// one. Bases with non-positive determinant are rejected.
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let g = RealGroupElement::new(basis)?;
        Self::from_group(&g)
    }

    pub fn from_group(g: &RealGroupElement) -> Result<Self> {
        let basis = g.matrix().clone();
        let (reduced, change) = lll(&basis)?;
        Ok(Self {
            basis,
            reduced,
            change,
            shortest: OnceLock::new(),
        })
    }

    /// The standard lattice ℤ^m.
    pub fn standard(m: usize) -> Self {
        Self::from_group(&RealGroupElement::identity(m)).expect("identity is reduced")
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn reduced(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    /// Unimodular change of basis with `basis · change = reduced`.
    pub fn change(&self) -> &IntegerGroupElement {
        &self.change
    }

    /// The same lattice presented by its reduced basis.
    pub fn reduce_basis(&self) -> UnimodularLattice {
        let mut reduced = self.reduced.clone();
        if reduced.determinant() < 0.0 {
            negate_column(&mut reduced, 0);
        }
        let m = self.dim();
        let shortest = OnceLock::new();
        Self {
            basis: reduced.clone(),
            reduced,
            change: IntegerGroupElement::identity(m),
            shortest,
        }
    }

    /// The lattice `g·Λ`, computed from the reduced basis so that repeated
    /// translation stays well conditioned.
    pub fn translate(&self, g: &RealGroupElement) -> Result<UnimodularLattice> {
        let mut b = g.matrix() * &self.reduced;
        if b.determinant() < 0.0 {
            negate_column(&mut b, 0);
        }
        let (reduced, change) = lll(&b)?;
        Ok(Self {
            basis: b,
            reduced,
            change,
            shortest: OnceLock::new(),
        })
    }

    /// Length of a shortest nonzero vector together with a witness.
    pub fn shortest_vector(&self) -> Result<Shortest> {
        if let Some(s) = self.shortest.get() {
            return Ok(s.clone());
        }
        let s = self.compute_shortest()?;
        let _ = self.shortest.set(s.clone());
        Ok(s)
    }

    pub fn systole(&self) -> Result<f64> {
        Ok(self.shortest_vector()?.length)
    }

    /// Cusp depth `max(0, −log systole)`.
    pub fn depth(&self) -> Result<f64> {
        Ok((-self.systole()?.ln()).max(0.0))
    }

    fn compute_shortest(&self) -> Result<Shortest> {
        let m = self.dim();
        let (mut best_k, mut best2) = (0usize, f64::INFINITY);
        for k in 0..m {
            let n2 = self.reduced.column(k).norm_squared();
            if n2 < best2 {
                best2 = n2;
                best_k = k;
            }
        }
        let mut best_x = vec![0i64; m];
        best_x[best_k] = 1;
        let r = upper_factor(&self.reduced);
        enumerate(&r, best2, ENUMERATION_BUDGET, |x, n2, bound| {
            if n2 < *bound * (1.0 - 1e-13) {
                // recompute in the ambient space to avoid triangular rounding
                let v = vector_of(&self.reduced, x);
                let exact2 = v.norm_squared();
                if exact2 < best2 {
                    best2 = exact2;
                    best_x.copy_from_slice(x);
                    *bound = exact2;
                }
            }
        })?;
        Ok(Shortest {
            length: best2.sqrt(),
            coords: self.to_basis_coords(&best_x),
        })
    }

    /// All nonzero lattice vectors of length at most `radius`, one of each
    /// `±` pair, as coordinates in the original basis.
    pub fn short_vectors(&self, radius: f64, budget: u64) -> Result<Vec<Vec<i64>>> {
        let r = upper_factor(&self.reduced);
        let mut out = Vec::new();
        let r2 = radius * radius;
        enumerate(&r, r2 * (1.0 + 1e-12), budget, |x, _, _| {
            if first_nonzero_positive(x) {
                let v = vector_of(&self.reduced, x);
                if v.norm_squared() <= r2 {
                    out.push(self.to_basis_coords(x));
                }
            }
        })?;
        Ok(out)
    }

    /// Number of nonzero lattice vectors in the closed ball of radius `radius`.
    pub fn count_in_ball(&self, radius: f64, budget: u64) -> Result<usize> {
        Ok(2 * self.short_vectors(radius, budget)?.len())
    }

    /// Real vector with integer coordinates `coords` in the original basis.
    pub fn vector(&self, coords: &[i64]) -> DVector<f64> {
        vector_of(&self.basis, coords)
    }

    fn to_basis_coords(&self, x: &[i64]) -> Vec<i64> {
        let m = self.dim();
        (0..m)
            .map(|r| {
                let mut acc = BigInt::from(0);
                for (c, xi) in x.iter().enumerate() {
                    acc += self.change.entry(r, c) * BigInt::from(*xi);
                }
                i64::try_from(acc).expect("coordinates fit in i64")
            })
            .collect()
    }

    /// Covolume of the sublattice spanned by `vectors` (integer coordinates
    /// in the original basis): `√det Gram`.
    pub fn sublattice_covolume(&self, vectors: &[Vec<i64>]) -> Result<f64> {
        let m = self.dim();
        if vectors.is_empty() || vectors.len() > m {
            return Err(Error::InvalidArgument(format!("need 1..={m} vectors")));
        }
        for v in vectors {
            if v.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: v.len(),
                });
            }
        }
        let cols: Vec<DVector<f64>> = vectors.iter().map(|c| self.vector(c)).collect();
        let k = cols.len();
        let gram = DMatrix::from_fn(k, k, |i, j| cols[i].dot(&cols[j]));
        let det = gram.determinant();
        if det <= 1e-12 {
            return Err(Error::DependentVectors { gram_det: det });
        }
        Ok(det.sqrt())
    }
}

/// Hermite-type constant `√(1 + m/4)` bounding `systole ≤ c_m · covol^{1/m}`.
pub fn hermite_bound(m: usize) -> f64 {
    (1.0 + m as f64 / 4.0).sqrt()
}

/// Volume of the Euclidean ball of radius `r` in ℝ^m.
pub fn ball_volume(m: usize, r: f64) -> f64 {
    let half = m as f64 / 2.0;
    std::f64::consts::PI.powf(half) * r.powi(m as i32) / gamma(half + 1.0)
}

fn gamma(x: f64) -> f64 {
    // x is a positive half-integer here
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|k| k as f64).product()
    } else {
        let mut acc = std::f64::consts::PI.sqrt();
        let mut y = 0.5;
        while y < x - 1e-9 {
            acc *= y;
            y += 1.0;
        }
        acc
    }
}

fn first_nonzero_positive(x: &[i64]) -> bool {
    x.iter().rev().find(|&&v| v != 0).is_some_and(|&v| v > 0)
}

fn negate_column(b: &mut DMatrix<f64>, k: usize) {
    for r in 0..b.nrows() {
        b[(r, k)] = -b[(r, k)];
    }
}

fn vector_of(b: &DMatrix<f64>, x: &[i64]) -> DVector<f64> {
    let mut v = DVector::zeros(b.nrows());
    for (c, &xi) in x.iter().enumerate() {
        if xi != 0 {
            v += b.column(c) * xi as f64;
        }
    }
    v
}

/// Upper-triangular `R` with `‖Bx‖ = ‖Rx‖`.
fn upper_factor(b: &DMatrix<f64>) -> DMatrix<f64> {
    let r = b.clone().qr().r();
    r
}

/// Depth-first enumeration of nonzero `x ∈ ℤ^m` with `‖Rx‖² ≤ bound`. The
/// callback may shrink the bound.
fn enumerate(
    r: &DMatrix<f64>,
    bound: f64,
    budget: u64,
    mut visit: impl FnMut(&[i64], f64, &mut f64),
) -> Result<()> {
    let m = r.nrows();
    let mut bound = bound;
    let mut x = vec![0i64; m];
    let mut visited = 0u64;
    // partial[i] = Σ_{j>i} contributions to level i; rem[i] = remaining budget
    fn rec(
        level: usize,
        r: &DMatrix<f64>,
        x: &mut [i64],
        acc: f64,
        bound: &mut f64,
        visited: &mut u64,
        budget: u64,
        visit: &mut dyn FnMut(&[i64], f64, &mut f64),
    ) -> Result<()> {
        let m = r.nrows();
        let rii = r[(level, level)];
        let mut center = 0.0;
        for j in level + 1..m {
            center += r[(level, j)] * x[j] as f64;
        }
        let c = -center / rii;
        let slack = (*bound - acc).max(0.0);
        let w = slack.sqrt() / rii.abs();
        let lo = (c - w).ceil() as i64;
        let hi = (c + w).floor() as i64;
        for v in lo..=hi {
            *visited += 1;
            if *visited > budget {
                return Err(Error::EnumerationBudgetExceeded {
                    visited: *visited,
                    budget,
                });
            }
            x[level] = v;
            let t = rii * v as f64 + center;
            let acc2 = acc + t * t;
            if acc2 > *bound {
                continue;
            }
            if level == 0 {
                if x.iter().any(|&xi| xi != 0) {
                    visit(x, acc2, bound);
                }
            } else {
                rec(level - 1, r, x, acc2, bound, visited, budget, visit)?;
            }
        }
        x[level] = 0;
        Ok(())
    }
    rec(
        m - 1,
        r,
        &mut x,
        0.0,
        &mut bound,
        &mut visited,
        budget,
        &mut visit,
    )
}

/// LLL reduction of the columns of `b`. Returns the reduced basis (with
/// positive determinant) and the integer change of basis.
fn lll(b: &DMatrix<f64>) -> Result<(DMatrix<f64>, IntegerGroupElement)> {
    let m = b.ncols();
    let mut basis = b.clone();
    let mut u: Vec<Vec<i128>> = (0..m)
        .map(|k| (0..m).map(|r| i128::from(r == k)).collect())
        .collect();
    let mut k = 1usize;
    let mut swaps = 0usize;
    let (mut mu, mut bstar) = gram_schmidt(&basis);
    while k < m {
        for j in (0..k).rev() {
            let q = mu[(k, j)].round();
            if q != 0.0 {
                let qi = q as i128;
                for r in 0..m {
                    basis[(r, k)] -= q * basis[(r, j)];
                }
                for r in 0..m {
                    u[k][r] = u[k][r]
                        .checked_sub(
                            qi.checked_mul(u[j][r])
                                .ok_or(Error::IterationCapExceeded { cap: LLL_SWAP_CAP })?,
                        )
                        .ok_or(Error::IterationCapExceeded { cap: LLL_SWAP_CAP })?;
                }
                for l in 0..j {
                    mu[(k, l)] -= q * mu[(j, l)];
                }
                mu[(k, j)] -= q;
            }
        }
        if bstar[k] >= (LLL_DELTA - mu[(k, k - 1)].powi(2)) * bstar[k - 1] {
            k += 1;
        } else {
            basis.swap_columns(k, k - 1);
            u.swap(k, k - 1);
            swaps += 1;
            if swaps > LLL_SWAP_CAP {
                return Err(Error::IterationCapExceeded { cap: LLL_SWAP_CAP });
            }
            (mu, bstar) = gram_schmidt(&basis);
            k = (k - 1).max(1);
        }
    }
    let mut entries: Vec<BigInt> = vec![BigInt::from(0); m * m];
    for (c, col) in u.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            entries[r * m + c] = BigInt::from(*v);
        }
    }
    let mut change = IntegerGroupElement::from_entries_unchecked(m, entries);
    if basis.determinant() < 0.0 {
        negate_column(&mut basis, 0);
        for r in 0..m {
            let v = -change.entry(r, 0).clone();
            *change.entry_mut(r, 0) = v;
        }
    }
    // reduced = b · change exactly in integer terms; recompute to shed the
    // rounding accumulated during size reduction
    let cf = DMatrix::from_fn(m, m, |r, c| {
        num_traits::ToPrimitive::to_f64(change.entry(r, c)).unwrap_or(f64::NAN)
    });
    let fresh = b * cf;
    Ok((fresh, change))
}

fn gram_schmidt(b: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let m = b.ncols();
    let mut mu = DMatrix::zeros(m, m);
    let mut stars: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut norms = Vec::with_capacity(m);
    for i in 0..m {
        let mut v: DVector<f64> = b.column(i).into_owned();
        for j in 0..i {
            let coef = b.column(i).dot(&stars[j]) / norms[j];
            mu[(i, j)] = coef;
            v -= &stars[j] * coef;
        }
        norms.push(v.norm_squared());
        stars.push(v);
    }
    (mu, norms)
}

// ---------------------------------------------------------------------------
// Brute-force oracle

/// Largest coefficient box scanned by [`brute_force_systole`].
pub const BRUTE_FORCE_BUDGET: u64 = 50_000_000;

/// Systole of the lattice spanned by the columns of `basis` by scanning all
/// coefficient vectors in `[−B, B]^m`, `B = ⌊‖basis⁻¹‖·min_k |b_k|⌋`. Any
/// shortest vector `v = basis·c` has `|c_i| ≤ ‖basis⁻¹‖·|v| ≤ B`, so the box
/// is exhaustive. Returns the length and the box half-width.
///
/// When the box over the given basis is too large the basis is first run
/// through a greedy pairwise reduction (unrelated to [`UnimodularLattice`]'s
/// LLL) and the scan is repeated.
pub fn brute_force_systole(basis: &DMatrix<f64>) -> Result<(f64, i64)> {
    match scan_box(basis) {
        Err(Error::EnumerationBudgetExceeded { .. }) => scan_box(&pairwise_reduce(basis)),
        other => other,
    }
}

fn pairwise_reduce(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let m = basis.ncols();
    let mut b = basis.clone();
    for _ in 0..10_000 {
        let mut changed = false;
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let bj = b.column(j).into_owned();
                let q = (b.column(i).dot(&bj) / bj.norm_squared()).round();
                if q != 0.0 {
                    let reduced = b.column(i) - &bj * q;
                    if reduced.norm_squared() < b.column(i).norm_squared() {
                        b.set_column(i, &reduced);
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    b
}

fn scan_box(basis: &DMatrix<f64>) -> Result<(f64, i64)> {
    let m = basis.nrows();
    let inv = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular basis".into()))?;
    let inv_norm = inv.singular_values().max();
    let shortest_column = (0..m)
        .map(|k| basis.column(k).norm())
        .fold(f64::INFINITY, f64::min);
    let b = (inv_norm * shortest_column * (1.0 + 1e-9)).floor() as i64;
    let side = (2 * b + 1) as u64;
    let cells = side.checked_pow(m as u32).unwrap_or(u64::MAX);
    if cells > BRUTE_FORCE_BUDGET {
        return Err(Error::EnumerationBudgetExceeded {
            visited: cells,
            budget: BRUTE_FORCE_BUDGET,
        });
    }
    let mut best = f64::INFINITY;
    let mut c = vec![-b; m];
    let mut v = DVector::zeros(m);
    loop {
        if c.iter().any(|&x| x != 0) {
            v.fill(0.0);
            for (k, &ck) in c.iter().enumerate() {
                if ck != 0 {
                    v.axpy(ck as f64, &basis.column(k), 1.0);
                }
            }
            best = best.min(v.norm_squared());
        }
        let mut k = 0;
        loop {
            if k == m {
                return Ok((best.sqrt(), b));
            }
            if c[k] < b {
                c[k] += 1;
                break;
            }
            c[k] = -b;
            k += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Samplers

/// Random lattice from a basis with i.i.d. `U[−spread, spread]` entries,
/// sign-fixed to positive determinant and rescaled to covolume one.
pub fn random_box_lattice<R: rand::Rng + ?Sized>(
    m: usize,
    spread: f64,
    rng: &mut R,
) -> Result<UnimodularLattice> {
    loop {
        let mut b = DMatrix::from_fn(m, m, |_, _| rng.random_range(-spread..=spread));
        let det = b.determinant();
        if det.abs() < 1e-6 {
            continue;
        }
        if det < 0.0 {
            negate_column(&mut b, 0);
        }
        return UnimodularLattice::new(b);
    }
}

/// A uniformly random Hecke point of prime index `p` over ℤ^m: the lattice
/// `{x : x_m ≡ Σ c_i x_i mod p}` for uniform `c`, rescaled to covolume one.
/// For large `p` these equidistribute toward the Haar measure.
pub fn random_hecke_lattice<R: rand::Rng + ?Sized>(
    m: usize,
    p: u64,
    rng: &mut R,
) -> Result<UnimodularLattice> {
    let mut b = DMatrix::<f64>::identity(m, m);
    for i in 0..m - 1 {
        b[(m - 1, i)] = rng.random_range(0..p) as f64;
    }
    b[(m - 1, m - 1)] = p as f64;
    UnimodularLattice::new(b)
}

pub const HECKE_PRIME: u64 = 1_000_003;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouplin::{a_t, elementary, random_rotation};
    use crate::rng::atom_rng;

    #[test]
    fn standard_lattice() {
        for m in 2..=5 {
            let l = UnimodularLattice::standard(m);
            assert!((l.systole().unwrap() - 1.0).abs() < 1e-15);
            assert_eq!(l.depth().unwrap(), 0.0);
        }
    }

    #[test]
    fn diagonal_lattices() {
        let l =
            UnimodularLattice::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5])).unwrap();
        assert!((l.systole().unwrap() - 0.5).abs() < 1e-15);
        let e = std::f64::consts::E;
        let l = UnimodularLattice::new(DMatrix::from_row_slice(
            2,
            2,
            &[e.powi(-2), 0.0, 0.0, e.powi(2)],
        ))
        .unwrap();
        assert!((l.depth().unwrap() - 2.0).abs() < 1e-12);
        for t in [0.0, 1.0, 5.0, 20.0] {
            let l = UnimodularLattice::from_group(&a_t(2, t)).unwrap();
            assert!((l.depth().unwrap() - t / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn reduction_examples() {
        let l = UnimodularLattice::standard(3);
        assert_eq!(l.reduce_basis().basis(), l.basis());
        let skew =
            UnimodularLattice::new(DMatrix::from_row_slice(2, 2, &[1.0, 1e6, 0.0, 1.0])).unwrap();
        let red = skew.reduce_basis();
        assert!(red.basis().column(0).norm() <= 2.0);
        // Lagrange reduction oracle in rank two
        let lag = lagrange(
            skew.basis().column(0).into_owned(),
            skew.basis().column(1).into_owned(),
        );
        assert!((red.systole().unwrap() - lag).abs() < 1e-9);
        assert_eq!(red.systole().unwrap(), skew.systole().unwrap());
        let back = skew.basis() * skew.change().to_real().matrix();
        assert!((back - skew.reduced()).norm() < 1e-6);
    }

    fn lagrange(mut u: DVector<f64>, mut v: DVector<f64>) -> f64 {
        loop {
            if v.norm() < u.norm() {
                std::mem::swap(&mut u, &mut v);
            }
            let q = (u.dot(&v) / u.norm_squared()).round();
            if q == 0.0 {
                return u.norm();
            }
            v -= &u * q;
        }
    }

    #[test]
    fn covolumes() {
        let l = UnimodularLattice::standard(3);
        let full = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        assert!((l.sublattice_covolume(&full).unwrap() - 1.0).abs() < 1e-12);
        assert!((l.sublattice_covolume(&[vec![3, 4, 0]]).unwrap() - 5.0).abs() < 1e-12);
        assert!(
            (l.sublattice_covolume(&[vec![1, 0, 0], vec![0, 2, 0]])
                .unwrap()
                - 2.0)
                .abs()
                < 1e-12
        );
        assert!(matches!(
            l.sublattice_covolume(&[vec![1, 1, 0], vec![2, 2, 0]]),
            Err(Error::DependentVectors { .. })
        ));
    }

    #[test]
    fn systole_invariances() {
        let mut rng = atom_rng(1, 77, 0);
        for _ in 0..1000 {
            let l = random_box_lattice(3, 2.0, &mut rng).unwrap();
            let s = l.systole().unwrap();
            let k = random_rotation(3, &mut rng);
            let rotated = UnimodularLattice::from_group(&RealGroupElement::from_matrix_unchecked(
                k.matrix() * l.basis(),
            ))
            .unwrap();
            assert!((rotated.systole().unwrap() - s).abs() < 1e-9);
            let gamma = &elementary(3, 1, 2, 3).unwrap() * &elementary(3, 3, 1, -2).unwrap();
            let moved = UnimodularLattice::new(l.basis() * gamma.to_real().matrix()).unwrap();
            assert!((moved.systole().unwrap() - s).abs() < 1e-9);
        }
    }

    #[test]
    fn witness_attains_systole() {
        let mut rng = atom_rng(2, 77, 0);
        for _ in 0..200 {
            let l = random_box_lattice(4, 2.0, &mut rng).unwrap();
            let sv = l.shortest_vector().unwrap();
            assert!((l.vector(&sv.coords).norm() - sv.length).abs() < 1e-9);
        }
    }

    #[test]
    fn hermite_bound_on_sublattices() {
        let mut rng = atom_rng(3, 77, 0);
        let m = 3;
        let c = hermite_bound(m);
        for _ in 0..1000 {
            let l = random_box_lattice(m, 2.0, &mut rng).unwrap();
            let s = l.systole().unwrap();
            let radius = (0..m)
                .map(|k| l.reduced().column(k).norm())
                .fold(0.0, f64::max);
            let short = l.short_vectors(radius, 10_000_000).unwrap();
            // rank 1: the systole itself; rank m: covolume one
            assert!(s <= c);
            // rank 2: minimal area among pairs of short vectors
            let mut best = f64::INFINITY;
            for a in 0..short.len() {
                for b in a + 1..short.len() {
                    if let Ok(cv) = l.sublattice_covolume(&[short[a].clone(), short[b].clone()]) {
                        best = best.min(cv);
                    }
                }
            }
            assert!(s <= c * best.sqrt() + 1e-12);
        }
    }

    #[test]
    fn siegel_mean_under_hecke_sampling() {
        let (m, r, n) = (3, 1.5, 4000);
        let counts: Vec<f64> =
            crate::rng::par_sample(4, crate::rng::streams::HECKE, n, |_, rng| {
                random_hecke_lattice(m, HECKE_PRIME, rng)
                    .unwrap()
                    .count_in_ball(r, 10_000_000)
                    .unwrap() as f64
            });
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let vol = ball_volume(m, r);
        assert!(
            (mean - vol).abs() < 4.0 * se,
            "mean {mean} vs {vol} (se {se})"
        );
    }

    #[test]
    fn ball_volumes() {
        assert!((ball_volume(2, 1.0) - std::f64::consts::PI).abs() < 1e-12);
        assert!((ball_volume(3, 1.0) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-12);
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((ball_volume(4, 2.0) - 8.0 * pi2).abs() < 1e-9);
    }

    #[test]
    fn brute_force_matches_enumeration() {
        for i in 0..50 {
            let mut rng = atom_rng(11, 0, i);
            let l = random_box_lattice(3, 1.0, &mut rng).unwrap();
            let (b, _) = brute_force_systole(l.basis()).unwrap();
            assert!((b - l.systole().unwrap()).abs() < 1e-9);
        }
    }
}
