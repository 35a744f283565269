//! Linear algebra for SL(m,ℝ) and SL(m,ℤ): group elements, roots, Cartan
//! vectors, distinguished subgroups and the symmetric-space distance.
//!
//! Index convention: roots and elementary matrices use 1-based labels
//! `(i, j)` with `1 ≤ i ≠ j ≤ m`; raw matrix access (`entry`, `DMatrix`
//! indexing) is 0-based.

use std::fmt;
use std::ops::Mul;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Tolerance on `|det − 1|` accepted for float group elements.
pub const DET_TOL: f64 = 1e-9;

/// Number of float multiplications between determinant renormalizations.
pub const RENORMALIZE_EVERY: usize = 64;

// ---------------------------------------------------------------------------
// Real group elements

/// An element of SL(m,ℝ) stored as 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct RealGroupElement {
    entries: DMatrix<f64>,
}

impl RealGroupElement {
    /// Build from a square matrix with positive determinant, rescaling by
    /// `det^{-1/m}` so the result has determinant one.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let m = entries.nrows();
        if m != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: entries.ncols(),
            });
        }
        if m < 2 {
            return Err(Error::InvalidArgument(format!("dimension {m} < 2")));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::Degenerate("non-finite entry".into()));
        }
        let det = entries.determinant();
        if !det.is_finite() || det <= 1e-300 {
            return Err(Error::NotUnimodular {
                det: format!("{det:e}"),
            });
        }
        let mut g = Self { entries };
        g.rescale_det(det);
        Ok(g)
    }

    /// Build from row-major entries.
    pub fn from_rows(m: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != m * m {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                got: rows.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(m, m, rows))
    }

    /// Wrap a matrix known to lie in SL(m,ℝ) up to rounding.
    pub(crate) fn from_matrix_unchecked(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    pub fn identity(m: usize) -> Self {
        Self {
            entries: DMatrix::identity(m, m),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn det(&self) -> f64 {
        self.entries.determinant()
    }

    fn rescale_det(&mut self, det: f64) {
        let m = self.dim() as f64;
        if (det - 1.0).abs() > 0.0 {
            let scale = det.powf(-1.0 / m);
            self.entries *= scale;
        }
    }

    /// Rescale by `det^{-1/m}`; a no-op in exact arithmetic.
    pub fn renormalize(&mut self) {
        let det = self.det();
        if det > 0.0 && det.is_finite() {
            self.rescale_det(det);
        }
    }

    pub fn inverse(&self) -> RealGroupElement {
        let m = self.dim();
        let inv = if m == 2 {
            let e = &self.entries;
            let det = e[(0, 0)] * e[(1, 1)] - e[(0, 1)] * e[(1, 0)];
            DMatrix::from_row_slice(
                2,
                2,
                &[
                    e[(1, 1)] / det,
                    -e[(0, 1)] / det,
                    -e[(1, 0)] / det,
                    e[(0, 0)] / det,
                ],
            )
        } else {
            self.entries
                .clone()
                .try_inverse()
                .expect("unimodular matrices are invertible")
        };
        Self { entries: inv }
    }

    pub fn transpose(&self) -> RealGroupElement {
        Self {
            entries: self.entries.transpose(),
        }
    }

    /// Operator norm of `self − other`.
    pub fn dist_op(&self, other: &RealGroupElement) -> f64 {
        (&self.entries - &other.entries).norm()
    }
}

impl Mul for &RealGroupElement {
    type Output = RealGroupElement;
    fn mul(self, rhs: &RealGroupElement) -> RealGroupElement {
        RealGroupElement {
            entries: &self.entries * &rhs.entries,
        }
    }
}

impl Mul for RealGroupElement {
    type Output = RealGroupElement;
    fn mul(self, rhs: RealGroupElement) -> RealGroupElement {
        &self * &rhs
    }
}

/// Running left product `g_n ⋯ g_1` with periodic determinant correction.
#[derive(Clone, Debug)]
pub struct GroupProduct {
    acc: RealGroupElement,
    since_renorm: usize,
}

impl GroupProduct {
    pub fn new(m: usize) -> Self {
        Self {
            acc: RealGroupElement::identity(m),
            since_renorm: 0,
        }
    }

    pub fn push_left(&mut self, g: &RealGroupElement) {
        self.acc = g * &self.acc;
        self.since_renorm += 1;
        if self.since_renorm == RENORMALIZE_EVERY {
            self.acc.renormalize();
            self.since_renorm = 0;
        }
    }

    pub fn value(&self) -> &RealGroupElement {
        &self.acc
    }
}

// ---------------------------------------------------------------------------
// Integer group elements

/// An element of SL(m,ℤ) with arbitrary-precision entries.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IntegerGroupElement {
    dim: usize,
    entries: Vec<BigInt>,
}

impl IntegerGroupElement {
    /// Build from row-major entries; the determinant must be exactly one.
    pub fn new(dim: usize, entries: Vec<BigInt>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let g = Self { dim, entries };
        let det = g.det();
        if !det.is_one() {
            return Err(Error::NotUnimodular {
                det: det.to_string(),
            });
        }
        Ok(g)
    }

    pub fn from_i64(dim: usize, rows: &[i64]) -> Result<Self> {
        Self::new(dim, rows.iter().map(|&x| BigInt::from(x)).collect())
    }

    pub(crate) fn from_entries_unchecked(dim: usize, entries: Vec<BigInt>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        Self { dim, entries }
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![BigInt::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = BigInt::one();
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// 0-based entry access.
    pub fn entry(&self, row: usize, col: usize) -> &BigInt {
        &self.entries[row * self.dim + col]
    }

    pub(crate) fn entry_mut(&mut self, row: usize, col: usize) -> &mut BigInt {
        &mut self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[BigInt] {
        &self.entries
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.dim)
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> BigInt {
        bareiss_det(self.dim, self.entries.clone())
    }

    /// Exact inverse; for determinant one this is the adjugate.
    pub fn inverse(&self) -> IntegerGroupElement {
        let m = self.dim;
        if m == 2 {
            let (a, b, c, d) = (
                self.entry(0, 0),
                self.entry(0, 1),
                self.entry(1, 0),
                self.entry(1, 1),
            );
            return Self {
                dim: 2,
                entries: vec![d.clone(), -b, -c, a.clone()],
            };
        }
        let mut adj = vec![BigInt::zero(); m * m];
        for r in 0..m {
            for c in 0..m {
                let mut minor = Vec::with_capacity((m - 1) * (m - 1));
                for i in (0..m).filter(|&i| i != r) {
                    for j in (0..m).filter(|&j| j != c) {
                        minor.push(self.entry(i, j).clone());
                    }
                }
                let cof = bareiss_det(m - 1, minor);
                // adj[c][r] = (-1)^{r+c} det(minor_{r,c})
                adj[c * m + r] = if (r + c) % 2 == 0 { cof } else { -cof };
            }
        }
        Self {
            dim: m,
            entries: adj,
        }
    }

    pub fn neg(&self) -> IntegerGroupElement {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|x| -x).collect(),
        }
    }

    pub fn to_real(&self) -> RealGroupElement {
        let m = self.dim;
        let data: Vec<f64> = self
            .entries
            .iter()
            .map(|x| x.to_f64().unwrap_or(f64::NAN))
            .collect();
        RealGroupElement::from_matrix_unchecked(DMatrix::from_row_slice(m, m, &data))
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> BigInt {
        self.entries
            .iter()
            .map(|x| x.abs())
            .max()
            .unwrap_or_default()
    }

    /// Natural log of the operator norm, valid for entries of any size.
    pub fn log_norm(&self) -> f64 {
        let bits = self.max_abs().bits();
        let shift = bits.saturating_sub(900);
        let m = self.dim;
        let data: Vec<f64> = self
            .entries
            .iter()
            .map(|x| (x >> shift).to_f64().unwrap_or(0.0))
            .collect();
        let mat = DMatrix::from_row_slice(m, m, &data);
        let sv = mat.singular_values();
        let top = sv.iter().cloned().fold(0.0, f64::max);
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }

    /// Row operation `row_i += k · row_j` (0-based), i.e. left
    /// multiplication by the elementary matrix with `k` at `(i, j)`.
    pub(crate) fn row_add(&mut self, i: usize, j: usize, k: &BigInt) {
        let m = self.dim;
        for c in 0..m {
            let v = &self.entries[j * m + c] * k;
            self.entries[i * m + c] += v;
        }
    }

    /// Column operation `col_j += k · col_i` (0-based), i.e. right
    /// multiplication by the elementary matrix with `k` at `(i, j)`.
    pub(crate) fn col_add(&mut self, i: usize, j: usize, k: &BigInt) {
        let m = self.dim;
        for r in 0..m {
            let v = &self.entries[r * m + i] * k;
            self.entries[r * m + j] += v;
        }
    }
}

impl Mul for &IntegerGroupElement {
    type Output = IntegerGroupElement;
    fn mul(self, rhs: &IntegerGroupElement) -> IntegerGroupElement {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        let m = self.dim;
        let mut out = vec![BigInt::zero(); m * m];
        for r in 0..m {
            for k in 0..m {
                let a = &self.entries[r * m + k];
                if a.is_zero() {
                    continue;
                }
                for c in 0..m {
                    out[r * m + c] += a * &rhs.entries[k * m + c];
                }
            }
        }
        IntegerGroupElement {
            dim: m,
            entries: out,
        }
    }
}

impl Mul for IntegerGroupElement {
    type Output = IntegerGroupElement;
    fn mul(self, rhs: IntegerGroupElement) -> IntegerGroupElement {
        &self * &rhs
    }
}

impl fmt::Display for IntegerGroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.dim;
        write!(f, "[")?;
        for r in 0..m {
            if r > 0 {
                write!(f, "; ")?;
            }
            for c in 0..m {
                if c > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.entry(r, c))?;
            }
        }
        write!(f, "]")
    }
}

fn bareiss_det(m: usize, mut a: Vec<BigInt>) -> BigInt {
    if m == 0 {
        return BigInt::one();
    }
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..m - 1 {
        if a[k * m + k].is_zero() {
            let Some(p) = (k + 1..m).find(|&r| !a[r * m + k].is_zero()) else {
                return BigInt::zero();
            };
            for c in 0..m {
                a.swap(k * m + c, p * m + c);
            }
            sign = -sign;
        }
        for i in k + 1..m {
            for j in k + 1..m {
                let v = &a[i * m + j] * &a[k * m + k] - &a[i * m + k] * &a[k * m + j];
                a[i * m + j] = v / &prev;
            }
        }
        prev = a[k * m + k].clone();
    }
    sign * &a[m * m - 1]
}

/// The elementary matrix `E_{i,j}^k` (1-based labels).
pub fn elementary(
    m: usize,
    i: usize,
    j: usize,
    k: impl Into<BigInt>,
) -> Result<IntegerGroupElement> {
    check_pair(m, i, j)?;
    let mut g = IntegerGroupElement::identity(m);
    *g.entry_mut(i - 1, j - 1) = k.into();
    Ok(g)
}

fn check_pair(m: usize, i: usize, j: usize) -> Result<()> {
    if i == j || i == 0 || j == 0 || i > m || j > m {
        return Err(Error::InvalidIndex { i, j, m });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Roots and the Cartan subalgebra

/// The root `β_{i,j}`: evaluates to `t_i − t_j` on a Cartan vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Root {
    pub i: usize,
    pub j: usize,
}

impl Root {
    pub fn new(m: usize, i: usize, j: usize) -> Result<Self> {
        check_pair(m, i, j)?;
        Ok(Self { i, j })
    }

    /// The highest root `β_{1,m}`.
    pub fn highest(m: usize) -> Self {
        Self { i: 1, j: m }
    }

    /// The simple root `α_k = β_{k,k+1}`.
    pub fn simple(k: usize) -> Self {
        Self { i: k, j: k + 1 }
    }

    pub fn negate(self) -> Self {
        Self {
            i: self.j,
            j: self.i,
        }
    }

    pub fn eval(&self, v: &CartanVector) -> f64 {
        v.t[self.i - 1] - v.t[self.j - 1]
    }
}

/// A trace-zero diagonal vector in 𝔞.
#[derive(Clone, Debug, PartialEq)]
pub struct CartanVector {
    t: Vec<f64>,
}

impl CartanVector {
    pub const TRACE_TOL: f64 = 1e-12;

    pub fn new(t: Vec<f64>) -> Result<Self> {
        let sum: f64 = t.iter().sum();
        let scale = t.iter().map(|x| x.abs()).fold(1.0, f64::max);
        if !(sum.abs() <= Self::TRACE_TOL * scale) || t.len() < 2 {
            return Err(Error::NotTraceZero { sum });
        }
        Ok(Self { t })
    }

    pub fn zero(m: usize) -> Self {
        Self { t: vec![0.0; m] }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.t
    }

    pub fn dim(&self) -> usize {
        self.t.len()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            t: self.t.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &CartanVector) -> Self {
        Self {
            t: self.t.iter().zip(&other.t).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.t.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    /// Generator of `a^t = diag(e^{t/2}, e^{−t/2}, 1, …, 1)`.
    pub fn a_generator(m: usize) -> Self {
        let mut t = vec![0.0; m];
        t[0] = 0.5;
        t[1] = -0.5;
        Self { t }
    }

    /// Generator of `b^s = diag(e^s, …, e^s, e^{−s(m−1)})`.
    pub fn b_generator(m: usize) -> Self {
        let mut t = vec![1.0; m];
        t[m - 1] = -((m - 1) as f64);
        Self { t }
    }

    /// Generator of `c_i` (`1 ≤ i ≤ m − 3`): `e_{i+1} − e_{i+2}`. Together with
    /// `a` and `b` these span 𝔞 and every `c_i` has `(m,m)`-entry one.
    pub fn c_generator(m: usize, i: usize) -> Result<Self> {
        if i == 0 || i + 3 > m {
            return Err(Error::InvalidArgument(format!(
                "c_{i} undefined for m = {m}"
            )));
        }
        let mut t = vec![0.0; m];
        t[i] = 1.0;
        t[i + 1] = -1.0;
        Ok(Self { t })
    }
}

/// `diag(e^{v_1}, …, e^{v_m})`.
pub fn cartan_element(v: &CartanVector) -> RealGroupElement {
    let m = v.dim();
    let mut e = DMatrix::zeros(m, m);
    for (k, x) in v.t.iter().enumerate() {
        e[(k, k)] = x.exp();
    }
    RealGroupElement::from_matrix_unchecked(e)
}

pub fn a_t(m: usize, t: f64) -> RealGroupElement {
    cartan_element(&CartanVector::a_generator(m).scaled(t))
}

pub fn b_s(m: usize, s: f64) -> RealGroupElement {
    cartan_element(&CartanVector::b_generator(m).scaled(s))
}

/// The one-parameter unipotent subgroup `U^{β}(s) = Id + s·e_{ij}`.
pub fn exp_root(m: usize, root: Root, s: f64) -> RealGroupElement {
    let mut e = DMatrix::identity(m, m);
    e[(root.i - 1, root.j - 1)] = s;
    RealGroupElement::from_matrix_unchecked(e)
}

/// Embed `[[a, b], [c, d]]` into the copy `H_{i,j}` of SL(2,ℝ).
pub fn sl2_embed(m: usize, block: [f64; 4], i: usize, j: usize) -> Result<RealGroupElement> {
    check_pair(m, i, j)?;
    let [a, b, c, d] = block;
    let det = a * d - b * c;
    if (det - 1.0).abs() > DET_TOL {
        return Err(Error::NotUnimodular {
            det: format!("{det:e}"),
        });
    }
    let mut e = DMatrix::identity(m, m);
    let (i, j) = (i - 1, j - 1);
    e[(i, i)] = a;
    e[(i, j)] = b;
    e[(j, i)] = c;
    e[(j, j)] = d;
    Ok(RealGroupElement::from_matrix_unchecked(e))
}

/// Rotation by `theta` in the `(i, j)` coordinate plane (1-based).
pub fn plane_rotation(m: usize, i: usize, j: usize, theta: f64) -> Result<RealGroupElement> {
    let (s, c) = theta.sin_cos();
    sl2_embed(m, [c, -s, s, c], i, j)
}

// ---------------------------------------------------------------------------
// Norms and the symmetric-space distance

/// Logarithms of the singular values, in decreasing order.
///
/// Values below one are taken from the inverse so that very unbalanced
/// elements (e.g. `E^k` with `k ~ 10^9`) keep full relative precision.
pub fn log_singular_values(g: &RealGroupElement) -> Vec<f64> {
    let m = g.dim();
    let mut top: Vec<f64> = g.matrix().singular_values().iter().cloned().collect();
    top.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut inv: Vec<f64> = g
        .inverse()
        .matrix()
        .singular_values()
        .iter()
        .cloned()
        .collect();
    inv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (0..m)
        .map(|k| {
            if top[k] >= 1.0 {
                top[k].ln()
            } else {
                -inv[m - 1 - k].ln()
            }
        })
        .collect()
}

/// `d(g, Id) = √2 · ‖(log σ_1(g), …, log σ_m(g))‖₂`.
pub fn symmetric_distance(g: &RealGroupElement) -> f64 {
    let ls = log_singular_values(g);
    std::f64::consts::SQRT_2 * ls.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `d(g, h) = d(g·h^{−1}, Id)`.
pub fn distance(g: &RealGroupElement, h: &RealGroupElement) -> f64 {
    symmetric_distance(&(g * &h.inverse()))
}

/// Operator norm and conorm `m(g) = ‖g^{−1}‖^{−1}`.
pub fn norm_conorm(g: &RealGroupElement) -> (f64, f64) {
    let sv = g.matrix().singular_values();
    let norm = sv.iter().cloned().fold(0.0, f64::max);
    let inv_norm = g
        .inverse()
        .matrix()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    (norm, 1.0 / inv_norm)
}

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 2 && m.ncols() == 2 {
        // closed form for 2×2: largest singular value
        let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
        let s = a * a + b * b + c * c + d * d;
        let det = (a * d - b * c).abs();
        let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
        return ((s + disc) / 2.0).sqrt();
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

/// Haar-random rotation in SO(m) from a Gaussian QR factorization.
pub fn random_rotation<R: rand::Rng + ?Sized>(m: usize, rng: &mut R) -> RealGroupElement {
    let g = DMatrix::from_fn(m, m, |_, _| gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..m {
        if r[(k, k)] < 0.0 {
            for row in 0..m {
                q[(row, k)] = -q[(row, k)];
            }
        }
    }
    if q.determinant() < 0.0 {
        for row in 0..m {
            q[(row, 0)] = -q[(row, 0)];
        }
    }
    RealGroupElement::from_matrix_unchecked(q)
}

/// Gaussian matrix with entries of scale `spread`, sign-fixed and rescaled
/// to determinant one. Draws with `|det| < 1e-3` are rejected.
pub fn random_gaussian_element<R: rand::Rng + ?Sized>(
    m: usize,
    rng: &mut R,
    spread: f64,
) -> RealGroupElement {
    loop {
        let mut raw = DMatrix::from_fn(m, m, |_, _| spread * gaussian(rng));
        let det = raw.determinant();
        if det.abs() < 1e-3 {
            continue;
        }
        if det < 0.0 {
            for r in 0..m {
                raw[(r, 0)] = -raw[(r, 0)];
            }
        }
        if let Ok(g) = RealGroupElement::new(raw) {
            return g;
        }
    }
}

/// Standard normal variate (Box–Muller).
pub(crate) fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::atom_rng;
    use approx_eq::close;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol
        }
    }

    #[test]
    fn elementary_basics() {
        assert!(elementary(3, 1, 2, 0).unwrap().is_identity());
        let e = elementary(2, 1, 2, 5).unwrap();
        assert_eq!(e, IntegerGroupElement::from_i64(2, &[1, 5, 0, 1]).unwrap());
        assert!(matches!(
            elementary(3, 2, 2, 1),
            Err(Error::InvalidIndex { .. })
        ));
    }

    #[test]
    fn commutator_identity() {
        for (a, b) in [(2i64, 3i64), (-4, 7), (0, 5), (11, -13)] {
            let lhs = &(&(&elementary(3, 1, 3, a).unwrap() * &elementary(3, 3, 2, b).unwrap())
                * &elementary(3, 1, 3, -a).unwrap())
                * &elementary(3, 3, 2, -b).unwrap();
            assert_eq!(lhs, elementary(3, 1, 2, a * b).unwrap());
        }
    }

    #[test]
    fn integer_inverse_and_det() {
        let g = IntegerGroupElement::from_i64(3, &[2, 3, 1, 1, 2, 1, 0, 0, 1]).unwrap();
        assert_eq!(&g * &g.inverse(), IntegerGroupElement::identity(3));
        assert!(IntegerGroupElement::from_i64(2, &[2, 0, 0, 1]).is_err());
    }

    #[test]
    fn exp_root_is_a_one_parameter_group() {
        let r = Root::new(3, 1, 3).unwrap();
        assert_eq!(exp_root(3, r, 0.0), RealGroupElement::identity(3));
        let p = &exp_root(3, r, 1.5) * &exp_root(3, r, 1.0);
        assert!(p.dist_op(&exp_root(3, r, 2.5)) < 1e-15);
        let r12 = Root::new(2, 1, 2).unwrap();
        let q = &exp_root(2, r12, 1.0) * &exp_root(2, r12, -1.0);
        assert!(q.dist_op(&RealGroupElement::identity(2)) < 1e-15);
        assert_eq!(exp_root(3, r, 2.5).matrix()[(0, 2)], 2.5);
    }

    #[test]
    fn cartan_constructors() {
        assert_eq!(
            cartan_element(&CartanVector::zero(3)),
            RealGroupElement::identity(3)
        );
        let a = a_t(2, 2.0);
        assert!(close(a.matrix()[(0, 0)], 1f64.exp(), 1e-15));
        assert!(close(a.matrix()[(1, 1)], (-1f64).exp(), 1e-15));
        let b = b_s(3, 1.0);
        assert!(close(b.matrix()[(0, 0)], 1f64.exp(), 1e-15));
        assert!(close(b.matrix()[(1, 1)], 1f64.exp(), 1e-15));
        assert!(close(b.matrix()[(2, 2)], (-2f64).exp(), 1e-15));
        assert!(CartanVector::new(vec![1.0, 0.5]).is_err());
        let c = cartan_element(&CartanVector::c_generator(5, 2).unwrap());
        assert_eq!(c.matrix()[(4, 4)], 1.0);
        assert_eq!(Root::highest(4).eval(&CartanVector::b_generator(4)), 4.0);
    }

    #[test]
    fn sl2_embedding() {
        assert_eq!(
            sl2_embed(3, [1.0, 0.0, 0.0, 1.0], 1, 2).unwrap(),
            RealGroupElement::identity(3)
        );
        let u = sl2_embed(2, [1.0, 1.0, 0.0, 1.0], 1, 2).unwrap();
        assert_eq!(u, elementary(2, 1, 2, 1).unwrap().to_real());
        let w = sl2_embed(4, [0.0, -1.0, 1.0, 0.0], 2, 3).unwrap();
        assert!(close(w.det(), 1.0, 1e-15));
        assert_eq!(w.matrix()[(1, 2)], -1.0);
        assert_eq!(w.matrix()[(2, 1)], 1.0);
        assert!(sl2_embed(3, [2.0, 0.0, 0.0, 1.0], 1, 2).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(symmetric_distance(&RealGroupElement::identity(3)), 0.0);
        assert!(close(symmetric_distance(&a_t(2, 3.0)), 3.0, 1e-12));
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        let e = elementary(2, 1, 2, 1).unwrap().to_real();
        assert!(close(symmetric_distance(&e), 2.0 * golden.ln(), 1e-12));
        assert!(close(2.0 * golden.ln(), 0.9624, 1e-4));
    }

    #[test]
    fn norm_conorm_examples() {
        let (n, c) = norm_conorm(&RealGroupElement::identity(3));
        assert!(close(n, 1.0, 1e-14) && close(c, 1.0, 1e-14));
        let d = RealGroupElement::from_rows(2, &[2.0, 0.0, 0.0, 0.5]).unwrap();
        let (n, c) = norm_conorm(&d);
        assert!(close(n, 2.0, 1e-14) && close(c, 0.5, 1e-14));
        let mut rng = atom_rng(3, 99, 0);
        for _ in 0..100 {
            let g = random_gaussian_element(4, &mut rng, 1.0);
            let (_, conorm) = norm_conorm(&g);
            let direct = g.matrix().clone().try_inverse().unwrap();
            let direct_norm = direct.singular_values().max();
            assert!(close(conorm, 1.0 / direct_norm, 1e-9 * conorm.max(1.0)));
        }
    }

    #[test]
    fn metric_invariances() {
        let mut rng = atom_rng(5, 99, 1);
        for _ in 0..1000 {
            let m = 2 + (rand::Rng::random::<u32>(&mut rng) % 3) as usize;
            let g = random_gaussian_element(m, &mut rng, 0.8);
            let h = random_gaussian_element(m, &mut rng, 0.8);
            let f = random_gaussian_element(m, &mut rng, 0.8);
            // triangle inequality
            assert!(distance(&g, &f) <= distance(&g, &h) + distance(&h, &f) + 1e-9);
            // left K-invariance
            let k = random_rotation(m, &mut rng);
            assert!(close(
                symmetric_distance(&(&k * &g)),
                symmetric_distance(&g),
                1e-9
            ));
            // right invariance
            assert!(close(
                distance(&(&g * &h), &h),
                symmetric_distance(&g),
                1e-9
            ));
        }
    }

    #[test]
    fn sl2_distance_tracks_log_norm() {
        let mut rng = atom_rng(8, 99, 2);
        let mut c1 = 0.0f64;
        for _ in 0..10_000 {
            let a = random_gaussian_element(2, &mut rng, 1.5);
            let (i, j) = (1, 2);
            let e = a.matrix();
            let g = sl2_embed(3, [e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]], i, j).unwrap();
            let (n, _) = norm_conorm(&g);
            c1 = c1.max((symmetric_distance(&g) - 2.0 * n.ln()).abs());
        }
        assert!(c1 <= 1.2, "fitted C1 = {c1}");
    }

    #[test]
    fn distance_comparable_to_log_norm() {
        let mut rng = atom_rng(9, 99, 3);
        for _ in 0..2000 {
            let m = 2 + (rand::Rng::random::<u32>(&mut rng) % 4) as usize;
            let g = random_gaussian_element(m, &mut rng, 2.0);
            let kappa = std::f64::consts::SQRT_2 * m as f64;
            let ln = norm_conorm(&g).0.ln();
            let d = symmetric_distance(&g);
            assert!(ln / kappa - 2.0 <= d && d <= kappa * ln + 2.0);
        }
    }

    #[test]
    fn unipotent_growth() {
        for e in 0..=9 {
            let k = 10i64.pow(e);
            let d = symmetric_distance(&elementary(3, 1, 3, k).unwrap().to_real());
            assert!(d <= 2.1 * (k as f64).ln() + 1.0, "k = {k}: d = {d}");
        }
    }

    #[test]
    fn integer_log_norm_handles_huge_entries() {
        let mut g = IntegerGroupElement::identity(2);
        *g.entry_mut(0, 1) = BigInt::from(10).pow(400);
        let ln = g.log_norm();
        assert!(close(ln, 400.0 * 10f64.ln(), 1e-9));
    }
}
