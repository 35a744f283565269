//! Sumsets in ℤ²: covering constants, exhaustive cover verification by
//! bit-parallel dilation, the minimal-k oracle, and propagation of a cost
//! bound from a dense good set to the whole ball.
//!
//! `reach(k) = F + ⋃_{j ≤ k} jS` is computed inside a finite window. For a
//! target in `B_n` written as `f + s₁ + ⋯ + s_j`, the Steinitz lemma in the
//! plane reorders the summands so every partial sum stays within `2n` of the
//! segment from `f` to the target, so a window of radius `5n + 4R` (with `R`
//! the radius of `F`) loses no representation.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest `n·k_δ` attempted by [`verify_cover`].
pub const COVER_BUDGET: u64 = 100_000;
/// Largest window side squared handled by the dilation engine.
pub const WINDOW_BIT_BUDGET: u64 = 400_000_000;

const RLE_MAGIC: [u8; 4] = *b"CFSS";
const RLE_VERSION: u32 = 1;

pub type Point = [i64; 2];

/// The L∞ ball `B_n(ℤ²)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LatticeBall {
    pub n: i64,
}

impl LatticeBall {
    pub fn new(n: i64) -> Self {
        assert!(n >= 0, "negative radius");
        Self { n }
    }

    pub fn contains(&self, v: Point) -> bool {
        v[0].abs() <= self.n && v[1].abs() <= self.n
    }

    /// `(2n + 1)²`.
    pub fn size(&self) -> u64 {
        let w = (2 * self.n + 1) as u64;
        w * w
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        let n = self.n;
        (-n..=n).flat_map(move |y| (-n..=n).map(move |x| [x, y]))
    }
}

// ---------------------------------------------------------------------------
// Bit grid over a centered square

#[derive(Clone, Debug, PartialEq, Eq)]
struct Grid {
    r: i64,
    words: usize,
    rows: Vec<Vec<u64>>,
}

impl Grid {
    fn new(r: i64) -> Self {
        let width = (2 * r + 1) as usize;
        let words = width.div_ceil(64);
        Self {
            r,
            words,
            rows: vec![vec![0; words]; width],
        }
    }

    fn width(&self) -> usize {
        (2 * self.r + 1) as usize
    }

    fn in_range(&self, v: Point) -> bool {
        v[0].abs() <= self.r && v[1].abs() <= self.r
    }

    fn get(&self, v: Point) -> bool {
        if !self.in_range(v) {
            return false;
        }
        let x = (v[0] + self.r) as usize;
        self.rows[(v[1] + self.r) as usize][x / 64] >> (x % 64) & 1 == 1
    }

    fn set(&mut self, v: Point, on: bool) {
        let x = (v[0] + self.r) as usize;
        let w = &mut self.rows[(v[1] + self.r) as usize][x / 64];
        if on {
            *w |= 1 << (x % 64);
        } else {
            *w &= !(1 << (x % 64));
        }
    }

    fn count(&self) -> u64 {
        self.rows
            .iter()
            .flatten()
            .map(|w| w.count_ones() as u64)
            .sum()
    }

    fn mask_tail(&self, row: &mut [u64]) {
        let extra = self.words * 64 - self.width();
        if extra > 0 {
            row[self.words - 1] &= u64::MAX >> extra;
        }
    }

    /// `self + S` together with `self` itself.
    fn dilate(&self, s: &[(i64, Vec<i64>)]) -> Grid {
        let width = self.width() as i64;
        let rows: Vec<Vec<u64>> = (0..width)
            .into_par_iter()
            .map(|y| {
                let mut out = self.rows[y as usize].clone();
                for (dy, dxs) in s {
                    let src = y - dy;
                    if src < 0 || src >= width {
                        continue;
                    }
                    let src = &self.rows[src as usize];
                    if src.iter().all(|&w| w == 0) {
                        continue;
                    }
                    for &dx in dxs {
                        or_shifted(&mut out, src, dx);
                    }
                }
                self.mask_tail(&mut out);
                out
            })
            .collect();
        Grid {
            r: self.r,
            words: self.words,
            rows,
        }
    }

    /// First point of `B_n` not in the grid, scanning rows from the bottom.
    fn first_missing(&self, n: i64) -> Option<Point> {
        LatticeBall::new(n).points().find(|&v| !self.get(v))
    }
}

/// `dst |= src << dx` as bit strings (negative `dx` shifts down).
fn or_shifted(dst: &mut [u64], src: &[u64], dx: i64) {
    let len = dst.len() as i64;
    let q = dx.div_euclid(64);
    let b = dx.rem_euclid(64) as u32;
    for i in 0..len {
        let j = i - q;
        let mut w = 0u64;
        if (0..len).contains(&j) {
            w |= src[j as usize] << b;
        }
        if b > 0 && (0..len).contains(&(j - 1)) {
            w |= src[(j - 1) as usize] >> (64 - b);
        }
        dst[i as usize] |= w;
    }
}

// ---------------------------------------------------------------------------
// Symmetric sets

/// A subset of `B_n(ℤ²)` closed under negation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymmetricSet {
    n: i64,
    grid: Grid,
}

impl SymmetricSet {
    /// The set of `points`; fails unless it lies in `B_n` and is symmetric.
    pub fn new(n: i64, points: &[Point]) -> Result<Self> {
        let ball = LatticeBall::new(n);
        let mut grid = Grid::new(n);
        for &v in points {
            if !ball.contains(v) {
                return Err(Error::InvalidArgument(format!("{v:?} outside B_{n}")));
            }
            grid.set(v, true);
        }
        let s = Self { n, grid };
        if let Some(v) = points.iter().find(|v| !s.contains([-v[0], -v[1]])) {
            return Err(Error::InvalidArgument(format!(
                "set is not symmetric: {v:?} without its negative"
            )));
        }
        Ok(s)
    }

    /// `{v ∈ B_n : keep(v)}` symmetrized by keeping `v` iff `keep` holds at
    /// the lexicographically larger of `±v`.
    pub fn from_predicate(n: i64, keep: impl Fn(Point) -> bool) -> Self {
        let mut grid = Grid::new(n);
        for v in LatticeBall::new(n).points() {
            let rep = if (v[1], v[0]) >= (-v[1], -v[0]) {
                v
            } else {
                [-v[0], -v[1]]
            };
            if keep(rep) {
                grid.set(v, true);
            }
        }
        Self { n, grid }
    }

    pub fn ball(n: i64) -> Self {
        Self::from_predicate(n, |_| true)
    }

    /// Each pair `{v, −v}` (and the origin) kept independently with
    /// probability `density`.
    pub fn random<R: Rng + ?Sized>(n: i64, density: f64, rng: &mut R) -> Self {
        let mut grid = Grid::new(n);
        for v in LatticeBall::new(n).points() {
            if (v[1], v[0]) >= (-v[1], -v[0]) && rng.random::<f64>() < density {
                grid.set(v, true);
                grid.set([-v[0], -v[1]], true);
            }
        }
        Self { n, grid }
    }

    pub fn n(&self) -> i64 {
        self.n
    }

    pub fn contains(&self, v: Point) -> bool {
        self.grid.get(v)
    }

    pub fn len(&self) -> u64 {
        self.grid.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn density(&self) -> f64 {
        self.len() as f64 / LatticeBall::new(self.n).size() as f64
    }

    pub fn points(&self) -> Vec<Point> {
        LatticeBall::new(self.n)
            .points()
            .filter(|&v| self.contains(v))
            .collect()
    }

    fn by_row(&self) -> Vec<(i64, Vec<i64>)> {
        (-self.n..=self.n)
            .map(|dy| {
                (
                    dy,
                    (-self.n..=self.n)
                        .filter(|&dx| self.contains([dx, dy]))
                        .collect::<Vec<_>>(),
                )
            })
            .filter(|(_, v)| !v.is_empty())
            .collect()
    }

    /// Run-length encoding: a 16-byte header (magic `CFSS`, version `u32`
    /// LE, `n` as `u64` LE) followed by `u32` LE run lengths over the
    /// row-major bits of `B_n`, alternating absent/present and starting with
    /// an absent run.
    pub fn to_rle(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16);
        out.extend_from_slice(&RLE_MAGIC);
        out.extend_from_slice(&RLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        let mut current = false;
        let mut run = 0u32;
        for v in LatticeBall::new(self.n).points() {
            if self.contains(v) == current {
                run += 1;
            } else {
                out.extend_from_slice(&run.to_le_bytes());
                current = !current;
                run = 1;
            }
        }
        out.extend_from_slice(&run.to_le_bytes());
        out
    }

    pub fn from_rle(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("bad run-length encoding: {m}"));
        if bytes.len() < 16 || bytes[..4] != RLE_MAGIC {
            return Err(bad("missing header"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != RLE_VERSION {
            return Err(Error::SchemaMismatch {
                found: version,
                expected: RLE_VERSION,
            });
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as i64;
        if !(0..=1 << 20).contains(&n) || (bytes.len() - 16) % 4 != 0 {
            return Err(bad("malformed body"));
        }
        let ball = LatticeBall::new(n);
        let mut grid = Grid::new(n);
        let mut points = ball.points();
        let mut on = false;
        let mut total = 0u64;
        for chunk in bytes[16..].chunks(4) {
            let run = u32::from_le_bytes(chunk.try_into().unwrap());
            total += run as u64;
            if total > ball.size() {
                return Err(bad("runs overflow the ball"));
            }
            for _ in 0..run {
                let v = points.next().unwrap();
                if on {
                    grid.set(v, true);
                }
            }
            on = !on;
        }
        if total != ball.size() {
            return Err(bad("runs do not cover the ball"));
        }
        let s = Self { n, grid };
        if s.points().iter().any(|v| !s.contains([-v[0], -v[1]])) {
            return Err(bad("decoded set is not symmetric"));
        }
        Ok(s)
    }
}

// ---------------------------------------------------------------------------
// Covering

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CoverConstants {
    /// Smallest positive integer with `1/M < δ`.
    pub m: u64,
    /// `(M + 1)!`.
    pub n_delta: u64,
    /// `4·N_δ`.
    pub k_delta: u64,
    /// `B_{N_δ}`.
    pub f_delta: LatticeBall,
}

pub fn cover_constants(delta: f64) -> Result<CoverConstants> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("δ = {delta} not in (0, 1)")));
    }
    let m = (1.0 / delta).floor() as u64 + 1;
    let n_delta = (1..=m + 1)
        .try_fold(1u64, |acc, k| acc.checked_mul(k))
        .filter(|&n| n <= i64::MAX as u64 / 8)
        .ok_or_else(|| Error::InvalidArgument(format!("(M + 1)! overflows for δ = {delta}")))?;
    Ok(CoverConstants {
        m,
        n_delta,
        k_delta: 4 * n_delta,
        f_delta: LatticeBall::new(n_delta as i64),
    })
}

/// Cumulative reach layers `F + ⋃_{j ≤ k} jS` in the Steinitz window.
struct Dilation {
    layers: Vec<Grid>,
    covered_at: Option<usize>,
}

fn window_radius(n: i64, f: LatticeBall) -> Result<i64> {
    let r = 5 * n + 4 * f.n;
    let side = (2 * r + 1) as u64;
    if side.saturating_mul(side) > WINDOW_BIT_BUDGET {
        return Err(Error::MemoryBudget(format!(
            "window of radius {r} exceeds the bit budget"
        )));
    }
    Ok(r)
}

fn full_ball(n: i64) -> Grid {
    let mut g = Grid::new(n);
    for v in LatticeBall::new(n).points() {
        g.set(v, true);
    }
    g
}

/// Dilate until `B_n ⊆ reach(k)`, the reach stops growing, or `k_max`.
fn dilate_until_covered(
    s: &SymmetricSet,
    f: LatticeBall,
    k_max: usize,
    keep_layers: bool,
) -> Result<Dilation> {
    let n = s.n;
    if n <= f.n {
        return Ok(Dilation {
            layers: vec![full_ball(n)],
            covered_at: Some(0),
        });
    }
    let r = window_radius(n, f)?;
    let mut reach = Grid::new(r);
    for v in LatticeBall::new(f.n.min(r)).points() {
        reach.set(v, true);
    }
    let rows = s.by_row();
    let mut layers = Vec::new();
    let mut k = 0;
    loop {
        let missing = reach.first_missing(n);
        if keep_layers {
            layers.push(reach.clone());
        }
        if missing.is_none() {
            return Ok(Dilation {
                layers,
                covered_at: Some(k),
            });
        }
        if k == k_max {
            return Ok(Dilation {
                layers,
                covered_at: None,
            });
        }
        let next = reach.dilate(&rows);
        if next == reach {
            return Ok(Dilation {
                layers,
                covered_at: None,
            });
        }
        reach = next;
        k += 1;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CoverResult {
    pub covered: bool,
    /// Uncovered point of `B_n` when `covered` is false.
    pub witness: Option<Point>,
    /// Smallest `k` with `B_n ⊆ F_δ + ⋃_{j≤k} jS`, when at most `k_δ`.
    pub minimal_k: Option<u64>,
    pub constants: CoverConstants,
}

/// Decide `B_n ⊆ F_δ + ⋃_{j ≤ k_δ} jS` exhaustively.
pub fn verify_cover(s: &SymmetricSet, delta: f64) -> Result<CoverResult> {
    let constants = cover_constants(delta)?;
    let n = s.n;
    if (n as u64).saturating_mul(constants.k_delta) > COVER_BUDGET {
        return Err(Error::MemoryBudget(format!(
            "n·k_δ = {} exceeds {COVER_BUDGET}",
            n as u64 * constants.k_delta
        )));
    }
    if !(s.density() > delta) {
        return Err(Error::Precondition(format!(
            "density {:.4} is not above δ = {delta}",
            s.density()
        )));
    }
    let d = dilate_until_covered(s, constants.f_delta, constants.k_delta as usize, true)?;
    let witness = match d.covered_at {
        Some(_) => None,
        None => d.layers.last().and_then(|g| g.first_missing(n)),
    };
    Ok(CoverResult {
        covered: d.covered_at.is_some(),
        witness,
        minimal_k: d.covered_at.map(|k| k as u64),
        constants,
    })
}

/// Smallest `k` with `B_n ⊆ F + ⋃_{j≤k} jS`, or `None` if the reach stops
/// growing first.
pub fn minimal_k_oracle(s: &SymmetricSet, f: LatticeBall) -> Result<Option<u64>> {
    let d = dilate_until_covered(s, f, usize::MAX, false)?;
    Ok(d.covered_at.map(|k| k as u64))
}

/// For `v = (ℓ, 0)`: a pair `a, b ∈ S` with `b − a = i·v`, `1 ≤ i ≤ M`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AxisCertificate {
    pub ell: i64,
    pub i: i64,
    pub a: Point,
    pub b: Point,
}

/// Axis certificates for `ℓ = 1..=n`; `None` where no pair exists.
pub fn axis_certificates(s: &SymmetricSet, m: u64) -> Vec<Option<AxisCertificate>> {
    let pts = s.points();
    (1..=s.n)
        .map(|ell| {
            for i in 1..=m as i64 {
                let step = i * ell;
                if let Some(a) = pts.iter().find(|a| s.contains([a[0] + step, a[1]])) {
                    return Some(AxisCertificate {
                        ell,
                        i,
                        a: *a,
                        b: [a[0] + step, a[1]],
                    });
                }
            }
            None
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Good-set propagation

/// A nonnegative symmetric cost on ℤ².
pub trait CostFunction: Sync {
    fn cost(&self, v: Point) -> f64;
}

impl<F: Fn(Point) -> f64 + Sync> CostFunction for F {
    fn cost(&self, v: Point) -> f64 {
        self(v)
    }
}

/// Largest `h(u + v) − h(u) − h(v)` and `|h(−v) − h(v)|` over `u, v ∈ B_n`.
pub fn subadditivity_defect(h: &dyn CostFunction, n: i64) -> (f64, f64) {
    let pts: Vec<Point> = LatticeBall::new(n).points().collect();
    let sub = pts
        .par_iter()
        .map(|u| {
            pts.iter()
                .map(|v| h.cost([u[0] + v[0], u[1] + v[1]]) - h.cost(*u) - h.cost(*v))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let sym = pts
        .iter()
        .map(|v| (h.cost([-v[0], -v[1]]) - h.cost(*v)).abs())
        .fold(0.0, f64::max);
    (sub, sym)
}

/// `v = f + s₁ + ⋯ + s_k` with `f ∈ F`, `s_i ∈ GU`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub v: Point,
    pub f: Point,
    pub steps: Vec<Point>,
    /// `h(f) + Σ h(s_i)`.
    pub chain_cost: f64,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagationReport {
    pub n: i64,
    pub eps: f64,
    pub good_density: f64,
    pub constants: CoverConstants,
    /// `max_F h + k_δ·ε·log n`.
    pub bound: f64,
    pub certificates: Vec<Certificate>,
    pub all_certified: bool,
    /// Largest `h(v) − chain_cost`; nonpositive for a subadditive cost.
    pub max_chain_excess: f64,
    pub max_cost: f64,
}

/// Propagate `h ≤ ε log n` from `GU_{ε,n}` to all of `B_n` through the
/// cover with constants for `delta`, certifying every point.
pub fn good_set_propagation(
    h: &dyn CostFunction,
    n: i64,
    eps: f64,
    delta: f64,
) -> Result<PropagationReport> {
    if n < 2 {
        return Err(Error::InvalidArgument("need n ≥ 2".into()));
    }
    let threshold = eps * (n as f64).ln();
    let good = SymmetricSet::from_predicate(n, |v| {
        h.cost(v) <= threshold && h.cost([-v[0], -v[1]]) <= threshold
    });
    let constants = cover_constants(delta)?;
    if !(good.density() > delta) {
        return Err(Error::Precondition(format!(
            "good set density {:.4} is not above δ′ = {delta}",
            good.density()
        )));
    }
    let f = constants.f_delta;
    let d = dilate_until_covered(&good, f, constants.k_delta as usize, true)?;
    let max_f = LatticeBall::new(f.n.min(5 * n + 4 * f.n))
        .points()
        .map(|v| h.cost(v))
        .fold(0.0, f64::max);
    let good_pts = good.points();
    let certificates: Vec<Certificate> = LatticeBall::new(n)
        .points()
        .collect::<Vec<_>>()
        .par_iter()
        .filter_map(|&v| certify(v, &d.layers, &good_pts, f, h))
        .collect();
    let all_certified = certificates.len() as u64 == LatticeBall::new(n).size();
    let max_chain_excess = certificates
        .iter()
        .map(|c| c.cost - c.chain_cost)
        .fold(f64::NEG_INFINITY, f64::max);
    let max_cost = certificates.iter().map(|c| c.cost).fold(0.0, f64::max);
    Ok(PropagationReport {
        n,
        eps,
        good_density: good.density(),
        constants,
        bound: max_f + constants.k_delta as f64 * threshold,
        certificates,
        all_certified,
        max_chain_excess,
        max_cost,
    })
}

fn certify(
    v: Point,
    layers: &[Grid],
    good: &[Point],
    f: LatticeBall,
    h: &dyn CostFunction,
) -> Option<Certificate> {
    let j = layers.iter().position(|g| g.get(v))?;
    let mut steps = Vec::with_capacity(j);
    let mut cur = v;
    for level in (0..j).rev() {
        let s = good
            .iter()
            .find(|s| layers[level].get([cur[0] - s[0], cur[1] - s[1]]))?;
        steps.push(*s);
        cur = [cur[0] - s[0], cur[1] - s[1]];
    }
    debug_assert!(f.contains(cur));
    steps.reverse();
    let chain_cost = h.cost(cur) + steps.iter().map(|s| h.cost(*s)).sum::<f64>();
    Some(Certificate {
        v,
        f: cur,
        steps,
        chain_cost,
        cost: h.cost(v),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{atom_rng, streams};
    use proptest::prelude::*;

    #[test]
    fn constants_examples() {
        let c = cover_constants(0.5).unwrap();
        assert_eq!(
            (c.m, c.n_delta, c.k_delta, c.f_delta),
            (3, 24, 96, LatticeBall::new(24))
        );
        let c = cover_constants(0.9).unwrap();
        assert_eq!((c.m, c.n_delta, c.k_delta), (2, 6, 24));
        let c = cover_constants(0.3).unwrap();
        assert_eq!((c.m, c.n_delta, c.k_delta), (4, 120, 480));
        assert!(cover_constants(1.0).is_err());
        assert!(cover_constants(0.0).is_err());
    }

    #[test]
    fn ball_size() {
        assert_eq!(LatticeBall::new(3).size(), 49);
        assert_eq!(SymmetricSet::ball(3).len(), 49);
        assert_eq!(LatticeBall::new(3).points().count(), 49);
    }

    #[test]
    fn symmetry_enforced() {
        assert!(SymmetricSet::new(2, &[[1, 0]]).is_err());
        assert!(SymmetricSet::new(2, &[[1, 0], [-1, 0]]).is_ok());
        assert!(SymmetricSet::new(2, &[[3, 0], [-3, 0]]).is_err());
    }

    #[test]
    fn oracle_examples() {
        let origin = LatticeBall::new(0);
        assert_eq!(
            minimal_k_oracle(&SymmetricSet::ball(5), origin).unwrap(),
            Some(1)
        );
        let punctured = SymmetricSet::from_predicate(5, |v| v != [0, 0]);
        assert_eq!(minimal_k_oracle(&punctured, origin).unwrap(), Some(1));
        let even = SymmetricSet::from_predicate(6, |v| v[0] % 2 == 0 && v[1] % 2 == 0);
        assert_eq!(minimal_k_oracle(&even, origin).unwrap(), None);
        assert_eq!(
            minimal_k_oracle(&SymmetricSet::ball(5), LatticeBall::new(5)).unwrap(),
            Some(0)
        );
    }

    #[test]
    fn cover_examples() {
        let r = verify_cover(&SymmetricSet::ball(30), 0.5).unwrap();
        assert!(r.covered);
        let even = SymmetricSet::from_predicate(4, |v| v[0] % 2 == 0 && v[1] % 2 == 0);
        assert!(matches!(
            verify_cover(&even, 0.5),
            Err(Error::Precondition(_))
        ));
        assert!(verify_cover(&even, 0.2).unwrap().covered);
        let big = SymmetricSet::ball(1100);
        assert!(matches!(
            verify_cover(&big, 0.5),
            Err(Error::MemoryBudget(_))
        ));
    }

    #[test]
    fn sparse_set_fails_with_witness() {
        // a set inside the index-3 sublattice x + y ≡ 0 never covers
        let s = SymmetricSet::from_predicate(30, |v| (v[0] + v[1]) % 3 == 0 && v[0].abs() <= 1);
        let d = dilate_until_covered(&s, LatticeBall::new(0), 1000, true).unwrap();
        assert!(d.covered_at.is_none());
        let g = d.layers.last().unwrap();
        let w = g.first_missing(30).unwrap();
        assert!((w[0] + w[1]) % 3 != 0);
    }

    #[test]
    fn random_dense_sets_cover() {
        let mut worst = 0;
        for i in 0..20 {
            let mut rng = atom_rng(3, streams::SETS, i);
            let n = rand::Rng::random_range(&mut rng, 25..=40);
            let s = SymmetricSet::random(n, 0.62, &mut rng);
            let r = verify_cover(&s, 0.5).unwrap();
            assert!(r.covered);
            let k = minimal_k_oracle(&s, LatticeBall::new(0)).unwrap().unwrap();
            assert!(k <= r.constants.k_delta);
            worst = worst.max(k);
        }
        assert!(worst >= 2);
    }

    #[test]
    fn axis_certificates_exist() {
        let mut rng = atom_rng(4, streams::SETS, 0);
        let s = SymmetricSet::random(20, 0.6, &mut rng);
        let certs = axis_certificates(&s, 3);
        for c in certs {
            let c = c.unwrap();
            assert!(s.contains(c.a) && s.contains(c.b));
            assert_eq!(c.b[0] - c.a[0], c.i * c.ell);
            assert!(c.i >= 1 && c.i <= 3);
        }
    }

    #[test]
    fn propagation_examples() {
        let zero = |_: Point| 0.0;
        let r = good_set_propagation(&zero, 30, 1.0, 0.5).unwrap();
        assert!(r.all_certified && r.max_cost == 0.0);

        let log_norm = |v: Point| (1.0 + ((v[0] * v[0] + v[1] * v[1]) as f64).sqrt()).ln();
        let (sub, sym) = subadditivity_defect(&log_norm, 12);
        assert!(sub <= 1e-12 && sym == 0.0);
        let r = good_set_propagation(&log_norm, 30, 2.0, 0.5).unwrap();
        assert_eq!(r.good_density, 1.0);
        assert!(r.all_certified);
        assert!(r.max_chain_excess <= 1e-12);

        let mut rng = atom_rng(5, streams::SETS, 0);
        let n = 40;
        let base = SymmetricSet::random(n, 0.6, &mut rng);
        let lg = 10.0 * (n as f64).ln();
        let synthetic = move |v: Point| {
            if base.contains(v) || v == [0, 0] {
                0.0
            } else {
                lg
            }
        };
        let r = good_set_propagation(&synthetic, n, 0.5, 0.5).unwrap();
        assert!(r.all_certified);
        for c in &r.certificates {
            assert!(c.chain_cost <= r.bound + 1e-9);
            assert_eq!(
                [
                    c.f[0] + c.steps.iter().map(|s| s[0]).sum::<i64>(),
                    c.f[1] + c.steps.iter().map(|s| s[1]).sum::<i64>()
                ],
                c.v
            );
        }
        let sparse = |v: Point| if v == [0, 0] { 0.0 } else { 100.0 };
        assert!(matches!(
            good_set_propagation(&sparse, 20, 1.0, 0.5),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn rle_rejects_garbage() {
        assert!(SymmetricSet::from_rle(b"nope").is_err());
        let mut bytes = SymmetricSet::ball(2).to_rle();
        bytes[4] = 9;
        assert!(matches!(
            SymmetricSet::from_rle(&bytes),
            Err(Error::SchemaMismatch { .. })
        ));
        let mut bytes = SymmetricSet::ball(2).to_rle();
        bytes.truncate(bytes.len() - 4);
        assert!(SymmetricSet::from_rle(&bytes).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rle_round_trip(seed in any::<u64>(), n in 0i64..30, density in 0.0f64..1.0) {
            let mut rng = atom_rng(seed, streams::SETS, 0);
            let s = SymmetricSet::random(n, density, &mut rng);
            let bytes = s.to_rle();
            prop_assert_eq!(bytes.len() >= 16, true);
            prop_assert_eq!(SymmetricSet::from_rle(&bytes).unwrap(), s);
        }

        #[test]
        fn dilation_is_monotone_and_matches_sets(seed in any::<u64>(), n in 1i64..6, density in 0.1f64..0.9) {
            let mut rng = atom_rng(seed, streams::SETS, 1);
            let s = SymmetricSet::random(n, density, &mut rng);
            let rows = s.by_row();
            let mut g = Grid::new(4 * n);
            g.set([0, 0], true);
            let pts = s.points();
            for _ in 0..3 {
                let next = g.dilate(&rows);
                // reach(k) ⊆ reach(k + 1)
                for y in -g.r..=g.r {
                    for x in -g.r..=g.r {
                        if g.get([x, y]) {
                            prop_assert!(next.get([x, y]));
                        }
                    }
                }
                // set-arithmetic reference
                for y in -g.r..=g.r {
                    for x in -g.r..=g.r {
                        let expect = g.get([x, y]) || pts.iter().any(|p| g.get([x - p[0], y - p[1]]));
                        prop_assert_eq!(next.get([x, y]), expect);
                    }
                }
                g = next;
            }
        }

        #[test]
        fn oracle_monotone_in_s(seed in any::<u64>(), n in 3i64..12) {
            let mut rng = atom_rng(seed, streams::SETS, 2);
            let s = SymmetricSet::random(n, 0.5, &mut rng);
            let bigger = SymmetricSet::from_predicate(n, |v| s.contains(v) || v[0] == 0);
            let a = minimal_k_oracle(&s, LatticeBall::new(0)).unwrap();
            let b = minimal_k_oracle(&bigger, LatticeBall::new(0)).unwrap();
            if let Some(a) = a {
                prop_assert!(b.unwrap() <= a);
            }
        }
    }
}
