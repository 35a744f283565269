//! The modular surface SL(2,ℝ)/SL(2,ℤ): Gauss reduction, geodesic and
//! horocycle orbits with deck bookkeeping, the return cocycle and the
//! thick/cusp excursion decomposition.
//!
//! A point is stored through a representative `rep` whose columns `ω₁, ω₂`
//! form a Gauss-reduced basis of the lattice `rep·ℤ²`, with `ω₂` a shortest
//! vector. Its shape parameter is `z = −ω₁/ω₂` (columns read as complex
//! numbers), which is invariant under rotations on the left and lies in the
//! standard domain `|Re z| ≤ 1/2, |z| ≥ 1`. Then `Im z = |ω₂|^{−2}` and the
//! depth is `max(0, ½ log Im z)`.
//!
//! The return cocycle is the deck element `β(g, x) ∈ Γ` with
//! `g·x̃·β(g,x)^{−1} = x̃′` reduced; it satisfies
//! `β(gh, x) = β(g, h·x)·β(h, x)`.

use std::fmt;
use std::io::Write;
use std::ops::Mul;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::cocycles::Cocycle;
use crate::error::{Error, Result};
use crate::grouplin::{IntegerGroupElement, RealGroupElement};
use crate::space::HomogeneousPoint;
use crate::wordgeom::decompose;

/// Iteration cap of the Gauss reduction.
pub const REDUCTION_CAP: usize = 10_000;

/// Depth bound of the thick part: `log(17)/2` plus a margin of 0.1.
pub fn thick_depth() -> f64 {
    17f64.ln() / 2.0 + 0.1
}

/// A 2×2 integer matrix of determinant one with machine-word entries,
/// row-major. Used for per-step deck increments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sl2Z(pub [i64; 4]);

impl Sl2Z {
    pub const IDENTITY: Sl2Z = Sl2Z([1, 0, 0, 1]);

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn inverse(&self) -> Sl2Z {
        let [a, b, c, d] = self.0;
        Sl2Z([d, -b, -c, a])
    }

    pub fn neg(&self) -> Sl2Z {
        let [a, b, c, d] = self.0;
        Sl2Z([-a, -b, -c, -d])
    }

    pub fn trace(&self) -> i64 {
        self.0[0] + self.0[3]
    }

    fn checked_mul(&self, rhs: &Sl2Z) -> Option<Sl2Z> {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = rhs.0;
        let dot = |x: i64, y: i64, z: i64, w: i64| x.checked_mul(y)?.checked_add(z.checked_mul(w)?);
        Some(Sl2Z([
            dot(a, e, b, g)?,
            dot(a, f, b, h)?,
            dot(c, e, d, g)?,
            dot(c, f, d, h)?,
        ]))
    }

    pub fn to_integer(&self) -> IntegerGroupElement {
        IntegerGroupElement::from_entries_unchecked(
            2,
            self.0.iter().map(|&x| BigInt::from(x)).collect(),
        )
    }

    pub fn to_real(&self) -> RealGroupElement {
        let e: Vec<f64> = self.0.iter().map(|&x| x as f64).collect();
        RealGroupElement::from_matrix_unchecked(DMatrix::from_row_slice(2, 2, &e))
    }
}

impl Mul for Sl2Z {
    type Output = Sl2Z;
    fn mul(self, rhs: Sl2Z) -> Sl2Z {
        self.checked_mul(&rhs).expect("SL(2,Z) product overflow")
    }
}

impl fmt::Display for Sl2Z {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.0;
        write!(f, "[{a} {b}; {c} {d}]")
    }
}

// ---------------------------------------------------------------------------
// Points and reduction

/// A point of SL(2,ℝ)/SL(2,ℤ): reduced representative plus the deck element
/// accumulated so far, with `rep·deck` the unreduced element.
#[derive(Clone, Debug, PartialEq)]
pub struct ModularPoint {
    rep: [f64; 4],
    deck: IntegerGroupElement,
}

type Col = [f64; 2];

fn dot(u: Col, v: Col) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}

fn in_upper(v: Col) -> bool {
    v[1] > 0.0 || (v[1] == 0.0 && v[0] > 0.0)
}

/// Gauss reduction of the columns `(w1, w2)`; returns the reduced columns
/// and `M ∈ SL(2,ℤ)` with `[w1' w2'] = [w1 w2]·M`.
fn gauss(mut w1: Col, mut w2: Col) -> Result<(Col, Col, Sl2Z)> {
    let mut m = Sl2Z::IDENTITY;
    let overflow = || Error::Degenerate("deck entries exceed 64 bits".into());
    let swap = |w1: &mut Col, w2: &mut Col, m: &mut Sl2Z| -> Result<()> {
        let (a, b) = (*w1, *w2);
        *w1 = [-b[0], -b[1]];
        *w2 = a;
        *m = m.checked_mul(&Sl2Z([0, 1, -1, 0])).ok_or_else(overflow)?;
        Ok(())
    };
    let mut iters = 0;
    loop {
        iters += 1;
        if iters > REDUCTION_CAP {
            return Err(Error::IterationCapExceeded { cap: REDUCTION_CAP });
        }
        let n2 = dot(w2, w2);
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(Error::Degenerate("degenerate lattice basis".into()));
        }
        let mu = dot(w1, w2) / n2;
        let n = (mu - 0.5).ceil();
        if n != 0.0 {
            if n.abs() > 9.0e15 {
                return Err(overflow());
            }
            w1 = [w1[0] - n * w2[0], w1[1] - n * w2[1]];
            m = m
                .checked_mul(&Sl2Z([1, 0, -(n as i64), 1]))
                .ok_or_else(overflow)?;
        }
        let (a2, b2) = (dot(w1, w1), dot(w2, w2));
        if a2 < b2 {
            swap(&mut w1, &mut w2, &mut m)?;
            continue;
        }
        if a2 == b2 && dot(w1, w2) < 0.0 {
            // |z| = 1 with Re z > 0: move to the Re z ≤ 0 side
            swap(&mut w1, &mut w2, &mut m)?;
        }
        break;
    }
    if !in_upper(w2) {
        w1 = [-w1[0], -w1[1]];
        w2 = [-w2[0], -w2[1]];
        m = m.neg();
    }
    if dot(w1, w1) == dot(w2, w2) && dot(w1, w2) == 0.0 {
        // z = i: pick the representative whose ω₂ has argument in (π/4, 3π/4]
        let arg = w2[1].atan2(w2[0]);
        if !(arg > std::f64::consts::FRAC_PI_4 && arg <= 3.0 * std::f64::consts::FRAC_PI_4) {
            swap(&mut w1, &mut w2, &mut m)?;
            if !in_upper(w2) {
                w1 = [-w1[0], -w1[1]];
                w2 = [-w2[0], -w2[1]];
                m = m.neg();
            }
        }
    }
    Ok((w1, w2, m))
}

fn cols(rep: &[f64; 4]) -> (Col, Col) {
    ([rep[0], rep[2]], [rep[1], rep[3]])
}

fn from_cols(w1: Col, w2: Col) -> [f64; 4] {
    [w1[0], w2[0], w1[1], w2[1]]
}

fn mat_mul(g: &[f64; 4], r: &[f64; 4]) -> [f64; 4] {
    [
        g[0] * r[0] + g[1] * r[2],
        g[0] * r[1] + g[1] * r[3],
        g[2] * r[0] + g[3] * r[2],
        g[2] * r[1] + g[3] * r[3],
    ]
}

fn as_array(g: &RealGroupElement) -> Result<[f64; 4]> {
    if g.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: g.dim(),
        });
    }
    let e = g.matrix();
    Ok([e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]])
}

/// Reduce `rep`; returns the reduced representative and the deck increment
/// `M^{−1}` (so that `rep = rep'·M^{−1}`).
fn reduce_array(rep: &[f64; 4]) -> Result<([f64; 4], Sl2Z)> {
    let (w1, w2) = cols(rep);
    let (w1, w2, m) = gauss(w1, w2)?;
    Ok((from_cols(w1, w2), m.inverse()))
}

impl ModularPoint {
    /// Reduce `g` to the fundamental domain: `g = rep·deck`.
    pub fn reduce(g: &RealGroupElement) -> Result<ModularPoint> {
        let (rep, inc) = reduce_array(&as_array(g)?)?;
        Ok(ModularPoint {
            rep,
            deck: inc.to_integer(),
        })
    }

    /// The identity coset.
    pub fn identity() -> ModularPoint {
        ModularPoint {
            rep: [1.0, 0.0, 0.0, 1.0],
            deck: IntegerGroupElement::identity(2),
        }
    }

    /// The point with shape parameter `z = x + iy` (any `y > 0`), reduced.
    pub fn from_upper_half_plane(x: f64, y: f64) -> Result<ModularPoint> {
        if !(y > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "z = {x} + {y}i is not in the upper half-plane"
            )));
        }
        let s = y.sqrt();
        let g = [s, 0.0, -x / s, 1.0 / s];
        let (rep, _) = reduce_array(&g)?;
        Ok(ModularPoint {
            rep,
            deck: IntegerGroupElement::identity(2),
        })
    }

    pub(crate) fn from_reduced(rep: [f64; 4]) -> ModularPoint {
        ModularPoint {
            rep,
            deck: IntegerGroupElement::identity(2),
        }
    }

    pub fn rep(&self) -> RealGroupElement {
        RealGroupElement::from_matrix_unchecked(DMatrix::from_row_slice(2, 2, &self.rep))
    }

    pub fn rep_array(&self) -> [f64; 4] {
        self.rep
    }

    pub fn deck(&self) -> &IntegerGroupElement {
        &self.deck
    }

    /// The unreduced element `rep·deck`.
    pub fn unreduced(&self) -> RealGroupElement {
        &self.rep() * &self.deck.to_real()
    }

    /// Shape parameter `(Re z, Im z)`.
    pub fn z(&self) -> (f64, f64) {
        let (w1, w2) = cols(&self.rep);
        let n2 = dot(w2, w2);
        let det = w1[0] * w2[1] - w1[1] * w2[0];
        (-dot(w1, w2) / n2, det / n2)
    }

    pub fn systole(&self) -> f64 {
        let (_, w2) = cols(&self.rep);
        dot(w2, w2).sqrt()
    }

    pub fn depth(&self) -> f64 {
        (-self.systole().ln()).max(0.0)
    }

    pub fn is_thick(&self) -> bool {
        self.depth() <= thick_depth()
    }

    /// Distance to the identity coset in the quotient: the hyperbolic
    /// distance from the reduced `z` to `i`.
    pub fn distance_to_identity(&self) -> f64 {
        let (x, y) = self.z();
        (1.0 + (x * x + (y - 1.0) * (y - 1.0)) / (2.0 * y)).acosh()
    }

    /// `g·x` with its return-cocycle value; the new point carries the
    /// accumulated deck `β(g, x)·deck`.
    pub fn act(&self, g: &RealGroupElement) -> Result<(ModularPoint, Sl2Z)> {
        let moved = mat_mul(&as_array(g)?, &self.rep);
        let (rep, inc) = reduce_array(&moved)?;
        let deck = &inc.to_integer() * &self.deck;
        Ok((ModularPoint { rep, deck }, inc))
    }

    /// Same as [`act`](Self::act) but resets the accumulated deck.
    fn step(&self, g: &[f64; 4]) -> Result<(ModularPoint, Sl2Z)> {
        let (rep, inc) = reduce_array(&mat_mul(g, &self.rep))?;
        Ok((ModularPoint::from_reduced(rep), inc))
    }
}

impl HomogeneousPoint for ModularPoint {
    fn dim(&self) -> usize {
        2
    }

    fn depth(&self) -> Result<f64> {
        Ok(ModularPoint::depth(self))
    }

    fn systole(&self) -> Result<f64> {
        Ok(ModularPoint::systole(self))
    }

    fn translate(&self, g: &RealGroupElement) -> Result<Self> {
        let (rep, _) = reduce_array(&mat_mul(&as_array(g)?, &self.rep))?;
        Ok(ModularPoint::from_reduced(rep))
    }

    fn representative(&self) -> Vec<f64> {
        self.rep.to_vec()
    }
}

/// The return cocycle `β(g, x)`.
pub fn return_cocycle(g: &RealGroupElement, x: &ModularPoint) -> Result<IntegerGroupElement> {
    Ok(x.act(g)?.1.to_integer())
}

// ---------------------------------------------------------------------------
// Haar measure

/// Haar-random point: `z` from `dx dy / y²` on the standard domain by
/// rejection, rotated by a uniform angle on the left.
pub fn haar_sample<R: rand::Rng + ?Sized>(rng: &mut R) -> ModularPoint {
    let y0 = 3f64.sqrt() / 2.0;
    loop {
        let x: f64 = rng.random::<f64>() - 0.5;
        let u: f64 = 1.0 - rng.random::<f64>();
        let y = y0 / u;
        if x * x + y * y < 1.0 {
            continue;
        }
        let theta: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        let (s, c) = theta.sin_cos();
        let sy = y.sqrt();
        let g = mat_mul(&[c, -s, s, c], &[sy, 0.0, -x / sy, 1.0 / sy]);
        let (rep, _) = reduce_array(&g).expect("sampled point is nondegenerate");
        return ModularPoint::from_reduced(rep);
    }
}

/// Haar-random point of the thick part.
pub fn haar_sample_thick<R: rand::Rng + ?Sized>(rng: &mut R) -> ModularPoint {
    loop {
        let p = haar_sample(rng);
        if p.is_thick() {
            return p;
        }
    }
}

/// Haar law of the depth: `P(depth > u) = (3/π)e^{−2u}` for `u ≥ 0`, so the
/// law has an atom of mass `1 − 3/π` at zero.
pub fn haar_depth_cdf(u: f64) -> f64 {
    if u < 0.0 {
        0.0
    } else {
        1.0 - 3.0 / std::f64::consts::PI * (-2.0 * u).exp()
    }
}

/// `E_Haar[e^{η·depth}] = 1 + (3/π)·η/(2 − η)` for `η < 2`; infinite otherwise.
pub fn haar_exp_moment(eta: f64) -> f64 {
    if eta >= 2.0 {
        f64::INFINITY
    } else {
        1.0 + 3.0 / std::f64::consts::PI * eta / (2.0 - eta)
    }
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and
/// a distribution function `cdf` (which may have atoms).
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < s.len() {
        let v = s[i];
        let mut j = i;
        while j < s.len() && s[j] == v {
            j += 1;
        }
        let f = cdf(v);
        let f_left = cdf(v - 1e-300f64.max(v.abs() * 1e-15));
        worst = worst.max((j as f64 / n - f).abs());
        worst = worst.max((i as f64 / n - f_left).abs());
        i = j;
    }
    worst
}

// ---------------------------------------------------------------------------
// Orbits

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flow {
    /// `a^t = diag(e^{t/2}, e^{−t/2})`.
    Geodesic,
    /// `u(t) = [[1, t], [0, 1]]`.
    Horocycle,
}

impl Flow {
    pub fn element(&self, t: f64) -> [f64; 4] {
        match self {
            Flow::Geodesic => [(t / 2.0).exp(), 0.0, 0.0, (-t / 2.0).exp()],
            Flow::Horocycle => [1.0, t, 0.0, 1.0],
        }
    }

    pub fn group_element(&self, t: f64) -> RealGroupElement {
        RealGroupElement::from_matrix_unchecked(DMatrix::from_row_slice(2, 2, &self.element(t)))
    }

    /// Bound on the rate of change of depth per unit time.
    pub fn depth_speed(&self) -> f64 {
        match self {
            Flow::Geodesic => 0.5,
            Flow::Horocycle => 1.0,
        }
    }
}

/// One sample of an orbit: time, depth, the reduced representative and the
/// deck increment of the step that led here (identity for the first).
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitSample {
    pub time: f64,
    pub depth: f64,
    pub rep: [f64; 4],
    pub increment: Sl2Z,
}

#[derive(Clone, Debug)]
pub struct OrbitSegment {
    pub start: ModularPoint,
    /// Endpoint carrying the accumulated deck relative to `start`'s
    /// unreduced element.
    pub end: ModularPoint,
    pub flow: Flow,
    pub duration: f64,
    pub step: f64,
    pub samples: Vec<OrbitSample>,
}

impl OrbitSegment {
    /// `l(ζ)`.
    pub fn length(&self) -> f64 {
        self.duration
    }

    /// `d(ζ)`: the maximal sampled depth.
    pub fn max_depth(&self) -> f64 {
        self.samples.iter().map(|s| s.depth).fold(0.0, f64::max)
    }

    pub fn depths(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.depth).collect()
    }

    pub fn point(&self, k: usize) -> ModularPoint {
        ModularPoint::from_reduced(self.samples[k].rep)
    }

    /// Product of the deck increments over samples `(a, b]`, latest on the left.
    pub fn deck_product(&self, a: usize, b: usize) -> IntegerGroupElement {
        let mut acc = IntegerGroupElement::identity(2);
        for s in &self.samples[a + 1..=b] {
            if !s.increment.is_identity() {
                acc = &s.increment.to_integer() * &acc;
            }
        }
        acc
    }

    /// Flow element of the step ending at sample `k`.
    pub fn step_element(&self, k: usize) -> RealGroupElement {
        self.flow
            .group_element(self.samples[k].time - self.samples[k - 1].time)
    }
}

/// Sample the orbit of `x` under `flow` for time `t` with steps of at most
/// `h`, reducing after every step.
pub fn flow_orbit(x: &ModularPoint, flow: Flow, t: f64, h: f64) -> Result<OrbitSegment> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "duration {t} must be finite and non-negative"
        )));
    }
    if !(h > 0.0 && h <= 0.1) {
        return Err(Error::InvalidArgument(format!(
            "step {h} must lie in (0, 0.1]"
        )));
    }
    let n = if t == 0.0 {
        0
    } else {
        ((t / h) - 1e-9).ceil().max(1.0) as usize
    };
    let dt = if n == 0 { 0.0 } else { t / n as f64 };
    let g = flow.element(dt);
    let mut samples = Vec::with_capacity(n + 1);
    let mut cur = ModularPoint::from_reduced(x.rep);
    samples.push(OrbitSample {
        time: 0.0,
        depth: cur.depth(),
        rep: cur.rep,
        increment: Sl2Z::IDENTITY,
    });
    let mut deck = x.deck.clone();
    for k in 1..=n {
        let (next, inc) = cur.step(&g)?;
        if !inc.is_identity() {
            deck = &inc.to_integer() * &deck;
        }
        cur = next;
        samples.push(OrbitSample {
            time: k as f64 * dt,
            depth: cur.depth(),
            rep: cur.rep,
            increment: inc,
        });
    }
    let end = ModularPoint { rep: cur.rep, deck };
    Ok(OrbitSegment {
        start: x.clone(),
        end,
        flow,
        duration: t,
        step: dt,
        samples,
    })
}

/// One row of an orbit dump: a sample, or one letter of the elementary word
/// of its deck increment.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitRow {
    pub time: f64,
    pub depth: f64,
    /// `(i, j, k)` of the letter `E_{i,j}^k`.
    pub letter: Option<(usize, usize, BigInt)>,
    /// Depth at least the dump threshold.
    pub deep: bool,
    /// First letter of a nontrivial increment.
    pub jump: bool,
}

impl OrbitRow {
    pub fn flags(&self) -> &'static str {
        match (self.deep, self.jump) {
            (true, true) => "deep|jump",
            (true, false) => "deep",
            (false, true) => "jump",
            (false, false) => "",
        }
    }
}

/// Rows of an orbit dump. A sample whose deck increment is nontrivial gets
/// one row per letter of its elementary word (see [`decompose`]); other
/// samples get one row without a letter.
pub fn orbit_rows(seg: &OrbitSegment, threshold: f64) -> Vec<OrbitRow> {
    let mut rows = Vec::with_capacity(seg.samples.len());
    for s in &seg.samples {
        let deep = s.depth >= threshold;
        if s.increment.is_identity() {
            rows.push(OrbitRow {
                time: s.time,
                depth: s.depth,
                letter: None,
                deep,
                jump: false,
            });
            continue;
        }
        let word = decompose(&s.increment.to_integer()).word;
        for (n, l) in word.letters().iter().enumerate() {
            rows.push(OrbitRow {
                time: s.time,
                depth: s.depth,
                letter: Some((l.i, l.j, l.k.clone())),
                deep,
                jump: n == 0,
            });
        }
    }
    rows
}

/// Dump an orbit as CSV with columns `time, depth, deck_i, deck_j, deck_k,
/// flags` (see [`orbit_rows`]); `flags` joins `deep` and `jump` with `|`.
pub fn write_orbit_csv<W: Write>(seg: &OrbitSegment, threshold: f64, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "depth", "deck_i", "deck_j", "deck_k", "flags"])?;
    for r in orbit_rows(seg, threshold) {
        let (i, j, k) = match &r.letter {
            Some((i, j, k)) => (i.to_string(), j.to_string(), k.to_string()),
            None => Default::default(),
        };
        w.write_record([
            r.time.to_string(),
            r.depth.to_string(),
            i,
            j,
            k,
            r.flags().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Excursions

/// A sub-segment given by inclusive sample indices `start ≤ end`; adjacent
/// pieces share their boundary sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Piece {
    pub start: usize,
    pub end: usize,
}

impl Piece {
    pub fn duration(&self, seg: &OrbitSegment) -> f64 {
        seg.samples[self.end].time - seg.samples[self.start].time
    }
}

/// Alternating thick pieces `α_0 ω_0 α_1 … ω_{k−1} α_k`. Thick pieces may
/// be empty (`start == end`).
#[derive(Clone, Debug, PartialEq)]
pub struct ExcursionDecomposition {
    pub alphas: Vec<Piece>,
    pub omegas: Vec<Piece>,
    pub threshold: f64,
}

impl ExcursionDecomposition {
    /// Pieces in order of traversal.
    pub fn pieces(&self) -> Vec<Piece> {
        let mut out = Vec::with_capacity(self.alphas.len() + self.omegas.len());
        for (k, a) in self.alphas.iter().enumerate() {
            out.push(*a);
            if let Some(w) = self.omegas.get(k) {
                out.push(*w);
            }
        }
        out
    }
}

/// Split a segment into maximal cusp excursions (depth ≥ `threshold`) and
/// the thick pieces between them.
pub fn decompose_excursions(seg: &OrbitSegment, threshold: f64) -> Result<ExcursionDecomposition> {
    let floor = seg.step.max(f64::MIN_POSITIVE) * seg.flow.depth_speed();
    if !(threshold > floor) {
        return Err(Error::ThresholdBelowNoise { threshold, floor });
    }
    let last = seg.samples.len() - 1;
    let deep: Vec<bool> = seg.samples.iter().map(|s| s.depth >= threshold).collect();
    let mut omegas = Vec::new();
    let mut k = 0;
    while k <= last {
        if deep[k] {
            let mut q = k;
            while q < last && deep[q + 1] {
                q += 1;
            }
            omegas.push(Piece {
                start: k.saturating_sub(1),
                end: (q + 1).min(last),
            });
            k = q + 1;
        } else {
            k += 1;
        }
    }
    let mut alphas = Vec::with_capacity(omegas.len() + 1);
    let mut cursor = 0;
    for w in &omegas {
        alphas.push(Piece {
            start: cursor,
            end: w.start,
        });
        cursor = w.end;
    }
    alphas.push(Piece {
        start: cursor,
        end: last,
    });
    Ok(ExcursionDecomposition {
        alphas,
        omegas,
        threshold,
    })
}

/// Outcome of the parabolic test on an excursion.
#[derive(Clone, Debug, PartialEq)]
pub struct DeckClass {
    pub parabolic: bool,
    /// `I + N₀` for the primitive nilpotent `N₀` shared by all increments.
    pub generator: Option<Sl2Z>,
    /// Exponents `n` with increment `±(I + n·N₀)`, one per nontrivial step.
    pub exponents: Vec<i64>,
    /// Whether the nonzero exponents all have one sign.
    pub monotone: bool,
}

/// Decide whether every deck increment inside `piece` is `±` a power of a
/// single parabolic element.
pub fn excursion_deck_class(seg: &OrbitSegment, piece: &Piece) -> DeckClass {
    let mut generator: Option<[i64; 4]> = None;
    let mut exponents = Vec::new();
    let mut parabolic = true;
    for s in &seg.samples[(piece.start + 1).min(piece.end + 1)..=piece.end] {
        let inc = s.increment;
        if inc.is_identity() || inc == Sl2Z::IDENTITY.neg() {
            continue;
        }
        let g = if inc.trace() == 2 {
            inc
        } else if inc.trace() == -2 {
            inc.neg()
        } else {
            parabolic = false;
            break;
        };
        let nil = [g.0[0] - 1, g.0[1], g.0[2], g.0[3] - 1];
        let content = nil
            .iter()
            .fold(0i64, |acc, &v| num_integer::Integer::gcd(&acc, &v));
        let mut prim = nil.map(|v| v / content);
        let mut n = content;
        if prim.iter().find(|&&v| v != 0).is_some_and(|&v| v < 0) {
            prim = prim.map(|v| -v);
            n = -n;
        }
        match generator {
            None => generator = Some(prim),
            Some(p) if p == prim => {}
            Some(_) => {
                parabolic = false;
                break;
            }
        }
        exponents.push(n);
    }
    let monotone = exponents.iter().all(|&e| e > 0) || exponents.iter().all(|&e| e < 0);
    DeckClass {
        parabolic,
        generator: generator.map(|p| Sl2Z([1 + p[0], p[1], p[2], 1 + p[3]])),
        exponents,
        monotone,
    }
}

// ---------------------------------------------------------------------------
// Fiber growth along segments

/// Per-segment `c(ζ)`, `l(ζ)` and the running maximum of `c(ζ)/l(ζ)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiStats {
    pub chi_max: f64,
    /// `(c(ζ), l(ζ), c(ζ)/l(ζ))` per segment.
    pub table: Vec<(f64, f64, f64)>,
}

/// `c(ζ) = log‖A(flow(l(ζ)), start)‖`, accumulated step by step.
pub fn fiber_growth(seg: &OrbitSegment, cocycle: &dyn Cocycle<ModularPoint>) -> Result<f64> {
    let d = cocycle.fiber_dim();
    let mut acc = DMatrix::<f64>::identity(d, d);
    let mut log_scale = 0.0;
    for k in 1..seg.samples.len() {
        let a = cocycle.eval(&seg.step_element(k), &seg.point(k - 1))?;
        acc = a * acc;
        let n = acc.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::UntemperedBlowup { step: k });
        }
        acc /= n;
        log_scale += n.ln();
    }
    Ok(log_scale + crate::grouplin::op_norm(&acc).ln())
}

/// The empirical maximal growth rate over segments with thick endpoints.
pub fn chi_stats(
    segments: &[OrbitSegment],
    cocycle: &dyn Cocycle<ModularPoint>,
) -> Result<ChiStats> {
    let d0 = thick_depth();
    let mut table = Vec::with_capacity(segments.len());
    let mut chi_max = f64::NEG_INFINITY;
    for (i, seg) in segments.iter().enumerate() {
        for s in [seg.samples.first(), seg.samples.last()]
            .into_iter()
            .flatten()
        {
            if s.depth > d0 {
                return Err(Error::NonThickEndpoint {
                    index: i,
                    depth: s.depth,
                });
            }
        }
        let c = fiber_growth(seg, cocycle)?;
        let l = seg.length();
        let ratio = if l > 0.0 { c / l } else { 0.0 };
        chi_max = chi_max.max(ratio);
        table.push((c, l, ratio));
    }
    Ok(ChiStats {
        chi_max: if table.is_empty() { 0.0 } else { chi_max },
        table,
    })
}

/// Truncate an orbit at its last thick sample (at least `min_len` long);
/// returns `None` when no such sample exists.
pub fn truncate_to_thick(seg: &OrbitSegment, min_len: f64) -> Option<OrbitSegment> {
    let d0 = thick_depth();
    let k = seg
        .samples
        .iter()
        .rposition(|s| s.depth <= d0 && s.time >= min_len)?;
    if seg.samples[0].depth > d0 {
        return None;
    }
    let samples = seg.samples[..=k].to_vec();
    let end = ModularPoint {
        rep: samples[k].rep,
        deck: &seg.deck_product(0, k) * &seg.start.deck,
    };
    Some(OrbitSegment {
        start: seg.start.clone(),
        end,
        flow: seg.flow,
        duration: samples[k].time,
        step: seg.step,
        samples,
    })
}

// ---------------------------------------------------------------------------
// Counting

/// `#{γ ∈ SL(2,ℤ) : d(γ, Id) ≤ k}`, i.e. `a² + b² + c² + d² ≤ 2 cosh k`,
/// enumerated through primitive first columns.
pub fn count_ball(k: f64) -> u64 {
    let bound = 2.0 * k.cosh();
    let r = bound.sqrt().floor() as i64;
    let mut count = 0u64;
    for a in -r..=r {
        for c in -r..=r {
            let q = a * a + c * c;
            if q == 0 || q as f64 > bound || num_integer::Integer::gcd(&a, &c) != 1 {
                continue;
            }
            // particular solution of a·d0 − b0·c = 1
            let e = num_integer::Integer::extended_gcd(&a, &c);
            let (d0, b0) = (e.x * e.gcd, -e.y * e.gcd);
            let (qf, p, rr) = (
                q as f64,
                (a * b0 + c * d0) as f64,
                (b0 * b0 + d0 * d0) as f64,
            );
            let slack = bound - qf;
            let disc = p * p - qf * (rr - slack);
            if disc < 0.0 {
                continue;
            }
            let lo = ((-p - disc.sqrt()) / qf).floor() as i64 - 1;
            let hi = ((-p + disc.sqrt()) / qf).ceil() as i64 + 1;
            for n in lo..=hi {
                let (b, d) = (b0 + n * a, d0 + n * c);
                if ((q + b * b + d * d) as f64) <= bound {
                    count += 1;
                }
            }
        }
    }
    count
}

/// Hyperbolic area `4π(cosh k − 1)` of the comparison ball.
pub fn ball_area(k: f64) -> f64 {
    4.0 * std::f64::consts::PI * (k.cosh() - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouplin::{a_t, elementary, symmetric_distance};
    use crate::rng::{atom_rng, par_sample};

    fn real(g: &IntegerGroupElement) -> RealGroupElement {
        g.to_real()
    }

    #[test]
    fn reduce_examples() {
        let p = ModularPoint::reduce(&RealGroupElement::identity(2)).unwrap();
        assert_eq!(p.rep_array(), [1.0, 0.0, 0.0, 1.0]);
        assert!(p.deck().is_identity());
        let e5 = elementary(2, 1, 2, 5).unwrap();
        let p = ModularPoint::reduce(&real(&e5)).unwrap();
        assert_eq!(p.rep_array(), [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(p.deck(), &e5);
        let d = RealGroupElement::from_rows(2, &[3.0, 0.0, 0.0, 1.0 / 3.0]).unwrap();
        let p = ModularPoint::reduce(&d).unwrap();
        assert_eq!(p.rep(), d);
        assert!(p.deck().is_identity());
        let (x, y) = p.z();
        assert!(x.abs() < 1e-15 && (y - 9.0).abs() < 1e-12);
    }

    #[test]
    fn reduction_lands_in_domain_and_is_idempotent() {
        let pts = par_sample(1, 50, 2000, |_, rng| {
            let g = crate::grouplin::random_rotation(2, rng);
            let u = [
                rand::Rng::random_range(rng, -30.0..30.0),
                rand::Rng::random_range(rng, -4.0..4.0),
            ];
            let a = a_t(2, u[1]);
            let n = RealGroupElement::from_rows(2, &[1.0, u[0], 0.0, 1.0]).unwrap();
            &(&g * &a) * &n
        });
        for g in pts {
            let p = ModularPoint::reduce(&g).unwrap();
            let (x, y) = p.z();
            assert!(x.abs() <= 0.5 + 1e-9 && x * x + y * y >= 1.0 - 1e-9);
            assert!(p.unreduced().dist_op(&g) < 1e-7 * (1.0 + g.matrix().norm()));
            let again = ModularPoint::reduce(&p.rep()).unwrap();
            assert_eq!(again.rep_array(), p.rep_array());
            assert!(again.deck().is_identity());
        }
    }

    #[test]
    fn return_cocycle_identity() {
        let mut rng = atom_rng(2, 50, 0);
        for _ in 0..500 {
            let x = haar_sample(&mut rng);
            let g = crate::grouplin::random_rotation(2, &mut rng);
            let h = &a_t(2, rand::Rng::random_range(&mut rng, -3.0..3.0))
                * &crate::grouplin::random_rotation(2, &mut rng);
            let (hx, bh) = x.act(&h).unwrap();
            let bg = return_cocycle(&g, &hx).unwrap();
            let bgh = return_cocycle(&(&g * &h), &x).unwrap();
            assert_eq!(bgh, &bg * &bh.to_integer());
        }
        assert!(
            return_cocycle(&RealGroupElement::identity(2), &ModularPoint::identity())
                .unwrap()
                .is_identity()
        );
        // deck action on the identity coset
        let gamma = IntegerGroupElement::from_i64(2, &[2, 1, 1, 1]).unwrap();
        let b = return_cocycle(&gamma.to_real(), &ModularPoint::identity()).unwrap();
        assert!(b == gamma || b == gamma.neg());
    }

    #[test]
    fn geodesic_from_identity_diverges() {
        let seg = flow_orbit(&ModularPoint::identity(), Flow::Geodesic, 10.0, 0.1).unwrap();
        for s in &seg.samples {
            assert!((s.depth - s.time / 2.0).abs() < 1e-9);
        }
        let dec = decompose_excursions(&seg, 1.5).unwrap();
        assert_eq!(dec.omegas.len(), 1);
        assert_eq!(dec.omegas[0].end, seg.samples.len() - 1);
        assert_eq!(dec.alphas.len(), 2);
        let zero = flow_orbit(&ModularPoint::identity(), Flow::Geodesic, 0.0, 0.1).unwrap();
        assert_eq!(zero.samples.len(), 1);
    }

    #[test]
    fn deck_bookkeeping_is_exact_for_dyadic_data() {
        let x = ModularPoint::identity();
        for flow in [Flow::Horocycle, Flow::Geodesic] {
            let seg = flow_orbit(&x, flow, 3.0, 0.0625).unwrap();
            let beta = return_cocycle(&flow.group_element(3.0), &x).unwrap();
            let prod = seg.deck_product(0, seg.samples.len() - 1);
            assert!(
                prod == beta || prod == beta.neg(),
                "{flow:?}: {prod} vs {beta}"
            );
        }
    }

    #[test]
    fn long_flow_keeps_rep_times_deck() {
        let x = ModularPoint::from_upper_half_plane(0.1234, 1.3).unwrap();
        let seg = flow_orbit(&x, Flow::Horocycle, 50.0, 0.05).unwrap();
        let target = &Flow::Horocycle.group_element(50.0) * &x.unreduced();
        assert!(seg.end.unreduced().dist_op(&target) < 1e-7 * target.matrix().norm());
    }

    #[test]
    fn decomposition_partitions_the_segment() {
        let mut rng = atom_rng(3, 50, 0);
        for _ in 0..20 {
            let x = haar_sample(&mut rng);
            let seg = flow_orbit(&x, Flow::Geodesic, 200.0, 0.1).unwrap();
            let dec = decompose_excursions(&seg, 1.0).unwrap();
            let pieces = dec.pieces();
            assert_eq!(pieces[0].start, 0);
            assert_eq!(pieces.last().unwrap().end, seg.samples.len() - 1);
            for w in pieces.windows(2) {
                assert_eq!(w[0].end, w[1].start);
            }
            let total: f64 = pieces.iter().map(|p| p.duration(&seg)).sum();
            assert!((total - seg.duration).abs() < 1e-9);
            for w in &dec.omegas {
                for k in w.start + 1..w.end {
                    assert!(seg.samples[k].depth >= 1.0);
                }
            }
        }
        let seg = flow_orbit(&ModularPoint::identity(), Flow::Horocycle, 5.0, 0.1).unwrap();
        let dec = decompose_excursions(&seg, 1.0).unwrap();
        assert!(dec.omegas.is_empty() && dec.alphas.len() == 1);
        assert!(matches!(
            decompose_excursions(&seg, 0.05),
            Err(Error::ThresholdBelowNoise { .. })
        ));
    }

    #[test]
    fn glued_segments_fail_the_parabolic_test() {
        let mut rng = atom_rng(4, 50, 0);
        let x = haar_sample_thick(&mut rng);
        let seg = flow_orbit(&x, Flow::Geodesic, 300.0, 0.1).unwrap();
        let whole = Piece {
            start: 0,
            end: seg.samples.len() - 1,
        };
        assert!(!excursion_deck_class(&seg, &whole).parabolic);
        let empty = Piece { start: 3, end: 3 };
        assert!(excursion_deck_class(&seg, &empty).parabolic);
    }

    #[test]
    fn haar_depth_law() {
        let depths = par_sample(5, crate::rng::streams::HAAR, 20_000, |_, rng| {
            haar_sample(rng).depth()
        });
        let ks = ks_distance(&depths, haar_depth_cdf);
        assert!(ks < 0.015, "ks = {ks}");
        let atom = depths.iter().filter(|&&d| d == 0.0).count() as f64 / depths.len() as f64;
        assert!((atom - (1.0 - 3.0 / std::f64::consts::PI)).abs() < 0.006);
    }

    #[test]
    fn systole_depth_against_quotient_distance() {
        // (1 − log δ)/(1 + d) stays in a fixed window along random geodesics
        let mut rng = atom_rng(6, 50, 0);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let mut ratios = Vec::new();
        for _ in 0..100 {
            let x = haar_sample(&mut rng);
            let seg = flow_orbit(&x, Flow::Geodesic, 100.0, 0.1).unwrap();
            for k in (0..seg.samples.len()).step_by(10) {
                let p = seg.point(k);
                let r = (1.0 - p.systole().ln()) / (1.0 + p.distance_to_identity());
                ratios.push(r);
            }
        }
        for (i, r) in ratios.iter().enumerate() {
            if i % 2 == 0 {
                lo = lo.min(*r);
                hi = hi.max(*r);
            }
        }
        assert!(lo > 0.0);
        for r in ratios.iter().skip(1).step_by(2) {
            assert!(*r >= lo / 1.1 && *r <= hi * 1.1, "{r} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn ball_counts_are_proportional_to_area() {
        let ratios: Vec<f64> = (6..=12)
            .map(|k| count_ball(k as f64) as f64 / ball_area(k as f64))
            .collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(lo > 0.0 && hi / lo < 1.5, "{ratios:?}");
        // brute-force cross-check at a small radius
        let k = 4.0f64;
        let bound = 2.0 * k.cosh();
        let r = bound.sqrt() as i64;
        let mut brute = 0;
        for a in -r..=r {
            for b in -r..=r {
                for c in -r..=r {
                    for d in -r..=r {
                        if a * d - b * c == 1 && ((a * a + b * b + c * c + d * d) as f64) <= bound {
                            brute += 1;
                        }
                    }
                }
            }
        }
        assert_eq!(count_ball(k), brute);
        // the counting region is exactly the metric ball
        let g = IntegerGroupElement::from_i64(2, &[3, 4, 2, 3]).unwrap();
        let d = symmetric_distance(&g.to_real());
        let frob2 = 9.0 + 16.0 + 4.0 + 9.0;
        assert!((2.0 * d.cosh() - frob2).abs() < 1e-9);
    }

    #[test]
    fn orbit_csv_letters_rebuild_increments() {
        let x = ModularPoint::from_upper_half_plane(0.31, 1.2).unwrap();
        let seg = flow_orbit(&x, Flow::Geodesic, 30.0, 0.05).unwrap();
        let mut buf = Vec::new();
        write_orbit_csv(&seg, 1.0, &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let mut deck = IntegerGroupElement::identity(2);
        let mut word = IntegerGroupElement::identity(2);
        for rec in rdr.records() {
            let rec = rec.unwrap();
            if rec[5].contains("jump") {
                deck = &word * &deck;
                word = IntegerGroupElement::identity(2);
            }
            if !rec[2].is_empty() {
                let k: i64 = rec[4].parse().unwrap();
                let e = crate::grouplin::elementary(
                    2,
                    rec[2].parse().unwrap(),
                    rec[3].parse().unwrap(),
                    k,
                )
                .unwrap();
                word = &word * &e;
            }
        }
        deck = &word * &deck;
        assert_eq!(deck, seg.deck_product(0, seg.samples.len() - 1));
    }
}
