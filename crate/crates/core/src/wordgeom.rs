//! Words in the elementary matrices `E_{i,j}^k` of SL(m,ℤ): exact
//! evaluation, decomposition by pairwise row Euclid, short words for large
//! unipotent powers, and word-length checks on the return cocycle.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grouplin::{symmetric_distance, IntegerGroupElement, RealGroupElement};
use crate::modular::{return_cocycle, ModularPoint};

/// The letter `E_{i,j}^k` (1-based `i ≠ j`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Letter {
    pub i: usize,
    pub j: usize,
    pub k: BigInt,
}

impl Letter {
    pub fn new(i: usize, j: usize, k: impl Into<BigInt>) -> Self {
        Self { i, j, k: k.into() }
    }

    pub fn inverse(&self) -> Letter {
        Letter {
            i: self.i,
            j: self.j,
            k: -&self.k,
        }
    }

    /// `1 + log₂(1 + |k|)`.
    pub fn cost(&self) -> f64 {
        1.0 + log2_1p(&self.k)
    }

    fn pair(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }
}

fn log2_1p(k: &BigInt) -> f64 {
    let a = k.abs() + 1u32;
    let bits = a.bits();
    if bits <= 1000 {
        a.to_f64().unwrap().log2()
    } else {
        let shift = bits - 60;
        (&a >> shift).to_f64().unwrap().log2() + shift as f64
    }
}

/// A word `E_{i₁,j₁}^{k₁} ⋯ E_{i_n,j_n}^{k_n}` in SL(m,ℤ).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupWord {
    dim: usize,
    letters: Vec<Letter>,
}

impl GroupWord {
    pub fn new(dim: usize, letters: Vec<Letter>) -> Result<Self> {
        for l in &letters {
            if l.i == l.j || l.i == 0 || l.j == 0 || l.i > dim || l.j > dim {
                return Err(Error::InvalidIndex {
                    i: l.i,
                    j: l.j,
                    m: dim,
                });
            }
        }
        Ok(Self { dim, letters })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            letters: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn letter_count(&self) -> usize {
        self.letters.len()
    }

    /// `Σ (1 + log₂(1 + |k|))` over letters.
    pub fn log_cost(&self) -> f64 {
        self.letters.iter().map(Letter::cost).sum()
    }

    /// Number of maximal runs of letters lying in a common `H_{i,j}`.
    pub fn factor_count(&self) -> usize {
        let mut count = 0;
        let mut last = None;
        for l in &self.letters {
            let p = l.pair();
            if last != Some(p) {
                count += 1;
                last = Some(p);
            }
        }
        count
    }

    pub fn inverse(&self) -> GroupWord {
        Self {
            dim: self.dim,
            letters: self.letters.iter().rev().map(Letter::inverse).collect(),
        }
    }

    pub fn concat(&self, other: &GroupWord) -> GroupWord {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut letters = self.letters.clone();
        letters.extend(other.letters.iter().cloned());
        Self {
            dim: self.dim,
            letters,
        }
    }

    fn push(&mut self, l: Letter) {
        if !l.k.is_zero() {
            self.letters.push(l);
        }
    }

    fn extend(&mut self, w: GroupWord) {
        self.letters.extend(w.letters);
    }

    /// Parse lines `i j k`; blank lines and `#` comments are ignored.
    pub fn parse(dim: usize, text: &str) -> Result<Self> {
        let mut letters = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| Error::Parse {
                line: n + 1,
                message,
            };
            if parts.len() != 3 {
                return Err(err(format!(
                    "expected `i j k`, found {} fields",
                    parts.len()
                )));
            }
            let i = parts[0].parse::<usize>().map_err(|e| err(e.to_string()))?;
            let j = parts[1].parse::<usize>().map_err(|e| err(e.to_string()))?;
            let k = parts[2].parse::<BigInt>().map_err(|e| err(e.to_string()))?;
            letters.push(Letter { i, j, k });
        }
        Self::new(dim, letters)
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for GroupWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            writeln!(f, "{} {} {}", l.i, l.j, l.k)?;
        }
        Ok(())
    }
}

/// Exact ordered product of the letters.
pub fn word_eval(w: &GroupWord) -> IntegerGroupElement {
    let mut g = IntegerGroupElement::identity(w.dim);
    for l in &w.letters {
        // right multiplication by E_{i,j}^k: col_j += k·col_i
        g.col_add(l.i - 1, l.j - 1, &l.k);
    }
    g
}

// ---------------------------------------------------------------------------
// Decomposition

#[derive(Clone, Debug)]
pub struct DecompositionReport {
    pub word: GroupWord,
    pub factor_count: usize,
    pub log_cost: f64,
    /// Natural log of the operator norm of the input.
    pub input_log_norm: f64,
    /// Largest absolute entry met during the reduction.
    pub max_intermediate: BigInt,
}

fn round_div(a: &BigInt, b: &BigInt) -> BigInt {
    // nearest integer to a/b, ties toward −∞
    let (a2, b2): (BigInt, BigInt) = if b.is_negative() {
        (-a * 2, -b * 2)
    } else {
        (a * 2, b * 2)
    };
    let num: BigInt = a2 + &b2 / 2;
    num.div_floor(&b2)
}

struct Reducer {
    g: IntegerGroupElement,
    ops: Vec<Letter>,
    max_entry: BigInt,
}

impl Reducer {
    /// `row_r += q·row_c`, i.e. left multiplication by `E_{r,c}^q`.
    fn op(&mut self, r: usize, c: usize, q: BigInt) {
        if q.is_zero() {
            return;
        }
        self.g.row_add(r, c, &q);
        for col in 0..self.g.dim() {
            let v = self.g.entry(r, col).abs();
            if v > self.max_entry {
                self.max_entry = v;
            }
        }
        self.ops.push(Letter {
            i: r + 1,
            j: c + 1,
            k: q,
        });
    }

    fn at(&self, r: usize, c: usize) -> BigInt {
        self.g.entry(r, c).clone()
    }

    /// Euclid between rows `p` and `r` on column `c`, leaving `g[r][c] = 0`.
    fn euclid(&mut self, p: usize, r: usize, c: usize) {
        loop {
            let ar = self.at(r, c);
            if ar.is_zero() {
                return;
            }
            let q = round_div(&self.at(p, c), &ar);
            self.op(p, r, -q);
            let ap = self.at(p, c);
            if ap.is_zero() {
                // move the remaining entry from row r to row p
                self.op(p, r, BigInt::one());
                self.op(r, p, -BigInt::one());
                return;
            }
            let q = round_div(&self.at(r, c), &ap);
            self.op(r, p, -q);
        }
    }
}

/// Write `γ` as a word in elementary matrices (any `m ≥ 2`).
///
/// Column by column, pairwise Euclid between adjacent rows from the bottom
/// up moves the column gcd to the diagonal; a three-letter move fixes its
/// sign, and the entries above are cleared last. Every Euclid run stays in
/// a single `H_{i,j}`, so the factor count is at most `m(m − 1)` plus sign
/// moves.
pub fn decompose(gamma: &IntegerGroupElement) -> DecompositionReport {
    let m = gamma.dim();
    let mut red = Reducer {
        g: gamma.clone(),
        ops: Vec::new(),
        max_entry: gamma.max_abs(),
    };
    for c in 0..m - 1 {
        for r in (c + 1..m).rev() {
            red.euclid(r - 1, r, c);
        }
        if red.at(c, c).is_negative() {
            let r = c + 1;
            red.op(r, c, -BigInt::one());
            red.op(c, r, BigInt::from(2));
            red.op(r, c, -BigInt::one());
        }
        debug_assert!(red.at(c, c).is_one());
    }
    for c in (1..m).rev() {
        for r in 0..c {
            let q = -red.at(r, c);
            red.op(r, c, q);
        }
    }
    debug_assert!(red.g.is_identity());
    // L_n ⋯ L_1 γ = I  ⟹  γ = L_1^{−1} ⋯ L_n^{−1}
    let letters: Vec<Letter> = red.ops.iter().map(Letter::inverse).collect();
    let word = GroupWord { dim: m, letters };
    DecompositionReport {
        factor_count: word.factor_count(),
        log_cost: word.log_cost(),
        input_log_norm: gamma.log_norm(),
        max_intermediate: red.max_entry,
        word,
    }
}

/// Bounded-generation decomposition in SL(m,ℤ), `m ≥ 3`.
pub fn lmr_decompose(gamma: &IntegerGroupElement) -> Result<DecompositionReport> {
    if gamma.dim() < 3 {
        return Err(Error::Precondition(
            "decomposition report requires m ≥ 3".into(),
        ));
    }
    Ok(decompose(gamma))
}

// ---------------------------------------------------------------------------
// Short unipotent words

/// Frozen bound on `len / (log₂|k|)²` for [`unipotent_short_word`], `|k| ≥ 2`.
/// The largest ratio seen for `k ≤ 2³⁰` is about 2.06 (at `k = 2²⁴ − 1`).
pub const SHORT_WORD_CONSTANT: f64 = 2.25;

/// Exponents up to this size are written as runs of unit letters.
const UNIT_RUN: u64 = 4;

fn commutator(a: GroupWord, b: GroupWord) -> GroupWord {
    let (ai, bi) = (a.inverse(), b.inverse());
    let mut w = a;
    w.extend(b);
    w.extend(ai);
    w.extend(bi);
    w
}

fn unit_run(m: usize, i: usize, j: usize, k: u64) -> GroupWord {
    let mut w = GroupWord::empty(m);
    for _ in 0..k {
        w.push(Letter::new(i, j, 1));
    }
    w
}

fn aux(m: usize, i: usize, j: usize) -> usize {
    (1..=m).find(|&l| l != i && l != j).expect("m ≥ 3")
}

/// `E_{i,j}^{2^h}` by balanced commutators.
fn power_of_two(m: usize, i: usize, j: usize, h: u32) -> GroupWord {
    if (1u64 << h.min(63)) <= UNIT_RUN && h < 63 {
        return unit_run(m, i, j, 1 << h);
    }
    let l = aux(m, i, j);
    let a = h.div_ceil(2);
    let b = h - a;
    commutator(power_of_two(m, i, l, a), power_of_two(m, l, j, b))
}

fn positive_word(m: usize, i: usize, j: usize, k: &BigInt) -> GroupWord {
    if k.is_zero() {
        return GroupWord::empty(m);
    }
    if let Some(small) = k.to_u64() {
        if small <= UNIT_RUN {
            return unit_run(m, i, j, small);
        }
    }
    // k = q·2^h + r with q, 2^h, r of about half the bit length
    let h = (k.bits() / 2) as u32;
    let q: BigInt = k >> h;
    let r: BigInt = k - (&q << h);
    let l = aux(m, i, j);
    let mut w = commutator(positive_word(m, i, l, &q), power_of_two(m, l, j, h));
    w.extend(positive_word(m, i, j, &r));
    w
}

/// A word in unit letters `E^{±1}` evaluating to `E_{i,j}^k`, of length
/// `O((1 + log₂|k|)²)`. Needs an auxiliary index, hence `m ≥ 3`; in
/// SL(2,ℤ) the word length of `E^k` grows linearly in `k`.
pub fn unipotent_short_word(
    i: usize,
    j: usize,
    k: impl Into<BigInt>,
    m: usize,
) -> Result<GroupWord> {
    if m < 3 {
        return Err(Error::Precondition("m = 2 has no auxiliary index".into()));
    }
    if i == j || i == 0 || j == 0 || i > m || j > m {
        return Err(Error::InvalidIndex { i, j, m });
    }
    let k: BigInt = k.into();
    let w = positive_word(m, i, j, &k.abs());
    Ok(if k.is_negative() { w.inverse() } else { w })
}

// ---------------------------------------------------------------------------
// Word length of the return cocycle

/// Word-length proxy `log(1 + ‖β − I‖)`, zero exactly at the identity.
pub fn word_length_proxy(beta: &IntegerGroupElement) -> f64 {
    let m = beta.dim();
    let mut diff = beta.clone();
    for k in 0..m {
        *diff.entry_mut(k, k) -= 1;
    }
    if diff.max_abs().is_zero() {
        return 0.0;
    }
    let ln = diff.log_norm();
    // log(1 + e^ln) without overflow
    ln.max(0.0) + (-ln.abs()).exp().ln_1p()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FromLmrReport {
    /// Smallest `C` with `ℓ̂ ≤ C·(d(g, Id) + depth(x) + 1)` on all samples.
    pub c: f64,
    /// Index of the sample attaining `C`.
    pub saturating: usize,
    pub samples: usize,
}

/// Fit the word-length bound on the return cocycle over `(g, x)` samples.
pub fn fromlmr_check(samples: &[(RealGroupElement, ModularPoint)]) -> Result<FromLmrReport> {
    let mut c = 0.0;
    let mut saturating = 0;
    for (n, (g, x)) in samples.iter().enumerate() {
        let beta = return_cocycle(g, x)?;
        let ratio = word_length_proxy(&beta) / (symmetric_distance(g) + x.depth() + 1.0);
        if ratio > c {
            c = ratio;
            saturating = n;
        }
    }
    Ok(FromLmrReport {
        c,
        saturating,
        samples: samples.len(),
    })
}

// ---------------------------------------------------------------------------
// The embedded SL(2,ℤ) ⋉ ℤ²

/// `A·v` for `A ∈ SL(2,ℤ)`, `v ∈ ℤ²`, checked through the exact identity
/// `diag(A, 1)·u_v·diag(A, 1)^{−1} = u_{Av}` in SL(3,ℤ), where
/// `u_v = E_{1,3}^{v₁} E_{2,3}^{v₂}`.
pub fn semidirect_conjugate(a: &IntegerGroupElement, v: [BigInt; 2]) -> Result<[BigInt; 2]> {
    if a.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: a.dim(),
        });
    }
    let embed = |x: &IntegerGroupElement| {
        let mut e = IntegerGroupElement::identity(3);
        for r in 0..2 {
            for c in 0..2 {
                *e.entry_mut(r, c) = x.entry(r, c).clone();
            }
        }
        e
    };
    let u = |w: &[BigInt; 2]| {
        let mut e = IntegerGroupElement::identity(3);
        *e.entry_mut(0, 2) = w[0].clone();
        *e.entry_mut(1, 2) = w[1].clone();
        e
    };
    let av = [
        a.entry(0, 0) * &v[0] + a.entry(0, 1) * &v[1],
        a.entry(1, 0) * &v[0] + a.entry(1, 1) * &v[1],
    ];
    let lhs = &(&embed(a) * &u(&v)) * &embed(&a.inverse());
    if lhs != u(&av) {
        return Err(Error::Precondition("conjugation identity failed".into()));
    }
    Ok(av)
}
