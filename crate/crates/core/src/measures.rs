//! Empirical measures on `G/Γ`: orbit and unipotent averages, cusp-mass
//! functionals, quantitative non-divergence, Følner averages over `AN′`,
//! the two-step haarization and the `T_c` tail profile.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouplin::{cartan_element, exp_root, CartanVector, RealGroupElement, Root};
use crate::lattices::{UnimodularLattice, ENUMERATION_BUDGET};
use crate::rng::{par_sample, streams};
use crate::space::HomogeneousPoint;

/// Most atoms any measure may hold.
pub const MAX_ATOMS: usize = 10_000_000;
/// Most Monte-Carlo samples for a single profile.
pub const MAX_SAMPLES: usize = 10_000_000;
/// Tolerance on `Σ weights = 1`.
pub const WEIGHT_TOL: f64 = 1e-12;

/// A Monte-Carlo estimate with its standard error and sample count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    /// Estimate of a Bernoulli frequency `k/n`.
    pub fn proportion(k: usize, n: usize) -> Self {
        let p = k as f64 / n as f64;
        Self {
            value: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }

    /// `|a − b|` in units of the combined standard error.
    pub fn sigmas_apart(&self, other: &Estimate) -> f64 {
        let s = self.stderr.hypot(other.stderr);
        if s == 0.0 {
            if self.value == other.value {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - other.value).abs() / s
        }
    }
}

/// Seed and stream a measure was sampled from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub stream: u64,
}

#[derive(Clone, Debug)]
pub struct Atom<P> {
    pub point: P,
    pub weight: f64,
    pub fiber: Option<Vec<f64>>,
}

/// A finitely supported probability measure.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure<P> {
    atoms: Vec<Atom<P>>,
    provenance: Option<Provenance>,
}

impl<P: HomogeneousPoint> EmpiricalMeasure<P> {
    pub fn new(atoms: Vec<Atom<P>>, provenance: Option<Provenance>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Precondition(
                "a measure needs at least one atom".into(),
            ));
        }
        if atoms.len() > MAX_ATOMS {
            return Err(Error::AtomBudgetExceeded {
                requested: atoms.len(),
                budget: MAX_ATOMS,
            });
        }
        if let Some(a) = atoms.iter().find(|a| !(a.weight > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "atom weight {} is not positive",
                a.weight
            )));
        }
        let total = compensated_sum(atoms.iter().map(|a| a.weight));
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidArgument(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { atoms, provenance })
    }

    /// Equal weights on `points`.
    pub fn uniform(points: Vec<P>, provenance: Option<Provenance>) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        let atoms = points
            .into_iter()
            .map(|point| Atom {
                point,
                weight: w,
                fiber: None,
            })
            .collect();
        Self::new(atoms, provenance)
    }

    pub fn point_mass(point: P) -> Self {
        Self {
            atoms: vec![Atom {
                point,
                weight: 1.0,
                fiber: None,
            }],
            provenance: None,
        }
    }

    pub fn atoms(&self) -> &[Atom<P>] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].point.dim()
    }

    pub fn provenance(&self) -> Option<Provenance> {
        self.provenance
    }

    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.atoms.iter().map(|a| a.weight))
    }

    pub fn integrate(&self, f: impl Fn(&P) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(&a.point)).sum()
    }

    /// `∫ f dμ` with the standard error of a weighted i.i.d. mean. Values are
    /// computed in parallel and reduced in atom order.
    pub fn estimate(&self, f: impl Fn(&P) -> Result<f64> + Sync) -> Result<Estimate>
    where
        P: Sync,
    {
        let values: Vec<f64> = self
            .atoms
            .par_iter()
            .map(|a| f(&a.point))
            .collect::<Result<_>>()?;
        Ok(weighted_estimate(&self.atoms, &values))
    }

    /// `λμ + (1 − λ)ν`.
    pub fn mixture(&self, other: &EmpiricalMeasure<P>, lambda: f64) -> Result<Self> {
        if !(0.0 < lambda && lambda < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mixture weight {lambda} not in (0,1)"
            )));
        }
        let mut atoms: Vec<Atom<P>> = self
            .atoms
            .iter()
            .map(|a| Atom {
                weight: a.weight * lambda,
                ..a.clone()
            })
            .collect();
        atoms.extend(other.atoms.iter().map(|a| Atom {
            weight: a.weight * (1.0 - lambda),
            ..a.clone()
        }));
        Self::new(atoms, None)
    }

    /// One CSV row per atom: `weight`, representative entries row-major,
    /// then the fiber vector if present.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        let m = self.dim();
        let mut header = vec!["weight".to_string()];
        for r in 0..m {
            for c in 0..m {
                header.push(format!("g{r}{c}"));
            }
        }
        if let Some(f) = &self.atoms[0].fiber {
            header.extend((0..f.len()).map(|k| format!("fiber{k}")));
        }
        w.write_record(&header)?;
        for a in &self.atoms {
            let mut row = vec![a.weight.to_string()];
            row.extend(a.point.representative().iter().map(|x| x.to_string()));
            if let Some(f) = &a.fiber {
                row.extend(f.iter().map(|x| x.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Neumaier summation.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in xs {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + comp
}

fn weighted_estimate<P>(atoms: &[Atom<P>], values: &[f64]) -> Estimate {
    let mean: f64 = atoms.iter().zip(values).map(|(a, v)| a.weight * v).sum();
    let var: f64 = atoms
        .iter()
        .zip(values)
        .map(|(a, v)| a.weight * (v - mean).powi(2))
        .sum();
    let w2: f64 = atoms.iter().map(|a| a.weight * a.weight).sum();
    Estimate {
        value: mean,
        stderr: (var * w2).sqrt(),
        n: atoms.len(),
    }
}

// ---------------------------------------------------------------------------
// Orbit and unipotent averages

/// Uniform measure on `n_atoms` equally spaced points `exp(sY)·x`,
/// `0 ≤ s ≤ t`. The orbit is generated by repeated small steps.
pub fn empirical_measure<P: HomogeneousPoint>(
    direction: &DMatrix<f64>,
    t: f64,
    x: &P,
    n_atoms: usize,
) -> Result<EmpiricalMeasure<P>> {
    if !(t > 0.0) || n_atoms == 0 {
        return Err(Error::InvalidArgument(format!(
            "need t > 0 and n_atoms ≥ 1, got t = {t}, n = {n_atoms}"
        )));
    }
    if n_atoms > MAX_ATOMS {
        return Err(Error::AtomBudgetExceeded {
            requested: n_atoms,
            budget: MAX_ATOMS,
        });
    }
    if direction.nrows() != x.dim() || direction.ncols() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: direction.nrows(),
        });
    }
    let mut points = vec![x.clone()];
    if n_atoms > 1 {
        let h = t / (n_atoms - 1) as f64;
        let step = RealGroupElement::new((direction * h).exp())?;
        for _ in 1..n_atoms {
            let next = points.last().unwrap().translate(&step)?;
            points.push(next);
        }
    }
    EmpiricalMeasure::uniform(points, None)
}

/// `U^T ∗ μ`: every atom is replaced by `substeps` atoms `u(s_j)·p`,
/// `s_j = jT/substeps` (left Riemann sum), its weight split evenly.
/// Fiber data is dropped.
pub fn average_unipotent<P: HomogeneousPoint>(
    mu: &EmpiricalMeasure<P>,
    root: Root,
    t: f64,
    substeps: usize,
) -> Result<EmpiricalMeasure<P>> {
    if !(t >= 0.0) || substeps == 0 {
        return Err(Error::InvalidArgument(format!(
            "need T ≥ 0 and substeps ≥ 1, got T = {t}"
        )));
    }
    if t == 0.0 {
        return Ok(mu.clone());
    }
    let requested = mu.len().saturating_mul(substeps);
    if requested > MAX_ATOMS {
        return Err(Error::AtomBudgetExceeded {
            requested,
            budget: MAX_ATOMS,
        });
    }
    let m = mu.dim();
    Root::new(m, root.i, root.j)?;
    let step = exp_root(m, root, t / substeps as f64);
    let blocks: Vec<Vec<Atom<P>>> = mu
        .atoms
        .par_iter()
        .map(|a| {
            let w = a.weight / substeps as f64;
            let mut out = Vec::with_capacity(substeps);
            let mut p = a.point.clone();
            for j in 0..substeps {
                if j > 0 {
                    p = p.translate(&step)?;
                }
                out.push(Atom {
                    point: p.clone(),
                    weight: w,
                    fiber: None,
                });
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    EmpiricalMeasure::new(blocks.into_iter().flatten().collect(), mu.provenance)
}

// ---------------------------------------------------------------------------
// Cusp mass

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuspMassReport {
    pub etas: Vec<f64>,
    /// `∫ e^{η·depth} dμ`.
    pub exp_mass: Vec<Estimate>,
    /// `∫ δ^{−η} dμ`.
    pub sys_mass: Vec<Estimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuspMassSummary {
    pub reports: Vec<CuspMassReport>,
    /// Per `η`, the largest exp-mass over the family.
    pub family_sup: Vec<Estimate>,
}

/// Exponential and systolic cusp masses of each measure, plus the family
/// supremum per `η`.
pub fn cusp_mass<P: HomogeneousPoint>(
    measures: &[EmpiricalMeasure<P>],
    etas: &[f64],
) -> Result<CuspMassSummary> {
    if measures.is_empty() || etas.is_empty() {
        return Err(Error::Precondition(
            "cusp mass needs measures and exponents".into(),
        ));
    }
    let mut reports = Vec::with_capacity(measures.len());
    for mu in measures {
        let sys: Vec<f64> = mu
            .atoms
            .par_iter()
            .map(|a| a.point.systole())
            .collect::<Result<_>>()?;
        let mut exp_mass = Vec::new();
        let mut sys_mass = Vec::new();
        for &eta in etas {
            let e: Vec<f64> = sys
                .iter()
                .map(|s| (eta * (-s.ln()).max(0.0)).exp())
                .collect();
            let d: Vec<f64> = sys.iter().map(|s| s.powf(-eta)).collect();
            exp_mass.push(weighted_estimate(&mu.atoms, &e));
            sys_mass.push(weighted_estimate(&mu.atoms, &d));
        }
        reports.push(CuspMassReport {
            etas: etas.to_vec(),
            exp_mass,
            sys_mass,
        });
    }
    let family_sup = (0..etas.len())
        .map(|k| {
            reports
                .iter()
                .map(|r| r.exp_mass[k])
                .fold(None, |best: Option<Estimate>, e| match best {
                    Some(b) if b.value >= e.value => Some(b),
                    _ => Some(e),
                })
                .unwrap()
        })
        .collect();
    Ok(CuspMassSummary {
        reports,
        family_sup,
    })
}

// ---------------------------------------------------------------------------
// Quantitative non-divergence

/// Fractions of `t ∈ [0, T]` with `δ(u_t·x) ≤ ε`, for every `ε` in
/// `eps_grid`, sampled with spacing `step` along the highest-root unipotent.
pub fn km_fractions<P: HomogeneousPoint>(
    x: &P,
    t: f64,
    eps_grid: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    if !(t > 0.0) || eps_grid.is_empty() {
        return Err(Error::InvalidArgument(
            "need T > 0 and a nonempty ε grid".into(),
        ));
    }
    let finest = eps_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(step > 0.0) || step > finest / 10.0 {
        return Err(Error::StepResolution { eps: finest, step });
    }
    let m = x.dim();
    let n = (t / step).ceil() as usize;
    if n > MAX_SAMPLES * 10 {
        return Err(Error::SampleBudgetExceeded {
            requested: n,
            budget: MAX_SAMPLES * 10,
        });
    }
    let u = exp_root(m, Root::highest(m), t / n as f64);
    let mut counts = vec![0usize; eps_grid.len()];
    let mut p = x.clone();
    for k in 0..n {
        if k > 0 {
            p = p.translate(&u)?;
        }
        let s = p.systole()?;
        for (c, &eps) in counts.iter_mut().zip(eps_grid) {
            if s <= eps {
                *c += 1;
            }
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

/// Fraction of `t ∈ [0, T]` with `δ(u_t·x) ≤ ε`, step `ε/10`.
pub fn km_fraction<P: HomogeneousPoint>(x: &P, t: f64, eps: f64) -> Result<f64> {
    Ok(km_fractions(x, t, &[eps], eps / 10.0)?[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmRow {
    pub eps: f64,
    pub fraction: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmFit {
    pub c_hat: f64,
    pub fit_eps: f64,
    pub exponent: f64,
    pub rho: f64,
    pub rows: Vec<KmRow>,
}

/// Fit `Ĉ = fraction(ε₀)/(ε₀/ρ)^{1/m²}` at `fit_eps = ε₀` and test
/// `fraction(ε) ≤ Ĉ(ε/ρ)^{1/m²}` at the other scales.
pub fn km_fit(
    m: usize,
    rho: f64,
    eps_grid: &[f64],
    fractions: &[f64],
    fit_eps: f64,
) -> Result<KmFit> {
    let k = eps_grid
        .iter()
        .position(|&e| e == fit_eps)
        .ok_or_else(|| Error::InvalidArgument(format!("fit scale {fit_eps} not in the ε grid")))?;
    let exponent = 1.0 / (m * m) as f64;
    let c_hat = fractions[k] / (fit_eps / rho).powf(exponent);
    let rows = eps_grid
        .iter()
        .zip(fractions)
        .map(|(&eps, &fraction)| {
            let bound = c_hat * (eps / rho).powf(exponent);
            KmRow {
                eps,
                fraction,
                bound,
                holds: fraction <= bound * (1.0 + 1e-12),
            }
        })
        .collect();
    Ok(KmFit {
        c_hat,
        fit_eps,
        exponent,
        rho,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Følner sets in AN′

pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_R_RATE: f64 = 2.0;
/// Growth rate of the `N′` ball used in the original construction.
pub const CONSTRUCTION_R_RATE: f64 = 200.0;
/// Below this radius the `N′` ball is sampled literally; above it `r` is
/// drawn uniformly from a fundamental cell of `K·ℤ^{m−1}`.
const LITERAL_BALL_RADIUS: f64 = 1e6;

/// `F = {a^t b^s ∏c_i^{s_i} u^r}` with `0 < t < t_n`, `δt_n/2 < s < δt_n`,
/// `0 < s_i < √t_n` and `|r| < e^{r_rate·t_n}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FolnerBox {
    pub t_n: f64,
    pub delta: f64,
    pub r_rate: f64,
}

/// Box coordinates of `a^t b^s ∏c_i^{s_i} u^r`. The `N′` coordinate is
/// stored as `r̂ = r/e^{r_rate·t_n}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FolnerCoords {
    pub t: f64,
    pub s: f64,
    pub s_i: Vec<f64>,
    pub r_hat: Vec<f64>,
}

/// An element `a^t b^s ∏c_i^{s_i} u^ρ` of `AN′` (unscaled `ρ`).
#[derive(Clone, Debug, PartialEq)]
pub struct AnElement {
    pub t: f64,
    pub s: f64,
    pub s_i: Vec<f64>,
    pub rho: Vec<f64>,
}

impl AnElement {
    /// `a^τ`.
    pub fn a(m: usize, tau: f64) -> Self {
        Self {
            t: tau,
            s: 0.0,
            s_i: vec![0.0; m.saturating_sub(3)],
            rho: vec![0.0; m - 1],
        }
    }
}

fn diagonal_logs(m: usize, t: f64, s: f64, s_i: &[f64]) -> Result<Vec<f64>> {
    let mut v = CartanVector::a_generator(m)
        .scaled(t)
        .add(&CartanVector::b_generator(m).scaled(s));
    for (i, &si) in s_i.iter().enumerate() {
        v = v.add(&CartanVector::c_generator(m, i + 1)?.scaled(si));
    }
    Ok(v.as_slice().to_vec())
}

impl FolnerBox {
    pub fn new(t_n: f64, delta: f64, r_rate: f64) -> Result<Self> {
        if !(t_n > 0.0 && t_n.is_finite()) {
            return Err(Error::Config {
                field: "t_n".into(),
                message: format!("must be positive, got {t_n}"),
            });
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config {
                field: "delta".into(),
                message: format!("must be positive, got {delta}"),
            });
        }
        if !(r_rate >= 0.0 && r_rate.is_finite()) {
            return Err(Error::Config {
                field: "r_rate".into(),
                message: format!("must be nonnegative, got {r_rate}"),
            });
        }
        Ok(Self { t_n, delta, r_rate })
    }

    pub fn log_radius(&self) -> f64 {
        self.r_rate * self.t_n
    }

    pub fn contains(&self, p: &FolnerCoords) -> bool {
        let rt = self.t_n.sqrt();
        0.0 < p.t
            && p.t < self.t_n
            && self.delta * self.t_n / 2.0 < p.s
            && p.s < self.delta * self.t_n
            && p.s_i.iter().all(|&x| 0.0 < x && x < rt)
            && p.r_hat.iter().map(|x| x * x).sum::<f64>() < 1.0
    }

    /// Uniform point of `F` in box coordinates (Lebesgue measure in these
    /// coordinates is left Haar measure on `AN′`).
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> FolnerCoords {
        let rt = self.t_n.sqrt();
        let t = self.t_n * open01(rng);
        let s = self.delta * self.t_n * (0.5 + 0.5 * open01(rng));
        let s_i = (0..m.saturating_sub(3)).map(|_| rt * open01(rng)).collect();
        let r_hat = loop {
            let v: Vec<f64> = (0..m - 1)
                .map(|_| 2.0 * rng.random::<f64>() - 1.0)
                .collect();
            if v.iter().map(|x| x * x).sum::<f64>() < 1.0 {
                break v;
            }
        };
        FolnerCoords { t, s, s_i, r_hat }
    }

    /// Box coordinates of `g^{−1}·p`.
    pub fn left_divide(&self, m: usize, g: &AnElement, p: &FolnerCoords) -> Result<FolnerCoords> {
        let t = p.t - g.t;
        let s = p.s - g.s;
        let s_i: Vec<f64> = p.s_i.iter().zip(&g.s_i).map(|(a, b)| a - b).collect();
        // g^{−1}p = E·u^{r − Ad(E^{−1})ρ} with E = D_g^{−1}D_p diagonal
        let e = diagonal_logs(m, t, s, &s_i)?;
        let log_r = self.log_radius();
        let r_hat = p
            .r_hat
            .iter()
            .zip(&g.rho)
            .zip(&e)
            .map(|((r, rho), ei)| {
                if *rho == 0.0 {
                    *r
                } else {
                    r - rho.signum() * (rho.abs().ln() + e[m - 1] - ei - log_r).exp()
                }
            })
            .collect();
        Ok(FolnerCoords { t, s, s_i, r_hat })
    }

    /// `|gF Δ F|/|F| = 2·P(g^{−1}p ∉ F)` for `p` uniform in `F`.
    pub fn defect(&self, m: usize, g: &AnElement, n_samples: usize, seed: u64) -> Result<Estimate> {
        if n_samples > MAX_SAMPLES {
            return Err(Error::SampleBudgetExceeded {
                requested: n_samples,
                budget: MAX_SAMPLES,
            });
        }
        let outside: Vec<bool> = par_sample(seed, streams::FOLNER, n_samples, |_, rng| {
            let p = self.sample(m, rng);
            self.left_divide(m, g, &p).map(|q| !self.contains(&q))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let k = outside.iter().filter(|&&b| b).count();
        let e = Estimate::proportion(k, n_samples);
        Ok(Estimate {
            value: 2.0 * e.value,
            stderr: 2.0 * e.stderr,
            n: n_samples,
        })
    }
}

fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// `diag(K, 1)`.
pub fn block_base(k: &RealGroupElement) -> Result<RealGroupElement> {
    let n = k.dim();
    let mut e = DMatrix::identity(n + 1, n + 1);
    e.view_mut((0, 0), (n, n)).copy_from(k.matrix());
    RealGroupElement::new(e)
}

/// `r` reduced into the cell `K·[−½, ½)^{m−1}`.
fn reduce_mod_k(k: &RealGroupElement, k_inv: &RealGroupElement, r: &[f64]) -> Vec<f64> {
    let n = r.len();
    let q = k_inv.matrix() * nalgebra::DVector::from_column_slice(r);
    let frac = q.map(|x| x - x.round());
    let out = k.matrix() * frac;
    (0..n).map(|i| out[i]).collect()
}

/// The lattice `D·u^r·diag(K, 1)` with `D = a^t b^s ∏c_i^{s_i}`.
///
/// `D` stretches `N′` by up to `e^{4s}`, beyond what a single reduction in
/// double precision can resolve, so it is applied in steps of log-size at
/// most one with a reduction after each. Every step is backward stable, so
/// the result is the exact image of a slightly perturbed `r`.
pub fn folner_point(
    k: &RealGroupElement,
    t: f64,
    s: f64,
    s_i: &[f64],
    r: &[f64],
) -> Result<UnimodularLattice> {
    let n = k.dim();
    let m = n + 1;
    let logs = CartanVector::new(diagonal_logs(m, t, s, s_i)?)?;
    let mut x = DMatrix::identity(m, m);
    x.view_mut((0, 0), (n, n)).copy_from(k.matrix());
    for i in 0..n {
        x[(i, n)] = r[i];
    }
    let mut lattice = UnimodularLattice::new(x)?;
    let steps = logs.max_abs().ceil().max(1.0) as usize;
    let step = cartan_element(&logs.scaled(1.0 / steps as f64));
    for _ in 0..steps {
        lattice = lattice.translate(&step)?;
    }
    Ok(lattice)
}

/// Depth above which a base lattice is not considered thick.
pub const BASE_THICK_DEPTH: f64 = 1.0;

fn check_base(k: &RealGroupElement) -> Result<()> {
    let depth = UnimodularLattice::from_group(&block_base(k)?)?.depth()?;
    if depth > BASE_THICK_DEPTH {
        return Err(Error::NonThickEndpoint { index: 0, depth });
    }
    Ok(())
}

/// Monte-Carlo sample of the Følner average `μ_n` of `x = diag(K, 1)`.
///
/// Since `β(r)` only depends on `r` modulo `K·ℤ^{m−1}`, every `r` is reduced
/// into a fundamental cell; once the ball is wider than `10⁶` the cell
/// coordinate is drawn uniformly instead of reducing a float with no
/// fractional precision left.
pub fn folner_average(
    k: &RealGroupElement,
    fbox: &FolnerBox,
    n_atoms: usize,
    seed: u64,
) -> Result<EmpiricalMeasure<UnimodularLattice>> {
    let m = k.dim() + 1;
    if m < 3 {
        return Err(Error::Precondition("Følner averages need m ≥ 3".into()));
    }
    if n_atoms > MAX_ATOMS {
        return Err(Error::AtomBudgetExceeded {
            requested: n_atoms,
            budget: MAX_ATOMS,
        });
    }
    check_base(k)?;
    let k_inv = k.inverse();
    let radius = fbox.log_radius().exp();
    let points: Vec<UnimodularLattice> = par_sample(seed, streams::FOLNER, n_atoms, |_, rng| {
        let p = fbox.sample(m, rng);
        let r = if radius <= LITERAL_BALL_RADIUS {
            let literal: Vec<f64> = p.r_hat.iter().map(|x| x * radius).collect();
            reduce_mod_k(k, &k_inv, &literal)
        } else {
            let q: Vec<f64> = (0..m - 1).map(|_| rng.random::<f64>() - 0.5).collect();
            let v = k.matrix() * nalgebra::DVector::from_column_slice(&q);
            v.iter().cloned().collect()
        };
        folner_point(k, p.t, p.s, &p.s_i, &r)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    EmpiricalMeasure::uniform(
        points,
        Some(Provenance {
            seed,
            stream: streams::FOLNER,
        }),
    )
}

// ---------------------------------------------------------------------------
// T_c profile

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TcProfile {
    pub c_grid: Vec<f64>,
    /// `P(β(r) > c)` for `r` uniform in the cell `D = K·[−½,½]^{m−1}`.
    pub fractions: Vec<Estimate>,
    /// Weighted least-squares slope of `log fraction` against `c`.
    pub slope: f64,
    pub slope_stderr: f64,
    /// `slope + 1.645·stderr < 0`.
    pub negative_95: bool,
}

/// Tail profile of `β(r) = −log δ(a^t b^s ∏c_i^{s_i} u^r x̃)` over the cell.
pub fn tc_profile(
    k: &RealGroupElement,
    fbox: &FolnerBox,
    (t, s, s_i): (f64, f64, &[f64]),
    c_grid: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<TcProfile> {
    let m = k.dim() + 1;
    if m < 3 {
        return Err(Error::Precondition("the T_c profile needs m ≥ 3".into()));
    }
    if n_samples > MAX_SAMPLES {
        return Err(Error::SampleBudgetExceeded {
            requested: n_samples,
            budget: MAX_SAMPLES,
        });
    }
    if n_samples == 0 || c_grid.is_empty() {
        return Err(Error::InvalidArgument("need samples and a c grid".into()));
    }
    let probe = FolnerCoords {
        t,
        s,
        s_i: s_i.to_vec(),
        r_hat: vec![0.0; m - 1],
    };
    if s_i.len() != m - 3 || !fbox.contains(&probe) {
        return Err(Error::Precondition(format!(
            "(t, s, s_i) = ({t}, {s}, {s_i:?}) outside the Følner box"
        )));
    }
    check_base(k)?;
    let betas: Vec<f64> = par_sample(seed, streams::TC, n_samples, |_, rng| {
        let q: Vec<f64> = (0..m - 1).map(|_| rng.random::<f64>() - 0.5).collect();
        let r = k.matrix() * nalgebra::DVector::from_column_slice(&q);
        let r: Vec<f64> = r.iter().cloned().collect();
        Ok::<f64, Error>(-folner_point(k, t, s, s_i, &r)?.systole()?.ln())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let fractions: Vec<Estimate> = c_grid
        .iter()
        .map(|&c| Estimate::proportion(betas.iter().filter(|&&b| b > c).count(), n_samples))
        .collect();
    let (slope, slope_stderr) = log_linear_slope(c_grid, &fractions);
    Ok(TcProfile {
        c_grid: c_grid.to_vec(),
        fractions,
        slope,
        slope_stderr,
        negative_95: slope + 1.645 * slope_stderr < 0.0,
    })
}

/// Slope of `log p` against `c`, weighting each point by the inverse of the
/// delta-method variance `(1 − p)/(n p)`. Points with fewer than five hits
/// are skipped.
fn log_linear_slope(c: &[f64], p: &[Estimate]) -> (f64, f64) {
    let pts: Vec<(f64, f64, f64)> = c
        .iter()
        .zip(p)
        .filter(|(_, e)| e.value * e.n as f64 >= 5.0)
        .map(|(&c, e)| {
            let var = ((1.0 - e.value) / (e.n as f64 * e.value)).max(1e-12);
            (c, e.value.ln(), 1.0 / var)
        })
        .collect();
    if pts.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let cbar = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ybar = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - cbar).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - cbar) * (p.1 - ybar)).sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}

// ---------------------------------------------------------------------------
// Haarization

/// The unipotent pair `(β′, β̂)` of the two averaging steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaarizationChoice {
    pub first: Root,
    pub second: Root,
}

impl HaarizationChoice {
    /// `β′ = α₂`, `β̂ = −δ_highest`.
    pub fn standard(m: usize) -> Self {
        Self {
            first: Root::simple(2),
            second: Root::highest(m).negate(),
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        let firsts = [Root::simple(2), Root::highest(m)];
        let seconds = [Root::simple(2).negate(), Root::highest(m).negate()];
        if !firsts.contains(&self.first) || !seconds.contains(&self.second) {
            return Err(Error::Precondition(format!(
                "roots ({},{}) then ({},{}) are not an admissible pair",
                self.first.i, self.first.j, self.second.i, self.second.j
            )));
        }
        Ok(())
    }
}

/// `U^{β̂}_T ∗ U^{β′}_T ∗ μ` for lattices with `m ≥ 4`.
pub fn haarization_pipeline(
    mu: &EmpiricalMeasure<UnimodularLattice>,
    choice: HaarizationChoice,
    t: f64,
    substeps: usize,
) -> Result<EmpiricalMeasure<UnimodularLattice>> {
    let m = mu.dim();
    if m < 4 {
        return Err(Error::Precondition("haarization needs m ≥ 4".into()));
    }
    choice.validate(m)?;
    let once = average_unipotent(mu, choice.first, t, substeps)?;
    average_unipotent(&once, choice.second, t, substeps)
}

/// Mean number of nonzero lattice vectors in the closed ball of radius
/// `radius`; under Haar measure its expectation is the ball volume.
pub fn siegel_statistic(mu: &EmpiricalMeasure<UnimodularLattice>, radius: f64) -> Result<Estimate> {
    mu.estimate(|p| Ok(p.count_in_ball(radius, ENUMERATION_BUDGET)? as f64))
}
