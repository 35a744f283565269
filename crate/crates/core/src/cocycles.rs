//! Linear cocycles over the `G`-action on `G/Γ`: products with log-norm
//! ledgers, top Lyapunov exponents, temperedness fits and Oseledets growth
//! rates along commuting diagonal flows.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grouplin::{op_norm, CartanVector, IntegerGroupElement, RealGroupElement};
use crate::modular::{return_cocycle, ModularPoint};
use crate::space::HomogeneousPoint;

/// A matrix cocycle `A(g, x)` with `A(gh, x) = A(g, h·x)·A(h, x)`.
pub trait Cocycle<P>: Sync {
    fn fiber_dim(&self) -> usize;

    fn eval(&self, g: &RealGroupElement, x: &P) -> Result<DMatrix<f64>>;

    /// Claimed `(k, C)` with `‖A(g, x)‖ ≤ C·e^{k·depth(x)}` for `g` in the unit ball.
    fn tempered_bounds(&self) -> Option<(f64, f64)> {
        None
    }
}

/// The trivial cocycle.
#[derive(Clone, Debug)]
pub struct IdentityCocycle {
    pub dim: usize,
}

impl<P> Cocycle<P> for IdentityCocycle {
    fn fiber_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _: &RealGroupElement, _: &P) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.dim, self.dim))
    }

    fn tempered_bounds(&self) -> Option<(f64, f64)> {
        Some((0.0, 1.0))
    }
}

/// Fiberwise derivative of the linear torus action: `A(g, x) = β(g, x)`.
#[derive(Clone, Debug, Default)]
pub struct ReturnCocycleLinear;

impl ReturnCocycleLinear {
    pub fn eval_exact(
        &self,
        g: &RealGroupElement,
        x: &ModularPoint,
    ) -> Result<IntegerGroupElement> {
        return_cocycle(g, x)
    }
}

impl Cocycle<ModularPoint> for ReturnCocycleLinear {
    fn fiber_dim(&self) -> usize {
        2
    }

    fn eval(&self, g: &RealGroupElement, x: &ModularPoint) -> Result<DMatrix<f64>> {
        Ok(return_cocycle(g, x)?.to_real().into_matrix())
    }
}

/// A point-independent cocycle on the Cartan subgroup:
/// `A(exp(Σ c_k v_k), x) = exp(Σ c_k L_k)` for commuting `L_k`.
///
/// Covers the diagonal test cocycles with prescribed rates and constant
/// matrix cocycles along one generator.
#[derive(Clone, Debug)]
pub struct CartanCocycle {
    generators: Vec<CartanVector>,
    logs: Vec<DMatrix<f64>>,
}

impl CartanCocycle {
    pub fn new(generators: Vec<CartanVector>, logs: Vec<DMatrix<f64>>) -> Result<Self> {
        if generators.is_empty() || generators.len() != logs.len() {
            return Err(Error::InvalidArgument(
                "one logarithm per generator is required".into(),
            ));
        }
        let d = logs[0].nrows();
        for l in &logs {
            if l.nrows() != d || l.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: l.nrows(),
                });
            }
        }
        for i in 0..logs.len() {
            for j in i + 1..logs.len() {
                let defect = (&logs[i] * &logs[j] - &logs[j] * &logs[i]).norm();
                if defect > 1e-9 {
                    return Err(Error::NonCommuting { defect });
                }
            }
        }
        Ok(Self { generators, logs })
    }

    /// Diagonal cocycle: along generator `k`, fiber coordinate `i` grows at
    /// rate `rates[k][i]`.
    pub fn diagonal(generators: Vec<CartanVector>, rates: &[Vec<f64>]) -> Result<Self> {
        let logs = rates
            .iter()
            .map(|r| DMatrix::from_diagonal(&nalgebra::DVector::from_vec(r.clone())))
            .collect();
        Self::new(generators, logs)
    }

    /// `A(exp(c·v), x) = M^c` for a symmetric positive-definite `M`.
    pub fn constant(generator: CartanVector, m: &DMatrix<f64>) -> Result<Self> {
        if (m - m.transpose()).norm() > 1e-12 {
            return Err(Error::InvalidArgument("matrix must be symmetric".into()));
        }
        let eig = m.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidArgument(
                "matrix must be positive definite".into(),
            ));
        }
        let log_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::ln));
        let log = &eig.eigenvectors * log_diag * eig.eigenvectors.transpose();
        Self::new(vec![generator], vec![log])
    }

    fn coordinates(&self, g: &RealGroupElement) -> Result<Vec<f64>> {
        let e = g.matrix();
        let m = g.dim();
        let scale = e.amax();
        let mut v = Vec::with_capacity(m);
        for r in 0..m {
            for c in 0..m {
                if r != c && e[(r, c)].abs() > 1e-12 * scale {
                    return Err(Error::Precondition(
                        "Cartan cocycles are evaluated on diagonal elements".into(),
                    ));
                }
            }
            if e[(r, r)] <= 0.0 {
                return Err(Error::Precondition(
                    "diagonal entries must be positive".into(),
                ));
            }
            v.push(e[(r, r)].ln());
        }
        let k = self.generators.len();
        let basis = DMatrix::from_fn(m, k, |r, c| self.generators[c].as_slice()[r]);
        let target = nalgebra::DVector::from_vec(v);
        let svd = basis.clone().svd(true, true);
        let coef = svd
            .solve(&target, 1e-12)
            .map_err(|e| Error::Degenerate(e.to_string()))?;
        let resid = (&basis * &coef - &target).norm();
        if resid > 1e-9 * (1.0 + target.norm()) {
            return Err(Error::Precondition(
                "element outside the span of the generators".into(),
            ));
        }
        Ok(coef.iter().cloned().collect())
    }
}

impl<P> Cocycle<P> for CartanCocycle {
    fn fiber_dim(&self) -> usize {
        self.logs[0].nrows()
    }

    fn eval(&self, g: &RealGroupElement, _: &P) -> Result<DMatrix<f64>> {
        let c = self.coordinates(g)?;
        let d = self.logs[0].nrows();
        let mut l = DMatrix::<f64>::zeros(d, d);
        for (ck, lk) in c.iter().zip(&self.logs) {
            l += lk * *ck;
        }
        Ok(l.exp())
    }
}

// ---------------------------------------------------------------------------
// Products

/// Ordered cocycle product `A(g_n, x_{n−1})⋯A(g_1, x_0)` stored as a unit
/// norm matrix times `e^{log_norm}`.
#[derive(Clone, Debug)]
pub struct CocycleProduct {
    /// Product divided by its operator norm.
    pub direction: DMatrix<f64>,
    pub log_norm: f64,
    /// Increments of `log‖partial product‖`; they sum to `log_norm`.
    pub ledger: Vec<f64>,
}

impl CocycleProduct {
    pub fn matrix(&self) -> DMatrix<f64> {
        &self.direction * self.log_norm.exp()
    }
}

/// Running product with renormalization after every factor.
#[derive(Clone, Debug)]
struct Accumulator {
    dir: DMatrix<f64>,
    log: f64,
}

impl Accumulator {
    fn new(d: usize) -> Self {
        Self {
            dir: DMatrix::identity(d, d),
            log: 0.0,
        }
    }

    /// Multiply on the left; returns the log-norm increment.
    fn push(&mut self, a: &DMatrix<f64>, step: usize) -> Result<f64> {
        let next = a * &self.dir;
        let n = op_norm(&next);
        if !n.is_finite() || n <= 0.0 {
            return Err(Error::UntemperedBlowup { step });
        }
        self.dir = next / n;
        self.log += n.ln();
        Ok(n.ln())
    }
}

/// Product of the cocycle along the path `x_k = g_k ⋯ g_1 · x`.
pub fn cocycle_product<P: HomogeneousPoint>(
    cocycle: &dyn Cocycle<P>,
    path: &[RealGroupElement],
    x: &P,
) -> Result<CocycleProduct> {
    let mut acc = Accumulator::new(cocycle.fiber_dim());
    let mut ledger = Vec::with_capacity(path.len());
    let mut cur = x.clone();
    for (k, g) in path.iter().enumerate() {
        let a = cocycle.eval(g, &cur)?;
        ledger.push(acc.push(&a, k + 1)?);
        cur = cur.translate(g)?;
    }
    Ok(CocycleProduct {
        direction: acc.dir,
        log_norm: acc.log,
        ledger,
    })
}

/// Exact product of return-cocycle values along a path.
pub fn return_cocycle_product(
    path: &[RealGroupElement],
    x: &ModularPoint,
) -> Result<IntegerGroupElement> {
    let mut acc = IntegerGroupElement::identity(2);
    let mut cur = x.clone();
    for g in path {
        let (next, inc) = cur.act(g)?;
        acc = &inc.to_integer() * &acc;
        cur = next;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Lyapunov exponents

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubadditivityResidual {
    pub n: usize,
    pub m: usize,
    /// Mean of `log‖A(s^{n+m}, x)‖ − log‖A(s^m, s^n x)‖ − log‖A(s^n, x)‖`.
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub horizon: usize,
    pub stderr: f64,
    pub subadditivity: Vec<SubadditivityResidual>,
    /// `(n, mean of log‖A(s^n, x)‖/n)` at the nested checkpoints.
    pub checkpoints: Vec<(usize, f64)>,
}

/// Nested dyadic checkpoints `N/2^j ≥ 1`, increasing.
fn checkpoints(n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut h = n;
    while h >= 1 && out.len() < 12 {
        out.push(h);
        if h % 2 != 0 {
            break;
        }
        h /= 2;
    }
    out.reverse();
    out
}

struct Trajectory {
    /// `log‖A(s^h, x)‖` at each checkpoint.
    at: Vec<f64>,
    /// `log‖A(s^h, s^h x)‖` for each checkpoint `h` with `2h ≤ N`.
    second_half: Vec<f64>,
}

fn run_trajectory<P: HomogeneousPoint>(
    cocycle: &dyn Cocycle<P>,
    s: &RealGroupElement,
    x: &P,
    n: usize,
    marks: &[usize],
) -> Result<Trajectory> {
    let d = cocycle.fiber_dim();
    let mut full = Accumulator::new(d);
    let mut halves: Vec<Option<Accumulator>> = vec![None; marks.len()];
    let mut at = vec![f64::NAN; marks.len()];
    let mut second_half = vec![f64::NAN; marks.len()];
    let mut cur = x.clone();
    for k in 1..=n {
        let a = cocycle.eval(s, &cur)?;
        full.push(&a, k)?;
        for (j, &h) in marks.iter().enumerate() {
            if k > h && k <= 2 * h {
                if let Some(acc) = halves[j].as_mut() {
                    acc.push(&a, k)?;
                }
            }
        }
        for (j, &h) in marks.iter().enumerate() {
            if k == h {
                at[j] = full.log + op_norm(&full.dir).ln();
                halves[j] = Some(Accumulator::new(d));
            }
            if k == 2 * h {
                let acc = halves[j].as_ref().expect("started at h");
                second_half[j] = acc.log + op_norm(&acc.dir).ln();
            }
        }
        cur = cur.translate(s)?;
    }
    Ok(Trajectory { at, second_half })
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Birkhoff estimate of `lim (1/N) ∫ log‖A(s^N, x)‖ dμ` over the atoms
/// `starts`, with pointwise subadditivity residuals on nested horizons.
pub fn top_lyapunov<P: HomogeneousPoint>(
    cocycle: &dyn Cocycle<P>,
    s: &RealGroupElement,
    starts: &[P],
    n: usize,
) -> Result<LyapunovEstimate> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!("horizon {n} < 10")));
    }
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no starting points".into()));
    }
    let marks = checkpoints(n);
    let runs: Vec<Trajectory> = starts
        .par_iter()
        .map(|x| run_trajectory(cocycle, s, x, n, &marks))
        .collect::<Result<_>>()?;
    let last = marks.len() - 1;
    let finals: Vec<f64> = runs.iter().map(|r| r.at[last] / n as f64).collect();
    let (value, stderr) = mean_se(&finals);
    let mut subadditivity = Vec::new();
    let mut cps = Vec::new();
    for (j, &h) in marks.iter().enumerate() {
        let (mean, _) = mean_se(&runs.iter().map(|r| r.at[j] / h as f64).collect::<Vec<_>>());
        cps.push((h, mean));
        if 2 * h <= n {
            let j2 = marks
                .iter()
                .position(|&v| v == 2 * h)
                .expect("nested checkpoints");
            let res: Vec<f64> = runs
                .iter()
                .map(|r| r.at[j2] - r.second_half[j] - r.at[j])
                .collect();
            let (mean, stderr) = mean_se(&res);
            subadditivity.push(SubadditivityResidual {
                n: h,
                m: h,
                mean,
                stderr,
            });
        }
    }
    if !value.is_finite() {
        return Err(Error::UntemperedBlowup { step: n });
    }
    Ok(LyapunovEstimate {
        value,
        horizon: n,
        stderr,
        subadditivity,
        checkpoints: cps,
    })
}

// ---------------------------------------------------------------------------
// Temperedness

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemperednessFit {
    pub k: f64,
    pub c: f64,
    /// Fraction of the deeper half above the bound with 10% slack.
    pub violation_rate: f64,
    pub samples: usize,
}

/// A finite net of the unit ball `{g : d(g, Id) ≤ 1}`: `a^t k_ψ` for
/// `t ∈ {±1/2, ±1}` and 8 rotation angles in the first coordinate plane.
pub fn unit_ball_net(m: usize) -> Vec<RealGroupElement> {
    let mut out = Vec::with_capacity(32);
    for t in [-1.0, -0.5, 0.5, 1.0] {
        for k in 0..8 {
            let psi = k as f64 * std::f64::consts::PI / 8.0;
            let rot = crate::grouplin::plane_rotation(m, 1, 2, psi).expect("valid plane");
            out.push(&crate::grouplin::a_t(m, t) * &rot);
        }
    }
    out
}

/// Fit `sup_{g ∈ net} log‖A(g, x)‖ ≤ log C + k·depth(x)`.
///
/// The points are split at the median depth. `k` is the least-squares slope
/// on the shallower half and `C` the smallest constant covering it; the
/// bound is then checked on the deeper half, so super-linear growth in depth
/// shows up as a violation rate.
pub fn temperedness_fit<P: HomogeneousPoint>(
    cocycle: &dyn Cocycle<P>,
    points: &[P],
    net: &[RealGroupElement],
) -> Result<TemperednessFit> {
    if points.len() < 4 || net.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least four points and a nonempty net".into(),
        ));
    }
    let mut data: Vec<(f64, f64)> = points
        .par_iter()
        .map(|x| {
            let mut sup = f64::NEG_INFINITY;
            for g in net {
                sup = sup.max(op_norm(&cocycle.eval(g, x)?).ln());
            }
            Ok((x.depth()?, sup))
        })
        .collect::<Result<_>>()?;
    data.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let half = data.len() / 2;
    let (shallow, deep) = data.split_at(half);
    let n = shallow.len() as f64;
    let mx = shallow.iter().map(|d| d.0).sum::<f64>() / n;
    let my = shallow.iter().map(|d| d.1).sum::<f64>() / n;
    let sxx: f64 = shallow.iter().map(|d| (d.0 - mx).powi(2)).sum();
    let sxy: f64 = shallow.iter().map(|d| (d.0 - mx) * (d.1 - my)).sum();
    let k = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let log_c = shallow.iter().map(|(x, y)| y - k * x).fold(0.0, f64::max);
    let violations = deep
        .iter()
        .filter(|(x, y)| {
            let bound = log_c + k * x;
            *y > bound + 0.1 * bound.abs() + 1e-9
        })
        .count();
    Ok(TemperednessFit {
        k,
        c: log_c.exp(),
        violation_rate: violations as f64 / deep.len() as f64,
        samples: data.len(),
    })
}

// ---------------------------------------------------------------------------
// Oseledets growth rates

/// One exponent index `i` viewed as a function on the Cartan generators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovFunctional {
    pub index: usize,
    /// Growth rate along each generator, in input order.
    pub values: Vec<f64>,
    /// Growth rate along the product of the two generators.
    pub product_value: f64,
    /// `|λ(ab) − λ(a) − λ(b)|`.
    pub residual: f64,
}

/// Frame condition-number threshold.
pub const MAX_FRAME_CONDITION: f64 = 1e8;

/// Lyapunov spectrum (descending) along `s` from QR frame tracking.
pub fn lyapunov_spectrum<P: HomogeneousPoint>(
    cocycle: &dyn Cocycle<P>,
    s: &RealGroupElement,
    x: &P,
    n: usize,
) -> Result<Vec<f64>> {
    let d = cocycle.fiber_dim();
    let mut q = DMatrix::<f64>::identity(d, d);
    let mut sums = vec![0.0; d];
    let mut cur = x.clone();
    for k in 1..=n {
        let m = cocycle.eval(s, &cur)? * &q;
        let sv = m.singular_values();
        let cond = sv.max() / sv.min();
        if !(cond <= MAX_FRAME_CONDITION) {
            return Err(Error::IllConditioned { cond });
        }
        let qr = m.qr();
        let r = qr.r();
        q = qr.q();
        for i in 0..d {
            let rii = r[(i, i)].abs();
            if !(rii > 0.0) || !rii.is_finite() {
                return Err(Error::UntemperedBlowup { step: k });
            }
            sums[i] += rii.ln();
        }
        cur = cur.translate(s)?;
    }
    let mut rates: Vec<f64> = sums.iter().map(|v| v / n as f64).collect();
    rates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(rates)
}

/// Growth-rate functionals along two commuting generators and their product.
pub fn oseledets_functionals<P: HomogeneousPoint>(
    cocycle: &dyn Cocycle<P>,
    generators: [&RealGroupElement; 2],
    x: &P,
    n: usize,
) -> Result<Vec<LyapunovFunctional>> {
    let d = cocycle.fiber_dim();
    if d > 6 {
        return Err(Error::InvalidArgument(format!("fiber dimension {d} > 6")));
    }
    let [a, b] = generators;
    let ab = a * b;
    let defect = (ab.matrix() - (b * a).matrix()).norm();
    if defect > 1e-9 {
        return Err(Error::NonCommuting { defect });
    }
    let la = lyapunov_spectrum(cocycle, a, x, n)?;
    let lb = lyapunov_spectrum(cocycle, b, x, n)?;
    let lab = lyapunov_spectrum(cocycle, &ab, x, n)?;
    Ok((0..d)
        .map(|i| LyapunovFunctional {
            index: i,
            values: vec![la[i], lb[i]],
            product_value: lab[i],
            residual: (lab[i] - la[i] - lb[i]).abs(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouplin::{a_t, b_s, cartan_element, random_rotation};
    use crate::lattices::{random_hecke_lattice, HECKE_PRIME};
    use crate::modular::{haar_sample, Flow};
    use crate::rng::{atom_rng, par_sample};

    fn a_gen(m: usize) -> CartanVector {
        CartanVector::a_generator(m)
    }

    #[test]
    fn identity_cocycle_products() {
        let path: Vec<_> = (0..20).map(|k| a_t(2, 0.1 * k as f64)).collect();
        let p = cocycle_product(
            &IdentityCocycle { dim: 3 },
            &path,
            &ModularPoint::identity(),
        )
        .unwrap();
        assert!(p.ledger.iter().all(|&v| v.abs() < 1e-15));
        assert!((p.matrix() - DMatrix::<f64>::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn diagonal_rate_products() {
        let c = CartanCocycle::diagonal(vec![a_gen(2)], &[vec![0.3, -0.3]]).unwrap();
        let path: Vec<_> = (0..50).map(|_| a_t(2, 0.2)).collect();
        let p = cocycle_product(&c, &path, &ModularPoint::identity()).unwrap();
        assert!((p.log_norm - 0.3 * 10.0).abs() < 1e-9);
        assert!((p.ledger.iter().sum::<f64>() - p.log_norm).abs() < 1e-9);
    }

    #[test]
    fn return_cocycle_product_matches_deck_matrices() {
        let mut rng = atom_rng(1, 60, 0);
        for _ in 0..50 {
            let x = haar_sample(&mut rng);
            let path: Vec<_> = (0..40)
                .map(|k| Flow::Geodesic.group_element(0.25 + 0.01 * k as f64))
                .collect();
            let exact = return_cocycle_product(&path, &x).unwrap();
            let p = cocycle_product(&ReturnCocycleLinear, &path, &x).unwrap();
            let diff = (p.matrix() - exact.to_real().into_matrix()).norm();
            assert!(diff <= 1e-9 * exact.to_real().matrix().norm());
            assert!((p.ledger.iter().sum::<f64>() - exact.log_norm()).abs() < 1e-6);
            // deck-word bookkeeping through the accumulated point
            let mut cur = x.clone();
            for g in &path {
                cur = cur.act(g).unwrap().0;
            }
            assert_eq!(cur.deck(), &(&exact * x.deck()));
        }
    }

    #[test]
    fn cocycle_identity_for_return_cocycle() {
        let mut rng = atom_rng(2, 60, 0);
        for _ in 0..300 {
            let x = haar_sample(&mut rng);
            let g = &random_rotation(2, &mut rng) * &a_t(2, 1.3);
            let h = &a_t(2, -0.7) * &random_rotation(2, &mut rng);
            let hx = crate::space::HomogeneousPoint::translate(&x, &h).unwrap();
            let lhs = ReturnCocycleLinear.eval_exact(&(&g * &h), &x).unwrap();
            let rhs = &ReturnCocycleLinear.eval_exact(&g, &hx).unwrap()
                * &ReturnCocycleLinear.eval_exact(&h, &x).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn top_lyapunov_of_simple_cocycles() {
        let starts = vec![ModularPoint::identity(); 4];
        let s = a_t(2, 1.0);
        let id = top_lyapunov(&IdentityCocycle { dim: 2 }, &s, &starts, 64).unwrap();
        assert_eq!(id.value, 0.0);
        let c = CartanCocycle::diagonal(vec![a_gen(2)], &[vec![0.3, -0.3]]).unwrap();
        let est = top_lyapunov(&c, &s, &starts, 200).unwrap();
        assert!((est.value - 0.3).abs() < 0.01);
        assert!(est.subadditivity.iter().all(|r| r.mean <= 1e-9));
    }

    #[test]
    fn return_cocycle_exponent_is_one_half() {
        let starts = par_sample(3, crate::rng::streams::COCYCLE, 8, |_, rng| {
            haar_sample(rng)
        });
        let est = top_lyapunov(&ReturnCocycleLinear, &a_t(2, 1.0), &starts, 4000).unwrap();
        assert!((est.value - 0.5).abs() < 0.05, "{est:?}");
        for r in &est.subadditivity {
            assert!(r.mean <= 3.0 * r.stderr + 1e-9);
        }
    }

    #[test]
    fn conjugation_shifts_exponent_boundedly() {
        struct Conj<'a>(&'a CartanCocycle, DMatrix<f64>, DMatrix<f64>);
        impl Cocycle<ModularPoint> for Conj<'_> {
            fn fiber_dim(&self) -> usize {
                2
            }
            fn eval(&self, g: &RealGroupElement, x: &ModularPoint) -> Result<DMatrix<f64>> {
                Ok(&self.1 * self.0.eval(g, x)? * &self.2)
            }
        }
        let c = CartanCocycle::diagonal(vec![a_gen(2)], &[vec![0.2, -0.2]]).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 1.0]);
        let binv = b.clone().try_inverse().unwrap();
        let n = 100;
        let starts = vec![ModularPoint::identity()];
        let s = a_t(2, 1.0);
        let plain = top_lyapunov(&c, &s, &starts, n).unwrap().value;
        let conj = top_lyapunov(&Conj(&c, b.clone(), binv), &s, &starts, n)
            .unwrap()
            .value;
        let sv = b.singular_values();
        let cond = sv.max() / sv.min();
        assert!((plain - conj).abs() <= 2.0 * cond.ln() / n as f64 + 1e-12);
    }

    #[test]
    fn temperedness_of_return_cocycle() {
        let points: Vec<ModularPoint> = par_sample(4, 61, 1000, |i, rng| {
            let depth = 4.0 * i as f64 / 1000.0;
            ModularPoint::from_upper_half_plane(
                rand::Rng::random_range(rng, -0.5..0.5),
                (2.0 * depth).exp(),
            )
            .unwrap()
        });
        let net = unit_ball_net(2);
        assert!(net
            .iter()
            .all(|g| crate::grouplin::symmetric_distance(g) <= 1.0 + 1e-12));
        let fit = temperedness_fit(&ReturnCocycleLinear, &points, &net).unwrap();
        assert!(fit.k <= 2.5, "{fit:?}");
        assert!(fit.violation_rate <= 0.01, "{fit:?}");
        let id = temperedness_fit(&IdentityCocycle { dim: 2 }, &points, &net).unwrap();
        assert_eq!((id.k, id.c, id.violation_rate), (0.0, 1.0, 0.0));

        struct Untempered;
        impl Cocycle<ModularPoint> for Untempered {
            fn fiber_dim(&self) -> usize {
                2
            }
            fn eval(&self, _: &RealGroupElement, x: &ModularPoint) -> Result<DMatrix<f64>> {
                let e = x.depth().powi(2).exp();
                Ok(DMatrix::from_row_slice(2, 2, &[e, 0.0, 0.0, 1.0 / e]))
            }
        }
        let bad = temperedness_fit(&Untempered, &points, &net).unwrap();
        assert!(bad.violation_rate > 0.01, "{bad:?}");
    }

    #[test]
    fn oseledets_recovers_prescribed_rates() {
        let m = 3;
        let gens = vec![a_gen(m), CartanVector::b_generator(m)];
        let c = CartanCocycle::diagonal(gens, &[vec![0.2, -0.2], vec![0.1, -0.1]]).unwrap();
        let x = random_hecke_lattice(m, HECKE_PRIME, &mut atom_rng(5, 60, 0)).unwrap();
        let (a, b) = (a_t(m, 1.0), b_s(m, 1.0));
        let f = oseledets_functionals(&c, [&a, &b], &x, 200).unwrap();
        assert!((f[0].values[0] - 0.2).abs() < 0.004 && (f[0].values[1] - 0.1).abs() < 0.002);
        assert!((f[1].values[0] + 0.2).abs() < 0.004 && (f[1].values[1] + 0.1).abs() < 0.002);
        assert!(f.iter().all(|l| l.residual < 0.02 * 0.3));
        let id = oseledets_functionals(&IdentityCocycle { dim: 2 }, [&a, &b], &x, 50).unwrap();
        assert!(id.iter().all(|l| l.values.iter().all(|v| v.abs() < 1e-12)));
    }

    #[test]
    fn constant_hyperbolic_cocycle() {
        let cat = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let c = CartanCocycle::constant(a_gen(2), &cat).unwrap();
        let rho = (3.0 + 5f64.sqrt()) / 2.0;
        let x = haar_sample(&mut atom_rng(6, 60, 0));
        let spec = lyapunov_spectrum(&c, &a_t(2, 1.0), &x, 1000).unwrap();
        assert!(
            (spec[0] - rho.ln()).abs() < 1e-3 && (spec[1] + rho.ln()).abs() < 1e-3,
            "{spec:?}"
        );
        let commuting = [&a_t(2, 1.0), &cartan_element(&a_gen(2))];
        assert!(oseledets_functionals(&c, commuting, &ModularPoint::identity(), 10).is_ok());
        let skew = RealGroupElement::from_rows(2, &[1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(
            oseledets_functionals(&c, [&a_t(2, 1.0), &skew], &ModularPoint::identity(), 10),
            Err(Error::NonCommuting { .. })
        ));
    }
}
