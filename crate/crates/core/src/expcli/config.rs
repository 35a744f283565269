//! Experiment configuration: a TOML file with run metadata and a `[params]`
//! table whose shape depends on the experiment.
//!
//! ```toml
//! id = "folner-m4"
//! experiment = "folner"
//! seed = 7
//! threads = 8
//!
//! [params]
//! t_n = [5.0, 10.0, 20.0]
//! atoms = 2000
//! ```
//!
//! Every `[params]` key is optional; missing keys take the defaults below,
//! which reproduce the acceptance runs. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattices::HECKE_PRIME;
use crate::wordgeom::SHORT_WORD_CONSTANT;

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Systole,
    Geodesic,
    Km,
    Cuspmass,
    Folner,
    Tc,
    Lyap,
    Oseledets,
    Decompose,
    Uniword,
    Sumset,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::Systole,
        Experiment::Geodesic,
        Experiment::Km,
        Experiment::Cuspmass,
        Experiment::Folner,
        Experiment::Tc,
        Experiment::Lyap,
        Experiment::Oseledets,
        Experiment::Decompose,
        Experiment::Uniword,
        Experiment::Sumset,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Systole => "systole",
            Experiment::Geodesic => "geodesic",
            Experiment::Km => "km",
            Experiment::Cuspmass => "cuspmass",
            Experiment::Folner => "folner",
            Experiment::Tc => "tc",
            Experiment::Lyap => "lyap",
            Experiment::Oseledets => "oseledets",
            Experiment::Decompose => "decompose",
            Experiment::Uniword => "uniword",
            Experiment::Sumset => "sumset",
        }
    }

    pub fn from_name(name: &str) -> Option<Experiment> {
        Experiment::ALL.into_iter().find(|e| e.name() == name)
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn check(ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(config_err(field, message()))
    }
}

fn check_count(v: usize, lo: usize, hi: usize, field: &str) -> Result<()> {
    check(v >= lo && v <= hi, field, || {
        format!("must lie in [{lo}, {hi}], got {v}")
    })
}

fn check_positive(v: f64, field: &str) -> Result<()> {
    check(v > 0.0 && v.is_finite(), field, || {
        format!("must be positive and finite, got {v}")
    })
}

fn check_grid(v: &[f64], field: &str) -> Result<()> {
    check(!v.is_empty(), field, || "must not be empty".into())?;
    check(v.iter().all(|x| x.is_finite()), field, || {
        "entries must be finite".into()
    })
}

// ---------------------------------------------------------------------------
// Per-experiment parameters

/// Lattice systoles against a brute-force oracle, and metric inequalities
/// on SL(m,ℝ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystoleParams {
    pub m: usize,
    pub samples: usize,
    /// Entry range of the random bases.
    pub spread: f64,
    pub metric_samples: usize,
    /// Largest dimension in the norm/distance comparison.
    pub metric_dim_max: usize,
    pub c1_max: f64,
    pub kappa_factor: f64,
    pub c0: f64,
    /// `E^k` is checked for `k = 10^0, …, 10^unipotent_max_exp`.
    pub unipotent_max_exp: u32,
    pub c2: f64,
    pub c3: f64,
}

impl Default for SystoleParams {
    fn default() -> Self {
        Self {
            m: 3,
            samples: 1000,
            spread: 1.0,
            metric_samples: 10_000,
            metric_dim_max: 5,
            c1_max: 1.2,
            kappa_factor: std::f64::consts::SQRT_2,
            c0: 2.0,
            unipotent_max_exp: 9,
            c2: 2.1,
            c3: 1.0,
        }
    }
}

impl SystoleParams {
    fn validate(&self) -> Result<()> {
        check_count(self.m, 2, 6, "params.m")?;
        check_count(self.samples, 1, 1_000_000, "params.samples")?;
        check_positive(self.spread, "params.spread")?;
        check_count(self.metric_samples, 1, 10_000_000, "params.metric_samples")?;
        check_count(self.metric_dim_max, 2, 8, "params.metric_dim_max")?;
        check(
            self.unipotent_max_exp <= 15,
            "params.unipotent_max_exp",
            || "must be at most 15".into(),
        )
    }

    fn work(&self) -> f64 {
        self.samples as f64 * 1e3 + self.metric_samples as f64 * 2.0
    }
}

/// Orbits on the modular surface: horocycle equidistribution and the deck
/// classes of cusp excursions along geodesics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeodesicParams {
    /// Thick starting points for the horocycle averages.
    pub horocycle_starts: usize,
    pub horocycle_time: f64,
    pub horocycle_substeps: usize,
    pub ks_max: f64,
    /// Number of excursions to classify.
    pub excursions: usize,
    pub threshold: f64,
    pub segment_time: f64,
    pub step: f64,
    pub max_segments: usize,
    /// Samples of the first geodesic written to the orbit table.
    pub orbit_dump: usize,
}

impl Default for GeodesicParams {
    fn default() -> Self {
        Self {
            horocycle_starts: 10,
            horocycle_time: 1e4,
            horocycle_substeps: 200_000,
            ks_max: 0.05,
            excursions: 100,
            threshold: 1.5,
            segment_time: 500.0,
            step: 0.02,
            max_segments: 1000,
            orbit_dump: 5000,
        }
    }
}

impl GeodesicParams {
    fn validate(&self) -> Result<()> {
        check_count(self.horocycle_starts, 1, 10_000, "params.horocycle_starts")?;
        check_positive(self.horocycle_time, "params.horocycle_time")?;
        check_count(
            self.horocycle_substeps,
            1,
            10_000_000,
            "params.horocycle_substeps",
        )?;
        check_count(self.excursions, 1, 1_000_000, "params.excursions")?;
        check_positive(self.segment_time, "params.segment_time")?;
        check(self.step > 0.0 && self.step <= 0.1, "params.step", || {
            format!("must lie in (0, 0.1], got {}", self.step)
        })?;
        check(self.threshold > self.step * 0.5, "params.threshold", || {
            format!("must exceed the depth noise floor {}", self.step * 0.5)
        })?;
        check_count(self.max_segments, 1, 1_000_000, "params.max_segments")
    }

    fn work(&self) -> f64 {
        self.horocycle_starts as f64 * self.horocycle_substeps as f64
            + self.max_segments as f64 * self.segment_time / self.step
    }
}

/// Quantitative non-divergence along the horocycle through a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmParams {
    pub m: usize,
    pub horizon: f64,
    pub eps: Vec<f64>,
    pub fit_eps: f64,
    pub step: f64,
    /// Upper half-plane coordinates `(x, y)` of a second, generic start.
    pub generic_start: [f64; 2],
}

impl Default for KmParams {
    fn default() -> Self {
        Self {
            m: 2,
            horizon: 1e4,
            eps: vec![0.4, 0.2, 0.1, 0.05],
            fit_eps: 0.4,
            step: 0.005,
            generic_start: [0.1234, 1.05],
        }
    }
}

impl KmParams {
    fn validate(&self) -> Result<()> {
        check(self.m == 2, "params.m", || {
            format!("only m = 2 is supported, got {}", self.m)
        })?;
        check_positive(self.horizon, "params.horizon")?;
        check_grid(&self.eps, "params.eps")?;
        check(self.eps.iter().all(|&e| e > 0.0), "params.eps", || {
            "entries must be positive".into()
        })?;
        check(self.eps.contains(&self.fit_eps), "params.fit_eps", || {
            "must be one of params.eps".into()
        })?;
        check_positive(self.step, "params.step")?;
        check(self.generic_start[1] > 0.0, "params.generic_start", || {
            "imaginary part must be positive".into()
        })
    }

    fn work(&self) -> f64 {
        2.0 * self.horizon / self.step
    }
}

/// Haar cusp integrals `∫ e^{η·depth}` on the modular surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CuspmassParams {
    pub sizes: Vec<usize>,
    pub eta_stable: f64,
    pub eta_divergent: f64,
    /// Independent replicate runs per size at `eta_divergent`.
    pub replicates: usize,
    pub stable_sigma: f64,
    pub divergent_sigma: f64,
    /// Exponents at which the closed-form integral is tabulated.
    pub eta_grid: Vec<f64>,
}

impl Default for CuspmassParams {
    fn default() -> Self {
        Self {
            sizes: vec![10_000, 40_000],
            eta_stable: 1.0,
            eta_divergent: 3.0,
            replicates: 400,
            stable_sigma: 3.0,
            divergent_sigma: 5.0,
            eta_grid: vec![0.0, 0.5, 1.0, 1.5, 1.9, 2.0, 2.5, 3.0],
        }
    }
}

impl CuspmassParams {
    fn validate(&self) -> Result<()> {
        check(self.sizes.len() >= 2, "params.sizes", || {
            "need at least two sample sizes".into()
        })?;
        check(
            self.sizes.windows(2).all(|w| w[0] < w[1]),
            "params.sizes",
            || "must be strictly increasing".into(),
        )?;
        check(self.sizes[0] >= 2, "params.sizes", || {
            "sizes must be at least 2".into()
        })?;
        check(
            self.eta_stable >= 0.0 && self.eta_stable < 2.0,
            "params.eta_stable",
            || format!("must lie in [0, 2), got {}", self.eta_stable),
        )?;
        check(
            self.eta_divergent >= 2.0 && self.eta_divergent.is_finite(),
            "params.eta_divergent",
            || format!("must be at least 2, got {}", self.eta_divergent),
        )?;
        check_count(self.replicates, 2, 100_000, "params.replicates")?;
        check_grid(&self.eta_grid, "params.eta_grid")
    }

    fn work(&self) -> f64 {
        let total: usize = self.sizes.iter().sum();
        total as f64 * (self.replicates as f64 + 1.0)
    }
}

/// Følner averages of a thick lattice: box defects and family cusp masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FolnerParams {
    pub m: usize,
    pub delta: f64,
    pub r_rate: f64,
    pub t_n: Vec<f64>,
    pub eta: Vec<f64>,
    pub atoms: usize,
    pub ratio_max: f64,
    pub defect_t_n: Vec<f64>,
    pub defect_samples: usize,
}

impl Default for FolnerParams {
    fn default() -> Self {
        Self {
            m: 4,
            delta: crate::measures::DEFAULT_DELTA,
            r_rate: crate::measures::DEFAULT_R_RATE,
            t_n: vec![5.0, 10.0, 20.0],
            eta: vec![0.1],
            atoms: 2000,
            ratio_max: 3.0,
            defect_t_n: vec![10.0, 20.0, 50.0, 100.0],
            defect_samples: 100_000,
        }
    }
}

impl FolnerParams {
    fn validate(&self) -> Result<()> {
        check_count(self.m, 3, 6, "params.m")?;
        check_positive(self.delta, "params.delta")?;
        check(
            self.r_rate >= 0.0 && self.r_rate.is_finite(),
            "params.r_rate",
            || "must be nonnegative".into(),
        )?;
        check_grid(&self.t_n, "params.t_n")?;
        check(self.t_n.iter().all(|&t| t > 0.0), "params.t_n", || {
            "entries must be positive".into()
        })?;
        check_grid(&self.eta, "params.eta")?;
        check_count(self.atoms, 2, 10_000_000, "params.atoms")?;
        check_positive(self.ratio_max, "params.ratio_max")?;
        check(
            self.defect_t_n.iter().all(|&t| t > 0.0 && t.is_finite()),
            "params.defect_t_n",
            || "entries must be positive".into(),
        )?;
        check_count(self.defect_samples, 2, 10_000_000, "params.defect_samples")
    }

    fn work(&self) -> f64 {
        let mean_t: f64 = self.t_n.iter().sum::<f64>() / self.t_n.len() as f64;
        self.t_n.len() as f64 * self.atoms as f64 * (50.0 + mean_t)
            + self.defect_t_n.len() as f64 * self.defect_samples as f64
    }
}

/// Tail profile of the depth over the `N′` cell at a fixed diagonal point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TcParams {
    pub m: usize,
    pub t_n: f64,
    pub delta: f64,
    pub r_rate: f64,
    pub t: f64,
    pub s: f64,
    pub s_i: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub samples: usize,
}

impl Default for TcParams {
    fn default() -> Self {
        Self {
            m: 4,
            t_n: 10.0,
            delta: crate::measures::DEFAULT_DELTA,
            r_rate: crate::measures::DEFAULT_R_RATE,
            t: 5.0,
            s: 3.75,
            s_i: vec![1.5],
            c_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5],
            samples: 20_000,
        }
    }
}

impl TcParams {
    fn validate(&self) -> Result<()> {
        check_count(self.m, 2, 6, "params.m")?;
        check_positive(self.t_n, "params.t_n")?;
        check(
            self.s_i.len() == self.m.saturating_sub(3),
            "params.s_i",
            || {
                format!(
                    "needs {} entries for m = {}",
                    self.m.saturating_sub(3),
                    self.m
                )
            },
        )?;
        check(self.c_grid.len() >= 2, "params.c_grid", || {
            "need at least two levels".into()
        })?;
        check_grid(&self.c_grid, "params.c_grid")?;
        check_count(self.samples, 2, 10_000_000, "params.samples")
    }

    fn work(&self) -> f64 {
        self.samples as f64 * 50.0
    }
}

/// Top Lyapunov exponent of the return cocycle along the geodesic flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapParams {
    pub horizon: usize,
    pub starts: usize,
    /// Flow time per cocycle step.
    pub step_time: f64,
    pub target: f64,
    pub tol: f64,
    pub residual_sigma: f64,
}

impl Default for LyapParams {
    fn default() -> Self {
        Self {
            horizon: 100_000,
            starts: 8,
            step_time: 1.0,
            target: 0.5,
            tol: 0.05,
            residual_sigma: 3.0,
        }
    }
}

impl LyapParams {
    fn validate(&self) -> Result<()> {
        check_count(self.horizon, 10, 100_000_000, "params.horizon")?;
        check_count(self.starts, 2, 100_000, "params.starts")?;
        check_positive(self.step_time, "params.step_time")?;
        check_positive(self.tol, "params.tol")
    }

    fn work(&self) -> f64 {
        self.horizon as f64 * self.starts as f64
    }
}

/// Oseledets functionals of a diagonal test cocycle over two commuting
/// Cartan generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OseledetsParams {
    pub m: usize,
    /// Fiber log-rates along `a` and `b` (each trace zero).
    pub rates_a: Vec<f64>,
    pub rates_b: Vec<f64>,
    pub horizon: usize,
    pub hecke_prime: u64,
    pub rel_tol: f64,
}

impl Default for OseledetsParams {
    fn default() -> Self {
        Self {
            m: 3,
            rates_a: vec![0.2, -0.2],
            rates_b: vec![0.1, -0.1],
            horizon: 200,
            hecke_prime: HECKE_PRIME,
            rel_tol: 0.02,
        }
    }
}

impl OseledetsParams {
    fn validate(&self) -> Result<()> {
        check_count(self.m, 3, 6, "params.m")?;
        check_count(self.rates_a.len(), 1, 6, "params.rates_a")?;
        check(
            self.rates_b.len() == self.rates_a.len(),
            "params.rates_b",
            || "must match rates_a in length".into(),
        )?;
        for (field, v) in [
            ("params.rates_a", &self.rates_a),
            ("params.rates_b", &self.rates_b),
        ] {
            let sum: f64 = v.iter().sum();
            check(sum.abs() < 1e-12, field, || {
                format!("must sum to zero, got {sum:e}")
            })?;
        }
        check_count(self.horizon, 1, 10_000_000, "params.horizon")?;
        check(self.hecke_prime >= 2, "params.hecke_prime", || {
            "must be a prime ≥ 2".into()
        })?;
        check_positive(self.rel_tol, "params.rel_tol")
    }

    fn work(&self) -> f64 {
        3.0 * self.horizon as f64
    }
}

/// Elementary-matrix decompositions of random elements of SL(m,ℤ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeParams {
    pub m: usize,
    pub samples: usize,
    /// Letters in each generating word.
    pub letters: usize,
    /// Sample `n` uses exponents `|k| ≤ 1 + n mod kmax_cycle`.
    pub kmax_cycle: usize,
    /// Band edges in `log₁₀‖γ‖`; consecutive pairs are half-open bands,
    /// the last one closed.
    pub band_edges: Vec<f64>,
    /// Allowed relative spread of the per-band constant.
    pub c_tol: f64,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        Self {
            m: 4,
            samples: 1000,
            letters: 50,
            kmax_cycle: 6,
            band_edges: vec![1.0, 4.0, 8.0, 12.0],
            c_tol: 0.5,
        }
    }
}

impl DecomposeParams {
    fn validate(&self) -> Result<()> {
        check_count(self.m, 2, 8, "params.m")?;
        check_count(self.samples, 1, 1_000_000, "params.samples")?;
        check_count(self.letters, 1, 10_000, "params.letters")?;
        check_count(self.kmax_cycle, 1, 1_000, "params.kmax_cycle")?;
        check(self.band_edges.len() >= 2, "params.band_edges", || {
            "need at least two edges".into()
        })?;
        check(
            self.band_edges.windows(2).all(|w| w[0] < w[1]),
            "params.band_edges",
            || "must be strictly increasing".into(),
        )?;
        check_positive(self.c_tol, "params.c_tol")
    }

    fn work(&self) -> f64 {
        self.samples as f64 * self.letters as f64 * 10.0
    }
}

/// Short words for large unipotent powers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UniwordParams {
    pub m: usize,
    pub i: usize,
    pub j: usize,
    /// Exponents up to `2^max_log2` are tested.
    pub max_log2: u32,
    /// Random exponents in addition to `2^e` and `2^e ± 1`.
    pub random_samples: usize,
    pub constant: f64,
    pub slope_max: f64,
}

impl Default for UniwordParams {
    fn default() -> Self {
        Self {
            m: 3,
            i: 1,
            j: 2,
            max_log2: 30,
            random_samples: 500,
            constant: SHORT_WORD_CONSTANT,
            slope_max: 2.1,
        }
    }
}

impl UniwordParams {
    fn validate(&self) -> Result<()> {
        check_count(self.m, 3, 8, "params.m")?;
        check(
            self.i >= 1 && self.i <= self.m && self.j >= 1 && self.j <= self.m && self.i != self.j,
            "params.i",
            || {
                format!(
                    "({}, {}) is not an off-diagonal position for m = {}",
                    self.i, self.j, self.m
                )
            },
        )?;
        check(
            self.max_log2 >= 2 && self.max_log2 <= 62,
            "params.max_log2",
            || "must lie in [2, 62]".into(),
        )?;
        check_count(self.random_samples, 0, 1_000_000, "params.random_samples")?;
        check_positive(self.constant, "params.constant")
    }

    fn work(&self) -> f64 {
        (self.random_samples as f64 + 3.0 * self.max_log2 as f64)
            * (self.max_log2 as f64).powi(2)
            * 10.0
    }
}

/// Exhaustive sumset covers of random symmetric subsets of `B_n(ℤ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SumsetParams {
    pub n_min: i64,
    pub n_max: i64,
    pub deltas: Vec<f64>,
    pub sets_per_delta: usize,
    /// Sets are drawn at density `δ + density_margin`.
    pub density_margin: f64,
}

impl Default for SumsetParams {
    fn default() -> Self {
        Self {
            n_min: 2,
            n_max: 40,
            deltas: vec![0.3, 0.5],
            sets_per_delta: 200,
            density_margin: 0.12,
        }
    }
}

impl SumsetParams {
    fn validate(&self) -> Result<()> {
        check(
            self.n_min >= 1 && self.n_min <= self.n_max,
            "params.n_min",
            || {
                format!(
                    "need 1 ≤ n_min ≤ n_max, got {} and {}",
                    self.n_min, self.n_max
                )
            },
        )?;
        check(self.n_max <= 200, "params.n_max", || {
            format!("must be at most 200, got {}", self.n_max)
        })?;
        check_grid(&self.deltas, "params.deltas")?;
        check(
            self.deltas.iter().all(|&d| d > 0.0 && d < 1.0),
            "params.deltas",
            || "entries must lie in (0, 1)".into(),
        )?;
        check(
            self.density_margin > 0.0 && self.deltas.iter().all(|d| d + self.density_margin <= 1.0),
            "params.density_margin",
            || "δ + margin must lie in (δ, 1]".into(),
        )?;
        check_count(self.sets_per_delta, 1, 100_000, "params.sets_per_delta")
    }

    fn work(&self) -> f64 {
        let side = (10 * self.n_max + 1) as f64;
        self.deltas.len() as f64 * self.sets_per_delta as f64 * side * side
    }
}

// ---------------------------------------------------------------------------
// Config

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Params {
    Systole(SystoleParams),
    Geodesic(GeodesicParams),
    Km(KmParams),
    Cuspmass(CuspmassParams),
    Folner(FolnerParams),
    Tc(TcParams),
    Lyap(LyapParams),
    Oseledets(OseledetsParams),
    Decompose(DecomposeParams),
    Uniword(UniwordParams),
    Sumset(SumsetParams),
}

impl Params {
    pub fn default_for(experiment: Experiment) -> Params {
        match experiment {
            Experiment::Systole => Params::Systole(Default::default()),
            Experiment::Geodesic => Params::Geodesic(Default::default()),
            Experiment::Km => Params::Km(Default::default()),
            Experiment::Cuspmass => Params::Cuspmass(Default::default()),
            Experiment::Folner => Params::Folner(Default::default()),
            Experiment::Tc => Params::Tc(Default::default()),
            Experiment::Lyap => Params::Lyap(Default::default()),
            Experiment::Oseledets => Params::Oseledets(Default::default()),
            Experiment::Decompose => Params::Decompose(Default::default()),
            Experiment::Uniword => Params::Uniword(Default::default()),
            Experiment::Sumset => Params::Sumset(Default::default()),
        }
    }

    fn from_table(experiment: Experiment, table: toml::Table) -> Result<Params> {
        fn parse<T: serde::de::DeserializeOwned>(table: toml::Table) -> Result<T> {
            table
                .try_into()
                .map_err(|e: toml::de::Error| config_err("params", e.message().to_string()))
        }
        Ok(match experiment {
            Experiment::Systole => Params::Systole(parse(table)?),
            Experiment::Geodesic => Params::Geodesic(parse(table)?),
            Experiment::Km => Params::Km(parse(table)?),
            Experiment::Cuspmass => Params::Cuspmass(parse(table)?),
            Experiment::Folner => Params::Folner(parse(table)?),
            Experiment::Tc => Params::Tc(parse(table)?),
            Experiment::Lyap => Params::Lyap(parse(table)?),
            Experiment::Oseledets => Params::Oseledets(parse(table)?),
            Experiment::Decompose => Params::Decompose(parse(table)?),
            Experiment::Uniword => Params::Uniword(parse(table)?),
            Experiment::Sumset => Params::Sumset(parse(table)?),
        })
    }

    pub fn experiment(&self) -> Experiment {
        match self {
            Params::Systole(_) => Experiment::Systole,
            Params::Geodesic(_) => Experiment::Geodesic,
            Params::Km(_) => Experiment::Km,
            Params::Cuspmass(_) => Experiment::Cuspmass,
            Params::Folner(_) => Experiment::Folner,
            Params::Tc(_) => Experiment::Tc,
            Params::Lyap(_) => Experiment::Lyap,
            Params::Oseledets(_) => Experiment::Oseledets,
            Params::Decompose(_) => Experiment::Decompose,
            Params::Uniword(_) => Experiment::Uniword,
            Params::Sumset(_) => Experiment::Sumset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Params::Systole(p) => p.validate(),
            Params::Geodesic(p) => p.validate(),
            Params::Km(p) => p.validate(),
            Params::Cuspmass(p) => p.validate(),
            Params::Folner(p) => p.validate(),
            Params::Tc(p) => p.validate(),
            Params::Lyap(p) => p.validate(),
            Params::Oseledets(p) => p.validate(),
            Params::Decompose(p) => p.validate(),
            Params::Uniword(p) => p.validate(),
            Params::Sumset(p) => p.validate(),
        }
    }

    /// Rough count of elementary work units, compared against `budget`.
    pub fn work(&self) -> f64 {
        match self {
            Params::Systole(p) => p.work(),
            Params::Geodesic(p) => p.work(),
            Params::Km(p) => p.work(),
            Params::Cuspmass(p) => p.work(),
            Params::Folner(p) => p.work(),
            Params::Tc(p) => p.work(),
            Params::Lyap(p) => p.work(),
            Params::Oseledets(p) => p.work(),
            Params::Decompose(p) => p.work(),
            Params::Uniword(p) => p.work(),
            Params::Sumset(p) => p.work(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    id: Option<String>,
    experiment: Option<Experiment>,
    seed: Option<u64>,
    threads: Option<usize>,
    budget: Option<u64>,
    #[serde(default)]
    params: toml::Table,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub id: String,
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
    /// Upper bound on [`Params::work`].
    pub budget: Option<u64>,
    pub params: Params,
}

impl ExperimentConfig {
    pub fn new(params: Params) -> Self {
        Self {
            id: params.experiment().name().to_string(),
            seed: DEFAULT_SEED,
            threads: 0,
            budget: None,
            params,
        }
    }

    pub fn default_for(experiment: Experiment) -> Self {
        Self::new(Params::default_for(experiment))
    }

    pub fn experiment(&self) -> Experiment {
        self.params.experiment()
    }

    /// Parse a TOML config. `expected` is the experiment chosen on the
    /// command line; a config naming a different one is rejected.
    pub fn from_toml(text: &str, expected: Option<Experiment>) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| config_err("<root>", e.message().to_string()))?;
        let experiment = match (raw.experiment, expected) {
            (Some(a), Some(b)) if a != b => {
                return Err(config_err(
                    "experiment",
                    format!("config is for `{a}`, but `{b}` was requested"),
                ));
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(config_err("experiment", "missing")),
        };
        let params = Params::from_table(experiment, raw.params)?;
        let mut cfg = Self::new(params);
        if let Some(id) = raw.id {
            cfg.id = id;
        }
        cfg.seed = raw.seed.unwrap_or(DEFAULT_SEED);
        cfg.threads = raw.threads.unwrap_or(0);
        cfg.budget = raw.budget;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check(
            !self.id.is_empty()
                && self
                    .id
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)),
            "id",
            || {
                format!(
                    "`{}` must be nonempty ASCII letters, digits, '-', '_' or '.'",
                    self.id
                )
            },
        )?;
        check(self.threads <= 1024, "threads", || {
            format!("must be at most 1024, got {}", self.threads)
        })?;
        self.params.validate()?;
        if let Some(budget) = self.budget {
            let work = self.params.work();
            check(work <= budget as f64, "budget", || {
                format!("experiment needs about {work:.3e} work units > {budget}")
            })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for e in Experiment::ALL {
            let cfg = ExperimentConfig::default_for(e);
            cfg.validate().unwrap();
            assert_eq!(cfg.experiment(), e);
            assert_eq!(Experiment::from_name(e.name()), Some(e));
        }
    }

    #[test]
    fn parse_and_reject() {
        let cfg = ExperimentConfig::from_toml(
            "seed = 5\n[params]\nm = 3\nsamples = 10\n",
            Some(Experiment::Systole),
        )
        .unwrap();
        assert_eq!(cfg.seed, 5);
        assert!(matches!(&cfg.params, Params::Systole(p) if p.samples == 10 && p.spread == 1.0));

        let err =
            ExperimentConfig::from_toml("[params]\nsampels = 10\n", Some(Experiment::Systole))
                .unwrap_err();
        assert!(
            matches!(&err, Error::Config { field, message } if field == "params" && message.contains("sampels"))
        );

        let err =
            ExperimentConfig::from_toml("experiment = \"km\"\n", Some(Experiment::Tc)).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "experiment"));

        let cfg =
            ExperimentConfig::from_toml("experiment = \"km\"\n[params]\nfit_eps = 0.3\n", None)
                .unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "params.fit_eps"));

        let mut cfg = ExperimentConfig::default_for(Experiment::Lyap);
        cfg.budget = Some(10);
        assert!(
            matches!(cfg.validate(), Err(Error::Config { ref field, .. }) if field == "budget")
        );
    }
}
