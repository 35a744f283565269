//! Acceptance suite. Runs every experiment with pinned parameters at 8 and
//! at 1 worker threads and prints one PASS/FAIL line per criterion. Exits
//! nonzero if any criterion fails.

use std::process::ExitCode;

use cuspflow::expcli::{self, *};

// Pinned tolerances and sizes.
const SYSTOLE_M: usize = 3;
const SYSTOLE_SAMPLES: usize = 1000;
const SYSTOLE_MAX_SECONDS: f64 = 30.0;
const METRIC_SAMPLES: usize = 10_000;
const C1_MAX: f64 = 1.2;
const KAPPA_FACTOR: f64 = std::f64::consts::SQRT_2;
const C0: f64 = 2.0;
const C2: f64 = 2.1;
const C3: f64 = 1.0;
const UNIPOTENT_MAX_EXP: u32 = 9;
const KM_HORIZON: f64 = 1e4;
const KM_EPS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];
const KM_FIT_EPS: f64 = 0.4;
const KM_MAX_SECONDS: f64 = 60.0;
const HAAR_SIZES: [usize; 2] = [10_000, 40_000];
const ETA_STABLE: f64 = 1.0;
const ETA_DIVERGENT: f64 = 3.0;
const STABLE_SIGMA: f64 = 3.0;
const DIVERGENT_SIGMA: f64 = 5.0;
const HOROCYCLE_TIME: f64 = 1e4;
const HOROCYCLE_STARTS: usize = 10;
const KS_MAX: f64 = 0.05;
const LYAP_HORIZON: usize = 100_000;
const LYAP_TARGET: f64 = 0.5;
const LYAP_TOL: f64 = 0.05;
const RESIDUAL_SIGMA: f64 = 3.0;
const OSELEDETS_TOL: f64 = 0.02;
const DEFECT_T_N: [f64; 4] = [10.0, 20.0, 50.0, 100.0];
const FAMILY_M: usize = 4;
const FAMILY_R_RATE: f64 = 2.0;
const FAMILY_T_N: [f64; 3] = [5.0, 10.0, 20.0];
const FAMILY_ETA: f64 = 0.1;
const FAMILY_RATIO_MAX: f64 = 3.0;
const SUMSET_N_MAX: i64 = 40;
const SUMSET_DELTAS: [f64; 2] = [0.3, 0.5];
const SUMSET_SETS: usize = 200;
const WORD_SAMPLES: usize = 1000;
const WORD_M: usize = 4;
const COST_SPREAD: f64 = 0.5;
const UNIWORD_MAX_LOG2: u32 = 30;
const EXCURSIONS: usize = 100;
const EXCURSION_DEPTH: f64 = 1.5;
const SEED: u64 = DEFAULT_SEED;

fn configs() -> Vec<ExperimentConfig> {
    let systole = SystoleParams {
        m: SYSTOLE_M,
        samples: SYSTOLE_SAMPLES,
        metric_samples: METRIC_SAMPLES,
        c1_max: C1_MAX,
        kappa_factor: KAPPA_FACTOR,
        c0: C0,
        unipotent_max_exp: UNIPOTENT_MAX_EXP,
        c2: C2,
        c3: C3,
        ..Default::default()
    };
    let geodesic = GeodesicParams {
        horocycle_starts: HOROCYCLE_STARTS,
        horocycle_time: HOROCYCLE_TIME,
        ks_max: KS_MAX,
        excursions: EXCURSIONS,
        threshold: EXCURSION_DEPTH,
        ..Default::default()
    };
    let km = KmParams {
        m: 2,
        horizon: KM_HORIZON,
        eps: KM_EPS.to_vec(),
        fit_eps: KM_FIT_EPS,
        ..Default::default()
    };
    let cuspmass = CuspmassParams {
        sizes: HAAR_SIZES.to_vec(),
        eta_stable: ETA_STABLE,
        eta_divergent: ETA_DIVERGENT,
        stable_sigma: STABLE_SIGMA,
        divergent_sigma: DIVERGENT_SIGMA,
        ..Default::default()
    };
    let folner = FolnerParams {
        m: FAMILY_M,
        r_rate: FAMILY_R_RATE,
        t_n: FAMILY_T_N.to_vec(),
        eta: vec![FAMILY_ETA],
        ratio_max: FAMILY_RATIO_MAX,
        defect_t_n: DEFECT_T_N.to_vec(),
        ..Default::default()
    };
    let tc = TcParams {
        m: FAMILY_M,
        r_rate: FAMILY_R_RATE,
        ..Default::default()
    };
    let lyap = LyapParams {
        horizon: LYAP_HORIZON,
        target: LYAP_TARGET,
        tol: LYAP_TOL,
        residual_sigma: RESIDUAL_SIGMA,
        ..Default::default()
    };
    let oseledets = OseledetsParams {
        rel_tol: OSELEDETS_TOL,
        ..Default::default()
    };
    let decompose = DecomposeParams {
        m: WORD_M,
        samples: WORD_SAMPLES,
        c_tol: COST_SPREAD,
        ..Default::default()
    };
    let uniword = UniwordParams {
        max_log2: UNIWORD_MAX_LOG2,
        ..Default::default()
    };
    let sumset = SumsetParams {
        n_max: SUMSET_N_MAX,
        deltas: SUMSET_DELTAS.to_vec(),
        sets_per_delta: SUMSET_SETS,
        ..Default::default()
    };
    [
        Params::Systole(systole),
        Params::Geodesic(geodesic),
        Params::Km(km),
        Params::Cuspmass(cuspmass),
        Params::Folner(folner),
        Params::Tc(tc),
        Params::Lyap(lyap),
        Params::Oseledets(oseledets),
        Params::Decompose(decompose),
        Params::Uniword(uniword),
        Params::Sumset(sumset),
    ]
    .into_iter()
    .map(|p| {
        let mut c = ExperimentConfig::new(p);
        c.seed = SEED;
        c
    })
    .collect()
}

struct Runs {
    outputs: Vec<RunOutput>,
    /// Single-threaded reruns, in the same order.
    serial: Vec<RunOutput>,
}

impl Runs {
    fn get(&self, e: Experiment) -> &RunReport {
        &self
            .outputs
            .iter()
            .find(|o| o.report.experiment == e)
            .expect("experiment ran")
            .report
    }

    fn serial(&self, e: Experiment) -> &RunReport {
        &self
            .serial
            .iter()
            .find(|o| o.report.experiment == e)
            .expect("experiment ran")
            .report
    }
}

fn check<'a>(r: &'a RunReport, name: &str) -> &'a Check {
    r.checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("{}: no check {name}", r.id))
}

fn checks_with_prefix<'a>(r: &'a RunReport, prefix: &str) -> Vec<&'a Check> {
    r.checks
        .iter()
        .filter(|c| c.name.starts_with(prefix))
        .collect()
}

fn obs(c: &Check) -> String {
    match c.observed {
        Some(v) if v == v.trunc() && v.abs() < 1e12 => format!("{v}"),
        Some(v) => format!("{v:.4}"),
        None => "non-finite".into(),
    }
}

fn metric(r: &RunReport, name: &str) -> f64 {
    r.metrics
        .iter()
        .find(|m| m.name == name)
        .and_then(|m| m.value)
        .unwrap_or(f64::NAN)
}

fn main() -> ExitCode {
    let mut outputs = Vec::new();
    let mut serial = Vec::new();
    for cfg in configs() {
        let mut parallel = cfg.clone();
        parallel.threads = 8;
        let mut single = cfg;
        single.threads = 1;
        match (expcli::run(&parallel), expcli::run(&single)) {
            (Ok(a), Ok(b)) => {
                outputs.push(a);
                serial.push(b);
            }
            (Err(e), _) | (_, Err(e)) => {
                println!("run {} failed: {e}", parallel.id);
                return ExitCode::FAILURE;
            }
        }
    }
    let runs = Runs { outputs, serial };
    let mut results: Vec<(bool, String)> = Vec::new();

    // 1
    let s = runs.serial(Experiment::Systole);
    let c = check(s, "systole_mismatches");
    let secs = s.timing.wall_clock_s;
    results.push((
        c.passed && secs < SYSTOLE_MAX_SECONDS,
        format!("systole exactness: {} mismatches in {SYSTOLE_SAMPLES} m={SYSTOLE_M} lattices, {secs:.2} s single-threaded (< {SYSTOLE_MAX_SECONDS} s)", obs(c)),
    ));

    // 2
    let s = runs.get(Experiment::Systole);
    let (a, b, u) = (
        check(s, "normdistance_c1"),
        check(s, "norm_comparison_violations"),
        check(s, "unipotent_growth_violations"),
    );
    results.push((
        a.passed && b.passed && u.passed,
        format!(
            "metric inequalities: C1 = {} (<= {C1_MAX}), norm comparison violations {} / {METRIC_SAMPLES}, d(E^k, Id) violations {} for k <= 1e{UNIPOTENT_MAX_EXP}",
            obs(a),
            obs(b),
            obs(u)
        ),
    ));

    // 3
    let k = runs.get(Experiment::Km);
    let ks = runs.serial(Experiment::Km);
    let v = check(k, "km_identity_violations");
    let mono = check(k, "km_identity_monotone");
    let secs = ks.timing.wall_clock_s;
    results.push((
        v.passed && mono.passed && secs < KM_MAX_SECONDS,
        format!(
            "KM non-divergence at x = Id, T = {KM_HORIZON}: C_hat = {:.4}, {} violations over eps {KM_EPS:?}, {secs:.2} s (< {KM_MAX_SECONDS} s)",
            metric(k, "km_identity_c_hat"),
            obs(v)
        ),
    ));

    // 4
    let c = runs.get(Experiment::Cuspmass);
    let (st, dv, mo, th) = (
        check(c, "stable_sigmas_apart"),
        check(c, "divergent_growth_sigma"),
        check(c, "divergent_monotone"),
        check(c, "divergence_threshold_error"),
    );
    results.push((
        st.passed && dv.passed && mo.passed && th.passed,
        format!(
            "Haar cusp mass: eta={ETA_STABLE} sizes {HAAR_SIZES:?} {} sigma apart (<= {STABLE_SIGMA}); eta={ETA_DIVERGENT} growth {} sigma (>= {DIVERGENT_SIGMA}), monotone {}; oracle threshold {}",
            obs(st),
            obs(dv),
            mo.passed,
            metric(c, "divergence_threshold")
        ),
    ));

    // 5
    let g = runs.get(Experiment::Geodesic);
    let ksc = check(g, "horocycle_ks_max");
    results.push((
        ksc.passed,
        format!("horocycle equidistribution: max KS {} over {HOROCYCLE_STARTS} thick starts at T = {HOROCYCLE_TIME} (<= {KS_MAX})", obs(ksc)),
    ));

    // 6
    let l = runs.get(Experiment::Lyap);
    let (e, r) = (
        check(l, "lambda_top_error"),
        check(l, "subadditivity_excess"),
    );
    results.push((
        e.passed && r.passed,
        format!(
            "return cocycle exponent: lambda_top = {:.4} (target {LYAP_TARGET} +- {LYAP_TOL}) at horizon {LYAP_HORIZON}; max residual excess over {RESIDUAL_SIGMA} sigma {}",
            metric(l, "lambda_top"),
            obs(r)
        ),
    ));

    // 7
    let o = runs.get(Experiment::Oseledets);
    let (e, a) = (
        check(o, "rate_relative_error"),
        check(o, "additivity_relative_residual"),
    );
    results.push((
        e.passed && a.passed,
        format!(
            "Oseledets functionals: rate error {:.2e}, additivity residual {:.2e} (each < {OSELEDETS_TOL})",
            e.observed.unwrap_or(f64::NAN),
            a.observed.unwrap_or(f64::NAN)
        ),
    ));

    // 8
    let f = runs.get(Experiment::Folner);
    let defects = checks_with_prefix(f, "folner_defect");
    let detail: Vec<String> = defects
        .iter()
        .map(|c| format!("{}={}", &c.name["folner_defect".len()..], obs(c)))
        .collect();
    results.push((
        defects.len() == DEFECT_T_N.len() && defects.iter().all(|c| c.passed),
        format!(
            "Følner defect under a^1 <= 2/t_n + 3 sigma: {}",
            detail.join(", ")
        ),
    ));

    // 9
    let ratio = checks_with_prefix(f, "folner_family_ratio");
    let t = runs.get(Experiment::Tc);
    let slope = check(t, "tc_slope_negative_95");
    let tc_slope = t
        .metrics
        .iter()
        .find(|m| m.name == "tc_slope")
        .expect("slope");
    results.push((
        ratio.len() == 1 && ratio[0].passed && slope.passed,
        format!(
            "family cusp mass m={FAMILY_M}, t_n {FAMILY_T_N:?}, eta={FAMILY_ETA}: max/min {} (<= {FAMILY_RATIO_MAX}); T_c slope {:.3} +- {:.3}, negative at 95%: {}",
            ratio.first().map(|c| obs(c)).unwrap_or_default(),
            tc_slope.value.unwrap_or(f64::NAN),
            tc_slope.stderr.unwrap_or(f64::NAN),
            slope.passed
        ),
    ));

    // 10
    let s = runs.get(Experiment::Sumset);
    let (cov, ora, cst) = (
        check(s, "covered"),
        check(s, "oracle_within_k_delta"),
        check(s, "cover_constants_half"),
    );
    results.push((
        cov.passed && ora.passed && cst.passed,
        format!(
            "sumset covers n <= {SUMSET_N_MAX}, delta {SUMSET_DELTAS:?}: covered {} / {}, oracle <= k_delta {} / {}, cover_constants(0.5) = (3, 24, 96, B_24): {}",
            obs(cov),
            cov.bound,
            obs(ora),
            ora.bound,
            cst.passed
        ),
    ));

    // 11
    let d = runs.get(Experiment::Decompose);
    let u = runs.get(Experiment::Uniword);
    let band_checks: Vec<&Check> = d
        .checks
        .iter()
        .filter(|c| {
            c.name.starts_with("cost_constant_spread") || c.name.starts_with("band_samples")
        })
        .collect();
    let exact = check(d, "exact_reconstructions");
    let consts: Vec<String> = d
        .metrics
        .iter()
        .filter(|m| m.name == "cost_constant")
        .map(|m| format!("{:.1}", m.value.unwrap_or(f64::NAN)))
        .collect();
    let (ue, uu, ur) = (
        check(u, "exact_words"),
        check(u, "unit_letter_words"),
        check(u, "max_length_ratio"),
    );
    results.push((
        exact.passed && band_checks.iter().all(|c| c.passed) && ue.passed && uu.passed && ur.passed,
        format!(
            "bounded generation: {} / {WORD_SAMPLES} exact in SL({WORD_M},Z), per-band C [{}] within +-{COST_SPREAD}; short words exact {} / {}, max len/(log2 k)^2 {} (<= {})",
            obs(exact),
            consts.join(", "),
            obs(ue),
            ue.bound,
            obs(ur),
            ur.bound
        ),
    ));

    // 12
    let (found, para) = (
        check(g, "excursions_found"),
        check(g, "excursions_parabolic"),
    );
    results.push((
        found.passed && para.passed,
        format!("excursion deck classes: {} / {EXCURSIONS} parabolic at depth threshold {EXCURSION_DEPTH}", obs(para)),
    ));

    // 13
    let mut differing = Vec::new();
    for (a, b) in runs.outputs.iter().zip(&runs.serial) {
        let (ja, jb) = (a.report.to_json(), b.report.to_json());
        if !matches!((&ja, &jb), (Ok(x), Ok(y)) if x == y) {
            differing.push(a.report.experiment.to_string());
        }
    }
    results.push((
        differing.is_empty(),
        format!(
            "determinism: {} / {} experiments bit-identical at 8 vs 1 threads{}",
            runs.outputs.len() - differing.len(),
            runs.outputs.len(),
            if differing.is_empty() {
                String::new()
            } else {
                format!(" (differ: {})", differing.join(", "))
            }
        ),
    ));

    let mut all = true;
    for (i, (ok, line)) in results.iter().enumerate() {
        all &= ok;
        println!(
            "criterion {:>2} {}: {line}",
            i + 1,
            if *ok { "PASS" } else { "FAIL" }
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
