//! The experiment bodies. Each one fills a [`RunOutput`] with metrics,
//! checks against its acceptance bands, and per-metric tables.
//!
//! All randomness is drawn through counter-based generators addressed by
//! sample index, and every floating-point reduction runs over index-ordered
//! vectors, so the output depends on `(config, seed)` only.

use std::time::Instant;

use num_traits::Signed;
use rand::Rng;

use super::config::*;
use super::report::*;
use crate::cocycles::{oseledets_functionals, top_lyapunov, CartanCocycle, ReturnCocycleLinear};
use crate::error::{Error, Result};
use crate::grouplin::{
    a_t, b_s, elementary, norm_conorm, random_gaussian_element, random_rotation, sl2_embed,
    symmetric_distance, CartanVector, Root,
};
use crate::lattices::{brute_force_systole, random_box_lattice, random_hecke_lattice};
use crate::measures::{
    average_unipotent, cusp_mass, folner_average, km_fit, km_fractions, tc_profile, AnElement,
    EmpiricalMeasure, Estimate, FolnerBox, Provenance,
};
use crate::modular::{
    decompose_excursions, excursion_deck_class, flow_orbit, haar_depth_cdf, haar_exp_moment,
    haar_sample, haar_sample_thick, ks_distance, orbit_rows, Flow, ModularPoint,
};
use crate::rng::{atom_rng, par_sample, streams, sub_seed, with_threads};
use crate::sumsets::{cover_constants, minimal_k_oracle, verify_cover, LatticeBall, SymmetricSet};
use crate::wordgeom::{decompose, unipotent_short_word, word_eval, GroupWord, Letter};

/// Validate `cfg`, run it in a pool of `cfg.threads` workers and return the
/// report and tables.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let experiment = cfg.experiment();
    let echo = serde_json::to_value(&cfg.params)?;
    let mut out = RunOutput {
        report: RunReport::new(&cfg.id, experiment, cfg.seed, echo),
        tables: Vec::new(),
    };
    let start = Instant::now();
    let seed = cfg.seed;
    let (result, threads) = with_threads(cfg.threads, || {
        let r = match &cfg.params {
            Params::Systole(p) => systole(p, seed, &mut out),
            Params::Geodesic(p) => geodesic(p, seed, &mut out),
            Params::Km(p) => km(p, &mut out),
            Params::Cuspmass(p) => cuspmass(p, seed, &mut out),
            Params::Folner(p) => folner(p, seed, &mut out),
            Params::Tc(p) => tc(p, seed, &mut out),
            Params::Lyap(p) => lyap(p, seed, &mut out),
            Params::Oseledets(p) => oseledets(p, seed, &mut out),
            Params::Decompose(p) => decompose_words(p, seed, &mut out),
            Params::Uniword(p) => uniword(p, seed, &mut out),
            Params::Sumset(p) => sumset(p, seed, &mut out),
        };
        (r, rayon::current_num_threads())
    });
    result.map_err(|e| Error::Experiment {
        experiment: experiment.name().into(),
        source: Box::new(e),
    })?;
    out.report.timing = Timing {
        wall_clock_s: start.elapsed().as_secs_f64(),
        threads,
    };
    Ok(out)
}

fn collect<T>(v: Vec<Result<T>>) -> Result<Vec<T>> {
    v.into_iter().collect()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

// ---------------------------------------------------------------------------
// systole

fn systole(p: &SystoleParams, seed: u64, out: &mut RunOutput) -> Result<()> {
    let rows = collect(par_sample(seed, streams::LATTICES, p.samples, |_, rng| {
        let l = random_box_lattice(p.m, p.spread, rng)?;
        let enumerated = l.systole()?;
        let (brute, half_width) = brute_force_systole(l.basis())?;
        Ok((enumerated, brute, half_width))
    }))?;
    let mut table = Table::new(
        "systole",
        &["enumeration", "brute_force", "box_half_width", "agree"],
    );
    let mut mismatches = 0;
    for &(e, b, w) in &rows {
        let agree = (e - b).abs() <= 1e-9 * b.max(1.0);
        mismatches += usize::from(!agree);
        table.push(vec![e.into(), b.into(), (w as i64).into(), agree.into()]);
    }
    out.tables.push(table);
    out.report
        .metric("systole_mismatches", mismatches as f64, p.samples);
    out.report
        .check(Check::equal("systole_mismatches", mismatches as f64, 0.0));

    // 2·log‖A‖ against d(A, Id) for A in an embedded SL(2,ℝ)
    let gaps = par_sample(seed, streams::GROUP, p.metric_samples, |_, rng| {
        let a = random_gaussian_element(2, rng, 1.5);
        let e = a.matrix();
        let g = sl2_embed(3, [e[(0, 0)], e[(0, 1)], e[(1, 0)], e[(1, 1)]], 1, 2)?;
        let ln = norm_conorm(&g).0.ln();
        Ok((ln, symmetric_distance(&g)))
    });
    let gaps = collect(gaps)?;
    let mut table = Table::new("normdistance", &["log_norm", "distance", "gap"]);
    let mut c1 = 0.0f64;
    for &(ln, d) in &gaps {
        let gap = d - 2.0 * ln;
        c1 = c1.max(gap.abs());
        table.push(vec![ln.into(), d.into(), gap.into()]);
    }
    out.tables.push(table);
    out.report.metric("normdistance_c1", c1, p.metric_samples);
    out.report
        .check(Check::at_most("normdistance_c1", c1, p.c1_max));

    // κ^{−1}log‖g‖ − C₀ ≤ d(g, Id) ≤ κ log‖g‖ + C₀
    let dims = p.metric_dim_max - 1;
    let easy = par_sample(seed, streams::METRIC, p.metric_samples, |i, rng| {
        let m = 2 + i % dims;
        let g = random_gaussian_element(m, rng, 2.0);
        (m, norm_conorm(&g).0.ln(), symmetric_distance(&g))
    });
    let mut table = Table::new(
        "norm_comparison",
        &["m", "log_norm", "distance", "lower_ok", "upper_ok"],
    );
    let mut violations = 0;
    for &(m, ln, d) in &easy {
        let kappa = p.kappa_factor * m as f64;
        let lower = ln / kappa - p.c0 <= d;
        let upper = d <= kappa * ln + p.c0;
        violations += usize::from(!(lower && upper));
        table.push(vec![
            m.into(),
            ln.into(),
            d.into(),
            lower.into(),
            upper.into(),
        ]);
    }
    out.tables.push(table);
    out.report.metric(
        "norm_comparison_violations",
        violations as f64,
        p.metric_samples,
    );
    out.report.check(Check::equal(
        "norm_comparison_violations",
        violations as f64,
        0.0,
    ));

    // d(E^k, Id) ≤ C₂ log k + C₃
    let mut table = Table::new("unipotent_growth", &["k", "distance", "bound"]);
    let mut violations = 0;
    for e in 0..=p.unipotent_max_exp {
        let k = 10i64.pow(e);
        let d = symmetric_distance(&elementary(3, 1, 3, k)?.to_real());
        let bound = p.c2 * (k as f64).ln() + p.c3;
        violations += usize::from(d > bound);
        table.push(vec![k.into(), d.into(), bound.into()]);
    }
    out.tables.push(table);
    let n = p.unipotent_max_exp as usize + 1;
    out.report
        .metric("unipotent_growth_violations", violations as f64, n);
    out.report.check(Check::equal(
        "unipotent_growth_violations",
        violations as f64,
        0.0,
    ));
    Ok(())
}

// ---------------------------------------------------------------------------
// geodesic

/// Geodesic segments are processed in fixed-size batches so the set of
/// collected excursions does not depend on scheduling.
const SEGMENT_BATCH: usize = 16;

fn geodesic(p: &GeodesicParams, seed: u64, out: &mut RunOutput) -> Result<()> {
    let horocycle = Root::new(2, 1, 2)?;
    let ks = collect(par_sample(
        seed,
        streams::ORBITS,
        p.horocycle_starts,
        |_, rng| {
            let x = haar_sample_thick(rng);
            let avg = average_unipotent(
                &EmpiricalMeasure::point_mass(x.clone()),
                horocycle,
                p.horocycle_time,
                p.horocycle_substeps,
            )?;
            let depths: Vec<f64> = avg.atoms().iter().map(|a| a.point.depth()).collect();
            Ok((x.z(), ks_distance(&depths, haar_depth_cdf)))
        },
    ))?;
    let mut table = Table::new("horocycle_ks", &["start_x", "start_y", "ks"]);
    let mut worst = 0.0f64;
    for &((x, y), d) in &ks {
        worst = worst.max(d);
        table.push(vec![x.into(), y.into(), d.into()]);
    }
    out.tables.push(table);
    out.report
        .metric("horocycle_ks_max", worst, p.horocycle_starts);
    out.report
        .check(Check::at_most("horocycle_ks_max", worst, p.ks_max));

    let mut table = Table::new(
        "excursions",
        &[
            "segment",
            "start_time",
            "end_time",
            "max_depth",
            "jumps",
            "parabolic",
            "monotone",
        ],
    );
    let mut orbit = Table::new(
        "orbit",
        &["time", "depth", "deck_i", "deck_j", "deck_k", "flags"],
    );
    let mut found = 0usize;
    let mut parabolic = 0usize;
    let mut segment = 0usize;
    while found < p.excursions && segment < p.max_segments {
        let batch = SEGMENT_BATCH.min(p.max_segments - segment);
        let first = segment;
        let results = collect(
            (0..batch)
                .map(|b| {
                    let mut rng = atom_rng(seed, streams::GEODESICS, (first + b) as u64);
                    let x = haar_sample(&mut rng);
                    flow_orbit(&x, Flow::Geodesic, p.segment_time, p.step)
                })
                .collect::<Vec<_>>(),
        );
        let segments = results?;
        let classes: Vec<Vec<(f64, f64, f64, usize, bool, bool)>> = {
            use rayon::prelude::*;
            segments
                .par_iter()
                .map(|seg| {
                    let dec = decompose_excursions(seg, p.threshold)?;
                    let last = seg.samples.len() - 1;
                    Ok(dec
                        .omegas
                        .iter()
                        .filter(|w| w.start > 0 && w.end < last)
                        .map(|w| {
                            let c = excursion_deck_class(seg, w);
                            let max_depth = seg.samples[w.start..=w.end]
                                .iter()
                                .map(|s| s.depth)
                                .fold(0.0, f64::max);
                            let (t0, t1) = (seg.samples[w.start].time, seg.samples[w.end].time);
                            (
                                t0,
                                t1,
                                max_depth,
                                c.exponents.len(),
                                c.parabolic,
                                c.monotone,
                            )
                        })
                        .collect())
                })
                .collect::<Result<Vec<_>>>()?
        };
        if first == 0 {
            for r in orbit_rows(&segments[0], p.threshold)
                .into_iter()
                .take(p.orbit_dump)
            {
                let (i, j, k) = match &r.letter {
                    Some((i, j, k)) => (i.to_string(), j.to_string(), k.to_string()),
                    None => Default::default(),
                };
                orbit.push(vec![
                    r.time.into(),
                    r.depth.into(),
                    i.into(),
                    j.into(),
                    k.into(),
                    r.flags().into(),
                ]);
            }
        }
        for (b, list) in classes.into_iter().enumerate() {
            for (t0, t1, d, jumps, para, mono) in list {
                if found == p.excursions {
                    break;
                }
                found += 1;
                parabolic += usize::from(para);
                table.push(vec![
                    (first + b).into(),
                    t0.into(),
                    t1.into(),
                    d.into(),
                    jumps.into(),
                    para.into(),
                    mono.into(),
                ]);
            }
        }
        segment += batch;
    }
    out.tables.push(table);
    out.tables.push(orbit);
    out.report.metric("excursions_found", found as f64, segment);
    out.report
        .metric("excursions_parabolic", parabolic as f64, found);
    out.report.check(Check::equal(
        "excursions_found",
        found as f64,
        p.excursions as f64,
    ));
    out.report.check(Check::equal(
        "excursions_parabolic",
        parabolic as f64,
        p.excursions as f64,
    ));
    Ok(())
}

// ---------------------------------------------------------------------------
// km

fn km(p: &KmParams, out: &mut RunOutput) -> Result<()> {
    let mut table = Table::new("km", &["start", "eps", "fraction", "bound", "holds"]);
    let starts = [
        ("identity", ModularPoint::identity()),
        (
            "generic",
            ModularPoint::from_upper_half_plane(p.generic_start[0], p.generic_start[1])?,
        ),
    ];
    for (name, x) in &starts {
        let fractions = km_fractions(x, p.horizon, &p.eps, p.step)?;
        let fit = km_fit(p.m, x.systole(), &p.eps, &fractions, p.fit_eps)?;
        let mut violations = 0;
        for r in &fit.rows {
            violations += usize::from(!r.holds);
            table.push(vec![
                (*name).into(),
                r.eps.into(),
                r.fraction.into(),
                r.bound.into(),
                r.holds.into(),
            ]);
        }
        let mut order: Vec<(f64, f64)> = p
            .eps
            .iter()
            .cloned()
            .zip(fractions.iter().cloned())
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let monotone = order.windows(2).all(|w| w[0].1 <= w[1].1);
        let samples = (p.horizon / p.step).ceil() as usize;
        out.report
            .metric(&format!("km_{name}_c_hat"), fit.c_hat, samples);
        out.report.metric(
            &format!("km_{name}_violations"),
            violations as f64,
            fit.rows.len(),
        );
        out.report.check(Check::equal(
            format!("km_{name}_violations"),
            violations as f64,
            0.0,
        ));
        out.report
            .check(Check::flag(format!("km_{name}_monotone"), monotone));
    }
    out.tables.push(table);
    Ok(())
}

// ---------------------------------------------------------------------------
// cuspmass

/// Smallest `η` at which the closed-form Haar integral diverges, by bisection.
fn divergence_threshold() -> f64 {
    let (mut lo, mut hi) = (0.0, 16.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if haar_exp_moment(mid).is_finite() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn cuspmass(p: &CuspmassParams, seed: u64, out: &mut RunOutput) -> Result<()> {
    let mut table = Table::new("haar_oracle", &["eta", "moment", "finite"]);
    for &eta in &p.eta_grid {
        let v = haar_exp_moment(eta);
        table.push(vec![eta.into(), v.into(), v.is_finite().into()]);
    }
    out.tables.push(table);
    let threshold = divergence_threshold();
    out.report.metric("divergence_threshold", threshold, 0);
    out.report.check(Check::at_most(
        "divergence_threshold_error",
        (threshold - 2.0).abs(),
        1e-9,
    ));

    let etas = [p.eta_stable, p.eta_divergent];
    let mut table = Table::new("exp_mass", &["size", "eta", "value", "stderr", "oracle"]);
    let mut stable: Vec<Estimate> = Vec::new();
    for (k, &size) in p.sizes.iter().enumerate() {
        let s = sub_seed(seed, k as u64);
        let pts = par_sample(s, streams::HAAR, size, |_, rng| haar_sample(rng));
        let mu = EmpiricalMeasure::uniform(
            pts,
            Some(Provenance {
                seed: s,
                stream: streams::HAAR,
            }),
        )?;
        let summary = cusp_mass(&[mu], &etas)?;
        for (e, est) in etas.iter().zip(&summary.reports[0].exp_mass) {
            table.push(vec![
                size.into(),
                (*e).into(),
                est.value.into(),
                est.stderr.into(),
                haar_exp_moment(*e).into(),
            ]);
            out.report
                .estimate("haar_exp_mass", est)
                .label("eta", *e)
                .label("size", size as f64);
        }
        stable.push(summary.reports[0].exp_mass[0]);
    }
    out.tables.push(table);
    let apart = stable[0].sigmas_apart(stable.last().expect("two sizes"));
    out.report
        .metric("stable_sigmas_apart", apart, p.sizes.iter().sum());
    out.report
        .check(Check::at_most("stable_sigmas_apart", apart, p.stable_sigma));

    // heavy tail: the log of the sample mean keeps growing with the size
    let eta = p.eta_divergent;
    let per_rep = par_sample(
        sub_seed(seed, 1000),
        streams::HAAR,
        p.replicates,
        |_, rng| {
            p.sizes
                .iter()
                .map(|&size| {
                    let sum: f64 = (0..size)
                        .map(|_| (eta * haar_sample(rng).depth()).exp())
                        .sum();
                    (sum / size as f64).ln()
                })
                .collect::<Vec<f64>>()
        },
    );
    let mut table = Table::new("divergent_replicates", &["replicate", "size", "log_mean"]);
    for (r, logs) in per_rep.iter().enumerate() {
        for (&size, &l) in p.sizes.iter().zip(logs) {
            table.push(vec![r.into(), size.into(), l.into()]);
        }
    }
    out.tables.push(table);
    let mut means = Vec::new();
    for (k, &size) in p.sizes.iter().enumerate() {
        let col: Vec<f64> = per_rep.iter().map(|l| l[k]).collect();
        let (mean, se) = mean_se(&col);
        let e = Estimate {
            value: mean,
            stderr: se,
            n: p.replicates,
        };
        out.report
            .estimate("divergent_log_mean", &e)
            .label("eta", eta)
            .label("size", size as f64);
        means.push(e);
    }
    let first = means[0];
    let last = *means.last().expect("two sizes");
    let growth_sigma = (last.value - first.value) / first.stderr.hypot(last.stderr);
    let monotone = means.windows(2).all(|w| w[1].value > w[0].value);
    out.report
        .metric("divergent_growth_sigma", growth_sigma, p.replicates);
    out.report.check(Check::at_least(
        "divergent_growth_sigma",
        growth_sigma,
        p.divergent_sigma,
    ));
    out.report
        .check(Check::flag("divergent_monotone", monotone));
    Ok(())
}

// ---------------------------------------------------------------------------
// folner and tc

fn base_rotation(m: usize, seed: u64) -> crate::grouplin::RealGroupElement {
    random_rotation(m - 1, &mut atom_rng(seed, streams::GROUP, 0))
}

fn folner(p: &FolnerParams, seed: u64, out: &mut RunOutput) -> Result<()> {
    let k = base_rotation(p.m, seed);
    let mut table = Table::new(
        "folner_mass",
        &[
            "t_n",
            "eta",
            "exp_mass",
            "exp_stderr",
            "sys_mass",
            "sys_stderr",
        ],
    );
    let mut masses: Vec<Vec<f64>> = vec![Vec::new(); p.eta.len()];
    for (idx, &t_n) in p.t_n.iter().enumerate() {
        let fbox = FolnerBox::new(t_n, p.delta, p.r_rate)?;
        let mu = folner_average(&k, &fbox, p.atoms, sub_seed(seed, idx as u64))?;
        let summary = cusp_mass(&[mu], &p.eta)?;
        let rep = &summary.reports[0];
        for (j, &eta) in p.eta.iter().enumerate() {
            let (e, s) = (rep.exp_mass[j], rep.sys_mass[j]);
            table.push(vec![
                t_n.into(),
                eta.into(),
                e.value.into(),
                e.stderr.into(),
                s.value.into(),
                s.stderr.into(),
            ]);
            out.report
                .estimate(FAMILY_METRIC, &e)
                .label("t_n", t_n)
                .label("eta", eta);
            masses[j].push(e.value);
        }
    }
    out.tables.push(table);
    for (j, &eta) in p.eta.iter().enumerate() {
        let max = masses[j].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = masses[j].iter().cloned().fold(f64::INFINITY, f64::min);
        out.report
            .metric("folner_family_sup", max, p.atoms * p.t_n.len())
            .label("eta", eta);
        out.report
            .metric("folner_family_ratio", max / min, p.atoms * p.t_n.len())
            .label("eta", eta);
        out.report.check(Check::at_most(
            format!("folner_family_ratio[eta={eta}]"),
            max / min,
            p.ratio_max,
        ));
    }

    let mut table = Table::new("folner_defect", &["t_n", "defect", "stderr", "bound"]);
    let a1 = AnElement::a(p.m, 1.0);
    for (idx, &t_n) in p.defect_t_n.iter().enumerate() {
        let fbox = FolnerBox::new(t_n, p.delta, p.r_rate)?;
        let d = fbox.defect(p.m, &a1, p.defect_samples, sub_seed(seed, 100 + idx as u64))?;
        let bound = 2.0 / t_n + 3.0 * d.stderr;
        table.push(vec![
            t_n.into(),
            d.value.into(),
            d.stderr.into(),
            bound.into(),
        ]);
        out.report.estimate("folner_defect", &d).label("t_n", t_n);
        out.report.check(Check::at_most(
            format!("folner_defect[t_n={t_n}]"),
            d.value,
            bound,
        ));
    }
    out.tables.push(table);
    Ok(())
}

fn tc(p: &TcParams, seed: u64, out: &mut RunOutput) -> Result<()> {
    let k = base_rotation(p.m, seed);
    let fbox = FolnerBox::new(p.t_n, p.delta, p.r_rate)?;
    let prof = tc_profile(&k, &fbox, (p.t, p.s, &p.s_i), &p.c_grid, p.samples, seed)?;
    let mut table = Table::new("tc_profile", &["c", "fraction", "stderr"]);
    for (c, f) in prof.c_grid.iter().zip(&prof.fractions) {
        table.push(vec![(*c).into(), f.value.into(), f.stderr.into()]);
        out.report.estimate("tc_fraction", f).label("c", *c);
    }
    out.tables.push(table);
    let slope = Estimate {
        value: prof.slope,
        stderr: prof.slope_stderr,
        n: p.samples,
    };
    out.report.estimate("tc_slope", &slope);
    out.report
        .check(Check::flag("tc_slope_negative_95", prof.negative_95));
    Ok(())
}

// ---------------------------------------------------------------------------
// lyap and oseledets

fn lyap(p: &LyapParams, seed: u64, out: &mut RunOutput) -> Result<()> {
    let starts = par_sample(seed, streams::COCYCLE, p.starts, |_, rng| haar_sample(rng));
    let est = top_lyapunov(
        &ReturnCocycleLinear,
        &a_t(2, p.step_time),
        &starts,
        p.horizon,
    )?;
    let rate = Estimate {
        value: est.value / p.step_time,
        stderr: est.stderr / p.step_time,
        n: p.starts,
    };
    out.report.estimate("lambda_top", &rate);
    out.report.check(Check::at_most(
        "lambda_top_error",
        (rate.value - p.target).abs(),
        p.tol,
    ));

    let mut table = Table::new("lyap_checkpoints", &["steps", "mean_log_norm_rate"]);
    for &(n, v) in &est.checkpoints {
        table.push(vec![n.into(), (v / p.step_time).into()]);
    }
    out.tables.push(table);
    let mut table = Table::new("subadditivity", &["n", "m", "mean", "stderr"]);
    let mut excess = f64::NEG_INFINITY;
    for r in &est.subadditivity {
        excess = excess.max(r.mean - p.residual_sigma * r.stderr);
        table.push(vec![r.n.into(), r.m.into(), r.mean.into(), r.stderr.into()]);
    }
    out.tables.push(table);
    out.report.metric("subadditivity_excess", excess, p.starts);
    out.report
        .check(Check::at_most("subadditivity_excess", excess, 0.0));
    Ok(())
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn oseledets(p: &OseledetsParams, seed: u64, out: &mut RunOutput) -> Result<()> {
    let gens = vec![
        CartanVector::a_generator(p.m),
        CartanVector::b_generator(p.m),
    ];
    let cocycle = CartanCocycle::diagonal(gens, &[p.rates_a.clone(), p.rates_b.clone()])?;
    let x = random_hecke_lattice(p.m, p.hecke_prime, &mut atom_rng(seed, streams::HECKE, 0))?;
    let (a, b) = (a_t(p.m, 1.0), b_s(p.m, 1.0));
    let f = oseledets_functionals(&cocycle, [&a, &b], &x, p.horizon)?;
    let expected = [sorted_desc(&p.rates_a), sorted_desc(&p.rates_b)];
    let scale = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scales = [scale(&p.rates_a), scale(&p.rates_b)];
    let mut table = Table::new(
        "oseledets",
        &[
            "index",
            "lambda_a",
            "lambda_b",
            "lambda_ab",
            "expected_a",
            "expected_b",
            "residual",
        ],
    );
    let (mut rate_err, mut additivity) = (0.0f64, 0.0f64);
    for l in &f {
        for g in 0..2 {
            let e = expected[g][l.index];
            let denom = if e.abs() > 1e-12 {
                e.abs()
            } else {
                scales[g].max(1e-12)
            };
            rate_err = rate_err.max((l.values[g] - e).abs() / denom);
        }
        let denom = (l.values[0].abs() + l.values[1].abs()).max(1e-12);
        additivity = additivity.max(l.residual / denom);
        table.push(vec![
            l.index.into(),
            l.values[0].into(),
            l.values[1].into(),
            l.product_value.into(),
            expected[0][l.index].into(),
            expected[1][l.index].into(),
            l.residual.into(),
        ]);
    }
    out.tables.push(table);
    out.report
        .metric("rate_relative_error", rate_err, p.horizon);
    out.report
        .metric("additivity_relative_residual", additivity, p.horizon);
    out.report
        .check(Check::at_most("rate_relative_error", rate_err, p.rel_tol));
    out.report.check(Check::at_most(
        "additivity_relative_residual",
        additivity,
        p.rel_tol,
    ));
    Ok(())
}

// ---------------------------------------------------------------------------
// decompose and uniword

/// Product of `letters` random elementary letters with `|k| ≤ kmax`.
pub fn random_word<R: Rng + ?Sized>(
    m: usize,
    letters: usize,
    kmax: i64,
    rng: &mut R,
) -> Result<GroupWord> {
    let mut out = Vec::with_capacity(letters);
    for _ in 0..letters {
        let i = rng.random_range(1..=m);
        let mut j = rng.random_range(1..m);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(1..=kmax);
        if rng.random::<bool>() {
            k = -k;
        }
        out.push(Letter::new(i, j, k));
    }
    GroupWord::new(m, out)
}

fn decompose_words(p: &DecomposeParams, seed: u64, out: &mut RunOutput) -> Result<()> {
    let rows = collect(par_sample(seed, streams::WORDS, p.samples, |n, rng| {
        let kmax = 1 + (n % p.kmax_cycle) as i64;
        let gamma = word_eval(&random_word(p.m, p.letters, kmax, rng)?);
        let rep = decompose(&gamma);
        let exact = word_eval(&rep.word) == gamma;
        Ok((
            rep.input_log_norm,
            rep.word.letter_count(),
            rep.factor_count,
            rep.log_cost,
            exact,
        ))
    }))?;
    let mut table = Table::new(
        "decompose",
        &[
            "log10_norm",
            "letters",
            "factor_count",
            "log_cost",
            "cost_ratio",
            "exact",
        ],
    );
    let edges = &p.band_edges;
    let mut band_max = vec![f64::NEG_INFINITY; edges.len() - 1];
    let mut band_n = vec![0usize; edges.len() - 1];
    let (mut exact_n, mut max_factors) = (0usize, 0usize);
    for &(ln, letters, factors, cost, exact) in &rows {
        let log10 = ln / std::f64::consts::LN_10;
        let ratio = cost / (1.0 + ln);
        exact_n += usize::from(exact);
        max_factors = max_factors.max(factors);
        let last = edges.len() - 2;
        if let Some(b) = (0..=last).find(|&b| {
            log10 >= edges[b] && (log10 < edges[b + 1] || b == last && log10 <= edges[b + 1])
        }) {
            band_max[b] = band_max[b].max(ratio);
            band_n[b] += 1;
        }
        table.push(vec![
            log10.into(),
            letters.into(),
            factors.into(),
            cost.into(),
            ratio.into(),
            exact.into(),
        ]);
    }
    out.tables.push(table);
    out.report
        .metric("exact_reconstructions", exact_n as f64, p.samples);
    out.report
        .metric("max_factor_count", max_factors as f64, p.samples);
    out.report.check(Check::equal(
        "exact_reconstructions",
        exact_n as f64,
        p.samples as f64,
    ));
    let reference = band_max[0];
    for b in 0..band_max.len() {
        let (lo, hi) = (edges[b], edges[b + 1]);
        out.report
            .metric("cost_constant", band_max[b], band_n[b])
            .label("log10_lo", lo)
            .label("log10_hi", hi);
        out.report.check(Check::at_least(
            format!("band_samples[{lo},{hi}]"),
            band_n[b] as f64,
            1.0,
        ));
        let spread = (band_max[b] / reference - 1.0).abs();
        out.report.check(Check::at_most(
            format!("cost_constant_spread[{lo},{hi}]"),
            spread,
            p.c_tol,
        ));
    }
    Ok(())
}

fn uniword(p: &UniwordParams, seed: u64, out: &mut RunOutput) -> Result<()> {
    let top = 1i64 << p.max_log2;
    let mut ks: Vec<i64> = Vec::new();
    for e in 1..=p.max_log2 {
        let base = 1i64 << e;
        ks.extend([base - 1, base, base + 1]);
    }
    let mut rng = atom_rng(seed, streams::WORDS, 0);
    for n in 0..p.random_samples {
        let k = rng.random_range(2..=top);
        ks.push(if n % 2 == 1 { -k } else { k });
    }
    ks.retain(|k| k.abs() >= 2 && k.abs() <= top);
    let rows = collect({
        use rayon::prelude::*;
        ks.par_iter()
            .map(|&k| {
                let w = unipotent_short_word(p.i, p.j, k, p.m)?;
                let exact = word_eval(&w) == elementary(p.m, p.i, p.j, k)?;
                let unit = w.letters().iter().all(|l| l.k.abs() == 1.into());
                Ok((k, w.letter_count(), exact, unit))
            })
            .collect::<Vec<_>>()
    })?;
    let mut table = Table::new(
        "uniword",
        &["k", "letters", "log2_k", "ratio", "exact", "unit_letters"],
    );
    let (mut exact_n, mut unit_n, mut worst) = (0usize, 0usize, 0.0f64);
    let mut fit: Vec<(f64, f64)> = Vec::new();
    for &(k, len, exact, unit) in &rows {
        let l2 = (k.unsigned_abs() as f64).log2();
        let ratio = len as f64 / (l2 * l2);
        exact_n += usize::from(exact);
        unit_n += usize::from(unit);
        worst = worst.max(ratio);
        if k > 0 && k.count_ones() == 1 && l2 >= 4.0 {
            fit.push((l2.ln(), (len as f64).ln()));
        }
        table.push(vec![
            k.into(),
            len.into(),
            l2.into(),
            ratio.into(),
            exact.into(),
            unit.into(),
        ]);
    }
    out.tables.push(table);
    let n = rows.len();
    out.report.metric("exact_words", exact_n as f64, n);
    out.report.metric("max_length_ratio", worst, n);
    out.report
        .check(Check::equal("exact_words", exact_n as f64, n as f64));
    out.report
        .check(Check::equal("unit_letter_words", unit_n as f64, n as f64));
    out.report
        .check(Check::at_most("max_length_ratio", worst, p.constant));
    // log-log slope of length against log₂k over powers of two
    let (mx, my) = (
        fit.iter().map(|v| v.0).sum::<f64>() / fit.len() as f64,
        fit.iter().map(|v| v.1).sum::<f64>() / fit.len() as f64,
    );
    let sxy: f64 = fit.iter().map(|v| (v.0 - mx) * (v.1 - my)).sum();
    let sxx: f64 = fit.iter().map(|v| (v.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    out.report.metric("loglog_slope", slope, fit.len());
    out.report
        .check(Check::at_most("loglog_slope", slope, p.slope_max));
    Ok(())
}

// ---------------------------------------------------------------------------
// sumset

fn sumset(p: &SumsetParams, seed: u64, out: &mut RunOutput) -> Result<()> {
    let c = cover_constants(0.5)?;
    let exact = c.m == 3 && c.n_delta == 24 && c.k_delta == 96 && c.f_delta == LatticeBall::new(24);
    out.report.check(Check::flag("cover_constants_half", exact));

    let mut table = Table::new(
        "sumset",
        &[
            "delta",
            "n",
            "density",
            "covered",
            "k_cover",
            "k_oracle",
            "k_oracle_origin",
            "k_delta",
        ],
    );
    let (mut covered, mut oracle_ok, mut origin_ok, mut total) = (0usize, 0usize, 0usize, 0usize);
    let mut worst_k = 0u64;
    for (a, &delta) in p.deltas.iter().enumerate() {
        let rows = collect(par_sample(
            sub_seed(seed, a as u64),
            streams::SETS,
            p.sets_per_delta,
            |_, rng| {
                let n = rng.random_range(p.n_min..=p.n_max);
                let s = loop {
                    let s = SymmetricSet::random(n, delta + p.density_margin, rng);
                    if s.density() > delta {
                        break s;
                    }
                };
                let cover = verify_cover(&s, delta)?;
                let k = minimal_k_oracle(&s, cover.constants.f_delta)?;
                // Reach from the origin alone; sets inside a proper sublattice never get there.
                let k0 = minimal_k_oracle(&s, LatticeBall::new(0))?;
                Ok((n, s.density(), cover, k, k0))
            },
        ))?;
        for (n, density, cover, k, k0) in rows {
            total += 1;
            covered += usize::from(cover.covered);
            let kd = cover.constants.k_delta;
            oracle_ok += usize::from(k.is_some_and(|k| k <= kd));
            origin_ok += usize::from(k0.is_some_and(|k| k <= kd));
            worst_k = worst_k.max(k.unwrap_or(u64::MAX));
            let opt = |v: Option<u64>| v.map_or(Cell::S(String::new()), Cell::U);
            table.push(vec![
                delta.into(),
                n.into(),
                density.into(),
                cover.covered.into(),
                opt(cover.minimal_k),
                opt(k),
                opt(k0),
                kd.into(),
            ]);
        }
    }
    out.tables.push(table);
    out.report.metric("covered", covered as f64, total);
    out.report
        .metric("oracle_within_k_delta", oracle_ok as f64, total);
    out.report.metric("oracle_max_k", worst_k as f64, total);
    out.report
        .metric("origin_reach_within_k_delta", origin_ok as f64, total);
    out.report
        .check(Check::equal("covered", covered as f64, total as f64));
    out.report.check(Check::equal(
        "oracle_within_k_delta",
        oracle_ok as f64,
        total as f64,
    ));
    Ok(())
}
