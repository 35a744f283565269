use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cuspflow::expcli::{self, Experiment, ExperimentConfig};
use cuspflow::{Error, Result};

macro_rules! csv_help {
    ($body:literal) => {
        concat!(
            "CSV outputs (each row starts with experiment, seed, sample):",
            $body
        )
    };
}

#[derive(Parser)]
#[command(
    name = "cuspflow",
    version,
    about = "Reproducible experiments on lattices, the modular surface and SL(m,Z)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lattice systoles against a brute-force oracle; norm/distance inequalities.
    #[command(after_help = csv_help!("
  systole.csv           enumeration, brute_force, box_half_width, agree
  normdistance.csv      log_norm, distance, gap
  norm_comparison.csv   m, log_norm, distance, lower_ok, upper_ok
  unipotent_growth.csv  k, distance, bound"))]
    Systole(RunArgs),
    /// Horocycle equidistribution and deck classes of geodesic cusp excursions.
    #[command(after_help = csv_help!("
  horocycle_ks.csv  start_x, start_y, ks
  excursions.csv    segment, start_time, end_time, max_depth, jumps, parabolic, monotone
  orbit.csv         time, depth, deck_i, deck_j, deck_k, flags (one row per letter of each deck increment)"))]
    Geodesic(RunArgs),
    /// Non-divergence fractions of a long horocycle over an eps grid.
    #[command(after_help = csv_help!("
  km.csv  start, eps, fraction, bound, holds"))]
    Km(RunArgs),
    /// Monte-Carlo Haar cusp integrals against the closed form.
    #[command(after_help = csv_help!("
  haar_oracle.csv           eta, moment, finite
  exp_mass.csv              size, eta, value, stderr, oracle
  divergent_replicates.csv  replicate, size, log_mean"))]
    Cuspmass(RunArgs),
    /// Følner averages: family cusp masses and box defects.
    #[command(after_help = csv_help!("
  folner_mass.csv    t_n, eta, exp_mass, exp_stderr, sys_mass, sys_stderr
  folner_defect.csv  t_n, defect, stderr, bound"))]
    Folner(RunArgs),
    /// Depth tail profile over the N' cell.
    #[command(after_help = csv_help!("
  tc_profile.csv  c, fraction, stderr"))]
    Tc(RunArgs),
    /// Top Lyapunov exponent of the return cocycle along the geodesic flow.
    #[command(after_help = csv_help!("
  lyap_checkpoints.csv  steps, mean_log_norm_rate
  subadditivity.csv     n, m, mean, stderr"))]
    Lyap(RunArgs),
    /// Oseledets functionals of a diagonal test cocycle.
    #[command(after_help = csv_help!("
  oseledets.csv  index, lambda_a, lambda_b, lambda_ab, expected_a, expected_b, residual"))]
    Oseledets(RunArgs),
    /// Elementary-matrix decompositions of random elements of SL(m,Z).
    #[command(after_help = csv_help!("
  decompose.csv  log10_norm, letters, factor_count, log_cost, cost_ratio, exact"))]
    Decompose(RunArgs),
    /// Short words for large unipotent powers.
    #[command(after_help = csv_help!("
  uniword.csv  k, letters, log2_k, ratio, exact, unit_letters"))]
    Uniword(RunArgs),
    /// Exhaustive sumset covers of random symmetric sets.
    #[command(after_help = csv_help!("
  sumset.csv  delta, n, density, covered, k_cover, k_oracle, k_oracle_origin, k_delta"))]
    Sumset(RunArgs),
    /// Merge finished runs and print the acceptance table.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; defaults reproduce the acceptance run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores). CUSPFLOW_THREADS takes precedence.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory [default: runs/<id>].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Refuse configs whose estimated work exceeds this many units.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// summary.json files or run directories.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Also write the table to <out-dir>/report.txt.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn env_threads() -> Result<Option<usize>> {
    match std::env::var("CUSPFLOW_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Error::Config {
            field: "CUSPFLOW_THREADS".into(),
            message: format!("`{v}` is not a thread count"),
        }),
        Err(_) => Ok(None),
    }
}

fn run_experiment(experiment: Experiment, args: RunArgs) -> Result<bool> {
    let mut cfg = match &args.config {
        Some(path) => {
            ExperimentConfig::from_toml(&std::fs::read_to_string(path)?, Some(experiment))?
        }
        None => ExperimentConfig::default_for(experiment),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    if let Some(t) = env_threads()? {
        cfg.threads = t;
    }
    if args.budget.is_some() {
        cfg.budget = args.budget;
    }
    let out = expcli::run(&cfg)?;
    let dir = args
        .out_dir
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.id));
    out.write(&dir)?;
    let merged = expcli::merge(vec![out.report.clone()]);
    print!("{}", merged.render());
    eprintln!(
        "wrote {} ({:.2} s)",
        dir.display(),
        out.report.timing.wall_clock_s
    );
    Ok(out.report.passed)
}

fn report(args: ReportArgs) -> Result<bool> {
    let merged = expcli::load_reports(&args.paths)?;
    let text = merged.render();
    print!("{text}");
    if let Some(dir) = args.out_dir {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("report.txt"), &text)?;
    }
    Ok(merged.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Systole(a) => run_experiment(Experiment::Systole, a),
        Command::Geodesic(a) => run_experiment(Experiment::Geodesic, a),
        Command::Km(a) => run_experiment(Experiment::Km, a),
        Command::Cuspmass(a) => run_experiment(Experiment::Cuspmass, a),
        Command::Folner(a) => run_experiment(Experiment::Folner, a),
        Command::Tc(a) => run_experiment(Experiment::Tc, a),
        Command::Lyap(a) => run_experiment(Experiment::Lyap, a),
        Command::Oseledets(a) => run_experiment(Experiment::Oseledets, a),
        Command::Decompose(a) => run_experiment(Experiment::Decompose, a),
        Command::Uniword(a) => run_experiment(Experiment::Uniword, a),
        Command::Sumset(a) => run_experiment(Experiment::Sumset, a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(1)
        }
    }
}
