//! `ou-verify`: command-line front end for the Ornstein–Uhlenbeck toolkit.
//!
//! Every subcommand that emits a table writes CSV with a header row to stdout.
//! Summary lines, where present, follow the table and start with `#`.

mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ou_core::cauchy::{regularity_ratio, residual, solve_backward, BackwardProblem};
use ou_core::coeffs::CoefficientSystem;
use ou_core::linalg::{spectral_norm, Vector};
use ou_core::measures::{invariance_residual, MeasureFamily};
use ou_core::model::OuModel;
use ou_core::propagator::{apply, parse_test_function, ApplyOptions};
use ou_core::sde::mc_expectation;
use ou_core::spaces::SpaceTimeFunction;
use ou_core::verify::{fit_smoothing_exponent, run_suite, GapMode, SuiteConfig};
use ou_core::{Error, Result};

use args::{parse_family, parse_grid, parse_multi_index, parse_points, parse_range, FamilySpec};

/// Quadrature level used by the norm and residual summaries.
const DEFAULT_LEVEL: usize = 16;

#[derive(Parser)]
#[command(name = "ou-verify", version, about = "Nonautonomous Ornstein-Uhlenbeck toolkit and property suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SystemArgs {
    /// System config (TOML or JSON). Defaults to the scalar benchmark A=-1, B=sqrt 2, f=0.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl SystemArgs {
    fn system(&self) -> Result<CoefficientSystem> {
        match &self.config {
            Some(path) => Ok(SuiteConfig::load(path)?.system),
            None => Ok(SuiteConfig::default().system),
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum Mode {
    Small,
    Large,
}

#[derive(Subcommand)]
enum Command {
    /// Run the property suite. Exit status 0 iff every executed check passes.
    ///
    /// Prints the text report. CSV columns of report.csv: check,value,tolerance,pass,error.
    Verify {
        /// Suite config: system fields plus an optional [suite] table.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for report.csv and report.txt (overrides the config).
        #[arg(long)]
        output: Option<PathBuf>,
        /// Worker threads (overrides the config).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Apply the backward propagator P(s,t) to a test function.
    ///
    /// CSV columns: x0..x{n-1},re,im,error_estimate.
    Propagate {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, allow_hyphen_values = true)]
        s: f64,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
        /// Test function: poly:<expr>, exp:c,h.., cos:h.., sin:h.., const:c or tanh.
        #[arg(long)]
        phi: String,
        /// Points: lo:hi:count (one dimension) or `;`-separated comma vectors.
        #[arg(long, allow_hyphen_values = true)]
        x_grid: String,
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: usize,
    },
    /// Tabulate an evolution system of measures.
    ///
    /// CSV columns: t,mean0..mean{n-1},cov_ij (row-major). Trailing `#` lines report
    /// Fourier invariance residuals between consecutive times.
    Measures {
        #[command(flatten)]
        system: SystemArgs,
        /// Times lo:hi:count.
        #[arg(long, allow_hyphen_values = true)]
        t_grid: String,
        /// canonical, point:x0,..  or gauss:m0,..,q (isotropic covariance q).
        #[arg(long, default_value = "canonical", allow_hyphen_values = true)]
        family: String,
    },
    /// Solve the backward Cauchy problem on [t1, t2].
    ///
    /// CSV columns: s,mean_re,mean_im,l2_norm (moments of u(s) under the canonical
    /// measure). Trailing `#` lines give the PDE residual and the regularity ratio.
    Solve {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, allow_hyphen_values = true)]
        t1: f64,
        #[arg(long, allow_hyphen_values = true)]
        t2: f64,
        /// Terminal datum (same grammar as `propagate --phi`).
        #[arg(long)]
        phi: String,
        /// Time-independent forcing (same grammar).
        #[arg(long, default_value = "const:0")]
        h: String,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: usize,
    },
    /// Monte Carlo estimate of E phi(X_t) by Euler-Maruyama.
    ///
    /// CSV columns: mean_re,mean_im,stderr,dt,paths.
    Mc {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long, allow_hyphen_values = true)]
        s: f64,
        #[arg(long, allow_hyphen_values = true)]
        t: f64,
        /// Start point, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long)]
        phi: String,
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Norms of the evolution operator over all pairs s <= t of a time grid.
    ///
    /// CSV columns: s,t,norm.
    DumpEvolution {
        #[command(flatten)]
        system: SystemArgs,
        /// Times lo:hi:count.
        #[arg(long, allow_hyphen_values = true)]
        t_grid: String,
    },
    /// Limit moments of the canonical measures.
    ///
    /// CSV columns: t,g0..g{n-1},q_ij (row-major),horizon.
    DumpMoments {
        #[command(flatten)]
        system: SystemArgs,
        /// Times lo:hi:count.
        #[arg(long, allow_hyphen_values = true)]
        t_grid: String,
    },
    /// Fit the smoothing exponent of a spatial derivative of the propagator.
    ///
    /// CSV columns: gap,norm. A trailing `#` line gives slope, intercept and r2.
    Estimate {
        #[command(flatten)]
        system: SystemArgs,
        /// Derivative order: one number (first axis) or comma-separated per axis.
        #[arg(long)]
        alpha: String,
        /// Gap range lo:hi.
        #[arg(long)]
        range: String,
        #[arg(long, default_value_t = 8)]
        points: usize,
        #[arg(long, value_enum, default_value_t = Mode::Small)]
        mode: Mode,
    },
}

fn model_over(sys: CoefficientSystem, times: &[f64]) -> Result<OuModel> {
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    OuModel::with_defaults(sys, (lo, hi))
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",")
}

fn names(prefix: &str, n: usize) -> String {
    (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",")
}

fn matrix_names(prefix: &str, n: usize) -> String {
    (0..n * n).map(|k| format!("{prefix}_{}{}", k / n, k % n)).collect::<Vec<_>>().join(",")
}

fn row_major(m: &ou_core::linalg::Mat) -> Vec<f64> {
    let n = m.nrows();
    (0..n * n).map(|k| m[(k / n, k % n)]).collect()
}

fn verify(config: Option<&Path>, output: Option<PathBuf>, workers: Option<usize>) -> Result<bool> {
    let mut cfg = match config {
        Some(path) => SuiteConfig::load(path)?,
        None => SuiteConfig::default(),
    };
    if output.is_some() {
        cfg.output = output;
    }
    if let Some(w) = workers {
        cfg.workers = w.max(1);
    }
    let report = run_suite(&cfg)?;
    if let Some(dir) = &cfg.output {
        report.write(dir)?;
    }
    print!("{}", report.to_text());
    Ok(report.all_passed())
}

fn propagate(sys: CoefficientSystem, s: f64, t: f64, phi: &str, grid: &str, level: usize) -> Result<()> {
    let n = sys.dim();
    let phi = parse_test_function(phi, n)?;
    let points = parse_points(grid, n)?;
    let model = model_over(sys, &[s, t])?;
    let field = apply(model.cache(), s, t, &phi, &ApplyOptions { level })?;
    println!("{},re,im,error_estimate", names("x", n));
    for x in &points {
        let v = field.eval(x);
        println!("{},{:e},{:e},{:e}", join(x.iter().copied()), v.re, v.im, field.error_estimate());
    }
    Ok(())
}

fn measures(sys: CoefficientSystem, grid: &str, family: &str) -> Result<()> {
    let n = sys.dim();
    let times = parse_grid(grid)?;
    let model = model_over(sys, &times)?;
    let fam = match parse_family(family, n)? {
        FamilySpec::Canonical => MeasureFamily::canonical(&model),
        FamilySpec::Base(base) => MeasureFamily::from_base(&model, times[0], base)?,
    };
    println!("t,{},{}", names("mean", n), matrix_names("cov", n));
    for &t in &times {
        let mu = fam.at(t)?;
        println!("{t:e},{},{}", join(mu.mean().iter().copied()), join(row_major(&mu.covariance())));
    }
    let probes: Vec<Vector> = [0.5, 1.0, 2.0]
        .iter()
        .flat_map(|&k| (0..n).map(move |j| Vector::from_fn(n, |i, _| if i == j { k } else { 0.0 })))
        .collect();
    for pair in times.windows(2) {
        let r = invariance_residual(&fam, pair[0], pair[1], &probes)?;
        println!("# invariance residual [{:e}, {:e}] = {r:e}", pair[0], pair[1]);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn solve(sys: CoefficientSystem, t1: f64, t2: f64, phi: &str, h: &str, nodes: Option<usize>, level: usize) -> Result<()> {
    let n = sys.dim();
    let phi = parse_test_function(phi, n)?;
    let forcing = parse_test_function(h, n)?;
    let model = model_over(sys, &[t1, t2])?;
    let probe = BackwardProblem::new(
        (t1, t2),
        phi.clone(),
        SpaceTimeFunction::from_fn(vec![t1, t2], None, |_| Ok(forcing.clone()))?,
        nodes,
    )?;
    let h = SpaceTimeFunction::from_fn(probe.grid(), None, |_| Ok(forcing.clone()))?;
    let prob = BackwardProblem::new((t1, t2), phi, h, Some(probe.nodes))?;
    let u = solve_backward(model.cache(), &prob, &ApplyOptions { level })?;
    println!("s,mean_re,mean_im,l2_norm");
    for (i, &s) in u.grid().iter().enumerate() {
        let nu = model.canonical(s)?;
        let mean = nu.expectation(|x| u.value(i, x), level)?;
        let norm = nu.expectation_real(|x| u.value(i, x).norm_sqr(), level)?.sqrt();
        println!("{s:e},{:e},{:e},{norm:e}", mean.re, mean.im);
    }
    println!("# residual = {:e}", residual(&u, &prob, &model, level)?);
    match regularity_ratio(&u, &prob, &model, level) {
        Ok(r) => println!("# regularity ratio = {r:e}"),
        Err(Error::UndefinedRatio(d)) => println!("# regularity ratio undefined (data norm {d:e})"),
        Err(e) => return Err(e),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn monte_carlo(sys: CoefficientSystem, s: f64, t: f64, x: &str, phi: &str, paths: usize, dt: f64, seed: u64) -> Result<()> {
    let n = sys.dim();
    let phi = parse_test_function(phi, n)?;
    let x = args::parse_vector(x, n)?;
    let est = mc_expectation(&sys, s, t, &x, &phi, paths, dt, seed)?;
    println!("mean_re,mean_im,stderr,dt,paths");
    println!("{:e},{:e},{:e},{:e},{}", est.mean.re, est.mean.im, est.stderr, est.dt, est.paths);
    Ok(())
}

fn dump_evolution(sys: CoefficientSystem, grid: &str) -> Result<()> {
    let times = parse_grid(grid)?;
    let model = model_over(sys, &times)?;
    println!("s,t,norm");
    for (i, &s) in times.iter().enumerate() {
        for &t in &times[i..] {
            println!("{s:e},{t:e},{:e}", spectral_norm(&model.evolution_matrix(s, t)?));
        }
    }
    Ok(())
}

fn dump_moments(sys: CoefficientSystem, grid: &str) -> Result<()> {
    let n = sys.dim();
    let times = parse_grid(grid)?;
    let model = model_over(sys, &times)?;
    println!("t,{},{},horizon", names("g", n), matrix_names("q", n));
    for &t in &times {
        let m = model.limit_moments(t)?;
        let horizon = m.horizon.map_or_else(|| "inf".to_string(), |h| format!("{h:e}"));
        println!("{t:e},{},{},{horizon}", join(m.g.iter().copied()), join(row_major(&m.q)));
    }
    Ok(())
}

fn estimate(sys: CoefficientSystem, alpha: &str, range: &str, points: usize, mode: Mode) -> Result<()> {
    let alpha = parse_multi_index(alpha, sys.dim())?;
    let (lo, hi) = parse_range(range)?;
    let model = OuModel::with_defaults(sys, (0.0, hi))?;
    let mode = match mode {
        Mode::Small => GapMode::Small,
        Mode::Large => GapMode::Large,
    };
    let fit = fit_smoothing_exponent(&model, &alpha, (lo, hi), points, mode)?;
    println!("gap,norm");
    for (gap, norm) in &fit.rows {
        println!("{gap:e},{norm:e}");
    }
    println!("# slope = {:e}, intercept = {:e}, r2 = {:.6}", fit.slope, fit.intercept, fit.r2);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Verify { config, output, workers } => return verify(config.as_deref(), output, workers),
        Command::Propagate { system, s, t, phi, x_grid, level } => propagate(system.system()?, s, t, &phi, &x_grid, level)?,
        Command::Measures { system, t_grid, family } => measures(system.system()?, &t_grid, &family)?,
        Command::Solve { system, t1, t2, phi, h, nodes, level } => solve(system.system()?, t1, t2, &phi, &h, nodes, level)?,
        Command::Mc { system, s, t, x, phi, paths, dt, seed } => {
            monte_carlo(system.system()?, s, t, &x, &phi, paths, dt, seed)?
        }
        Command::DumpEvolution { system, t_grid } => dump_evolution(system.system()?, &t_grid)?,
        Command::DumpMoments { system, t_grid } => dump_moments(system.system()?, &t_grid)?,
        Command::Estimate { system, alpha, range, points, mode } => {
            estimate(system.system()?, &alpha, &range, points, mode)?
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
