use std::io::Write;
use std::path::{Path, PathBuf};

use saa_lab_core::bounds::{
    discrete_integral_bound, partial_sum_bounds, scan_lambdas, BoundReport, KLambda,
};
use saa_lab_core::estimators::{
    envelope_constant, fit_rate, run_monte_carlo, ErrorKind, ErrorSeries, MonteCarlo, RateFit,
};
use saa_lab_core::problems::{check_coercivity, check_growth, check_monotonicity};
use saa_lab_core::{
    BuiltinProblem, Error as CoreError, Problem, RngStream, Schedule, TimeGrid, Vector,
};

use crate::config;
use crate::csv;
use crate::error::{CliError, CliResult};
use crate::svg;

/// Tolerance on reported margins before a violation is declared.
pub const VIOLATION_TOLERANCE: f64 = 1e-10;

fn emit(out: &mut dyn Write, line: std::fmt::Arguments) -> CliResult<()> {
    out.write_fmt(line)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| CliError::io("<stdout>", e))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        emit($out, format_args!($($arg)*))?
    };
}

fn classify(err: CoreError) -> CliError {
    match err {
        CoreError::SimulationFailed { .. }
        | CoreError::Singularity { .. }
        | CoreError::NonFinite(_) => CliError::Simulation(err),
        CoreError::InvalidParameter { name, reason } => CliError::config(name, reason),
        other => CliError::Core(other),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub csv_path: PathBuf,
    pub series: Vec<ErrorSeries>,
    pub fits: Vec<Option<RateFit>>,
}

/// Envelope exponent of each series: `2 eps - 1` for the weak error,
/// `eps - 1` (the order of `gamma_n`) for the strong one.
pub fn envelope_exponent(kind: ErrorKind, schedule: &Schedule) -> f64 {
    match kind {
        ErrorKind::Weak => 2.0 * schedule.epsilon() - 1.0,
        ErrorKind::Strong => schedule.epsilon() - 1.0,
    }
}

pub fn cmd_run(
    config_path: &Path,
    workers: usize,
    svg_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<RunOutcome> {
    let cfg = config::load(config_path)?;
    let exp = cfg.resolve()?;
    let mc = MonteCarlo::new(cfg.samples, cfg.seed).with_workers(workers);
    let pair = run_monte_carlo(
        &exp.problem,
        &exp.schedule,
        &cfg.initial,
        exp.psi.as_ref(),
        &cfg.checkpoints,
        &mc,
    )
    .map_err(classify)?;

    let mut series = Vec::new();
    if let Some(weak) = pair.weak {
        series.push(weak);
    }
    if cfg.kinds.strong() {
        series.push(pair.strong);
    }
    let refs: Vec<&ErrorSeries> = series.iter().collect();
    write_file(&cfg.output_path, &csv::render(&refs, &exp.schedule))?;
    say!(
        out,
        "wrote {} ({} rows)",
        cfg.output_path.display(),
        series.iter().map(|s| s.len()).sum::<usize>()
    );

    let window = (1, *cfg.checkpoints.last().expect("validated non-empty"));
    let mut fits = Vec::new();
    for s in &series {
        let kind = s.kind.as_str();
        let exponent = envelope_exponent(s.kind, &exp.schedule);
        say!(
            out,
            "{kind}: envelope_constant={} (max |estimate| n^({exponent}) over usable checkpoints; empirical, not a proven constant)",
            csv::format_real(envelope_constant(s, exponent))
        );
        match fit_rate(s, window) {
            Ok(f) => {
                say!(
                    out,
                    "{kind}: slope={} intercept={} r_squared={} usable_points={}",
                    f.slope,
                    f.intercept,
                    f.r_squared,
                    f.usable_points
                );
                fits.push(Some(f));
            }
            Err(e) => {
                say!(out, "{kind}: rate fit unavailable ({e})");
                fits.push(None);
            }
        }
    }
    if let Some(path) = svg_path {
        let pairs: Vec<_> = series
            .iter()
            .zip(&fits)
            .map(|(s, f)| (s, f.as_ref()))
            .collect();
        write_file(path, &svg::render(&pairs))?;
        say!(out, "wrote {}", path.display());
    }
    Ok(RunOutcome {
        csv_path: cfg.output_path,
        series,
        fits,
    })
}

pub fn cmd_fit(
    csv_path: &Path,
    window: (usize, usize),
    kind: Option<ErrorKind>,
    out: &mut dyn Write,
) -> CliResult<RateFit> {
    let text = std::fs::read_to_string(csv_path).map_err(|e| CliError::io(csv_path, e))?;
    let all = csv::parse(&text)?;
    let series = match kind {
        Some(k) => all.iter().find(|s| s.kind == k).ok_or_else(|| {
            CliError::Schema(format!(
                "no `{}` rows in {}",
                k.as_str(),
                csv_path.display()
            ))
        })?,
        None if all.len() == 1 => &all[0],
        None => all
            .iter()
            .find(|s| s.kind == ErrorKind::Weak)
            .unwrap_or(&all[0]),
    };
    let fit = fit_rate(series, window).map_err(|e| match e {
        CoreError::InsufficientData { usable, filtered } => CliError::InsufficientData(format!(
            "no usable checkpoints: {usable} of the window pass the signal filter (need 3); filtered out {filtered:?}"
        )),
        other => CliError::Core(other),
    })?;
    say!(out, "slope={}", fit.slope);
    say!(out, "intercept={}", fit.intercept);
    say!(out, "r_squared={}", fit.r_squared);
    say!(out, "usable_points={}", fit.usable_points);
    Ok(fit)
}

#[derive(Debug, Clone)]
pub struct BoundsArgs {
    pub epsilon: f64,
    pub eta: f64,
    pub l_const: f64,
    pub lambdas: Vec<f64>,
    pub n_max: u64,
}

#[derive(Debug, Clone)]
pub struct BoundsOutcome {
    pub k: Vec<Option<KLambda>>,
    pub reports: Vec<BoundReport>,
}

fn print_report(out: &mut dyn Write, r: &BoundReport) -> CliResult<()> {
    let params: Vec<String> = r
        .parameters
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    say!(
        out,
        "{:<18} lhs={:<24} rhs={:<24} margin={:<24} [{}]{}",
        r.name,
        csv::format_real(r.lhs),
        csv::format_real(r.rhs),
        csv::format_real(r.margin),
        params.join(" "),
        if r.holds(VIOLATION_TOLERANCE) {
            ""
        } else {
            "  VIOLATED"
        }
    );
    Ok(())
}

pub fn cmd_bounds(args: &BoundsArgs, out: &mut dyn Write) -> CliResult<BoundsOutcome> {
    let schedule = Schedule::single_sample(args.epsilon, args.eta).map_err(classify)?;
    if !(args.l_const > 0.0 && args.l_const.is_finite()) {
        return Err(CliError::config(
            "L",
            format!("must be positive, got {}", args.l_const),
        ));
    }
    if args.lambdas.is_empty() {
        return Err(CliError::config("lambda", "at least one value is required"));
    }
    let (results, best) = scan_lambdas(
        &args.lambdas,
        args.epsilon,
        args.eta,
        args.l_const,
        args.n_max,
    );
    let mut k = Vec::new();
    let mut unbracketed = Vec::new();
    for (lambda, r) in args.lambdas.iter().zip(results) {
        match r {
            Ok(kl) => {
                say!(
                    out,
                    "K(lambda={lambda}) = {} at n={} tail_limit={} n_max={}",
                    csv::format_real(kl.sup),
                    kl.argmax,
                    csv::format_real(kl.tail_limit),
                    kl.n_max
                );
                k.push(Some(kl));
            }
            Err(CoreError::NotBracketed { .. }) => {
                say!(
                    out,
                    "K(lambda={lambda}) not bracketed by n_max={}; rerun with a larger --n-max",
                    args.n_max
                );
                unbracketed.push(*lambda);
                k.push(None);
            }
            Err(e) => return Err(classify(e)),
        }
    }
    if let Some(b) = best {
        say!(
            out,
            "min K = {} at lambda={}",
            csv::format_real(b.sup),
            b.params.lambda
        );
    }

    let eps = args.epsilon;
    let grid = schedule.grid(60);
    let unit = TimeGrid::new(vec![0.0, 1.0]).map_err(classify)?;
    let mut reports = Vec::new();
    for (nu, l) in [(0.0, 5), (0.75, 1), (1.0 - eps, 1000)] {
        let b = partial_sum_bounds(nu, l).map_err(classify)?;
        reports.extend(b.report(nu, l));
    }
    reports.push(discrete_integral_bound(1.0, &unit, 2).map_err(classify)?);
    for kk in [5, 50] {
        reports.push(discrete_integral_bound(args.l_const, &grid, kk).map_err(classify)?);
    }
    if let Some(b) = best {
        reports.push(BoundReport {
            name: "K_vs_tail",
            lhs: b.tail_limit,
            rhs: b.sup,
            margin: b.sup - b.tail_limit,
            parameters: vec![("lambda", b.params.lambda), ("n_max", b.n_max as f64)],
        });
    }
    for r in &reports {
        print_report(out, r)?;
    }
    let violated: Vec<&str> = reports
        .iter()
        .filter(|r| !r.holds(VIOLATION_TOLERANCE))
        .map(|r| r.name)
        .collect();
    if !violated.is_empty() {
        return Err(CliError::Violation(format!(
            "bound inequalities violated: {}",
            violated.join(", ")
        )));
    }
    if !unbracketed.is_empty() {
        return Err(CliError::InsufficientData(format!(
            "K(lambda) not bracketed for lambda in {unbracketed:?}; increase --n-max"
        )));
    }
    Ok(BoundsOutcome { k, reports })
}

#[derive(Debug, Clone)]
pub struct CheckArgs {
    pub problem: String,
    pub samples: usize,
    pub seed: u64,
    /// Replaces both dissipativity constants when set.
    pub l_override: Option<f64>,
    pub mu: Option<Vector>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct CheckOutcome {
    pub monotonicity: f64,
    pub coercivity: f64,
    pub growth_margin: f64,
}

const GROWTH_DRAWS: usize = 1000;

pub fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> CliResult<CheckOutcome> {
    let problem =
        BuiltinProblem::from_id(&args.problem, args.mu.clone(), args.sigma).map_err(classify)?;
    if args.samples == 0 {
        return Err(CliError::config("samples", "must be at least 1"));
    }
    let l_mon = args.l_override.unwrap_or(problem.monotonicity_constant());
    let l_coe = args.l_override.unwrap_or(problem.coercivity_constant());
    let c = problem.growth_constant();
    let mut rng = RngStream::new(args.seed, 0);
    let monotonicity =
        check_monotonicity(&problem, l_mon, args.samples, &mut rng).map_err(classify)?;
    let coercivity = check_coercivity(&problem, l_coe, args.samples, &mut rng).map_err(classify)?;
    let growth = check_growth(&problem, args.samples, GROWTH_DRAWS, &mut rng).map_err(classify)?;
    let outcome = CheckOutcome {
        monotonicity,
        coercivity,
        growth_margin: c - growth,
    };
    let verdict = |m: f64| {
        if m >= -VIOLATION_TOLERANCE {
            "PASS"
        } else {
            "FAIL"
        }
    };
    say!(
        out,
        "problem={} samples={} seed={}",
        problem.id(),
        args.samples,
        args.seed
    );
    say!(
        out,
        "monotonicity L={l_mon} worst_margin={monotonicity:e} {}",
        verdict(monotonicity)
    );
    say!(
        out,
        "coercivity L={l_coe} worst_margin={coercivity:e} {}",
        verdict(coercivity)
    );
    say!(
        out,
        "growth c={c} worst_ratio={growth} margin={:e} {}",
        outcome.growth_margin,
        verdict(outcome.growth_margin)
    );
    let failed: Vec<&str> = [
        ("monotonicity", monotonicity),
        ("coercivity", coercivity),
        ("growth", outcome.growth_margin),
    ]
    .into_iter()
    .filter(|(_, m)| *m < -VIOLATION_TOLERANCE)
    .map(|(name, _)| name)
    .collect();
    if !failed.is_empty() {
        return Err(CliError::Violation(format!(
            "condition check failed: {}",
            failed.join(", ")
        )));
    }
    Ok(outcome)
}
