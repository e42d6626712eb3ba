//! Monte Carlo weak- and strong-error series, closed-form oracles for
//! affine problems, and log-log rate fitting.
//!
//! Trajectories are grouped into fixed-size chunks. Each chunk is simulated
//! by one worker and reduced into per-checkpoint [`Moments`]; chunks are
//! then merged in chunk-index order. Chunk boundaries do not depend on the
//! worker count, so the resulting series are bit-identical for any
//! `workers`.

use rayon::prelude::*;

use crate::engine::{validate_checkpoints, Stepper};
use crate::error::{Error, Result};
use crate::numeric::Moments;
use crate::problems::Problem;
use crate::rng::RngStream;
use crate::schedule::Schedule;
use crate::test_function::TestFunction;
use crate::vector::{SquareMatrix, Vector};

/// Trajectories per reduction chunk.
pub const CHUNK_SIZE: usize = 256;

/// Estimates must exceed this multiple of their half-width to enter a fit.
pub const SIGNAL_TO_NOISE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// `E[psi(Theta_n)] - psi(Xi)`.
    Weak,
    /// `E[|Theta_n - Xi|^2]`.
    Strong,
}

impl ErrorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorKind::Weak => "weak",
            ErrorKind::Strong => "strong",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "weak" => Some(ErrorKind::Weak),
            "strong" => Some(ErrorKind::Strong),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub kind: ErrorKind,
    pub checkpoints: Vec<usize>,
    /// Signed estimates.
    pub estimates: Vec<f64>,
    /// 95% normal-approximation half-widths.
    pub half_widths: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
}

impl ErrorSeries {
    pub fn new(
        kind: ErrorKind,
        checkpoints: Vec<usize>,
        estimates: Vec<f64>,
        half_widths: Vec<f64>,
        samples: u64,
        seed: u64,
    ) -> Result<Self> {
        validate_checkpoints(&checkpoints)?;
        if estimates.len() != checkpoints.len() || half_widths.len() != checkpoints.len() {
            return Err(Error::DimensionMismatch {
                expected: checkpoints.len(),
                found: estimates.len().min(half_widths.len()),
            });
        }
        if estimates.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("series estimates".into()));
        }
        if half_widths.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(Error::InvalidParameter {
                name: "half_widths",
                reason: "must be finite and non-negative".into(),
            });
        }
        Ok(Self {
            kind,
            checkpoints,
            estimates,
            half_widths,
            samples,
            seed,
        })
    }

    pub fn abs_estimates(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.abs()).collect()
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    /// Indices whose checkpoint lies in `[n_min, n_max]`, is positive, and
    /// whose estimate dominates its noise.
    pub fn usable_indices(&self, window: (usize, usize)) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| {
                let n = self.checkpoints[i];
                let e = self.estimates[i].abs();
                n >= 1.max(window.0)
                    && n <= window.1
                    && e > 0.0
                    && e > SIGNAL_TO_NOISE * self.half_widths[i]
            })
            .collect()
    }
}

/// Sample budget and parallelism of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonteCarlo {
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
}

impl MonteCarlo {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }
}

/// Weak and strong series estimated from the same trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPair {
    pub weak: Option<ErrorSeries>,
    pub strong: ErrorSeries,
}

struct ChunkStats {
    weak: Vec<Moments>,
    strong: Vec<Moments>,
}

/// Simulates `mc.samples` trajectories once and reduces both the weak
/// error of `psi` (when given) and the squared distance to the
/// equilibrium at every checkpoint.
pub fn run_monte_carlo<P: Problem + ?Sized>(
    problem: &P,
    schedule: &Schedule,
    initial: &Vector,
    psi: Option<&TestFunction>,
    checkpoints: &[usize],
    mc: &MonteCarlo,
) -> Result<SeriesPair> {
    validate_checkpoints(checkpoints)?;
    let d = problem.dimension();
    initial.ensure_dim(d)?;
    if let Some(psi) = psi {
        if psi.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: psi.dim(),
            });
        }
    }
    if mc.samples < 2 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: format!("at least 2 trajectories are required, got {}", mc.samples),
        });
    }

    let last = *checkpoints.last().expect("validated non-empty");
    let step_sizes = schedule.step_sizes(last);
    let equilibrium = problem.equilibrium().as_slice();
    let psi_eq = psi.map(|f| f.value(equilibrium));
    let n_chunks = mc.samples.div_ceil(CHUNK_SIZE);

    let simulate_chunk = |chunk: usize| -> Result<ChunkStats> {
        let mut stats = ChunkStats {
            weak: vec![Moments::new(); if psi.is_some() { checkpoints.len() } else { 0 }],
            strong: vec![Moments::new(); checkpoints.len()],
        };
        let mut stepper = Stepper::new(problem);
        let lo = chunk * CHUNK_SIZE;
        let hi = (lo + CHUNK_SIZE).min(mc.samples);
        for index in lo..hi {
            let index = index as u64;
            let mut rng = RngStream::new(mc.seed, index);
            stepper
                .run(
                    schedule,
                    &step_sizes,
                    initial.as_slice(),
                    checkpoints,
                    &mut rng,
                    |k, x| {
                        if let (Some(f), Some(eq)) = (psi, psi_eq) {
                            stats.weak[k].push(f.value(x) - eq);
                        }
                        let dist: f64 = x
                            .iter()
                            .zip(equilibrium)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        stats.strong[k].push(dist);
                    },
                )
                .map_err(|step| Error::SimulationFailed {
                    seed: mc.seed,
                    trajectory_index: index,
                    step,
                })?;
        }
        Ok(stats)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(mc.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter {
            name: "workers",
            reason: e.to_string(),
        })?;
    let chunks: Vec<Result<ChunkStats>> =
        pool.install(|| (0..n_chunks).into_par_iter().map(simulate_chunk).collect());

    let mut weak = vec![Moments::new(); if psi.is_some() { checkpoints.len() } else { 0 }];
    let mut strong = vec![Moments::new(); checkpoints.len()];
    for chunk in chunks {
        let chunk = chunk?;
        for (acc, part) in weak.iter_mut().zip(&chunk.weak) {
            acc.merge(part);
        }
        for (acc, part) in strong.iter_mut().zip(&chunk.strong) {
            acc.merge(part);
        }
    }

    let to_series = |kind, moments: &[Moments]| {
        ErrorSeries::new(
            kind,
            checkpoints.to_vec(),
            moments.iter().map(Moments::mean).collect(),
            moments.iter().map(Moments::half_width_95).collect(),
            mc.samples as u64,
            mc.seed,
        )
    };
    Ok(SeriesPair {
        weak: if psi.is_some() {
            Some(to_series(ErrorKind::Weak, &weak)?)
        } else {
            None
        },
        strong: to_series(ErrorKind::Strong, &strong)?,
    })
}

/// Signed weak error `E[psi(Theta_n)] - psi(Xi)` per checkpoint.
pub fn weak_error_mc<P: Problem + ?Sized>(
    problem: &P,
    schedule: &Schedule,
    initial: &Vector,
    psi: &TestFunction,
    checkpoints: &[usize],
    mc: &MonteCarlo,
) -> Result<ErrorSeries> {
    let pair = run_monte_carlo(problem, schedule, initial, Some(psi), checkpoints, mc)?;
    Ok(pair.weak.expect("psi supplied"))
}

/// Mean squared distance `E|Theta_n - Xi|^2` per checkpoint.
pub fn strong_error_mc<P: Problem + ?Sized>(
    problem: &P,
    schedule: &Schedule,
    initial: &Vector,
    checkpoints: &[usize],
    mc: &MonteCarlo,
) -> Result<ErrorSeries> {
    Ok(run_monte_carlo(problem, schedule, initial, None, checkpoints, mc)?.strong)
}

/// Exact mean of a linear recursion driven by mean matrix `m`:
/// `prod_{k=1}^n (I + gamma_k M) initial`, factors applied in increasing `k`.
///
/// For a problem with `g(x) = M (x - Xi)` pass `initial - Xi`; the result
/// is then `E[Theta_n] - Xi` (mini-batching does not change the mean).
pub fn mean_recursion_oracle(
    m: &SquareMatrix,
    schedule: &Schedule,
    initial: &Vector,
    n: usize,
) -> Result<Vector> {
    initial.ensure_dim(m.dim())?;
    let mut x = initial.as_slice().to_vec();
    let mut mx = vec![0.0; x.len()];
    for k in 1..=n {
        let gamma = schedule.step_size(k);
        m.apply_into(&x, &mut mx);
        for (xi, d) in x.iter_mut().zip(&mx) {
            *xi += gamma * d;
        }
    }
    Vector::new(x)
}

/// Exact `E|Theta_n - mu|^2` for `G(x, Z) = (mu - x) + noise` with mean-zero
/// noise of total variance `noise_variance`:
/// `v_n = (1 - gamma_n)^2 v_{n-1} + gamma_n^2 noise_variance / M_{n-1}`.
pub fn strong_recursion_oracle(
    schedule: &Schedule,
    initial_sq_distance: f64,
    noise_variance: f64,
    n: usize,
) -> f64 {
    let mut v = initial_sq_distance;
    for k in 1..=n {
        let gamma = schedule.step_size(k);
        let batch = schedule.batch_size(k - 1) as f64;
        v = (1.0 - gamma).powi(2) * v + gamma * gamma * noise_variance / batch;
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (usize, usize),
    pub usable_points: usize,
}

/// Least-squares fit of `log|estimate|` against `log n` over the usable
/// checkpoints of `window` (inclusive).
pub fn fit_rate(series: &ErrorSeries, window: (usize, usize)) -> Result<RateFit> {
    let usable = series.usable_indices(window);
    if usable.len() < 3 {
        let filtered = (0..series.len())
            .filter(|i| !usable.contains(i))
            .map(|i| series.checkpoints[i])
            .filter(|&n| n >= window.0 && n <= window.1)
            .collect();
        return Err(Error::InsufficientData {
            usable: usable.len(),
            filtered,
        });
    }
    let xs: Vec<f64> = usable
        .iter()
        .map(|&i| (series.checkpoints[i] as f64).ln())
        .collect();
    let ys: Vec<f64> = usable
        .iter()
        .map(|&i| series.estimates[i].abs().ln())
        .collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        window,
        usable_points: usable.len(),
    })
}

/// `max |estimate_n| n^(-exponent)` over the usable checkpoints; 0 when
/// none are usable.
pub fn envelope_constant(series: &ErrorSeries, exponent: f64) -> f64 {
    envelope_constant_in(series, exponent, (0, usize::MAX))
}

/// [`envelope_constant`] restricted to checkpoints in `window` (inclusive).
pub fn envelope_constant_in(series: &ErrorSeries, exponent: f64, window: (usize, usize)) -> f64 {
    series
        .usable_indices(window)
        .into_iter()
        .map(|i| series.estimates[i].abs() * (series.checkpoints[i] as f64).powf(-exponent))
        .fold(0.0, f64::max)
}

/// `[2^lo, 2^(lo+1), ..., 2^hi]`.
pub fn powers_of_two(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{QuadraticProblem, RotationProblem};

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    fn sched() -> Schedule {
        Schedule::single_sample(0.25, 1.0).unwrap()
    }

    fn synthetic(f: impl Fn(f64) -> f64) -> ErrorSeries {
        let cps = powers_of_two(4, 12);
        let est = cps.iter().map(|&n| f(n as f64)).collect();
        ErrorSeries::new(
            ErrorKind::Weak,
            cps.clone(),
            est,
            vec![0.0; cps.len()],
            1,
            0,
        )
        .unwrap()
    }

    #[test]
    fn mean_oracle_examples() {
        let m = RotationProblem::mean_generator();
        let xi = v(&[1.0, 0.0]);
        assert_eq!(mean_recursion_oracle(&m, &sched(), &xi, 0).unwrap(), xi);
        let one = mean_recursion_oracle(&m, &sched(), &xi, 1).unwrap();
        let r = 2f64.sqrt() / std::f64::consts::PI;
        assert!((one.as_slice()[0] - (1.0 - r)).abs() < 1e-15);
        assert!((one.as_slice()[1] - r).abs() < 1e-15);
        assert!((one.as_slice()[0] - 0.549_842).abs() < 1e-6);
        let far = mean_recursion_oracle(&m, &sched(), &xi, 100_000).unwrap();
        let near = mean_recursion_oracle(&m, &sched(), &xi, 1000).unwrap();
        assert!(far.norm() < near.norm() && far.norm() < 1e-10);
    }

    #[test]
    fn started_at_equilibrium_gives_zero_errors() {
        let p = RotationProblem::new();
        let mc = MonteCarlo::new(300, 1);
        let psi = TestFunction::sin_sum(2);
        let pair = run_monte_carlo(
            &p,
            &sched(),
            &v(&[0.0, 0.0]),
            Some(&psi),
            &[0, 1, 16, 256],
            &mc,
        )
        .unwrap();
        assert!(pair.weak.unwrap().estimates.iter().all(|&e| e == 0.0));
        assert!(pair.strong.estimates.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn checkpoint_zero_is_exact() {
        let p = RotationProblem::new();
        let psi = TestFunction::sin_sum(2);
        let xi = v(&[0.7, -0.1]);
        let mc = MonteCarlo::new(1000, 3);
        let pair = run_monte_carlo(&p, &sched(), &xi, Some(&psi), &[0, 4], &mc).unwrap();
        let weak = pair.weak.unwrap();
        assert_eq!(
            weak.estimates[0],
            psi.value(xi.as_slice()) - psi.value(&[0.0, 0.0])
        );
        assert_eq!(weak.half_widths[0], 0.0);
        assert_eq!(pair.strong.estimates[0], xi.norm_sq());
        assert_eq!(pair.strong.half_widths[0], 0.0);
    }

    #[test]
    fn linear_weak_estimates_cover_the_oracle() {
        let p = RotationProblem::new();
        let psi = TestFunction::first_coordinate(2);
        let xi = v(&[1.0, 0.0]);
        let cps = [1, 10, 100];
        let series = weak_error_mc(
            &p,
            &sched(),
            &xi,
            &psi,
            &cps,
            &MonteCarlo::new(100_000, 2024),
        )
        .unwrap();
        for (i, &n) in cps.iter().enumerate() {
            let exact = mean_recursion_oracle(&RotationProblem::mean_generator(), &sched(), &xi, n)
                .unwrap();
            let diff = (series.estimates[i] - exact.as_slice()[0]).abs();
            assert!(
                diff <= 3.0 * series.half_widths[i],
                "n={n}: {diff} vs {}",
                series.half_widths[i]
            );
        }
    }

    #[test]
    fn quadratic_strong_estimates_cover_the_variance_recursion() {
        let q = QuadraticProblem::new(v(&[1.0, -1.0]), 1.0).unwrap();
        let xi = v(&[0.0, 0.0]);
        let cps = [1, 4, 16, 64];
        let s = strong_error_mc(&q, &sched(), &xi, &cps, &MonteCarlo::new(50_000, 7)).unwrap();
        for (i, &n) in cps.iter().enumerate() {
            let exact = strong_recursion_oracle(&sched(), 2.0, 2.0, n);
            assert!(
                (s.estimates[i] - exact).abs() <= 3.0 * s.half_widths[i],
                "n={n}"
            );
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let q = QuadraticProblem::new(v(&[1.0, -1.0]), 1.0).unwrap();
        let psi = TestFunction::sin_sum(2);
        let xi = v(&[0.0, 2.0]);
        let base = MonteCarlo::new(3 * CHUNK_SIZE + 17, 5);
        let a = run_monte_carlo(&q, &sched(), &xi, Some(&psi), &[0, 3, 30], &base).unwrap();
        for workers in [2, 3, 8] {
            let b = run_monte_carlo(
                &q,
                &sched(),
                &xi,
                Some(&psi),
                &[0, 3, 30],
                &base.with_workers(workers),
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn failure_names_the_trajectory() {
        let q = QuadraticProblem::new(v(&[1.0]), 1.0).unwrap();
        let s = Schedule::single_sample(0.25, 1e200).unwrap();
        let err = strong_error_mc(&q, &s, &v(&[0.0]), &[40], &MonteCarlo::new(10, 77)).unwrap_err();
        assert!(matches!(
            err,
            Error::SimulationFailed {
                seed: 77,
                trajectory_index: 0,
                ..
            }
        ));
    }

    #[test]
    fn input_validation() {
        let p = RotationProblem::new();
        let xi = v(&[1.0, 0.0]);
        assert!(strong_error_mc(&p, &sched(), &xi, &[1], &MonteCarlo::new(1, 0)).is_err());
        assert!(strong_error_mc(&p, &sched(), &xi, &[2, 1], &MonteCarlo::new(10, 0)).is_err());
        let psi3 = TestFunction::sin_sum(3);
        assert!(weak_error_mc(&p, &sched(), &xi, &psi3, &[1], &MonteCarlo::new(10, 0)).is_err());
    }

    #[test]
    fn half_widths_shrink_with_samples() {
        let p = RotationProblem::new();
        let psi = TestFunction::sin_sum(2);
        let xi = v(&[1.0, 0.0]);
        let cps = powers_of_two(0, 6);
        let median = |samples| {
            let s = weak_error_mc(&p, &sched(), &xi, &psi, &cps, &MonteCarlo::new(samples, 11))
                .unwrap();
            let mut h = s.half_widths.clone();
            h.sort_by(f64::total_cmp);
            h[h.len() / 2]
        };
        let ratio = median(4000) / median(16000);
        assert!((ratio - 2.0).abs() <= 0.4, "{ratio}");
    }

    #[test]
    fn fit_exact_power_laws() {
        let f = fit_rate(&synthetic(|n| 2.0 * n.powf(-0.5)), (16, 4096)).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 2f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(f.usable_points, 9);
        let f = fit_rate(&synthetic(|n| 1.0 / n), (1, usize::MAX)).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        // sign does not matter
        let f = fit_rate(&synthetic(|n| -3.0 * n.powf(-0.25)), (16, 4096)).unwrap();
        assert!((f.slope + 0.25).abs() < 1e-12);
    }

    #[test]
    fn fit_filters_noise_dominated_points() {
        let cps = powers_of_two(4, 8);
        let est = vec![1.0, 0.5, 0.25, 0.125, 0.0625];
        let hw = vec![0.1, 0.1, 0.1, 0.1, 0.1];
        let s = ErrorSeries::new(ErrorKind::Weak, cps, est, hw, 10, 0).unwrap();
        match fit_rate(&s, (16, 256)) {
            Err(Error::InsufficientData { usable, filtered }) => {
                assert_eq!(usable, 2);
                assert_eq!(filtered, vec![64, 128, 256]);
            }
            other => panic!("{other:?}"),
        }
        let f = fit_rate(&s, (1, 64)).unwrap_err();
        assert!(matches!(f, Error::InsufficientData { usable: 2, .. }));
    }

    #[test]
    fn envelope_examples() {
        let s = synthetic(|n| 2.0 * n.powf(-0.5));
        assert!((envelope_constant(&s, -0.5) - 2.0).abs() < 1e-12);
        assert_eq!(envelope_constant(&synthetic(|_| 0.0), -0.5), 0.0);
        let s = synthetic(|n| 1.0 / n);
        assert!((envelope_constant_in(&s, -0.5, (256, 4096)) - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn series_validation() {
        assert!(ErrorSeries::new(
            ErrorKind::Weak,
            vec![1, 1],
            vec![0.0; 2],
            vec![0.0; 2],
            2,
            0
        )
        .is_err());
        assert!(ErrorSeries::new(
            ErrorKind::Weak,
            vec![1, 2],
            vec![0.0; 2],
            vec![-1.0, 0.0],
            2,
            0
        )
        .is_err());
        assert!(ErrorSeries::new(
            ErrorKind::Weak,
            vec![1, 2],
            vec![f64::NAN, 0.0],
            vec![0.0; 2],
            2,
            0
        )
        .is_err());
        assert!(
            ErrorSeries::new(ErrorKind::Weak, vec![1, 2], vec![0.0], vec![0.0; 2], 2, 0).is_err()
        );
    }

    #[test]
    fn strong_oracle_deterministic_case() {
        // no noise: v_n = prod (1 - gamma_k)^2 v_0
        let s = Schedule::single_sample(0.3, 0.5).unwrap();
        let mut p = 1.0;
        for k in 1..=20 {
            p *= (1.0 - s.step_size(k)).powi(2);
        }
        assert!((strong_recursion_oracle(&s, 3.0, 0.0, 20) - 3.0 * p).abs() < 1e-15);
    }
}
