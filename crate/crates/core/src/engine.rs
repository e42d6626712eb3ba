//! The stochastic approximation recursion
//!
//! ```text
//! Theta_n = Theta_{n-1} + gamma_n / M_{n-1} * sum_{j=1}^{M_{n-1}} G(Theta_{n-1}, Z_{n,j})
//! ```
//!
//! with `gamma_n = eta n^(eps-1)`, and its piecewise-linear interpolation on
//! the time grid `t_n`. Noise for trajectory `i` under master seed `s` comes
//! from `RngStream::new(s, i)`; within a step the draws are consumed in
//! batch order `j = 1..M`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::problems::Problem;
use crate::rng::RngStream;
use crate::schedule::Schedule;
use crate::vector::Vector;

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub schedule: Schedule,
    /// Recorded states `Theta_n`, always including `n = 0`.
    pub states: BTreeMap<usize, Vector>,
    pub seed: u64,
    pub trajectory_index: u64,
    /// Total noise draws consumed.
    pub noise_draws: u64,
}

impl Trajectory {
    pub fn initial(&self) -> &Vector {
        &self.states[&0]
    }

    pub fn state(&self, n: usize) -> Option<&Vector> {
        self.states.get(&n)
    }
}

pub(crate) fn validate_checkpoints(checkpoints: &[usize]) -> Result<()> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidParameter {
            name: "checkpoints",
            reason: "at least one checkpoint is required".into(),
        });
    }
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter {
            name: "checkpoints",
            reason: "checkpoints must be strictly increasing".into(),
        });
    }
    Ok(())
}

/// Scratch buffers for stepping one trajectory at a time.
pub(crate) struct Stepper<'a, P: ?Sized> {
    problem: &'a P,
    draw: Vec<f64>,
    batch_sum: Vec<f64>,
}

impl<'a, P: Problem + ?Sized> Stepper<'a, P> {
    pub(crate) fn new(problem: &'a P) -> Self {
        let d = problem.dimension();
        Self {
            problem,
            draw: vec![0.0; d],
            batch_sum: vec![0.0; d],
        }
    }

    /// `x += gamma * (batch average of G(x, Z_j))`; false if `x` stops being finite.
    #[inline]
    pub(crate) fn advance(
        &mut self,
        x: &mut [f64],
        gamma: f64,
        batch: usize,
        rng: &mut RngStream,
    ) -> bool {
        if batch == 1 {
            self.problem.sample_field(x, rng, &mut self.draw);
            for (xi, gi) in x.iter_mut().zip(&self.draw) {
                *xi += gamma * gi;
            }
        } else {
            self.batch_sum.iter_mut().for_each(|s| *s = 0.0);
            for _ in 0..batch {
                self.problem.sample_field(x, rng, &mut self.draw);
                for (s, gi) in self.batch_sum.iter_mut().zip(&self.draw) {
                    *s += gi;
                }
            }
            let factor = gamma / batch as f64;
            for (xi, s) in x.iter_mut().zip(&self.batch_sum) {
                *xi += factor * s;
            }
        }
        x.iter().all(|c| c.is_finite())
    }

    /// Runs steps `1..=max(checkpoints)` from `initial`, calling `visit(k, state)`
    /// at the `k`-th checkpoint. `step_sizes[n - 1]` must be `gamma_n`.
    /// Returns the draws consumed, or the first step with a non-finite state.
    pub(crate) fn run(
        &mut self,
        schedule: &Schedule,
        step_sizes: &[f64],
        initial: &[f64],
        checkpoints: &[usize],
        rng: &mut RngStream,
        mut visit: impl FnMut(usize, &[f64]),
    ) -> std::result::Result<u64, usize> {
        let mut x = initial.to_vec();
        let mut draws = 0u64;
        let mut next = 0;
        if checkpoints[0] == 0 {
            visit(0, &x);
            next = 1;
        }
        let last = *checkpoints.last().expect("validated non-empty");
        for n in 1..=last {
            let batch = schedule.batch_size(n - 1);
            if !self.advance(&mut x, step_sizes[n - 1], batch, rng) {
                return Err(n);
            }
            draws += batch as u64;
            if checkpoints.get(next) == Some(&n) {
                visit(next, &x);
                next += 1;
            }
        }
        Ok(draws)
    }
}

/// One step of the recursion from `Theta_{n-1} = state`.
pub fn step<P: Problem + ?Sized>(
    state: &Vector,
    n: usize,
    schedule: &Schedule,
    problem: &P,
    rng: &mut RngStream,
) -> Result<Vector> {
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "step_index",
            reason: "steps are numbered from 1".into(),
        });
    }
    state.ensure_dim(problem.dimension())?;
    let mut x = state.as_slice().to_vec();
    let ok = Stepper::new(problem).advance(
        &mut x,
        schedule.step_size(n),
        schedule.batch_size(n - 1),
        rng,
    );
    if !ok {
        return Err(Error::SimulationFailed {
            seed: rng.seed(),
            trajectory_index: rng.stream_id(),
            step: n,
        });
    }
    Ok(Vector::from_slice_unchecked(&x))
}

/// Simulates one trajectory, recording `Theta_n` at `n = 0` and at every
/// checkpoint.
pub fn simulate_trajectory<P: Problem + ?Sized>(
    problem: &P,
    schedule: &Schedule,
    initial: &Vector,
    checkpoints: &[usize],
    seed: u64,
    trajectory_index: u64,
) -> Result<Trajectory> {
    validate_checkpoints(checkpoints)?;
    initial.ensure_dim(problem.dimension())?;
    let last = *checkpoints.last().expect("validated non-empty");
    let step_sizes = schedule.step_sizes(last);
    let mut stepper = Stepper::new(problem);
    let mut rng = RngStream::new(seed, trajectory_index);
    let mut states = BTreeMap::new();
    states.insert(0, initial.clone());
    let noise_draws = stepper
        .run(
            schedule,
            &step_sizes,
            initial.as_slice(),
            checkpoints,
            &mut rng,
            |k, x| {
                states.insert(checkpoints[k], Vector::from_slice_unchecked(x));
            },
        )
        .map_err(|step| Error::SimulationFailed {
            seed,
            trajectory_index,
            step,
        })?;
    Ok(Trajectory {
        schedule: schedule.clone(),
        states,
        seed,
        trajectory_index,
        noise_draws,
    })
}

/// Continuous-time interpolant: the convex combination of the recorded
/// states bracketing `t` on the grid `t_n`.
pub fn interpolate(trajectory: &Trajectory, t: f64) -> Result<Vector> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    let schedule = &trajectory.schedule;
    let mut acc = crate::numeric::CompensatedSum::new();
    let mut lower_time = 0.0;
    let mut m = 0usize;
    loop {
        acc.add(schedule.step_size(m + 1));
        let upper_time = acc.value();
        if upper_time > t {
            if t == lower_time {
                return fetch(trajectory, m).cloned();
            }
            let lower = fetch(trajectory, m)?;
            let upper = fetch(trajectory, m + 1)?;
            let w = (t - lower_time) / (upper_time - lower_time);
            return lower.combine(1.0 - w, upper, w);
        }
        lower_time = upper_time;
        m += 1;
    }
}

fn fetch(trajectory: &Trajectory, n: usize) -> Result<&Vector> {
    trajectory
        .state(n)
        .ok_or(Error::MissingCheckpoint { step: n })
}
