//! Learning-rate schedules `gamma_n = eta * n^(eps - 1)` and the induced
//! time grid `t_m = gamma_1 + ... + gamma_m`.

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// Mini-batch sizes `M_m`, indexed from `m = 0` (the batch used by step `m + 1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BatchSizes {
    Constant(usize),
    /// Per-step table; the last entry repeats past the end of the table.
    Table(Vec<usize>),
}

impl BatchSizes {
    pub fn get(&self, m: usize) -> usize {
        match self {
            BatchSizes::Constant(size) => *size,
            BatchSizes::Table(sizes) => sizes[m.min(sizes.len() - 1)],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            BatchSizes::Constant(size) => *size >= 1,
            BatchSizes::Table(sizes) => !sizes.is_empty() && sizes.iter().all(|&s| s >= 1),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "batch_size",
                reason: "every mini-batch size must be at least 1".into(),
            })
        }
    }
}

impl Default for BatchSizes {
    fn default() -> Self {
        BatchSizes::Constant(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    epsilon: f64,
    eta: f64,
    batch_sizes: BatchSizes,
}

impl Schedule {
    pub fn new(epsilon: f64, eta: f64, batch_sizes: BatchSizes) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("must lie strictly inside (0, 1/2), got {epsilon}"),
            });
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: format!("must be positive and finite, got {eta}"),
            });
        }
        batch_sizes.validate()?;
        Ok(Self {
            epsilon,
            eta,
            batch_sizes,
        })
    }

    /// Schedule without mini-batching (`M_m = 1`).
    pub fn single_sample(epsilon: f64, eta: f64) -> Result<Self> {
        Self::new(epsilon, eta, BatchSizes::Constant(1))
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn batch_sizes(&self) -> &BatchSizes {
        &self.batch_sizes
    }

    /// Batch size `M_m` used by step `m + 1`.
    pub fn batch_size(&self, m: usize) -> usize {
        self.batch_sizes.get(m)
    }

    /// Step size of step `n >= 1`.
    pub fn step_size(&self, n: usize) -> f64 {
        debug_assert!(n >= 1);
        self.eta * (n as f64).powf(self.epsilon - 1.0)
    }

    /// `[gamma_1, ..., gamma_n]`.
    pub fn step_sizes(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|k| self.step_size(k)).collect()
    }

    /// Grid `t_0 < t_1 < ... < t_m_max`.
    pub fn grid(&self, m_max: usize) -> TimeGrid {
        let mut acc = CompensatedSum::new();
        let mut points = Vec::with_capacity(m_max + 1);
        points.push(0.0);
        for n in 1..=m_max {
            acc.add(self.step_size(n));
            points.push(acc.value());
        }
        TimeGrid { points }
    }
}

/// `t_m = eta * sum_{n=1}^m n^(eps-1)`, compensated and summed in index order.
///
/// Agrees bit-for-bit with `schedule.grid(m).points()[m]`.
pub fn grid_time(m: usize, schedule: &Schedule) -> f64 {
    (1..=m)
        .map(|n| schedule.step_size(n))
        .collect::<CompensatedSum>()
        .value()
}

/// Strictly increasing list of times starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.first() != Some(&0.0) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "first grid point must be 0".into(),
            });
        }
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "grid points must be finite and strictly increasing".into(),
            });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn last(&self) -> f64 {
        *self.points.last().expect("grid is never empty")
    }

    /// Index of the largest grid point `<= t` (the last index when `t` lies
    /// beyond the grid).
    pub fn floor_index(&self, t: f64) -> Result<usize> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        Ok(self.points.partition_point(|&p| p <= t) - 1)
    }
}

/// `floor(t) = max { s in grid : s <= t }`.
pub fn floor_grid(t: f64, grid: &TimeGrid) -> Result<f64> {
    Ok(grid.points[grid.floor_index(t)?])
}
