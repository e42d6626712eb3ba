use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::vector::{dot, Vector};

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Smooth test function `psi` whose weak error `E[psi(Theta_n)] - psi(Xi)`
/// is estimated.
#[derive(Clone)]
pub enum TestFunction {
    /// `psi(x) = <a, x>`.
    Linear(Vector),
    /// `psi(x) = sin(x_1 + ... + x_d)`.
    SinSum { dim: usize },
    Custom {
        name: String,
        dim: usize,
        value: ScalarFn,
        gradient: GradientFn,
        hessian_bound: f64,
        gradient_bound: f64,
    },
}

impl TestFunction {
    pub fn linear(a: Vector) -> Self {
        TestFunction::Linear(a)
    }

    pub fn sin_sum(dim: usize) -> Self {
        TestFunction::SinSum { dim }
    }

    /// First-coordinate projection `psi(x) = x_1`.
    pub fn first_coordinate(dim: usize) -> Self {
        let mut a = vec![0.0; dim];
        a[0] = 1.0;
        TestFunction::Linear(Vector::new(a).expect("unit vector is finite"))
    }

    pub fn id(&self) -> &str {
        match self {
            TestFunction::Linear(_) => "linear",
            TestFunction::SinSum { .. } => "sin_sum",
            TestFunction::Custom { name, .. } => name,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TestFunction::Linear(a) => a.dim(),
            TestFunction::SinSum { dim } | TestFunction::Custom { dim, .. } => *dim,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Linear(a) => dot(a.as_slice(), x),
            TestFunction::SinSum { .. } => x.iter().sum::<f64>().sin(),
            TestFunction::Custom { value, .. } => value(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            TestFunction::Linear(a) => a.as_slice().to_vec(),
            TestFunction::SinSum { dim } => vec![x.iter().sum::<f64>().cos(); *dim],
            TestFunction::Custom { gradient, .. } => gradient(x),
        }
    }

    /// Closed-form bound on the operator norm of the Hessian.
    ///
    /// For `sin_sum` every second partial is `-sin(sum x)`, bounded by 1, and
    /// the all-ones matrix has operator norm `d`.
    pub fn hessian_bound(&self) -> f64 {
        match self {
            TestFunction::Linear(_) => 0.0,
            TestFunction::SinSum { dim } => *dim as f64,
            TestFunction::Custom { hessian_bound, .. } => *hessian_bound,
        }
    }

    /// Closed-form bound on the gradient norm.
    pub fn gradient_bound(&self) -> f64 {
        match self {
            TestFunction::Linear(a) => a.norm(),
            TestFunction::SinSum { dim } => (*dim as f64).sqrt(),
            TestFunction::Custom { gradient_bound, .. } => *gradient_bound,
        }
    }

    /// Largest relative discrepancy between `gradient` and central finite
    /// differences of `value` over the given points.
    pub fn gradient_fd_discrepancy(&self, points: &[Vector], step: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for p in points {
            p.ensure_dim(self.dim())?;
            let grad = self.gradient(p.as_slice());
            let mut x = p.as_slice().to_vec();
            for i in 0..x.len() {
                let orig = x[i];
                x[i] = orig + step;
                let up = self.value(&x);
                x[i] = orig - step;
                let down = self.value(&x);
                x[i] = orig;
                let fd = (up - down) / (2.0 * step);
                let rel = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
                worst = worst.max(rel);
            }
        }
        if worst.is_finite() {
            Ok(worst)
        } else {
            Err(Error::NonFinite("test-function gradient".into()))
        }
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Linear(a) => write!(f, "Linear({a})"),
            TestFunction::SinSum { dim } => write!(f, "SinSum {{ dim: {dim} }}"),
            TestFunction::Custom { name, dim, .. } => write!(f, "Custom({name}, dim {dim})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe_points() -> Vec<Vector> {
        (0..20)
            .map(|i| {
                let t = i as f64 * 0.37;
                Vector::new(vec![t.sin() * 3.0, (1.3 * t).cos() * 2.0]).unwrap()
            })
            .collect()
    }

    #[test]
    fn builtin_gradients_match_finite_differences() {
        let pts = probe_points();
        let lin = TestFunction::linear(Vector::new(vec![0.5, -2.0]).unwrap());
        assert!(lin.gradient_fd_discrepancy(&pts, 1e-5).unwrap() < 1e-6);
        let s = TestFunction::sin_sum(2);
        assert!(s.gradient_fd_discrepancy(&pts, 1e-5).unwrap() < 1e-6);
    }

    #[test]
    fn bounds() {
        assert_eq!(TestFunction::first_coordinate(2).hessian_bound(), 0.0);
        assert_eq!(TestFunction::first_coordinate(2).gradient_bound(), 1.0);
        assert_eq!(TestFunction::sin_sum(2).hessian_bound(), 2.0);
        assert_eq!(TestFunction::sin_sum(3).gradient_bound(), 3f64.sqrt());
    }

    #[test]
    fn custom_wrong_gradient_is_detected() {
        let bad = TestFunction::Custom {
            name: "bad".into(),
            dim: 2,
            value: Arc::new(|x| x[0] * x[0]),
            gradient: Arc::new(|x| vec![x[0], 0.0]),
            hessian_bound: 2.0,
            gradient_bound: f64::INFINITY,
        };
        assert!(bad.gradient_fd_discrepancy(&probe_points(), 1e-5).unwrap() > 0.1);
    }

    #[test]
    fn dimension_checked() {
        let s = TestFunction::sin_sum(3);
        assert!(s
            .gradient_fd_discrepancy(&[Vector::zeros(2)], 1e-5)
            .is_err());
    }
}
