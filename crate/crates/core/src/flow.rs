//! The deterministic mean-field flow `theta_t = theta_0 + int_0^t g(theta_s) ds`
//! and numerical certificates of its structural properties.

use crate::error::{Error, Result};
use crate::test_function::TestFunction;
use crate::vector::{SquareMatrix, Vector};

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Default central-difference step for the backward-equation check.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// A deterministic vector field `g: R^d -> R^d`.
pub trait MeanField: Sync {
    fn dimension(&self) -> usize;

    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    fn eval(&self, x: &Vector) -> Result<Vector> {
        x.ensure_dim(self.dimension())?;
        let mut out = vec![0.0; x.dim()];
        self.eval_into(x.as_slice(), &mut out);
        Vector::new(out)
    }
}

/// Adapts a closure into a [`MeanField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Sync> MeanField for FnField<F> {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub endpoint: Vector,
    pub t: f64,
    pub steps_used: usize,
    /// Infinity-norm gap to a rerun with half the step.
    pub estimated_error: f64,
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Scratch {
    fn new(d: usize) -> Self {
        Self {
            k1: vec![0.0; d],
            k2: vec![0.0; d],
            k3: vec![0.0; d],
            k4: vec![0.0; d],
            tmp: vec![0.0; d],
        }
    }

    fn step<G: MeanField + ?Sized>(&mut self, field: &G, x: &mut [f64], dt: f64) {
        field.eval_into(x, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        field.eval_into(&self.tmp, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        field.eval_into(&self.tmp, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        field.eval_into(&self.tmp, &mut self.k4);
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

fn validate_horizon(t: f64, h: f64) -> Result<()> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "h",
            reason: format!("step must be positive, got {h}"),
        });
    }
    Ok(())
}

/// Fixed-step classical RK4 from 0 to `t`; the final step is shortened to
/// land exactly on `t`.
fn rk4<G: MeanField + ?Sized>(
    field: &G,
    start: &[f64],
    t: f64,
    h: f64,
) -> Result<(Vec<f64>, usize)> {
    let mut x = start.to_vec();
    let mut scratch = Rk4Scratch::new(x.len());
    let mut steps = 0usize;
    let mut s = 0.0;
    while s < t {
        let dt = h.min(t - s);
        scratch.step(field, &mut x, dt);
        steps += 1;
        s = if dt < h { t } else { h * steps as f64 };
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Singularity { t: s });
        }
    }
    Ok((x, steps))
}

/// `theta_t^start` by RK4 with step `h`, plus a step-halving error estimate.
pub fn integrate_flow<G: MeanField + ?Sized>(
    field: &G,
    start: &Vector,
    t: f64,
    h: f64,
) -> Result<FlowResult> {
    validate_horizon(t, h)?;
    start.ensure_dim(field.dimension())?;
    let (coarse, steps_used) = rk4(field, start.as_slice(), t, h)?;
    let (fine, _) = rk4(field, start.as_slice(), t, 0.5 * h)?;
    let estimated_error = coarse
        .iter()
        .zip(&fine)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(FlowResult {
        endpoint: Vector::new(coarse)?,
        t,
        steps_used,
        estimated_error,
    })
}

/// Endpoint only, without the half-step rerun.
fn flow_endpoint<G: MeanField + ?Sized>(
    field: &G,
    start: &[f64],
    t: f64,
    h: f64,
) -> Result<Vec<f64>> {
    validate_horizon(t, h)?;
    Ok(rk4(field, start, t, h)?.0)
}

/// `exp(M t) start` for `M = a I + b J`, `J = ((0, -1), (1, 0))`:
/// `e^{at} (cos(bt) I + sin(bt) J) start`.
pub fn linear_flow_exact(m: &SquareMatrix, start: &Vector, t: f64) -> Result<Vector> {
    if m.dim() != 2 {
        return Err(Error::NotRotationScaling);
    }
    start.ensure_dim(2)?;
    let (a, b) = (m.get(0, 0), m.get(1, 0));
    let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    if (m.get(1, 1) - a).abs() > 1e-14 * scale || (m.get(0, 1) + b).abs() > 1e-14 * scale {
        return Err(Error::NotRotationScaling);
    }
    let (sin, cos) = (b * t).sin_cos();
    let growth = (a * t).exp();
    let x = start.as_slice();
    Vector::new(vec![
        growth * (cos * x[0] - sin * x[1]),
        growth * (sin * x[0] + cos * x[1]),
    ])
}

/// `|x - y| e^{L t} - |theta_t^x - theta_t^y|`; non-negative (up to
/// integrator error) when `L` is a one-sided Lipschitz constant of `g`.
pub fn check_contraction<G: MeanField + ?Sized>(
    field: &G,
    x: &Vector,
    y: &Vector,
    t: f64,
    lipschitz: f64,
    h: f64,
) -> Result<f64> {
    let fx = integrate_flow(field, x, t, h)?.endpoint;
    let fy = integrate_flow(field, y, t, h)?.endpoint;
    Ok(x.sub(y)?.norm() * (lipschitz * t).exp() - fx.sub(&fy)?.norm())
}

/// `|theta_b^{theta_a^start} - theta_{a+b}^start|`.
pub fn check_semigroup<G: MeanField + ?Sized>(
    field: &G,
    start: &Vector,
    a: f64,
    b: f64,
    h: f64,
) -> Result<f64> {
    Ok(semigroup_report(field, start, a, b, h)?.residual)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemigroupReport {
    pub residual: f64,
    /// Sum of the step-halving estimates of the two compared sides.
    pub estimated_error: f64,
}

pub fn semigroup_report<G: MeanField + ?Sized>(
    field: &G,
    start: &Vector,
    a: f64,
    b: f64,
    h: f64,
) -> Result<SemigroupReport> {
    if a < 0.0 || a.is_nan() {
        return Err(Error::NegativeTime(a));
    }
    if b < 0.0 || b.is_nan() {
        return Err(Error::NegativeTime(b));
    }
    let first = integrate_flow(field, start, a, h)?;
    let composed = integrate_flow(field, &first.endpoint, b, h)?;
    let direct = integrate_flow(field, start, a + b, h)?;
    Ok(SemigroupReport {
        residual: composed.endpoint.sub(&direct.endpoint)?.norm(),
        estimated_error: first.estimated_error + composed.estimated_error + direct.estimated_error,
    })
}

/// `|d/dt u - <grad_start u, g(start)>|` for `u(t, start) = psi(theta_t^start)`,
/// both derivatives by central differences of width `fd_step` (a
/// second-order one-sided stencil in `t` when `t < fd_step`).
pub fn kolmogorov_residual<G: MeanField + ?Sized>(
    psi: &TestFunction,
    field: &G,
    t: f64,
    start: &Vector,
    fd_step: f64,
    h: f64,
) -> Result<f64> {
    if !(fd_step > 0.0 && fd_step.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "fd_step",
            reason: format!("must be positive, got {fd_step}"),
        });
    }
    validate_horizon(t, h)?;
    start.ensure_dim(field.dimension())?;
    start.ensure_dim(psi.dim())?;
    let u = |s: f64, x: &[f64]| -> Result<f64> { Ok(psi.value(&flow_endpoint(field, x, s, h)?)) };

    let x0 = start.as_slice();
    let du_dt = if t >= fd_step {
        (u(t + fd_step, x0)? - u(t - fd_step, x0)?) / (2.0 * fd_step)
    } else {
        (-3.0 * u(t, x0)? + 4.0 * u(t + fd_step, x0)? - u(t + 2.0 * fd_step, x0)?) / (2.0 * fd_step)
    };

    let mut g = vec![0.0; x0.len()];
    field.eval_into(x0, &mut g);
    let mut x = x0.to_vec();
    let mut directional = 0.0;
    for i in 0..x.len() {
        x[i] = x0[i] + fd_step;
        let up = u(t, &x)?;
        x[i] = x0[i] - fd_step;
        let down = u(t, &x)?;
        x[i] = x0[i];
        directional += (up - down) / (2.0 * fd_step) * g[i];
    }
    let r = (du_dt - directional).abs();
    if r.is_finite() {
        Ok(r)
    } else {
        Err(Error::NonFinite("Kolmogorov residual".into()))
    }
}

/// Follows the flow from `start` until `|g(theta_t)| < tol`.
pub fn find_equilibrium<G: MeanField + ?Sized>(
    field: &G,
    start: &Vector,
    t_max: f64,
    tol: f64,
    h: f64,
) -> Result<Vector> {
    validate_horizon(t_max, h)?;
    start.ensure_dim(field.dimension())?;
    let norm = |v: &[f64]| v.iter().map(|c| c * c).sum::<f64>().sqrt();
    let mut x = start.as_slice().to_vec();
    let mut g = vec![0.0; x.len()];
    field.eval_into(&x, &mut g);
    let mut residual = norm(&g);
    let mut scratch = Rk4Scratch::new(x.len());
    let mut s = 0.0;
    let mut steps = 0usize;
    while residual >= tol {
        if s >= t_max {
            return Err(Error::NoConvergence { t_max, residual });
        }
        let dt = h.min(t_max - s);
        scratch.step(field, &mut x, dt);
        steps += 1;
        s = if dt < h { t_max } else { h * steps as f64 };
        if x.iter().any(|c| !c.is_finite()) {
            return Err(Error::Singularity { t: s });
        }
        field.eval_into(&x, &mut g);
        residual = norm(&g);
    }
    Vector::new(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Problem, QuadraticProblem, RotationProblem, ROTATION_RATE};
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    fn quad() -> QuadraticProblem {
        QuadraticProblem::new(v(&[1.0, -1.0]), 1.0).unwrap()
    }

    fn quad_exact(start: &[f64], t: f64) -> Vec<f64> {
        let mu = [1.0, -1.0];
        (0..2)
            .map(|i| mu[i] + (-t).exp() * (start[i] - mu[i]))
            .collect()
    }

    #[test]
    fn zero_horizon_is_identity() {
        let r = integrate_flow(&RotationProblem::new(), &v(&[0.3, 0.4]), 0.0, 1e-3).unwrap();
        assert_eq!(r.endpoint, v(&[0.3, 0.4]));
        assert_eq!(r.steps_used, 0);
        assert_eq!(r.estimated_error, 0.0);
    }

    #[test]
    fn rotation_flow_matches_closed_form() {
        let m = RotationProblem::mean_generator();
        let start = v(&[1.0, 0.0]);
        let r = integrate_flow(&RotationProblem::new(), &start, 1.0, 1e-3).unwrap();
        let exact = linear_flow_exact(&m, &start, 1.0).unwrap();
        assert!(r.endpoint.sub(&exact).unwrap().norm_inf() <= 1e-8);
        assert_eq!(r.steps_used, 1000);
        assert!(r.estimated_error < 1e-12);
    }

    #[test]
    fn quadratic_flow_matches_closed_form() {
        let start = v(&[4.0, 2.5]);
        for t in [0.3, 1.0, 5.0] {
            let r = integrate_flow(&quad(), &start, t, 1e-3).unwrap();
            let exact = quad_exact(start.as_slice(), t);
            for i in 0..2 {
                assert!((r.endpoint.as_slice()[i] - exact[i]).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn last_step_is_shortened() {
        let r = integrate_flow(&quad(), &v(&[0.0, 0.0]), 0.0105, 1e-3).unwrap();
        assert_eq!(r.steps_used, 11);
        let exact = quad_exact(&[0.0, 0.0], 0.0105);
        assert!((r.endpoint.as_slice()[0] - exact[0]).abs() < 1e-14);
    }

    #[test]
    fn blow_up_is_reported() {
        let field = FnField::new(1, |x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0]);
        let err = integrate_flow(&field, &v(&[1.0]), 2.0, 1e-2).unwrap_err();
        assert!(matches!(err, Error::Singularity { .. }));
    }

    #[test]
    fn input_validation() {
        let p = RotationProblem::new();
        assert!(integrate_flow(&p, &v(&[1.0, 0.0]), -1.0, 1e-3).is_err());
        assert!(integrate_flow(&p, &v(&[1.0, 0.0]), 1.0, 0.0).is_err());
        assert!(integrate_flow(&p, &v(&[1.0, 0.0, 0.0]), 1.0, 1e-3).is_err());
    }

    #[test]
    fn linear_flow_exact_examples() {
        let m = RotationProblem::mean_generator();
        let start = v(&[1.0, 0.0]);
        assert_eq!(linear_flow_exact(&m, &start, 0.0).unwrap(), start);
        // b t = pi/2 with b = sqrt2/pi
        let t = PI * PI / (2.0 * 2f64.sqrt());
        let r = linear_flow_exact(&m, &start, t).unwrap();
        let e = (-PI / 2.0).exp();
        assert!(r.as_slice()[0].abs() < 1e-15);
        assert!((r.as_slice()[1] - e).abs() < 1e-15);
        for (x, t) in [([3.0, -4.0], 0.7), ([0.1, 0.2], 5.0), ([-2.0, 1.0], 13.0)] {
            let x = v(&x);
            let r = linear_flow_exact(&m, &x, t).unwrap();
            let expected = (-ROTATION_RATE * t).exp() * x.norm();
            assert!((r.norm() - expected).abs() < 1e-14 * x.norm());
        }
        let bad = SquareMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        assert_eq!(
            linear_flow_exact(&bad, &start, 1.0),
            Err(Error::NotRotationScaling)
        );
        let three = SquareMatrix::scaled_identity(3, 1.0);
        assert!(linear_flow_exact(&three, &start, 1.0).is_err());
    }

    #[test]
    fn rk4_error_ratio_under_halving() {
        let m = RotationProblem::mean_generator();
        let start = v(&[1.0, 0.0]);
        let exact = linear_flow_exact(&m, &start, 1.0).unwrap();
        let err = |h: f64| {
            integrate_flow(&RotationProblem::new(), &start, 1.0, h)
                .unwrap()
                .endpoint
                .sub(&exact)
                .unwrap()
                .norm_inf()
        };
        for h in [1e-2, 5e-3] {
            let ratio = err(h) / err(h / 2.0);
            assert!((12.0..=20.0).contains(&ratio), "h={h}: ratio {ratio}");
        }
    }

    #[test]
    fn contraction_examples() {
        let rot = RotationProblem::new();
        let x = v(&[1.0, 2.0]);
        assert_eq!(
            check_contraction(&rot, &x, &x, 2.0, -ROTATION_RATE, 1e-3).unwrap(),
            0.0
        );
        let m = check_contraction(&rot, &x, &v(&[-0.5, 0.25]), 2.0, -ROTATION_RATE, 1e-3).unwrap();
        assert!(m.abs() <= 1e-8, "{m}");
        let m =
            check_contraction(&quad(), &v(&[2.0, 0.0]), &v(&[1.0, 0.0]), 1.0, -1.0, 1e-3).unwrap();
        assert!(m.abs() <= 1e-8, "{m}");
    }

    #[test]
    fn semigroup_examples() {
        let rot = RotationProblem::new();
        let x = v(&[1.0, 0.0]);
        assert_eq!(check_semigroup(&rot, &x, 0.0, 0.7, 1e-3).unwrap(), 0.0);
        assert_eq!(check_semigroup(&rot, &x, 0.7, 0.0, 1e-3).unwrap(), 0.0);
        assert!(check_semigroup(&rot, &x, 0.5, 0.5, 1e-3).unwrap() <= 1e-7);
        assert!(check_semigroup(&quad(), &v(&[3.0, 3.0]), 1.0, 2.0, 1e-3).unwrap() <= 1e-7);
        assert!(check_semigroup(&rot, &x, -1.0, 0.5, 1e-3).is_err());
    }

    #[test]
    fn kolmogorov_examples() {
        let rot = RotationProblem::new();
        let start = v(&[0.3, -0.2]);
        let lin = TestFunction::first_coordinate(2);
        assert!(kolmogorov_residual(&lin, &rot, 0.7, &start, 1e-4, 1e-3).unwrap() < 1e-8);
        let s = TestFunction::sin_sum(2);
        assert!(kolmogorov_residual(&s, &rot, 0.7, &start, 1e-4, 1e-3).unwrap() <= 1e-4);
        assert!(kolmogorov_residual(&s, &rot, 0.0, &start, 1e-4, 1e-3).unwrap() < 1e-7);
        assert!(kolmogorov_residual(&s, &rot, 0.7, &start, 0.0, 1e-3).is_err());
    }

    #[test]
    fn equilibrium_examples() {
        let rot = RotationProblem::new();
        let x = find_equilibrium(&rot, &v(&[3.0, -4.0]), 200.0, 1e-10, 1e-2).unwrap();
        assert!(x.norm() <= 1e-9);
        let q = quad();
        let x = find_equilibrium(&q, &v(&[10.0, 7.0]), 100.0, 1e-10, 1e-2).unwrap();
        assert!(x.sub(q.mu()).unwrap().norm() <= 1e-10 / q.monotonicity_constant());
        // starting at the equilibrium costs no integration
        let x = find_equilibrium(&q, q.mu(), 0.0, 1e-10, 1e-2).unwrap();
        assert_eq!(&x, q.mu());
        assert!(matches!(
            find_equilibrium(&rot, &v(&[3.0, -4.0]), 1.0, 1e-10, 1e-2),
            Err(Error::NoConvergence { .. })
        ));
    }
}
