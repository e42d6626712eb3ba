//! Closed-form evaluation of the analytic inequalities behind the
//! `n^(2 eps - 1)` weak rate, each reported as `lhs`, `rhs` and
//! `margin = rhs - lhs` so that violations are easy to spot.

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::schedule::{grid_time, Schedule, TimeGrid};

/// Numerical slack accepted on a lemma-backed margin.
pub const MARGIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub parameters: Vec<(&'static str, f64)>,
}

impl BoundReport {
    fn new(name: &'static str, lhs: f64, rhs: f64, parameters: Vec<(&'static str, f64)>) -> Self {
        Self {
            name,
            lhs,
            rhs,
            margin: rhs - lhs,
            parameters,
        }
    }

    pub fn holds(&self, tolerance: f64) -> bool {
        self.margin >= -tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumBounds {
    pub lower: f64,
    pub sum: f64,
    pub upper: f64,
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

/// `sum_{n=1}^l n^-nu` bracketed by
/// `((l+1)^(1-nu) - 1)/(1-nu)` and `(l^(1-nu) - nu)/(1-nu)`.
pub fn partial_sum_bounds(nu: f64, l: u64) -> Result<SumBounds> {
    if !(0.0..1.0).contains(&nu) {
        return Err(invalid("nu", format!("must lie in [0, 1), got {nu}")));
    }
    if l == 0 {
        return Err(invalid("l", "must be at least 1".into()));
    }
    let p = 1.0 - nu;
    let lf = l as f64;
    let sum = (1..=l)
        .map(|n| (n as f64).powf(-nu))
        .collect::<CompensatedSum>()
        .value();
    Ok(SumBounds {
        lower: ((lf + 1.0).powf(p) - 1.0) / p,
        sum,
        upper: (lf.powf(p) - nu) / p,
    })
}

impl SumBounds {
    pub fn report(&self, nu: f64, l: u64) -> [BoundReport; 2] {
        let params = vec![("nu", nu), ("l", l as f64)];
        [
            BoundReport::new("sum_lower", self.lower, self.sum, params.clone()),
            BoundReport::new("sum_upper", self.sum, self.upper, params),
        ]
    }
}

/// `(x - 1 + e^-x) / x^2`, evaluated without cancellation for small `x`.
fn ramp_kernel(x: f64) -> f64 {
    if x < 0.1 {
        // sum_{j>=0} (-x)^j / (j + 2)!
        let mut term = 0.5;
        let mut acc = 0.0;
        for j in 0..20 {
            acc += term;
            term *= -x / (j as f64 + 3.0);
        }
        acc
    } else {
        (x + (-x).exp_m1()) / (x * x)
    }
}

/// `int_0^T e^{-L(T - t)} (t - floor(t)) dt` against
/// `(1/2) sum_n e^{-L(T - t_{n+1})} (t_{n+1} - t_n)^2`, with `T` the
/// `k`-th grid point (grid point 0 counted as the first).
///
/// Per interval `[a, b]`:
/// `int_a^b e^{-L(T-t)}(t-a) dt = e^{-L(T-b)} ((b-a)/L - 1/L^2) + e^{-L(T-a)}/L^2`
/// `= e^{-L(T-b)} (b-a)^2 phi(L(b-a))` with `phi(x) = (x - 1 + e^-x)/x^2`.
pub fn discrete_integral_bound(l_const: f64, grid: &TimeGrid, k: usize) -> Result<BoundReport> {
    if !(l_const > 0.0 && l_const.is_finite()) {
        return Err(invalid("L", format!("must be positive, got {l_const}")));
    }
    if k < 2 || k > grid.len() {
        return Err(invalid(
            "k",
            format!("must lie in [2, {}], got {k}", grid.len()),
        ));
    }
    let pts = &grid.points()[..k];
    let horizon = pts[k - 1];
    let mut lhs = CompensatedSum::new();
    let mut rhs = CompensatedSum::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let width = b - a;
        let damping = (-l_const * (horizon - b)).exp();
        lhs.add(damping * width * width * ramp_kernel(l_const * width));
        rhs.add(0.5 * damping * width * width);
    }
    Ok(BoundReport::new(
        "discrete_integral",
        lhs.value(),
        rhs.value(),
        vec![("L", l_const), ("k", k as f64), ("T", horizon)],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaParams {
    pub lambda: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub l_const: f64,
}

impl KappaParams {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(invalid(
                "lambda",
                format!("must lie in (0, 1), got {}", self.lambda),
            ));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(invalid(
                "epsilon",
                format!("must lie in (0, 1/2), got {}", self.epsilon),
            ));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid(
                "eta",
                format!("must be positive, got {}", self.eta),
            ));
        }
        if !(self.l_const > 0.0 && self.l_const.is_finite()) {
            return Err(invalid(
                "L",
                format!("must be positive, got {}", self.l_const),
            ));
        }
        Ok(())
    }

    /// `eta^2 exp(L eta + L eta / eps) / (2 (1 - 2 eps))`.
    pub fn prefactor(&self) -> f64 {
        let a = self.l_const * self.eta / self.epsilon;
        self.eta * self.eta * (self.l_const * self.eta + a).exp()
            / (2.0 * (1.0 - 2.0 * self.epsilon))
    }

    /// `lim_{n -> inf} kappa(n) = prefactor * lambda^(2 eps - 1)`.
    pub fn tail_limit(&self) -> f64 {
        self.prefactor() * self.lambda.powf(2.0 * self.epsilon - 1.0)
    }

    /// `kappa(n) = prefactor * (n^(1-2eps) [2 exp(-a (1 - lambda^eps) n^eps)
    /// + (n-1)^(2eps-2)] + lambda^(2eps-1))`, `a = L eta / eps`, `n >= 2`.
    pub fn kappa(&self, n: u64) -> f64 {
        let eps = self.epsilon;
        let nf = n as f64;
        let a = self.l_const * self.eta / eps;
        let decay = 2.0 * (-a * (1.0 - self.lambda.powf(eps)) * nf.powf(eps)).exp();
        let tail = (nf - 1.0).powf(2.0 * eps - 2.0);
        self.prefactor()
            * (nf.powf(1.0 - 2.0 * eps) * (decay + tail) + self.lambda.powf(2.0 * eps - 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KLambda {
    pub params: KappaParams,
    /// `max_{2 <= n <= n_max} kappa(n)`.
    pub sup: f64,
    pub argmax: u64,
    pub tail_limit: f64,
    pub n_max: u64,
}

/// Scans `kappa(n)` over `2..=n_max` and certifies that the maximum is the
/// supremum by checking that `kappa` is non-increasing over the last 10% of
/// the range.
pub fn k_lambda(params: KappaParams, n_max: u64) -> Result<KLambda> {
    params.validate()?;
    if n_max < 100 {
        return Err(invalid(
            "n_max",
            format!("must be at least 100, got {n_max}"),
        ));
    }
    let tail_start = n_max - n_max / 10;
    let mut sup = f64::NEG_INFINITY;
    let mut argmax = 2;
    let mut prev = f64::INFINITY;
    for n in 2..=n_max {
        let k = params.kappa(n);
        if !k.is_finite() {
            return Err(Error::NonFinite(format!("kappa({n})")));
        }
        if k > sup {
            sup = k;
            argmax = n;
        }
        if n > tail_start && k > prev * (1.0 + 8.0 * f64::EPSILON) {
            return Err(Error::NotBracketed {
                n_max: n_max as usize,
            });
        }
        prev = k;
    }
    Ok(KLambda {
        params,
        sup,
        argmax,
        tail_limit: params.tail_limit(),
        n_max,
    })
}

/// Default lambda grid scanned when choosing the split point.
pub const LAMBDA_GRID: [f64; 3] = [0.25, 0.5, 0.75];

/// Runs [`k_lambda`] at each lambda and returns every outcome together with
/// the smallest certified value, if any.
pub fn scan_lambdas(
    lambdas: &[f64],
    epsilon: f64,
    eta: f64,
    l_const: f64,
    n_max: u64,
) -> (Vec<Result<KLambda>>, Option<KLambda>) {
    let results: Vec<Result<KLambda>> = lambdas
        .iter()
        .map(|&lambda| {
            k_lambda(
                KappaParams {
                    lambda,
                    epsilon,
                    eta,
                    l_const,
                },
                n_max,
            )
        })
        .collect();
    let best = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .min_by(|a, b| a.sup.total_cmp(&b.sup))
        .copied();
    (results, best)
}

/// `n^(1-2eps) exp(-L t_{n-1})`.
pub fn init_decay_term(n: usize, schedule: &Schedule, l_const: f64) -> f64 {
    assert!(n >= 1, "init decay term is defined for n >= 1");
    let eps = schedule.epsilon();
    (n as f64).powf(1.0 - 2.0 * eps) * (-l_const * grid_time(n - 1, schedule)).exp()
}

/// [`init_decay_term`] for `n = 1..=n_max` in one pass over the grid.
pub fn init_decay_terms(n_max: usize, schedule: &Schedule, l_const: f64) -> Vec<f64> {
    let grid = schedule.grid(n_max.saturating_sub(1));
    let eps = schedule.epsilon();
    (1..=n_max)
        .map(|n| (n as f64).powf(1.0 - 2.0 * eps) * (-l_const * grid.points()[n - 1]).exp())
        .collect()
}

/// Inputs of the weak-error envelope. `c_emp` is an empirical stand-in for
/// the approximation-error constant, which has no computable closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeInputs {
    pub k: f64,
    pub c_emp: f64,
    pub init_norm: f64,
    pub psi_grad_sup: f64,
    pub l_const: f64,
}

/// `n^(2eps-1) [K C_emp + n^(1-2eps) e^{-L t_{n-1}} sup|psi'| |xi - Xi|]`.
pub fn weak_envelope(n: usize, inputs: &EnvelopeInputs, schedule: &Schedule) -> f64 {
    let eps = schedule.epsilon();
    let decay = init_decay_term(n, schedule, inputs.l_const);
    (n as f64).powf(2.0 * eps - 1.0)
        * (inputs.k * inputs.c_emp + decay * inputs.psi_grad_sup * inputs.init_norm)
}
