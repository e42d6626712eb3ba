//! Built-in stochastic gradient fields with closed-form ground truth, and
//! Monte Carlo checkers for the dissipativity and growth hypotheses.
//!
//! Sign convention: the engine always *adds* `G(Theta, Z)`. A stochastic
//! gradient method for a loss `F(theta, z)` is therefore expressed with
//! `G = -grad_theta F`; the minus sign of the descent step lives in the
//! problem, never in the engine.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI, SQRT_2};

use crate::error::{Error, Result};
use crate::flow::MeanField;
use crate::rng::RngStream;
use crate::vector::{dot, SquareMatrix, Vector};

/// A stochastic field `G(x, Z)` with mean field `g(x) = E[G(x, Z)]`.
pub trait Problem: MeanField + Send + Sync {
    fn id(&self) -> &str;

    /// The unique zero `Xi` of the mean field.
    fn equilibrium(&self) -> &Vector;

    /// `L` in `<x - y, g(x) - g(y)> <= -L |x - y|^2`.
    fn monotonicity_constant(&self) -> f64;

    /// `L` in `<x - Xi, g(x)> <= -L |g(x)|^2`.
    fn coercivity_constant(&self) -> f64;

    /// `c` in `E|G(x, Z)|^2 <= c (1 + |x|)^2`.
    fn growth_constant(&self) -> f64;

    /// Single constant satisfying both dissipativity conditions.
    fn dissipativity_constant(&self) -> f64 {
        self.monotonicity_constant().min(self.coercivity_constant())
    }

    /// `M` with `g(x) = M (x - Xi)`, present when `G` is affine in `x`.
    fn mean_matrix(&self) -> Option<SquareMatrix>;

    /// Draws one noise value from `rng` and writes `G(x, noise)` to `out`.
    fn sample_field(&self, x: &[f64], rng: &mut RngStream, out: &mut [f64]);
}

/// Maps `u in [0, 1)` onto the angle interval `[pi/4, 5 pi/4)`.
pub fn rotation_sample(u: f64) -> f64 {
    FRAC_PI_4 + PI * u
}

/// `A(s) x` for the planar rotation `A(s)`.
pub fn rotation_field(x: &[f64], s: f64) -> [f64; 2] {
    let (sin, cos) = s.sin_cos();
    [cos * x[0] - sin * x[1], sin * x[0] + cos * x[1]]
}

/// `(sin s, cos s)` for `s = rotation_sample(u)`.
///
/// Writing `s = 3 pi/4 + 2 psi` keeps the library call on `|psi| <= pi/4`,
/// where it is cheapest; the result matches `s.sin_cos()` to a few ulps.
pub fn rotation_sin_cos(u: f64) -> (f64, f64) {
    let (sp, cp) = (FRAC_PI_2 * (u - 0.5)).sin_cos();
    let (s2, c2) = (2.0 * sp * cp, (cp - sp) * (cp + sp));
    (FRAC_1_SQRT_2 * (c2 - s2), -FRAC_1_SQRT_2 * (c2 + s2))
}

/// Checked `G(x, s) = A(s) x`.
pub fn rotation_g_sample(x: &Vector, s: f64) -> Result<Vector> {
    x.ensure_dim(2)?;
    Vector::new(rotation_field(x.as_slice(), s).to_vec())
}

/// `sqrt(2)/pi`, the entry magnitude of `E[A(Z)]`.
pub const ROTATION_RATE: f64 = SQRT_2 / PI;

/// `g(x) = E[A(Z)] x = (sqrt(2)/pi) (-x1 - x2, x1 - x2)`.
pub fn rotation_mean(x: &Vector) -> Result<Vector> {
    x.ensure_dim(2)?;
    let [a, b] = rotation_mean_raw(x.as_slice());
    Vector::new(vec![a, b])
}

fn rotation_mean_raw(x: &[f64]) -> [f64; 2] {
    [
        ROTATION_RATE * (-x[0] - x[1]),
        ROTATION_RATE * (x[0] - x[1]),
    ]
}

/// Random rotations of the plane by angles uniform on `(pi/4, 5 pi/4)`.
#[derive(Debug, Clone)]
pub struct RotationProblem {
    equilibrium: Vector,
}

impl RotationProblem {
    pub fn new() -> Self {
        Self {
            equilibrium: Vector::zeros(2),
        }
    }

    pub fn mean_generator() -> SquareMatrix {
        SquareMatrix::from_rows(&[
            &[-ROTATION_RATE, -ROTATION_RATE],
            &[ROTATION_RATE, -ROTATION_RATE],
        ])
        .expect("finite 2x2 matrix")
    }
}

impl Default for RotationProblem {
    fn default() -> Self {
        Self::new()
    }
}

impl MeanField for RotationProblem {
    fn dimension(&self) -> usize {
        2
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&rotation_mean_raw(x));
    }
}

impl Problem for RotationProblem {
    fn id(&self) -> &str {
        "rotation"
    }

    fn equilibrium(&self) -> &Vector {
        &self.equilibrium
    }

    fn monotonicity_constant(&self) -> f64 {
        ROTATION_RATE
    }

    /// `<x, g(x)> = -(sqrt2/pi)|x|^2` and `|g(x)| = (2/pi)|x|` give
    /// `<x, g(x)> = -(pi sqrt2 / 4) |g(x)|^2`.
    fn coercivity_constant(&self) -> f64 {
        PI * SQRT_2 / 4.0
    }

    /// `E|A(Z) x|^2 = |x|^2 <= (1 + |x|)^2`.
    fn growth_constant(&self) -> f64 {
        1.0
    }

    fn mean_matrix(&self) -> Option<SquareMatrix> {
        Some(Self::mean_generator())
    }

    fn sample_field(&self, x: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        let (sin, cos) = rotation_sin_cos(rng.uniform());
        out[0] = cos * x[0] - sin * x[1];
        out[1] = sin * x[0] + cos * x[1];
    }
}

/// Stochastic gradient field of `F(theta, z) = |theta - z|^2 / 2` with
/// `z = mu + sigma w`, `w` standard normal, i.e. `G(theta, z) = z - theta`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    mu: Vector,
    sigma: f64,
}

impl QuadraticProblem {
    pub fn new(mu: Vector, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("must be finite and non-negative, got {sigma}"),
            });
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &Vector {
        &self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `E|Z - mu|^2 = d sigma^2`.
    pub fn noise_variance(&self) -> f64 {
        self.mu.dim() as f64 * self.sigma * self.sigma
    }

    /// Exact `E|G(x, Z)|^2 = |mu - x|^2 + d sigma^2`.
    pub fn field_second_moment(&self, x: &Vector) -> Result<f64> {
        Ok(self.mu.sub(x)?.norm_sq() + self.noise_variance())
    }
}

impl MeanField for QuadraticProblem {
    fn dimension(&self) -> usize {
        self.mu.dim()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, m), xi) in out.iter_mut().zip(self.mu.as_slice()).zip(x) {
            *o = m - xi;
        }
    }
}

impl Problem for QuadraticProblem {
    fn id(&self) -> &str {
        "quadratic"
    }

    fn equilibrium(&self) -> &Vector {
        &self.mu
    }

    fn monotonicity_constant(&self) -> f64 {
        1.0
    }

    fn coercivity_constant(&self) -> f64 {
        1.0
    }

    /// `|mu - x|^2 + d sigma^2 <= 2|mu|^2 + 2|x|^2 + d sigma^2
    ///  <= (2|mu|^2 + 2 + d sigma^2)(1 + |x|)^2`.
    fn growth_constant(&self) -> f64 {
        2.0 * self.mu.norm_sq() + 2.0 + self.noise_variance()
    }

    fn mean_matrix(&self) -> Option<SquareMatrix> {
        Some(SquareMatrix::scaled_identity(self.mu.dim(), -1.0))
    }

    fn sample_field(&self, x: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        for ((o, m), xi) in out.iter_mut().zip(self.mu.as_slice()).zip(x) {
            *o = m + self.sigma * rng.standard_normal() - xi;
        }
    }
}

/// Problems addressable by string id.
#[derive(Debug, Clone)]
pub enum BuiltinProblem {
    Rotation(RotationProblem),
    Quadratic(QuadraticProblem),
}

impl BuiltinProblem {
    pub const IDS: [&'static str; 2] = ["rotation", "quadratic"];

    /// Looks up a problem by id; `mu`/`sigma` parametrize `quadratic`
    /// (defaults `mu = (1, -1)`, `sigma = 1`).
    pub fn from_id(id: &str, mu: Option<Vector>, sigma: Option<f64>) -> Result<Self> {
        match id {
            "rotation" => Ok(BuiltinProblem::Rotation(RotationProblem::new())),
            "quadratic" => {
                let mu = match mu {
                    Some(mu) => mu,
                    None => Vector::new(vec![1.0, -1.0])?,
                };
                Ok(BuiltinProblem::Quadratic(QuadraticProblem::new(
                    mu,
                    sigma.unwrap_or(1.0),
                )?))
            }
            other => Err(Error::InvalidParameter {
                name: "problem",
                reason: format!("unknown problem `{other}`; expected one of {:?}", Self::IDS),
            }),
        }
    }

    fn inner(&self) -> &dyn Problem {
        match self {
            BuiltinProblem::Rotation(p) => p,
            BuiltinProblem::Quadratic(p) => p,
        }
    }
}

impl MeanField for BuiltinProblem {
    fn dimension(&self) -> usize {
        self.inner().dimension()
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            BuiltinProblem::Rotation(p) => p.eval_into(x, out),
            BuiltinProblem::Quadratic(p) => p.eval_into(x, out),
        }
    }
}

impl Problem for BuiltinProblem {
    fn id(&self) -> &str {
        self.inner().id()
    }

    fn equilibrium(&self) -> &Vector {
        self.inner().equilibrium()
    }

    fn monotonicity_constant(&self) -> f64 {
        self.inner().monotonicity_constant()
    }

    fn coercivity_constant(&self) -> f64 {
        self.inner().coercivity_constant()
    }

    fn growth_constant(&self) -> f64 {
        self.inner().growth_constant()
    }

    fn mean_matrix(&self) -> Option<SquareMatrix> {
        self.inner().mean_matrix()
    }

    fn sample_field(&self, x: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        match self {
            BuiltinProblem::Rotation(p) => p.sample_field(x, rng, out),
            BuiltinProblem::Quadratic(p) => p.sample_field(x, rng, out),
        }
    }
}

const PROBE_SCALE: f64 = 10.0;

fn probe_point(dim: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..dim)
        .map(|_| PROBE_SCALE * rng.standard_normal())
        .collect()
}

fn require_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: "at least one probe is required".into(),
        });
    }
    Ok(())
}

/// Worst `-L|x - y|^2 - <x - y, g(x) - g(y)>` over random pairs; a value
/// `>= -1e-10` certifies the monotonicity condition numerically.
pub fn check_monotonicity<P: Problem + ?Sized>(
    problem: &P,
    constant: f64,
    pair_samples: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    require_samples(pair_samples)?;
    let d = problem.dimension();
    let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
    let mut worst = f64::INFINITY;
    for _ in 0..pair_samples {
        let x = probe_point(d, rng);
        let y = probe_point(d, rng);
        problem.eval_into(&x, &mut gx);
        problem.eval_into(&y, &mut gy);
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let gdiff: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let margin = -constant * dot(&diff, &diff) - dot(&diff, &gdiff);
        worst = worst.min(margin);
    }
    Ok(worst)
}

/// Worst `-L|g(x)|^2 - <x - Xi, g(x)>` over random probes.
pub fn check_coercivity<P: Problem + ?Sized>(
    problem: &P,
    constant: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    require_samples(samples)?;
    let d = problem.dimension();
    let xi = problem.equilibrium().as_slice();
    let mut g = vec![0.0; d];
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let x = probe_point(d, rng);
        problem.eval_into(&x, &mut g);
        let offset: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a - b).collect();
        let margin = -constant * dot(&g, &g) - dot(&offset, &g);
        worst = worst.min(margin);
    }
    Ok(worst)
}

/// Largest Monte Carlo estimate of `E|G(x, Z)|^2 / (1 + |x|)^2` over
/// random probes `x`.
pub fn check_growth<P: Problem + ?Sized>(
    problem: &P,
    samples: usize,
    mc_draws_per_point: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    require_samples(samples)?;
    require_samples(mc_draws_per_point)?;
    let d = problem.dimension();
    let mut out = vec![0.0; d];
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = probe_point(d, rng);
        worst = worst.max(growth_ratio_at(
            problem,
            &x,
            mc_draws_per_point,
            rng,
            &mut out,
        ));
    }
    Ok(worst)
}

/// Monte Carlo `E|G(x, Z)|^2 / (1 + |x|)^2` at a single point.
pub fn growth_ratio<P: Problem + ?Sized>(
    problem: &P,
    x: &Vector,
    mc_draws: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    x.ensure_dim(problem.dimension())?;
    require_samples(mc_draws)?;
    let mut out = vec![0.0; x.dim()];
    Ok(growth_ratio_at(
        problem,
        x.as_slice(),
        mc_draws,
        rng,
        &mut out,
    ))
}

fn growth_ratio_at<P: Problem + ?Sized>(
    problem: &P,
    x: &[f64],
    draws: usize,
    rng: &mut RngStream,
    out: &mut [f64],
) -> f64 {
    let mut sum = crate::numeric::CompensatedSum::new();
    for _ in 0..draws {
        problem.sample_field(x, rng, out);
        sum.add(dot(out, out));
    }
    let norm = dot(x, x).sqrt();
    sum.value() / draws as f64 / (1.0 + norm).powi(2)
}
