//! A laboratory for stochastic approximation algorithms
//! `Theta_n = Theta_{n-1} + gamma_n * (mini-batch average of G(Theta_{n-1}, Z))`
//! with polynomially decaying learning rates `gamma_n = eta n^(eps - 1)`.
//!
//! The crate simulates such recursions, integrates the mean-field flow they
//! shadow, evaluates the analytic bounds behind the weak rate
//! `|E[psi(Theta_n)] - psi(Xi)| <= C n^(2 eps - 1)`, and estimates weak and
//! strong errors by Monte Carlo.

pub mod bounds;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod flow;
pub mod numeric;
pub mod problems;
pub mod rng;
pub mod schedule;
pub mod test_function;
pub mod vector;

pub use error::{Error, Result};
pub use problems::{BuiltinProblem, Problem, QuadraticProblem, RotationProblem};
pub use rng::RngStream;
pub use schedule::{floor_grid, grid_time, BatchSizes, Schedule, TimeGrid};
pub use test_function::TestFunction;
pub use vector::{SquareMatrix, Vector};
