//! Flat `key = value` experiment files.
//!
//! ```text
//! # weak error of sin_sum on the rotation problem
//! problem = rotation
//! epsilon = 0.25
//! eta = 0.3
//! initial = 1, 0
//! psi = sin_sum
//! samples = 100000
//! seed = 7
//! output = rotation.csv
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use saa_lab_core::estimators::powers_of_two;
use saa_lab_core::flow::MeanField;
use saa_lab_core::{BatchSizes, BuiltinProblem, Schedule, TestFunction, Vector};

use crate::error::{CliError, CliResult};

pub const KEYS: [&str; 13] = [
    "problem",
    "epsilon",
    "eta",
    "batch_size",
    "initial",
    "psi",
    "checkpoints",
    "samples",
    "seed",
    "output",
    "mu",
    "sigma",
    "kind",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKinds {
    Weak,
    Strong,
    Both,
}

impl SeriesKinds {
    pub fn weak(self) -> bool {
        matches!(self, SeriesKinds::Weak | SeriesKinds::Both)
    }

    pub fn strong(self) -> bool {
        matches!(self, SeriesKinds::Strong | SeriesKinds::Both)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem_id: String,
    pub epsilon: f64,
    pub eta: f64,
    pub batch_size: BatchSizes,
    pub initial: Vector,
    pub psi_id: String,
    pub checkpoints: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub output_path: PathBuf,
    pub mu: Option<Vector>,
    pub sigma: Option<f64>,
    pub kinds: SeriesKinds,
}

/// Everything needed to run, resolved from a validated config.
pub struct Experiment {
    pub problem: BuiltinProblem,
    pub schedule: Schedule,
    pub psi: Option<TestFunction>,
}

pub fn load(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text)
}

fn raw_entries(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::config(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            ));
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::config(
                key,
                format!("unknown key; expected one of {}", KEYS.join(", ")),
            ));
        }
        if entries
            .insert(key.to_string(), value.trim().to_string())
            .is_some()
        {
            return Err(CliError::config(key, "given more than once"));
        }
    }
    Ok(entries)
}

fn required<'a>(entries: &'a BTreeMap<String, String>, key: &str) -> CliResult<&'a str> {
    entries
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| CliError::config(key, "missing required key"))
}

fn real(key: &str, value: &str) -> CliResult<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| CliError::config(key, format!("`{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::config(key, "must be finite"));
    }
    Ok(v)
}

fn integer<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::config(key, format!("`{value}` is not a non-negative integer")))
}

fn list<T>(key: &str, value: &str, item: impl Fn(&str, &str) -> CliResult<T>) -> CliResult<Vec<T>> {
    let items: Vec<&str> = value.split(',').map(str::trim).collect();
    if items.iter().any(|s| s.is_empty()) {
        return Err(CliError::config(key, "empty list entry"));
    }
    items.into_iter().map(|s| item(key, s)).collect()
}

fn vector(key: &str, value: &str) -> CliResult<Vector> {
    Vector::new(list(key, value, real)?).map_err(|e| CliError::config(key, e.to_string()))
}

pub fn parse(text: &str) -> CliResult<ExperimentConfig> {
    let entries = raw_entries(text)?;

    let problem_id = required(&entries, "problem")?.to_string();
    if !BuiltinProblem::IDS.contains(&problem_id.as_str()) {
        return Err(CliError::config(
            "problem",
            format!(
                "unknown problem `{problem_id}`; expected one of {}",
                BuiltinProblem::IDS.join(", ")
            ),
        ));
    }
    let epsilon = real("epsilon", required(&entries, "epsilon")?)?;
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(CliError::config(
            "epsilon",
            format!("must lie in (0, 1/2), got {epsilon}"),
        ));
    }
    let eta = real("eta", required(&entries, "eta")?)?;
    if eta <= 0.0 {
        return Err(CliError::config(
            "eta",
            format!("must be positive, got {eta}"),
        ));
    }
    let batch_size = match entries.get("batch_size") {
        None => BatchSizes::default(),
        Some(v) => {
            let sizes: Vec<usize> = list("batch_size", v, integer)?;
            if sizes.contains(&0) {
                return Err(CliError::config(
                    "batch_size",
                    "batch sizes must be at least 1",
                ));
            }
            if sizes.len() == 1 {
                BatchSizes::Constant(sizes[0])
            } else {
                BatchSizes::Table(sizes)
            }
        }
    };
    let initial = vector("initial", required(&entries, "initial")?)?;
    let psi_id = entries
        .get("psi")
        .cloned()
        .unwrap_or_else(|| "sin_sum".to_string());
    let checkpoints = match entries.get("checkpoints") {
        None => powers_of_two(0, 12),
        Some(v) => list("checkpoints", v, integer)?,
    };
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::config(
            "checkpoints",
            "must be strictly increasing",
        ));
    }
    let samples: usize = integer("samples", required(&entries, "samples")?)?;
    if samples < 2 {
        return Err(CliError::config(
            "samples",
            format!("at least 2 are required, got {samples}"),
        ));
    }
    let seed: u64 = integer("seed", required(&entries, "seed")?)?;
    let output_path = PathBuf::from(required(&entries, "output")?);
    let mu = entries.get("mu").map(|v| vector("mu", v)).transpose()?;
    let sigma = entries.get("sigma").map(|v| real("sigma", v)).transpose()?;
    if sigma.is_some_and(|s| s < 0.0) {
        return Err(CliError::config("sigma", "must be non-negative"));
    }
    if problem_id != "quadratic" {
        for key in ["mu", "sigma"] {
            if entries.contains_key(key) {
                return Err(CliError::config(
                    key,
                    "only applies to the quadratic problem",
                ));
            }
        }
    }
    let kinds = match entries.get("kind").map(String::as_str) {
        None | Some("weak") => SeriesKinds::Weak,
        Some("strong") => SeriesKinds::Strong,
        Some("both") => SeriesKinds::Both,
        Some(other) => {
            return Err(CliError::config(
                "kind",
                format!("expected weak, strong or both, got `{other}`"),
            ))
        }
    };

    let config = ExperimentConfig {
        problem_id,
        epsilon,
        eta,
        batch_size,
        initial,
        psi_id,
        checkpoints,
        samples,
        seed,
        output_path,
        mu,
        sigma,
        kinds,
    };
    config.resolve()?;
    Ok(config)
}

/// `linear:a1,a2,...` or `sin_sum`.
pub fn parse_psi(text: &str, dim: usize) -> CliResult<TestFunction> {
    let psi = if text == "sin_sum" {
        TestFunction::sin_sum(dim)
    } else if let Some(coeffs) = text.strip_prefix("linear:") {
        TestFunction::linear(vector("psi", coeffs)?)
    } else {
        return Err(CliError::config(
            "psi",
            format!("expected `sin_sum` or `linear:a1,...,ad`, got `{text}`"),
        ));
    };
    if psi.dim() != dim {
        return Err(CliError::config(
            "psi",
            format!(
                "has dimension {} but the problem has dimension {dim}",
                psi.dim()
            ),
        ));
    }
    Ok(psi)
}

impl ExperimentConfig {
    pub fn resolve(&self) -> CliResult<Experiment> {
        let problem = BuiltinProblem::from_id(&self.problem_id, self.mu.clone(), self.sigma)
            .map_err(|e| {
                CliError::config(
                    if self.mu.is_some() { "mu" } else { "problem" },
                    e.to_string(),
                )
            })?;
        let d = problem.dimension();
        if self.initial.dim() != d {
            return Err(CliError::config(
                "initial",
                format!(
                    "has dimension {} but the problem has dimension {d}",
                    self.initial.dim()
                ),
            ));
        }
        if self.checkpoints.is_empty() {
            return Err(CliError::config("checkpoints", "must not be empty"));
        }
        let schedule = Schedule::new(self.epsilon, self.eta, self.batch_size.clone())
            .map_err(|e| CliError::config("batch_size", e.to_string()))?;
        let psi = if self.kinds.weak() {
            Some(parse_psi(&self.psi_id, d)?)
        } else {
            None
        };
        Ok(Experiment {
            problem,
            schedule,
            psi,
        })
    }
}
