//! `n,t_n,kind,estimate,abs_estimate,half_width,samples,seed` series files.

use std::fmt::Write as _;

use saa_lab_core::estimators::{ErrorKind, ErrorSeries};
use saa_lab_core::{grid_time, Schedule};

use crate::error::{CliError, CliResult};

pub const HEADER: &str = "n,t_n,kind,estimate,abs_estimate,half_width,samples,seed";

/// 17 significant digits, enough to round-trip every `f64`.
pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn render(series: &[&ErrorSeries], schedule: &Schedule) -> String {
    let mut out = String::with_capacity(128 * series.iter().map(|s| s.len()).sum::<usize>());
    out.push_str(HEADER);
    out.push('\n');
    for s in series {
        for i in 0..s.len() {
            let n = s.checkpoints[i];
            let _ = writeln!(
                out,
                "{n},{},{},{},{},{},{},{}",
                format_real(grid_time(n, schedule)),
                s.kind.as_str(),
                format_real(s.estimates[i]),
                format_real(s.estimates[i].abs()),
                format_real(s.half_widths[i]),
                s.samples,
                s.seed,
            );
        }
    }
    out
}

fn schema(line: usize, reason: impl std::fmt::Display) -> CliError {
    CliError::Schema(format!("schema violation at line {line}: {reason}"))
}

/// Parses a series file, returning one series per kind in order of first
/// appearance.
pub fn parse(text: &str) -> CliResult<Vec<ErrorSeries>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        Some(h) => return Err(schema(1, format!("expected header `{HEADER}`, got `{h}`"))),
        None => return Err(schema(1, "empty file")),
    }
    struct Rows {
        kind: ErrorKind,
        n: Vec<usize>,
        est: Vec<f64>,
        hw: Vec<f64>,
        samples: u64,
        seed: u64,
    }
    let mut groups: Vec<Rows> = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(schema(
                lineno,
                format!("expected 8 fields, got {}", fields.len()),
            ));
        }
        let n: usize = fields[0]
            .parse()
            .map_err(|_| schema(lineno, "`n` is not an integer"))?;
        let real = |idx: usize, name: &str| -> CliResult<f64> {
            fields[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| schema(lineno, format!("`{name}` is not a finite number")))
        };
        real(1, "t_n")?;
        let kind = ErrorKind::parse(fields[2])
            .ok_or_else(|| schema(lineno, format!("unknown kind `{}`", fields[2])))?;
        let est = real(3, "estimate")?;
        let abs = real(4, "abs_estimate")?;
        if abs != est.abs() {
            return Err(schema(lineno, "abs_estimate does not match estimate"));
        }
        let hw = real(5, "half_width")?;
        if hw < 0.0 {
            return Err(schema(lineno, "negative half_width"));
        }
        let samples: u64 = fields[6]
            .parse()
            .map_err(|_| schema(lineno, "`samples` is not an integer"))?;
        let seed: u64 = fields[7]
            .parse()
            .map_err(|_| schema(lineno, "`seed` is not an integer"))?;
        let group = match groups.iter_mut().position(|g| g.kind == kind) {
            Some(p) => &mut groups[p],
            None => {
                groups.push(Rows {
                    kind,
                    n: vec![],
                    est: vec![],
                    hw: vec![],
                    samples,
                    seed,
                });
                groups.last_mut().unwrap()
            }
        };
        if group.n.last().is_some_and(|&last| last >= n) {
            return Err(schema(lineno, "checkpoints must increase within a kind"));
        }
        if group.samples != samples || group.seed != seed {
            return Err(schema(
                lineno,
                "samples and seed must be constant within a kind",
            ));
        }
        group.n.push(n);
        group.est.push(est);
        group.hw.push(hw);
    }
    if groups.is_empty() {
        return Err(schema(2, "no data rows"));
    }
    groups
        .into_iter()
        .map(|g| {
            ErrorSeries::new(g.kind, g.n, g.est, g.hw, g.samples, g.seed)
                .map_err(|e| CliError::Schema(e.to_string()))
        })
        .collect()
}
