//! Example drivers. Every case of a run is validated before the first solve,
//! so an inadmissible parameter or scheme aborts without partial output.

mod space;
mod time;

use std::time::Instant;

use crate::config::{invalid, Case, ExampleId, ExperimentConfig, Params, SchemeChoice};
use crate::error::CliError;
use crate::table::ResultTable;

pub use space::{ex1_level, precond_level, Ex1Case, PrecondCase, PrecondLevel};
pub use time::{ex2_level, ex3_solve, flap_level, Ex2Case, Ex3Case, Ex3Solution, FlapCase, MlEvalCase};

/// Command-line switches that affect the computation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub iterative: bool,
    pub scheme: Option<SchemeChoice>,
}

pub fn run(example: ExampleId, cfg: &ExperimentConfig, opts: RunOptions) -> Result<ResultTable, CliError> {
    if let Some(named) = cfg.example {
        if named != example {
            return Err(invalid(format!("config is for {named}, command line asks for {example}")));
        }
    }
    let cases = cfg.cases(opts.scheme);
    let levels = &cfg.levels;
    if example == ExampleId::MlEval {
        if !levels.is_empty() {
            return Err(invalid("ml-eval takes no J list"));
        }
    } else {
        check_levels(levels)?;
    }
    if opts.iterative && !matches!(example, ExampleId::Ex1 | ExampleId::Ex2) {
        return Err(invalid(format!("--iterative is not available for {example}")));
    }
    let mut table = ResultTable::default();
    match example {
        ExampleId::Ex1 => {
            let parsed = parse_all(&cases, |c| Ex1Case::parse(c, levels, opts.iterative))?;
            for (case, label) in parsed {
                space::run_ex1(&case, &label, levels, opts.iterative, &mut table);
            }
        }
        ExampleId::PrecondStudy => {
            let parsed = parse_all(&cases, |c| PrecondCase::parse(c, levels))?;
            for (case, label) in parsed {
                space::run_precond(&case, &label, levels, &mut table);
            }
        }
        ExampleId::Ex2 => {
            let parsed = parse_all(&cases, |c| Ex2Case::parse(c, levels))?;
            for (case, label) in parsed {
                time::run_ex2(&case, &label, levels, opts.iterative, &mut table);
            }
        }
        ExampleId::Ex2Flap => {
            let parsed = parse_all(&cases, |c| FlapCase::parse(c, levels))?;
            for (case, label) in parsed {
                time::run_flap(&case, &label, levels, &mut table);
            }
        }
        ExampleId::Ex3 => {
            let parsed = parse_all(&cases, |c| Ex3Case::parse(c, levels))?;
            for (case, label) in parsed {
                time::run_ex3(&case, &label, levels, &mut table);
            }
        }
        ExampleId::MlEval => {
            let parsed = parse_all(&cases, MlEvalCase::parse)?;
            for (case, label) in parsed {
                time::run_ml_eval(&case, &label, &mut table);
            }
        }
    }
    Ok(table)
}

fn parse_all<T>(cases: &[Case], parse: impl Fn(&Params) -> Result<T, CliError>) -> Result<Vec<(T, String)>, CliError> {
    cases
        .iter()
        .map(|c| {
            parse(&c.params)
                .map(|t| (t, c.label.clone()))
                .map_err(|e| match e {
                    CliError::Invalid(m) if !c.label.is_empty() => invalid(format!("case [{}]: {m}", c.label)),
                    other => other,
                })
        })
        .collect()
}

fn check_levels(levels: &[u32]) -> Result<(), CliError> {
    if levels.is_empty() {
        return Err(invalid("J list is empty"));
    }
    if levels[0] < 1 {
        return Err(invalid("J must be at least 1"));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("J list must be strictly increasing"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// validation helpers

pub(crate) fn allow(p: &Params, allowed: &[&str], example: &str) -> Result<(), CliError> {
    for f in p.present() {
        if !allowed.contains(&f) {
            return Err(invalid(format!("`{f}` is not a parameter of {example}")));
        }
    }
    Ok(())
}

pub(crate) fn required(v: Option<f64>, name: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| invalid(format!("`{name}` is required")))
}

pub(crate) fn open_interval(v: f64, lo: f64, hi: f64, name: &str) -> Result<f64, CliError> {
    if v > lo && v < hi {
        Ok(v)
    } else {
        Err(invalid(format!("`{name}` = {v} must lie in ({lo}, {hi})")))
    }
}

pub(crate) fn positive(v: f64, name: &str) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("`{name}` = {v} must be positive")))
    }
}

pub(crate) fn nonnegative(v: f64, name: &str) -> Result<f64, CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("`{name}` = {v} must be non-negative")))
    }
}

pub(crate) fn max_level(levels: &[u32], limit: u32, why: &str) -> Result<(), CliError> {
    match levels.iter().find(|j| **j > limit) {
        Some(j) => Err(invalid(format!("J = {j} exceeds {limit} ({why})"))),
        None => Ok(()),
    }
}

pub(crate) fn metric(base: &str, label: &str) -> String {
    if label.is_empty() {
        base.to_string()
    } else {
        format!("{base}[{label}]")
    }
}

pub(crate) fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Keeps finite values; anything else becomes a missing value.
pub(crate) fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}
