//! Run configuration. One JSON document describes one run of one example;
//! the run may sweep `J` and a list of parameter cases.
//!
//! ```json
//! {
//!   "example": "ex1",
//!   "J": [6, 7, 8],
//!   "params": { "beta": 3, "q": 0 },
//!   "cases": [
//!     { "alpha": 1.4, "lambda": 3, "method": "galerkin" },
//!     { "alpha": 1.4, "lambda": 3, "method": "petrov-galerkin" }
//!   ]
//! }
//! ```
//!
//! Each case is `params` overlaid with the case entry. Without `cases` the run
//! has the single case `params`.

use std::fmt;
use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleId {
    Ex1,
    Ex2,
    Ex2Flap,
    Ex3,
    MlEval,
    PrecondStudy,
}

impl ExampleId {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ex1 => "ex1",
            Self::Ex2 => "ex2",
            Self::Ex2Flap => "ex2-flap",
            Self::Ex3 => "ex3",
            Self::MlEval => "ml-eval",
            Self::PrecondStudy => "precond-study",
        }
    }
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchemeChoice {
    Cf,
    Pc,
    Dti,
    L1,
}

impl SchemeChoice {
    pub fn name(self) -> &'static str {
        match self {
            Self::Cf => "cf",
            Self::Pc => "pc",
            Self::Dti => "dti",
            Self::L1 => "l1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Galerkin,
    PetrovGalerkin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisChoice {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Quadratic,
    Chebyshev,
}

/// Number of L1 time steps per `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSteps {
    Fixed(usize),
    Policy(StepPolicy),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepPolicy {
    /// M = ⌈2^{3J/(2−γ)}⌉, balancing the L1 error against the spatial one.
    Coupled,
    /// M = 2^{2J}.
    Squared,
}

/// Every tunable parameter. All optional: each example takes the subset it
/// understands and rejects the rest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub lambda: Option<f64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub beta: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub basis: Option<BasisChoice>,
    pub method: Option<Method>,
    pub scheme: Option<SchemeChoice>,
    #[serde(rename = "N1")]
    pub n1: Option<usize>,
    pub tolerance: Option<f64>,
    pub time_steps: Option<TimeSteps>,
    pub interpolation: Option<Interpolation>,
    pub chebyshev_degree: Option<usize>,
    pub time_budget_s: Option<f64>,
    /// Complex arguments `[re, im]` for `ml-eval`.
    pub points: Option<Vec<[f64; 2]>>,
    /// Write the dense spectra of the precondition study to a side file.
    pub spectrum: Option<bool>,
}

macro_rules! overlay_fields {
    ($base:expr, $top:expr, $($f:ident),*) => {
        Params { $($f: $top.$f.clone().or_else(|| $base.$f.clone())),* }
    };
}

impl Params {
    /// `self` with every field set in `top` replaced.
    pub fn overlay(&self, top: &Params) -> Params {
        overlay_fields!(
            self, top, alpha, gamma, lambda, p, q, beta, k, t, basis, method, scheme, n1, tolerance, time_steps,
            interpolation, chebyshev_degree, time_budget_s, points, spectrum
        )
    }

    /// Names of the fields that are set, in declaration order.
    pub fn present(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut mark = |set: bool, name: &'static str| {
            if set {
                out.push(name);
            }
        };
        mark(self.alpha.is_some(), "alpha");
        mark(self.gamma.is_some(), "gamma");
        mark(self.lambda.is_some(), "lambda");
        mark(self.p.is_some(), "p");
        mark(self.q.is_some(), "q");
        mark(self.beta.is_some(), "beta");
        mark(self.k.is_some(), "K");
        mark(self.t.is_some(), "T");
        mark(self.basis.is_some(), "basis");
        mark(self.method.is_some(), "method");
        mark(self.scheme.is_some(), "scheme");
        mark(self.n1.is_some(), "N1");
        mark(self.tolerance.is_some(), "tolerance");
        mark(self.time_steps.is_some(), "time_steps");
        mark(self.interpolation.is_some(), "interpolation");
        mark(self.chebyshev_degree.is_some(), "chebyshev_degree");
        mark(self.time_budget_s.is_some(), "time_budget_s");
        mark(self.points.is_some(), "points");
        mark(self.spectrum.is_some(), "spectrum");
        out
    }

    /// Short case label built from the scalar and enum fields that are set.
    /// Contains no commas or quotes, so it is safe inside a CSV cell.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        let num = |parts: &mut Vec<String>, name: &str, v: Option<f64>| {
            if let Some(v) = v {
                parts.push(format!("{name}={v}"));
            }
        };
        if let Some(m) = self.method {
            parts.push(match m {
                Method::Galerkin => "G".to_string(),
                Method::PetrovGalerkin => "P-G".to_string(),
            });
        }
        if let Some(s) = self.scheme {
            parts.push(s.name().to_string());
        }
        num(&mut parts, "alpha", self.alpha);
        num(&mut parts, "gamma", self.gamma);
        num(&mut parts, "lambda", self.lambda);
        num(&mut parts, "p", self.p);
        num(&mut parts, "q", self.q);
        num(&mut parts, "beta", self.beta);
        num(&mut parts, "K", self.k);
        num(&mut parts, "T", self.t);
        if let Some(n) = self.n1 {
            parts.push(format!("N1={n}"));
        }
        if let Some(b) = self.basis {
            parts.push(format!("{b:?}").to_lowercase());
        }
        if let Some(i) = self.interpolation {
            parts.push(format!("{i:?}").to_lowercase());
        }
        if let Some(d) = self.chebyshev_degree {
            parts.push(format!("deg={d}"));
        }
        match self.time_steps {
            Some(TimeSteps::Fixed(m)) => parts.push(format!("M={m}")),
            Some(TimeSteps::Policy(p)) => parts.push(format!("M={p:?}").to_lowercase()),
            None => {}
        }
        parts.join(" ")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; must agree with the example named on the command line.
    #[serde(default)]
    pub example: Option<ExampleId>,
    #[serde(rename = "J", default)]
    pub levels: Vec<u32>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub cases: Vec<Params>,
}

/// One resolved case: merged parameters plus the label that tags its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub params: Params,
    pub label: String,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::Read { path: path.display().to_string(), source })?;
        let raw: serde_json::Value = serde_json::from_str(&text)?;
        let cfg = serde_json::from_value(raw.clone())?;
        Ok((cfg, raw))
    }

    /// Merged cases; `scheme` (from the command line) overrides every case.
    pub fn cases(&self, scheme: Option<SchemeChoice>) -> Vec<Case> {
        let forced = Params { scheme, ..Params::default() };
        if self.cases.is_empty() {
            let params = self.params.overlay(&forced);
            return vec![Case { params, label: String::new() }];
        }
        self.cases
            .iter()
            .map(|c| Case { params: self.params.overlay(c).overlay(&forced), label: c.label() })
            .collect()
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overlays() {
        let cfg = ExperimentConfig::from_json(
            r#"{"J":[6,7],"params":{"beta":3,"q":0},"cases":[{"alpha":1.4,"lambda":3,"method":"petrov-galerkin"}]}"#,
        )
        .unwrap();
        let cases = cfg.cases(None);
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].params.beta, Some(3.0));
        assert_eq!(cases[0].params.alpha, Some(1.4));
        assert_eq!(cases[0].label, "P-G alpha=1.4 lambda=3");
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(ExperimentConfig::from_json(r#"{"J":[6],"params":{"alfa":1.4}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"J":[6],"extra":1}"#).is_err());
    }

    #[test]
    fn time_step_forms() {
        let a: Params = serde_json::from_str(r#"{"time_steps":16384}"#).unwrap();
        assert_eq!(a.time_steps, Some(TimeSteps::Fixed(16384)));
        let b: Params = serde_json::from_str(r#"{"time_steps":"squared"}"#).unwrap();
        assert_eq!(b.time_steps, Some(TimeSteps::Policy(StepPolicy::Squared)));
    }

    #[test]
    fn command_line_scheme_wins() {
        let cfg = ExperimentConfig::from_json(r#"{"J":[6],"params":{"scheme":"cf"}}"#).unwrap();
        assert_eq!(cfg.cases(Some(SchemeChoice::Pc))[0].params.scheme, Some(SchemeChoice::Pc));
    }
}
